"""Pruefer phase integration, Sturm oscillation counts and atom location.

For -x'' + q x = kappa^2 x with x(0) = 0 we write (x, x'/kappa) = r (sin theta,
cos theta). The phase obeys theta' = kappa - (q/kappa) sin^2 theta and the
radius (log r)' = (q / (2 kappa)) sin 2 theta. Eigenvalues of the Dirichlet
problem on [0, L] are exactly the kappa^2 with theta_L(kappa) in pi*Z.

All integrations are carried out on the deviation u = theta - kappa t, which
is identically zero for a vanishing potential, so the free case is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import phase_deviation_end, phase_radius_path
from .potential import (
    DrivingPath,
    ParameterError,
    PotentialModel,
    RangeError,
)

SCAN_REFINEMENT = 8


def default_step(E0: float) -> float:
    """Mesh h = min(0.01, 0.02 / sqrt(E0))."""
    return min(0.01, 0.02 / math.sqrt(E0))


@dataclass
class PruferPath:
    kappa: float
    mesh: np.ndarray
    theta: np.ndarray
    log_r: np.ndarray

    @property
    def deviation(self) -> np.ndarray:
        return self.theta - self.kappa * self.mesh


@dataclass
class SpectrumWindow:
    E0: float
    L: float
    atoms: np.ndarray
    kappas: np.ndarray
    boundary_phase_m: int
    boundary_phase_phi: float
    window: float
    flags: list = field(default_factory=list)
    edge_phases: tuple = (0.0, 0.0)

    @property
    def flagged(self) -> bool:
        return bool(self.flags)

    def to_rows(self, seed=None, alpha=None) -> list[dict]:
        return [
            {"seed": seed, "L": self.L, "alpha": alpha, "E0": self.E0,
             "atom_x": float(x), "kappa": float(k)}
            for x, k in zip(self.atoms, self.kappas)
        ]

    def metadata(self) -> dict:
        return {
            "boundary_phase_m": int(self.boundary_phase_m),
            "boundary_phase_phi": float(self.boundary_phase_phi),
            "flags": list(self.flags),
        }


ATOM_COLUMNS = ["seed", "L", "alpha", "E0", "atom_x", "kappa"]


def write_window_csv(path, windows: Sequence[tuple], alpha=None) -> None:
    """Write (seed, SpectrumWindow) pairs as one row per atom plus a JSON sidecar."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ATOM_COLUMNS)
        w.writeheader()
        for seed, win in windows:
            for row in win.to_rows(seed, alpha):
                w.writerow(row)
    sidecar = {str(seed): win.metadata() for seed, win in windows}
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)


def _check(path: DrivingPath, kappa, T: float) -> None:
    if np.any(np.asarray(kappa) <= 0):
        raise ParameterError("kappa must be positive")
    if T > path.duration * (1 + 1e-12) or T < 0:
        raise RangeError(f"T={T} outside the sampled path [0, {path.duration}]")


def _potential(path: DrivingPath, model: PotentialModel) -> np.ndarray:
    return model.samples(path)


def integrate_prufer(path: DrivingPath, model: PotentialModel, kappa: float,
                     T: float) -> PruferPath:
    _check(path, kappa, T)
    q = _potential(path, model)
    mesh, dev, logr = phase_radius_path(q, path.step, float(T), float(kappa))
    return PruferPath(float(kappa), mesh, kappa * mesh + dev, logr)


def phases_at(path: DrivingPath, model: PotentialModel, kappas, T: float,
              q: Optional[np.ndarray] = None) -> np.ndarray:
    """theta_T(kappa) for an array of kappa sharing one path."""
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    _check(path, kappas, T)
    if q is None:
        q = _potential(path, model)
    dev = phase_deviation_end(q, path.step, float(T), kappas)
    return kappas * T + dev


def split_phase(theta: float) -> tuple[int, float]:
    """theta = m*pi + phi with phi in [0, pi)."""
    m = math.floor(theta / math.pi)
    phi = theta - m * math.pi
    if phi >= math.pi:
        m, phi = m + 1, phi - math.pi
    return int(m), max(phi, 0.0)


def boundary_phase(path: DrivingPath, model: PotentialModel, kappa: float, L: float,
                   decompose: bool = False):
    theta = float(phases_at(path, model, [kappa], L)[0])
    if decompose:
        return split_phase(theta)
    return theta


def _count_from_phase(theta):
    # eigenvalues strictly below kappa^2 <-> multiples n*pi (n >= 1) strictly below theta
    theta = np.asarray(theta, dtype=float)
    return np.maximum(np.ceil(theta / math.pi) - 1, 0).astype(int)


def count_eigenvalues_below(path: DrivingPath, model: PotentialModel, kappa: float,
                            L: float) -> int:
    return int(_count_from_phase(boundary_phase(path, model, kappa, L)))


def choose_length(E0: float, m: int, beta_phase: float) -> float:
    """L with sqrt(E0) L = m pi + beta_phase exactly."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    return (m * math.pi + beta_phase) / math.sqrt(E0)


def _crossings(theta_a, theta_b):
    """Levels n with theta_a < n pi <= theta_b."""
    lo = math.floor(theta_a / math.pi) + 1
    hi = math.floor(theta_b / math.pi)
    return range(int(lo), int(hi) + 1)


def _solve_levels(f, a, b, fa, fb, tol, max_iter=200):
    """Bracketed root finding for monotone f, vectorized over independent brackets.

    ``f(points, idx)`` evaluates the residuals of brackets ``idx`` at ``points``.

    Illinois regula falsi with a forced bisection whenever an iteration fails
    to halve a bracket. Requires fa < 0 <= fb.
    """
    a, b, fa, fb = (np.array(v, dtype=float) for v in (a, b, fa, fb))
    root = np.where(fb == 0.0, b, np.nan)
    active = fb != 0.0
    side = np.zeros(a.shape, dtype=int)
    width = b - a
    for it in range(max_iter):
        idx = np.flatnonzero(active & ~(b - a <= tol))
        done = active & (b - a <= tol)
        root[done] = 0.5 * (a[done] + b[done])
        active &= ~done
        if idx.size == 0:
            break
        denom = fb[idx] - fa[idx]
        c = b[idx] - fb[idx] * (b[idx] - a[idx]) / denom
        bis = (it % 3 == 2) & ((b[idx] - a[idx]) > 0.5 * width[idx])
        bis |= ~((c > a[idx]) & (c < b[idx]))
        c = np.where(bis, 0.5 * (a[idx] + b[idx]), c)
        width[idx] = np.where(it % 3 == 2, b[idx] - a[idx], width[idx])
        fc = f(c, idx)
        hit = fc == 0.0
        root[idx[hit]] = c[hit]
        active[idx[hit]] = False
        left = fc < 0.0
        right = fc > 0.0
        il, ir = idx[left], idx[right]
        a[il], fa[il] = c[left], fc[left]
        fb[il] = np.where(side[il] == -1, 0.5 * fb[il], fb[il])
        side[il] = -1
        b[ir], fb[ir] = c[right], fc[right]
        fa[ir] = np.where(side[ir] == 1, 0.5 * fa[ir], fa[ir])
        side[ir] = 1
    left_over = np.isnan(root)
    root[left_over] = 0.5 * (a[left_over] + b[left_over])
    return root


def locate_atoms(path: DrivingPath, model: PotentialModel, E0: float, L: float,
                 W: float, rel_tol: float = 1e-13) -> SpectrumWindow:
    """All x in (-W, W] with theta_L(kappa0 + x/L) in pi*Z, as atoms of the point process.

    The kappa interval is scanned on a grid of spacing at most pi/(8L); each
    crossing bracket is then refined until its kappa-width is below
    ``rel_tol * kappa0``.
    """
    if not (E0 > 0 and W > 0):
        raise ParameterError("E0 and W must be positive")
    kappa0 = math.sqrt(E0)
    k_lo, k_hi = kappa0 - W / L, kappa0 + W / L
    if k_lo <= 0:
        raise ParameterError("window reaches kappa <= 0; shrink W or enlarge L")
    q = _potential(path, model)

    def theta(ks):
        return phases_at(path, model, ks, L, q=q)

    n_cells = int(math.ceil(2 * W / (math.pi / SCAN_REFINEMENT)))
    grid = np.linspace(k_lo, k_hi, n_cells + 1)
    th = theta(np.append(grid, kappa0))
    theta0 = float(th[-1])
    th = th[:-1]
    flags = []
    bad = np.flatnonzero(np.diff(th) < 0)
    if bad.size:
        flags.append("non_monotone_scan")
        fine_k, fine_t = [grid[:1]], [th[:1]]
        for i in range(n_cells):
            if i in set(bad.tolist()):
                sub = np.linspace(grid[i], grid[i + 1], SCAN_REFINEMENT + 1)[1:]
                fine_k.append(sub)
                fine_t.append(theta(sub))
            else:
                fine_k.append(grid[i + 1:i + 2])
                fine_t.append(th[i + 1:i + 2])
        grid, th = np.concatenate(fine_k), np.concatenate(fine_t)
        if np.any(np.diff(th) < 0):
            flags.append("non_monotone_refined")

    a, b, fa, fb, levels = [], [], [], [], []
    for i in range(len(grid) - 1):
        for n in _crossings(th[i], th[i + 1]):
            a.append(grid[i])
            b.append(grid[i + 1])
            fa.append(th[i] - n * math.pi)
            fb.append(th[i + 1] - n * math.pi)
            levels.append(n)
    levels = np.array(levels, dtype=float)

    def residual(ks, idx):
        return theta(ks) - levels[idx] * math.pi

    kappas = _solve_levels(residual, a, b, fa, fb, rel_tol * kappa0) if levels.size \
        else np.empty(0)
    kappas = np.sort(kappas)
    m, phi = split_phase(theta0)
    return SpectrumWindow(
        E0=E0, L=L, atoms=L * (kappas - kappa0), kappas=kappas,
        boundary_phase_m=m, boundary_phase_phi=phi, window=W, flags=flags,
        edge_phases=(float(th[0]), float(th[-1])),
    )



def right_endpoint_phase(path: DrivingPath, model: PotentialModel, kappa, n: float,
                         t: float) -> np.ndarray:
    """Phase theta*_t(kappa) of the solution with x_n = 0, x'_n / kappa = 1.

    Solved from the right end by integrating the time-reversed potential
    s -> q(n - s) forward over [0, n - t]; theta*_t = -theta_rev_{n-t}.
    """
    if not 0 <= t <= n:
        raise RangeError("t must lie in [0, n]")
    steps = int(round(n / path.step))
    if abs(steps * path.step - n) > 1e-9 * n or steps > path.n_steps:
        raise RangeError("n must be a mesh point of the driving path")
    kappas = np.atleast_1d(np.asarray(kappa, dtype=float))
    if np.any(kappas <= 0):
        raise ParameterError("kappa must be positive")
    # cell j of the original mesh is cell steps-1-j of the reversed one
    q_rev = model.samples(path, steps)[::-1].copy()
    dev = phase_deviation_end(q_rev, path.step, float(n - t), kappas)
    return -(kappas * (n - t) + dev)


def two_sided_count(path: DrivingPath, model: PotentialModel, kappa1: float,
                    kappa2: float, n: float, t: float) -> int:
    """Eigenvalue count in (kappa1^2, kappa2^2] from phases matched at an interior point t.

    Counts points of 2*pi*Z in (2 theta_t - 2 theta*_t at kappa1,
    2 theta_t - 2 theta*_t at kappa2].
    """
    ks = np.array([kappa1, kappa2], dtype=float)
    left = phases_at(path, model, ks, t) if t > 0 else np.zeros(2)
    right = right_endpoint_phase(path, model, ks, n, t)
    w = 2.0 * left - 2.0 * right
    two_pi = 2.0 * math.pi
    return int(math.floor(w[1] / two_pi) - math.floor(w[0] / two_pi))


@dataclass
class SecondOrderSample:
    L: float
    alpha: float
    values: np.ndarray
    N: int

    def __getitem__(self, n: int) -> float:
        return float(self.values[n + self.N])


def second_order_spacings(window: SpectrumWindow, alpha: float, N: int) -> SecondOrderSample:
    """X(n) = ((kappa_{m+n+1} - kappa_{m+n}) L - pi) L^{alpha - 1/2}, n = -N..N.

    m indexes the atom nearest 0.
    """
    k = window.kappas
    if k.size == 0:
        raise RangeError("window holds no atoms; enlarge W")
    m = int(np.argmin(np.abs(window.atoms)))
    if m - N < 0 or m + N + 1 >= k.size:
        raise RangeError(
            f"need atoms m-{N}..m+{N + 1} around the central atom; enlarge W "
            f"(currently {window.window:g}, try {(N + 3) * math.pi:g})")
    gaps = np.diff(k[m - N:m + N + 2]) * window.L
    return SecondOrderSample(window.L, alpha, (gaps - math.pi) * window.L ** (alpha - 0.5), N)

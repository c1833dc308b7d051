"""Euler-Maruyama simulation of the three limiting phase SDEs.

* critical coupling:  dPsi(c) = (2c + d0) dt
                         + E0^{-1/2} (sqrt(C(E0)/2) Re(e^{i Psi} dZ) + sqrt(C(0)) dB)
* carousel:           dPsi(lam) = 2 lam dt + D / sqrt(1 - t) Re((e^{i Psi} - 1) dZ)
* Sine_beta:          dalpha(lam) = lam (beta/4) e^{-beta t / 4} dt + Re((e^{i alpha} - 1) dZ)

Z = Z_re + i Z_im has independent standard real components, B is an
independent standard Brownian motion. Every parameter value in one call is
driven by the same noise, so the returned family is a function-valued
process. Noise arrays are either 1-D (one path) or 2-D with shape
(n_steps, n_paths); in the second case all paths advance in lockstep.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .potential import ModelConstants, ParameterError, RangeError

TWO_PI = 2.0 * math.pi


class RefineGridError(ValueError):
    """Phase samples on the parameter grid are not monotone."""


@dataclass
class NoiseBundle:
    """Independent Gaussian increments; ``dt[j]`` is the variance of row j."""

    dt: np.ndarray
    z_re: np.ndarray
    z_im: np.ndarray
    b: Optional[np.ndarray] = None

    @property
    def step(self) -> float:
        return float(self.dt[0])

    @property
    def n_steps(self) -> int:
        return len(self.dt)

    @property
    def mesh(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.dt)))

    @property
    def n_paths(self) -> Optional[int]:
        return None if self.z_re.ndim == 1 else self.z_re.shape[1]


def _draw(rng, dt, n_paths, with_b):
    shape = (len(dt),) if n_paths is None else (len(dt), n_paths)
    sd = np.sqrt(dt) if n_paths is None else np.sqrt(dt)[:, None]
    z_re = rng.standard_normal(shape) * sd
    z_im = rng.standard_normal(shape) * sd
    b = rng.standard_normal(shape) * sd if with_b else None
    return NoiseBundle(dt, z_re, z_im, b)


def sample_noise(seed, T: float, step: float, n_paths: Optional[int] = None,
                 with_b: bool = True) -> NoiseBundle:
    """Uniform-step increments covering [0, T]."""
    if not (T > 0 and step > 0):
        raise ParameterError("T and step must be positive")
    n = int(math.ceil(T / step - 1e-9))
    dt = np.full(n, step)
    dt[-1] = T - step * (n - 1)
    return _draw(np.random.default_rng(seed), dt, n_paths, with_b)


def carousel_mesh(h0: float, delta_cutoff: float) -> np.ndarray:
    """Steps h_t = h0 (1 - t) from t = 0 until t = 1 - delta_cutoff."""
    if not 0 < delta_cutoff < 0.1:
        raise ParameterError("delta_cutoff must lie in (0, 0.1)")
    if not 0 < h0 < 1:
        raise ParameterError("h0 must lie in (0, 1)")
    # 1 - t_j = (1 - h0)^j; last step is shortened to land on the cutoff
    n = int(math.ceil(math.log(delta_cutoff) / math.log1p(-h0) - 1e-9))
    remaining = (1.0 - h0) ** np.arange(n + 1)
    remaining[-1] = delta_cutoff
    return 1.0 - remaining


def sample_carousel_noise(seed, h0: float = 1e-3, delta_cutoff: float = 1e-4,
                          n_paths: Optional[int] = None) -> NoiseBundle:
    dt = np.diff(carousel_mesh(h0, delta_cutoff))
    return _draw(np.random.default_rng(seed), dt, n_paths, with_b=False)


@dataclass
class SdePath:
    kind: str
    parameter: float
    mesh: np.ndarray
    psi: np.ndarray

    @property
    def t_end(self) -> float:
        return float(self.mesh[-1])

    @property
    def psi_end(self):
        return self.psi[-1]


def _complex_noise_term(psi, dzr, dzi):
    return np.cos(psi) * dzr - np.sin(psi) * dzi


def _run(kind, params, noise, drift, diffusion, minus_one, record, common=None):
    """Shared Euler loop. ``drift(j, t, p)`` and ``diffusion(j, t)`` give coefficients."""
    params = np.asarray(params, dtype=float)
    if params.size == 0:
        raise ParameterError("parameter array must be non-empty")
    mesh = noise.mesh
    shape = params.shape + noise.z_re.shape[1:]
    pcol = params.reshape(params.shape + (1,) * (noise.z_re.ndim - 1))
    psi = np.zeros(shape)
    traj = [psi.copy()] if record else None
    for j in range(noise.n_steps):
        t = mesh[j]
        dt = noise.dt[j]
        dzr, dzi = noise.z_re[j], noise.z_im[j]
        c, s = np.cos(psi), np.sin(psi)
        if minus_one:
            c = c - 1.0
        inc = drift(j, t, dt, pcol) + diffusion(t) * (c * dzr - s * dzi)
        if common is not None:
            inc = inc + common(j)
        psi = psi + inc
        if record:
            traj.append(psi.copy())
    if record:
        stacked = np.stack(traj)
        return [SdePath(kind, float(p), mesh, stacked[:, i]) for i, p in enumerate(params)]
    ends = np.stack([np.zeros(shape), psi])
    return [SdePath(kind, float(p), mesh[[0, -1]], ends[:, i]) for i, p in enumerate(params)]


def simulate_schtau(constants: ModelConstants, cs, noise: NoiseBundle, T: float = 1.0,
                    record: bool = False) -> list[SdePath]:
    if noise.b is None:
        raise ParameterError("critical-coupling SDE needs the B increments")
    if noise.mesh[-1] < T * (1 - 1e-12):
        raise RangeError("noise does not cover [0, T]")
    d0 = constants.schtau_drift
    sig_z = math.sqrt(constants.C_E0 / 2.0) / constants.kappa0
    sig_b = math.sqrt(constants.C_0) / constants.kappa0
    n = int(np.searchsorted(noise.mesh, T * (1 - 1e-12)))
    sub = NoiseBundle(noise.dt[:n], noise.z_re[:n], noise.z_im[:n], noise.b[:n])
    return _run("schtau", cs, sub,
                drift=lambda j, t, dt, p: (2.0 * p + d0) * dt,
                diffusion=lambda t: sig_z,
                minus_one=False, record=record,
                common=lambda j: sig_b * sub.b[j])


def simulate_carousel(D: float, lambdas, noise: NoiseBundle, delta_cutoff: float = 1e-4,
                      record: bool = False) -> list[SdePath]:
    if not 0 < delta_cutoff < 0.1:
        raise ParameterError("delta_cutoff must lie in (0, 0.1)")
    mesh = noise.mesh
    stop = 1.0 - delta_cutoff
    if mesh[-1] > stop + 1e-12 or mesh[-1] < stop - 1e-9:
        raise ParameterError("noise mesh must end at t = 1 - delta_cutoff")
    return _run("carousel", lambdas, noise,
                drift=lambda j, t, dt, p: 2.0 * p * dt,
                diffusion=lambda t: D / math.sqrt(1.0 - t),
                minus_one=True, record=record)


def sine_beta_min_horizon(beta: float, level: float = 1e-6) -> float:
    return (4.0 / beta) * math.log(beta / (4.0 * level)) if beta / 4.0 > level else 0.0


def simulate_sine_beta(beta: float, lambdas, noise: NoiseBundle, horizon: Optional[float] = None,
                       record: bool = False) -> list[SdePath]:
    if not beta > 0:
        raise ParameterError("beta must be positive")
    need = sine_beta_min_horizon(beta)
    horizon = noise.mesh[-1] if horizon is None else horizon
    if horizon < need:
        raise ParameterError(f"horizon {horizon:g} too small; need at least {need:g}")
    if noise.mesh[-1] < horizon * (1 - 1e-12):
        raise RangeError("noise does not cover the horizon")
    n = int(np.searchsorted(noise.mesh, horizon * (1 - 1e-12)))
    sub = NoiseBundle(noise.dt[:n], noise.z_re[:n], noise.z_im[:n])
    c = beta / 4.0
    return _run("sinebeta", lambdas, sub,
                drift=lambda j, t, dt, p: p * c * math.exp(-c * t) * dt,
                diffusion=lambda t: 1.0,
                minus_one=True, record=record)


def carousel_time_change(t: float, beta: float) -> float:
    """s = -(4/beta) log(1 - t), the Sine_beta time of carousel time t."""
    if not 0 <= t < 1:
        raise RangeError("t must lie in [0, 1)")
    return -(4.0 / beta) * math.log1p(-t)


def inverse_time_change(s: float, beta: float) -> float:
    return -math.expm1(-beta * s / 4.0)


def counting_from_phase(psi_end):
    """Nearest integer of psi/(2 pi) and the residual |psi - 2 pi N|."""
    psi_end = np.asarray(psi_end, dtype=float)
    n = np.rint(psi_end / TWO_PI)
    residual = np.abs(psi_end - TWO_PI * n)
    if n.ndim == 0:
        return int(n), float(residual)
    return n.astype(int), residual


def level_crossings(grid, values, levels, check_monotone: bool = True) -> np.ndarray:
    """Parameter values where a monotone sampled curve reaches each level.

    Uses shape-preserving cubic interpolation of the inverse map; levels
    outside the sampled range are dropped.
    """
    from scipy.interpolate import PchipInterpolator

    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    d = np.diff(values)
    if check_monotone and np.any(d < 0):
        raise RefineGridError("phase is not monotone on the grid; refine the grid or the step")
    levels = np.asarray(levels, dtype=float)
    levels = levels[(levels >= values[0]) & (levels <= values[-1])]
    if levels.size == 0:
        return levels
    # strictly increasing abscissae for the inverse map
    keep = np.concatenate(([True], d > 0))
    inv = PchipInterpolator(values[keep], grid[keep])
    return np.sort(inv(levels))


def schtau_atoms(paths: Sequence[SdePath], beta_phase: float, path_index=None) -> np.ndarray:
    """Atoms {c : Psi_1(c) = 2 n pi - 2 beta_phase} from paths on an increasing c-grid."""
    cs = np.array([p.parameter for p in paths])
    ends = np.array([p.psi_end if path_index is None else p.psi_end[path_index] for p in paths])
    n_lo = math.ceil((ends.min() + 2 * beta_phase) / TWO_PI)
    n_hi = math.floor((ends.max() + 2 * beta_phase) / TWO_PI)
    levels = TWO_PI * np.arange(n_lo, n_hi + 1) - 2 * beta_phase
    return level_crossings(cs, ends, levels)


def carousel_atoms(paths: Sequence[SdePath], path_index=None) -> np.ndarray:
    """Jump locations of lam -> Psi_{1-}(lam)/(2 pi), read at odd multiples of pi."""
    lams = np.array([p.parameter for p in paths])
    ends = np.array([p.psi_end if path_index is None else p.psi_end[path_index] for p in paths])
    n_lo = math.ceil((ends.min() - math.pi) / TWO_PI)
    n_hi = math.floor((ends.max() - math.pi) / TWO_PI)
    levels = TWO_PI * np.arange(n_lo, n_hi + 1) + math.pi
    return level_crossings(lams, ends, levels)


SDE_COLUMNS = ["seed", "kind", "parameter", "t_end", "psi_end", "n_count", "residual"]


def sde_rows(paths: Sequence[SdePath], seeds) -> list[dict]:
    """Flatten endpoint data; ``seeds`` labels the path columns."""
    rows = []
    for p in paths:
        ends = np.atleast_1d(p.psi_end)
        n, res = counting_from_phase(ends)
        for s, e, k, r in zip(np.atleast_1d(seeds), ends, np.atleast_1d(n), np.atleast_1d(res)):
            rows.append({"seed": s, "kind": p.kind, "parameter": p.parameter, "t_end": p.t_end,
                         "psi_end": float(e), "n_count": int(k), "residual": float(r)})
    return rows


def write_sde_csv(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SDE_COLUMNS)
        w.writeheader()
        w.writerows(rows)

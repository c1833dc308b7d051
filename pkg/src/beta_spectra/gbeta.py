"""Gaussian beta-ensemble via tridiagonal matrices and a Sturm bisection eigensolver.

Target joint density of the eigenvalues:
    exp(-(beta/4) sum lam_k^2) prod_{j<k} |lam_j - lam_k|^beta.
The tridiagonal model has diagonal N(0, 2/beta) and off-diagonals
chi_{(n-k) beta} / sqrt(beta), k = 1..n-1; with this scaling the bulk fills
[-2 sqrt(n), 2 sqrt(n)].
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._kernels import bisect_eigenvalues, sturm_count
from .potential import ParameterError


@dataclass
class TridiagonalMatrix:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        self.offdiag = np.asarray(self.offdiag, dtype=float)
        if self.diag.size < 2 or self.offdiag.size != self.diag.size - 1:
            raise ParameterError("need n >= 2 diagonal and n - 1 off-diagonal entries")
        if np.any(self.offdiag <= 0):
            raise ParameterError("off-diagonal entries must be strictly positive")

    @property
    def n(self) -> int:
        return self.diag.size

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def leading_minor(self, m: int) -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.diag[:m], self.offdiag[:m - 1])

    def count_below(self, shift: float) -> int:
        """Number of eigenvalues strictly below ``shift`` (Sturm sign changes)."""
        return int(sturm_count(self.diag, self.offdiag ** 2, float(shift)))

    def gershgorin(self) -> tuple[float, float]:
        r = np.zeros(self.n)
        r[:-1] += np.abs(self.offdiag)
        r[1:] += np.abs(self.offdiag)
        return float(np.min(self.diag - r)), float(np.max(self.diag + r))


def sample_gbeta_tridiagonal(n: int, beta: float, seed) -> TridiagonalMatrix:
    if int(n) != n or n < 2:
        raise ParameterError("n must be an integer >= 2")
    if not beta > 0:
        raise ParameterError("beta must be positive")
    rng = np.random.default_rng(seed)
    diag = rng.normal(0.0, math.sqrt(2.0 / beta), n)
    dof = beta * np.arange(n - 1, 0, -1)
    off = np.sqrt(rng.chisquare(dof)) / math.sqrt(beta)
    return TridiagonalMatrix(diag, off)


def default_tol(n: int) -> float:
    return 1e-11 * math.sqrt(n)


def tridiagonal_eigenvalues(T: TridiagonalMatrix, tol: Optional[float] = None,
                            lower: Optional[float] = None,
                            upper: Optional[float] = None) -> np.ndarray:
    """Sorted eigenvalues by Sturm-count bisection inside Gershgorin bounds.

    ``lower``/``upper`` restrict the result to eigenvalues in [lower, upper).
    """
    tol = default_tol(T.n) if tol is None else tol
    if not tol > 0:
        raise ParameterError("tol must be positive")
    lo, hi = T.gershgorin()
    lo -= tol
    hi += tol
    off2 = T.offdiag ** 2
    k0 = 0 if lower is None else int(sturm_count(T.diag, off2, float(lower)))
    k1 = T.n if upper is None else int(sturm_count(T.diag, off2, float(upper)))
    a = lo if lower is None else max(lo, float(lower))
    b = hi if upper is None else min(hi, float(upper))
    if k1 <= k0:
        return np.empty(0)
    return bisect_eigenvalues(T.diag, off2, a, b, k0, k1, tol)


@dataclass
class BulkSample:
    n: int
    mu: float
    atoms: np.ndarray
    halved: np.ndarray


def bulk_rescale(eigs, n: int, mu: float = 0.0) -> BulkSample:
    """Lambda_k = sqrt(4n - mu^2)(lam_k - mu), and the halved copy Lambda_k / 2."""
    edge = 2.0 * math.sqrt(n)
    if abs(mu) >= edge:
        raise ParameterError("|mu| must be below 2 sqrt(n)")
    if n ** (1.0 / 6.0) * (edge - abs(mu)) < 5.0:
        warnings.warn("mu is close to the spectral edge; bulk scaling may be inaccurate")
    atoms = np.sort(math.sqrt(4.0 * n - mu * mu) * (np.asarray(eigs, dtype=float) - mu))
    return BulkSample(n, mu, atoms, atoms / 2.0)


def bulk_window_sample(n: int, beta: float, seed, W: float, mu: float = 0.0,
                       tol: Optional[float] = None) -> BulkSample:
    """Halved bulk atoms within [-W, W], computing only the eigenvalues needed."""
    scale = math.sqrt(4.0 * n - mu * mu)
    T = sample_gbeta_tridiagonal(n, beta, seed)
    eigs = tridiagonal_eigenvalues(T, tol, lower=mu - 2 * W / scale, upper=mu + 2 * W / scale)
    return bulk_rescale(eigs, n, mu)


BULK_COLUMNS = ["seed", "n", "beta", "mu", "atom", "halved_atom"]


def write_bulk_csv(path, samples: Sequence[tuple], beta: float) -> None:
    """Rows for (seed, BulkSample) pairs, one per atom."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BULK_COLUMNS)
        w.writeheader()
        for seed, s in samples:
            for a, h in zip(s.atoms, s.halved):
                w.writerow({"seed": seed, "n": s.n, "beta": beta, "mu": s.mu,
                            "atom": float(a), "halved_atom": float(h)})

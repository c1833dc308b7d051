"""Point-process statistics shared by the operator, SDE and matrix routes."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np


class StatisticsError(ValueError):
    pass


@dataclass
class AtomBatch:
    source: str
    samples: list

    def __post_init__(self):
        self.samples = [np.sort(np.asarray(s, dtype=float)) for s in self.samples]


@dataclass
class GapResult:
    gaps: np.ndarray
    used: int
    skipped: int

    @property
    def skip_rate(self) -> float:
        total = self.used + self.skipped
        return self.skipped / total if total else 0.0


def central_gaps(sample: np.ndarray, count: int) -> Optional[np.ndarray]:
    """``count`` consecutive gaps centred on the atom nearest 0, or None if too few atoms."""
    if sample.size < count + 1:
        return None
    m = int(np.argmin(np.abs(sample)))
    # gaps touching atom m: count//2 on the left (one more on the right for odd count)
    left = count // 2
    start = m - left
    stop = start + count
    if start < 0 or stop >= sample.size:
        return None
    return np.diff(sample[start:stop + 1])


def gaps_near_zero(batch: AtomBatch, count: int = 2) -> GapResult:
    if count < 1:
        raise StatisticsError("count must be >= 1")
    pooled, skipped = [], 0
    for s in batch.samples:
        g = central_gaps(s, count)
        if g is None:
            skipped += 1
        else:
            pooled.append(g)
    gaps = np.concatenate(pooled) if pooled else np.empty(0)
    return GapResult(gaps, len(pooled), skipped)


def counting(batch: AtomBatch, lam: float, windows: Optional[Sequence[float]] = None) -> np.ndarray:
    """Per-sample number of atoms in the closed interval [0, lam] (or [lam, 0])."""
    lo, hi = (0.0, lam) if lam >= 0 else (lam, 0.0)
    if windows is not None:
        for w in windows:
            if abs(lam) > w:
                raise StatisticsError(f"lambda={lam} exceeds the sampled window; need W >= {abs(lam)}")
    return np.array([int(np.count_nonzero((s >= lo) & (s <= hi))) for s in batch.samples],
                    dtype=int)


@dataclass
class CovarianceReport:
    lag: int
    estimate: float
    std_error: float
    trials: int
    degenerate: bool = False


MIN_TRIALS = 30


def _cov(x, y):
    return float(np.sum((x - x.mean()) * (y - y.mean())) / (x.size - 1))


def jackknife_cov(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Unbiased covariance and its leave-one-out jackknife standard error."""
    n = x.size
    est = _cov(x, y)
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    # leave-one-out covariances in closed form
    mx = (sx - x) / (n - 1)
    my = (sy - y) / (n - 1)
    loo = ((sxy - x * y) - (n - 1) * mx * my) / (n - 2)
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return est, se


def covariance_lags(samples: Sequence, lags: Sequence[int], ref: int = 0) -> list[CovarianceReport]:
    """Cov(X(ref), X(ref + lag)) across trials with jackknife errors.

    ``samples`` are SecondOrderSample objects (or arrays indexed from -N).
    """
    if len(samples) < MIN_TRIALS:
        raise StatisticsError(f"need at least {MIN_TRIALS} trials, got {len(samples)}")
    vals = np.array([s.values for s in samples])
    N = samples[0].N
    x = vals[:, ref + N]
    out = []
    for lag in lags:
        y = vals[:, ref + lag + N]
        est, se = jackknife_cov(x, y)
        degenerate = not se > 0
        out.append(CovarianceReport(int(lag), est, se, len(samples), degenerate))
    return out


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise StatisticsError("KS distance needs non-empty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_uniform(u) -> float:
    """One-sample KS distance of samples in [0, 1) against the uniform law."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    if n == 0:
        raise StatisticsError("KS distance needs a non-empty sample")
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))


def phase_uniformity(phases) -> float:
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise StatisticsError("no phases given")
    return ks_uniform(np.mod(phases, 2 * math.pi) / (2 * math.pi))


@dataclass
class Report:
    statistic: str
    value: float
    source_a: str
    source_b: Optional[str] = None
    std_error: Optional[float] = None
    trials: Optional[int] = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["source_b"] is None:
            del d["source_b"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

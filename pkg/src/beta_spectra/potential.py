"""Circle-valued Brownian driver, random potentials and resolvent constants.

The manifold is the unit circle of circumference 2*pi with normalized
measure, and the driving process has generator L = (1/2) d^2/dx^2. The
potential shape is a single cosine mode F(x) = A cos(k x), so every
resolvent (L + i s)^{-1} F is again a multiple of cos(k x) and all the
constants below are closed-form.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi


class ParameterError(ValueError):
    """Raised for out-of-domain model or numerical parameters."""


class RangeError(ValueError):
    """Raised when a time or index lies outside the sampled data."""


@dataclass(frozen=True)
class Manifold:
    circumference: float = TWO_PI
    generator_factor: float = 0.5

    def mean(self, values: np.ndarray) -> float:
        """Normalized-measure integral of samples on an equispaced periodic grid."""
        return float(np.mean(values))


CIRCLE = Manifold()


@dataclass(frozen=True)
class PotentialShape:
    mode: int = 1
    amplitude: float = math.sqrt(2.0)

    def __post_init__(self):
        if int(self.mode) != self.mode or self.mode < 1:
            raise ParameterError(f"mode must be an integer >= 1, got {self.mode!r}")

    def __call__(self, x):
        return self.amplitude * np.cos(self.mode * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DrivingPath:
    """Brownian path on the circle sampled on a uniform mesh.

    ``positions[j]`` is the wrapped position at time ``j * step``. The
    starting point is drawn uniformly, so the path is stationary.
    """

    step: float
    increments: np.ndarray
    positions: np.ndarray
    duration: float
    seed: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    def index_at(self, t: float) -> int:
        if t < 0 or t > self.duration * (1 + 1e-12):
            raise RangeError(f"t={t} outside [0, {self.duration}]")
        j = int(math.floor(t / self.step + 1e-9))
        return min(j, len(self.positions) - 1)

    def reversed(self) -> "DrivingPath":
        """The same trajectory read backwards in time (the time-reversed copy)."""
        pos = self.positions[::-1].copy()
        inc = -self.increments[::-1]
        return DrivingPath(self.step, inc, pos, self.step * self.n_steps, self.seed)

    def refined(self, seed: Optional[int] = None) -> "DrivingPath":
        """Halve the mesh by Brownian-bridge midpoint insertion.

        The coarse mesh points are kept exactly, so atoms computed on the
        refined path converge to the same continuum realization.
        """
        rng = np.random.default_rng(seed if seed is not None else
                                    np.random.SeedSequence([self.seed or 0, 0xB1D6E]))
        h = self.step
        mid = 0.5 * self.increments + rng.normal(0.0, math.sqrt(h / 4.0), self.n_steps)
        inc = np.empty(2 * self.n_steps)
        inc[0::2] = mid
        inc[1::2] = self.increments - mid
        pos = np.mod(self.positions[0] + np.concatenate(([0.0], np.cumsum(inc))), TWO_PI)
        pos[0::2] = self.positions
        return DrivingPath(h / 2.0, inc, pos, self.duration, self.seed)


def _n_steps(duration: float, step: float) -> int:
    return int(math.floor(duration / step + 1e-9))


def sample_driving_path(seed: int, duration: float, step: float) -> DrivingPath:
    """Sample a wrapped Brownian path of the generator (1/2) d^2/dx^2."""
    if not (duration > 0) or not (step > 0):
        raise ParameterError("duration and step must be positive")
    if step > duration:
        raise ParameterError("step must not exceed duration")
    rng = np.random.default_rng(seed)
    n = _n_steps(duration, step)
    x0 = rng.uniform(0.0, TWO_PI)
    increments = rng.normal(0.0, math.sqrt(step), n)
    positions = np.empty(n + 1)
    positions[0] = x0
    np.cumsum(increments, out=positions[1:])
    positions[1:] += x0
    np.mod(positions, TWO_PI, out=positions)
    return DrivingPath(step, increments, positions, duration, seed)


def decay_profile(t):
    """a(s) = 1 on [0, 1) and s^{-1/2} beyond."""
    t = np.asarray(t, dtype=float)
    return np.where(t < 1.0, 1.0, 1.0 / np.sqrt(np.maximum(t, 1.0)))


@dataclass(frozen=True)
class Coupling:
    alpha: float
    L: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.L > 0):
            raise ParameterError("Coupling needs alpha > 0 and L > 0")

    @property
    def strength(self) -> float:
        return self.L ** (-self.alpha)

    def envelope(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.strength)


@dataclass(frozen=True)
class Decaying:
    """Envelope a(t), or a(reverse_length - t) when ``reverse_length`` is set."""

    reverse_length: Optional[float] = None

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        if self.reverse_length is None:
            return decay_profile(t)
        return decay_profile(np.abs(self.reverse_length - t))


@dataclass(frozen=True)
class PotentialModel:
    family: object
    shape: PotentialShape = field(default_factory=PotentialShape)

    def samples(self, path: DrivingPath, n: Optional[int] = None) -> np.ndarray:
        """Potential values q_j on the left end of each mesh interval."""
        n = len(path.positions) if n is None else n
        t = np.arange(n) * path.step
        return self.family.envelope(t) * self.shape(path.positions[:n])


def potential_at(path: DrivingPath, model: PotentialModel, t: float) -> float:
    j = path.index_at(t)
    env = float(model.family.envelope(j * path.step))
    return env * float(model.shape(path.positions[j]))


def resolvent_coefficient(shape: PotentialShape, kappa: float) -> complex:
    """Scalar c with (L + 2 i kappa)^{-1} cos(kx) = c cos(kx); kappa = 0 gives L^{-1}."""
    if kappa < 0:
        raise ParameterError("kappa must be non-negative")
    k2 = float(shape.mode) ** 2
    if kappa == 0:
        return complex(-2.0 / k2, 0.0)
    return 1.0 / complex(-k2 / 2.0, 2.0 * kappa)


@dataclass(frozen=True)
class ModelConstants:
    E0: float
    kappa0: float
    C_E0: float
    C_0: float
    Fg_inner: complex
    beta: float
    D_E0: float

    @property
    def schtau_drift(self) -> float:
        """-Re(i <F g> / (2 E0)), the constant drift of the critical phase SDE."""
        return -(1j * self.Fg_inner / (2.0 * self.E0)).real

    def to_dict(self) -> dict:
        return {
            "e0": self.E0,
            "kappa0": self.kappa0,
            "c_e0": self.C_E0,
            "c_0": self.C_0,
            "fg_inner_re": self.Fg_inner.real,
            "fg_inner_im": self.Fg_inner.imag,
            "beta": self.beta,
            "d_e0": self.D_E0,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConstants":
        return cls(d["e0"], d["kappa0"], d["c_e0"], d["c_0"],
                   complex(d["fg_inner_re"], d["fg_inner_im"]), d["beta"], d["d_e0"])


def _gradient_energy(shape: PotentialShape, c: complex) -> float:
    # mean of |d/dx (c A cos kx)|^2 over the normalized circle
    return abs(c) ** 2 * shape.amplitude ** 2 * shape.mode ** 2 / 2.0


def noise_constant(shape: PotentialShape, E: float) -> float:
    """C(E) = mean |grad (L + 2i sqrt(E))^{-1} F|^2; E = 0 gives C(0)."""
    return _gradient_energy(shape, resolvent_coefficient(shape, math.sqrt(E)))


def compute_constants(shape: PotentialShape, E0: float) -> ModelConstants:
    if not E0 > 0:
        raise ParameterError("E0 must be positive")
    kappa0 = math.sqrt(E0)
    c = resolvent_coefficient(shape, kappa0)
    C_E0 = _gradient_energy(shape, c)
    C_0 = _gradient_energy(shape, resolvent_coefficient(shape, 0.0))
    fg = c * shape.amplitude ** 2 / 2.0
    return ModelConstants(
        E0=E0, kappa0=kappa0, C_E0=C_E0, C_0=C_0, Fg_inner=fg,
        beta=8.0 * E0 / C_E0, D_E0=math.sqrt(C_E0 / (2.0 * E0)),
    )


def beta_of_energy(shape: PotentialShape, E0: float) -> float:
    return 8.0 * E0 / noise_constant(shape, E0)


def solve_energy_for_beta(shape: PotentialShape, beta_target: float) -> float:
    """Invert the increasing map E0 -> 8 E0 / C(E0) by bisection."""
    if not beta_target > 0:
        raise ParameterError("beta_target must be positive")
    lo, hi = 0.0, 1.0
    while beta_of_energy(shape, hi) < beta_target:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if beta_of_energy(shape, mid) < beta_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)

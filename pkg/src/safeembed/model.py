"""Declarative descriptions of plants, safety constraints, barrier operators,
feedback laws and disturbance signals.

All objects here are immutable after construction and can be shared freely
across concurrent simulations.  Disturbance sample paths are materialized
per trajectory (:meth:`DisturbanceSignal.generate`), never shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .numkit import fd_step

__all__ = [
    "SafetyViolationError",
    "ControlSystem",
    "SafetyConstraint",
    "BarrierFunction",
    "make_barrier",
    "LinearFeedback",
    "DisturbanceSignal",
    "disturbance_sample",
]


class SafetyViolationError(RuntimeError):
    """The safe set boundary was touched or crossed (h <= 0).

    Raised instead of letting barrier singularities propagate NaNs; carries
    the constraint label, the offending value of h and, when known, the time.
    """

    def __init__(self, label: str, h_value: float, time: float | None = None):
        self.label = label
        self.h_value = float(h_value)
        self.time = time
        at = "" if time is None else f" at t={time:.6g}"
        super().__init__(f"safety constraint '{label}' violated{at}: h={h_value:.6g} <= 0")


@dataclass(frozen=True)
class SafetyConstraint:
    """Scalar safety function h; the safe set is {x : h(x) > 0}.

    ``grad`` is optional; central finite differences are used as a fallback
    so scenarios never require hand differentiation.
    """

    h: Callable[[np.ndarray], float]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = "h"

    def value(self, x: np.ndarray) -> float:
        return float(self.h(np.asarray(x, dtype=float)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.grad is not None:
            return np.atleast_1d(np.asarray(self.grad(x), dtype=float))
        g = np.empty_like(x)
        for j in range(x.shape[0]):
            s = fd_step(x[j])
            xp, xm = x.copy(), x.copy()
            xp[j] += s
            xm[j] -= s
            g[j] = (self.h(xp) - self.h(xm)) / (2.0 * s)
        return g

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian of h by central differences of the gradient."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = x.shape[0]
        H = np.empty((n, n))
        for j in range(n):
            s = fd_step(x[j])
            xp, xm = x.copy(), x.copy()
            xp[j] += s
            xm[j] -= s
            H[:, j] = (self.gradient(xp) - self.gradient(xm)) / (2.0 * s)
        return 0.5 * (H + H.T)


@dataclass(frozen=True)
class ControlSystem:
    """A plant ``xdot = f(x, u)`` with a known equilibrium.

    The equilibrium (default: origin) is verified at construction:
    ``|f(x_eq, u_eq)|_inf <= 1e-9``.  Optional analytic Jacobians are used
    by the linearization module when present, finite differences otherwise.
    """

    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    x_eq: np.ndarray = None  # type: ignore[assignment]
    u_eq: np.ndarray = None  # type: ignore[assignment]
    jac_x: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    jac_u: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "system"

    def __post_init__(self):
        x_eq = np.zeros(self.n) if self.x_eq is None else np.asarray(self.x_eq, dtype=float)
        u_eq = np.zeros(self.m) if self.u_eq is None else np.asarray(self.u_eq, dtype=float)
        object.__setattr__(self, "x_eq", x_eq)
        object.__setattr__(self, "u_eq", u_eq)
        if x_eq.shape != (self.n,) or u_eq.shape != (self.m,):
            raise ValueError("equilibrium dimensions do not match (n, m)")
        r = np.abs(np.asarray(self.f(x_eq, u_eq), dtype=float)).max(initial=0.0)
        if r > 1e-9:
            raise ValueError(f"f(x_eq, u_eq) = 0 violated: |f|_inf = {r:.3e}")

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(x, u), dtype=float)


@dataclass(frozen=True)
class BarrierFunction:
    """A barrier operator B, smooth on (0, inf), with B(eta) -> inf as eta -> 0+.

    ``phi`` is the slope-through-inverse map B' o B^{-1}; ``phi_prime`` its
    derivative, needed for exact linearization of barrier-state dynamics.
    ``bsecond`` (B'') supports the measured-prefactor barrier-state flavor.
    """

    kind: str
    b: Callable[[float], float]
    bprime: Callable[[float], float]
    phi: Callable[[float], float]
    phi_prime: Callable[[float], float]
    bsecond: Callable[[float], float]


def make_barrier(kind: str) -> BarrierFunction:
    """Construct a barrier operator by name.

    ``inverse``: B(eta) = 1/eta, so phi(beta) = -beta^2.
    ``log``:     B(eta) = log((1+eta)/eta); inverting gives
                 eta = 1/(e^beta - 1) and phi(beta) = -(e^beta-1)^2 e^{-beta}.
    """
    if kind == "inverse":
        return BarrierFunction(
            kind="inverse",
            b=lambda e: 1.0 / e,
            bprime=lambda e: -1.0 / (e * e),
            phi=lambda b: -(b * b),
            phi_prime=lambda b: -2.0 * b,
            bsecond=lambda e: 2.0 / (e * e * e),
        )
    if kind == "log":
        def phi(beta: float) -> float:
            em1 = math.expm1(beta)
            return -(em1 * em1) * math.exp(-beta)

        def phi_prime(beta: float) -> float:
            em1 = math.expm1(beta)
            return -em1 * (1.0 + math.exp(-beta))

        return BarrierFunction(
            kind="log",
            b=lambda e: math.log((1.0 + e) / e),
            bprime=lambda e: -1.0 / (e * (1.0 + e)),
            phi=phi,
            phi_prime=phi_prime,
            bsecond=lambda e: (1.0 + 2.0 * e) / (e * (1.0 + e)) ** 2,
        )
    raise ValueError(f"unsupported barrier kind: {kind!r} (expected 'inverse' or 'log')")


@dataclass(frozen=True)
class LinearFeedback:
    """A linear state-feedback law over the embedded state.

    ``u = sign * K @ (xbar - xref) + offset``.  The sign convention is
    explicit per scenario (gains are sometimes published in the additive
    form ``u = +K xbar`` and sometimes as ``u = -K xbar``); keeping it a
    field prevents silent sign bugs when importing published gains.
    """

    K: np.ndarray  # (m, nbar)
    sign: int = -1
    xref: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", K)
        if self.sign not in (-1, 1):
            raise ValueError("sign must be -1 (u = -K xbar) or +1 (u = +K xbar)")
        if self.xref is not None:
            xref = np.asarray(self.xref, dtype=float)
            if xref.shape != (K.shape[1],):
                raise ValueError("xref length must equal the embedded state dimension")
            object.__setattr__(self, "xref", xref)
        if self.offset is not None:
            off = np.asarray(self.offset, dtype=float)
            if off.shape != (K.shape[0],):
                raise ValueError("offset length must equal the input dimension")
            object.__setattr__(self, "offset", off)

    @property
    def nbar(self) -> int:
        return self.K.shape[1]

    @property
    def m(self) -> int:
        return self.K.shape[0]

    def __call__(self, xbar: np.ndarray) -> np.ndarray:
        dx = xbar if self.xref is None else xbar - self.xref
        u = self.sign * (self.K @ dx)
        if self.offset is not None:
            u = u + self.offset
        return u

    def effective_gain(self) -> np.ndarray:
        """The gain as used in ``u = -K xbar`` convention."""
        return -self.sign * self.K


@dataclass(frozen=True)
class DisturbanceSignal:
    """Bounded input disturbance with seed-reproducible sample paths.

    Kinds:
      ``zero``                        d = 0
      ``uniform_bounded``             iid uniform on [-bound, bound]^m
      ``uniform_decreasing_envelope`` uniform scaled by exp(-decay * t)
      ``custom``                      caller-supplied samples, verbatim

    Samples are held constant over each integration step (one draw per grid
    index), so a path is fully determined by (seed, dt, step count).
    """

    kind: str = "zero"
    bound: float = 0.0
    seed: int = 0
    decay: float = 0.0
    samples: Optional[np.ndarray] = None

    _KINDS = ("zero", "uniform_bounded", "uniform_decreasing_envelope", "custom")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.bound < 0:
            raise ValueError("bound must be nonnegative")
        if self.kind == "custom":
            if self.samples is None:
                raise ValueError("custom disturbance requires samples")
            object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))

    def with_seed(self, seed: int) -> "DisturbanceSignal":
        return replace(self, seed=seed)

    def generate(self, nsteps: int, dt: float, m: int) -> np.ndarray:
        """The full (nsteps, m) sample path for one trajectory."""
        if self.kind == "zero":
            return np.zeros((nsteps, m))
        if self.kind == "custom":
            s = self.samples
            if s.ndim == 1:
                s = s.reshape(-1, 1)
            if s.shape[1] != m:
                raise ValueError(f"custom samples have {s.shape[1]} channels, expected {m}")
            if s.shape[0] < nsteps:
                raise ValueError(f"custom samples cover {s.shape[0]} steps, need {nsteps}")
            return s[:nsteps]
        rng = np.random.default_rng(self.seed)
        d = rng.uniform(-self.bound, self.bound, size=(nsteps, m))
        if self.kind == "uniform_decreasing_envelope" and self.decay > 0.0:
            t = np.arange(nsteps) * dt
            d *= np.exp(-self.decay * t)[:, None]
        return d


def disturbance_sample(signal: DisturbanceSignal, t: float, dt: float, m: int = 1) -> np.ndarray:
    """The sample applied on the step containing time t (t >= 0).

    Convenience accessor; equivalent to indexing the generated path at
    ``k = floor(t / dt)``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = int(math.floor(t / dt + 1e-12))
    return signal.generate(k + 1, dt, m)[k]

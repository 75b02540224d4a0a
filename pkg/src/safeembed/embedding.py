"""Barrier-state construction and safety embedding.

Given a safety constraint h with a barrier operator B and gain gamma, the
barrier state z follows

    zdot = phi(z + beta0) * <grad h(x), xdot> - gamma * (z + beta0 - B(h(x)))

with beta0 = B(h(x_eq)) so the embedded equilibrium sits at the origin of
the z coordinate.  Stacking z under the plant state turns the constrained
problem into stabilization of the safety-embedded system.

Input constraints g(u) > 0 are handled by promoting u to a state driven by
v = udot and attaching barrier states to the lifted constraints; those use
the measured prefactor B'(g(u)) instead of phi(z + beta0) (both coincide on
consistent trajectories).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .model import (
    BarrierFunction,
    ControlSystem,
    SafetyConstraint,
    SafetyViolationError,
)

__all__ = [
    "BarrierStateSpec",
    "EmbeddedSystem",
    "bas_rhs",
    "aggregate_constraints",
    "embed",
    "consistent_z0",
    "consistent_xbar0",
    "input_embed",
]

# prefactor flavors for the Lie-derivative term
PREFACTOR_BAS = "bas"            # phi(z + beta0): the dynamic-compensator form
PREFACTOR_MEASURED = "measured"  # B'(h(x)): computable directly from the measurement


@dataclass(frozen=True)
class BarrierStateSpec:
    """One barrier state: (constraint, barrier, gamma) plus its shift beta0.

    ``beta0`` is ``B(h(x_eq))``; leave it ``None`` and let :func:`embed`
    fill it in from the system equilibrium.
    """

    constraint: SafetyConstraint
    barrier: BarrierFunction
    gamma: float = 1.0
    beta0: Optional[float] = None
    prefactor: str = PREFACTOR_BAS

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.prefactor not in (PREFACTOR_BAS, PREFACTOR_MEASURED):
            raise ValueError(f"unknown prefactor flavor {self.prefactor!r}")

    def bound(self, x_eq: np.ndarray) -> "BarrierStateSpec":
        """Return a copy with beta0 evaluated at the equilibrium."""
        h_eq = self.constraint.value(x_eq)
        if h_eq <= 0:
            raise SafetyViolationError(self.constraint.label, h_eq)
        return replace(self, beta0=float(self.barrier.b(h_eq)))


def bas_rhs(spec: BarrierStateSpec, x, z: float, u, xdot) -> float:
    """Right-hand side of one barrier-state equation.

    ``xdot = f(x, u)`` is supplied by the caller to avoid recomputation.
    Raises :class:`SafetyViolationError` if h(x) <= 0 (the barrier
    singularity was crossed); never returns NaN silently.
    """
    if spec.beta0 is None:
        raise ValueError("spec.beta0 is unset; bind the spec to a system first")
    x = np.asarray(x, dtype=float)
    h = spec.constraint.value(x)
    if h <= 0:
        raise SafetyViolationError(spec.constraint.label, h)
    lie = float(spec.constraint.gradient(x) @ np.asarray(xdot, dtype=float))
    if spec.prefactor == PREFACTOR_BAS:
        pre = spec.barrier.phi(z + spec.beta0)
    else:
        pre = spec.barrier.bprime(h)
    return pre * lie - spec.gamma * (z + spec.beta0 - spec.barrier.b(h))


def aggregate_constraints(constraints: Sequence[SafetyConstraint],
                          label: str = "aggregate") -> SafetyConstraint:
    """Fold p constraints into one via  1/h_agg = sum_i 1/h_i.

    For points where every h_i > 0 the aggregate is positive, and it sinks
    to zero whenever any single h_i does, so one barrier state can guard all
    p constraints.  Evaluation at a point with any h_i <= 0 is an error.
    """
    constraints = list(constraints)
    if not constraints:
        raise ValueError("need at least one constraint")
    if len(constraints) == 1:
        return constraints[0]

    def h_agg(x: np.ndarray) -> float:
        s = 0.0
        for c in constraints:
            hi = c.value(x)
            if hi <= 0:
                raise SafetyViolationError(c.label, hi)
            s += 1.0 / hi
        return 1.0 / s

    def grad_agg(x: np.ndarray) -> np.ndarray:
        # d/dx (sum 1/h_i)^-1 = h_agg^2 * sum grad(h_i) / h_i^2
        ha = h_agg(x)
        g = np.zeros(np.atleast_1d(x).shape[0])
        for c in constraints:
            hi = c.value(x)
            g += c.gradient(x) / (hi * hi)
        return (ha * ha) * g

    return SafetyConstraint(h=h_agg, grad=grad_agg, label=label)


class EmbeddedSystem:
    """A plant with barrier states appended: xbar = [x; z_1..z_nb].

    Immutable after construction; evaluation is pure.  ``f_bar`` raises
    :class:`SafetyViolationError` as soon as any constraint hits the boundary,
    so simulation drivers can flag the breach instead of chasing NaNs.
    """

    def __init__(self, base: ControlSystem, bas_specs: Sequence[BarrierStateSpec]):
        specs = []
        for spec in bas_specs:
            if spec.beta0 is None:
                spec = spec.bound(base.x_eq)
            else:
                h_eq = spec.constraint.value(base.x_eq)
                if h_eq <= 0:
                    raise SafetyViolationError(spec.constraint.label, h_eq)
            specs.append(spec)
        self.base = base
        self.bas_specs: tuple[BarrierStateSpec, ...] = tuple(specs)
        self.n = base.n
        self.m = base.m
        self.nb = len(self.bas_specs)
        self.nbar = base.n + self.nb
        self.xbar_eq = np.concatenate([base.x_eq, np.zeros(self.nb)])
        self.u_eq = base.u_eq
        # unpack per-spec callables once; f_bar runs in the inner RK4 loop
        self._fast = tuple(
            (
                s.constraint.h,
                s.constraint.grad if s.constraint.grad is not None else s.constraint.gradient,
                s.barrier.phi,
                s.barrier.bprime,
                s.barrier.b,
                s.gamma,
                s.beta0,
                s.prefactor == PREFACTOR_MEASURED,
                s.constraint.label,
            )
            for s in self.bas_specs
        )
        r = np.abs(self.f_bar(self.xbar_eq, self.u_eq)).max(initial=0.0)
        if r > 1e-9:
            raise ValueError(f"embedded equilibrium drift |f_bar|_inf = {r:.3e} > 1e-9")

    def split(self, xbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xbar = np.asarray(xbar, dtype=float)
        return xbar[: self.n], xbar[self.n:]

    def h_values(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(max(self.nb, 1))
        if not self.nb:
            out[0] = np.inf
            return out
        for i, fs in enumerate(self._fast):
            out[i] = fs[0](x)
        return out

    def f_bar(self, xbar: np.ndarray, u: np.ndarray) -> np.ndarray:
        xbar = np.asarray(xbar, dtype=float)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        n = self.n
        x, z = xbar[:n], xbar[n:]
        xdot = np.asarray(self.base.f(x, u), dtype=float)
        out = np.empty(self.nbar)
        out[:n] = xdot
        for i, (hf, gf, phi, bprime, b, gamma, beta0, measured, label) in enumerate(self._fast):
            h = hf(x)
            if h <= 0:
                raise SafetyViolationError(label, h)
            lie = gf(x) @ xdot
            pre = bprime(h) if measured else phi(z[i] + beta0)
            out[n + i] = pre * lie - gamma * (z[i] + beta0 - b(h))
        return out

    def __repr__(self):
        return (f"EmbeddedSystem({self.base.name}, n={self.n}, m={self.m}, "
                f"nb={self.nb})")


def embed(system: ControlSystem, bas_specs: Sequence[BarrierStateSpec]) -> EmbeddedSystem:
    """Build the safety-embedded system for a plant and its barrier specs.

    Barrier states are appended after the plant states in declaration order.
    With an empty spec list the embedded system is the base system itself
    (nb = 0).  The equilibrium must satisfy every constraint strictly.
    """
    return EmbeddedSystem(system, bas_specs)


def consistent_z0(spec: BarrierStateSpec, x0) -> float:
    """The barrier-state value consistent with x0: B(h(x0)) - beta0.

    Initializing z there pins z(t) to the shifted barrier along the whole
    trajectory; any other finite choice decays to it exponentially.
    """
    if spec.beta0 is None:
        raise ValueError("spec.beta0 is unset; bind the spec to a system first")
    h0 = spec.constraint.value(np.asarray(x0, dtype=float))
    if h0 <= 0:
        raise SafetyViolationError(spec.constraint.label, h0)
    return float(spec.barrier.b(h0) - spec.beta0)


def consistent_xbar0(embedded: EmbeddedSystem, x0) -> np.ndarray:
    """Stack x0 with the consistent barrier-state values."""
    x0 = np.asarray(x0, dtype=float)
    z0 = [consistent_z0(spec, x0) for spec in embedded.bas_specs]
    return np.concatenate([x0, np.asarray(z0)])


def _lift_state_constraint(c: SafetyConstraint, n: int, m: int) -> SafetyConstraint:
    def h(xt: np.ndarray) -> float:
        return c.value(xt[:n])

    def grad(xt: np.ndarray) -> np.ndarray:
        g = np.zeros(n + m)
        g[:n] = c.gradient(xt[:n])
        return g

    return SafetyConstraint(h=h, grad=grad, label=c.label)


def _lift_input_constraint(c: SafetyConstraint, n: int, m: int) -> SafetyConstraint:
    def h(xt: np.ndarray) -> float:
        return c.value(xt[n:])

    def grad(xt: np.ndarray) -> np.ndarray:
        g = np.zeros(n + m)
        g[n:] = c.gradient(xt[n:])
        return g

    return SafetyConstraint(h=h, grad=grad, label=c.label)


def input_embed(
    system: ControlSystem,
    input_constraints: Sequence[SafetyConstraint],
    gammas: Sequence[float],
    barrier: BarrierFunction = None,  # type: ignore[assignment]
    state_specs: Sequence[BarrierStateSpec] = (),
) -> EmbeddedSystem:
    """Embed input constraints g_j(u) > 0 by promoting u to a state.

    The lifted plant has state (x, u) and input v = udot; each input
    constraint contributes a barrier state with the measured prefactor
    B'(g_j(u)), shifted by beta evaluated at the trim input u_eq.  Any
    state-constraint specs are appended after the input barrier states, so
    the embedded state order is (x, u, z_input..., z_state...).
    """
    if barrier is None:
        from .model import make_barrier

        barrier = make_barrier("inverse")
    input_constraints = list(input_constraints)
    gammas = list(gammas)
    if len(gammas) != len(input_constraints):
        raise ValueError("need one gamma per input constraint")
    n, m = system.n, system.m
    for c in input_constraints:
        g_eq = c.value(system.u_eq)
        if g_eq <= 0:
            raise SafetyViolationError(c.label, g_eq)

    def f_ext(xt: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(n + m)
        out[:n] = system.f(xt[:n], xt[n:])
        out[n:] = v
        return out

    jac_x = jac_u = None
    if system.jac_x is not None and system.jac_u is not None:
        def jac_x(xt, v):
            A = np.zeros((n + m, n + m))
            A[:n, :n] = system.jac_x(xt[:n], xt[n:])
            A[:n, n:] = system.jac_u(xt[:n], xt[n:])
            return A

        def jac_u(xt, v):
            B = np.zeros((n + m, m))
            B[n:, :] = np.eye(m)
            return B

    extended = ControlSystem(
        n=n + m,
        m=m,
        f=f_ext,
        x_eq=np.concatenate([system.x_eq, system.u_eq]),
        u_eq=np.zeros(m),
        jac_x=jac_x,
        jac_u=jac_u,
        name=f"{system.name}+input",
    )
    specs = [
        BarrierStateSpec(
            constraint=_lift_input_constraint(c, n, m),
            barrier=barrier,
            gamma=g,
            prefactor=PREFACTOR_MEASURED,
        )
        for c, g in zip(input_constraints, gammas)
    ]
    for spec in state_specs:
        specs.append(replace(spec, constraint=_lift_state_constraint(spec.constraint, n, m)))
    return embed(extended, specs)

"""Closed-loop simulation, safety monitoring and empirical ISSf testing.

The simulation driver integrates the closed-loop vector field
``f_bar(xbar, K(xbar) + d(t))`` with classical RK4; the disturbance is held
constant over each step (one seeded draw per grid index) while the feedback
is evaluated continuously inside the stages.  A barrier singularity during
integration terminates the run with a ``safety_breach`` status instead of
propagating NaNs, and safety audits always use the raw constraint values
h(x), never the barrier state, so numerical drift in z can never mask a
breach.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .embedding import EmbeddedSystem
from .model import DisturbanceSignal, LinearFeedback, SafetyConstraint, SafetyViolationError

__all__ = [
    "Trajectory",
    "SafetyAudit",
    "IssfTrial",
    "IssfReport",
    "simulate_closed_loop",
    "safety_audit",
    "bas_consistency",
    "bas_deviation_profile",
    "issf_case_bound",
    "issf_empirical",
    "issf_rate_check",
]

STATUS_COMPLETED = "completed"
STATUS_DIVERGED = "diverged"
STATUS_BREACH = "safety_breach"


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop run on a uniform grid.

    All tracks share the grid length.  ``u`` holds the input evaluated at
    each grid state (the final row is recorded but never applied), ``d`` the
    disturbance sample for each grid index, ``h_margins`` the raw constraint
    values computed from the plant states.
    """

    t: np.ndarray
    xbar: np.ndarray
    u: np.ndarray
    d: np.ndarray
    h_margins: np.ndarray
    status: str
    n: int  # plant-state count; xbar[:, n:] are the barrier states
    breach_time: Optional[float] = None
    breach_constraint: Optional[str] = None

    @property
    def x(self) -> np.ndarray:
        return self.xbar[:, : self.n]

    @property
    def z(self) -> np.ndarray:
        return self.xbar[:, self.n:]

    @property
    def completed(self) -> bool:
        return self.status == STATUS_COMPLETED


def _as_input_fn(feedback, m: int) -> Callable[[np.ndarray], np.ndarray]:
    if feedback is None:
        zero = np.zeros(m)
        return lambda xbar: zero
    if isinstance(feedback, LinearFeedback):
        # flatten sign/xref/offset into one matvec + constant
        Ke = feedback.sign * feedback.K
        c = np.zeros(feedback.m)
        if feedback.xref is not None:
            c = c - Ke @ feedback.xref
        if feedback.offset is not None:
            c = c + feedback.offset
        return lambda xbar: Ke @ xbar + c
    return lambda xbar: np.atleast_1d(np.asarray(feedback(xbar), dtype=float))


def simulate_closed_loop(
    embedded: EmbeddedSystem,
    feedback,
    disturbance: Optional[DisturbanceSignal],
    xbar0,
    T: float,
    dt: float,
) -> Trajectory:
    """Simulate ``xbardot = f_bar(xbar, feedback(xbar) + d(t))`` over [0, T].

    ``feedback`` is any callable of the embedded state (or None for zero
    input).  Terminates early with status ``safety_breach`` when a
    constraint reaches h <= 0 and ``diverged`` on non-finite states;
    deterministic given the disturbance seed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xbar0 = np.asarray(xbar0, dtype=float)
    if xbar0.shape != (embedded.nbar,):
        raise ValueError(f"xbar0 must have length {embedded.nbar}")
    h0 = embedded.h_values(xbar0[: embedded.n])
    if np.any(h0 <= 0):
        i = int(np.argmin(h0))
        raise SafetyViolationError(embedded.bas_specs[i].constraint.label, h0[i], 0.0)

    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(1.0, abs(T)):
        nsteps = int(np.ceil(T / dt - 1e-12))
    m = embedded.m
    dist = disturbance if disturbance is not None else DisturbanceSignal(kind="zero")
    d_all = dist.generate(nsteps + 1, dt, m)
    u_of = _as_input_fn(feedback, m)

    t_grid = np.empty(nsteps + 1)
    xs = np.empty((nsteps + 1, embedded.nbar))
    us = np.empty((nsteps + 1, m))
    hs = np.empty((nsteps + 1, max(embedded.nb, 1)))
    f_bar = embedded.f_bar
    h_values = embedded.h_values
    n = embedded.n

    def record(k: int, t: float, xbar: np.ndarray) -> None:
        t_grid[k] = t
        xs[k] = xbar
        us[k] = u_of(xbar) + d_all[k]
        hs[k] = h_values(xbar[:n])

    status = STATUS_COMPLETED
    breach_time = None
    breach_label = None
    xbar = xbar0.copy()
    record(0, 0.0, xbar)
    last = nsteps
    for k in range(nsteps):
        t = k * dt
        h_step = min(dt, T - t)
        dk = d_all[k]
        try:
            k1 = f_bar(xbar, u_of(xbar) + dk)
            xp = xbar + (0.5 * h_step) * k1
            k2 = f_bar(xp, u_of(xp) + dk)
            xp = xbar + (0.5 * h_step) * k2
            k3 = f_bar(xp, u_of(xp) + dk)
            xp = xbar + h_step * k3
            k4 = f_bar(xp, u_of(xp) + dk)
            xnext = xbar + (h_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        except SafetyViolationError as exc:
            status, breach_time, breach_label, last = STATUS_BREACH, t, exc.label, k
            break
        if not np.all(np.isfinite(xnext)):
            status, last = STATUS_DIVERGED, k
            break
        hnext = h_values(xnext[:n])
        if embedded.nb and np.any(hnext <= 0):
            i = int(np.argmin(hnext))
            t_grid[k + 1] = t + h_step
            xs[k + 1] = xnext
            us[k + 1] = u_of(xnext) + d_all[k + 1]
            hs[k + 1] = hnext
            status = STATUS_BREACH
            breach_time = t + h_step
            breach_label = embedded.bas_specs[i].constraint.label
            last = k + 1
            break
        xbar = xnext
        record(k + 1, t + h_step, xbar)
    ncut = last + 1
    return Trajectory(
        t=t_grid[:ncut],
        xbar=xs[:ncut],
        u=us[:ncut],
        d=d_all[:ncut],
        h_margins=hs[:ncut],
        status=status,
        n=embedded.n,
        breach_time=breach_time,
        breach_constraint=breach_label,
    )


@dataclass(frozen=True)
class SafetyAudit:
    min_margin: float
    argmin_time: float
    violated: bool
    per_constraint: dict


def safety_audit(traj: Trajectory, constraints: Sequence[SafetyConstraint]) -> SafetyAudit:
    """Minimum h margins over the grid, computed from the plant states."""
    per = {}
    overall = (np.inf, 0.0)
    for c in constraints:
        vals = np.array([c.value(xk) for xk in traj.x])
        j = int(np.argmin(vals))
        per[c.label] = (float(vals[j]), float(traj.t[j]))
        if vals[j] < overall[0]:
            overall = (float(vals[j]), float(traj.t[j]))
    violated = overall[0] <= 0.0 or traj.status == STATUS_BREACH
    return SafetyAudit(
        min_margin=overall[0],
        argmin_time=overall[1],
        violated=violated,
        per_constraint=per,
    )


def bas_deviation_profile(traj: Trajectory, embedded: EmbeddedSystem) -> np.ndarray:
    """|z_i(t) - (B_i(h_i(x(t))) - beta0_i)| per grid point, shape (len(t), nb)."""
    out = np.empty((traj.t.shape[0], embedded.nb))
    for i, spec in enumerate(embedded.bas_specs):
        ref = np.array(
            [spec.barrier.b(spec.constraint.value(xk)) - spec.beta0 for xk in traj.x]
        )
        out[:, i] = np.abs(traj.z[:, i] - ref)
    return out


def bas_consistency(traj: Trajectory, embedded: EmbeddedSystem) -> float:
    """Sup-norm deviation of the barrier states from the shifted barrier.

    Zero (to integration accuracy) when the run started from consistent
    initial barrier states; otherwise the profile decays exponentially.
    """
    if embedded.nb == 0:
        return 0.0
    return float(bas_deviation_profile(traj, embedded).max())


def issf_case_bound(d_abs: float, K_z: float) -> float:
    """Disturbance-to-barrier-state gain for the scalar case study under
    the barrier feedback u = -K_z z:

        alpha_u(|d|) = 2|d|/K_z          for |d| < 0.5
                       (|d| + 0.5)/K_z   otherwise

    Continuous, strictly increasing and zero at zero (class K); requires
    K_z > 1.
    """
    if K_z <= 1.0:
        raise ValueError("K_z must exceed 1")
    if d_abs < 0:
        raise ValueError("d_abs must be nonnegative")
    if d_abs < 0.5:
        return 2.0 * d_abs / K_z
    return (d_abs + 0.5) / K_z


@dataclass(frozen=True)
class IssfTrial:
    seed: int
    status: str
    sup_z: float
    z0_norm: float
    d_inf: float
    bound: float
    bound_holds: bool
    safe: bool


@dataclass(frozen=True)
class IssfReport:
    trials: int
    records: tuple
    pass_fraction: float
    all_safe: bool

    def sup_z_max(self) -> float:
        return max(r.sup_z for r in self.records)


def issf_empirical(
    embedded: EmbeddedSystem,
    feedback,
    disturbance_family: DisturbanceSignal,
    alpha_z: Callable[[float], float],
    alpha_u: Callable[[float], float],
    trials: int,
    T: float,
    dt: float,
    xbar0,
) -> IssfReport:
    """Monte-Carlo check of the bound sup_t ||z(t)|| <= alpha_z(||z0||) + alpha_u(||d||inf).

    Trial seeds are ``disturbance_family.seed + trial``.  Violations are
    recorded as data, not raised; the report carries per-trial verdicts and
    the aggregate pass fraction.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    records = []
    for trial in range(trials):
        sig = disturbance_family.with_seed(disturbance_family.seed + trial)
        traj = simulate_closed_loop(embedded, feedback, sig, xbar0, T, dt)
        znorm = np.linalg.norm(traj.z, axis=1)
        applied = max(len(traj.t) - 1, 1)
        d_inf = float(np.abs(traj.d[:applied]).max(initial=0.0))
        bound = alpha_z(float(znorm[0])) + alpha_u(d_inf)
        sup_z = float(znorm.max())
        records.append(
            IssfTrial(
                seed=sig.seed,
                status=traj.status,
                sup_z=sup_z,
                z0_norm=float(znorm[0]),
                d_inf=d_inf,
                bound=bound,
                bound_holds=bool(sup_z <= bound),
                safe=traj.status != STATUS_BREACH,
            )
        )
    passed = sum(r.bound_holds for r in records)
    return IssfReport(
        trials=trials,
        records=tuple(records),
        pass_fraction=passed / trials,
        all_safe=all(r.safe for r in records),
    )


def issf_rate_check(
    traj: Trajectory,
    alpha_u: Callable[[float], float],
    tol: float = 1e-3,
) -> tuple[bool, float]:
    """Sampled decrease check: wherever ||z_k|| >= alpha_u(|d_k|), the forward
    difference of ||z||^2 must be <= tol.  Returns (ok, worst rate seen)."""
    znorm = np.linalg.norm(traj.z, axis=1)
    v = znorm**2
    worst = -np.inf
    ok = True
    for k in range(len(traj.t) - 1):
        dk = float(np.abs(traj.d[k]).max(initial=0.0))
        if znorm[k] >= alpha_u(dk):
            rate = (v[k + 1] - v[k]) / (traj.t[k + 1] - traj.t[k])
            worst = max(worst, rate)
            if rate > tol:
                ok = False
    return ok, (worst if np.isfinite(worst) else 0.0)

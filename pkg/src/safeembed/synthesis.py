"""Feedback synthesis for linearized embedded systems.

Single-input pole placement is Ackermann's formula.  Embedded systems
routinely carry *structurally uncontrollable* modes: the barrier-state
error decays autonomously at -gamma and no input can move it, so the
controllability matrix of (Abar, Bbar) is rank deficient by one per barrier
state.  When that happens (or the controllability matrix is merely very
ill-conditioned) a warning is emitted and a best-effort staircase placement
is used: the pair is split into controllable/uncontrollable parts along the
Krylov subspace, the uncontrollable eigenvalues are matched against the
requested poles (placement fails if they are not all requested), and the
remaining poles are placed on the reduced controllable pair.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .linearize import LinearizedSystem
from .model import LinearFeedback
from .numkit import NumericsError, eigenvalues, solve_care, spectra_match

__all__ = [
    "UncontrollableError",
    "IllConditionedPlacementWarning",
    "ackermann",
    "lqr",
    "closed_loop_matrix",
    "closed_loop_spectrum",
    "PidbGains",
    "assemble_pidb",
]

COND_LIMIT = 1e10


class UncontrollableError(NumericsError):
    """Pole placement impossible: uncontrollable modes not in the request."""


class IllConditionedPlacementWarning(UserWarning):
    pass


def _ctrb(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(A @ cols[-1])
    return np.column_stack(cols)


def _poly_of_matrix(A: np.ndarray, poles) -> np.ndarray:
    coeffs = np.poly(np.asarray(poles, dtype=complex))
    if np.abs(coeffs.imag).max() > 1e-9 * (1.0 + np.abs(coeffs).max()):
        raise ValueError("desired pole set is not conjugate-symmetric")
    pA = np.zeros_like(A)
    for c in coeffs.real:
        pA = pA @ A + c * np.eye(A.shape[0])
    return pA


def _ackermann_direct(A: np.ndarray, b: np.ndarray, poles) -> np.ndarray:
    n = A.shape[0]
    C = _ctrb(A, b)
    en = np.zeros(n)
    en[-1] = 1.0
    return np.linalg.solve(C.T, en) @ _poly_of_matrix(A, poles)


def _staircase_placement(A: np.ndarray, b: np.ndarray, poles, tol: float) -> np.ndarray:
    n = A.shape[0]
    U, s, _ = np.linalg.svd(_ctrb(A, b))
    r = int(np.sum(s > tol * max(s[0], 1e-300)))
    if r == 0:
        raise UncontrollableError("input does not reach any state")
    At = U.T @ A @ U
    bt = U.T @ b
    Au = At[r:, r:]
    lam_u = eigenvalues(Au) if r < n else np.array([])
    remaining = list(np.asarray(poles, dtype=complex))
    for lu in lam_u:
        j = min(range(len(remaining)), key=lambda i: abs(remaining[i] - lu))
        if abs(remaining[j] - lu) > 1e-6 * (1.0 + abs(lu)):
            raise UncontrollableError(
                f"uncontrollable mode {lu:.6g} is not among the requested poles"
            )
        remaining.pop(j)
    Kc = _ackermann_direct(At[:r, :r], bt[:r], remaining)
    return np.concatenate([Kc, np.zeros(n - r)]) @ U.T


def ackermann(A, B, poles, verify_tol: float = 1e-4) -> np.ndarray:
    """Single-input pole placement; returns K for the convention u = -K x.

    The desired pole list must be conjugate-closed and have length n.  The
    computed gain's closed-loop spectrum is verified against the request
    (loose internal gate; tests pin the tight tolerances).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if B.shape[1] != 1:
        raise ValueError("Ackermann placement requires a single-input system")
    b = B[:, 0]
    n = A.shape[0]
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    if poles.shape[0] != n:
        raise ValueError(f"need {n} desired poles, got {poles.shape[0]}")

    C = _ctrb(A, b)
    cond = np.linalg.cond(C)
    if cond < COND_LIMIT:
        K = _ackermann_direct(A, b, poles)
    else:
        warnings.warn(
            f"controllability matrix condition {cond:.2e} >= {COND_LIMIT:.0e}; "
            "falling back to staircase placement",
            IllConditionedPlacementWarning,
            stacklevel=2,
        )
        K = _staircase_placement(A, b, poles, tol=1e-9)
    got = eigenvalues(A - np.outer(b, K))
    scale = 1.0 + np.abs(poles).max()
    if not spectra_match(got, poles, verify_tol * scale):
        raise NumericsError(
            f"pole placement verification failed: got {np.sort_complex(got)}, wanted {np.sort_complex(poles)}"
        )
    return K.reshape(1, n)


def lqr(A, B, Q, R) -> np.ndarray:
    """LQR gain K = R^{-1} B^T P from the stabilizing Riccati solution.

    Convention u = -K x; the closed loop A - B K is Hurwitz by the Riccati
    solver's contract.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = solve_care(A, B, Q, R)
    return np.linalg.solve(R, B.T @ P)


def closed_loop_matrix(linearized: LinearizedSystem, feedback: LinearFeedback) -> np.ndarray:
    Abar, Bbar = linearized.Abar, linearized.Bbar
    if feedback.K.shape != (Bbar.shape[1], Abar.shape[0]):
        raise ValueError(
            f"gain shape {feedback.K.shape} does not match system ({Bbar.shape[1]}, {Abar.shape[0]})"
        )
    return Abar + feedback.sign * (Bbar @ feedback.K)


def closed_loop_spectrum(linearized: LinearizedSystem, feedback: LinearFeedback) -> np.ndarray:
    """Eigenvalues of Abar + sign * Bbar K, per the feedback's convention."""
    return eigenvalues(closed_loop_matrix(linearized, feedback))


@dataclass(frozen=True)
class PidbGains:
    """PID gains plus a barrier-state feedback term, with an index map
    telling which embedded coordinate each gain multiplies."""

    kp: float
    ki: float
    kd: float
    kb: float
    idx: dict = field(
        default_factory=lambda: {"kp": 1, "ki": 3, "kd": 4, "kb": 5}
    )


def assemble_pidb(gains: PidbGains, nbar: int = 6, xref=None) -> LinearFeedback:
    """Sparse gain row over the embedded state, convention u = -K xbar.

    The index map must be collision-free and within the embedded dimension.
    """
    idx = gains.idx
    if set(idx) != {"kp", "ki", "kd", "kb"}:
        raise ValueError("index map must name exactly kp, ki, kd, kb")
    positions = list(idx.values())
    if len(set(positions)) != len(positions):
        raise ValueError(f"index collision in PIDB map: {idx}")
    if any(not (0 <= p < nbar) for p in positions):
        raise ValueError(f"PIDB index out of range for nbar={nbar}: {idx}")
    K = np.zeros((1, nbar))
    K[0, idx["kp"]] = gains.kp
    K[0, idx["ki"]] = gains.ki
    K[0, idx["kd"]] = gains.kd
    K[0, idx["kb"]] = gains.kb
    return LinearFeedback(K=K, sign=-1, xref=xref)

"""Dense linear-algebra and integration kernels used by every other module.

Matrices are plain ``numpy.ndarray`` objects (2-D, float64, row-major);
spectra are 1-D complex arrays.  Everything here is a pure function of its
inputs and safe to call from concurrent code.

Scope is deliberately small: dense problems up to ~32 states, fixed-step
integration only.  Eigenvalue and linear solves delegate to LAPACK through
numpy/scipy; the Riccati solver is a Newton-Kleinman iteration built on the
Lyapunov solve so that every factorization stays at desk scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

MAX_DIM = 32

__all__ = [
    "NumericsError",
    "SingularMatrixError",
    "NotHurwitzError",
    "StabilizationError",
    "IntegrationResult",
    "eigenvalues",
    "spectra_match",
    "sorted_real_spectrum",
    "is_hurwitz",
    "solve_linear",
    "solve_lyapunov",
    "lyapunov_kron_oracle",
    "solve_care",
    "stabilizing_gain",
    "jacobian_fd",
    "fd_step",
    "rk4_step",
    "rk4_integrate",
]


class NumericsError(RuntimeError):
    """A numerical routine failed to meet its accuracy contract."""


class SingularMatrixError(NumericsError):
    """Linear solve rejected: matrix is singular or too ill-conditioned."""


class NotHurwitzError(NumericsError):
    """An operation required a Hurwitz matrix and did not get one."""


class StabilizationError(NumericsError):
    """No stabilizing iterate could be constructed for a Riccati solve."""


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a square matrix, as a complex 1-D array.

    The result is validated against the trace: ``sum(eig)`` must equal
    ``trace(M)`` within ``1e-8 * (1 + |trace|)``, otherwise a
    :class:`NumericsError` is raised (a silent bad spectrum is never
    returned).
    """
    M = _as_square(M)
    n = M.shape[0]
    if n > MAX_DIM:
        raise ValueError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
    try:
        eig = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericsError(f"eigenvalue iteration failed to converge: {exc}") from exc
    tr = np.trace(M)
    if abs(eig.sum() - tr) > 1e-8 * (1.0 + abs(tr)):
        raise NumericsError(
            f"eigenvalue sum {eig.sum():.6e} inconsistent with trace {tr:.6e}"
        )
    return eig


def sorted_real_spectrum(eig: np.ndarray, imag_tol: float = 1e-9) -> np.ndarray:
    """Sort a conjugate-closed spectrum that is expected to be real."""
    eig = np.asarray(eig, dtype=complex)
    if np.abs(eig.imag).max(initial=0.0) > imag_tol * (1.0 + np.abs(eig).max(initial=0.0)):
        raise ValueError("spectrum has significant imaginary parts")
    return np.sort(eig.real)


def spectra_match(got, want, tol: float) -> bool:
    """Greedy conjugate-aware pairing of two spectra within an absolute tol."""
    got = list(np.asarray(got, dtype=complex))
    for w in np.asarray(want, dtype=complex):
        j = min(range(len(got)), key=lambda i: abs(got[i] - w))
        if abs(got[j] - w) > tol:
            return False
        got.pop(j)
    return not got


def is_hurwitz(M, margin: float = 0.0) -> bool:
    return bool(np.all(eigenvalues(M).real < -margin))


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` for square nonsingular ``A``.

    Rejects systems whose condition estimate exceeds 1e12 and checks the
    residual ``|A x - b|_inf <= 1e-10 * (1 + |b|_inf)`` after the solve.
    """
    A = _as_square(A, "A")
    b = np.asarray(b, dtype=float)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrixError(f"matrix is singular or ill-conditioned (cond~{cond:.2e})")
    x = np.linalg.solve(A, b)
    resid = np.abs(A @ x - b).max()
    if resid > 1e-10 * (1.0 + np.abs(b).max(initial=0.0)):
        raise NumericsError(f"linear solve residual {resid:.2e} out of tolerance")
    return x


def solve_lyapunov(A, Q) -> np.ndarray:
    """Solve the continuous Lyapunov equation ``A^T P + P A + Q = 0``.

    ``A`` must be Hurwitz and ``Q`` symmetric.  Backed by the
    Bartels-Stewart solver; the result is symmetrized and residual-checked
    against ``1e-8 * (1 + |Q|_inf)``.
    """
    A = _as_square(A, "A")
    Q = _as_square(Q, "Q")
    if not np.allclose(Q, Q.T, atol=1e-10 * (1.0 + np.abs(Q).max())):
        raise ValueError("Q must be symmetric")
    if not is_hurwitz(A):
        raise NotHurwitzError("A is not Hurwitz; Lyapunov equation has no stable solution")
    P = scipy.linalg.solve_continuous_lyapunov(A.T, -np.asarray(Q, dtype=float))
    P = 0.5 * (P + P.T)
    resid = np.abs(A.T @ P + P @ A + Q).max()
    if resid > 1e-8 * (1.0 + np.abs(Q).max(initial=0.0)):
        raise NumericsError(f"Lyapunov residual {resid:.2e} out of tolerance")
    return P


def lyapunov_kron_oracle(A, Q) -> np.ndarray:
    """Direct Kronecker-vectorized solve of ``A^T P + P A + Q = 0``.

    Independent of :func:`solve_lyapunov`; kept as a cross-check oracle for
    small ``n`` (the n^2 x n^2 system is dense).
    """
    A = _as_square(A, "A")
    n = A.shape[0]
    I = np.eye(n)
    lhs = np.kron(I, A.T) + np.kron(A.T, I)
    vec = np.linalg.solve(lhs, -np.asarray(Q, dtype=float).reshape(n * n))
    P = vec.reshape(n, n)
    return 0.5 * (P + P.T)


def stabilizing_gain(A, B) -> np.ndarray:
    """A gain K with ``A - B K`` Hurwitz, for any stabilizable pair.

    Eigenvalue-shift heuristic (Bass): pick a shift beta past the rightmost
    eigenvalue, solve ``(A + beta I) Z + Z (A + beta I)^T = 2 B B^T`` and
    take ``K = B^T Z^{-1}``.  For pairs with uncontrollable (but stable)
    modes Z is singular, so B B^T is regularized and the result is verified;
    the regularization is escalated a few times before giving up.
    """
    A = _as_square(A, "A")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    if is_hurwitz(A):
        return np.zeros((B.shape[1], n))
    beta = 1.0 + np.linalg.norm(A, 2)  # exceeds the spectral radius
    scale = max(1.0, np.abs(B).max()) ** 2
    for reg in (0.0, 1e-10, 1e-8, 1e-6, 1e-4):
        try:
            Ash = -(A + beta * np.eye(n))  # Hurwitz by construction
            Z = scipy.linalg.solve_continuous_lyapunov(
                Ash, -(2.0 * B @ B.T + reg * scale * np.eye(n))
            )
            K = np.linalg.solve(Z.T, B).T
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(K)) and is_hurwitz(A - B @ K):
            return K
    raise StabilizationError("could not construct a stabilizing initial gain")


def solve_care(A, B, Q, R, tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
    """Solve ``A^T P + P A - P B R^{-1} B^T P + Q = 0`` (stabilizing solution).

    Newton-Kleinman iteration: starting from a stabilizing gain, each step
    solves one Lyapunov equation for the closed loop and refreshes the gain.
    Convergence is quadratic and monotone from a stabilizing start.

    Returns a symmetric PSD ``P`` with residual ``<= 1e-7 * (1 + |Q|_inf)``
    and ``A - B R^{-1} B^T P`` Hurwitz, or raises.
    """
    A = _as_square(A, "A")
    Q = _as_square(Q, "Q")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    R = np.asarray(R, dtype=float)
    if R.ndim == 0:
        R = R.reshape(1, 1)
    if not np.allclose(R, R.T):
        raise ValueError("R must be symmetric")
    if np.any(np.linalg.eigvalsh(R) <= 0):
        raise ValueError("R must be positive definite")
    if not np.allclose(Q, Q.T, atol=1e-10 * (1.0 + np.abs(Q).max())):
        raise ValueError("Q must be symmetric")

    K = stabilizing_gain(A, B)
    P = None
    for _ in range(max_iter):
        Acl = A - B @ K
        Pn = solve_lyapunov(Acl, Q + K.T @ R @ K)
        Kn = np.linalg.solve(R, B.T @ Pn)
        if P is not None and np.abs(Pn - P).max() <= tol * (1.0 + np.abs(Pn).max()):
            P, K = Pn, Kn
            break
        P, K = Pn, Kn
    resid = np.abs(A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q).max()
    if resid > 1e-7 * (1.0 + np.abs(Q).max(initial=0.0)):
        raise NumericsError(f"Riccati residual {resid:.2e} out of tolerance")
    if not is_hurwitz(A - B @ np.linalg.solve(R, B.T @ P)):
        raise StabilizationError("Riccati iteration converged to a non-stabilizing solution")
    return P


def fd_step(value: float) -> float:
    """Default central-difference step: cbrt(eps) scaled by (1 + |value|)."""
    return float(np.cbrt(np.finfo(float).eps) * (1.0 + abs(value)))


def jacobian_fd(
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0,
    u0,
    step: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference Jacobians ``(df/dx, df/du)`` of ``f(x, u)``.

    Per-coordinate steps default to :func:`fd_step`.  If an evaluation inside
    the stencil fails (for example a barrier singularity is crossed) the error
    is re-raised with the offending coordinate named.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))

    def probe(xp, up, label):
        try:
            out = np.atleast_1d(np.asarray(f(xp, up), dtype=float))
        except Exception as exc:
            raise NumericsError(f"vector field evaluation failed at stencil point {label}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise NumericsError(f"vector field returned non-finite values at stencil point {label}")
        return out

    f0 = probe(x0, u0, "center")
    n_out = f0.shape[0]
    A = np.empty((n_out, x0.shape[0]))
    Bm = np.empty((n_out, u0.shape[0]))
    for j in range(x0.shape[0]):
        hj = step if step is not None else fd_step(x0[j])
        xp, xm = x0.copy(), x0.copy()
        xp[j] += hj
        xm[j] -= hj
        A[:, j] = (probe(xp, u0, f"x[{j}]+") - probe(xm, u0, f"x[{j}]-")) / (2.0 * hj)
    for j in range(u0.shape[0]):
        hj = step if step is not None else fd_step(u0[j])
        up, um = u0.copy(), u0.copy()
        up[j] += hj
        um[j] -= hj
        Bm[:, j] = (probe(x0, up, f"u[{j}]+") - probe(x0, um, f"u[{j}]-")) / (2.0 * hj)
    return A, Bm


def rk4_step(field, t: float, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``xdot = field(t, x)``."""
    k1 = field(t, x)
    k2 = field(t + 0.5 * dt, x + (0.5 * dt) * k1)
    k3 = field(t + 0.5 * dt, x + (0.5 * dt) * k2)
    k4 = field(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class IntegrationResult:
    """Raw state track from :func:`rk4_integrate`."""

    t: np.ndarray
    x: np.ndarray  # shape (len(t), n)
    diverged: bool = False


def rk4_integrate(field, x0, t_span: Sequence[float], dt: float) -> IntegrationResult:
    """Fixed-step classical RK4 over ``t_span = (t0, t1)``.

    The final step is truncated so the grid ends exactly at ``t1``.  If a
    non-finite state appears mid-run the trajectory is truncated at the last
    finite sample and flagged ``diverged`` instead of raising.  Deterministic
    for identical inputs.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    ts = [t0]
    xs = [x.copy()]
    t = t0
    tiny = 1e-12 * max(1.0, abs(t1))
    while t < t1 - tiny:
        h = min(dt, t1 - t)
        x = rk4_step(field, t, x, h)
        t = t1 if t + h > t1 - tiny else t + h
        if not np.all(np.isfinite(x)):
            return IntegrationResult(np.array(ts), np.array(xs), diverged=True)
        ts.append(t)
        xs.append(x.copy())
    return IntegrationResult(np.array(ts), np.array(xs), diverged=False)

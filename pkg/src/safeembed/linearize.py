"""Exact linearization of safety-embedded systems.

The barrier-state rows of (Abar, Bbar) are the exact Jacobian of the
barrier-state equation.  For the plain flavor with prefactor
phi(z + beta0), row i reads

    d zdot_i / dx = phi(z*+b0) * (grad_h^T A + f*^T hess_h)
                    + gamma * B'(h(x*)) * grad_h
    d zdot_i / dz_i = phi'(z*+b0) * L_f h  - gamma
    d zdot_i / du = phi(z*+b0) * grad_h^T (df/du)

(the displayed general formula in the source material typesets the
correction-gradient term inconsistently; the worked application matrices
agree with the exact Jacobian above, which is what this module computes).

Linearizing away from equilibrium is allowed -- the drift f_bar(op) is
recorded on the result and a warning is emitted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .embedding import PREFACTOR_BAS, EmbeddedSystem
from .numkit import jacobian_fd

__all__ = ["LinearizedSystem", "NonEquilibriumWarning", "linearize_embedded", "fd_linearize"]


class NonEquilibriumWarning(UserWarning):
    """Linearization requested at a point that is not an equilibrium."""


@dataclass(frozen=True)
class LinearizedSystem:
    Abar: np.ndarray
    Bbar: np.ndarray
    xbar_op: np.ndarray
    u_op: np.ndarray
    drift: np.ndarray  # f_bar at the operating point; ~0 at an equilibrium

    def __post_init__(self):
        if not (np.all(np.isfinite(self.Abar)) and np.all(np.isfinite(self.Bbar))):
            raise ValueError("linearization produced non-finite entries")


def _base_jacobians(embedded: EmbeddedSystem, x: np.ndarray, u: np.ndarray):
    base = embedded.base
    if base.jac_x is not None and base.jac_u is not None:
        return (
            np.asarray(base.jac_x(x, u), dtype=float),
            np.asarray(base.jac_u(x, u), dtype=float),
        )
    return jacobian_fd(base.f, x, u)


def linearize_embedded(
    embedded: EmbeddedSystem,
    xbar_op=None,
    u_op=None,
    drift_tol: float = 1e-8,
) -> LinearizedSystem:
    """(Abar, Bbar) of the embedded dynamics at an operating point.

    Defaults to the embedded equilibrium.  The operating point must be
    strictly inside the safe set; a barrier singularity there is an error.
    """
    xbar_op = embedded.xbar_eq.copy() if xbar_op is None else np.asarray(xbar_op, dtype=float)
    u_op = embedded.u_eq.copy() if u_op is None else np.atleast_1d(np.asarray(u_op, dtype=float))
    n, nb, nbar, m = embedded.n, embedded.nb, embedded.nbar, embedded.m
    x, z = xbar_op[:n], xbar_op[n:]

    drift = embedded.f_bar(xbar_op, u_op)  # raises on h <= 0
    if np.abs(drift).max(initial=0.0) > drift_tol * (1.0 + np.abs(xbar_op).max()):
        warnings.warn(
            f"linearizing at a non-equilibrium point (|f_bar|_inf = {np.abs(drift).max():.3e})",
            NonEquilibriumWarning,
            stacklevel=2,
        )

    A, B = _base_jacobians(embedded, x, u_op)
    f_op = np.asarray(embedded.base.f(x, u_op), dtype=float)

    Abar = np.zeros((nbar, nbar))
    Bbar = np.zeros((nbar, m))
    Abar[:n, :n] = A
    Bbar[:n, :] = B
    for i, spec in enumerate(embedded.bas_specs):
        bar, con = spec.barrier, spec.constraint
        h = con.value(x)
        g = con.gradient(x)
        H = con.hessian(x)
        lie = float(g @ f_op)
        row = n + i
        if spec.prefactor == PREFACTOR_BAS:
            pre = bar.phi(float(z[i]) + spec.beta0)
            dpre_dx = np.zeros(n)
            Abar[row, row] = bar.phi_prime(float(z[i]) + spec.beta0) * lie - spec.gamma
        else:
            pre = bar.bprime(h)
            dpre_dx = bar.bsecond(h) * g
            Abar[row, row] = -spec.gamma
        Abar[row, :n] = pre * (g @ A + H @ f_op) + dpre_dx * lie + spec.gamma * bar.bprime(h) * g
        Bbar[row, :] = pre * (g @ B)
    return LinearizedSystem(Abar=Abar, Bbar=Bbar, xbar_op=xbar_op, u_op=u_op, drift=drift)


def fd_linearize(embedded: EmbeddedSystem, xbar_op=None, u_op=None, step=None):
    """Finite-difference (Abar, Bbar) of f_bar, for cross-validation."""
    xbar_op = embedded.xbar_eq.copy() if xbar_op is None else np.asarray(xbar_op, dtype=float)
    u_op = embedded.u_eq.copy() if u_op is None else np.atleast_1d(np.asarray(u_op, dtype=float))
    return jacobian_fd(embedded.f_bar, xbar_op, u_op, step=step)

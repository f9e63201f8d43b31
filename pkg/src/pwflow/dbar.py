"""Inversion of the d/dw operator on (0,1)-vector fields.

``dbar_solve`` produces the conformality-preserving tangential
correction of the flow; ``potential_of`` cross-checks it through the
scalar potential, and ``l1_norm_pair`` evaluates the L^1 quantities of
the sharp inversion example on rectangular tori.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FlatModulus, Grid
from .moduli import norm_mixed, norm_u01


class NonSolvable(ValueError):
    """The source has a nonzero mean: a projection is missing upstream."""


@dataclass(frozen=True)
class TangentField01:
    """Complex coefficient u of the (0,1)-vector field u d/dwbar.

    The zero mode of u is always zero (orthogonality to the constant
    anti-holomorphic vector fields), which makes the field unique.
    """

    grid: Grid
    u: np.ndarray

    def pushforward(self, dphi_w: np.ndarray) -> np.ndarray:
        """Ambient tangent field of the immersion, 2 Re(conj(u) dphi/dw)."""
        return 2.0 * np.real(np.conj(self.u)[..., None] * dphi_w)


def dbar_solve(grid: Grid, F: np.ndarray, rtol: float = 1e-10) -> TangentField01:
    """Solve d/dw u = F with mean-zero u.

    Raises
    ------
    NonSolvable
        If |mean(F)| exceeds ``rtol * max|F|``; a mean component is not
        in the range of d/dw on the torus.
    """
    scale = float(np.max(np.abs(F))) + 1e-300
    if abs(complex(F.mean())) > rtol * scale:
        raise NonSolvable("dbar_solve requires a mean-free source")
    u = grid.solve_dw(F)
    return TangentField01(grid, u)


def potential_of(U: TangentField01, modulus: FlatModulus) -> dict:
    """Scalar potential of a (0,1)-field and its biharmonic residual.

    Solves u = 2 e^{-2 nu} d phi/dw for a zero-mean phi.  Any zero mode
    of u (obstruction against holomorphic 1-forms, constants here) is
    removed first and reported.  The residual checks the flat-torus
    identity  (1/4) Lap_h^2 phi = 2 e^{-2 nu} d2/dwbar2 (du/dw),
    which is exact up to round-off.
    """
    grid = U.grid
    b = modulus.b
    u = U.u
    removed = complex(u.mean())
    u0 = u - removed
    phi = grid.solve_dw(u0) / (2.0 * b)

    f = grid.deriv(u0, "w")
    lhs = 4.0 * b * b * grid.deriv(grid.deriv(
        grid.deriv(grid.deriv(phi, "w"), "w"), "wbar"), "wbar")
    rhs = 2.0 * b * grid.deriv(grid.deriv(f, "wbar"), "wbar")
    scale = float(np.max(np.abs(rhs))) + 1e-300
    residual = float(np.max(np.abs(lhs - rhs))) / scale
    return {"phi": phi, "residual": residual, "removed_mode": removed}


def l1_norm_pair(U: TangentField01, modulus: FlatModulus) -> dict[str, float]:
    """L^1_h norms of the field and of its d/dw derivative.

    Uses the pinned conventions |u d/dwbar|_h = sqrt(2b)|u| and
    |F dw (x) d/dwbar|_h = 2|F|, integrated against dvol_h.  The
    derivative is spectral; for kinked test data prefer the exact
    nodal derivative of :func:`remark_test_field`.
    """
    grid = U.grid
    l1_u = float(grid.integrate_h(norm_u01(U.u, modulus)))
    dU = grid.deriv(U.u, "w")
    l1_dbar = float(grid.integrate_h(norm_mixed(dU)))
    return {"l1_u": l1_u, "l1_dbar_u": l1_dbar}


def remark_test_field(grid: Grid) -> tuple[TangentField01, np.ndarray]:
    """The sharp-inversion test field on a rectangular torus.

    Returns the field u = min(y, b - y) with y = b x2 sampled exactly
    at the nodes, together with the exact almost-everywhere derivative
    du/dw = -i/2 * sign(b/2 - y) sampled nodally (|.| = 1/2 at the kink
    lines too).  The spectral path rings at the kinks (Gibbs), so the
    quadrature tests use these samples with the plain nodal sum, which
    is exact for the piecewise-linear integrand.
    """
    modulus = grid.modulus
    if abs(modulus.a) > 1e-14:
        raise ValueError("the sharp-inversion example is rectangular only")
    b = modulus.b
    y = b * grid.x2
    u = np.minimum(y, b - y).astype(np.complex128)
    du = np.where(y <= b / 2.0, -0.5j, 0.5j).astype(np.complex128)
    return TangentField01(grid, u), du


def l1_norm_pair_nodal(
    grid: Grid, u: np.ndarray, du: np.ndarray, modulus: FlatModulus
) -> dict[str, float]:
    """As :func:`l1_norm_pair` with a caller-supplied exact derivative."""
    return {
        "l1_u": float(grid.integrate_h(norm_u01(u, modulus))),
        "l1_dbar_u": float(grid.integrate_h(norm_mixed(du))),
    }

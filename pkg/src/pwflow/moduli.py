"""Teichmueller-side machinery for the flat torus.

Holomorphic quadratic differentials are constant here, so the L^2
projection onto them is a grid mean and the metric motion reduces to a
2x2 linear system for (da/dt, db/dt).

Norm conventions on tensors are pinned by two closed-form checks (see
``tests/test_moduli.py``): the sup of the reference holomorphic 1-form
dw satisfies |dw|_h * l_star = 1 on rectangular tori, and the
piecewise-linear (0,1)-field of the dbar optimality example integrates
to 2^{-3/2} b^{3/2}.  The resulting factors are

    |f dw|_h        = e^{-nu} |f|            (1,0)-forms
    |c dw dw|_h     = e^{-2 nu} |c|          quadratic differentials
    |u d/dwbar|_h   = sqrt(2) e^{-nu} |u|    (0,1)-vector fields
    |f dw d/dwbar|_h = 2 |f|                 mixed fields

with e^{-nu} = sqrt(b).  The last two do not come from one coherent
metric extension; they are the normalizations under which the quoted
closed-form values and the b^{3/2} optimality scaling hold.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryBundle
from .grid import FlatModulus, Grid


class SingularModulus(ValueError):
    """The conformal class is degenerating (b outside safe range)."""


@dataclass(frozen=True)
class QuadDifferential:
    """Constant-coefficient holomorphic quadratic differential c dw dw."""

    c: complex

    def norm_h(self, modulus: FlatModulus) -> float:
        """Pointwise norm |q|_h = b |c| (constant over the torus)."""
        return modulus.b * abs(self.c)

    def norm_l2(self, modulus: FlatModulus) -> float:
        """L^2_h norm; equals the pointwise norm on the unit-volume torus."""
        return self.norm_h(modulus)


@dataclass(frozen=True)
class ConcentrationMap:
    """Cutoff-localized bending energy per center."""

    radius: float
    centers: np.ndarray  # (n, 2) chart coordinates in [0,1)^2
    values: np.ndarray  # (n,)

    @property
    def sup_value(self) -> float:
        return float(np.max(self.values))

    def argmax_center(self) -> np.ndarray:
        return self.centers[int(np.argmax(self.values))]


# -- norm conventions ------------------------------------------------------


def norm_one_form(f: np.ndarray | complex, modulus: FlatModulus) -> np.ndarray:
    """|f dw|_h = sqrt(b) |f|."""
    return math.sqrt(modulus.b) * np.abs(f)


def norm_u01(u: np.ndarray | complex, modulus: FlatModulus) -> np.ndarray:
    """|u d/dwbar|_h = sqrt(2 b) |u|."""
    return math.sqrt(2.0 * modulus.b) * np.abs(u)


def norm_mixed(f: np.ndarray | complex) -> np.ndarray:
    """|f dw (x) d/dwbar|_h = 2 |f| (weightless in b)."""
    return 2.0 * np.abs(f)


def metric_components(modulus: FlatModulus) -> np.ndarray:
    """Components of h = b^{-1} |dx1 + tau dx2|^2 in the fixed (x1,x2) chart."""
    a, b = modulus.a, modulus.b
    return np.array(
        [[1.0 / b, a / b], [a / b, (a * a + b * b) / b]]
    )


def quad_components(q: QuadDifferential, modulus: FlatModulus) -> np.ndarray:
    """Components of Re[c dw dw] in the fixed (x1,x2) chart."""
    tau = modulus.tau
    c = q.c
    return np.array(
        [
            [c.real, (c * tau).real],
            [(c * tau).real, (c * tau * tau).real],
        ]
    )


def sym2_norm_h(T: np.ndarray, modulus: FlatModulus) -> float:
    """Norm of a constant symmetric 2-tensor, |T|_h = sqrt(h^ik h^jl T_ij T_kl / 2).

    The 1/2 makes |Re[c dw dw]|_h = b |c|, consistent with the
    quadratic-differential convention.
    """
    hinv = np.linalg.inv(metric_components(modulus))
    raised = hinv @ T @ hinv
    return math.sqrt(0.5 * float(np.sum(raised * T)))


# -- operations -------------------------------------------------------------


def systole(modulus: FlatModulus) -> float:
    """Shortest closed geodesic length of the unit-volume flat metric."""
    return modulus.systole()


def geodesic_distance(
    modulus: FlatModulus, x: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """h-distance between chart points, minimized over 9 lattice translates.

    ``x`` and ``y`` are broadcastable arrays of shape (..., 2) with
    coordinates in the fundamental domain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    tau = modulus.tau
    wx = x[..., 0] + tau * x[..., 1]
    wy = y[..., 0] + tau * y[..., 1]
    d = wx - wy
    best = np.full(np.broadcast(wx, wy).shape, np.inf)
    for mm in (-1, 0, 1):
        for nn in (-1, 0, 1):
            best = np.minimum(best, np.abs(d - (mm + nn * tau)))
    return best / math.sqrt(modulus.b)


def project_quadratic(
    psi: np.ndarray, modulus: FlatModulus
) -> tuple[QuadDifferential, np.ndarray]:
    """L^2_h-orthogonal projection of psi dw dw onto holomorphic forms.

    On the torus the holomorphic quadratic differentials are constants
    and the projection weight is constant, so the projection is the
    plain grid mean.  Returns the projected differential and the
    pointwise complement psi - c.
    """
    c = complex(psi.mean())
    return QuadDifferential(c), psi - c


def modulus_velocity(
    q: QuadDifferential, modulus: FlatModulus, eps_b: float = 1e-8
) -> tuple[float, float]:
    """Convert dh/dt = Re[c dw dw] into the modulus velocity (da/dt, db/dt).

    Matching the derivative of the pullback family
    h(a, b) = b^{-1} |dx1 + (a + i b) dx2|^2 component-by-component to
    Re[c dw dw] gives da/dt = -Im(c) b^2 and db/dt = -Re(c) b^2; the
    2x2 system is consistent because both sides are trace-free at unit
    volume.
    """
    b = modulus.b
    if b <= eps_b:
        raise SingularModulus(f"b = {b} at or below {eps_b}; systole collapsing")
    return (-q.c.imag * b * b, -q.c.real * b * b)


def _chi_plateau(s: np.ndarray) -> np.ndarray:
    """Smooth cutoff: 1 on [0, 1/2], 0 on [1, inf), C-infinity between."""
    s = np.abs(np.asarray(s, dtype=float))

    def bump(t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    up = bump(2.0 * (1.0 - s))
    down = bump(2.0 * (s - 0.5))
    return up / (up + down + 1e-300)


def concentration(
    bundle: GeometryBundle,
    modulus: FlatModulus,
    R: float,
    centers: np.ndarray | None = None,
    stride: int = 4,
) -> ConcentrationMap:
    """Cutoff-localized integral of |II|^2 dvol_g per center.

    E(R, x0) = sum over nodes of |II|^2 e^{2 lam} cellarea
    chi(dist_h(x, x0) / R) with the smooth plateau cutoff.  Centers
    default to every ``stride``-th grid node.
    """
    grid = bundle.grid
    if not 0.0 < R:
        raise ValueError("R must be positive")
    if R >= modulus.l_star / 2.0:
        warnings.warn(
            f"concentration radius R={R:.3g} >= l_star/2 = "
            f"{modulus.l_star / 2:.3g}; cutoff wraps around",
            stacklevel=2,
        )
    if centers is None:
        idx = np.arange(0, grid.N, stride)
        cx, cy = np.meshgrid(idx, idx, indexing="ij")
        centers = np.stack([cx.ravel(), cy.ravel()], axis=-1) / grid.N
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)

    density = bundle.sff_sq * bundle.dvol_factor * grid.cell_area
    nodes = np.stack([grid.x1, grid.x2], axis=-1)  # (N, N, 2)
    values = np.empty(len(centers))
    for i, x0 in enumerate(centers):
        dist = geodesic_distance(modulus, nodes, x0)
        values[i] = float(np.sum(density * _chi_plateau(dist / R)))
    return ConcentrationMap(radius=R, centers=centers, values=values)


def reduce_modulus(modulus: FlatModulus) -> FlatModulus:
    """SL(2, Z)-reduce tau into |a| <= 1/2, |tau| >= 1.

    Post-processing utility only; the flow never re-reduces mid-run so
    that tau(t) stays continuous.
    """
    tau = modulus.tau
    for _ in range(256):
        tau = complex(tau.real - round(tau.real), tau.imag)
        if abs(tau) >= 1.0 - 1e-15:
            break
        tau = -1.0 / tau
    return FlatModulus(tau.real, tau.imag)

"""Pointwise first/second-order geometry of an immersion in the torus chart.

Everything is computed from the complex chart derivative d/dw of the
immersion: conformal scale, conformality defect, mean curvature, the
trace-free Weingarten field, Gauss curvature and the squared second
fundamental form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FlatModulus, Grid


class DegenerateImmersion(ValueError):
    """The map fails the immersion condition somewhere on the grid."""

    def __init__(self, location: tuple[int, int], value: float):
        self.location = location
        self.value = value
        super().__init__(
            f"immersion degenerates at grid node {location} "
            f"(conformal rank indicator {value:.3e})"
        )


@dataclass(frozen=True)
class ImmersionField:
    """Grid samples of an immersion of the torus into R^m.

    Parameters
    ----------
    grid : Grid
        Spectral grid carrying the modulus.
    phi : ndarray, shape (N, N, m)
        Real samples of the immersion, m >= 3.
    """

    grid: Grid
    phi: np.ndarray

    def __post_init__(self) -> None:
        N = self.grid.N
        if self.phi.shape[:2] != (N, N) or self.phi.ndim != 3:
            raise ValueError("phi must have shape (N, N, m)")
        if self.phi.shape[2] < 3:
            raise ValueError("ambient dimension must be >= 3")

    @property
    def m(self) -> int:
        return self.phi.shape[2]


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear (unconjugated) ambient dot product over the last axis."""
    return np.sum(u * v, axis=-1)


@dataclass(frozen=True)
class GeometryBundle:
    """All pointwise derived geometry of an immersion.

    Attributes
    ----------
    dphi_w : (N, N, m) complex
        d/dw of the immersion; d/dwbar is its conjugate.
    lam : (N, N) real
        Conformal scale, e^{2 lam} = 2 dphi_w . conj(dphi_w).
    alpha : (N, N) real
        Conformal factor relative to h: alpha = lam - nu with
        nu = -log(b)/2 constant in this chart.
    Q : (N, N) complex
        Conformality defect dphi_w . dphi_w (bilinear).
    H : (N, N, m) real
        Mean curvature vector, half the inverse-metric trace of the
        normal Hessian (exact for non-conformal states; equals
        2 e^{-2 lam} pi_n(d2 phi/dw dwbar) when Q = 0).
    H0 : (N, N, m) complex
        Trace-free Weingarten field, 2 e^{-2 lam} pi_n(d2 phi/dw dw).
    K_g : (N, N) real
        Gauss curvature from the Liouville form -e^{-2 lam} Dflat(lam).
    sff_sq : (N, N) real
        |second fundamental form|^2_g = 2|H|^2 + 2|H0|^2, assembled
        from the complex Hessian components (independent of K_g, so
        the Gauss identity is a genuine cross-check).
    e1, e2 : (N, N, m) real
        Orthonormal tangent frame from Gram-Schmidt on
        {Re dphi_w, Im dphi_w}.
    """

    grid: Grid
    immersion: ImmersionField
    dphi_w: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    H0: np.ndarray
    K_g: np.ndarray
    sff_sq: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    @property
    def dphi_wbar(self) -> np.ndarray:
        return np.conj(self.dphi_w)

    @property
    def e2lam(self) -> np.ndarray:
        return np.exp(2.0 * self.lam)

    @property
    def defect_sup(self) -> float:
        """Scale-free sup of the conformality defect |Q| e^{-2 lam}."""
        return float(np.max(np.abs(self.Q) * np.exp(-2.0 * self.lam)))

    @property
    def dvol_factor(self) -> np.ndarray:
        """Surface area density against the w-chart area element.

        sqrt(det g) = sqrt(e^{4 lam} - 4 |Q|^2); equals e^{2 lam} on
        conformal states.
        """
        return np.sqrt(np.exp(4.0 * self.lam) - 4.0 * np.abs(self.Q) ** 2)

    def project_tangent(self, X: np.ndarray) -> np.ndarray:
        """Tangential projection of a real or complex ambient field."""
        c1 = _dot(X, self.e1)
        c2 = _dot(X, self.e2)
        return c1[..., None] * self.e1 + c2[..., None] * self.e2

    def project_normal(self, X: np.ndarray) -> np.ndarray:
        return X - self.project_tangent(X)

    @property
    def normal_proj(self) -> np.ndarray:
        """Pointwise m x m normal projector pi_n = I - e1 e1^T - e2 e2^T."""
        m = self.e1.shape[-1]
        eye = np.eye(m)
        pt = (
            self.e1[..., :, None] * self.e1[..., None, :]
            + self.e2[..., :, None] * self.e2[..., None, :]
        )
        return eye - pt


def compute_geometry(imm: ImmersionField) -> GeometryBundle:
    """Populate the full geometry bundle for an immersion.

    Raises
    ------
    DegenerateImmersion
        If 2(|dphi_w|^2 - |Q|) falls below 1e-10 times the median
        conformal scale anywhere (the quantity vanishes exactly where
        the differential drops rank or reverses orientation).
    """
    grid = imm.grid
    dphi_w = grid.deriv(imm.phi, "w")
    dphi_wbar = np.conj(dphi_w)

    e2lam = 2.0 * np.real(_dot(dphi_w, dphi_wbar))
    Q = _dot(dphi_w, dphi_w)
    rank_ind = e2lam - 2.0 * np.abs(Q)
    floor = 1e-10 * float(np.median(e2lam))
    if np.min(rank_ind) <= floor:
        idx = np.unravel_index(int(np.argmin(rank_ind)), rank_ind.shape)
        raise DegenerateImmersion((int(idx[0]), int(idx[1])), float(np.min(rank_ind)))
    lam = 0.5 * np.log(e2lam)
    alpha = lam - grid.modulus.nu

    # Orthonormal tangent frame; Gram-Schmidt because the pair
    # {Re dphi_w, Im dphi_w} is only orthogonal when Q = 0.
    t1 = np.real(dphi_w)
    t2 = np.imag(dphi_w)
    n1 = np.sqrt(_dot(t1, t1))
    e1 = t1 / n1[..., None]
    t2p = t2 - _dot(t2, e1)[..., None] * e1
    n2 = np.sqrt(_dot(t2p, t2p))
    e2 = t2p / n2[..., None]

    def pi_n(X: np.ndarray) -> np.ndarray:
        c1 = _dot(X, e1)
        c2 = _dot(X, e2)
        return X - c1[..., None] * e1 - c2[..., None] * e2

    d2_wwbar = np.real(grid.deriv(dphi_w, "wbar"))
    d2_ww = grid.deriv(dphi_w, "w")
    # Exact trace of the inverse metric against the Hessian, valid for
    # non-conformal states too (the metric in the w-chart has complex
    # components g_ww = Q, g_wwbar = e^{2 lam}/2); reduces to
    # 2 e^{-2 lam} pi_n(d2_wwbar) when Q = 0.
    E = 0.5 * e2lam
    det2 = E**2 - np.abs(Q) ** 2
    num = (
        2.0 * E[..., None] * d2_wwbar
        - np.conj(Q)[..., None] * d2_ww
        - Q[..., None] * np.conj(d2_ww)
    )
    H = np.real(pi_n(num)) / (2.0 * det2)[..., None]
    H0 = (2.0 / e2lam)[..., None] * pi_n(d2_ww)

    K_g = -np.exp(-2.0 * lam) * 4.0 * np.real(
        grid.deriv(grid.deriv(lam, "w"), "wbar")
    )
    sff_sq = 2.0 * np.real(_dot(H, H)) + 2.0 * np.real(_dot(H0, np.conj(H0)))

    return GeometryBundle(
        grid=grid,
        immersion=imm,
        dphi_w=dphi_w,
        lam=lam,
        alpha=alpha,
        Q=Q,
        H=H,
        H0=H0,
        K_g=K_g,
        sff_sq=sff_sq,
        e1=e1,
        e2=e2,
    )


def willmore_energy(bundle: GeometryBundle) -> float:
    """W = integral of |H|^2 over the exact surface measure.

    The area density sqrt(det g) is kept exact in the conformality
    defect so that finite differences of W across non-conformal
    perturbations reproduce the variational pairing.
    """
    grid = bundle.grid
    h2 = np.real(_dot(bundle.H, bundle.H))
    return float(grid.integrate_chart(h2 * bundle.dvol_factor))


def energy_identities(bundle: GeometryBundle) -> dict[str, float]:
    """Integrated Gauss-Bonnet defect and bending energy.

    Returns ``gauss_bonnet_defect`` = integral of K_g dvol_g (the Euler
    characteristic of the torus is zero) and ``sff_energy`` = integral
    of |II|^2 dvol_g, which must reproduce 4 W - 2 * integral K_g dvol_g.
    """
    grid = bundle.grid
    gb = float(grid.integrate_chart(bundle.K_g * bundle.dvol_factor))
    sff = float(grid.integrate_chart(bundle.sff_sq * bundle.dvol_factor))
    return {"gauss_bonnet_defect": gb, "sff_energy": sff}

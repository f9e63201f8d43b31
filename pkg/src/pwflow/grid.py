"""Lattice-adapted spectral substrate on the flat torus.

The fundamental domain is the image of [0, 1)^2 under the chart
``w = x1 + tau*x2`` with ``tau = a + i*b``, so the period lattice is
``Z + tau*Z``.  All differentiation and inversion is diagonal in the
Fourier basis ``exp(2*pi*i*(k1*x1 + k2*x2))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class NonZeroMean(ValueError):
    """Raised when a zero-mean inversion is requested for biased data."""


@dataclass(frozen=True)
class FlatModulus:
    """Teichmueller parameter tau = a + i*b of the unit-volume flat torus.

    The reference metric in the chart w = x1 + tau*x2 is
    h = (1/b) |dw|^2, which has unit total volume for every (a, b):
    the Euclidean area of the fundamental domain is b and the chart
    factor is 1/b.

    Parameters
    ----------
    a : float
        Shear (real part of tau).
    b : float
        Aspect (imaginary part of tau), must be positive.
    """

    a: float = 0.0
    b: float = 1.0

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise ValueError(f"modulus requires b > 0, got b = {self.b}")

    @property
    def tau(self) -> complex:
        return complex(self.a, self.b)

    @property
    def s_h(self) -> float:
        """Chart factor of h: h = s_h * |dw|^2."""
        return 1.0 / self.b

    @property
    def nu(self) -> float:
        """Log chart factor of h, h = e^{2 nu} |dw|^2 (constant)."""
        return -0.5 * math.log(self.b)

    @property
    def V_h(self) -> float:
        """Total volume of h; identically 1 by the normalization above."""
        return 1.0

    def systole(self, search: int | None = None) -> float:
        """Length of the shortest closed geodesic of h.

        Minimizes |m + n*tau| / sqrt(b) over nonzero lattice vectors.
        The default search window |m|, |n| <= 2 + ceil(|tau|) is
        sufficient for reduced and near-reduced moduli.
        """
        if search is None:
            search = 2 + math.ceil(abs(self.tau))
        best = math.inf
        for m in range(-search, search + 1):
            for n in range(-search, search + 1):
                if m == 0 and n == 0:
                    continue
                best = min(best, abs(m + n * self.tau))
        return best / math.sqrt(self.b)

    @property
    def l_star(self) -> float:
        return self.systole()


def _nyquist_mask(N: int) -> np.ndarray:
    """True on modes whose k1 or k2 equals -N/2 (the unpaired frequency)."""
    k = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)
    bad = k == -(N // 2)
    return bad[:, None] | bad[None, :]


@dataclass(frozen=True)
class Grid:
    """N x N periodic sampling of the fundamental domain.

    Fields are plain numpy arrays of shape (N, N) or (N, N, m) indexed
    as field[i, j] = value at (x1, x2) = (i/N, j/N).  Frequencies are
    integer pairs with k_i in {-N/2, ..., N/2 - 1}.

    The Nyquist line k = -N/2 is zeroed in both first-derivative
    symbols: an even grid carries that mode without its conjugate
    partner and odd-order derivatives of it are pure artifact.
    """

    N: int
    modulus: FlatModulus

    def __post_init__(self) -> None:
        if self.N % 2 != 0 or self.N < 8:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        N, tau, b = self.N, self.modulus.tau, self.modulus.b
        k = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)
        k1 = k[:, None]
        k2 = k[None, :]
        # d/dw multiplies mode (k1, k2) by pi*(k2 - conj(tau)*k1)/Im(tau);
        # d/dwbar by pi*(tau*k1 - k2)/Im(tau), so conj(d/dw f) = d/dwbar f
        # on real fields.
        mu_w = (np.pi / b) * (k2 - np.conj(tau) * k1)
        mu_wbar = (np.pi / b) * (tau * k1 - k2)
        nyq = _nyquist_mask(N)
        mu_w = np.where(nyq, 0.0, mu_w)
        mu_wbar = np.where(nyq, 0.0, mu_wbar)
        # Flat chart Laplacian 4 d/dw d/dwbar; even order, so the symbol
        # keeps its Nyquist content.
        lap = -(4.0 * np.pi**2 / b**2) * np.abs(k2 - tau * k1) ** 2
        cut = N // 3
        dealias = (np.abs(k1) <= cut) & (np.abs(k2) <= cut)
        x = np.arange(N) / N
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        object.__setattr__(self, "mu_w", mu_w)
        object.__setattr__(self, "mu_wbar", mu_wbar)
        object.__setattr__(self, "lap_symbol", lap)
        object.__setattr__(self, "dealias_mask", dealias)
        object.__setattr__(self, "nyquist_mask", nyq)
        object.__setattr__(self, "x1", x[:, None] + 0.0 * x[None, :])
        object.__setattr__(self, "x2", 0.0 * x[:, None] + x[None, :])
        object.__setattr__(self, "w", x[:, None] + tau * x[None, :])

    # -- transforms -------------------------------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.fft2(f, axes=(0, 1))

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(fh, axes=(0, 1))

    def _apply_symbol(self, f: np.ndarray, sym: np.ndarray) -> np.ndarray:
        fh = self.fft(f)
        if fh.ndim == 3:
            fh = fh * sym[:, :, None]
        else:
            fh = fh * sym
        return self.ifft(fh)

    # -- calculus ---------------------------------------------------------

    def deriv(self, f: np.ndarray, kind: str) -> np.ndarray:
        """Spectral d/dw or d/dwbar of a scalar or vector field."""
        if kind == "w":
            return self._apply_symbol(f, self.mu_w)
        if kind == "wbar":
            return self._apply_symbol(f, self.mu_wbar)
        raise ValueError(f"kind must be 'w' or 'wbar', got {kind!r}")

    def dealias(self, f: np.ndarray) -> np.ndarray:
        """2/3-rule truncation; returns a field of the same (real) type."""
        out = self._apply_symbol(f, self.dealias_mask.astype(np.float64))
        if np.isrealobj(f):
            return out.real
        return out

    def mean(self, f: np.ndarray) -> complex | float | np.ndarray:
        return f.mean(axis=(0, 1))

    def solve_poisson(self, f: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        """Solve 4 d/dw d/dwbar u = f with zero-mean u.

        The inversion acts on the span of the non-Nyquist modes; the
        operator is singular on the zero mode, hence the mean-free
        precondition.
        """
        scale = np.max(np.abs(f)) + 1e-300
        if np.max(np.abs(np.asarray(self.mean(f)))) > rtol * scale:
            raise NonZeroMean("solve_poisson requires a mean-free source")
        sym = self.lap_symbol
        inv = np.zeros_like(sym)
        keep = (~self.nyquist_mask) & (sym != 0.0)
        inv[keep] = 1.0 / sym[keep]
        out = self._apply_symbol(f, inv)
        if np.isrealobj(f):
            return out.real
        return out

    def solve_dw(self, f: np.ndarray) -> np.ndarray:
        """Invert d/dw on mean-free data (zero mode set to zero)."""
        inv = np.zeros_like(self.mu_w)
        keep = self.mu_w != 0.0
        inv[keep] = 1.0 / self.mu_w[keep]
        return self._apply_symbol(f, inv)

    def solve_dwbar(self, f: np.ndarray) -> np.ndarray:
        """Invert d/dwbar on mean-free data (zero mode set to zero)."""
        inv = np.zeros_like(self.mu_wbar)
        keep = self.mu_wbar != 0.0
        inv[keep] = 1.0 / self.mu_wbar[keep]
        return self._apply_symbol(f, inv)

    # -- quadrature -------------------------------------------------------

    @property
    def cell_area(self) -> float:
        """Euclidean w-plane area per grid cell, b / N^2."""
        return self.modulus.b / self.N**2

    def integrate_chart(self, f: np.ndarray) -> float | complex | np.ndarray:
        """Integral against the Euclidean area element of the w-plane."""
        return f.sum(axis=(0, 1)) * self.cell_area

    def integrate_h(self, f: np.ndarray) -> float | complex | np.ndarray:
        """Integral against dvol_h = dx1 dx2 (unit total volume)."""
        return f.sum(axis=(0, 1)) / self.N**2

    # -- evaluation off the grid -------------------------------------------

    def evaluate(self, f: np.ndarray, points: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Evaluate the trigonometric interpolant of ``f`` at chart points.

        ``points`` has shape (P, 2) with coordinates taken mod 1.
        Nyquist modes are dropped (they have no symmetric interpolant).
        Cost is O(P N^2) per component, chunked to bound memory.
        """
        N = self.N
        fh = self.fft(f) / N**2
        if fh.ndim == 2:
            fh = fh[..., None]
        fh = np.where(self.nyquist_mask[:, :, None], 0.0, fh)
        k = np.fft.fftfreq(N, d=1.0 / N)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        out = np.empty((len(pts), fh.shape[2]), dtype=np.complex128)
        for lo in range(0, len(pts), chunk):
            sl = slice(lo, lo + chunk)
            E1 = np.exp(2j * np.pi * np.outer(pts[sl, 0], k))
            E2 = np.exp(2j * np.pi * np.outer(pts[sl, 1], k))
            out[sl] = np.einsum("pk,pl,klm->pm", E1, E2, fh, optimize=True)
        if np.isrealobj(f):
            out = out.real
        if f.ndim == 2:
            return out[:, 0]
        return out


def spectral_derivative(grid: Grid, f: np.ndarray, kind: str) -> np.ndarray:
    """Functional alias for :meth:`Grid.deriv`."""
    return grid.deriv(f, kind)

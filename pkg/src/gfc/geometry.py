"""Discrete exterior calculus on a uniform 1-D grid.

0-forms live on the ``n`` nodes, 1-forms on the ``n - 1`` edges (stored at
edge midpoints).  The weighted co-derivative is built from the same flux
differences as the summation-by-parts identity, so

    <codiff_G(alpha), phi>_G == <alpha, d(phi)>_G

holds to round-off for every pair, not just in the continuum limit.  The
boundary closure is zero flux: nothing leaves through either end, which makes
the constant function an exact null vector of the weighted Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .model import GibbsState


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs n >= 3 nodes, got {self.n}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise ValueError(f"invalid grid interval [{self.x_min}, {self.x_max}]")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @cached_property
    def x(self) -> np.ndarray:
        x = np.linspace(self.x_min, self.x_max, self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid node weights: dx inside, dx/2 at the two ends."""
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w

    @cached_property
    def midpoints(self) -> np.ndarray:
        xm = 0.5 * (self.x[1:] + self.x[:-1])
        xm.flags.writeable = False
        return xm

    def nearest(self, x: float) -> int:
        return int(np.argmin(np.abs(self.x - x)))


def _check0(f, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.n,):
        raise ValueError(f"expected a 0-form with {grid.n} node values, got shape {f.shape}")
    return f


def _check1(alpha, grid: Grid) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (grid.n - 1,):
        raise ValueError(f"expected a 1-form with {grid.n - 1} edge values, got shape {alpha.shape}")
    return alpha


def edge_average(f) -> np.ndarray:
    """Arithmetic mean of node values onto edges."""
    f = np.asarray(f, dtype=float)
    return 0.5 * (f[1:] + f[:-1])


def node_average(alpha) -> np.ndarray:
    """Average of the two adjacent edge values; end nodes take their single edge."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty(alpha.size + 1)
    out[1:-1] = 0.5 * (alpha[1:] + alpha[:-1])
    out[0] = alpha[0]
    out[-1] = alpha[-1]
    return out


def d(f, grid: Grid) -> np.ndarray:
    """Exterior derivative of a 0-form: forward differences onto edges."""
    f = _check0(f, grid)
    return np.diff(f) / grid.dx


def codiff(alpha, grid: Grid, weight=None) -> np.ndarray:
    """Co-derivative of a 1-form with respect to the node weight ``weight``.

    ``weight=None`` is the unweighted operator.  The weight enters only as a
    ratio, so any positive multiple of the same weight gives the same result.
    """
    alpha = _check1(alpha, grid)
    w = grid.weights
    if weight is None:
        flux = alpha
        mass = w
    else:
        weight = _check0(weight, grid)
        if np.any(weight <= 0):
            raise ValueError("weight must be positive at every node")
        flux = edge_average(weight) * alpha
        mass = weight * w
    padded = np.concatenate(([0.0], flux, [0.0]))
    return -(padded[1:] - padded[:-1]) / mass


def codiff_G(alpha, gibbs: "GibbsState") -> np.ndarray:
    return codiff(alpha, gibbs.grid, gibbs.rho)


def inner_G(a, b, gibbs: "GibbsState") -> float:
    """Weighted inner product of two 0-forms or two 1-forms."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    grid = gibbs.grid
    if a.shape != b.shape:
        raise ValueError(f"rank/size mismatch: {a.shape} vs {b.shape}")
    if a.shape == (grid.n,):
        return float(np.sum(grid.weights * gibbs.rho * a * b))
    if a.shape == (grid.n - 1,):
        return float(np.sum(grid.dx * gibbs.rho_edges * a * b))
    raise ValueError(f"shape {a.shape} is neither a 0-form nor a 1-form on this grid")


def norm_G(a, gibbs: "GibbsState") -> float:
    return float(np.sqrt(max(inner_G(a, a, gibbs), 0.0)))


@dataclass(frozen=True)
class WeightedLaplacian:
    """Tridiagonal matrix of ``codiff_G(d(.))`` with positive semi-definite sign.

    ``lower[i]`` couples node ``i + 1`` to node ``i``, ``upper[i]`` couples
    node ``i`` to node ``i + 1``.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    gibbs: "GibbsState"

    @property
    def n(self) -> int:
        return self.diag.size

    def apply(self, f) -> np.ndarray:
        # flux form keeps A @ const == 0 exact
        return codiff_G(d(f, self.gibbs.grid), self.gibbs)

    __call__ = apply

    def banded(self, shift: float = 0.0, scale: float = 1.0) -> np.ndarray:
        """``shift * I + scale * A`` in the (1, 1) banded layout of ``solve_banded``."""
        ab = np.zeros((3, self.n))
        ab[0, 1:] = scale * self.upper
        ab[1, :] = shift + scale * self.diag
        ab[2, :-1] = scale * self.lower
        return ab

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)

    def symmetric(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of ``D^{1/2} A D^{-1/2}``, ``D = diag(w rho)``."""
        g = self.gibbs
        rb = g.rho_edges
        m = g.mass
        off = -rb / (g.grid.dx * np.sqrt(m[:-1] * m[1:]))
        return self.diag.copy(), off


def laplacian_G(gibbs: "GibbsState") -> WeightedLaplacian:
    grid = gibbs.grid
    rb = gibbs.rho_edges
    m = gibbs.mass
    dx = grid.dx
    upper = -rb / (dx * m[:-1])
    lower = -rb / (dx * m[1:])
    diag = np.zeros(grid.n)
    diag[:-1] += rb
    diag[1:] += rb
    diag /= dx * m
    return WeightedLaplacian(lower=lower, diag=diag, upper=upper, gibbs=gibbs)

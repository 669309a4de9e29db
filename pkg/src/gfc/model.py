"""Potentials, observables and the Gibbs state on a grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr
from .geometry import Grid, edge_average

KINDS = ("quadratic", "polynomial", "expression", "tabulated")


@dataclass(frozen=True)
class PotentialSpec:
    """A potential ``h`` together with the inverse temperature ``beta``.

    ``params`` depends on ``kind``:

    - quadratic: ``{"mu": mass}`` giving ``h = x^2 / (2 mu)``
    - polynomial: ``{"coefficients": (c0, c1, ...)}`` ascending powers
    - expression: ``{"tree": Node, "text": str}``
    - tabulated: ``{"values": ndarray}`` node values on one specific grid
    """

    kind: str
    params: dict = field(compare=False)
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.kind == "quadratic" and not self.params.get("mu", 0) > 0:
            raise ValueError(f"quadratic potential needs mu > 0, got {self.params.get('mu')}")

    @classmethod
    def quadratic(cls, mu: float = 1.0, beta: float = 1.0) -> "PotentialSpec":
        return cls("quadratic", {"mu": float(mu)}, float(beta))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float], beta: float = 1.0) -> "PotentialSpec":
        return cls("polynomial", {"coefficients": tuple(float(c) for c in coefficients)}, float(beta))

    @classmethod
    def tabulated(cls, values, beta: float = 1.0) -> "PotentialSpec":
        values = np.array(values, dtype=float)
        values.flags.writeable = False
        return cls("tabulated", {"values": values}, float(beta))

    @property
    def mu(self) -> float:
        return self.params["mu"]

    def values(self, grid: Grid) -> np.ndarray:
        """Node values of ``h`` on ``grid``; must be finite everywhere."""
        if self.kind == "tabulated":
            h = self.params["values"]
            if h.shape != (grid.n,):
                raise ValueError(f"tabulated potential has {h.size} values, grid has {grid.n} nodes")
            h = np.array(h)
        else:
            h = self(grid.x)
        if not np.all(np.isfinite(h)):
            bad = int(np.flatnonzero(~np.isfinite(h))[0])
            raise ValueError(f"potential is not finite at x = {grid.x[bad]!r}")
        return h

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return x * x / (2.0 * self.mu)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(x, self.params["coefficients"])
        if self.kind == "expression":
            return expr.evaluate(self.params["tree"], x)
        raise ValueError("tabulated potentials are only defined at their grid nodes")

    def with_beta(self, beta: float) -> "PotentialSpec":
        return PotentialSpec(self.kind, self.params, float(beta))


def parse_potential(text: str, beta: float = 1.0) -> PotentialSpec:
    tree = expr.parse(text)
    return PotentialSpec("expression", {"tree": tree, "text": text}, float(beta))


@dataclass(frozen=True)
class ObservableSet:
    names: tuple[str, ...]
    values: np.ndarray  # shape (n_observables, n_nodes)

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[0] < 1 or vals.shape[0] != len(self.names):
            raise ValueError("need one name per observable and at least one observable")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observables must be finite on the grid")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_expressions(cls, texts: Sequence[str], grid: Grid) -> "ObservableSet":
        values = [np.broadcast_to(expr.evaluate(expr.parse(t), grid.x), grid.x.shape) for t in texts]
        return cls(tuple(texts), np.array(values))

    def __len__(self) -> int:
        return self.values.shape[0]

    def dot(self, q) -> np.ndarray:
        """Node values of ``q . B``."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (len(self),):
            raise ValueError(f"q has {q.size} components but there are {len(self)} observables")
        return q @ self.values


@dataclass(frozen=True, eq=False)
class GibbsState:
    """Normalised Gibbs weight ``rho = exp(-beta h) / Z`` tabulated on a grid.

    ``rho`` is renormalised so that the trapezoid mass is one to round-off.
    ``log_Z`` is kept alongside ``Z`` because ``Z`` itself may overflow.
    """

    grid: Grid
    h: np.ndarray
    beta: float
    rho: np.ndarray
    log_Z: float
    potential: PotentialSpec | None = None

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))

    @cached_property
    def rho_edges(self) -> np.ndarray:
        return edge_average(self.rho)

    @cached_property
    def mass(self) -> np.ndarray:
        """Diagonal of the 0-form Gram matrix, ``w_i rho_i``."""
        return self.grid.weights * self.rho

    def total_mass(self) -> float:
        return float(np.sum(self.mass))


def gibbs_state(potential: PotentialSpec, grid: Grid) -> GibbsState:
    h = potential.values(grid)
    beta = potential.beta
    h_min = float(h.min())
    boltz = np.exp(-beta * (h - h_min))
    Z_shift = float(np.sum(grid.weights * boltz))
    if not Z_shift > 0 or not np.isfinite(Z_shift):
        raise ValueError("partition function vanished or overflowed")
    rho = boltz / Z_shift
    if np.any(rho <= 0):
        bad = int(np.flatnonzero(rho <= 0)[0])
        raise ValueError(
            f"Gibbs weight underflows to zero at x = {grid.x[bad]!r}; shrink the domain"
        )
    rho = rho / np.sum(grid.weights * rho)
    rho.flags.writeable = False
    h.flags.writeable = False
    log_Z = float(np.log(Z_shift) - beta * h_min)
    return GibbsState(grid=grid, h=h, beta=beta, rho=rho, log_Z=log_Z, potential=potential)


def tilt(potential: PotentialSpec, q, B: ObservableSet, grid: Grid) -> PotentialSpec:
    """Tabulated ``h - (q . B) / beta``: the potential seen under applied fields ``q``."""
    qB = B.dot(q)
    if qB.shape != (grid.n,):
        raise ValueError("observables are not tabulated on this grid")
    return PotentialSpec.tabulated(potential.values(grid) - qB / potential.beta, potential.beta)

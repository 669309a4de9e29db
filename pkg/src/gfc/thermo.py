"""Moment generating functions and the thermodynamic readouts of a state."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import StateField
from .geometry import Grid
from .model import GibbsState, ObservableSet


@dataclass(frozen=True)
class ThermoPoint:
    """Point ``(p, q, z)`` of the contact manifold."""

    p: np.ndarray
    q: np.ndarray
    z: float

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if p.shape != q.shape:
            raise ValueError(f"p and q must have the same length, got {p.size} and {q.size}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q)) and np.isfinite(self.z)):
            raise ValueError("contact point has non-finite entries")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "z", float(self.z))

    @property
    def dim(self) -> int:
        return self.q.size

    def to_vector(self) -> np.ndarray:
        """Packed as ``(q, p, z)``."""
        return np.concatenate((self.q, self.p, [self.z]))

    @classmethod
    def from_vector(cls, v) -> "ThermoPoint":
        v = np.asarray(v, dtype=float)
        n = (v.size - 1) // 2
        return cls(p=v[n : 2 * n], q=v[:n], z=v[-1])


@dataclass(frozen=True)
class PsiG:
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


def _tilted_weights(q, B: ObservableSet, base: np.ndarray, weights: np.ndarray):
    """Return ``(shift, u)`` with ``weights * base * exp(q.B) = exp(shift) * u``.

    ``base`` must be positive; entries where it is zero or negative keep their
    sign through ``u`` and do not take part in the shift.
    """
    qB = B.dot(q)
    pos = base > 0
    logs = np.full(base.shape, -np.inf)
    logs[pos] = qB[pos] + np.log(base[pos])
    shift = float(np.max(logs)) if np.any(pos) else 0.0
    with np.errstate(over="ignore", under="ignore"):
        u = weights * base * np.exp(qB - shift)
    if not np.all(np.isfinite(u)):
        raise OverflowError("exp(q.B) overflows on this grid even after rescaling")
    return shift, u


def _scale(shift: float, x):
    with np.errstate(over="raise"):
        try:
            out = np.exp(shift) * np.asarray(x, dtype=float)
        except FloatingPointError as exc:
            raise OverflowError("moment generating function overflows") from exc
    if not np.all(np.isfinite(out)):
        raise OverflowError("moment generating function overflows")
    return out


def psi_G(q, B: ObservableSet, gibbs: GibbsState, order: int = 0) -> PsiG:
    """``<exp(q.B), 1>_G`` and, for ``order >= 1``/``2``, its gradient and Hessian."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    shift, u = _tilted_weights(q, B, gibbs.rho, gibbs.grid.weights)
    value = float(_scale(shift, np.sum(u)))
    grad = hess = None
    if order >= 1:
        grad = _scale(shift, B.values @ u)
    if order == 2:
        hess = _scale(shift, (B.values * u) @ B.values.T)
    return PsiG(value, grad, hess)


def moment_observables(state: StateField, q, B: ObservableSet) -> tuple[float, np.ndarray]:
    """``z = <Phi, e^{q.B}>_G`` and ``p_j = <Phi, B_j e^{q.B}>_G``."""
    g = state.gibbs
    shift, u = _tilted_weights(q, B, g.rho, g.grid.weights)
    u = u * state.phi
    return float(_scale(shift, np.sum(u))), _scale(shift, B.values @ u)


def legendrian(q, B: ObservableSet, gibbs: GibbsState) -> ThermoPoint:
    psi = psi_G(q, B, gibbs, order=1)
    return ThermoPoint(p=psi.gradient, q=q, z=psi.value)


def expectation(state, observable, grid: Grid | None = None) -> float:
    """``sum_i w_i B(x_i) rho_i`` for a `StateField` or a density array on ``grid``."""
    if isinstance(state, StateField):
        grid = state.gibbs.grid
        rho = state.gibbs.rho * state.phi
    else:
        if grid is None:
            raise ValueError("a bare density needs its grid")
        rho = np.asarray(state, dtype=float)
    b = np.asarray(observable, dtype=float)
    if b.shape != (grid.n,) or rho.shape != (grid.n,):
        raise ValueError("observable and density must be tabulated on the same grid")
    return float(np.sum(grid.weights * b * rho))


def psi_table_csv(qs: Sequence, B: ObservableSet, gibbs: GibbsState) -> str:
    n = len(B)
    header = [f"q_{j + 1}" for j in range(n)] + ["psi"]
    header += [f"grad_{j + 1}" for j in range(n)] + [f"hess_eig_{j + 1}" for j in range(n)]
    lines = [",".join(header)]
    for q in qs:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        r = psi_G(q, B, gibbs, order=2)
        eig = np.linalg.eigvalsh(r.hessian)
        row = list(q) + [r.value] + list(r.gradient) + list(eig)
        lines.append(",".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"

"""Time evolution of the transformed state ``Phi_t = rho_t / rho_G``.

Two independent routes are provided: exact propagation of eigenfunction
coefficients and a conservative Crank-Nicolson stepper on the same grid.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .geometry import WeightedLaplacian, d, inner_G
from .model import GibbsState
from .spectral import Spectrum

RHO_CUTOFF = 1e-300
_MASS_SKIP = 1e-14


class NegativeTimeWarning(RuntimeWarning):
    """Backward propagation amplifies every non-constant mode."""


@dataclass(frozen=True, eq=False)
class StateField:
    phi: np.ndarray
    gibbs: GibbsState
    t: float = 0.0

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (self.gibbs.grid.n,):
            raise ValueError(f"state has shape {phi.shape}, grid has {self.gibbs.grid.n} nodes")
        object.__setattr__(self, "phi", phi)

    @property
    def mass(self) -> float:
        return float(np.sum(self.gibbs.mass * self.phi))


@dataclass(frozen=True, eq=False)
class ModeCoefficients:
    a: np.ndarray
    spectrum: Spectrum
    t: float = 0.0
    residual: float = float("nan")  # reconstruction residual from `expand`

    @property
    def beta(self) -> float:
        return self.spectrum.gibbs.beta

    @property
    def rates(self) -> np.ndarray:
        return self.spectrum.eigenvalues / self.beta


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    mass: float
    lyapunov: float
    free_energy: float
    entropy: float
    energy: float


def expand(state: StateField, spec: Spectrum) -> ModeCoefficients:
    """Coefficients ``a^s = <Phi, phi_s>_G`` plus the residual of the truncated sum."""
    m = spec.gibbs.mass
    a = spec.modes @ (m * state.phi)
    rest = state.phi - a @ spec.modes
    residual = float(np.sqrt(np.sum(m * rest * rest)))
    return ModeCoefficients(a=a, spectrum=spec, t=state.t, residual=residual)


def advance(coeffs: ModeCoefficients, t: float) -> ModeCoefficients:
    """Coefficients after an extra time ``t``: ``a^s exp(-lambda_s t / beta)``."""
    if t < 0:
        warnings.warn(f"propagating backwards by {-t}", NegativeTimeWarning, stacklevel=2)
    a = coeffs.a * np.exp(-coeffs.rates * t)
    return replace(coeffs, a=a, t=coeffs.t + t)


def reconstruct(coeffs: ModeCoefficients) -> StateField:
    return StateField(coeffs.a @ coeffs.spectrum.modes, coeffs.spectrum.gibbs, coeffs.t)


def propagate(coeffs: ModeCoefficients, t: float) -> StateField:
    return reconstruct(advance(coeffs, t))


def project_slowest(coeffs: ModeCoefficients, group: Sequence[int]) -> ModeCoefficients:
    group = tuple(group)
    if not group:
        raise ValueError("slowest-mode group is empty")
    if 0 in group:
        raise ValueError("the constant mode cannot belong to the slowest group")
    keep = np.zeros(coeffs.a.size, dtype=bool)
    keep[0] = True
    keep[list(group)] = True
    return replace(coeffs, a=np.where(keep, coeffs.a, 0.0))


def slowest_field(coeffs: ModeCoefficients, group: Sequence[int], t: float = 0.0) -> StateField:
    """``1 + sum_{s in group} a_t^s phi_s`` with the constant taken exactly."""
    at = advance(coeffs, t)
    idx = list(group)
    phi = 1.0 + at.a[idx] @ at.spectrum.modes[idx]
    return StateField(phi, coeffs.spectrum.gibbs, at.t)


def _cn_matrices(lap: WeightedLaplacian, dt: float):
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    c = 0.5 * dt / lap.gibbs.beta
    return c, lap.banded(shift=1.0, scale=c)


def _cn_solve(ab, rhs):
    try:
        out = solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("Crank-Nicolson system is singular") from exc
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("Crank-Nicolson step produced non-finite values")
    return out


def step_crank_nicolson(state: StateField, dt: float, lap: WeightedLaplacian) -> StateField:
    """One step of ``(I + dt/(2 beta) A) Phi+ = (I - dt/(2 beta) A) Phi``."""
    c, ab = _cn_matrices(lap, dt)
    rhs = state.phi - c * lap.apply(state.phi)
    return StateField(_cn_solve(ab, rhs), state.gibbs, state.t + dt)


def crank_nicolson(
    state: StateField,
    lap: WeightedLaplacian,
    dt: float,
    t_final: float,
    checkpoints: int = 101,
) -> list[StateField]:
    """States at ``checkpoints`` equally spaced times in ``[t0, t0 + t_final]``.

    Every checkpoint must land on a whole number of steps.
    """
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    c, ab = _cn_matrices(lap, dt)
    steps = int(round(t_final / dt))
    if abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError(f"t_final {t_final} is not a multiple of dt {dt}")
    if checkpoints < 1:
        raise ValueError("need at least one checkpoint")
    marks = np.linspace(0, steps, checkpoints) if checkpoints > 1 else np.array([steps])
    if np.any(np.abs(marks - np.round(marks)) > 1e-9):
        raise ValueError(f"{checkpoints} checkpoints do not fall on whole steps of {steps}")
    marks = set(int(round(m)) for m in marks)
    out = []
    phi = state.phi.copy()
    if 0 in marks:
        out.append(StateField(phi.copy(), state.gibbs, state.t))
    for i in range(1, steps + 1):
        phi = _cn_solve(ab, phi - c * lap.apply(phi))
        if i in marks:
            out.append(StateField(phi.copy(), state.gibbs, state.t + i * dt))
    return out


def lyapunov(state: StateField) -> float:
    dphi = d(state.phi, state.gibbs.grid)
    return 0.5 * state.gibbs.beta * inner_G(dphi, dphi, state.gibbs)


def _renormalize(rho: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, float]:
    mass = float(np.sum(weights * rho))
    if abs(mass - 1.0) <= _MASS_SKIP:
        return rho, 0.0
    if not mass > 0:
        raise ValueError(f"total mass {mass} is not positive")
    return rho / mass, mass - 1.0


def density(state: StateField) -> tuple[np.ndarray, float]:
    """``rho = rho_G Phi`` with unit mass, and the mass correction that was removed."""
    g = state.gibbs
    return _renormalize(g.rho * state.phi, g.grid.weights)


def ground_state_transform(rho, gibbs: GibbsState, t: float = 0.0) -> tuple[StateField, float]:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (gibbs.grid.n,):
        raise ValueError(f"density has shape {rho.shape}, grid has {gibbs.grid.n} nodes")
    if np.any(rho <= 0):
        bad = int(np.flatnonzero(rho <= 0)[0])
        raise ValueError(f"density is not positive at x = {gibbs.grid.x[bad]!r}")
    rho, corr = _renormalize(rho, gibbs.grid.weights)
    return StateField(rho / gibbs.rho, gibbs, t), corr


def free_energy(state: StateField) -> tuple[float, float, float]:
    """``(F, S, H)`` with ``S = -sum w rho ln rho``, ``H = sum w h rho``, ``F = S / beta - H``."""
    g = state.gibbs
    rho = g.rho * state.phi
    neg = (rho < 0) & (g.rho > RHO_CUTOFF)
    if np.any(neg):
        bad = int(np.flatnonzero(neg)[0])
        raise ValueError(f"negative density at x = {g.grid.x[bad]!r}")
    w = g.grid.weights
    live = rho >= RHO_CUTOFF
    S = -float(np.sum(w[live] * rho[live] * np.log(rho[live])))
    H = float(np.sum(w * g.h * rho))
    return S / g.beta - H, S, H


def sample(state: StateField) -> TrajectorySample:
    F, S, H = free_energy(state)
    return TrajectorySample(state.t, state.mass, lyapunov(state), F, S, H)


def _weyl(count: int) -> np.ndarray:
    # deterministic values in (-1, 1); no RNG in the product path
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    return 2.0 * np.mod(np.arange(1, count + 1) * golden, 1.0) - 1.0


def band_limited(
    spec: Spectrum,
    n_modes: int = 8,
    amplitude: float = 0.5,
    weights: Sequence[float] | None = None,
) -> StateField:
    """``1 + sum_{s=1}^{n_modes-1} a^s phi_s`` with ``|a^s| ||phi_s||_inf <= amplitude / n_modes``.

    Keeps ``Phi`` strictly positive for ``amplitude < 1``.  ``weights`` in
    ``[-1, 1]`` replace the built-in deterministic sequence.
    """
    if not 2 <= n_modes <= spec.k:
        raise ValueError(f"n_modes must lie in [2, {spec.k}]")
    u = _weyl(n_modes - 1) if weights is None else np.asarray(weights, dtype=float)
    if u.shape != (n_modes - 1,) or np.any(np.abs(u) > 1):
        raise ValueError(f"need {n_modes - 1} weights in [-1, 1]")
    sup = np.max(np.abs(spec.modes[1:n_modes]), axis=1)
    a = amplitude * u / (n_modes * sup)
    phi = np.ones(spec.gibbs.grid.n) + a @ spec.modes[1:n_modes]
    return StateField(phi, spec.gibbs)

"""Contact Hamiltonian dynamics in canonical coordinates ``(q, p, z)``.

With contact form ``dz - p dq`` the Hamiltonian vector field reads

    q' = -dH/dp,   p' = dH/dq + p dH/dz,   z' = H - p . dH/dp.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .evolution import ModeCoefficients, StateField, expand, project_slowest, slowest_field
from .geometry import inner_G
from .model import GibbsState, ObservableSet
from .spectral import Spectrum, slow_group
from .thermo import ThermoPoint, legendrian, moment_observables, psi_G

ScalarField = Callable[[np.ndarray], tuple[float, np.ndarray]]  # q -> (value, gradient)


@dataclass(frozen=True)
class Tangent:
    qdot: np.ndarray
    pdot: np.ndarray
    zdot: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.qdot, self.pdot, [self.zdot]))

    def norm(self) -> float:
        return float(np.max(np.abs(self.to_vector())))


class ContactHamiltonian(Protocol):
    def value(self, pt: ThermoPoint) -> float: ...

    def partials(self, pt: ThermoPoint) -> tuple[np.ndarray, np.ndarray, float]:
        """``(dH/dp, dH/dq, dH/dz)``."""
        ...


class _QCache:
    # q is constant along these flows, so expensive q-functions are memoised
    def __init__(self, fn: ScalarField):
        self.fn = fn
        self._store: dict[bytes, tuple[float, np.ndarray]] = {}

    def __call__(self, q) -> tuple[float, np.ndarray]:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        key = q.tobytes()
        if key not in self._store:
            v, g = self.fn(q)
            self._store[key] = (float(v), np.atleast_1d(np.asarray(g, dtype=float)))
        return self._store[key]


@dataclass
class RelaxationHamiltonian:
    """``H = gamma (psi(q) - z)``."""

    gamma: float
    psi: ScalarField

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("relaxation rate must be positive")
        self.psi = _QCache(self.psi)

    def value(self, pt: ThermoPoint) -> float:
        return self.gamma * (self.psi(pt.q)[0] - pt.z)

    def partials(self, pt):
        _, grad = self.psi(pt.q)
        return np.zeros(pt.dim), self.gamma * grad, -self.gamma


@dataclass
class TiltedHamiltonian:
    """``H = lambda1(q) (psi(q) - z) / beta`` with a q-dependent rate."""

    beta: float
    lambda1: ScalarField
    psi: ScalarField

    def __post_init__(self):
        self.lambda1 = _QCache(self.lambda1)
        self.psi = _QCache(self.psi)

    def value(self, pt: ThermoPoint) -> float:
        lam, _ = self.lambda1(pt.q)
        return lam * (self.psi(pt.q)[0] - pt.z) / self.beta

    def partials(self, pt):
        lam, dlam = self.lambda1(pt.q)
        psi, dpsi = self.psi(pt.q)
        dq = (dlam * (psi - pt.z) + lam * dpsi) / self.beta
        return np.zeros(pt.dim), dq, -lam / self.beta


@dataclass
class GeneralHamiltonian:
    """Arbitrary ``H(p, q, z)``; partials by central differences."""

    func: Callable[[np.ndarray, np.ndarray, float], float]
    rel_step: float = 1e-6

    def value(self, pt: ThermoPoint) -> float:
        return float(self.func(pt.p, pt.q, pt.z))

    def _diff(self, v: np.ndarray, at: Callable[[np.ndarray], float]) -> np.ndarray:
        out = np.empty(v.size)
        for j in range(v.size):
            h = self.rel_step * (1.0 + abs(v[j]))
            up = v.copy()
            dn = v.copy()
            up[j] += h
            dn[j] -= h
            out[j] = (at(up) - at(dn)) / (2.0 * h)
        return out

    def partials(self, pt):
        f = self.func
        dp = self._diff(pt.p, lambda p: f(p, pt.q, pt.z))
        dq = self._diff(pt.q, lambda q: f(pt.p, q, pt.z))
        dz = self._diff(np.array([pt.z]), lambda z: f(pt.p, pt.q, z[0]))[0]
        return dp, dq, float(dz)


def vector_field(H: ContactHamiltonian, pt: ThermoPoint) -> Tangent:
    dp, dq, dz = H.partials(pt)
    if not (np.all(np.isfinite(dp)) and np.all(np.isfinite(dq)) and np.isfinite(dz)):
        raise ArithmeticError(f"non-finite partial derivatives of H at q = {pt.q.tolist()}")
    return Tangent(qdot=-dp, pdot=dq + pt.p * dz, zdot=H.value(pt) - float(pt.p @ dp))


def tilted_contact_field(
    beta: float,
    lam1: float,
    dlam1,
    psi_value: float,
    psi_grad,
    pt: ThermoPoint,
) -> Tangent:
    """Field of the tilted Hamiltonian from precomputed ``lambda~_1``, its gradient and ``psi_G`` data."""
    if not lam1 > 0:
        raise ValueError("tilted lambda_1 must be positive")
    dlam1 = np.atleast_1d(np.asarray(dlam1, dtype=float))
    psi_grad = np.atleast_1d(np.asarray(psi_grad, dtype=float))
    gap = psi_value - pt.z
    pdot = lam1 * (psi_grad - pt.p) / beta + dlam1 * gap / beta
    return Tangent(np.zeros(pt.dim), pdot, lam1 * gap / beta)


def flow_closed_form(pt0: ThermoPoint, gamma: float, psi_value: float, psi_grad, t: float) -> ThermoPoint:
    """Exact relaxation flow: ``p`` and ``z`` approach ``(grad psi, psi)`` at rate ``gamma``."""
    if t < 0:
        raise ValueError("closed-form flow is only used forward in time")
    decay = np.exp(-gamma * t)
    psi_grad = np.atleast_1d(np.asarray(psi_grad, dtype=float))
    # weighted-average form returns pt0 bit-for-bit at t = 0
    return ThermoPoint(
        p=pt0.p * decay + psi_grad * (1.0 - decay),
        q=pt0.q,
        z=pt0.z * decay + psi_value * (1.0 - decay),
    )


def _rk4(f: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, dt: float, steps: int) -> np.ndarray:
    ys = np.empty((steps + 1, y0.size))
    ys[0] = y = y0
    for i in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * dt * k1)
        k3 = f(y + 0.5 * dt * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise ArithmeticError(f"integration blew up at step {i + 1}")
        ys[i + 1] = y
    return ys


@dataclass(frozen=True, eq=False)
class ContactTrajectory:
    t: np.ndarray
    q: np.ndarray  # (samples, n)
    p: np.ndarray
    z: np.ndarray
    H: np.ndarray

    def point(self, i: int) -> ThermoPoint:
        return ThermoPoint(self.p[i], self.q[i], self.z[i])

    def to_csv(self) -> str:
        n = self.q.shape[1]
        head = ["t"] + [f"q_{j + 1}" for j in range(n)] + [f"p_{j + 1}" for j in range(n)] + ["z", "H"]
        rows = [",".join(head)]
        for i in range(self.t.size):
            vals = [self.t[i], *self.q[i], *self.p[i], self.z[i], self.H[i]]
            rows.append(",".join(format(float(v), ".17g") for v in vals))
        return "\n".join(rows) + "\n"


def _trajectory(H: ContactHamiltonian, t: np.ndarray, states: np.ndarray) -> ContactTrajectory:
    pts = [ThermoPoint.from_vector(v) for v in states]
    n = pts[0].dim
    return ContactTrajectory(
        t=t,
        q=states[:, :n].copy(),
        p=states[:, n : 2 * n].copy(),
        z=states[:, -1].copy(),
        H=np.array([H.value(pt) for pt in pts]),
    )


def flow_rk4(H: ContactHamiltonian, pt0: ThermoPoint, dt: float, steps: int) -> ContactTrajectory:
    """Classical fourth-order Runge-Kutta with fixed step ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ys = _rk4(lambda y: vector_field(H, ThermoPoint.from_vector(y)).to_vector(), pt0.to_vector(), dt, steps)
    return _trajectory(H, dt * np.arange(steps + 1), ys)


def closed_form_trajectory(
    pt0: ThermoPoint, gamma: float, psi_value: float, psi_grad, times
) -> ContactTrajectory:
    H = RelaxationHamiltonian(gamma, lambda q: (psi_value, psi_grad))
    pts = [flow_closed_form(pt0, gamma, psi_value, psi_grad, t) for t in times]
    return _trajectory(H, np.asarray(times, dtype=float), np.array([p.to_vector() for p in pts]))


def psi_field(B: ObservableSet, gibbs: GibbsState) -> ScalarField:
    def psi(q):
        r = psi_G(q, B, gibbs, order=1)
        return r.value, r.gradient

    return psi


@dataclass
class EquivalenceReport:
    q: np.ndarray
    gamma: float
    times: np.ndarray
    z_fp: np.ndarray
    p_fp: np.ndarray
    z_contact: np.ndarray
    p_contact: np.ndarray
    legendrian_point: ThermoPoint
    initial_offset: float
    final_distance: float
    group: tuple[int, ...]
    tolerance: float = 1e-10
    extra: dict = field(default_factory=dict)

    @property
    def max_z_discrepancy(self) -> float:
        return float(np.max(np.abs(self.z_fp - self.z_contact)))

    @property
    def max_p_discrepancy(self) -> float:
        return float(np.max(np.abs(self.p_fp - self.p_contact)))

    @property
    def legendrian_bound(self) -> float:
        leg = self.legendrian_point
        floor = 1e-14 * (1.0 + abs(leg.z) + float(np.max(np.abs(leg.p))))  # cancellation in z - psi
        return self.initial_offset * np.exp(-self.gamma * (self.times[-1] - self.times[0])) * (1 + 1e-6) + floor

    @property
    def passed(self) -> bool:
        return bool(
            self.max_z_discrepancy <= self.tolerance
            and self.max_p_discrepancy <= self.tolerance
            and self.final_distance <= self.legendrian_bound
        )

    def to_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "gamma_1": self.gamma,
            "slow_group": list(self.group),
            "samples": int(self.times.size),
            "t_final": float(self.times[-1]),
            "max_z_discrepancy": self.max_z_discrepancy,
            "max_p_discrepancy": self.max_p_discrepancy,
            "tolerance": self.tolerance,
            "legendrian": {"p": self.legendrian_point.p.tolist(), "z": self.legendrian_point.z},
            "initial_offset": self.initial_offset,
            "final_distance_to_legendrian": self.final_distance,
            "legendrian_bound": self.legendrian_bound,
            "pass": self.passed,
            **self.extra,
        }


def _distance(a: ThermoPoint, b: ThermoPoint) -> float:
    return float(np.sqrt(np.sum((a.p - b.p) ** 2) + (a.z - b.z) ** 2))


def equivalence_check(
    spec: Spectrum,
    B: ObservableSet,
    q,
    phi0: StateField | ModeCoefficients,
    times: Sequence[float],
    tolerance: float = 1e-10,
) -> EquivalenceReport:
    """Compare slowest-mode moments of the diffusion with the relaxation contact flow."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    times = np.asarray(times, dtype=float)
    gibbs = spec.gibbs
    coeffs = phi0 if isinstance(phi0, ModeCoefficients) else expand(phi0, spec)
    group = slow_group(spec)
    coeffs = project_slowest(coeffs, group)
    fp = [moment_observables(slowest_field(coeffs, group, t), q, B) for t in times]
    z_fp = np.array([z for z, _ in fp])
    p_fp = np.array([p for _, p in fp])

    gamma = float(spec.eigenvalues[group[0]] / gibbs.beta)
    leg = legendrian(q, B, gibbs)  # one quadrature shared by both sides
    start = ThermoPoint(p=p_fp[0], q=q, z=z_fp[0])
    traj = closed_form_trajectory(start, gamma, leg.z, leg.p, times - times[0])
    end = traj.point(-1)
    return EquivalenceReport(
        q=q,
        gamma=gamma,
        times=times,
        z_fp=z_fp,
        p_fp=p_fp,
        z_contact=traj.z,
        p_contact=traj.p,
        legendrian_point=leg,
        initial_offset=_distance(start, leg),
        final_distance=_distance(end, leg),
        group=group,
        tolerance=tolerance,
    )


@dataclass
class AltZReport:
    times: np.ndarray
    energy_ode: np.ndarray
    energy_quadrature: np.ndarray
    energy_equilibrium: float
    free_energy_residual: np.ndarray

    @property
    def energy_discrepancy(self) -> float:
        return float(np.max(np.abs(self.energy_ode - self.energy_quadrature)))

    def to_dict(self) -> dict:
        return {
            "energy_equilibrium": self.energy_equilibrium,
            "max_energy_discrepancy": self.energy_discrepancy,
            "free_energy_residual": [float(r) for r in self.free_energy_residual],
            "times": [float(t) for t in self.times],
        }


def alt_z_flows(spec: Spectrum, phi0: StateField | ModeCoefficients, times: Sequence[float], dt: float = 1e-3) -> AltZReport:
    """Energy and free-energy choices of ``z`` along the slowest-mode trajectory.

    The energy choice ``z = <Phi, h>_G`` closes: ``z' = -gamma (z - <1, h>_G)``,
    integrated here with RK4 and compared against direct quadrature.  The
    free-energy choice leaves the extra term ``<1, ln Phi>_G / beta``, reported
    as a residual.
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be nonnegative and increasing")
    gibbs = spec.gibbs
    coeffs = phi0 if isinstance(phi0, ModeCoefficients) else expand(phi0, spec)
    group = slow_group(spec)
    gamma = float(spec.eigenvalues[group[0]] / gibbs.beta)
    ones = np.ones(gibbs.grid.n)
    e_eq = inner_G(ones, gibbs.h, gibbs)

    fields = [slowest_field(coeffs, group, t) for t in times]
    quad = np.array([inner_G(f.phi, gibbs.h, gibbs) for f in fields])

    ode = np.empty(times.size)
    z = quad[0]
    t_now = 0.0
    rhs = lambda y: -gamma * (y - e_eq)  # noqa: E731
    for i, t in enumerate(times):
        span = t - t_now
        steps = int(np.ceil(span / dt - 1e-9)) if span > 0 else 0
        if steps:
            z = _rk4(rhs, np.array([z]), span / steps, steps)[-1, 0]
        ode[i] = z
        t_now = t

    resid = np.empty(times.size)
    for i, f in enumerate(fields):
        if np.any(f.phi <= 0):
            bad = int(np.flatnonzero(f.phi <= 0)[0])
            raise ValueError(
                f"slowest-mode state is not positive at x = {gibbs.grid.x[bad]!r}, t = {times[i]!r}"
            )
        resid[i] = inner_G(ones, np.log(f.phi), gibbs) / gibbs.beta
    return AltZReport(times, ode, quad, e_eq, resid)


def paired_differences(
    tilted: TiltedHamiltonian,
    relaxed: RelaxationHamiltonian,
    pt0: ThermoPoint,
    dt: float,
    steps: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``|z'~ - z'|`` and ``max_j |p'~_j - p'_j|`` along flows started from the same point."""
    a = flow_rk4(tilted, pt0, dt, steps)
    b = flow_rk4(relaxed, pt0, dt, steps)
    dz = np.empty(a.t.size)
    dp = np.empty(a.t.size)
    for i in range(a.t.size):
        fa = vector_field(tilted, a.point(i))
        fb = vector_field(relaxed, b.point(i))
        dz[i] = abs(fa.zdot - fb.zdot)
        dp[i] = float(np.max(np.abs(fa.pdot - fb.pdot)))
    return a.t, dz, dp

"""Low-lying eigenpairs of the weighted Laplacian.

The tridiagonal matrix ``A`` is similar to the symmetric matrix
``S = D^{1/2} A D^{-1/2}`` with ``D = diag(w rho)``.  LAPACK's tridiagonal
solver handles ``S``; mapping back through ``D^{-1/2}`` amplifies round-off
in the low-weight tails, so each mode gets a few steps of shifted inverse
iteration on ``A`` itself followed by Gram-Schmidt in the weighted inner
product.  Eigenvalues are then Rayleigh quotients of the refined modes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .geometry import Grid, WeightedLaplacian, laplacian_G
from .model import ObservableSet, PotentialSpec, gibbs_state, tilt

log = logging.getLogger(__name__)

DEGENERACY_RTOL = 1e-8
LAMBDA_FLOOR = 1e-14
GAP_MIN = 1e-10
_SIGN_TIE_RTOL = 1e-6
_MAX_REFINE = 4


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    modes: np.ndarray  # (k, n), row s is phi_s
    residuals: np.ndarray
    gram_residual: float
    degeneracy_groups: tuple[tuple[int, ...], ...]
    laplacian: WeightedLaplacian

    @property
    def gibbs(self):
        return self.laplacian.gibbs

    @property
    def k(self) -> int:
        return self.eigenvalues.size

    def rayleigh(self) -> np.ndarray:
        """``<d phi_s, d phi_s>_G`` for every mode."""
        g = self.gibbs
        dphi = np.diff(self.modes, axis=1) / g.grid.dx
        return np.sum(g.grid.dx * g.rho_edges * dphi * dphi, axis=1)


def _gram(modes: np.ndarray, mass: np.ndarray) -> np.ndarray:
    return (modes * mass) @ modes.T


def _fix_sign(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    top = a.max()
    # near-ties (e.g. odd modes on a symmetric grid) resolve to the rightmost node
    idx = np.flatnonzero(a >= top * (1.0 - _SIGN_TIE_RTOL))[-1]
    return -v if v[idx] < 0 else v


def _group(eigenvalues: np.ndarray, rel_tol: float) -> tuple[tuple[int, ...], ...]:
    groups: list[list[int]] = []
    for s, lam in enumerate(eigenvalues):
        if groups:
            ref = eigenvalues[groups[-1][0]]
            if abs(lam - ref) <= rel_tol * max(abs(ref), LAMBDA_FLOOR):
                groups[-1].append(s)
                continue
        groups.append([s])
    return tuple(tuple(g) for g in groups)


def _orthonormalize(modes: np.ndarray, mass: np.ndarray) -> np.ndarray:
    out = np.empty_like(modes)
    for s in range(modes.shape[0]):
        v = modes[s].copy()
        for _ in range(2):  # twice is enough
            for r in range(s):
                v -= np.sum(mass * out[r] * v) * out[r]
        out[s] = v / np.sqrt(np.sum(mass * v * v))
    return out


def eigendecompose(
    lap: WeightedLaplacian,
    k: int = 32,
    tol: float = 1e-8,
    rel_tol: float = DEGENERACY_RTOL,
) -> Spectrum:
    """The ``k`` smallest eigenpairs of ``lap``, orthonormal in ``<.,.>_G``."""
    n = lap.n
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n = {n}, got k = {k}")
    if not tol > 0:
        raise ValueError("tol must be positive")
    mass = lap.gibbs.mass
    diag, off = lap.symmetric()
    lam, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    modes = (vecs / np.sqrt(mass)[:, None]).T.copy()
    modes = _orthonormalize(modes, mass)

    for sweep in range(_MAX_REFINE):
        refined = np.empty_like(modes)
        for s in range(k):
            shift = lam[s] - 1e-10 * max(1.0, abs(lam[s]))
            try:
                y = solve_banded((1, 1), lap.banded(shift=-shift), modes[s])
            except np.linalg.LinAlgError:
                y = modes[s]
            if not np.all(np.isfinite(y)):
                y = modes[s]
            refined[s] = y
        modes = _orthonormalize(refined, mass)
        applied = np.array([lap.apply(m) for m in modes])
        lam = np.sum(mass * applied * modes, axis=1)
        resid_vec = applied - lam[:, None] * modes
        residuals = np.sqrt(np.sum(mass * resid_vec * resid_vec, axis=1))
        if np.all(residuals <= tol):
            break
    else:
        worst = int(np.argmax(residuals))
        raise RuntimeError(
            f"eigenpair {worst} did not converge: residual {residuals[worst]:.3e} > tol {tol:.3e}"
        )

    order = np.argsort(lam, kind="stable")
    lam, modes, residuals = lam[order], modes[order], residuals[order]
    modes = np.array([_fix_sign(m) for m in modes])
    gram_residual = float(np.max(np.abs(_gram(modes, mass) - np.eye(k))))
    for arr in (lam, modes, residuals):
        arr.flags.writeable = False
    log.debug("eigendecompose: k=%d, lambda_1=%r, gram residual %.2e", k, lam[min(1, k - 1)], gram_residual)
    return Spectrum(
        eigenvalues=lam,
        modes=modes,
        residuals=residuals,
        gram_residual=gram_residual,
        degeneracy_groups=_group(lam, rel_tol),
        laplacian=lap,
    )


def slow_group(spec: Spectrum | Sequence[float], rel_tol: float = DEGENERACY_RTOL) -> tuple[int, ...]:
    """Indices ``s >= 1`` sharing the smallest nonzero eigenvalue."""
    lam = np.asarray(spec.eigenvalues if isinstance(spec, Spectrum) else spec, dtype=float)
    if lam.size < 2:
        raise ValueError("need at least two eigenvalues")
    if lam[1] - lam[0] <= GAP_MIN:
        raise ValueError(
            f"spectral gap {lam[1] - lam[0]:.3e} is indistinguishable from zero; "
            "the slowest mode is not defined"
        )
    scale = rel_tol * max(abs(lam[1]), LAMBDA_FLOOR)
    return tuple(int(s) for s in range(1, lam.size) if abs(lam[s] - lam[1]) <= scale)


def spectrum_for(potential: PotentialSpec, grid: Grid, k: int = 32, tol: float = 1e-8) -> Spectrum:
    return eigendecompose(laplacian_G(gibbs_state(potential, grid)), k=k, tol=tol)


def tilted_spectrum(potential: PotentialSpec, B: ObservableSet, q, grid: Grid, k: int = 3) -> Spectrum:
    return spectrum_for(tilt(potential, q, B, grid), grid, k=k)


def tilted_lambda1(potential: PotentialSpec, B: ObservableSet, q, grid: Grid) -> float:
    """``lambda~_1(q)``, refusing when it is degenerate."""
    spec = tilted_spectrum(potential, B, q, grid)
    lam = spec.eigenvalues
    if len(slow_group(lam)) > 1:
        raise ValueError(f"lambda_1 is degenerate at q = {np.asarray(q).tolist()}; derivative undefined")
    return float(lam[1])


def lambda1_sensitivity(
    potential: PotentialSpec,
    B: ObservableSet,
    q,
    grid: Grid,
    h_step: float = 1e-2,
    parallel: bool = False,
) -> np.ndarray:
    """Central-difference gradient of ``lambda~_1`` with respect to ``q``."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if not h_step > 0:
        raise ValueError("h_step must be positive")
    points = []
    for j in range(q.size):
        e = np.zeros_like(q)
        e[j] = h_step
        points += [q + e, q - e]

    def one(pt):
        return tilted_lambda1(potential, B, pt, grid)

    if parallel:
        with ThreadPoolExecutor() as pool:
            vals = list(pool.map(one, points))
    else:
        vals = [one(p) for p in points]
    vals = np.array(vals).reshape(q.size, 2)
    return (vals[:, 0] - vals[:, 1]) / (2.0 * h_step)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def spectrum_csv(spec: Spectrum, sample_x: Sequence[float] = ()) -> str:
    """CSV text: ``s, lambda, residual`` then mode values at the nodes nearest ``sample_x``."""
    grid = spec.gibbs.grid
    nodes = [grid.nearest(x) for x in sample_x]
    header = ["s", "lambda", "residual"] + [f"phi(x={_fmt(grid.x[i])})" for i in nodes]
    lines = [",".join(header)]
    for s in range(spec.k):
        row = [str(s), _fmt(spec.eigenvalues[s]), _fmt(spec.residuals[s])]
        row += [_fmt(spec.modes[s, i]) for i in nodes]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def rayleigh_residual(spec: Spectrum) -> float:
    return float(np.max(np.abs(spec.rayleigh() - spec.eigenvalues)))


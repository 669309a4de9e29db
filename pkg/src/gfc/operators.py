"""Equivalent formulations of the relaxation operator and the identities linking them.

All unweighted co-derivatives below are `codiff` with no weight, the same
flux-difference code used for the weighted operator.  First derivatives live
on edges; products of two of them are moved to nodes by `node_average`.
"""

from __future__ import annotations

import numpy as np

from .geometry import codiff, d, edge_average, laplacian_G, node_average
from .model import GibbsState

TAGS = ("fp_rhs", "L_beta_h", "delta_W", "D_dagger_D", "li_rhs")


def _dh(gibbs: GibbsState) -> np.ndarray:
    return d(gibbs.h, gibbs.grid)


def fp_rhs(rho, gibbs: GibbsState) -> np.ndarray:
    """Conservative discretisation of ``(rho' / beta + h' rho)'``."""
    grid = gibbs.grid
    rho = np.asarray(rho, dtype=float)
    flux_diff = d(rho, grid) / gibbs.beta
    flux_drift = edge_average(rho) * _dh(gibbs)
    return -codiff(flux_diff, grid) - codiff(flux_drift, grid)


def L_beta_h(phi, gibbs: GibbsState) -> np.ndarray:
    """``beta^{-1} d^dag d Phi + <d Phi, d h>`` with the pairing averaged onto nodes."""
    grid = gibbs.grid
    dphi = d(phi, grid)
    return codiff(dphi, grid) / gibbs.beta + node_average(dphi * _dh(gibbs))


def li_rhs(phi, gibbs: GibbsState) -> np.ndarray:
    return -L_beta_h(phi, gibbs)


def d_W(f, gibbs: GibbsState) -> np.ndarray:
    """``e^{beta h} d (e^{-beta h} f)`` as ``d(rho_G f) / rho_G`` on edges.

    The conjugated form makes ``<d_W f, alpha>_G == <f, d^dag alpha>_G`` hold
    exactly on the grid.
    """
    return d(gibbs.rho * np.asarray(f, dtype=float), gibbs.grid) / gibbs.rho_edges


def delta_W(f, gibbs: GibbsState) -> np.ndarray:
    return codiff(d_W(f, gibbs), gibbs.grid)


def D(phi, gibbs: GibbsState) -> np.ndarray:
    """``e^{-beta h} d (e^{beta h} Phi)`` as ``rho_G d(Phi / rho_G)`` on edges."""
    return gibbs.rho_edges * d(np.asarray(phi, dtype=float) / gibbs.rho, gibbs.grid)


def D_dagger(alpha, gibbs: GibbsState) -> np.ndarray:
    """Unweighted adjoint of `D`: ``rho_G^{-1} d^dag (rho_G alpha)``."""
    return codiff(gibbs.rho_edges * np.asarray(alpha, dtype=float), gibbs.grid) / gibbs.rho


def D_dagger_D(phi, gibbs: GibbsState) -> tuple[np.ndarray, np.ndarray]:
    """``D^dag D Phi`` computed directly and from its expansion.

    The expansion is ``d^dag d Phi + beta Phi d^dag d h + beta^2 Phi |dh|^2``.
    """
    grid = gibbs.grid
    phi = np.asarray(phi, dtype=float)
    beta = gibbs.beta
    dh = _dh(gibbs)
    direct = D_dagger(D(phi, gibbs), gibbs)
    expanded = (
        codiff(d(phi, grid), grid)
        + beta * phi * codiff(dh, grid)
        + beta**2 * phi * node_average(dh * dh)
    )
    return direct, expanded


def witten_variants(f, gibbs: GibbsState, tag: str):
    if tag == "delta_W":
        return delta_W(f, gibbs)
    if tag == "D_dagger_D":
        return D_dagger_D(f, gibbs)
    raise ValueError(f"unknown Witten variant {tag!r}; expected 'delta_W' or 'D_dagger_D'")


def apply_variant(tag: str, f, gibbs: GibbsState):
    if tag == "fp_rhs":
        return fp_rhs(f, gibbs)
    if tag == "L_beta_h":
        return L_beta_h(f, gibbs)
    if tag == "li_rhs":
        return li_rhs(f, gibbs)
    return witten_variants(f, gibbs, tag)


def sign_identity_sides(rho, gibbs: GibbsState) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of ``fp_rhs(rho) + delta_W(rho) / beta = -2 d^dag(rho dh)``."""
    rho = np.asarray(rho, dtype=float)
    lhs = fp_rhs(rho, gibbs) + delta_W(rho, gibbs) / gibbs.beta
    rhs = -2.0 * codiff(edge_average(rho) * _dh(gibbs), gibbs.grid)
    return lhs, rhs


def identity_pairs(phi, gibbs: GibbsState) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pairs that agree up to ``O(dx^2)`` at interior nodes."""
    phi = np.asarray(phi, dtype=float)
    beta = gibbs.beta
    lap_phi = laplacian_G(gibbs).apply(phi)
    return {
        "laplacian_vs_L": (lap_phi, beta * L_beta_h(phi, gibbs)),
        "li_rhs_vs_laplacian": (li_rhs(phi, gibbs), -lap_phi / beta),
        "fp_rhs_vs_laplacian": (fp_rhs(gibbs.rho * phi, gibbs), -gibbs.rho * lap_phi / beta),
        "DdagD_direct_vs_expanded": D_dagger_D(phi, gibbs),
    }

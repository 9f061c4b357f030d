"""Projection of an integrand onto the range of a market's volatility.

Given integrand vectors ``nu`` and volatility vectors ``sigma`` at each
(path, node) cell, the projection coefficient

    H = (nu . sigma) / |sigma|**2      (H = 0 where |sigma| = 0)

splits the Brownian integral ``nu . B`` into a hedgeable part ``H sigma . B``
and an orthogonal remainder ``L``.  Cellwise ``(nu - H sigma) . sigma = 0``
holds exactly, so the discrete brackets obey Pythagoras' rule to floating
point accuracy:

    |nu|**2 = |nu - H sigma|**2 + H**2 |sigma|**2   per cell.

The convergence diagnostic evaluates the projection energy
``E[sum H**2 |sigma|**2 dt]`` along a family of markets indexed by ``n`` on
common driver increments.  It requires the integrand to be orthogonal to the
limit volatility at every node; families whose volatility collapses to zero
keep constant energy (the remainder never shrinks), while families with a
nondegenerate limit lose energy at the rate the volatility aligns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimates import Estimate, mc_estimate
from .market import GeneralMarketCoeffs, TimeGrid
from .rng import RandomStream

__all__ = [
    "KWResult",
    "KWDiagRow",
    "NondegeneracyReport",
    "kw_decompose",
    "kw_convergence_diag",
    "nondegeneracy_check",
]

#: orthogonality tolerance for the diagnostic precondition
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class KWResult:
    """One projection: coefficient, remainder increments, energies."""

    h: np.ndarray               # (paths, steps) projection coefficient
    l_increments: np.ndarray    # (paths, steps) orthogonal remainder . dB
    energy: Estimate            # E[sum H^2 |sigma|^2 dt]
    residual_energy: Estimate   # E[sum |nu - H sigma|^2 dt]
    total_energy: Estimate      # E[sum |nu|^2 dt]
    zero_fraction: float        # fraction of cells with |sigma| = 0


def _cellwise(arr, paths, steps, d):
    out = np.asarray(arr, dtype=float)
    return np.broadcast_to(out, (paths, steps, d))


def kw_decompose(nu, sigma, db, dt: float) -> KWResult:
    """Project ``nu`` on ``sigma`` cell by cell.

    ``db`` has shape ``(paths, steps, d)``; ``nu`` and ``sigma`` broadcast
    against it.  The projection coefficient is exactly zero on degenerate
    cells.
    """
    db = np.asarray(db, dtype=float)
    if db.ndim != 3:
        raise ValueError("db must have shape (paths, steps, d)")
    paths, steps, d = db.shape
    nu = _cellwise(nu, paths, steps, d)
    sigma = _cellwise(sigma, paths, steps, d)

    sig2 = np.einsum("pkd,pkd->pk", sigma, sigma)
    dot = np.einsum("pkd,pkd->pk", nu, sigma)
    zero = sig2 == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(zero, 0.0, dot / np.where(zero, 1.0, sig2))

    resid = nu - h[:, :, None] * sigma
    l_inc = np.einsum("pkd,pkd->pk", resid, db)
    energy = (h**2 * sig2).sum(axis=1) * dt
    resid_energy = np.einsum("pkd,pkd->pk", resid, resid).sum(axis=1) * dt
    total = np.einsum("pkd,pkd->pk", nu, nu).sum(axis=1) * dt
    return KWResult(h=h, l_increments=l_inc,
                    energy=mc_estimate(energy),
                    residual_energy=mc_estimate(resid_energy),
                    total_energy=mc_estimate(total),
                    zero_fraction=float(zero.mean()))


@dataclass(frozen=True)
class KWDiagRow:
    n: float
    energy: Estimate
    zero_fraction: float


def kw_convergence_diag(nu_fn, coeffs: GeneralMarketCoeffs, n_values,
                        grid: TimeGrid, paths: int,
                        stream: RandomStream) -> list[KWDiagRow]:
    """Projection energies along a market family on common increments.

    ``nu_fn(t, b)`` returns integrand vectors for driver levels ``b`` of
    shape ``(paths, d)``.  Precondition: ``|nu . sigma_inf| < 1e-10`` at
    every node, checked against the limit volatility ``n = inf``; violations
    raise ``ValueError``.
    """
    d = coeffs.d
    sq = math.sqrt(grid.dt)
    flat = stream.split(0).standard_normals(paths, grid.steps * d)
    db = sq * flat.reshape(paths, grid.steps, d)
    b = np.zeros((paths, grid.steps + 1, d))
    np.cumsum(db, axis=1, out=b[:, 1:, :])
    t = grid.times

    nu = np.empty((paths, grid.steps, d))
    worst = 0.0
    for k in range(grid.steps):
        nu[:, k, :] = np.broadcast_to(
            np.asarray(nu_fn(t[k], b[:, k, :]), dtype=float), (paths, d))
        sig_inf = coeffs.sigma_at(math.inf, t[k], b[:, k, :])
        worst = max(worst, float(np.abs(
            np.einsum("pd,pd->p", nu[:, k, :], sig_inf)).max()))
    if worst >= ORTHO_TOL:
        raise ValueError(
            f"integrand is not orthogonal to the limit volatility "
            f"(max |nu . sigma_inf| = {worst:.3g} >= {ORTHO_TOL:g})")

    rows = []
    for n in n_values:
        sigma = np.empty((paths, grid.steps, d))
        for k in range(grid.steps):
            sigma[:, k, :] = coeffs.sigma_at(n, t[k], b[:, k, :])
        res = kw_decompose(nu, sigma, db, grid.dt)
        rows.append(KWDiagRow(n=float(n), energy=res.energy,
                              zero_fraction=res.zero_fraction))
    return rows


@dataclass(frozen=True)
class NondegeneracyReport:
    """Whether a family member's volatility stays away from zero."""

    n: float
    min_norm: float
    zero_fraction: float
    degenerate: bool


def nondegeneracy_check(coeffs: GeneralMarketCoeffs, n, grid: TimeGrid,
                        paths: int, stream: RandomStream,
                        threshold: float = 1e-12) -> NondegeneracyReport:
    """Probe ``|sigma_n|`` over simulated nodes and flag degeneracy."""
    d = coeffs.d
    sq = math.sqrt(grid.dt)
    flat = stream.split(0).standard_normals(paths, grid.steps * d)
    db = sq * flat.reshape(paths, grid.steps, d)
    b = np.zeros((paths, grid.steps + 1, d))
    np.cumsum(db, axis=1, out=b[:, 1:, :])

    min_norm = math.inf
    below = 0
    cells = 0
    for k in range(grid.steps):
        sig = coeffs.sigma_at(n, grid.times[k], b[:, k, :])
        norms = np.sqrt(np.einsum("pd,pd->p", sig, sig))
        min_norm = min(min_norm, float(norms.min()))
        below += int((norms <= threshold).sum())
        cells += norms.size
    frac = below / cells
    return NondegeneracyReport(n=float(n), min_norm=min_norm,
                               zero_fraction=frac,
                               degenerate=bool(frac > 0.0))

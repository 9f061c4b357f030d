"""Dual upper bounds from candidate martingale densities.

Every admissible wealth stream satisfies a Fenchel-type inequality against a
positive density, so Monte Carlo averages of the conjugate evaluated at
``y * (density)`` give upper bounds on the maximal expected utility.  The
baseline density is the bundle's ``Z`` (a function of ``(B, V)`` only, hence
shared across ``rho`` markets).  Perturbed candidates multiply ``Z`` by a
stochastic exponential driven by the direction orthogonal to the price
driver,

    W_perp = sqrt(1 - rho**2) W - rho B,

with a piecewise-constant-in-time integrand built from the basis
``(1, V, B)``.  The exponential is truncated by stopping: the integrand is
switched off from the first step whose increment would carry the exponential
above the cap, which keeps the path in ``(0, cap]`` at every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .estimates import Estimate, mc_estimate
from .market import PathBundle
from .utility import ClaimSpec, ConjugatePair, constrained_conjugate

__all__ = [
    "DualCandidate",
    "DualOpt",
    "SubrepReport",
    "perturbation_exponential",
    "dual_bound_mmm",
    "dual_bound_perturbed",
    "evaluate_candidates",
    "minimize_dual",
    "subreplication_estimate",
    "candidate_grid",
]


@dataclass(frozen=True)
class DualCandidate:
    """Integrand specification for a perturbed density.

    ``coeffs`` has shape ``(buckets, 3)``; on time bucket ``j`` the integrand
    is ``coeffs[j] . (1, V_t, B_t)`` evaluated at left endpoints.  ``cap``
    bounds the stochastic exponential (must be >= 1 so the starting value is
    inside the allowed range).
    """

    coeffs: np.ndarray
    cap: float = 8.0
    label: str = ""

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 2 or c.shape[1] != 3:
            raise ValueError("coeffs must have shape (buckets, 3)")
        if self.cap < 1.0:
            raise ValueError("cap must be >= 1 (the exponential starts at 1)")
        object.__setattr__(self, "coeffs", c)

    def integrand(self, bundle: PathBundle) -> np.ndarray:
        """Per-step integrand values, shape ``(paths, steps)``."""
        steps = bundle.steps
        buckets = self.coeffs.shape[0]
        out = np.empty((bundle.paths, steps))
        edges = np.linspace(0, steps, buckets + 1).astype(int)
        for j in range(buckets):
            sl = slice(edges[j], edges[j + 1])
            c0, cv, cb = self.coeffs[j]
            out[:, sl] = c0 + cv * bundle.v[:, sl] + cb * bundle.b[:, sl]
        return out


def perturbation_exponential(candidate: DualCandidate,
                             bundle: PathBundle) -> np.ndarray:
    """Capped stochastic exponential of the orthogonal-direction integral.

    Returns paths of shape ``(paths, steps + 1)`` with values in
    ``(0, cap]`` at every node, exact: a path whose next increment would
    exceed the cap is frozen from that step on (the offending increment is
    suppressed, so the stopped value is the last compliant one).
    """
    rho = bundle.params.rho
    mix = math.sqrt(1.0 - rho**2)
    dwp = mix * bundle.increments("w") - rho * bundle.increments("b")
    nu = candidate.integrand(bundle)
    loginc = nu * dwp - 0.5 * nu**2 * bundle.dt

    paths, steps = loginc.shape
    logcap = math.log(candidate.cap)
    out = np.empty((paths, steps + 1))
    out[:, 0] = 1.0
    loge = np.zeros(paths)
    active = np.ones(paths, dtype=bool)
    for k in range(steps):
        cand = loge + loginc[:, k]
        breach = active & (cand > logcap)
        active &= ~breach
        loge = np.where(active, cand, loge)
        out[:, k + 1] = np.exp(loge)
    return out


def _conjugate_samples(pair: ConjugatePair, y: float, density_t: np.ndarray,
                       claim: ClaimSpec | None, b_t: np.ndarray) -> np.ndarray:
    if y <= 0:
        raise ValueError("dual bounds require y > 0")
    yz = y * density_t
    if claim is None:
        return np.asarray(pair.v(yz), dtype=float)
    f = np.asarray(claim(b_t), dtype=float)
    if pair.utility.is_halfline:
        return np.asarray(
            constrained_conjugate(pair, yz, f, claim.phi_min), dtype=float)
    return np.asarray(pair.v(yz), dtype=float) + yz * f


def dual_bound_mmm(pair: ConjugatePair, y: float, bundle: PathBundle,
                   claim: ClaimSpec | None = None) -> Estimate:
    """Dual bound from the baseline density ``Z``.

    Without a claim this is the mean of ``V(y Z_T)``.  With a claim it is
    the mean of the constrained conjugate ``V_c(y Z_T, f)`` for half-line
    utilities and of ``V(y Z_T) + y Z_T f`` for whole-line ones.  Because
    ``Z`` depends only on ``(B, V)``, the estimate is identical across
    ``rho`` markets simulated from a shared seed.
    """
    samples = _conjugate_samples(pair, y, bundle.z[:, -1], claim,
                                 bundle.b[:, -1])
    return mc_estimate(samples)


def dual_bound_perturbed(pair: ConjugatePair, y: float, bundle: PathBundle,
                         candidate: DualCandidate,
                         claim: ClaimSpec | None = None) -> Estimate:
    """Dual bound from the perturbed density ``Z * StochExp(nu . W_perp)``."""
    elt = perturbation_exponential(candidate, bundle)[:, -1]
    samples = _conjugate_samples(pair, y, bundle.z[:, -1] * elt, claim,
                                 bundle.b[:, -1])
    return mc_estimate(samples)


@dataclass(frozen=True)
class DualOpt:
    """Outcome of a dual minimization over a finite candidate family."""

    best: DualCandidate
    estimate: Estimate
    table: list = field(repr=False)
    evaluations: int = 0


def evaluate_candidates(pair: ConjugatePair, y: float, bundle: PathBundle,
                        candidates, claim: ClaimSpec | None = None) -> DualOpt:
    """Evaluate an explicit candidate list (common samples), keep the smallest.

    Ties are broken in favour of the earliest candidate, so the result is
    deterministic for a fixed family order and seed.  The baseline
    (unperturbed) bound is always evaluated first under the label ``"mmm"``.
    """
    table: list[tuple[str, Estimate]] = []
    base = dual_bound_mmm(pair, y, bundle, claim)
    table.append(("mmm", base))
    best_est = base
    best_cand = DualCandidate(np.zeros((1, 3)), label="mmm")
    used = 1
    for cand in candidates:
        est = dual_bound_perturbed(pair, y, bundle, cand, claim)
        label = cand.label or f"candidate{used}"
        table.append((label, est))
        used += 1
        if est.mean < best_est.mean:
            best_est, best_cand = est, cand
    return DualOpt(best=best_cand, estimate=best_est, table=table,
                   evaluations=used)


def minimize_dual(pair: ConjugatePair, y: float, bundle: PathBundle,
                  claim: ClaimSpec | None = None,
                  bounds=((-0.6, 0.6), (-0.6, 0.6), (-0.6, 0.6)),
                  buckets: int = 1, cap: float = 8.0,
                  budget: int = 60) -> DualOpt:
    """Minimize the perturbed bound over a coefficient box with Nelder-Mead.

    ``bounds`` is one ``(lo, hi)`` pair per basis slot ``(1, V, B)``; the
    same box applies on every time bucket.  The baseline ``nu = 0`` bound is
    evaluated first and retained whenever the search cannot improve on it,
    so the result is never worse than the unperturbed density.  Common
    random numbers (one shared bundle) make the search deterministic for a
    fixed seed and budget; restart ties break lexicographically on the
    rounded coefficient vector.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    box = [tuple(map(float, b)) for b in bounds]
    if len(box) != 3:
        raise ValueError("bounds must give one (lo, hi) pair per basis slot")
    lo = np.tile([b[0] for b in box], buckets)
    hi = np.tile([b[1] for b in box], buckets)
    dim = lo.size
    evals = 0

    def make(theta, label=""):
        return DualCandidate(np.asarray(theta).reshape(buckets, 3), cap=cap,
                             label=label)

    def objective(theta):
        nonlocal evals
        evals += 1
        est = dual_bound_perturbed(pair, y, bundle, make(theta), claim)
        m = est.mean
        return 1e30 if not math.isfinite(m) else m

    base = dual_bound_mmm(pair, y, bundle, claim)
    table: list[tuple[str, Estimate]] = [("mmm", base)]
    starts = [np.zeros(dim), 0.5 * (lo + hi), 0.25 * lo + 0.75 * hi]
    per_start = max(budget // len(starts), dim + 2)
    outcomes = []
    for s in starts:
        sol = minimize(objective, s, method="Nelder-Mead",
                       bounds=list(zip(lo, hi)),
                       options={"maxfev": per_start, "xatol": 1e-4,
                                "fatol": 1e-10, "adaptive": False})
        theta = np.clip(sol.x, lo, hi)
        outcomes.append((float(sol.fun), tuple(np.round(theta, 12)), theta))
    outcomes.sort(key=lambda t: (t[0], t[1]))
    best_theta = outcomes[0][2]
    best_cand = make(best_theta, "nm")
    best_est = dual_bound_perturbed(pair, y, bundle, best_cand, claim)
    table.append(("nm", best_est))
    if base.mean <= best_est.mean:
        best_cand = DualCandidate(np.zeros((buckets, 3)), cap=cap,
                                  label="mmm")
        best_est = base
    return DualOpt(best=best_cand, estimate=best_est, table=table,
                   evaluations=evals + 1)


def candidate_grid(values, buckets: int = 1, cap: float = 8.0) -> list[DualCandidate]:
    """Constant-coefficient candidate family over a small coefficient grid.

    ``values`` is iterated per basis slot ``(1, V, B)``; the all-zero
    combination is skipped (it equals the baseline).
    """
    vals = [float(v) for v in values]
    out = []
    for c0 in vals:
        for cv in vals:
            for cb in vals:
                if c0 == cv == cb == 0.0:
                    continue
                coeffs = np.tile([c0, cv, cb], (buckets, 1))
                out.append(DualCandidate(coeffs, cap=cap,
                                         label=f"({c0:g},{cv:g},{cb:g})"))
    return out


# ---------------------------------------------------------------------------
# subreplication
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubrepReport:
    """Shifted-expectation table for the subreplication construction."""

    t_prime: float
    rows: list            # [(shift, Estimate)]
    min_shift: float
    minimum: Estimate

    def as_dict(self) -> dict:
        return {f"{x:g}": e.mean for x, e in self.rows}


def subreplication_estimate(claim: ClaimSpec, bundle: PathBundle,
                            t_prime: float, shifts) -> SubrepReport:
    """Estimate ``E[phi(B_T - B_{T'} + x)]`` over a grid of shifts ``x``.

    These are the conditional claim prices under the measures that
    concentrate the driver's remaining motion after ``T'``; their infimum
    over ``x`` approaches the claim's infimum as ``T' -> T``, which is the
    mechanism forcing the wealth floor.  Only meaningful in markets with
    ``rho != 0`` (the construction needs a driver direction the price does
    not span), and ``T'`` must be a grid node strictly before the horizon.
    """
    if bundle.params.rho == 0.0:
        raise ValueError("subreplication construction requires rho != 0")
    times = bundle.times
    grid_dt = float(times[1] - times[0])
    k = round(t_prime / grid_dt)
    if not 0 <= k < len(times) - 1 or abs(k * grid_dt - t_prime) > 1e-9:
        raise ValueError(f"T'={t_prime} must be a grid node before the horizon")
    tail = bundle.b[:, -1] - bundle.b[:, k]
    rows = []
    for x in np.asarray(shifts, dtype=float).ravel():
        rows.append((float(x), mc_estimate(np.asarray(claim(tail + x)))))
    imin = min(range(len(rows)), key=lambda i: rows[i][1].mean)
    return SubrepReport(t_prime=float(t_prime), rows=rows,
                        min_shift=rows[imin][0], minimum=rows[imin][1])

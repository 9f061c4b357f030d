"""Indifference prices and stability diagnostics across market families.

The indifference price ``p`` of a claim solves ``w(x + p) = u(x)`` where
``u`` is the claim problem's value and ``w`` the claim-free one.  Both sides
are replaced by family-restricted Monte Carlo bounds evaluated on common
random numbers, and ``p`` is found by bisection over the claim's range
``[phi_min, phi_max]``.  Iteration stops at a noise floor: once the bracket
midpoint's value gap is statistically indistinguishable from zero (within
three combined standard errors) further bisection only chases noise.

The correlation sweep drives the main stability exhibit.  For ``rho != 0``
the claim problem carries an endogenous wealth floor (terminal wealth cannot
fall below minus the claim's infimum), and the primal search enforces it by
stopping; as ``rho -> 0`` those values converge to the *constrained* limit
value, which sits strictly below the unconstrained ``rho = 0`` value for
non-constant claims.  The sweep reports primal bounds, the density-based
dual cap, prices and gaps so the discontinuity is visible through bounds
alone.

The degenerate benchmark reproduces the vanishing-volatility family
``dS_n = (1/n) dB`` with a step claim on the terminal driver, whose limit
values are known in closed form.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .dual import dual_bound_mmm
from .estimates import Estimate, combined_se, mc_estimate
from .market import (GeneralMarketCoeffs, HestonParams, TimeGrid,
                     simulate_general_market, simulate_heston_market)
from .primal import (HedgeMixFamily, PrimalOpt, PrimalResult, driver_levels,
                     lsmc_hedge, optimize_primal, primal_bound)
from .rng import RandomStream
from .utility import ClaimSpec, ConjugatePair, UtilitySpec, digital_claim

__all__ = [
    "PriceResult",
    "SweepRow",
    "SweepResult",
    "DegenerateRow",
    "DegenerateResult",
    "indifference_price",
    "rho_sweep",
    "degenerate_example",
]


# ---------------------------------------------------------------------------
# indifference pricing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriceResult:
    """An indifference price with its terminal bisection state.

    ``stderr`` converts the value-space noise into price units through a
    local secant slope of the claim-free value near the returned price.  At
    termination ``|w_estimate - u_estimate| <= 3 * combined SE`` (plus a
    machine-precision allowance for noise-free configurations) whenever
    ``converged`` is True.
    """

    price: float
    bracket: tuple[float, float]
    u_estimate: Estimate
    w_estimate: Estimate
    stderr: float
    iterations: int
    converged: bool
    diagnosis: str = ""


def _family_with_floor(family, floor: float):
    return dataclasses.replace(family, floor=floor)


def _secant_slope(evals, p: float) -> float:
    """Local slope of the claim-free value in the price variable.

    Uses the two finite evaluations closest to ``p`` (a bracket endpoint can
    be ``-inf`` for half-line utilities at tiny capital, which would make
    the raw endpoint secant infinite and the price stderr spuriously zero).
    """
    finite = sorted({pv: est.mean for pv, est in evals
                     if math.isfinite(est.mean)}.items(),
                    key=lambda t: (abs(t[0] - p), t[0]))
    if len(finite) < 2:
        return math.nan
    (p1, v1), (p2, v2) = finite[0], finite[1]
    return (v2 - v1) / (p2 - p1)


def indifference_price(pair: ConjugatePair, x: float, family, bundle,
                       claim: ClaimSpec, budget: int = 120,
                       w_family=None, w_budget: int = 40,
                       constrained_u: bool = False, tol: float = 1e-3,
                       max_iter: int = 48,
                       u_opt: PrimalOpt | None = None) -> PriceResult:
    """Solve ``w(x + p) = u(x)`` for ``p`` by noise-aware bisection.

    Both sides are family bounds on the same bundle (common random
    numbers).  With ``constrained_u`` the claim side enforces the claim
    problem's endogenous wealth floor, and the claim-free side's declared
    floor is matched to it so that pathwise monotonicity in ``p`` carries
    over to the two estimates and the initial bracket
    ``[phi_min, phi_max]`` is valid.  ``u_opt`` may carry a precomputed
    claim-side search result for the same configuration.
    """
    if u_opt is None:
        u_opt = optimize_primal(pair, x, family, bundle, claim=claim,
                                constrained=constrained_u, budget=budget)
    u_est = u_opt.result.estimate
    if not math.isfinite(u_est.mean):
        return PriceResult(price=math.nan, bracket=(claim.phi_min, claim.phi_max),
                           u_estimate=u_est, w_estimate=u_est, stderr=math.nan,
                           iterations=0, converged=False,
                           diagnosis="claim-side estimate is -inf")

    if w_family is None:
        w_family = family
    if constrained_u:
        # match the claim-free floor to the enforced one so that the
        # bracket endpoints compare pathwise against the claim side
        slack = family.slack
        w_family = _family_with_floor(w_family, x + claim.phi_min - slack)

    def w_value(capital: float) -> Estimate:
        opt = optimize_primal(pair, capital, w_family, bundle, claim=None,
                              constrained=False, budget=w_budget)
        return opt.result.estimate

    lo, hi = claim.phi_min, claim.phi_max
    atol = 1e-12 * max(1.0, abs(u_est.mean))
    if hi - lo == 0.0:
        w_est = w_value(x + lo)
        ok = abs(w_est.mean - u_est.mean) <= max(
            3.0 * combined_se(w_est, u_est), atol)
        return PriceResult(price=lo, bracket=(lo, hi), u_estimate=u_est,
                           w_estimate=w_est, stderr=0.0, iterations=1,
                           converged=ok,
                           diagnosis="" if ok else "degenerate bracket mismatch")

    w_lo = w_value(x + lo)
    w_hi = w_value(x + hi)
    g_lo = w_lo.mean - u_est.mean
    g_hi = w_hi.mean - u_est.mean
    evals = [(lo, w_lo), (hi, w_hi)]
    if g_lo > max(3.0 * combined_se(w_lo, u_est), atol):
        return PriceResult(price=lo, bracket=(lo, hi), u_estimate=u_est,
                           w_estimate=w_lo, stderr=math.nan, iterations=2,
                           converged=False,
                           diagnosis="no sign change: w(x+phi_min) > u(x)")
    if g_hi < -max(3.0 * combined_se(w_hi, u_est), atol):
        return PriceResult(price=hi, bracket=(lo, hi), u_estimate=u_est,
                           w_estimate=w_hi, stderr=math.nan, iterations=2,
                           converged=False,
                           diagnosis="no sign change: w(x+phi_max) < u(x)")

    p, w_p = lo, w_lo
    iters = 2
    converged = False
    for _ in range(max_iter):
        p = 0.5 * (lo + hi)
        w_p = w_value(x + p)
        evals.append((p, w_p))
        iters += 1
        g = w_p.mean - u_est.mean
        if abs(g) <= max(3.0 * combined_se(w_p, u_est), atol):
            converged = True
            break
        if g < 0.0:
            lo = p
        else:
            hi = p
    slope = _secant_slope(evals, p)
    se_price = (combined_se(w_p, u_est) / slope) if slope > 0 else math.nan
    return PriceResult(price=p, bracket=(lo, hi), u_estimate=u_est,
                       w_estimate=w_p, stderr=se_price, iterations=iters,
                       converged=converged,
                       diagnosis="" if converged else
                       f"noise floor not reached in {max_iter} bisections "
                       f"(bracket width {hi - lo:.3g}, tol {tol:.3g})")


# ---------------------------------------------------------------------------
# correlation sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    """All bounds for one correlation value."""

    rho: float
    u_unconstrained: PrimalOpt
    u_constrained: PrimalOpt
    price: PriceResult
    headline_constrained: bool

    @property
    def u_headline(self) -> PrimalResult:
        """The faithful estimate of the claim problem's value at this rho.

        For ``rho != 0`` the endogenous floor is part of the problem, so the
        constrained search is the honest estimator.  At ``rho = 0`` the claim
        is replicable and the problem carries no endogenous floor, so the
        unconstrained search is the right one there.
        """
        if self.headline_constrained:
            return self.u_constrained.result
        return self.u_unconstrained.result


@dataclass(frozen=True)
class SweepResult:
    """Sweep output: per-rho bounds plus the shared dual cap."""

    x: float
    y_star: float
    cap_value: float
    cap_stderr: float
    cap_table: list = field(repr=False)
    rows: list = field(repr=False)

    def row(self, rho: float) -> SweepRow:
        for r in self.rows:
            if r.rho == rho:
                return r
        raise KeyError(f"no sweep row for rho={rho}")

    def price_gap(self, rho: float) -> tuple[float, float]:
        """Price gap ``p(x, 0) - p(x, rho)`` with its combined stderr."""
        p0 = self.row(0.0).price
        pr = self.row(rho).price
        se = math.hypot(p0.stderr, pr.stderr)
        return p0.price - pr.price, se

    def triple(self, rho: float):
        """Diagnostic triple: claim value at rho, constrained value, cap."""
        return (self.row(rho).u_headline.estimate,
                self.row(0.0).u_constrained.result.estimate,
                self.cap_value)


def rho_sweep(pair: ConjugatePair, x: float, claim: ClaimSpec,
              params: HestonParams, grid: TimeGrid, paths: int, seed: int,
              rho_values, y_grid, hedge_buckets: int = 8,
              scale_bounds=(-1.6, 0.4), const_bounds=(-1.0, 3.5),
              lin_bounds=(-1.0, 2.5),
              floor: float = 6.0, max_holding: float = 25.0,
              budget: int = 120, w_budget: int = 40,
              price_tol: float = 1e-3, workers: int | None = None) -> SweepResult:
    """Bounds, cap and prices across correlation values on a shared seed.

    Every rho reuses the same driver draws, so ``B``, ``W``, ``V`` and the
    density ``Z`` agree across rows and the dual cap (computed once, from
    the baseline density) applies verbatim to each of them.
    """
    rho_values = [float(r) for r in rho_values]
    if 0.0 not in rho_values:
        rho_values = [0.0] + rho_values

    stream = RandomStream(seed)
    bundles = {rho: simulate_heston_market(params.with_rho(rho), grid, paths,
                                           stream, workers)
               for rho in rho_values}

    # dual cap from the shared density: min over the y grid of mmm bound + x y
    cap_table = []
    base = bundles[rho_values[0]]
    for y in np.asarray(y_grid, dtype=float).ravel():
        est = dual_bound_mmm(pair, float(y), base, claim)
        cap_table.append((float(y), est))
    k_star = min(range(len(cap_table)),
                 key=lambda i: cap_table[i][1].mean + x * cap_table[i][0])
    y_star, cap_est = cap_table[k_star]
    cap_value = cap_est.mean + x * y_star

    rows = []
    for rho in rho_values:
        bundle = bundles[rho]
        hedge = lsmc_hedge(claim, bundle, buckets=hedge_buckets,
                           floor=floor, max_holding=max_holding)
        family = HedgeMixFamily(hedge=hedge.strategy,
                                scale_bounds=scale_bounds,
                                const_bounds=const_bounds,
                                lin_bounds=lin_bounds, floor=floor,
                                max_holding=max_holding)
        u_unc = optimize_primal(pair, x, family, bundle, claim=claim,
                                constrained=False, budget=budget)
        u_con = optimize_primal(pair, x, family, bundle, claim=claim,
                                constrained=True, budget=budget)
        # the endogenous floor comes from subreplicating a claim with genuine
        # spread; a constant claim is replicable everywhere, so its problem
        # stays unconstrained at every rho
        constrained_headline = rho != 0.0 and claim.spread > 0.0
        row = SweepRow(rho=rho, u_unconstrained=u_unc, u_constrained=u_con,
                       price=None, headline_constrained=constrained_headline)
        u_opt = u_con if constrained_headline else u_unc
        price = indifference_price(pair, x, family, bundle, claim,
                                   budget=budget, w_budget=w_budget,
                                   constrained_u=constrained_headline,
                                   tol=price_tol, u_opt=u_opt)
        rows.append(dataclasses.replace(row, price=price))
    return SweepResult(x=x, y_star=y_star, cap_value=cap_value,
                       cap_stderr=cap_est.stderr, cap_table=cap_table,
                       rows=rows)


# ---------------------------------------------------------------------------
# degenerate benchmark family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegenerateRow:
    n: float
    hedge_price: float
    hedge_price_stderr: float
    residual_sd: float
    bound: PrimalResult
    theta: np.ndarray
    value_mc: float               # U(x + hedge price): replication value
    value_mc_stderr: float        # delta method through the marginal utility


@dataclass(frozen=True)
class DegenerateResult:
    """Hedged bounds along ``dS_n = (1/n) dB`` against the analytic limits."""

    rows: list
    analytic_value_n: float       # U(x + 1/2): value in every finite-n market
    analytic_value_limit: float   # E[U(x + f)] = (U(x) + U(x+1)) / 2
    limit_bound: Estimate         # H = 0 Monte Carlo value in the flat market
    x: float
    alpha: float

    @property
    def analytic_gap(self) -> float:
        return self.analytic_value_n - self.analytic_value_limit

    @property
    def mc_gap(self) -> tuple[float, float]:
        """The pipeline's gap estimate and stderr, from the largest n.

        The finite-n value comes through the replication identity
        ``u_n = U(x + price)`` (the claim is spanned there), the limit value
        from the flat-market Monte Carlo average.
        """
        row = self.rows[-1]
        gap = row.value_mc - self.limit_bound.mean
        se = math.hypot(row.value_mc_stderr, self.limit_bound.stderr)
        return gap, se


def degenerate_coeffs() -> GeneralMarketCoeffs:
    """The family ``sigma_n = 1/n`` (zero in the limit), no drift."""
    def sigma(n, _t, b):
        val = 0.0 if math.isinf(n) else 1.0 / n
        return np.full_like(b, val)

    def lam(_n, _t, b):
        return np.zeros(b.shape[0])

    return GeneralMarketCoeffs(d=1, sigma=sigma, lam=lam)


def degenerate_example(alpha: float = 1.0, x: float = 0.0,
                       n_values=(1, 2, 4, 8), grid: TimeGrid | None = None,
                       paths: int = 30_000, seed: int = 7,
                       buckets: int = 12, degree: int = 2,
                       budget: int = 60,
                       workers: int | None = None) -> DegenerateResult:
    """Short-hedge bounds for the step claim ``1{B_T >= 0}`` along the family.

    In every finite-n market the claim is replicable, so the optimal value is
    ``U(x + 1/2)`` independently of ``n``; in the limit market the price
    collapses and the value drops to ``E[U(x + f)]``.  The Monte Carlo bound
    shorts a least-squares hedge (scale and constant exposure fine-tuned by
    the primal search) and approaches the analytic value as the basis
    refines.
    """
    if grid is None:
        grid = TimeGrid(horizon=1.0, steps=96)
    pair = ConjugatePair(UtilitySpec.exponential(alpha))
    claim = digital_claim(level=1.0, at=0.0)
    coeffs = degenerate_coeffs()
    stream = RandomStream(seed)

    rows = []
    limit_bound = None
    for n in list(n_values) + [math.inf]:
        gp = simulate_general_market(coeffs, n, grid, paths, stream, workers)
        f = np.asarray(claim(driver_levels(gp)[:, -1]), dtype=float)
        if math.isinf(n):
            limit_bound = mc_estimate(pair.utility.u(x + f))
            continue
        hedge = lsmc_hedge(claim, gp, buckets=buckets, degree=degree,
                           floor=50.0, max_holding=40.0 * float(n))
        family = HedgeMixFamily(hedge=hedge.strategy,
                                scale_bounds=(-1.4, -0.6),
                                const_bounds=(-0.3, 0.3), floor=50.0,
                                max_holding=40.0 * float(n))
        opt = optimize_primal(pair, x, family, gp, claim=claim,
                              constrained=False, budget=budget)
        value_mc = float(pair.utility.u(x + hedge.price))
        value_se = abs(float(pair.utility.marginal(x + hedge.price))) \
            * hedge.price_stderr
        rows.append(DegenerateRow(n=float(n), hedge_price=hedge.price,
                                  hedge_price_stderr=hedge.price_stderr,
                                  residual_sd=hedge.residual_sd,
                                  bound=opt.result, theta=opt.theta,
                                  value_mc=value_mc,
                                  value_mc_stderr=value_se))

    u_exact = float(pair.utility.u(x + 0.5))
    u_limit = 0.5 * (float(pair.utility.u(x)) + float(pair.utility.u(x + 1.0)))
    return DegenerateResult(rows=rows, analytic_value_n=u_exact,
                            analytic_value_limit=u_limit,
                            limit_bound=limit_bound, x=x, alpha=alpha)

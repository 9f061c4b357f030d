"""Primal lower bounds from explicit trading strategies.

A strategy is a predictable holdings rule evaluated at left endpoints of
the grid.  Its raw gains process is the Euler sum ``X = sum H dS``.  Before
any utility is averaged the strategy is made admissible: holdings are
truncated to a declared magnitude bound and wealth is stopped at the first
node that lands below the declared floor ``-K - slack``.  The stop is a
genuine stopping rule -- holdings are zeroed from the crossing node onward,
so the decision at each step uses only information already revealed.  The
frozen value retains any overshoot below the floor; every node before the
stop respects the floor by definition of a first crossing.  (Freezing one
node earlier would peek at the increment being suppressed, and that
one-step look-ahead acts as free insurance: it demonstrably inflates
optimized values past valid dual caps.)  In constrained mode the wealth
floor ``x + X >= -phi_min`` of the claim problem is enforced the same way.

Expected utility of terminal wealth is then a genuine lower bound for the
value of the corresponding problem, reported with a standard error.  For
half-line utilities any path ending outside the domain makes the estimate
``-inf``; the number of such paths is reported as the violation count.

The hedging helper fits a variance-optimal holdings rule by least squares:
terminal claim values are regressed on gains of bucketed basis strategies,
giving both a replication-price intercept and a residual report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .estimates import Estimate, mc_estimate
from .market import GeneralPaths, PathBundle
from .utility import ClaimSpec, ConjugatePair

__all__ = [
    "ConstantStrategy",
    "StateLinearStrategy",
    "BucketStrategy",
    "ScaledSumStrategy",
    "EnforcedWealth",
    "PrimalResult",
    "HedgeResult",
    "PrimalOpt",
    "ConstantFamily",
    "StateLinearFamily",
    "HedgeMixFamily",
    "wealth_process",
    "enforce_admissibility",
    "primal_bound",
    "lsmc_hedge",
    "hedge_residual",
    "optimize_primal",
]


# ---------------------------------------------------------------------------
# state access shared by Heston and general bundles
# ---------------------------------------------------------------------------

def driver_levels(bundle) -> np.ndarray:
    """Scalar claim-driver path ``B`` as ``(paths, steps+1)``."""
    b = bundle.b
    if b.ndim == 3:
        return b[:, :, 0]
    return b


def variance_levels(bundle) -> np.ndarray | None:
    return getattr(bundle, "v", None)


_FEATURES = ("1", "b", "v", "b2", "bv", "v2", "delta", "deltav")

#: resolution of the payoff-derivative table behind the ``delta`` feature
_DELTA_GRID_N = 2001

# smoothed-delta paths are strategy-independent, so they are computed once
# per (bundle, claim) and reused across every optimizer evaluation
_DELTA_CACHE: dict = {}


def _smoothed_delta(claim: ClaimSpec, bundle) -> np.ndarray:
    """Gaussian-transition delta of the claim along the driver paths.

    Since the driver is a standard Brownian motion, the time-``t`` value of
    ``phi(B_T)`` is the heat-kernel smoothing of ``phi`` at variance
    ``T - t`` and its driver-delta is the same smoothing of ``phi'``.  The
    payoff derivative is tabulated on a uniform grid and convolved with the
    Gaussian kernel per step, which keeps sharp payoffs (digitals) honest:
    their delta is the correctly scaled near-expiry bump that no low-degree
    polynomial in ``B`` can represent.
    """
    key = (id(bundle), id(claim))
    hit = _DELTA_CACHE.get(key)
    if hit is not None:
        return hit
    times = bundle.times
    b = driver_levels(bundle)
    steps = times.size - 1
    horizon = float(times[-1])
    pad = 6.0 * math.sqrt(horizon) + 1.0
    lo = float(claim.knots[0]) - pad
    hi = float(claim.knots[-1]) + pad
    xs = np.linspace(lo, hi, _DELTA_GRID_N)
    h = xs[1] - xs[0]
    dphi = np.gradient(np.asarray(claim(xs), dtype=float), h)
    out = np.empty((b.shape[0], steps))
    for j in range(steps):
        tau = horizon - float(times[j])
        sd = math.sqrt(tau)
        half = min(int(6.0 * sd / h) + 1, xs.size // 2 - 1)
        k = np.arange(-half, half + 1) * h
        kern = np.exp(-0.5 * (k / sd) ** 2) * (h / (sd * math.sqrt(2.0 * math.pi)))
        table = np.convolve(dphi, kern, mode="same")
        out[:, j] = np.interp(b[:, j], xs, table)
    if len(_DELTA_CACHE) >= 3:
        _DELTA_CACHE.pop(next(iter(_DELTA_CACHE)))
    _DELTA_CACHE[key] = out
    return out


def _feature(bundle, name: str, sl: slice,
             claim: ClaimSpec | None = None) -> np.ndarray:
    b = driver_levels(bundle)[:, sl]
    if name == "1":
        return np.ones_like(b)
    if name == "b":
        return b
    if name == "b2":
        return b * b
    if name in ("delta", "deltav"):
        if claim is None:
            raise ValueError(f"feature {name!r} needs the claim")
        d = _smoothed_delta(claim, bundle)[:, sl]
        if name == "delta":
            return d
        v = variance_levels(bundle)
        if v is None:
            raise ValueError("feature 'deltav' needs a variance path")
        return d / np.sqrt(np.maximum(v[:, sl], 1e-12))
    v = variance_levels(bundle)
    if v is None:
        raise ValueError(f"feature {name!r} needs a variance path")
    v = v[:, sl]
    if name == "v":
        return v
    if name == "bv":
        return b * v
    if name == "v2":
        return v * v
    raise ValueError(f"unknown feature {name!r}")


def features_for(degree: int, with_variance: bool,
                 claim_adapted: bool = False) -> tuple[str, ...]:
    """Monomial feature names in ``(B, V)`` up to the given total degree.

    With ``claim_adapted`` the claim's smoothed driver-delta is appended
    (plus its ``1/sqrt(V)`` version when a variance path exists) in the
    usual least-squares-Monte-Carlo spirit of enriching the basis with
    problem-adapted functions.
    """
    if degree not in (1, 2):
        raise ValueError("supported basis degrees are 1 and 2")
    names = ["1", "b"] + (["v"] if with_variance else [])
    if degree == 2:
        names += ["b2"] + (["bv", "v2"] if with_variance else [])
    if claim_adapted:
        names += ["delta"] + (["deltav"] if with_variance else [])
    return tuple(names)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _StrategyBase:
    floor: float = 10.0        # K: declared wealth floor is -K - slack
    slack: float = 1e-9        # delta > 0
    max_holding: float = 100.0

    def __post_init__(self):
        if self.floor < 0:
            raise ValueError("floor K must be >= 0")
        if self.slack <= 0:
            raise ValueError("slack must be > 0")
        if self.max_holding <= 0:
            raise ValueError("max_holding must be > 0")

    def holdings(self, bundle) -> np.ndarray:
        """Truncated holdings per step, shape ``(paths, steps)``."""
        h = self._raw_holdings(bundle)
        return np.clip(h, -self.max_holding, self.max_holding)

    def _raw_holdings(self, bundle) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantStrategy(_StrategyBase):
    """Hold a constant number of units."""

    c: float = 0.0

    def _raw_holdings(self, bundle):
        steps = bundle.times.size - 1
        return np.full((bundle.paths, steps), float(self.c))


@dataclass(frozen=True)
class StateLinearStrategy(_StrategyBase):
    """Holdings affine in the current state: ``c0 + cv * V + cb * B``."""

    c0: float = 0.0
    cv: float = 0.0
    cb: float = 0.0

    def _raw_holdings(self, bundle):
        sl = slice(0, bundle.times.size - 1)
        h = self.c0 + self.cb * driver_levels(bundle)[:, sl]
        if self.cv != 0.0:
            v = variance_levels(bundle)
            if v is None:
                raise ValueError("state-linear strategy with cv needs variance")
            h = h + self.cv * v[:, sl]
        else:
            h = np.broadcast_to(h, (bundle.paths, bundle.times.size - 1)).copy() \
                if np.ndim(h) != 2 else h
        return h


@dataclass(frozen=True)
class BucketStrategy(_StrategyBase):
    """Piecewise-in-time holdings from basis functions of the state.

    ``coeffs`` has shape ``(buckets, len(features))``; on time bucket ``j``
    the holdings are ``sum_i coeffs[j, i] * feature_i(state)``.
    """

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros((1, 2)))
    features: tuple[str, ...] = ("1", "b")
    claim: ClaimSpec | None = None

    def __post_init__(self):
        super().__post_init__()
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] != len(self.features):
            raise ValueError("coeffs width must match the feature list")
        for f in self.features:
            if f not in _FEATURES:
                raise ValueError(f"unknown feature {f!r}")
            if f in ("delta", "deltav") and self.claim is None:
                raise ValueError(f"feature {f!r} needs a claim table")
        object.__setattr__(self, "coeffs", c)

    def _raw_holdings(self, bundle):
        steps = bundle.times.size - 1
        buckets = self.coeffs.shape[0]
        edges = np.linspace(0, steps, buckets + 1).astype(int)
        out = np.zeros((bundle.paths, steps))
        for j in range(buckets):
            sl = slice(edges[j], edges[j + 1])
            acc = np.zeros((bundle.paths, edges[j + 1] - edges[j]))
            for i, name in enumerate(self.features):
                cij = self.coeffs[j, i]
                if cij != 0.0:
                    acc += cij * _feature(bundle, name, sl, self.claim)
            out[:, sl] = acc
        return out

    def scaled(self, factor: float) -> "BucketStrategy":
        return BucketStrategy(floor=self.floor, slack=self.slack,
                              max_holding=self.max_holding,
                              coeffs=factor * self.coeffs,
                              features=self.features, claim=self.claim)


@dataclass(frozen=True)
class ScaledSumStrategy(_StrategyBase):
    """Weighted sum of component strategies (truncated after summing)."""

    parts: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        if len(self.parts) != len(self.weights) or not self.parts:
            raise ValueError("parts and weights must match and be nonempty")

    def _raw_holdings(self, bundle):
        steps = bundle.times.size - 1
        out = np.zeros((bundle.paths, steps))
        for w, part in zip(self.weights, self.parts):
            if w != 0.0:
                out += w * part._raw_holdings(bundle)
        return out


# ---------------------------------------------------------------------------
# wealth and admissibility
# ---------------------------------------------------------------------------

def wealth_process(strategy: _StrategyBase, bundle) -> np.ndarray:
    """Raw gains paths ``(paths, steps+1)`` of the truncated holdings."""
    h = strategy.holdings(bundle)
    ds = np.diff(bundle.s, axis=1)
    x = np.zeros((h.shape[0], h.shape[1] + 1))
    np.cumsum(h * ds, axis=1, out=x[:, 1:])
    return x


@dataclass(frozen=True)
class EnforcedWealth:
    """Stopped wealth paths with stopping diagnostics."""

    wealth: np.ndarray          # (paths, steps+1), floor respected everywhere
    stopped_fraction: float
    threshold: float            # the effective floor on X


def enforce_admissibility(strategy: _StrategyBase, bundle, x: float = 0.0,
                          constrained: bool = False,
                          phi_min: float = 0.0) -> EnforcedWealth:
    """Stop the gains process at its declared floor.

    The effective threshold on ``X`` is ``-K - slack``; in constrained mode
    the claim-problem floor ``x + X >= -phi_min`` is enforced as well, so the
    threshold is the larger of the two.  A path is frozen at the first node
    whose value falls below the threshold: holdings vanish from that node on,
    so the rule is predictable, and the frozen value keeps whatever overshoot
    the crossing step produced.  All nodes strictly before the stop satisfy
    the floor exactly (first-crossing definition); the overshoot is a loss
    the strategy genuinely suffered and is never repaired.
    """
    thr = -strategy.floor - strategy.slack
    if constrained:
        thr = max(thr, -x - phi_min)
    if thr >= 0.0:
        raise ValueError(
            f"effective wealth floor {thr:.6g} is not below the starting "
            "wealth 0; need x + phi_min > 0 in constrained mode")
    raw = wealth_process(strategy, bundle)
    below = raw < thr
    has = below.any(axis=1)
    first = np.argmax(below, axis=1)
    steps = raw.shape[1] - 1
    stop_at = np.where(has, first, steps)
    idx = np.minimum(np.arange(steps + 1)[None, :], stop_at[:, None])
    stopped = np.take_along_axis(raw, idx, axis=1)
    return EnforcedWealth(wealth=stopped,
                          stopped_fraction=float(has.mean()),
                          threshold=thr)


@dataclass(frozen=True)
class PrimalResult:
    """A primal lower bound with admissibility diagnostics."""

    estimate: Estimate
    violations: int
    stopped_fraction: float


def primal_bound(pair: ConjugatePair, x: float, strategy: _StrategyBase,
                 bundle, claim: ClaimSpec | None = None,
                 constrained: bool = False) -> PrimalResult:
    """Expected utility of enforced terminal wealth ``x + X_T (+ f)``.

    Any path outside the utility's domain contributes ``-inf`` and the whole
    estimate is reported as ``-inf`` with the count of offending paths.  In
    constrained mode the stopping floor keeps ``x + X + phi_min >= 0`` at
    every pre-stop node; a crossing step can overshoot the floor, so a
    violation is still possible when the payoff sits near its minimum on the
    overshooting path.  Such estimates come back ``-inf`` and the optimizer
    treats the strategy as infeasible rather than silently repairing it.
    """
    phi_min = claim.phi_min if claim is not None else 0.0
    enforced = enforce_admissibility(strategy, bundle, x=x,
                                     constrained=constrained, phi_min=phi_min)
    xt = enforced.wealth[:, -1]
    if claim is not None:
        f = np.asarray(claim(driver_levels(bundle)[:, -1]), dtype=float)
        w = (x + f) + xt
    else:
        w = x + xt
    samples = np.asarray(pair.utility.u(w), dtype=float)
    violations = int(np.sum(np.isneginf(samples)))
    return PrimalResult(estimate=mc_estimate(samples), violations=violations,
                        stopped_fraction=enforced.stopped_fraction)


# ---------------------------------------------------------------------------
# regression hedge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HedgeResult:
    """Variance-optimal hedge with its regression diagnostics."""

    strategy: BucketStrategy
    price: float                # regression intercept: implied initial cost
    residual_sd: float          # sd of f - price - gains
    r_squared: float
    price_stderr: float = math.nan   # OLS standard error of the intercept


def lsmc_hedge(claim: ClaimSpec, bundle, buckets: int = 8, degree: int = 2,
               floor: float = 10.0, slack: float = 1e-9,
               max_holding: float = 100.0,
               claim_adapted: bool = True) -> HedgeResult:
    """Least-squares hedge of ``f = phi(B_T)`` by bucketed basis strategies.

    Regresses the terminal claim on the gains of every (bucket, feature)
    basis strategy plus an intercept; the coefficient vector is the
    holdings rule that minimizes the replication variance on the sample, and
    the intercept is the implied price.  Deterministic given the bundle.
    ``claim_adapted`` adds the claim's smoothed delta to the basis, which is
    what lets sharp payoffs replicate to their discretization floor.
    """
    feats = features_for(degree, variance_levels(bundle) is not None,
                         claim_adapted=claim_adapted)
    steps = bundle.times.size - 1
    if not 1 <= buckets <= steps:
        raise ValueError("buckets must lie between 1 and the step count")
    edges = np.linspace(0, steps, buckets + 1).astype(int)
    ds = np.diff(bundle.s, axis=1)
    f = np.asarray(claim(driver_levels(bundle)[:, -1]), dtype=float)

    ncols = 1 + buckets * len(feats)
    design = np.empty((bundle.paths, ncols))
    design[:, 0] = 1.0
    col = 1
    for j in range(buckets):
        sl = slice(edges[j], edges[j + 1])
        dsl = ds[:, sl]
        for name in feats:
            design[:, col] = (_feature(bundle, name, sl, claim)
                              * dsl).sum(axis=1)
            col += 1
    coef, *_ = np.linalg.lstsq(design, f, rcond=None)
    resid = f - design @ coef
    var_f = float(f.var(ddof=1)) if f.size > 1 else 0.0
    dof = max(bundle.paths - ncols, 1)
    gram_inv_00 = float(np.linalg.pinv(design.T @ design)[0, 0])
    price_se = math.sqrt(max(float(resid @ resid) / dof, 0.0) * gram_inv_00)
    strategy = BucketStrategy(
        floor=floor, slack=slack, max_holding=max_holding,
        coeffs=coef[1:].reshape(buckets, len(feats)), features=feats,
        claim=claim if claim_adapted else None)
    return HedgeResult(strategy=strategy, price=float(coef[0]),
                       residual_sd=float(resid.std(ddof=1)),
                       r_squared=1.0 - (float(resid.var(ddof=1)) / var_f
                                        if var_f > 0 else 0.0),
                       price_stderr=price_se)


def hedge_residual(strategy, price: float, bundle, claim: ClaimSpec) -> float:
    """Replication residual sd of a given hedge in a given market.

    Computes ``sd(price + X_T - f)`` with the raw (unstopped) gains of the
    strategy on the bundle's price paths.  Lets a hedge fitted in one market
    be scored in another sharing the same drivers.
    """
    gains = wealth_process(strategy, bundle)[:, -1]
    f = np.asarray(claim(driver_levels(bundle)[:, -1]), dtype=float)
    return float((price + gains - f).std(ddof=1))


# ---------------------------------------------------------------------------
# families and optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantFamily:
    """One-parameter family of constant holdings."""

    lo: float = -5.0
    hi: float = 5.0
    floor: float = 10.0
    slack: float = 1e-9
    max_holding: float = 100.0

    @property
    def bounds(self):
        return [(self.lo, self.hi)]

    def make(self, theta) -> ConstantStrategy:
        return ConstantStrategy(c=float(theta[0]), floor=self.floor,
                                slack=self.slack, max_holding=self.max_holding)


@dataclass(frozen=True)
class StateLinearFamily:
    """Three-parameter family ``H = c0 + cv V + cb B`` in a coefficient box."""

    box: tuple = ((-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0))
    floor: float = 10.0
    slack: float = 1e-9
    max_holding: float = 100.0

    @property
    def bounds(self):
        return [tuple(map(float, b)) for b in self.box]

    def make(self, theta) -> StateLinearStrategy:
        return StateLinearStrategy(c0=float(theta[0]), cv=float(theta[1]),
                                   cb=float(theta[2]), floor=self.floor,
                                   slack=self.slack,
                                   max_holding=self.max_holding)


@dataclass(frozen=True)
class HedgeMixFamily:
    """Scaled hedge plus constant (and optionally B-linear) market exposure.

    The optional third coordinate weights a ``H = B`` rule whose gains are
    convex in the terminal driver; it lets the family reach the curved
    wealth profiles that a log/power optimum wants without touching the
    hedge component.
    """

    hedge: BucketStrategy = None
    scale_bounds: tuple = (-2.0, 2.0)
    const_bounds: tuple = (-2.0, 2.0)
    lin_bounds: tuple | None = None
    floor: float = 10.0
    slack: float = 1e-9
    max_holding: float = 100.0

    @property
    def bounds(self):
        out = [tuple(map(float, self.scale_bounds)),
               tuple(map(float, self.const_bounds))]
        if self.lin_bounds is not None:
            out.append(tuple(map(float, self.lin_bounds)))
        return out

    def make(self, theta) -> ScaledSumStrategy:
        const = ConstantStrategy(c=1.0, floor=self.floor, slack=self.slack,
                                 max_holding=self.max_holding)
        parts = [self.hedge, const]
        weights = [float(theta[0]), float(theta[1])]
        if self.lin_bounds is not None:
            parts.append(StateLinearStrategy(cb=1.0, floor=self.floor,
                                             slack=self.slack,
                                             max_holding=self.max_holding))
            weights.append(float(theta[2]))
        return ScaledSumStrategy(parts=tuple(parts), weights=tuple(weights),
                                 floor=self.floor, slack=self.slack,
                                 max_holding=self.max_holding)


@dataclass(frozen=True)
class PrimalOpt:
    """Outcome of a primal search over a strategy family."""

    theta: np.ndarray
    strategy: _StrategyBase
    result: PrimalResult
    evaluations: int


_BAD = 1e30


def optimize_primal(pair: ConjugatePair, x: float, family, bundle,
                    claim: ClaimSpec | None = None, constrained: bool = False,
                    budget: int = 120) -> PrimalOpt:
    """Search the family for the best primal bound with Nelder-Mead.

    All evaluations reuse the bundle's paths (common random numbers), so the
    search is deterministic given seed, family and budget.  Three fixed
    starting points share the budget; ties between restarts are broken
    lexicographically by coefficient vector.
    """
    bounds = family.bounds
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    dim = lo.size
    evals = 0

    def objective(theta):
        nonlocal evals
        evals += 1
        res = primal_bound(pair, x, family.make(theta), bundle,
                           claim=claim, constrained=constrained)
        m = res.estimate.mean
        return _BAD if m == -math.inf else -m

    starts = [0.5 * (lo + hi), 0.75 * lo + 0.25 * hi, 0.25 * lo + 0.75 * hi]
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
    strategy = family.make(best_theta)
    result = primal_bound(pair, x, strategy, bundle, claim=claim,
                          constrained=constrained)
    return PrimalOpt(theta=np.asarray(best_theta), strategy=strategy,
                     result=result, evaluations=evals)

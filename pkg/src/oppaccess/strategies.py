"""Construction of secondary transmission strategies and their predicted
capacity / probability-of-collision in closed or semi-closed form.

Every strategy is an explicit per-context list of transmit episodes
(start, end, probability); a context is the conditioning state the
secondary user can observe (one context for purely statistical knowledge,
one per traffic state for markov/full knowledge). Within an episode the
user transmits while the channel stays idle and aborts on the primary
arrival. All constructions are pure functions of their inputs.

Note on ties: when all rates coincide the value-to-cost ratio is constant
and every policy spending the same collision budget has equal capacity;
the tail policy is emitted as the canonical representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distribution import HyperExpDist
from .errors import ModelError, SolverError
from .smmpp import SmmppModel

TAU_BRACKET_FACTOR = 50.0
DEFAULT_EPSILON = 1e-3
RESIDUAL_TOL = 1e-12
COLLISION_TOL = 1e-11

STAT, MARKOV, FULL = "stat", "markov", "full"
_MODES = (STAT, MARKOV, FULL)


def solve_root(f, target: float, lo: float, hi: float,
               tol_res: float = RESIDUAL_TOL, max_iter: int = 250) -> float:
    """Bisection for monotone f: find x in [lo, hi] with f(x) = target.

    Stops on residual <= tol_res; keeps halving down to float resolution if
    the residual is still large, and reports failure when even that cannot
    resolve the target (e.g. a target smaller than one ulp of f can move).
    """
    if not hi > lo:
        raise SolverError(f"empty bracket [{lo!r}, {hi!r}]")
    flo, fhi = f(lo), f(hi)
    increasing = fhi >= flo
    a, b = (flo, fhi) if increasing else (fhi, flo)
    if not a - tol_res <= target <= b + tol_res:
        raise SolverError(
            f"target {target!r} outside f range [{a!r}, {b!r}] on bracket [{lo!r}, {hi!r}]")
    # a target tinier than the residual tolerance must be matched in
    # relative terms, otherwise any near-zero argument would pass
    tol_eff = tol_res if target == 0 else min(tol_res, 0.5 * abs(target))
    x_lo, x_hi = lo, hi
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (x_lo + x_hi)
        fm = f(mid)
        if abs(fm - target) <= tol_eff:
            return mid
        if (fm < target) == increasing:
            x_lo = mid
        else:
            x_hi = mid
        if x_hi - x_lo <= abs(mid) * 1e-17 + 5e-324:
            break
    resid = abs(f(mid) - target)
    if resid > tol_eff and resid > 1e-6 * abs(target):
        raise SolverError(
            f"bisection stalled at residual {resid:g} for target {target!r} "
            f"on bracket [{lo!r}, {hi!r}]")
    return mid


@dataclass(frozen=True)
class Episode:
    """One transmit window [start, end) entered with probability prob."""

    start: float
    end: float
    prob: float = 1.0

    def __post_init__(self):
        if not (self.start >= 0 and self.end > self.start):
            raise ValueError(f"episode must have 0 <= start < end, got {self}")
        if not 0 < self.prob <= 1:
            raise ValueError("episode probability must be in (0, 1]")


@dataclass(frozen=True)
class Strategy:
    """Per-context transmit schedule with stop-on-detection semantics."""

    mode: str
    episodes: tuple[tuple[Episode, ...], ...]
    name: str

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")
        eps = tuple(tuple(ctx) for ctx in self.episodes)
        if self.mode == STAT and len(eps) != 1:
            raise ValueError("statistical strategies have exactly one context")
        if not eps:
            raise ValueError("strategy needs at least one context")
        for ctx in eps:
            prev_end = 0.0
            for k, ep in enumerate(ctx):
                if k and ep.start < prev_end:
                    raise ValueError(f"episodes overlap or are unsorted in {self.name}")
                prev_end = ep.end
        object.__setattr__(self, "episodes", eps)

    @property
    def n_contexts(self) -> int:
        return len(self.episodes)

    def to_record(self) -> dict:
        return {
            "mode": self.mode,
            "name": self.name,
            "contexts": [
                [{"start": ep.start,
                  "end": None if math.isinf(ep.end) else ep.end,
                  "prob": ep.prob} for ep in ctx]
                for ctx in self.episodes
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Strategy":
        contexts = tuple(
            tuple(Episode(e["start"], math.inf if e["end"] is None else e["end"],
                          e.get("prob", 1.0)) for e in ctx)
            for ctx in rec["contexts"]
        )
        return cls(rec["mode"], contexts, rec["name"])


@dataclass(frozen=True)
class StrategyPrediction:
    """Closed-form capacity (s/cycle) and collision probability, with the
    per-context split for markov/full strategies."""

    capacity: float
    collision: float
    per_state: tuple | None = None


def _check_eta(eta: float):
    if not 0 < eta < 1:
        raise ValueError(f"collision budget must be in (0, 1), got {eta!r}")


def _episode_metrics(weights: np.ndarray, rates: np.ndarray,
                     episodes: tuple[Episode, ...]) -> tuple[float, float]:
    cap = col = 0.0
    for ep in episodes:
        ea = np.exp(-rates * ep.start)
        eb = np.exp(-rates * ep.end) if math.isfinite(ep.end) else np.zeros_like(rates)
        cap += ep.prob * float(np.sum(weights / rates * (ea - eb)))
        col += ep.prob * float(np.sum(weights * (ea - eb)))
    return cap, col


def _contexts_for(strategy: Strategy, source) -> list[tuple[float, np.ndarray, np.ndarray]]:
    if strategy.mode == STAT:
        if isinstance(source, SmmppModel):
            dist = source.marginal_dist()
        elif isinstance(source, HyperExpDist):
            dist = source
        else:
            raise ModelError(f"unsupported source {type(source).__name__}")
        return [(1.0, dist.weights, dist.rates)]
    if not isinstance(source, SmmppModel):
        raise ModelError(f"{strategy.mode}-mode strategies need an SmmppModel source")
    if strategy.n_contexts != source.n:
        raise ModelError(
            f"strategy has {strategy.n_contexts} contexts but model has {source.n} states")
    out = []
    for i in range(source.n):
        if strategy.mode == MARKOV:
            d = source.conditional_next_dist(i)
            out.append((float(source.steady[i]), d.weights, d.rates))
        else:
            out.append((float(source.steady[i]), np.array([1.0]), source.rates[i:i + 1]))
    return out


def predict(strategy: Strategy, source) -> StrategyPrediction:
    """Evaluate the capacity and collision integrals of a schedule under the
    given idle-time law, context-weighted by the stationary distribution."""
    contexts = _contexts_for(strategy, source)
    per = []
    capacity = collision = 0.0
    for (cw, w, r), ctx in zip(contexts, strategy.episodes):
        cap, col = _episode_metrics(w, r, ctx)
        per.append((cap, col))
        capacity += cw * cap
        collision += cw * col
    per_state = tuple(per) if strategy.mode != STAT else None
    return StrategyPrediction(capacity, collision, per_state)


def _tau_hi(rates: np.ndarray) -> float:
    return TAU_BRACKET_FACTOR / float(rates.min())


def _solve_cdf_time(weights: np.ndarray, rates: np.ndarray, mass: float) -> float:
    """Smallest t with 1 - sum(w exp(-r t)) = mass; 'effectively infinite'
    when the root lies beyond the standard bracket."""
    hi = _tau_hi(rates)

    def cdf(t):
        return 1.0 - float(np.sum(weights * np.exp(-rates * t)))

    if cdf(hi) < mass:
        raise SolverError(
            f"transmission cap for collision mass {mass:g} is effectively infinite "
            f"(beyond {hi:g} s)")
    return solve_root(cdf, mass, 0.0, hi)


def always_transmit() -> Strategy:
    """Transmit whenever the channel is idle; collision probability 1."""
    return Strategy(STAT, ((Episode(0.0, math.inf),),), "always_transmit")


def stat_one_shot(dist: HyperExpDist, eta: float) -> Strategy:
    """Transmit from the start of each idle time up to the cap that spends
    the whole collision budget."""
    _check_eta(eta)
    tau = _solve_cdf_time(dist.weights, dist.rates, eta)
    return Strategy(STAT, ((Episode(0.0, tau),),), "stat_one_shot")


def stat_optimal(dist: HyperExpDist, eta: float) -> Strategy:
    """Wait until the survival mass drops to eta, then transmit to the end
    of the idle time. Optimal under purely statistical knowledge because
    the value-to-cost ratio is nondecreasing."""
    _check_eta(eta)
    hi = _tau_hi(dist.rates)

    def ccdf(t):
        return float(np.sum(dist.weights * np.exp(-dist.rates * t)))

    if ccdf(hi) > eta:
        raise SolverError(
            f"waiting threshold for budget {eta:g} is effectively infinite (beyond {hi:g} s)")
    tau = solve_root(ccdf, eta, 0.0, hi)
    return Strategy(STAT, ((Episode(tau, math.inf),),), "stat_optimal")


def markov_os_balanced(model: SmmppModel, eta: float) -> Strategy:
    """Per previous state, transmit from time zero up to the cap putting the
    same collision probability eta on every state."""
    _check_eta(eta)
    ctxs = []
    for i in range(model.n):
        d = model.conditional_next_dist(i)
        tau = _solve_cdf_time(d.weights, d.rates, eta)
        ctxs.append((Episode(0.0, tau),))
    return Strategy(MARKOV, tuple(ctxs), "markov_os_balanced")


def markov_os_suboptimal(model: SmmppModel, eta: float) -> Strategy:
    """Concentrate the collision budget on the previous-states worth the
    most: order states by conditional mean idle time descending, let whole
    states transmit freely until the budget runs out, cap the marginal
    state, silence the rest."""
    _check_eta(eta)
    cond = [model.conditional_next_dist(i) for i in range(model.n)]
    benefit = np.array([d.mean() for d in cond])
    order = np.argsort(-benefit, kind="stable")
    alpha = model.steady[order]
    prefix = np.cumsum(alpha)
    m = int(np.searchsorted(prefix, eta, side="left"))
    spent = float(prefix[m - 1]) if m > 0 else 0.0
    ctxs: list[tuple[Episode, ...]] = [() for _ in range(model.n)]
    for k in range(m):
        ctxs[order[k]] = (Episode(0.0, math.inf),)
    residual = (eta - spent) / float(alpha[m])
    if residual >= 1.0 - 1e-12:
        ctxs[order[m]] = (Episode(0.0, math.inf),)
    elif residual > 0.0:
        d = cond[order[m]]
        tau = _solve_cdf_time(d.weights, d.rates, residual)
        ctxs[order[m]] = (Episode(0.0, tau),)
    return Strategy(MARKOV, tuple(ctxs), "markov_os_suboptimal")


def markov_opt_balanced(model: SmmppModel, eta: float) -> Strategy:
    """Per previous state, the tail policy spending eta under that state's
    conditional idle-time law."""
    _check_eta(eta)
    ctxs = []
    for i in range(model.n):
        d = model.conditional_next_dist(i)
        hi = _tau_hi(d.rates)

        def ccdf(t, d=d):
            return float(np.sum(d.weights * np.exp(-d.rates * t)))

        if ccdf(hi) > eta:
            raise SolverError(
                f"state {i} waiting threshold for budget {eta:g} is effectively infinite")
        tau = solve_root(ccdf, eta, 0.0, hi)
        ctxs.append((Episode(tau, math.inf),))
    return Strategy(MARKOV, tuple(ctxs), "markov_opt_balanced")


class _ConditionalRow:
    """Log-domain view of one conditional mixture for the cross-state
    threshold search.

    The optimal cross-state allocation equalizes the value-to-cost ratio
    (1-F_i)/f_i across active states. That ratio equals 1/(lam_min + phi)
    where phi is the hazard excess over the globally slowest rate, so the
    search runs on log(phi): the ratio itself can approach its supremum
    closer than one double ulp for well-separated rates, while log(phi)
    stays perfectly resolvable.
    """

    def __init__(self, weights: np.ndarray, rates: np.ndarray, lam_star: float):
        self.w = weights
        self.r = rates
        self.lam_star = lam_star
        above = rates > lam_star
        self.log_num_w = np.log(weights[above] * (rates[above] - lam_star))
        self.num_r = rates[above]
        self.constant = not np.any(above)  # phi identically 0 (pure lam_star row)
        self.single_atom = weights.size == 1 and above.any()
        # phi at tau=0 and its large-tau limit
        self.log_phi0 = -math.inf if self.constant else self._log_phi(0.0)
        self.log_asym = math.log(rates.min() - lam_star) if rates.min() > lam_star else -math.inf

    def _log_phi(self, tau: float) -> float:
        num = self.log_num_w - self.num_r * tau
        den = np.log(self.w) - self.r * tau
        return _logsumexp(num) - _logsumexp(den)

    def tau_at(self, log_phi_bar: float) -> float:
        """Smallest tau with log phi(tau) <= log_phi_bar; inf if unreachable."""
        if self.constant or log_phi_bar >= self.log_phi0:
            return 0.0
        if log_phi_bar <= self.log_asym:
            return math.inf
        hi = 1.0 / float(self.r.min())
        for _ in range(200):
            if self._log_phi(hi) < log_phi_bar:
                break
            hi *= 2.0
        else:
            return math.inf
        lo = 0.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if self._log_phi(mid) > log_phi_bar:
                lo = mid
            else:
                hi = mid
            if hi - lo <= hi * 1e-15:
                break
        return 0.5 * (lo + hi)

    def ccdf(self, tau: float) -> float:
        if math.isinf(tau):
            return 0.0
        return float(np.exp(_logsumexp(np.log(self.w) - self.r * tau)))


def _logsumexp(v: np.ndarray) -> float:
    m = np.max(v)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(v - m))))


def markov_optimal(model: SmmppModel, eta: float,
                   collision_tol: float = COLLISION_TOL) -> Strategy:
    """Optimal allocation of the collision budget across time and previous
    states: one common value-to-cost threshold, realized per state as a
    tail policy (or full / no transmission when the state's ratio range
    sits entirely above / below the threshold).

    States whose conditional law is a single exponential have a constant
    ratio; when the threshold lands exactly on one of them, that state
    absorbs the residual budget through a partial tail policy, which spends
    the same budget at the same ratio as the randomized-probability form.
    """
    _check_eta(eta)
    rows = []
    for i in range(model.n):
        d = model.conditional_next_dist(i)
        rows.append(_ConditionalRow(d.weights, d.rates, float(model.rates.min())))
    alpha = model.steady

    def total_collision(log_phi_bar: float) -> tuple[float, list[float]]:
        taus = []
        for row in rows:
            if row.single_atom:
                # constant ratio: include the whole state only above its level
                taus.append(0.0 if log_phi_bar > row.log_asym else math.inf)
            else:
                taus.append(row.tau_at(log_phi_bar))
        coll = float(sum(a * row.ccdf(t) for a, row, t in zip(alpha, rows, taus)))
        return coll, taus

    log_hi = max((r.log_phi0 for r in rows if not r.constant), default=0.0)
    log_hi = log_hi + 1.0 if math.isfinite(log_hi) else 1.0
    log_lo = -800.0
    while total_collision(log_lo)[0] > eta + collision_tol and log_lo > -1e7:
        log_lo *= 4.0
    c_lo, taus = total_collision(log_lo)
    if abs(c_lo - eta) <= collision_tol:
        return _episodes_from_taus(model, taus, "markov_optimal")
    if c_lo > eta:
        # threshold sits at the global ratio supremum: only the pure
        # slowest-rate states can be active, and only partially
        for i, row in enumerate(rows):
            taus[i] = math.inf if row.constant else taus[i]
        at_jump = [i for i, row in enumerate(rows) if row.constant]
        return _finish_with_atoms(model, rows, alpha, taus, eta, collision_tol, at_jump)
    lo, hi = log_lo, log_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        coll, taus = total_collision(mid)
        if abs(coll - eta) <= collision_tol:
            return _episodes_from_taus(model, taus, "markov_optimal")
        if coll < eta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= max(abs(mid), 1.0) * 1e-14:
            break
    coll, taus = total_collision(lo)
    if eta - coll > collision_tol:
        # the collision curve jumps inside (lo, hi]: a constant-ratio state
        # sits exactly at the threshold and absorbs the residual
        at_jump = [i for i, row in enumerate(rows)
                   if row.single_atom and lo < row.log_asym <= hi + 1e-12]
        return _finish_with_atoms(model, rows, alpha, taus, eta, collision_tol, at_jump)
    return _episodes_from_taus(model, taus, "markov_optimal")


def _finish_with_atoms(model, rows, alpha, taus, eta, collision_tol, at_jump):
    """Close the budget gap left by a jump of the collision curve: spread
    the residual over the constant-ratio states at the jump level. Their
    value-to-cost is flat, so any schedule spending the same mass is
    optimal; the tail form is the canonical one."""
    for i, row in enumerate(rows):
        if not math.isinf(taus[i]) and taus[i] > 0.0 and row.ccdf(taus[i]) == 0.0:
            taus[i] = math.inf
    coll = float(sum(a * row.ccdf(t) for a, row, t in zip(alpha, rows, taus)))
    residual = eta - coll
    if residual < -collision_tol:
        raise SolverError("collision budget overshot while resolving a threshold tie")
    for i in at_jump:
        if residual <= collision_tol:
            break
        row = rows[i]
        state_mass = float(alpha[i])
        take = min(residual, state_mass)
        share = take / state_mass
        if share >= 1.0 - 1e-12:
            taus[i] = 0.0
        else:
            rate = float(row.r.min())
            taus[i] = math.log(1.0 / share) / rate
        residual -= take
    if residual > max(collision_tol, 1e-9):
        raise SolverError(
            f"could not place residual collision mass {residual:g}; "
            "no state sits at the threshold level")
    return _episodes_from_taus(model, taus, "markov_optimal")


def _episodes_from_taus(model, taus, name) -> Strategy:
    ctxs = []
    for t in taus:
        if math.isinf(t):
            ctxs.append(())
        else:
            ctxs.append((Episode(t, math.inf),))
    return Strategy(MARKOV, tuple(ctxs), name)


def full_balanced(model: SmmppModel, eta: float) -> Strategy:
    """Knowing the current state, transmit from time zero with the same
    per-state collision probability eta: cap_i = log(1/(1-eta))/lam_i."""
    _check_eta(eta)
    caps = np.log1p(-eta) / -model.rates
    ctxs = tuple((Episode(0.0, float(t)),) for t in caps)
    return Strategy(FULL, ctxs, "full_balanced")


def full_optimal(model: SmmppModel, eta: float) -> Strategy:
    """Knowing the current state, spend the whole budget on the slowest
    states: full transmission on the longest-idle states that fit in the
    budget, a front cap on the marginal state sized to the residual budget,
    silence elsewhere."""
    _check_eta(eta)
    prefix = np.cumsum(model.steady)
    m = int(np.searchsorted(prefix, eta, side="left"))
    spent = float(prefix[m - 1]) if m > 0 else 0.0
    residual = (eta - spent) / float(model.steady[m])
    ctxs: list[tuple[Episode, ...]] = [() for _ in range(model.n)]
    for i in range(m):
        ctxs[i] = (Episode(0.0, math.inf),)
    if residual >= 1.0 - 1e-12:
        ctxs[m] = (Episode(0.0, math.inf),)
    elif residual > 0.0:
        cap = math.log1p(-residual) / -float(model.rates[m])
        ctxs[m] = (Episode(0.0, cap),)
    return Strategy(FULL, tuple(ctxs), "full_optimal")


def multiple_shot(rates, eta: float, epsilon: float = DEFAULT_EPSILON) -> Strategy:
    """Rate-only robust schedule: a short shot sized for the fastest rate,
    then for each slower rate a confidence wait (survival below epsilon
    rules the faster rate out) followed by another shot sized for that
    rate. Mixture weights never enter, so the collision probability stays
    below eta whichever way the weights drift.
    """
    _check_eta(eta)
    r = np.atleast_1d(np.asarray(rates, dtype=float))
    if r.size < 1 or np.any(r <= 0):
        raise ValueError("rates must be positive")
    if np.any(np.diff(r) <= 0):
        raise ValueError("rates must be strictly ascending")
    if not 0 < epsilon < 1 - eta:
        raise ValueError(f"epsilon must be in (0, 1 - eta), got {epsilon!r}")
    shot = math.log1p(-eta) / -r          # per-rate transmission caps
    wait = math.log(1.0 / epsilon) / r    # per-rate confidence waits
    episodes = [Episode(0.0, float(shot[-1]))]
    for i in range(r.size - 2, -1, -1):
        start = float(wait[i + 1])
        end = start + float(shot[i])
        prev = episodes[-1]
        if start < prev.end:
            raise ModelError(
                f"multiple-shot episodes overlap between rates {r[i + 1]:g} and "
                f"{r[i]:g}: wait {start:g} starts before previous shot ends at "
                f"{prev.end:g}; increase the rate separation or lower eta/epsilon")
        episodes.append(Episode(start, end))
    return Strategy(STAT, (tuple(episodes),), "multiple_shot")


def markov_os_balanced_small_eta_capacity(model: SmmppModel, eta: float) -> float:
    """Linearized capacity sum(alpha_i * eta / sum_j p_ij lam_j); exact only
    while every cap stays well inside all component time scales."""
    _check_eta(eta)
    row_rates = model.transition @ model.rates
    return float(np.sum(model.steady * eta / row_rates))


def multiple_shot_small_eta_capacity(weights, rates, eta: float,
                                     epsilon: float = DEFAULT_EPSILON) -> float:
    """Small-eta capacity of the multiple-shot schedule under design weights:
    each slow component contributes its shots discounted by the probability
    of surviving the preceding confidence waits."""
    _check_eta(eta)
    w = np.atleast_1d(np.asarray(weights, dtype=float))
    r = np.atleast_1d(np.asarray(rates, dtype=float))
    if w.shape != r.shape:
        raise ValueError("weights and rates must align")
    n = r.size
    wait = np.log(1.0 / epsilon) / r
    total = eta / r[-1]
    for j in range(n - 1):
        total += w[j] * sum(math.exp(-r[j] * wait[i + 1]) * eta / r[i]
                            for i in range(j, n - 1))
    return float(total)


CONSTRUCTORS = {
    "always_transmit": always_transmit,
    "stat_one_shot": stat_one_shot,
    "stat_optimal": stat_optimal,
    "multiple_shot": multiple_shot,
    "markov_os_balanced": markov_os_balanced,
    "markov_os_suboptimal": markov_os_suboptimal,
    "markov_opt_balanced": markov_opt_balanced,
    "markov_optimal": markov_optimal,
    "full_balanced": full_balanced,
    "full_optimal": full_optimal,
}

"""Discrete-event evaluation of transmission strategies against idle traces.

A cycle is one idle duration ended by a primary arrival. The secondary
user transmits inside its scheduled episodes while the channel stays idle
(perfect zero-delay sensing) and collides exactly when the arrival lands
inside an active episode; at most one collision per cycle. Collision is
continuous-time: an episode (a, b] collides with idle duration X iff
a < X <= b.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ModelError
from .smmpp import IdleTrace, SmmppModel
from .strategies import FULL, STAT, Strategy

DEFAULT_WINDOW = 100
SE_BATCH = 1000


@dataclass(frozen=True)
class SimResult:
    """Measured outcome of one strategy/trace run.

    Standard errors come from batch means (batches of ~1000 cycles), which
    stays honest when the traffic states make consecutive cycles dependent.
    ``window_collisions`` holds collided counts per full window of
    ``window`` cycles; ``outage_prob`` is the fraction of those windows
    whose collision rate strictly exceeds the stated budget (None when no
    budget was given).
    """

    n_cycles: int
    total_access: float
    capacity: float
    collided_count: int
    collision_prob: float
    capacity_se: float
    collision_se: float
    window: int
    window_collisions: np.ndarray = field(repr=False)
    collided: np.ndarray = field(repr=False)
    access: np.ndarray = field(repr=False)
    first_context: int | None = None
    eta: float | None = None
    outage_prob: float | None = None


def _context_ids(trace: IdleTrace, strategy: Strategy, source, rng) -> tuple[np.ndarray, int | None]:
    if strategy.mode == STAT:
        return np.zeros(trace.n, dtype=np.int64), None
    if trace.states is None:
        raise DataError(
            f"{strategy.mode}-mode strategies need state labels, trace has none")
    if int(trace.states.max()) >= strategy.n_contexts:
        raise DataError(
            f"trace state {int(trace.states.max())} out of range for "
            f"{strategy.n_contexts} strategy contexts")
    if strategy.mode == FULL:
        return trace.states.astype(np.int64), None
    if not isinstance(source, SmmppModel):
        raise ModelError("markov mode needs the model to draw the initial conditioning state")
    first = int(np.searchsorted(np.cumsum(source.steady), rng.random(), side="right"))
    first = min(first, source.n - 1)
    ctx = np.empty(trace.n, dtype=np.int64)
    ctx[0] = first
    ctx[1:] = trace.states[:-1]
    return ctx, first


def run(trace: IdleTrace, strategy: Strategy, source=None, seed=0,
        window: int = DEFAULT_WINDOW, eta: float | None = None) -> SimResult:
    """Play a strategy over every cycle of a trace.

    ``source`` is only consulted in markov mode (initial conditioning state
    drawn from its stationary law). Episode transmit probabilities below 1
    consume one Bernoulli draw per episode per cycle from the seeded
    stream, so identical (trace, strategy, seed) reproduce exactly.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    rng = np.random.default_rng(seed)
    ctx_ids, first_context = _context_ids(trace, strategy, source, rng)
    x = trace.durations
    n = trace.n
    access = np.zeros(n)
    collided = np.zeros(n, dtype=bool)
    for c, episodes in enumerate(strategy.episodes):
        in_ctx = ctx_ids == c
        for ep in episodes:
            if ep.prob < 1.0:
                active = in_ctx & (rng.random(n) < ep.prob)
            else:
                active = in_ctx
            started = active & (x > ep.start)
            if math.isinf(ep.end):
                access[started] += x[started] - ep.start
                collided[started] = True
            else:
                access[started] += np.minimum(x[started], ep.end) - ep.start
                collided[started] |= x[started] <= ep.end
    total = float(access.sum())
    count = int(collided.sum())
    n_windows = n // window
    window_collisions = collided[: n_windows * window].reshape(n_windows, window).sum(axis=1)
    outage_prob = None
    if eta is not None and n_windows >= 1:
        outage_prob = float(np.mean(window_collisions / window > eta))
    return SimResult(
        n_cycles=n,
        total_access=total,
        capacity=total / n,
        collided_count=count,
        collision_prob=count / n,
        capacity_se=_batch_se(access),
        collision_se=_batch_se(collided.astype(float)),
        window=window,
        window_collisions=window_collisions,
        collided=collided,
        access=access,
        first_context=first_context,
        eta=eta,
        outage_prob=outage_prob,
    )


def _batch_se(values: np.ndarray, batch: int = SE_BATCH) -> float:
    n = values.size
    n_batches = n // batch
    if n_batches >= 2:
        means = values[: n_batches * batch].reshape(n_batches, batch).mean(axis=1)
        return float(means.std(ddof=1) / math.sqrt(n_batches))
    return float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")


def outage(result: SimResult, eta: float, window: int | None = None) -> float:
    """Fraction of full fixed-size windows whose collision rate strictly
    exceeds the budget."""
    w = result.window if window is None else int(window)
    if w < 1:
        raise ValueError("window must be >= 1")
    n_windows = result.n_cycles // w
    if n_windows < 1:
        raise DataError(f"trace too short for a single window of {w} cycles")
    counts = result.collided[: n_windows * w].reshape(n_windows, w).sum(axis=1)
    return float(np.mean(counts / w > eta))


@dataclass(frozen=True)
class CompareRow:
    name: str
    capacity: float
    collision_prob: float
    outage_prob: float
    result: SimResult = field(repr=False)


def compare(strategies: dict[str, Strategy], trace: IdleTrace, eta: float,
            seed=0, source=None, window: int = DEFAULT_WINDOW) -> list[CompareRow]:
    """Run several strategies over the identical trace.

    Randomness is shared only through the trace; each strategy gets its own
    child stream of the given seed for its Bernoulli draws and initial
    context. Rows come back in input order.
    """
    seeds = np.random.SeedSequence(seed).spawn(len(strategies))
    rows = []
    for (name, strategy), child in zip(strategies.items(), seeds):
        res = run(trace, strategy, source=source, seed=child, window=window, eta=eta)
        rows.append(CompareRow(name, res.capacity, res.collision_prob, res.outage_prob, res))
    return rows

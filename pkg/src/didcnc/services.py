"""Service chains, clients, and live-packet arrival processes."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Function:
    scaling: float       # output live units per input live unit
    workload: float      # compute units per input live unit
    database: int        # database holding the static objects
    merging: float       # static units per input live unit

    def __post_init__(self):
        if self.scaling <= 0 or self.workload <= 0:
            raise ValueError("scaling and workload must be positive")
        if self.merging < 0:
            raise ValueError("merging ratio must be nonnegative")


@dataclass(frozen=True)
class ServiceSpec:
    """A chain of functions; ``n_stages`` = number of functions + 1."""

    id: str
    functions: tuple[Function, ...] = ()
    packet_size: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "functions", tuple(self.functions))

    @property
    def n_stages(self) -> int:
        return len(self.functions) + 1

    def databases(self) -> set[int]:
        return {f.database for f in self.functions}


@functools.lru_cache(maxsize=1024)
def cumulative_scaling(spec: ServiceSpec) -> np.ndarray:
    """Live units at stage m per initial live unit (stage 1 has 1); read-only."""
    out = np.ones(spec.n_stages)
    for m, f in enumerate(spec.functions, start=1):
        out[m] = out[m - 1] * f.scaling
    out.flags.writeable = False
    return out


@dataclass
class Client:
    """Source, destination and service plus a mean arrival rate.

    ``rate`` is in live units per slot; ``popularity`` is used when rates are
    derived from an aggregate rate.  ``max_burst`` defaults to ten times the
    mean (at least one packet).
    """

    id: str
    source: int
    destination: int
    service: ServiceSpec
    rate: float = 0.0
    popularity: float = 0.0
    max_burst: int | None = None

    def burst_cap(self, rate: float | None = None) -> int:
        if self.max_burst is not None:
            return self.max_burst
        lam = self.rate if rate is None else rate
        return max(1, math.ceil(10 * lam))


def zipf_popularity(n: int, gamma: float = 1.0, order: Sequence[int] | None = None) -> np.ndarray:
    """Zipf weights ``rank**-gamma`` normalised; ``order[c]`` is client c's rank (0-based)."""
    if n < 1 or gamma < 0:
        raise ValueError("need n >= 1 and gamma >= 0")
    base = np.arange(1, n + 1, dtype=float) ** (-gamma)
    base /= base.sum()
    if order is None:
        return base
    order = np.asarray(order)
    if sorted(order.tolist()) != list(range(n)):
        raise ValueError("order must be a permutation of 0..n-1")
    return base[order]


class PopularityChain:
    """Markov-modulated popularity: a Zipf distribution over a permutation.

    Each slot, with probability ``swap_prob``, a rank ``r`` in 0..n-2 is drawn
    uniformly and the clients holding ranks r and r+1 exchange them.
    """

    def __init__(self, n: int, gamma: float, swap_prob: float, rng: np.random.Generator,
                 order: Sequence[int] | None = None):
        self.n = n
        self.gamma = gamma
        self.swap_prob = swap_prob
        self.rng = rng
        self.order = np.array(order if order is not None else rng.permutation(n))
        self.swaps = 0
        self._p = zipf_popularity(n, gamma, self.order)

    @property
    def popularity(self) -> np.ndarray:
        return self._p

    def advance(self) -> bool:
        if self.n < 2 or self.rng.random() >= self.swap_prob:
            return False
        r = int(self.rng.integers(0, self.n - 1))
        a = int(np.flatnonzero(self.order == r)[0])
        b = int(np.flatnonzero(self.order == r + 1)[0])
        self.order[a], self.order[b] = r + 1, r
        self._p = zipf_popularity(self.n, self.gamma, self.order)
        self.swaps += 1
        return True


class MarkovModulated:
    """Generic modulating chain: per-state rate vectors and a transition matrix."""

    def __init__(self, rates, transition, rng: np.random.Generator, state: int = 0):
        self.rates = np.asarray(rates, dtype=float)
        self.transition = np.asarray(transition, dtype=float)
        if not np.allclose(self.transition.sum(axis=1), 1.0):
            raise ValueError("transition rows must sum to 1")
        self.rng = rng
        self.state = state

    def current_rates(self) -> np.ndarray:
        return self.rates[self.state]

    def advance(self) -> bool:
        nxt = int(self.rng.choice(len(self.transition), p=self.transition[self.state]))
        changed = nxt != self.state
        self.state = nxt
        return changed


@dataclass
class ArrivalStats:
    clipped: int = 0
    drawn: int = 0


def draw_arrivals(rates: np.ndarray, caps: np.ndarray, rng: np.random.Generator,
                  stats: ArrivalStats | None = None) -> np.ndarray:
    """One slot of Poisson arrivals per client, clipped at the burst caps."""
    a = rng.poisson(rates)
    if stats is not None:
        over = a > caps
        if over.any():
            stats.clipped += int((a - caps)[over].sum())
            a = np.minimum(a, caps)
        stats.drawn += int(a.sum())
    else:
        a = np.minimum(a, caps)
    return a


@dataclass
class ArrivalProcess:
    """Per-run arrival generator; owns the modulating chain (if any).

    ``mode`` is ``"iid"`` (fixed client rates), ``"popularity"`` (aggregate
    rate split by a :class:`PopularityChain`) or ``"markov"``.
    """

    clients: list[Client]
    rng: np.random.Generator
    mode: str = "iid"
    total_rate: float = 0.0
    chain: PopularityChain | MarkovModulated | None = None
    stats: ArrivalStats = field(default_factory=ArrivalStats)

    def __post_init__(self):
        self._fixed_rates = np.array([c.rate for c in self.clients], dtype=float)
        self._fixed_caps = np.array([c.burst_cap() for c in self.clients], dtype=np.int64)

    def rates(self) -> np.ndarray:
        if self.mode == "iid":
            return self._fixed_rates
        if self.mode == "popularity":
            return self.total_rate * self.chain.popularity
        return self.chain.current_rates()

    def draw(self) -> np.ndarray:
        if self.mode == "iid":
            rates, caps = self._fixed_rates, self._fixed_caps
        else:
            self.chain.advance()
            rates = self.rates()
            caps = np.array([c.burst_cap(r) for c, r in zip(self.clients, rates)], dtype=np.int64)
        return draw_arrivals(rates, caps, self.rng, self.stats)

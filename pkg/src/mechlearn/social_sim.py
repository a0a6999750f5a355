"""Sequential adoption with binary signals and observation networks.

Agents arrive in order, each sees a private binary signal (a belief of
``l`` or ``h``) and the actions of the predecessors its network lets it
observe, then accepts iff its posterior likelihood ratio is at least one.
Indifferent agents accept.

Full observation is solved with the public-belief recursion; arbitrary
networks are solved exactly by enumerating predecessor signal profiles,
which caps them at 12 agents.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .exceptions import ConfigError, UnsupportedNetwork
from .rng import stream

MAX_CUSTOM_AGENTS = 12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BinarySignalModel:
    """Binary beliefs ``l < 1/2 < h`` with an unbiased prior.

    ``p_h`` is the unconditional probability of the high signal, pinned down
    by the mean-belief condition ``p_h h + (1 - p_h) l = 1/2``.
    """

    low: float
    high: float

    def __post_init__(self):
        if not (0.0 < self.low < 0.5 < self.high < 1.0):
            raise ConfigError("signal beliefs need 0 < l < 1/2 < h < 1")

    @property
    def p_high(self) -> float:
        return (0.5 - self.low) / (self.high - self.low)

    def p_high_given(self, state: int) -> float:
        """``P(h | state)``; belief ``h`` has conditional weight ``2h`` or ``2(1-h)``."""
        weight = 2.0 * self.high if state == 1 else 2.0 * (1.0 - self.high)
        return self.p_high * weight

    @property
    def log_lr_high(self) -> float:
        return math.log(self.high / (1.0 - self.high))

    @property
    def log_lr_low(self) -> float:
        return math.log(self.low / (1.0 - self.low))


def cascade_condition(model: BinarySignalModel) -> str:
    """``reject`` if one low signal outweighs one high signal, else ``accept``.

    At ``l + h = 1`` the posterior after one of each is exactly one half and
    the indifferent agent accepts.
    """
    return "reject" if model.low + model.high < 1.0 - TIE_TOL else "accept"


@dataclass(frozen=True)
class QueueNetwork:
    """Who observes whom: ``observe[i]`` lists predecessors seen by agent i."""

    n: int
    kind: str = "full"
    observe: tuple = field(default=())

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("network needs at least one agent")
        if self.kind not in ("full", "empty", "custom"):
            raise ConfigError(f"unknown network kind {self.kind!r}")
        if self.kind == "custom":
            if len(self.observe) != self.n:
                raise ConfigError("custom network needs one observation list per agent")
            for i, seen in enumerate(self.observe):
                if any(not (0 <= j < i) for j in seen):
                    raise ConfigError(f"agent {i} may only observe predecessors")

    def observed(self, i: int) -> tuple[int, ...]:
        if self.kind == "full":
            return tuple(range(i))
        if self.kind == "empty":
            return ()
        return tuple(sorted(set(self.observe[i])))

    @classmethod
    def from_config(cls, config: dict[str, Any]) -> "QueueNetwork":
        try:
            n = int(config["n"])
            obs = config.get("observe", "full")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad network spec: {exc}") from exc
        if isinstance(obs, str):
            return cls(n, obs)
        return cls(n, "custom", tuple(tuple(int(j) for j in row) for row in obs))


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


def _decide(log_public: float, log_own: float) -> bool:
    return log_public + log_own >= -TIE_TOL


def _full_strategy_sim(model, signals):
    """Vectorized public-belief recursion; returns actions and informativeness."""
    trials, n = signals.shape
    public = np.zeros(trials)
    actions = np.zeros((trials, n), dtype=bool)
    informative = np.zeros((trials, n), dtype=bool)
    for i in range(n):
        acc_h = public + model.log_lr_high >= -TIE_TOL
        acc_l = public + model.log_lr_low >= -TIE_TOL
        act = np.where(signals[:, i], acc_h, acc_l)
        info = acc_h != acc_l
        public = public + np.where(info, np.where(act, model.log_lr_high, model.log_lr_low), 0.0)
        actions[:, i], informative[:, i] = act, info
    return actions, informative


def custom_strategies(model: BinarySignalModel, network: QueueNetwork) -> list[dict]:
    """Exact Bayesian decision tables by enumerating signal profiles.

    Entry ``i`` maps ``(observed actions tuple, own signal) -> accept``.
    """
    n = network.n
    if n > MAX_CUSTOM_AGENTS:
        raise UnsupportedNetwork(f"exact enumeration supports at most {MAX_CUSTOM_AGENTS} agents")
    p = {s: model.p_high_given(s) for s in (1, -1)}
    width = max(n - 1, 0)
    profiles = np.array(list(itertools.product((0, 1), repeat=width)), dtype=bool).reshape(2**width, width)
    weight = {s: np.prod(np.where(profiles, p[s], 1.0 - p[s]), axis=1) for s in (1, -1)}
    actions = np.zeros_like(profiles)
    tables = []
    for i in range(n):
        seen = network.observed(i)
        keys = [tuple(row) for row in actions[:, list(seen)]] if seen else [()] * len(profiles)
        like = {}
        for k, key in enumerate(keys):
            lp, lm = like.get(key, (0.0, 0.0))
            like[key] = (lp + weight[1][k], lm + weight[-1][k])
        table = {}
        for key, (lp, lm) in like.items():
            log_public = math.log(lp) - math.log(lm) if lp > 0 and lm > 0 else (math.inf if lp > 0 else -math.inf)
            table[(key, True)] = _decide(log_public, model.log_lr_high)
            table[(key, False)] = _decide(log_public, model.log_lr_low)
        tables.append(table)
        if i < n - 1:
            actions[:, i] = [table[(key, bool(sig))] for key, sig in zip(keys, profiles[:, i])]
    return tables


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueueResult:
    """Per-position acceptance and cascade statistics."""

    acceptance_rate: np.ndarray
    se: np.ndarray
    trials: int
    cascade_frequency: float
    reject_cascade_frequency: float
    accept_cascade_frequency: float
    mean_cascade_onset: float
    follow_first_reject: float
    cascade_consistent: bool

    @property
    def mean_acceptance(self) -> float:
        return float(np.mean(self.acceptance_rate))

    def rows(self):
        return [(i + 1, float(r), float(e)) for i, (r, e) in enumerate(zip(self.acceptance_rate, self.se))]


def simulate_queue(
    network: QueueNetwork,
    model: BinarySignalModel,
    trials: int = 1_000_000,
    seed: int = 0,
    chunk: int = 250_000,
) -> QueueResult:
    """Monte Carlo of the adoption queue.

    A cascade starts at the first agent whose action does not depend on its
    signal; every later action in that trial must then repeat it, which is
    checked for full and empty networks.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    n = network.n
    tables = custom_strategies(model, network) if network.kind == "custom" else None
    accept = np.zeros(n)
    onset_sum = cascades = reject_c = accept_c = 0
    first_reject = follow = 0
    consistent = True
    done, part = 0, 0
    while done < trials:
        size = min(chunk, trials - done)
        rng = stream(seed, part)
        state = np.where(rng.random(size) < 0.5, 1, -1)
        prob_h = np.where(state == 1, model.p_high_given(1), model.p_high_given(-1))
        signals = rng.random((size, n)) < prob_h[:, None]
        if network.kind == "full":
            actions, informative = _full_strategy_sim(model, signals)
        elif network.kind == "empty":
            actions, informative = signals.copy(), np.ones((size, n), dtype=bool)
        else:
            actions, informative = _table_sim(tables, network, signals)
        accept += actions.sum(axis=0)
        in_cascade = ~informative
        has = in_cascade.any(axis=1)
        onset = np.argmax(in_cascade, axis=1)
        cascades += int(has.sum())
        onset_sum += int(onset[has].sum())
        if network.kind != "custom" and has.any():
            rows = np.flatnonzero(has)
            ref = actions[rows, onset[rows]]
            after = np.arange(n)[None, :] >= onset[rows, None]
            consistent &= bool(np.all(~after | (actions[rows] == ref[:, None])))
        if has.any():
            rows = np.flatnonzero(has)
            kind = actions[rows, onset[rows]]
            accept_c += int(kind.sum())
            reject_c += int((~kind).sum())
        if n > 1:
            rej = ~actions[:, 0]
            first_reject += int(rej.sum())
            follow += int(np.all(~actions[rej, 1:], axis=1).sum())
        done += size
        part += 1
    rate = accept / trials
    return QueueResult(
        acceptance_rate=rate,
        se=np.sqrt(rate * (1 - rate) / trials),
        trials=trials,
        cascade_frequency=cascades / trials,
        reject_cascade_frequency=reject_c / trials,
        accept_cascade_frequency=accept_c / trials,
        mean_cascade_onset=(onset_sum / cascades + 1) if cascades else math.nan,
        follow_first_reject=follow / first_reject if first_reject else math.nan,
        cascade_consistent=consistent,
    )


def _table_sim(tables, network, signals):
    size, n = signals.shape
    actions = np.zeros((size, n), dtype=bool)
    informative = np.zeros((size, n), dtype=bool)
    for i in range(n):
        seen = list(network.observed(i))
        keys = [tuple(row) for row in actions[:, seen]] if seen else [()] * size
        uniq = {}
        for key in set(keys):
            uniq[key] = (tables[i][(key, True)], tables[i][(key, False)])
        hi = np.array([uniq[k][0] for k in keys])
        lo = np.array([uniq[k][1] for k in keys])
        actions[:, i] = np.where(signals[:, i], hi, lo)
        informative[:, i] = hi != lo
    return actions, informative


def compare_concealment(full: QueueResult, empty: QueueResult, model: BinarySignalModel, z: float = 3.0) -> str:
    """Verdict on whether hiding predecessors' actions raises adoption."""
    diff = full.mean_acceptance - empty.mean_acceptance
    se = math.sqrt(np.mean(full.se) ** 2 + np.mean(empty.se) ** 2)
    if diff < -z * se:
        return "RejectCascadeDominatedByConcealment"
    if diff > z * se:
        return "AcceptCascadeDominatesConcealment"
    return "Inconclusive"


# ---------------------------------------------------------------------------
# Designer side
# ---------------------------------------------------------------------------


def queue_threshold_mechanism(mechanisms: Sequence) -> list[float]:
    """Ex-ante service probability of each queue position.

    Position ``i`` (1-based) faces ``i - 1`` predecessors, so its mechanism
    must be built for an ``i``-agent market.
    """
    from .mechanisms import designer_value

    values = []
    for i, mech in enumerate(mechanisms, start=1):
        if mech.n != i:
            raise ConfigError(f"position {i} needs an {i}-agent mechanism, got n={mech.n}")
        values.append(designer_value(mech))
    return values

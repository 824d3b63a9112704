"""Reference optimizers that drive ``DiscoverySpace.sample``.

These are small, documented stand-ins for third-party suites. They only
see configurations and objective values, never the store, so the same
optimizer works unchanged whether a value was measured or reused.

Internally every optimizer minimizes: maximizing a property is handled by
negating it before the optimizer sees it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigurationError, SpaceExhausted
from .space import (
    CATEGORICAL,
    Configuration,
    ProbabilitySpace,
    as_rng,
    canonical_id,
    cardinality,
    draw,
    enumerate_space,
)

MAX_REJECTIONS = 100
MINIMIZE = "minimize"
MAXIMIZE = "maximize"


@dataclass(frozen=True)
class Objective:
    property: str
    direction: str = MINIMIZE

    def __post_init__(self):
        aliases = {"min": MINIMIZE, "max": MAXIMIZE}
        direction = aliases.get(self.direction, self.direction)
        if direction not in (MINIMIZE, MAXIMIZE):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "direction", direction)

    @classmethod
    def parse(cls, text: str) -> "Objective":
        prop, _, direction = text.rpartition(":")
        if not prop:
            return cls(text)
        return cls(prop, direction)

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == MINIMIZE else -1.0

    def better(self, a: float, b: float) -> bool:
        return a < b if self.direction == MINIMIZE else a > b


@dataclass
class OptimizerState:
    """Per-operation state. ``history`` is (configuration, raw value or None)."""

    space: ProbabilitySpace
    objective: Objective
    seed: int = 0
    rng: np.random.Generator = None
    history: list = field(default_factory=list)
    proposed: set = field(default_factory=set)
    scratch: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rng is None:
            self.rng = as_rng(self.seed)

    def internal_values(self) -> list[float]:
        """History values in minimization form, failures replaced by worst + 1."""
        finite = [self.objective.sign * v for _, v in self.history if v is not None]
        sentinel = (max(finite) + 1.0) if finite else 0.0
        return [sentinel if v is None else self.objective.sign * v for _, v in self.history]


class Optimizer:
    kind = "base"

    def propose(self, state: OptimizerState) -> Configuration | None:
        raise NotImplementedError

    def observe(self, state: OptimizerState, config: Configuration, value: float | None) -> None:
        pass


def _remaining(state: OptimizerState) -> list[Configuration]:
    return [c for c in enumerate_space(state.space) if canonical_id(c) not in state.proposed]


def next_configuration(optimizer: Optimizer, state: OptimizerState) -> Configuration:
    """A configuration not yet proposed in this operation.

    Duplicate proposals are rejected and re-drawn up to ``MAX_REJECTIONS``
    times; after that a uniformly random unproposed point is returned, and
    ``SpaceExhausted`` is raised only when every point has been proposed.
    """
    if len(state.proposed) >= cardinality(state.space):
        raise SpaceExhausted(f"all {len(state.proposed)} configurations proposed")
    for _ in range(MAX_REJECTIONS):
        config = optimizer.propose(state)
        if config is None:
            break
        cid = canonical_id(config)
        if cid not in state.proposed:
            state.proposed.add(cid)
            return config
    remaining = _remaining(state)
    if not remaining:
        raise SpaceExhausted("all configurations proposed")
    config = remaining[int(state.rng.integers(len(remaining)))]
    state.proposed.add(canonical_id(config))
    return config


def should_stop(trajectory, patience: int = 5, direction: str = MINIMIZE) -> bool:
    """True once the running best has not strictly improved for ``patience`` steps.

    ``None`` entries (failed measurements) never improve the best.
    """
    if patience <= 0 or not trajectory:
        return False
    objective = Objective("_", direction)
    best = None
    since = 0
    for v in trajectory:
        if v is not None and (best is None or objective.better(v, best)):
            best = v
            since = 0
        else:
            since += 1
    return since >= patience


# -- reference optimizers ----------------------------------------------------


class RandomWalk(Optimizer):
    """Draws from the space's probability measure, without repeats."""

    kind = "random"

    def propose(self, state):
        return draw(state.space, state.rng)


class LatinHypercube(Optimizer):
    """Stratifies each dimension's index range over a planned budget.

    For budget B and a dimension of size s, planned point i takes index
    floor((pi(i) + u_i) * s / B) for a random permutation pi; when B is a
    multiple of s every value appears exactly B/s times. After the plan,
    proposals fall back to random draws.
    """

    kind = "lhs"

    def __init__(self, budget: int | None = None):
        self.budget = budget

    def _plan(self, state):
        sizes = [d.size for d in state.space.dimensions]
        budget = self.budget or min(math.lcm(*sizes) if sizes else 1, cardinality(state.space))
        columns = []
        for s in sizes:
            perm = state.rng.permutation(budget)
            u = state.rng.random(budget)
            columns.append(np.minimum(((perm + u) * s / budget).astype(int), s - 1))
        dims = state.space.dimensions
        return [
            Configuration({d.name: d.values[int(col[i])] for d, col in zip(dims, columns)})
            for i in range(budget)
        ]

    def propose(self, state):
        plan = state.scratch.get("lhs_plan")
        if plan is None:
            plan = state.scratch["lhs_plan"] = self._plan(state)
            state.scratch["lhs_next"] = 0
        while state.scratch["lhs_next"] < len(plan):
            config = plan[state.scratch["lhs_next"]]
            state.scratch["lhs_next"] += 1
            if canonical_id(config) not in state.proposed:
                return config
        return draw(state.space, state.rng)


class SimulatedAnnealing(Optimizer):
    """Single-dimension neighbour moves with geometric cooling.

    Numeric dimensions step to an adjacent value; categorical ones jump to
    any other value. A worse neighbour is accepted with probability
    exp(-delta / (T * scale)), where scale is the spread of observed values.
    """

    kind = "anneal"

    def __init__(self, initial_temperature: float = 1.0, cooling: float = 0.9):
        self.initial_temperature = initial_temperature
        self.cooling = cooling

    def propose(self, state):
        current = state.scratch.get("anneal_current")
        if current is None:
            return draw(state.space, state.rng)
        dims = state.space.dimensions
        d = dims[int(state.rng.integers(len(dims)))]
        if d.size == 1:
            return draw(state.space, state.rng)
        i = d.values.index(current[d.name])
        if d.kind == CATEGORICAL:
            j = int(state.rng.integers(d.size - 1))
            j = j + 1 if j >= i else j
        else:
            steps = [k for k in (i - 1, i + 1) if 0 <= k < d.size]
            j = steps[int(state.rng.integers(len(steps)))]
        return current.replace(**{d.name: d.values[j]})

    def observe(self, state, config, value):
        values = state.internal_values()
        new = values[-1]
        t = state.scratch.setdefault("anneal_temperature", self.initial_temperature)
        current_value = state.scratch.get("anneal_value")
        if current_value is None or new <= current_value:
            accept = True
        else:
            scale = float(np.std(values)) or 1.0
            accept = state.rng.random() < math.exp(-(new - current_value) / (max(t, 1e-12) * scale))
        if accept:
            state.scratch["anneal_current"] = config
            state.scratch["anneal_value"] = new
        state.scratch["anneal_temperature"] = t * self.cooling


def encode_space(space: ProbabilitySpace, configs) -> np.ndarray:
    """Ordinal encoding in [0, 1] for numeric dims, scaled one-hot for categorical."""
    cols = []
    for d in space.dimensions:
        idx = np.array([d.values.index(c[d.name]) for c in configs], dtype=float)
        if d.kind == CATEGORICAL and d.size > 1:
            onehot = np.zeros((len(configs), d.size))
            onehot[np.arange(len(configs)), idx.astype(int)] = 1.0 / math.sqrt(2.0)
            cols.append(onehot)
        else:
            cols.append((idx / max(d.size - 1, 1))[:, None])
    return np.hstack(cols) if cols else np.zeros((len(configs), 0))


def _normal_cdf(z):
    return 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))


class SmboLite(Optimizer):
    """Sequential model-based search with a nearest-neighbour surrogate.

    After ``warmup`` random points (default 2 x dimension count) each step
    fits a distance-weighted k-nearest-neighbour mean and dispersion over the
    encoded history and picks the unsampled point with the highest expected
    improvement; with probability ``epsilon`` it explores at random instead.
    """

    kind = "smbo"

    def __init__(self, warmup: int | None = None, neighbours: int = 5, epsilon: float = 0.1,
                 max_candidates: int = 20000):
        self.warmup = warmup
        self.neighbours = neighbours
        self.epsilon = epsilon
        self.max_candidates = max_candidates

    def _candidates(self, state):
        cands = state.scratch.get("smbo_all")
        if cands is None and cardinality(state.space) <= self.max_candidates:
            configs = list(enumerate_space(state.space))
            cands = state.scratch["smbo_all"] = (
                configs, encode_space(state.space, configs), [canonical_id(c) for c in configs]
            )
        if cands is not None:
            configs, enc, ids = cands
            keep = [i for i, cid in enumerate(ids) if cid not in state.proposed]
            return [configs[i] for i in keep], enc[keep]
        configs = [draw(state.space, state.rng) for _ in range(1000)]
        configs = [c for c in configs if canonical_id(c) not in state.proposed]
        return configs, encode_space(state.space, configs)

    def propose(self, state):
        warmup = self.warmup if self.warmup is not None else 2 * len(state.space.dimensions)
        if len(state.history) < warmup or state.rng.random() < self.epsilon:
            return draw(state.space, state.rng)
        configs, enc = self._candidates(state)
        if not configs:
            return None
        observed = encode_space(state.space, [c for c, _ in state.history])
        y = np.asarray(state.internal_values())
        dist = np.linalg.norm(enc[:, None, :] - observed[None, :, :], axis=2)
        k = min(self.neighbours, len(y))
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        d_near = np.take_along_axis(dist, nearest, axis=1)
        w = 1.0 / (d_near + 1e-6)
        y_near = y[nearest]
        mu = (w * y_near).sum(axis=1) / w.sum(axis=1)
        spread = float(np.std(y)) or 1.0
        sigma = np.sqrt((w * (y_near - mu[:, None]) ** 2).sum(axis=1) / w.sum(axis=1))
        sigma = sigma + spread * d_near[:, 0] + 1e-9
        best = y.min()
        z = (best - mu) / sigma
        ei = (best - mu) * _normal_cdf(z) + sigma * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        return configs[int(np.argmax(ei))]


OPTIMIZERS = {
    "random": RandomWalk,
    "lhs": LatinHypercube,
    "anneal": SimulatedAnnealing,
    "smbo": SmboLite,
}


def make_optimizer(kind: str, **options: Any) -> Optimizer:
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ConfigurationError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls(**options)


# -- running an operation ----------------------------------------------------


@dataclass
class OperationResult:
    operation_id: str
    space_id: str
    optimizer: str
    seed: int
    objective: Objective
    trajectory: list
    proposals: list
    best_configuration: dict | None
    best_value: float | None
    new_measurements: int
    reused: int
    failed: int
    steps: int
    stop_reason: str

    def to_document(self) -> dict:
        return {
            "best_configuration": self.best_configuration,
            "best_value": self.best_value,
            "counts": {"failed": self.failed, "new_measurements": self.new_measurements,
                       "reused": self.reused},
            "objective": {"direction": self.objective.direction, "property": self.objective.property},
            "operation_id": self.operation_id,
            "optimizer": self.optimizer,
            "proposals": list(self.proposals),
            "seed": self.seed,
            "space_id": self.space_id,
            "steps": self.steps,
            "stop_reason": self.stop_reason,
            "trajectory": list(self.trajectory),
        }


def run_optimization(ds, optimizer: Optimizer, objective: Objective, patience: int = 5,
                     seed: int = 0, budget: int | None = None,
                     operation_id: str | None = None) -> OperationResult:
    """Loop propose -> sample -> observe until the stop rule, budget or exhaustion."""
    if isinstance(objective, str):
        objective = Objective.parse(objective)
    ds.actions.provider(objective.property)
    operation_id = operation_id or ds.unique_operation_id(f"{optimizer.kind}-{seed}")
    state = OptimizerState(ds.space, objective, seed)
    trajectory: list = []
    proposals: list = []
    counts = {"measured": 0, "reused": 0, "failed": 0}
    stop_reason = "patience"
    while True:
        if budget is not None and len(trajectory) >= budget:
            stop_reason = "budget"
            break
        try:
            config = next_configuration(optimizer, state)
        except SpaceExhausted:
            stop_reason = "exhausted"
            break
        sample = ds.sample(config, operation_id)
        value = sample.values.get(objective.property)
        counts["reused" if sample.origin == "reused" else "measured"] += 1
        if value is None:
            counts["failed"] += 1
        state.history.append((config, value))
        optimizer.observe(state, config, value)
        trajectory.append(value)
        proposals.append(canonical_id(config))
        if should_stop(trajectory, patience, objective.direction):
            break
    best_cfg, best_val = None, None
    for (config, _), v in zip(state.history, trajectory):
        if v is not None and (best_val is None or objective.better(v, best_val)):
            best_cfg, best_val = config.as_dict(), v
    return OperationResult(
        operation_id=operation_id,
        space_id=ds.space_id,
        optimizer=optimizer.kind,
        seed=seed,
        objective=objective,
        trajectory=trajectory,
        proposals=proposals,
        best_configuration=best_cfg,
        best_value=best_val,
        new_measurements=counts["measured"],
        reused=counts["reused"],
        failed=counts["failed"],
        steps=len(trajectory),
        stop_reason=stop_reason,
    )

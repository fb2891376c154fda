"""Engram recall across neurons and the conditioning Performance Index."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .decohere import trigger_collapse
from .mtlattice import (CoherentDomain, LatticeError, LatticeGeometry,
                        MapBindingPattern, engram_distance, partition_domains)

DEFAULT_THRESHOLD = 0.05
DEFAULT_FLIES = 55


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class NeuronModel:
    id: int
    geometry: LatticeGeometry
    engram: MapBindingPattern
    max_domain_size: int = 20
    domains: tuple[CoherentDomain, ...] = field(default=(), repr=False)
    activated: bool = False

    @classmethod
    def create(cls, id: int, geometry: LatticeGeometry,
               engram: MapBindingPattern | None = None,
               max_domain_size: int = 20) -> NeuronModel:
        engram = engram if engram is not None else MapBindingPattern(geometry)
        if engram.geometry != geometry:
            raise LatticeError("engram belongs to a different geometry")
        domains = tuple(partition_domains(geometry, engram, max_domain_size))
        return cls(id, geometry, engram, max_domain_size, domains)


def encode_engram(neuron: NeuronModel, pattern: MapBindingPattern) -> NeuronModel:
    """Store a new MAP pattern: domains are re-cut and activation cleared."""
    if pattern.geometry != neuron.geometry:
        raise LatticeError("pattern geometry does not match neuron")
    return NeuronModel.create(neuron.id, neuron.geometry, pattern, neuron.max_domain_size)


@dataclass
class RecallResult:
    activated: frozenset[int]
    outcomes: dict[int, dict]          # neuron id -> {site: bit}
    neurons: list[NeuronModel]

    def trace_lines(self) -> list[str]:
        lines = []
        for nid in sorted(self.activated):
            pattern = {f"{p},{r}": b for (p, r), b in sorted(self.outcomes[nid].items())}
            lines.append(json.dumps({"neuron": nid, "collapse": pattern}, sort_keys=True))
        return lines


def coactivated_ids(neurons: list[NeuronModel], key_neuron: int, threshold: float) -> frozenset[int]:
    by_id = {n.id: n for n in neurons}
    if key_neuron not in by_id:
        raise ExperimentError(f"no neuron with id {key_neuron}")
    key = by_id[key_neuron].engram
    hits = {key_neuron}
    for n in neurons:
        if n.geometry == key.geometry and engram_distance(key, n.engram) <= threshold:
            hits.add(n.id)
    return frozenset(hits)


def recall_coactivation(neurons: list[NeuronModel], key_neuron: int,
                        threshold: float, rng: np.random.Generator) -> RecallResult:
    """Activate the key neuron and, in the same call, every neuron whose engram is
    within ``threshold`` of it; all domains of activated neurons collapse.

    Neurons on a different geometry are never co-activated.
    """
    if not 0 <= threshold <= 1:
        raise ExperimentError(f"threshold must be in [0, 1], got {threshold}")
    active = coactivated_ids(neurons, key_neuron, threshold)
    outcomes, updated = {}, []
    for n in sorted(neurons, key=lambda n: n.id):
        if n.id not in active:
            continue
        bits, domains = {}, []
        for d in n.domains:
            b, d2 = trigger_collapse(d, rng)
            bits.update(b)
            domains.append(d2)
        outcomes[n.id] = bits
        updated.append((n.id, replace(n, domains=tuple(domains), activated=True)))
    new = dict(updated)
    return RecallResult(active, outcomes, [new.get(n.id, n) for n in neurons])


# -- conditioning experiment ---------------------------------------------------

@dataclass(frozen=True)
class ExperimentTally:
    trained: int
    untrained: int
    total: int

    def __post_init__(self):
        if self.trained < 0 or self.untrained < 0:
            raise ExperimentError("counts must be nonnegative")
        if self.total <= 0:
            raise ExperimentError(f"total must be positive, got {self.total}")
        if self.trained + self.untrained > self.total:
            raise ExperimentError("trained + untrained exceeds total")


def performance_index(tally: ExperimentTally) -> float:
    """((trained - untrained) / total) * 100."""
    if tally.total <= 0:
        raise ExperimentError("total must be positive")
    # one rounding: exact integer numerator, single division
    return (tally.trained - tally.untrained) * 100 / tally.total


@dataclass(frozen=True)
class ConditioningConfig:
    p_avoid_trained: float
    num_flies: int = DEFAULT_FLIES
    p_avoid_naive: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("p_avoid_trained", "p_avoid_naive"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ExperimentError(f"{name} must be in [0, 1], got {p}")
        if self.num_flies < 1:
            raise ExperimentError(f"num_flies must be >= 1, got {self.num_flies}")

    @property
    def expected_pi(self) -> float:
        return (2 * self.p_avoid_trained - 1) * 100


def simulate_conditioning(config: ConditioningConfig, rng: np.random.Generator,
                          p_avoid: float | None = None) -> ExperimentTally:
    """One test trial: every fly avoids the shock-paired odor independently.

    ``p_avoid`` overrides the trained avoidance probability, e.g. to run a
    naive control with ``config.p_avoid_naive``.
    """
    p = config.p_avoid_trained if p_avoid is None else p_avoid
    avoid = int(np.count_nonzero(rng.random(config.num_flies) < p))
    return ExperimentTally(avoid, config.num_flies - avoid, config.num_flies)


def retest(tally: ExperimentTally, config: ConditioningConfig,
           rng: np.random.Generator) -> ExperimentTally:
    """Re-test only the flies that avoided the odor; they keep the same avoidance probability."""
    if tally.trained == 0:
        raise ExperimentError("no avoiding flies to re-test")
    return simulate_conditioning(replace(config, num_flies=tally.trained), rng)


def run_experiment(config: ConditioningConfig, runs: int,
                   rng: np.random.Generator) -> list[ExperimentTally]:
    """``runs`` independent trials, vectorized."""
    if runs < 1:
        raise ExperimentError(f"runs must be >= 1, got {runs}")
    draws = rng.random((runs, config.num_flies)) < config.p_avoid_trained
    avoid = draws.sum(axis=1)
    return [ExperimentTally(int(a), config.num_flies - int(a), config.num_flies) for a in avoid]


def experiment_csv(tallies: list[ExperimentTally]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "trained", "untrained", "total", "pi"])
    for i, t in enumerate(tallies):
        w.writerow([i, t.trained, t.untrained, t.total, f"{performance_index(t):.17g}"])
    return buf.getvalue()

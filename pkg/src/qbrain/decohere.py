"""Exponential decoherence, collapse trajectories and the timescale scan.

A collapse event is a projective measurement of one uniformly chosen qubit
of a domain (a jump in the quantum-trajectory sense).  Events arrive as a
Poisson process with rate ``1 / tau_eff``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .mtlattice import CoherentDomain, SiteIndex
from .qstate import basis_state, measure_qubit
from .rng import derive_rng

PROTECTION_CAP = 1e16
ION_TAU = 1e-19         # ion/water collision estimate, s
MT_TAU = 1e-13          # bare microtubule estimate, s
DYN_TIMESCALE = 1e-4    # neural dynamical timescale, s
COHERENT_SURVIVAL = 0.5
# exp(-ln 2) rounds to just below 1/2; the boundary itself counts as coherent
VERDICT_SLACK = 1e-12


class DecoherenceError(ValueError):
    pass


@dataclass(frozen=True)
class DecoherenceModel:
    tau_bare: float
    protection_factor: float = 1.0

    def __post_init__(self):
        if not self.tau_bare > 0:
            raise DecoherenceError(f"tau_bare must be positive, got {self.tau_bare}")
        if not self.protection_factor >= 1:
            raise DecoherenceError(
                f"protection_factor must be >= 1, got {self.protection_factor}")

    @property
    def tau_eff(self) -> float:
        if self.protection_factor >= PROTECTION_CAP:
            return math.inf
        return self.tau_bare * self.protection_factor

    def collapse_probability(self, dt: float) -> float:
        """Chance of at least one collapse event within ``dt``."""
        return -math.expm1(-dt / self.tau_eff)


@dataclass(frozen=True)
class TrajectoryConfig:
    dt: float
    steps: int
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise DecoherenceError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise DecoherenceError(f"steps must be >= 1, got {self.steps}")

    @property
    def duration(self) -> float:
        return self.dt * self.steps


def survival_probability(model: DecoherenceModel, t: float) -> float:
    if t < 0:
        raise DecoherenceError(f"t must be >= 0, got {t}")
    x = t / model.tau_eff
    # exp underflows below ~1e-308; report a hard zero instead of a subnormal
    if x > 708.0:
        return 0.0
    return math.exp(-x)


def _step(domain: CoherentDomain, model: DecoherenceModel, dt: float,
          rng: np.random.Generator):
    if not dt > 0:
        raise DecoherenceError(f"dt must be positive, got {dt}")
    if rng.random() >= model.collapse_probability(dt):
        return domain, None
    qubit = int(rng.integers(domain.size))
    bit, state = measure_qubit(domain.quantum_state, qubit, rng)
    return domain.with_state(state), (qubit, bit)


def trajectory_step(domain: CoherentDomain, model: DecoherenceModel, dt: float,
                    rng: np.random.Generator) -> CoherentDomain:
    """Maybe collapse one random qubit of ``domain``; no unitary evolution here."""
    return _step(domain, model, dt, rng)[0]


@dataclass
class Trajectory:
    domain: CoherentDomain
    events: list = field(default_factory=list)   # (step, qubit, bit)

    @property
    def first_collapse_step(self) -> int | None:
        return self.events[0][0] if self.events else None


def run_trajectory(domain: CoherentDomain, model: DecoherenceModel,
                   config: TrajectoryConfig, rng: np.random.Generator,
                   evolve=None) -> Trajectory:
    """Step a domain ``config.steps`` times.

    ``evolve(state, dt)``, when given, is applied before each collapse draw.
    """
    traj = Trajectory(domain)
    for k in range(config.steps):
        if evolve is not None:
            traj.domain = traj.domain.with_state(evolve(traj.domain.quantum_state, config.dt))
        traj.domain, event = _step(traj.domain, model, config.dt, rng)
        if event is not None:
            traj.events.append((k, *event))
    return traj


def run_domains(domains: list[CoherentDomain], model: DecoherenceModel,
                config: TrajectoryConfig, evolve=None) -> list[Trajectory]:
    """Independent trajectories, domain ``i`` on the stream (config.seed, i)."""
    return [run_trajectory(d, model, config, derive_rng(config.seed, "decohere", i), evolve)
            for i, d in enumerate(domains)]


def collapse_counts(model: DecoherenceModel, config: TrajectoryConfig,
                    n_trajectories: int, rng: np.random.Generator,
                    chunk: int = 100_000) -> np.ndarray:
    """Collapse-event count of each of ``n_trajectories`` independent trajectories.

    Only the event process is simulated (one Bernoulli draw per trajectory per
    step, the same law as ``trajectory_step``); use ``run_trajectory`` when the
    post-collapse states are needed.
    """
    p = model.collapse_probability(config.dt)
    counts = np.zeros(n_trajectories, dtype=np.int64)
    for k in range(config.steps):
        for lo in range(0, n_trajectories, chunk):
            hi = min(lo + chunk, n_trajectories)
            counts[lo:hi] += rng.random(hi - lo) < p
    return counts


def expected_collapse_events(model: DecoherenceModel, config: TrajectoryConfig) -> float:
    return config.steps * model.collapse_probability(config.dt)


@dataclass(frozen=True)
class ScanRow:
    tau_eff: float
    dyn_timescale: float
    survival: float
    verdict: str


def coherence_scan(taus, dyn_timescale: float = DYN_TIMESCALE,
                   protection_factor: float = 1.0) -> list[ScanRow]:
    """Survival of each decoherence time over ``dyn_timescale``.

    ``taus`` are bare times; each is scaled by ``protection_factor``.  A time
    is ``coherent`` when survival over the dynamical timescale is at least 1/2.
    """
    taus = list(taus)
    if not taus:
        raise DecoherenceError("taus must be nonempty")
    if not dyn_timescale > 0:
        raise DecoherenceError(f"dyn_timescale must be positive, got {dyn_timescale}")
    rows = []
    for tau in taus:
        model = DecoherenceModel(tau, protection_factor)
        s = survival_probability(model, dyn_timescale)
        verdict = "coherent" if s >= COHERENT_SURVIVAL - VERDICT_SLACK else "decoherent"
        rows.append(ScanRow(model.tau_eff, dyn_timescale, s, verdict))
    return rows


def scan_csv(rows: list[ScanRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau_eff_seconds", "dyn_timescale_seconds", "survival", "verdict"])
    for r in rows:
        w.writerow([f"{r.tau_eff:.17g}", f"{r.dyn_timescale:.17g}",
                    f"{r.survival:.17g}", r.verdict])
    return buf.getvalue()


def trigger_collapse(domain: CoherentDomain, rng: np.random.Generator
                     ) -> tuple[dict[SiteIndex, int], CoherentDomain]:
    """Measure every qubit of ``domain`` in site order.

    Returns the conformation of each site and the domain left in that basis
    state.  One uniform is drawn per qubit in every case.
    """
    if domain.state is None:
        # already the all-|a> basis state; keep it unmaterialized
        rng.random(domain.size)
        return dict.fromkeys(domain.sites, 0), domain
    state = domain.state
    bits = []
    for q in range(domain.size):
        bit, state = measure_qubit(state, q, rng)
        bits.append(bit)
    index = sum(b << q for q, b in enumerate(bits))
    return dict(zip(domain.sites, bits)), domain.with_state(basis_state(domain.size, index))

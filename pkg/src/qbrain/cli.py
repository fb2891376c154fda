"""Command-line runs: ``qbrain <subcommand> [--config FILE] [--set key=value ...]``.

Configuration is a flat ``key=value`` file; ``--set`` and the dedicated flags
override it.  Every key is validated before anything is computed or written.
All randomness is derived from ``seed`` and the subcommand name.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import decohere, engram, entangle, mtlattice, qstate
from .rng import derive_rng

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SUBCOMMANDS = ("state", "entangle", "lattice", "decohere", "experiment", "demo-epr")


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> list[float]:
    vals = [float(x) for x in text.split(",") if x.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _prob(v):
    return 0 <= v <= 1


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] | None = None
    rule: str = ""


KEYS: dict[str, Key] = {
    "seed": Key(int, 0, _nonneg, ">= 0"),
    "output": Key(str, None),
    "format": Key(str, None, lambda v: v in ("json", "csv"), "json or csv"),
    # lattice
    "pf": Key(int, 13, lambda v: v >= 3, ">= 3"),
    "rows": Key(int, 10, _pos, "> 0"),
    "seam_shift": Key(int, 3, _nonneg, ">= 0"),
    "diagonals": Key(_bool, False),
    "pattern_file": Key(str, None),
    "max_domain_size": Key(int, 20, _pos, "> 0"),
    "maps_enable_coupling": Key(_bool, False),
    # hamiltonian / state
    "num_qubits": Key(int, 1, lambda v: 1 <= v <= 16, "in [1, 16]"),
    "state_file": Key(str, None),
    "epsilon": Key(float, 0.0, math.isfinite, "finite"),
    "delta": Key(float, qstate.DEFAULT_DELTA, _nonneg, ">= 0"),
    "coupling": Key(float, None, math.isfinite, "finite"),
    "dt": Key(float, 1e-13, _pos, "> 0"),
    "steps": Key(int, 0, _nonneg, ">= 0"),
    "shots": Key(int, 1000, _nonneg, ">= 0"),
    # entangle
    "split": Key(str, None),
    "tol": Key(float, entangle.FACTOR_TOL, _pos, "> 0"),
    # decohere
    "mode": Key(str, "scan", lambda v: v in ("scan", "trajectory"), "scan or trajectory"),
    "taus": Key(_floats, [decohere.ION_TAU, decohere.MT_TAU],
                lambda v: all(x > 0 for x in v), "all > 0"),
    "tau_bare": Key(float, decohere.MT_TAU, _pos, "> 0"),
    "protection_factor": Key(float, 1.0, lambda v: v >= 1, ">= 1"),
    "dyn_timescale": Key(float, decohere.DYN_TIMESCALE, _pos, "> 0"),
    "trajectories": Key(int, 10_000, _pos, "> 0"),
    "traj_steps": Key(int, 100, _pos, "> 0"),
    "traj_dt": Key(float, None, _pos, "> 0"),
    # experiment
    "num_flies": Key(int, engram.DEFAULT_FLIES, _pos, "> 0"),
    "p_avoid_trained": Key(float, 0.9, _prob, "in [0, 1]"),
    "runs": Key(int, 100, _pos, "> 0"),
    # demo-epr
    "trials": Key(int, 100_000, _pos, "> 0"),
}

DEFAULT_FORMAT = {"decohere": "csv", "experiment": "csv"}


def parse_config_text(text: str, source: str = "config") -> dict[str, str]:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return raw


def resolve(raw: dict[str, str]) -> dict[str, Any]:
    """Typed, validated configuration; raises ConfigError naming the first bad key."""
    for k in raw:
        if k not in KEYS:
            raise ConfigError(f"unknown key '{k}'")
    cfg = {}
    for name, key in KEYS.items():
        if name not in raw:
            cfg[name] = key.default
            continue
        try:
            value = key.parse(raw[name])
        except ValueError as exc:
            raise ConfigError(f"key '{name}': cannot parse {raw[name]!r} ({exc})") from None
        if key.check is not None and not key.check(value):
            raise ConfigError(f"key '{name}': {raw[name]!r} must be {key.rule}")
        cfg[name] = value
    return cfg


# -- subcommands ---------------------------------------------------------------
# Each returns the report text.  Inputs are loaded and checked up front.

def _chain(n: int) -> list[tuple[int, int]]:
    return [(i, i + 1) for i in range(n - 1)]


def _load_state(cfg) -> qstate.PureState:
    if cfg["state_file"]:
        with open(cfg["state_file"]) as fh:
            return qstate.loads_state(fh.read())
    return qstate.basis_state(cfg["num_qubits"], 0)


def _geometry(cfg) -> tuple[mtlattice.LatticeGeometry, mtlattice.MapBindingPattern]:
    if cfg["pattern_file"]:
        with open(cfg["pattern_file"]) as fh:
            pattern = mtlattice.loads_pattern(fh.read(), diagonals=cfg["diagonals"])
        return pattern.geometry, pattern
    geom = mtlattice.LatticeGeometry(num_rows=cfg["rows"], num_protofilaments=cfg["pf"],
                                     seam_shift=cfg["seam_shift"], diagonals=cfg["diagonals"])
    return geom, mtlattice.MapBindingPattern(geom)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _g(x: float) -> str:
    return f"{x:.17g}"


def cmd_state(cfg, fmt) -> str:
    state = _load_state(cfg)
    n = state.num_qubits
    if cfg["steps"]:
        h = qstate.Hamiltonian.tubulin(n, cfg["epsilon"], cfg["delta"], cfg["coupling"], _chain(n))
        state = qstate.evolve(h, state, cfg["dt"], cfg["steps"])
        state.check_norm()
    rng = derive_rng(cfg["seed"], "state")
    counts = {}
    if cfg["shots"]:
        outcomes = qstate.sample_sequential(state, range(n), cfg["shots"], rng)
        for row in outcomes:
            label = "".join(map(str, row))
            counts[label] = counts.get(label, 0) + 1
    probs = state.probabilities()
    if fmt == "csv":
        return _csv(["index", "re", "im", "probability"],
                    [[i, _g(c.real), _g(c.imag), _g(p)]
                     for i, (c, p) in enumerate(zip(state.amplitudes, probs))])
    return _dump({
        "num_qubits": n,
        "evolution": {"steps": cfg["steps"], "dt": cfg["dt"]},
        "state": qstate.dumps_state(state),
        "probabilities": [float(_g(p)) for p in probs],
        "shots": cfg["shots"],
        "counts": dict(sorted(counts.items())),
    })


def _parse_split(text: str, n: int) -> entangle.BipartiteSplit:
    try:
        left, right = text.split("|")
        return entangle.BipartiteSplit(tuple(_ints(left)), tuple(_ints(right)))
    except ValueError as exc:
        raise ConfigError(f"key 'split': bad split {text!r} ({exc})") from None


def cmd_entangle(cfg, fmt) -> str:
    if not cfg["state_file"]:
        raise ConfigError("key 'state_file': required by entangle")
    state = _load_state(cfg)
    if state.num_qubits < 2:
        raise ConfigError("key 'state_file': entanglement needs at least 2 qubits")
    if cfg["split"]:
        splits = [_parse_split(cfg["split"], state.num_qubits)]
        if splits[0].num_qubits != state.num_qubits:
            raise ConfigError(f"key 'split': does not cover {state.num_qubits} qubits")
    else:
        splits = entangle.all_splits(state.num_qubits)
    reports = [entangle.report(state, s, cfg["tol"]) for s in splits]
    if fmt == "csv":
        return _csv(["split", "coefficients", "entropy_bits", "factorizable"],
                    [[str(s), ";".join(_g(c) for c in r["coefficients"]),
                      _g(r["entropy_bits"]), r["factorizable"]] for s, r in zip(splits, reports)])
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in reports)


def cmd_lattice(cfg, fmt) -> str:
    geom, pattern = _geometry(cfg)
    domains, cuts = mtlattice.partition_with_cuts(
        geom, pattern, cfg["max_domain_size"], cfg["maps_enable_coupling"])
    if fmt == "csv":
        rows = [[p, r, k] for k, d in enumerate(domains) for p, r in d.sites]
        return _csv(["protofilament", "row", "domain"], sorted(rows))
    report = mtlattice.adjacency_json(geom)
    report["bound_edges"] = [[list(a), list(b)] for a, b in sorted(pattern.bound_edges)]
    report["split_cuts"] = [[list(a), list(b)] for a, b in sorted(cuts)]
    report["domains"] = [[list(s) for s in d.sites] for d in domains]
    return _dump(report)


def cmd_decohere(cfg, fmt) -> str:
    if cfg["mode"] == "scan":
        rows = decohere.coherence_scan(cfg["taus"], cfg["dyn_timescale"], cfg["protection_factor"])
        if fmt == "csv":
            return decohere.scan_csv(rows)
        return _dump([{"tau_eff_seconds": r.tau_eff, "dyn_timescale_seconds": r.dyn_timescale,
                       "survival": r.survival, "verdict": r.verdict} for r in rows])
    model = decohere.DecoherenceModel(cfg["tau_bare"], cfg["protection_factor"])
    if math.isinf(model.tau_eff) and cfg["traj_dt"] is None:
        raise ConfigError("key 'traj_dt': required when tau_eff is infinite")
    dt = cfg["traj_dt"] if cfg["traj_dt"] is not None else model.tau_eff / 100
    tc = decohere.TrajectoryConfig(dt, cfg["traj_steps"], cfg["seed"])
    counts = decohere.collapse_counts(model, tc, cfg["trajectories"],
                                      derive_rng(cfg["seed"], "decohere"))
    summary = {
        "tau_eff_seconds": model.tau_eff,
        "dt_seconds": dt,
        "steps": tc.steps,
        "t_seconds": tc.duration,
        "trajectories": cfg["trajectories"],
        "zero_collapse_fraction": float(np.mean(counts == 0)),
        "survival_analytic": decohere.survival_probability(model, tc.duration),
        "mean_collapse_events": float(np.mean(counts)),
        "expected_collapse_events": decohere.expected_collapse_events(model, tc),
    }
    if fmt == "csv":
        return _csv(list(summary), [[_g(v) if isinstance(v, float) else v
                                     for v in summary.values()]])
    return _dump(summary)


def cmd_experiment(cfg, fmt) -> str:
    conf = engram.ConditioningConfig(cfg["p_avoid_trained"], cfg["num_flies"], seed=cfg["seed"])
    tallies = engram.run_experiment(conf, cfg["runs"], derive_rng(cfg["seed"], "experiment"))
    if fmt == "csv":
        return engram.experiment_csv(tallies)
    pis = [engram.performance_index(t) for t in tallies]
    return _dump({
        "num_flies": conf.num_flies,
        "p_avoid_trained": conf.p_avoid_trained,
        "expected_pi": conf.expected_pi,
        "mean_pi": float(np.mean(pis)),
        "runs": [{"run": i, "trained": t.trained, "untrained": t.untrained,
                  "total": t.total, "pi": p} for i, (t, p) in enumerate(zip(tallies, pis))],
    })


HELICITY = {0: -1, 1: +1}


def pion_state() -> qstate.PureState:
    """(|-1,+1> + |+1,-1>)/sqrt(2) with helicity -1 -> 0, +1 -> 1."""
    return qstate.from_kets({"01": 1, "10": 1})


def cmd_demo_epr(cfg, fmt) -> str:
    state = pion_state()
    outcomes = qstate.sample_sequential(state, [0, 1], cfg["trials"],
                                        derive_rng(cfg["seed"], "demo-epr"))
    counts = {}
    for a in (0, 1):
        for b in (0, 1):
            counts[f"{HELICITY[a]:+d},{HELICITY[b]:+d}"] = int(
                np.count_nonzero((outcomes[:, 0] == a) & (outcomes[:, 1] == b)))
    violations = counts["-1,-1"] + counts["+1,+1"]
    split = entangle.BipartiteSplit((0,), (1,))
    if fmt == "csv":
        return _csv(["photon1", "photon2", "count"],
                    [[*k.split(","), v] for k, v in counts.items()])
    return _dump({
        "state": qstate.dumps_state(state),
        "entanglement": entangle.report(state, split),
        "trials": cfg["trials"],
        "counts": counts,
        "anti_correlated": counts["-1,+1"] + counts["+1,-1"],
        "violations": violations,
    })


COMMANDS = {
    "state": cmd_state,
    "entangle": cmd_entangle,
    "lattice": cmd_lattice,
    "decohere": cmd_decohere,
    "experiment": cmd_experiment,
    "demo-epr": cmd_demo_epr,
}


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qbrain-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbrain", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="key=value configuration file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration key (repeatable)")
    ap.add_argument("--seed")
    ap.add_argument("--output", "-o")
    ap.add_argument("--format", dest="fmt")
    return ap


def run(subcommand: str, raw: dict[str, str]) -> tuple[int, str]:
    """Run one subcommand on raw config; returns (exit status, report or diagnostic)."""
    try:
        cfg = resolve(raw)
        fmt = cfg["format"] or DEFAULT_FORMAT.get(subcommand, "json")
        text = COMMANDS[subcommand](cfg, fmt)
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    except (qstate.StateError, mtlattice.LatticeError, decohere.DecoherenceError,
            engram.ExperimentError, OSError) as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    except qstate.NormDriftError as exc:
        return EXIT_NUMERIC, f"numerical invariant violated: {exc}"
    return EXIT_OK, text


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    raw = {}
    try:
        if args.config:
            with open(args.config) as fh:
                raw.update(parse_config_text(fh.read(), args.config))
        for item in args.set:
            raw.update(parse_config_text(item, "--set"))
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for flag, key in (("seed", "seed"), ("output", "output"), ("fmt", "format")):
        if getattr(args, flag) is not None:
            raw[key] = getattr(args, flag)

    status, text = run(args.subcommand, raw)
    if status != EXIT_OK:
        print(text, file=sys.stderr)
        return status
    out = resolve(raw)["output"]
    if out:
        _write_atomic(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

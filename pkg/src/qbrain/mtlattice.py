"""Microtubule dimer lattice, MAP binding patterns and coherent domains.

Sites are ``(protofilament, row)`` tuples.  Protofilaments wrap around the
cylinder; stepping laterally from the last protofilament back to 0 crosses the
seam and shifts the row by ``seam_shift`` (3 for the 3-start helix).
"""
from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import networkx as nx
import numpy as np

from .qstate import PureState, basis_state


class LatticeError(ValueError):
    pass


class SiteIndex(NamedTuple):
    protofilament: int
    row: int


Edge = tuple[SiteIndex, SiteIndex]

DIPOLE_FLIP_DEG = 29.0


@dataclass(frozen=True)
class LatticeGeometry:
    num_rows: int
    num_protofilaments: int = 13
    seam_shift: int = 3
    diagonals: bool = False
    dimer_length_nm: float = 8.0
    outer_diameter_nm: float = 25.0
    inner_diameter_nm: float = 15.0

    def __post_init__(self):
        if self.num_rows < 1:
            raise LatticeError(f"num_rows must be >= 1, got {self.num_rows}")
        if self.num_protofilaments < 3:
            raise LatticeError(f"need at least 3 protofilaments, got {self.num_protofilaments}")
        if self.seam_shift < 0:
            raise LatticeError(f"seam_shift must be >= 0, got {self.seam_shift}")

    @property
    def num_sites(self) -> int:
        return self.num_protofilaments * self.num_rows

    @property
    def length_nm(self) -> float:
        return self.num_rows * self.dimer_length_nm

    def sites(self) -> list[SiteIndex]:
        return [SiteIndex(p, r) for p in range(self.num_protofilaments)
                for r in range(self.num_rows)]

    def contains(self, site) -> bool:
        p, r = site
        return 0 <= p < self.num_protofilaments and 0 <= r < self.num_rows

    def header(self) -> str:
        return f"pf={self.num_protofilaments} rows={self.num_rows} seam={self.seam_shift}"


def _check_site(geom: LatticeGeometry, site) -> SiteIndex:
    try:
        s = SiteIndex(int(site[0]), int(site[1]))
    except (TypeError, ValueError, IndexError):
        raise LatticeError(f"bad site {site!r}") from None
    if not geom.contains(s):
        raise LatticeError(f"site {tuple(s)} outside {geom.num_protofilaments}x{geom.num_rows} lattice")
    return s


def lateral_right(geom: LatticeGeometry, site: SiteIndex) -> SiteIndex:
    """One step around the cylinder, possibly landing off the lattice."""
    p, r = site
    if p == geom.num_protofilaments - 1:
        return SiteIndex(0, r + geom.seam_shift)
    return SiteIndex(p + 1, r)


def lateral_left(geom: LatticeGeometry, site: SiteIndex) -> SiteIndex:
    p, r = site
    if p == 0:
        return SiteIndex(geom.num_protofilaments - 1, r - geom.seam_shift)
    return SiteIndex(p - 1, r)


def neighbors(geom: LatticeGeometry, site) -> list[SiteIndex]:
    """Longitudinal then lateral (then diagonal, if enabled) neighbours on the lattice."""
    s = _check_site(geom, site)
    p, r = s
    right, left = lateral_right(geom, s), lateral_left(geom, s)
    cand = [SiteIndex(p, r - 1), SiteIndex(p, r + 1), left, right]
    if geom.diagonals:
        cand += [SiteIndex(left.protofilament, left.row - 1),
                 SiteIndex(right.protofilament, right.row + 1)]
    out = []
    for c in cand:
        if geom.contains(c) and c != s and c not in out:
            out.append(c)
    return out


def canonical_edge(a, b) -> Edge:
    a, b = SiteIndex(*a), SiteIndex(*b)
    return (a, b) if a <= b else (b, a)


@lru_cache(maxsize=64)
def lattice_edges(geom: LatticeGeometry) -> frozenset[Edge]:
    return frozenset(canonical_edge(s, t) for s in geom.sites() for t in neighbors(geom, s))


def helical_path(geom: LatticeGeometry, start, starts: int) -> list[SiteIndex]:
    """Lateral walk from ``start`` until it leaves the lattice or closes on itself.

    ``starts`` names the helix family (3, 5 or 8); the row gain per full turn
    is set by the geometry's ``seam_shift``.
    """
    if starts not in (3, 5, 8):
        raise LatticeError(f"helix starts must be 3, 5 or 8, got {starts}")
    s = _check_site(geom, start)
    path, seen = [s], {s}
    while True:
        s = lateral_right(geom, s)
        if not geom.contains(s) or s in seen:
            return path
        path.append(s)
        seen.add(s)


@dataclass(frozen=True)
class TubulinSite:
    site: SiteIndex
    conformation: int = 0

    def __post_init__(self):
        if self.conformation not in (0, 1):
            raise LatticeError(f"conformation must be 0 or 1, got {self.conformation}")

    @property
    def dipole_angle(self) -> float:
        return DIPOLE_FLIP_DEG if self.conformation else 0.0


def dipole_vector(site: TubulinSite) -> np.ndarray:
    theta = math.radians(site.dipole_angle)
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True)
class MapBindingPattern:
    geometry: LatticeGeometry
    bound_edges: frozenset = frozenset()

    def __post_init__(self):
        edges = frozenset(canonical_edge(*e) for e in self.bound_edges)
        bad = edges - lattice_edges(self.geometry)
        if bad:
            raise LatticeError(f"not lattice adjacencies: {sorted(bad)[:3]}")
        object.__setattr__(self, "bound_edges", edges)

    def __len__(self):
        return len(self.bound_edges)


def _adjacent_edge(geom: LatticeGeometry, edge) -> Edge:
    try:
        a, b = edge
        a, b = _check_site(geom, a), _check_site(geom, b)
    except (TypeError, ValueError):
        raise LatticeError(f"bad edge {edge!r}") from None
    if b not in neighbors(geom, a):
        raise LatticeError(f"{tuple(a)} and {tuple(b)} are not adjacent")
    return canonical_edge(a, b)


def bind_map(pattern: MapBindingPattern, edge) -> MapBindingPattern:
    e = _adjacent_edge(pattern.geometry, edge)
    return replace(pattern, bound_edges=pattern.bound_edges | {e})


def unbind_map(pattern: MapBindingPattern, edge) -> MapBindingPattern:
    e = _adjacent_edge(pattern.geometry, edge)
    return replace(pattern, bound_edges=pattern.bound_edges - {e})


def random_pattern(geom: LatticeGeometry, density: float,
                   rng: np.random.Generator) -> MapBindingPattern:
    edges = sorted(lattice_edges(geom))
    keep = rng.random(len(edges)) < density
    return MapBindingPattern(geom, frozenset(e for e, k in zip(edges, keep) if k))


def engram_distance(p1: MapBindingPattern, p2: MapBindingPattern) -> float:
    """Fraction of lattice edges on which the two patterns disagree."""
    if p1.geometry != p2.geometry:
        raise LatticeError("patterns belong to different geometries")
    return len(p1.bound_edges ^ p2.bound_edges) / len(lattice_edges(p1.geometry))


@dataclass(frozen=True, eq=False)
class CoherentDomain:
    """Connected set of sites sharing one pure state.

    Qubit k of ``quantum_state`` is ``sites[k]``; sites are kept sorted.  A
    domain created without a state is in the all-``|a>`` product state, which
    is only materialized on access.
    """
    sites: tuple[SiteIndex, ...]
    state: PureState | None = field(default=None, repr=False)

    def __post_init__(self):
        sites = tuple(sorted(SiteIndex(*s) for s in self.sites))
        if not sites:
            raise LatticeError("a domain needs at least one site")
        if len(set(sites)) != len(sites):
            raise LatticeError("duplicate sites in domain")
        if self.state is not None and self.state.num_qubits != len(sites):
            raise LatticeError(
                f"state has {self.state.num_qubits} qubits for {len(sites)} sites")
        object.__setattr__(self, "sites", sites)

    @property
    def size(self) -> int:
        return len(self.sites)

    @property
    def quantum_state(self) -> PureState:
        if self.state is None:
            return basis_state(self.size, 0)
        return self.state

    def with_state(self, state: PureState) -> CoherentDomain:
        return CoherentDomain(self.sites, state)


def _cut_graph(geom: LatticeGeometry, pattern: MapBindingPattern,
               maps_enable_coupling: bool) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(geom.sites())
    if maps_enable_coupling:
        g.add_edges_from(sorted(pattern.bound_edges))
    else:
        g.add_edges_from(sorted(lattice_edges(geom) - pattern.bound_edges))
    return g


def _split(g: nx.Graph, nodes: list, max_size: int) -> tuple[list[list], set[Edge]]:
    """Cut a component into connected pieces of at most ``max_size`` nodes.

    Repeatedly grows a breadth-first block of ``max_size`` sites from the
    smallest remaining site (neighbours visited in sorted order) and removes
    the edges bridging that block to the rest.  Returns pieces and cut edges.
    """
    done, cuts = [], set()
    todo = [sorted(nodes)]
    while todo:
        comp = todo.pop()
        if len(comp) <= max_size:
            done.append(comp)
            continue
        members = set(comp)
        block, seen, queue = [], {comp[0]}, [comp[0]]
        while queue and len(block) < max_size:
            s = queue.pop(0)
            block.append(s)
            for t in sorted(g.neighbors(s)):
                if t in members and t not in seen:
                    seen.add(t)
                    queue.append(t)
        inside = set(block)
        for s in block:
            for t in g.neighbors(s):
                if t in members and t not in inside:
                    cuts.add(canonical_edge(s, t))
        done.append(sorted(block))
        rest = g.subgraph(members - inside)
        todo.extend(sorted((sorted(c) for c in nx.connected_components(rest)), reverse=True))
    return done, cuts


def partition_with_cuts(geom: LatticeGeometry, pattern: MapBindingPattern,
                        max_domain_size: int = 20, maps_enable_coupling: bool = False
                        ) -> tuple[list[CoherentDomain], frozenset[Edge]]:
    """Domains plus the extra edges cut to enforce the size bound."""
    if max_domain_size < 1:
        raise LatticeError(f"max_domain_size must be >= 1, got {max_domain_size}")
    if pattern.geometry != geom:
        raise LatticeError("pattern belongs to a different geometry")
    g = _cut_graph(geom, pattern, maps_enable_coupling)
    pieces, cuts = [], set()
    for comp in sorted(sorted(c) for c in nx.connected_components(g)):
        p, c = _split(g, comp, max_domain_size)
        pieces.extend(p)
        cuts |= c
    return [CoherentDomain(tuple(p)) for p in sorted(pieces)], frozenset(cuts)


def partition_domains(geom: LatticeGeometry, pattern: MapBindingPattern,
                      max_domain_size: int = 20,
                      maps_enable_coupling: bool = False) -> list[CoherentDomain]:
    """Coherent domains left after MAP-bound edges cut the lattice.

    MAP-bound edges block coupling (or, with ``maps_enable_coupling``, are the
    only coupling edges).  Components above ``max_domain_size`` are split;
    domains come back sorted by smallest site, each in the all-``|a>`` state.
    """
    return partition_with_cuts(geom, pattern, max_domain_size, maps_enable_coupling)[0]


def domain_cut_graph(geom: LatticeGeometry, pattern: MapBindingPattern,
                     maps_enable_coupling: bool = False) -> nx.Graph:
    """The lattice graph after MAP cuts, before any size splitting."""
    return _cut_graph(geom, pattern, maps_enable_coupling)


# -- pattern files ------------------------------------------------------------

def dumps_pattern(pattern: MapBindingPattern) -> str:
    lines = [pattern.geometry.header()]
    for a, b in sorted(pattern.bound_edges):
        lines.append(f"bind {a[0]} {a[1]} {b[0]} {b[1]}")
    return "\n".join(lines) + "\n"


def loads_pattern(text: str, diagonals: bool = False) -> MapBindingPattern:
    rows = [ln.strip() for ln in text.splitlines()
            if ln.strip() and not ln.strip().startswith("#")]
    if not rows:
        raise LatticeError("empty pattern file")
    try:
        head = dict(tok.split("=", 1) for tok in rows[0].split())
        geom = LatticeGeometry(num_rows=int(head["rows"]),
                               num_protofilaments=int(head["pf"]),
                               seam_shift=int(head["seam"]), diagonals=diagonals)
    except (ValueError, KeyError):
        raise LatticeError(f"bad pattern header {rows[0]!r}") from None
    edges = set()
    for ln in rows[1:]:
        parts = ln.split()
        if len(parts) != 5 or parts[0] != "bind":
            raise LatticeError(f"bad pattern line {ln!r}")
        try:
            p1, r1, p2, r2 = map(int, parts[1:])
        except ValueError:
            raise LatticeError(f"bad pattern line {ln!r}") from None
        edges.add(_adjacent_edge(geom, ((p1, r1), (p2, r2))))
    return MapBindingPattern(geom, frozenset(edges))


def adjacency_json(geom: LatticeGeometry) -> dict:
    return {
        "pf": geom.num_protofilaments,
        "rows": geom.num_rows,
        "seam": geom.seam_shift,
        "adjacency": {f"{p},{r}": [[q, s] for q, s in neighbors(geom, (p, r))]
                      for p, r in geom.sites()},
    }


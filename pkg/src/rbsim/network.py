"""Position-dependent rail resistance graph.

Each track is a chain of electrical nodes (substations and trains) ordered
along the corridor. The power rail and the running (traction) rail between
two consecutive nodes are each a resistance proportional to their distance.
Substation nodes are shared by every track; train nodes belong to one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import PlacementError, ScenarioError

EASTBOUND = "eastbound"
WESTBOUND = "westbound"
DIRECTION_SIGN = {EASTBOUND: 1.0, WESTBOUND: -1.0}

# Trains closer than this share a node.
MERGE_TOL = 1e-9  # m


@dataclass(frozen=True)
class TrackLayout:
    station_positions: tuple[float, ...]
    substation_positions: tuple[float, ...]
    R_Ppu: float = 10e-6  # ohm/m, power (third) rail
    R_Tpu: float = 20e-6  # ohm/m, running-rail return
    extent: tuple[float, float] | None = None

    def __post_init__(self):
        st = tuple(float(x) for x in self.station_positions)
        ss = tuple(float(x) for x in self.substation_positions)
        object.__setattr__(self, "station_positions", st)
        object.__setattr__(self, "substation_positions", ss)
        if not ss:
            raise ScenarioError("layout needs at least one substation")
        if any(b <= a for a, b in zip(st, st[1:])):
            raise ScenarioError("station positions must be strictly increasing")
        if any(b <= a for a, b in zip(ss, ss[1:])):
            raise ScenarioError("substation positions must be strictly increasing")
        if self.R_Ppu <= 0 or self.R_Tpu <= 0:
            raise ScenarioError("per-unit rail resistances must be > 0")
        if self.extent is None:
            pts = st + ss
            object.__setattr__(self, "extent", (min(pts), max(pts)))
        lo, hi = self.extent
        if hi < lo:
            raise ScenarioError("extent must be (min, max)")
        for x in st + ss:
            if not lo <= x <= hi:
                raise ScenarioError(f"position {x} m lies outside extent {self.extent}")

    def contains(self, x: float) -> bool:
        lo, hi = self.extent
        return lo - MERGE_TOL <= x <= hi + MERGE_TOL


@dataclass(frozen=True)
class SectionResistances:
    """Branch resistances either side of a train inside one section."""

    R_WP: float
    R_WT: float
    R_EP: float
    R_ET: float


def section_resistances(p: float, x_west: float, x_east: float,
                        R_Ppu: float, R_Tpu: float) -> SectionResistances:
    """Power- and traction-rail resistance west and east of a train at ``p``
    inside the section ``[x_west, x_east]`` (absolute positions)."""
    if not x_west <= p <= x_east:
        raise PlacementError(f"train at {p} m is outside section [{x_west}, {x_east}]")
    west = p - x_west
    east = x_east - p
    return SectionResistances(west * R_Ppu, west * R_Tpu, east * R_Ppu, east * R_Tpu)


@dataclass(frozen=True)
class Node:
    kind: str  # "substation", "train" or "junction"
    position: float
    track: str | None = None  # None for shared substation nodes
    substation: int | None = None
    trains: tuple[int, ...] = ()


@dataclass(frozen=True)
class Branch:
    a: int
    b: int
    R_power: float
    R_traction: float
    track: str

    @property
    def R_loop(self) -> float:
        return self.R_power + self.R_traction


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[Node, ...]
    branches: tuple[Branch, ...]
    tracks: tuple[str, ...]
    t: float = 0.0

    def train_node(self, train: int) -> int:
        for i, n in enumerate(self.nodes):
            if train in n.trains:
                return i
        raise KeyError(train)

    def substation_node(self, sub: int) -> int:
        for i, n in enumerate(self.nodes):
            if n.substation == sub:
                return i
        raise KeyError(sub)

    def chain(self, track: str) -> list[int]:
        """Node indices of one track, west to east."""
        idx = [i for i, n in enumerate(self.nodes) if n.track in (None, track)]
        return sorted(idx, key=lambda i: self.nodes[i].position)


def build_graph(layout: TrackLayout, train_positions: Sequence[float], t: float = 0.0,
                tracks: Sequence[str] | None = None) -> NetworkGraph:
    """Nodes and branch resistances for trains at ``train_positions``.

    ``tracks`` gives each train's track; by default all trains share one.
    Trains that coincide (with each other or with a substation) on the same
    track are merged into a single node.
    """
    n_trains = len(train_positions)
    if tracks is None:
        tracks = [EASTBOUND] * n_trains
    if len(tracks) != n_trains:
        raise ValueError("one track label per train required")
    for k, x in enumerate(train_positions):
        if not layout.contains(x):
            raise PlacementError(
                f"train {k} at {x} m is outside layout extent {layout.extent} (t={t} s)"
            )
    track_names = tuple(dict.fromkeys(tracks)) or (EASTBOUND,)

    # Mutable drafts: [kind, position, track, substation, trains]
    drafts = [["substation", x, None, s, []]
              for s, x in enumerate(layout.substation_positions)]
    for k, (x, trk) in enumerate(zip(train_positions, tracks)):
        x = float(x)
        host = None
        for d in drafts:
            if d[2] in (None, trk) and abs(d[1] - x) <= MERGE_TOL:
                host = d
                break
        if host is None:
            drafts.append(["train", x, trk, None, [k]])
        else:
            host[4].append(k)

    order = sorted(range(len(drafts)), key=lambda i: (drafts[i][1], drafts[i][2] or ""))
    nodes = tuple(Node(d[0], d[1], d[2], d[3], tuple(d[4]))
                  for d in (drafts[i] for i in order))
    graph = NetworkGraph(nodes, (), track_names, t)

    branches = []
    for trk in track_names:
        chain = graph.chain(trk)
        for a, b in zip(chain, chain[1:]):
            length = nodes[b].position - nodes[a].position
            branches.append(Branch(a, b, length * layout.R_Ppu, length * layout.R_Tpu, trk))
    return NetworkGraph(nodes, tuple(branches), track_names, t)


def loop_resistance(graph: NetworkGraph, a: int, b: int, track: str | None = None) -> float:
    """Series power-rail plus running-rail resistance between nodes ``a`` and ``b``."""
    if a == b:
        return 0.0
    if track is None:
        track = graph.nodes[a].track or graph.nodes[b].track or graph.tracks[0]
    chain = graph.chain(track)
    try:
        ia, ib = sorted((chain.index(a), chain.index(b)))
    except ValueError:
        raise KeyError(f"nodes {a} and {b} are not both on track {track!r}") from None
    on_path = set(zip(chain[ia:ib], chain[ia + 1:ib + 1]))
    return sum(br.R_loop for br in graph.branches
               if br.track == track and (br.a, br.b) in on_path)

"""Shared-memory fabric model: domains, nodes, switches, and timed line access.

The fabric is a deterministic cost/state machine, not a packet simulator.
Every load/store is atomic at 64 B line granularity and moves data in 256 B
FLITs. Latency comes from a small cost model; bandwidth contention is modeled
by per-switch (and per-port / per-direct-link) FLIT service rates: an access
reserves a service slot on every resource along its route, and a busy resource
pushes the slot (and therefore the completion) later. A store fanned out by a
switch to several replicas is a single switch transaction: it consumes one
FLIT of shared switch bandwidth per replica but completes after one traversal
latency, because the switch duplicates to its output ports in parallel.

Data stores are write-through: the home (or replica) memory node holds the
authoritative value the moment the store completes, so a later process crash
leaves exactly the completed prefix of stores visible. The t_cache_hit path
exists for loads of cache-resident lines and for mechanism-owned local
buffers (`cache_write`), which live only on the compute node and are lost on
domain failure unless a last-gasp hook dumps them.
"""

from __future__ import annotations

import hashlib
import heapq
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .errors import (
    CrashInterrupt,
    HomeDomainFailed,
    NodeFailed,
    TopologyError,
    UnknownDomain,
)

LINE_SIZE = 64
FLIT_SIZE = 256
LINES_PER_FLIT = FLIT_SIZE // LINE_SIZE


def flits_for_lines(n_lines: int) -> int:
    """FLITs needed to move n_lines contiguous 64 B lines."""
    return max(1, -(-n_lines // LINES_PER_FLIT))


class NodeKind(Enum):
    COMPUTE = "compute"
    MEMORY = "memory"
    SWITCH = "switch"


class DomainStatus(Enum):
    UP = "up"
    FAILED = "failed"


@dataclass
class FailureDomain:
    id: int
    members: set[int] = field(default_factory=set)
    status: DomainStatus = DomainStatus.UP

    @property
    def up(self) -> bool:
        return self.status is DomainStatus.UP


@dataclass
class Node:
    id: int
    kind: NodeKind
    domain: int
    capacity_lines: int = 0
    cache_lines: int = 64
    registers_bytes: int = 512
    # runtime state
    mem: dict[int, int] = field(default_factory=dict)
    cache: "OrderedDict[int, bool]" = field(default_factory=OrderedDict)

    def touch_cache(self, addr: int) -> None:
        cache = self.cache
        if addr in cache:
            cache.move_to_end(addr)
        else:
            cache[addr] = True
            if len(cache) > self.cache_lines:
                cache.popitem(last=False)


@dataclass
class CostModel:
    t_cache_hit: float = 1.0
    t_cxl_access: float = 4.0
    t_switch_hop: float = 1.0
    switch_bw: float = 4.0     # FLITs per tick shared by all traffic in a switch
    node_bw: float = 4.0       # FLITs per tick through one memory node port
    transfer_cost_weight: float = 1.0  # abstract cost per metadata FLIT

    def validate(self) -> None:
        if min(self.t_cache_hit, self.t_cxl_access, self.t_switch_hop) < 1:
            raise TopologyError("all latencies must be >= 1 tick")
        if self.switch_bw < 1 or self.node_bw < 1:
            raise TopologyError("bandwidths must be >= 1 FLIT/tick")


@dataclass
class NodeSpec:
    id: int
    kind: NodeKind
    domain: int
    capacity_lines: int = 0
    cache_lines: int = 64
    registers_bytes: int = 512


@dataclass
class TopologySpec:
    domains: list[int]
    nodes: list[NodeSpec]
    links: list[tuple[int, int]]
    cost: CostModel = field(default_factory=CostModel)
    redundant_switches: bool = False
    data_home: Optional[int] = None   # node id holding the plain address space
    persistent_recovery: bool = False  # recovered memory keeps contents (NVM-style)


@dataclass
class Completion:
    issued_at: float
    finished_at: float
    flits: int
    link_charges: tuple = ()

    @property
    def ticks(self) -> float:
        return self.finished_at - self.issued_at


@dataclass
class TraceEvent:
    seq: int
    t: float
    kind: str      # store | load | cache_write | domain_fail | domain_recover
    src: int       # issuing node (or -1)
    node: int      # target/serving node (or domain id for domain events)
    addr: int
    tag: str       # data | undo_log | redo_log | marker | ckpt | epoch | dump | semlog | refcell | version | repair
    domain: int    # failure domain of the target


class SimClock:
    """Deterministic event clock: ties broken by insertion sequence."""

    def __init__(self):
        self.now = 0.0
        self._queue: list[tuple[float, int, Callable, tuple]] = []
        self._seq = 0

    def schedule(self, t: float, fn: Callable, *args) -> None:
        if t < self.now:
            t = self.now
        heapq.heappush(self._queue, (t, self._seq, fn, args))
        self._seq += 1

    def pending(self) -> bool:
        return bool(self._queue)

    def next_time(self) -> Optional[float]:
        return self._queue[0][0] if self._queue else None

    def run_until(self, t: float) -> None:
        """Fire every scheduled event with time <= t, then advance to t."""
        while self._queue and self._queue[0][0] <= t:
            et, _, fn, args = heapq.heappop(self._queue)
            if et > self.now:
                self.now = et
            fn(*args)
        if t > self.now:
            self.now = t


class _Resource:
    """A FLIT-serialized service point (switch, memory port, direct link)."""

    __slots__ = ("bw", "free_at", "served_flits")

    def __init__(self, bw: float):
        self.bw = bw
        self.free_at = 0.0
        self.served_flits = 0

    def reserve(self, at: float, flits: int) -> float:
        start = self.free_at if self.free_at > at else at
        self.free_at = start + flits / self.bw
        self.served_flits += flits
        return start


@dataclass
class Metrics:
    committed_ops: int = 0
    wall_ticks: float = 0.0
    flits_per_link: dict = field(default_factory=dict)
    op_latencies: list = field(default_factory=list)
    metadata_flits: int = 0
    # filled when ratioed against a baseline run of the same workload/seed
    throughput_ratio: Optional[float] = None
    latency_multiplier: Optional[float] = None

    @property
    def total_flits(self) -> int:
        return sum(self.flits_per_link.values())

    @property
    def mean_latency(self) -> float:
        if not self.op_latencies:
            return 0.0
        return sum(self.op_latencies) / len(self.op_latencies)

    def metadata_cost(self, weight: float) -> float:
        return self.metadata_flits * weight


METADATA_TAGS = frozenset(
    {"undo_log", "redo_log", "marker", "ckpt", "epoch", "dump", "semlog", "refcell"}
)


class Fabric:
    """A built topology plus all runtime simulation state."""

    def __init__(self, spec: TopologySpec):
        spec.cost.validate()
        self.spec = spec
        self.cost = spec.cost
        self.domains: dict[int, FailureDomain] = {}
        self.nodes: dict[int, Node] = {}
        self.clock = SimClock()
        self.metrics = Metrics()
        self.trace_enabled = False
        self.trace: list[TraceEvent] = []
        self.event_seq = 0
        self.crash_at_event: Optional[int] = None
        self._crash_cb: Optional[Callable] = None
        self.on_domain_fail: dict[int, list[Callable[[int], None]]] = {}
        self._region_base = 1 << 20
        self._adj: dict[int, list[int]] = {}
        self._routes: dict[tuple[int, int], list[list[int]]] = {}
        self._resources: dict = {}

        for did in spec.domains:
            if did in self.domains:
                raise TopologyError(f"duplicate domain id {did}")
            self.domains[did] = FailureDomain(id=did)
        for ns in spec.nodes:
            if ns.id in self.nodes:
                raise TopologyError(f"duplicate node id {ns.id}")
            if ns.domain not in self.domains:
                raise UnknownDomain(f"node {ns.id} references unknown domain {ns.domain}")
            if ns.kind is NodeKind.MEMORY and ns.capacity_lines <= 0:
                raise TopologyError(f"memory node {ns.id} must have capacity_lines > 0")
            if ns.kind is NodeKind.COMPUTE and ns.cache_lines < 1:
                raise TopologyError(f"compute node {ns.id} needs cache_lines >= 1")
            node = Node(
                id=ns.id,
                kind=ns.kind,
                domain=ns.domain,
                capacity_lines=ns.capacity_lines,
                cache_lines=ns.cache_lines,
                registers_bytes=ns.registers_bytes,
            )
            self.nodes[ns.id] = node
            self.domains[ns.domain].members.add(ns.id)

        kinds = {n.kind for n in self.nodes.values()}
        if NodeKind.COMPUTE not in kinds or NodeKind.MEMORY not in kinds:
            raise TopologyError("topology needs at least one compute and one memory node")

        for a, b in spec.links:
            if a not in self.nodes or b not in self.nodes:
                raise TopologyError(f"link ({a},{b}) references unknown node")
            self._adj.setdefault(a, []).append(b)
            self._adj.setdefault(b, []).append(a)
        for nid in self._adj:
            self._adj[nid].sort()

        for node in self.nodes.values():
            if node.kind is NodeKind.SWITCH:
                self._resources[("sw", node.id)] = _Resource(self.cost.switch_bw)
            elif node.kind is NodeKind.MEMORY:
                self._resources[("port", node.id)] = _Resource(self.cost.node_bw)
        for a, b in spec.links:
            ka, kb = self.nodes[a].kind, self.nodes[b].kind
            if NodeKind.SWITCH not in (ka, kb):
                self._resources[("link", min(a, b), max(a, b))] = _Resource(self.cost.switch_bw)

        if spec.data_home is not None:
            if spec.data_home not in self.nodes or self.nodes[spec.data_home].kind is not NodeKind.MEMORY:
                raise TopologyError("data_home must name a memory node")
            self.data_home = spec.data_home
        else:
            self.data_home = min(
                n.id for n in self.nodes.values() if n.kind is NodeKind.MEMORY
            )

    # -- address space -------------------------------------------------

    line_size = LINE_SIZE
    flit_size = FLIT_SIZE

    def home_of(self, addr: int) -> int:
        return self.data_home

    def alloc_region(self, lines: int = 1 << 20) -> int:
        """Reserve a disjoint address range for a mechanism; returns its base."""
        base = self._region_base
        self._region_base += max(lines, 1 << 20)
        return base

    # -- routing -------------------------------------------------------

    def routes(self, src: int, dst: int) -> list[list[int]]:
        """All shortest paths src->dst, deterministically ordered.

        Multiple same-length paths exist exactly when parallel (redundant)
        switches connect the endpoints; callers use the first unless the
        redundant-switches flag duplicates traffic across all of them.
        """
        key = (src, dst)
        cached = self._routes.get(key)
        if cached is not None:
            return cached
        if src == dst:
            return [[src]]
        # BFS recording all parents at the shortest depth
        depth = {src: 0}
        parents: dict[int, list[int]] = {}
        frontier = [src]
        found = None
        d = 0
        while frontier and found is None:
            nxt = []
            d += 1
            for u in frontier:
                for v in self._adj.get(u, ()):  # sorted, so deterministic
                    if v not in depth:
                        depth[v] = d
                        parents.setdefault(v, []).append(u)
                        nxt.append(v)
                    elif depth[v] == d:
                        parents[v].append(u)
            if dst in depth and depth[dst] == d:
                found = d
            frontier = nxt
        if found is None:
            raise TopologyError(f"no route between node {src} and node {dst}")

        paths: list[list[int]] = []

        def walk(v: int, acc: list[int]) -> None:
            if v == src:
                paths.append([src] + acc)
                return
            for p in sorted(parents[v]):
                walk(p, [v] + acc)

        walk(dst, [])
        paths.sort()
        self._routes[key] = paths
        return paths

    def _path_resources(self, path: list[int]) -> list:
        keys = []
        for hop in path[1:-1]:
            if self.nodes[hop].kind is NodeKind.SWITCH:
                keys.append(("sw", hop))
        if not keys and len(path) == 2:
            keys.append(("link", min(path), max(path)))
        dst = path[-1]
        if self.nodes[dst].kind is NodeKind.MEMORY:
            keys.append(("port", dst))
        return keys

    def _path_base_latency(self, path: list[int]) -> float:
        n_switches = sum(1 for hop in path[1:-1] if self.nodes[hop].kind is NodeKind.SWITCH)
        extra = max(0, n_switches - 1)
        return self.cost.t_cxl_access + extra * self.cost.t_switch_hop

    # -- failure domains -----------------------------------------------

    def node_up(self, node_id: int) -> bool:
        return self.domains[self.nodes[node_id].domain].up

    def require_up(self, node_id: int, error=NodeFailed) -> None:
        node = self.nodes[node_id]
        if not self.domains[node.domain].up:
            raise error(f"node {node_id} (domain {node.domain}) is down")

    def fail_domain(self, domain_id: int) -> None:
        if domain_id not in self.domains:
            raise UnknownDomain(f"no domain {domain_id}")
        dom = self.domains[domain_id]
        if not dom.up:
            return
        # last-gasp hooks run while the domain is formally still powering off
        for hook in self.on_domain_fail.get(domain_id, []):
            hook(domain_id)
        dom.status = DomainStatus.FAILED
        for nid in dom.members:
            node = self.nodes[nid]
            if node.kind is NodeKind.COMPUTE:
                node.cache.clear()
        self._record("domain_fail", -1, domain_id, -1, "fault", domain_id)

    def recover_domain(self, domain_id: int) -> None:
        if domain_id not in self.domains:
            raise UnknownDomain(f"no domain {domain_id}")
        dom = self.domains[domain_id]
        if dom.up:
            return
        dom.status = DomainStatus.UP
        for nid in dom.members:
            node = self.nodes[nid]
            if node.kind is NodeKind.MEMORY and not self.spec.persistent_recovery:
                node.mem.clear()  # CXL DRAM is volatile: contents are gone
        self._record("domain_recover", -1, domain_id, -1, "fault", domain_id)

    # -- event bookkeeping ----------------------------------------------

    def arm_crash(self, event_index: int, callback: Callable) -> None:
        """Fire `callback` at the boundary after the event_index-th event."""
        self.crash_at_event = event_index
        self._crash_cb = callback

    def _record(self, kind: str, src: int, node: int, addr: int, tag: str, domain: int, t: Optional[float] = None) -> None:
        seq = self.event_seq
        self.event_seq += 1
        if self.trace_enabled:
            self.trace.append(
                TraceEvent(seq, self.clock.now if t is None else t, kind, src, node, addr, tag, domain)
            )
        if self.crash_at_event is not None and seq + 1 == self.crash_at_event:
            # the boundary AFTER this event: next primitive never happens
            cb = self._crash_cb
            self.crash_at_event = None
            cb()
            raise CrashInterrupt()

    def _charge(self, path: list[int], flits: int, reverse: bool, tag: str) -> tuple:
        edges = list(zip(path, path[1:]))
        if reverse:
            edges = [(b, a) for a, b in reversed(edges)]
        charges = []
        per_link = self.metrics.flits_per_link
        for edge in edges:
            per_link[edge] = per_link.get(edge, 0) + flits
            charges.append((edge, flits))
        if tag in METADATA_TAGS:
            self.metrics.metadata_flits += flits * len(edges)
        return tuple(charges)

    # -- timed primitives -------------------------------------------------

    def write_line(self, src: int, dst: int, addr: int, value: int, at: Optional[float] = None, tag: str = "data") -> Completion:
        return self.write_block(src, dst, [(addr, value)], at=at, tag=tag)

    def write_block(
        self,
        src: int,
        dst: int,
        pairs: Iterable[tuple[int, int]],
        at: Optional[float] = None,
        tag: str = "data",
    ) -> Completion:
        """Streamed store of contiguous-ish lines to one memory node."""
        at = self.clock.now if at is None else at
        self.require_up(src)
        self.require_up(dst, HomeDomainFailed)
        pairs = list(pairs)
        flits = flits_for_lines(len(pairs))
        paths = self.routes(src, dst)
        use = paths if (self.spec.redundant_switches and len(paths) > 1) else paths[:1]
        slot = at
        res_keys = []
        for path in use:
            res_keys.extend(self._path_resources(path))
        resources = [self._resources[k] for k in res_keys]
        for r in resources:
            if r.free_at > slot:
                slot = r.free_at
        bottleneck = min((r.bw for r in resources), default=self.cost.switch_bw)
        for r in resources:
            r.free_at = slot + flits / r.bw
            r.served_flits += flits
        charges = ()
        for path in use:
            charges += self._charge(path, flits, reverse=False, tag=tag)
        finished = slot + max(self._path_base_latency(p) for p in use) + (flits - 1) / bottleneck
        node = self.nodes[dst]
        writer = self.nodes[src]
        for addr, value in pairs:
            node.mem[addr] = value
            if writer.kind is NodeKind.COMPUTE and tag == "data":
                writer.touch_cache(addr)
            self._record("store", src, dst, addr, tag, node.domain, t=finished)
        return Completion(at, finished, flits, charges)

    def fanout_write(
        self,
        src: int,
        targets: list[tuple[int, int]],
        value: int,
        at: Optional[float] = None,
        tag: str = "data",
    ) -> Completion:
        """One switch transaction duplicating a line store to many nodes.

        Consumes one FLIT of switch bandwidth per target but completes after a
        single traversal: the switch writes its output ports in parallel.
        Values are applied target-by-target in list order, so a crash boundary
        can fall between two replica applications.
        """
        at = self.clock.now if at is None else at
        self.require_up(src)
        for dst, _ in targets:
            self.require_up(dst, HomeDomainFailed)
        slot = at
        seen = {}
        for dst, _ in targets:
            paths = self.routes(src, dst)
            use = paths if (self.spec.redundant_switches and len(paths) > 1) else paths[:1]
            for path in use:
                for key in self._path_resources(path):
                    seen[key] = seen.get(key, 0) + 1
        resources = {k: self._resources[k] for k in seen}
        for r in resources.values():
            if r.free_at > slot:
                slot = r.free_at
        for key, flits in seen.items():
            r = resources[key]
            r.free_at = slot + flits / r.bw
            r.served_flits += flits
        charges = ()
        base = 0.0
        for dst, _ in targets:
            paths = self.routes(src, dst)
            use = paths if (self.spec.redundant_switches and len(paths) > 1) else paths[:1]
            for path in use:
                charges += self._charge(path, 1, reverse=False, tag=tag)
                lat = self._path_base_latency(path)
                if lat > base:
                    base = lat
        finished = slot + base
        writer = self.nodes[src]
        for dst, addr in targets:
            self.nodes[dst].mem[addr] = value
            self._record("store", src, dst, addr, tag, self.nodes[dst].domain, t=finished)
        if writer.kind is NodeKind.COMPUTE and tag == "data" and targets:
            writer.touch_cache(targets[0][1])
        return Completion(at, finished, len(targets), charges)

    def read_line(self, src: int, dst: int, addr: int, at: Optional[float] = None, tag: str = "data") -> tuple[int, Completion]:
        values, comp = self.read_block(src, dst, [addr], at=at, tag=tag)
        return values[0], comp

    def read_block(
        self,
        src: int,
        dst: int,
        addrs: Iterable[int],
        at: Optional[float] = None,
        tag: str = "data",
    ) -> tuple[list[int], Completion]:
        at = self.clock.now if at is None else at
        self.require_up(src)
        self.require_up(dst, HomeDomainFailed)
        addrs = list(addrs)
        flits = flits_for_lines(len(addrs))
        path = self.routes(src, dst)[0]
        res_keys = self._path_resources(path)
        resources = [self._resources[k] for k in res_keys]
        slot = at
        for r in resources:
            if r.free_at > slot:
                slot = r.free_at
        bottleneck = min((r.bw for r in resources), default=self.cost.switch_bw)
        for r in resources:
            r.free_at = slot + flits / r.bw
            r.served_flits += flits
        charges = self._charge(path, flits, reverse=True, tag=tag)
        finished = slot + self._path_base_latency(path) + (flits - 1) / bottleneck
        node = self.nodes[dst]
        values = []
        reader = self.nodes[src]
        for addr in addrs:
            values.append(node.mem.get(addr, 0))
            if reader.kind is NodeKind.COMPUTE and tag == "data":
                reader.touch_cache(addr)
            self._record("load", src, dst, addr, tag, node.domain, t=finished)
        return values, Completion(at, finished, flits, charges)

    def cache_write(self, node_id: int, key: int, at: Optional[float] = None, tag: str = "cache") -> Completion:
        """Volatile node-local write (mechanism buffers); t_cache_hit, no FLITs."""
        at = self.clock.now if at is None else at
        self.require_up(node_id)
        finished = at + self.cost.t_cache_hit
        self._record("cache_write", node_id, node_id, key, tag, self.nodes[node_id].domain, t=finished)
        return Completion(at, finished, 0, ())

    # -- plain (unreplicated) address-space operations -------------------

    def store(self, node_id: int, addr: int, value: int, at: Optional[float] = None, tag: str = "data") -> Completion:
        """Write-through store to the address's home memory node."""
        home = self.home_of(addr)
        return self.write_line(node_id, home, addr, value, at=at, tag=tag)

    def load(self, node_id: int, addr: int, at: Optional[float] = None, tag: str = "data") -> tuple[int, Completion]:
        """Load a line; served at t_cache_hit when locally resident."""
        at = self.clock.now if at is None else at
        self.require_up(node_id)
        node = self.nodes[node_id]
        home = self.home_of(addr)
        if addr in node.cache and tag == "data":
            self.require_up(home, HomeDomainFailed)  # coherence still needs the home
            node.touch_cache(addr)
            value = self.nodes[home].mem.get(addr, 0)
            finished = at + self.cost.t_cache_hit
            self._record("load", node_id, node_id, addr, tag, node.domain, t=finished)
            return value, Completion(at, finished, 0, ())
        return self.read_line(node_id, home, addr, at=at, tag=tag)

    # -- state inspection -------------------------------------------------

    def memory_state(self, node_id: int) -> dict[int, int]:
        return dict(self.nodes[node_id].mem)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if node.kind is not NodeKind.MEMORY:
                continue
            h.update(str(nid).encode())
            for addr in sorted(node.mem):
                v = node.mem[addr]
                if v:
                    h.update(f"{addr}:{v};".encode())
        return h.hexdigest()


def build_topology(spec: TopologySpec) -> Fabric:
    """Validate a topology description and return a live fabric."""
    return Fabric(spec)

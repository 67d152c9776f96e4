"""Low-space MPC accounting harness and the graph-exponentiation primitives.

Every node is simulated by one virtual machine.  Algorithms report each
synchronous round to a :class:`RoundLog`, which tracks the largest number of
words held by a single virtual machine, the total across machines and the
heaviest message load.  One word is one stored node ID or edge entry.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping

import numpy as np


def loglog(n: int) -> int:
    """``max(1, ceil(log2 log2 n))``."""
    if n <= 2:
        return 1
    return max(1, _ceil(math.log2(math.log2(n))))


def loglog_delta(n: int, delta: float) -> int:
    """``max(1, ceil(log2(delta * log2 n)))``: the number of doublings that
    reach radius ``delta * log2 n``."""
    x = delta * math.log2(n) if n > 1 else 0.0
    if x <= 1:
        return 1
    return max(1, _ceil(math.log2(x)))


def ceil_log2(n: int | float) -> int:
    return max(0, _ceil(math.log2(n))) if n > 1 else 0


def _ceil(x: float) -> int:
    # log2 of exact powers of two must not round up
    r = round(x)
    return int(r) if abs(x - r) < 1e-9 else math.ceil(x)


class CapViolation(RuntimeError):
    """A virtual machine (or the whole system) exceeded its memory budget."""

    def __init__(self, machine, round_index: int, quantity: str, value: int, limit: int):
        self.machine = machine
        self.round_index = round_index
        self.quantity = quantity
        self.value = value
        self.limit = limit
        super().__init__(f"round {round_index}: machine {machine!r} holds {value} {quantity}, cap {limit}")


class OrientationError(ValueError):
    pass


@dataclass(frozen=True)
class MpcConfig:
    """Model and algorithm constants.

    ``None`` fields are derived from the input size: the local cap is
    ``ceil(n**delta)``, ``peel_rep_2c`` comes from the maximum degree and
    ``step2d_peels`` defaults to ``2*l``.
    """

    delta: float = 0.5
    local_cap_words: int | None = None
    global_cap_factor: float = 4.0
    l: int = 3
    peel_rep_2c: int | None = None
    sims_per_phase_extra: int = 2
    step2d_peels: int | None = None
    enforce_caps: bool = True
    max_degree: int = 8
    split_const: int = 2
    color_sims: int | None = None
    phase_guard_factor: int = 4
    budget_override: int | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.l < 2:
            raise ValueError("l must be >= 2")
        if self.local_cap_words is not None and self.local_cap_words < self.l:
            raise ValueError("local_cap_words must be >= l")
        if self.global_cap_factor <= 0:
            raise ValueError("global_cap_factor must be positive")
        if self.split_const < 1:
            raise ValueError("split_const must be >= 1")

    def local_cap(self, n: int) -> int:
        if self.local_cap_words is not None:
            return self.local_cap_words
        return max(self.l, _ceil(n ** self.delta))

    def global_cap(self, n: int, m: int) -> int:
        # forests of isolated nodes have m = 0 but still hold one word per node
        return int(math.floor(self.global_cap_factor * max(m, n)))

    def peel_steps_2d(self) -> int:
        return 2 * self.l if self.step2d_peels is None else self.step2d_peels

    def color_simulations(self) -> int:
        if self.color_sims is not None:
            return self.color_sims
        return math.ceil(1 / self.delta) + 1

    def replace(self, **changes) -> "MpcConfig":
        return MpcConfig(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MpcConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def peel_repetitions(max_degree: int, l: int) -> int:
    """``2c`` with ``c`` the least integer such that ``(1 - 1/(4l))**c < 1/max_degree``."""
    d = max(max_degree, 1)
    q = 1 - 1 / (4 * l)
    c = 0
    while q ** c >= 1 / d:
        c += 1
    return 2 * c


# -- round log ------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    round: int
    phase: int
    peak_local_words: int
    global_words: int
    max_msgs_out: int
    max_msgs_in: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=False, separators=(", ", ": "))


@dataclass
class RoundLog:
    """Per-round metrics plus the caps that were active when they were logged.

    With ``enforce`` set, :meth:`record` raises :class:`CapViolation` as soon
    as a round exceeds its local budget or the global cap.
    """

    global_cap: int | None = None
    enforce: bool = False
    records: list[RoundRecord] = field(default_factory=list)
    budgets: list[int | None] = field(default_factory=list)
    stages: list[str] = field(default_factory=list)
    machines: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.records)

    def record(self, *, phase: int = 0, peak: int = 0, total: int = 0, msgs_out: int = 0,
               msgs_in: int = 0, budget: int | None = None, machine: Hashable = None,
               stage: str = "") -> RoundRecord:
        rec = RoundRecord(len(self.records) + 1, int(phase), int(peak), int(total),
                          int(msgs_out), int(msgs_in))
        if self.enforce:
            if budget is not None and rec.peak_local_words > budget:
                raise CapViolation(machine, rec.round, "words", rec.peak_local_words, budget)
            if self.global_cap is not None and rec.global_words > self.global_cap:
                raise CapViolation("<global>", rec.round, "global words", rec.global_words,
                                   self.global_cap)
        self.records.append(rec)
        self.budgets.append(budget)
        self.stages.append(stage)
        self.machines.append(machine)
        return rec

    def charge(self, words, machines=None, *, phase=0, msgs_out=0, msgs_in=0, budget=None,
               extra_total=0, stage="", repeat=1) -> None:
        """Log ``repeat`` identical rounds from a per-machine word vector."""
        words = np.asarray(words, dtype=np.int64)
        if len(words):
            k = int(np.argmax(words))
            peak = int(words[k])
            machine = None if machines is None else machines[k]
        else:
            peak, machine = 0, None
        total = int(words.sum()) + int(extra_total)
        for _ in range(repeat):
            self.record(phase=phase, peak=peak, total=total, msgs_out=msgs_out, msgs_in=msgs_in,
                        budget=budget, machine=machine, stage=stage)

    def extend(self, other: "RoundLog") -> None:
        for rec, b, s, mach in zip(other.records, other.budgets, other.stages, other.machines):
            self.record(phase=rec.phase, peak=rec.peak_local_words, total=rec.global_words,
                        msgs_out=rec.max_msgs_out, msgs_in=rec.max_msgs_in, budget=b, stage=s,
                        machine=mach)

    def rounds_in(self, stage: str) -> int:
        return sum(1 for s in self.stages if s == stage)

    @property
    def peak_local_words(self) -> int:
        return max((r.peak_local_words for r in self.records), default=0)

    @property
    def peak_global_words(self) -> int:
        return max((r.global_words for r in self.records), default=0)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "RoundLog":
        log = cls()
        for line in text.splitlines():
            if line.strip():
                d = json.loads(line)
                log.records.append(RoundRecord(**d))
                log.budgets.append(None)
                log.stages.append("")
                log.machines.append(None)
        return log


def split_words(words: np.ndarray, cap: int) -> np.ndarray:
    """Per-machine words after hosting each oversized node on several
    virtual machines of at most ``cap`` words each."""
    return np.minimum(np.asarray(words, dtype=np.int64), cap)


# -- generic superstep --------------------------------------------------------------


def state_words(state) -> int:
    if isinstance(state, (list, tuple, set, frozenset, dict)):
        return max(1, len(state))
    if isinstance(state, Ball):
        return state.size
    return 1


def run_superstep(states: Mapping[Hashable, Any],
                  compute: Callable[[Hashable, Any, list], tuple[Any, Iterable[tuple[Hashable, Any]]]],
                  inboxes: Mapping[Hashable, list] | None = None, *,
                  log: RoundLog | None = None, cap: int | None = None, phase: int = 0,
                  words: Callable[[Any], int] = state_words, stage: str = ""):
    """One synchronous round.

    ``compute(machine, state, inbox)`` returns ``(new_state, outbox)`` where
    the outbox is an iterable of ``(destination, payload)``.  Messages sent
    now are returned as next round's inboxes, each sorted by sender so that
    the outcome does not depend on the order machines are evaluated in.
    Returns ``(new_states, next_inboxes, record)``.
    """
    inboxes = inboxes or {}
    new_states = {}
    pending: dict[Hashable, list] = {}
    sent: dict[Hashable, int] = {}
    peak, peak_machine, total = 0, None, 0
    for mid in states:
        inbox = inboxes.get(mid, [])
        state, outbox = compute(mid, states[mid], inbox)
        new_states[mid] = state
        w = words(state)
        total += w
        if w > peak:
            peak, peak_machine = w, mid
        count = 0
        for dest, payload in outbox:
            if dest not in states:
                raise KeyError(f"message from {mid!r} to unknown machine {dest!r}")
            pending.setdefault(dest, []).append((mid, payload))
            count += 1
        sent[mid] = count
    for box in pending.values():
        box.sort(key=lambda item: _sort_key(item[0]))
    if log is None:
        log = RoundLog(enforce=cap is not None)
    budget = cap
    rec = log.record(phase=phase, peak=peak, total=total, msgs_out=max(sent.values(), default=0),
                     msgs_in=max((len(b) for b in pending.values()), default=0), budget=budget,
                     machine=peak_machine, stage=stage)
    return new_states, pending, rec


def _sort_key(x):
    return (0, x) if isinstance(x, (int, np.integer)) else (1, repr(x))


# -- balls and exponentiation ------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    """A node's collected neighbourhood: all nodes within ``radius`` hops of
    ``center`` in the current alive subgraph, and the edges among them."""

    center: int
    radius: int
    nodes: frozenset
    edges: frozenset
    stuck: bool = False

    @property
    def size(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> dict[int, list[int]]:
        adj = {v: [] for v in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def distances(self) -> dict[int, int]:
        return _bfs(self.adjacency(), self.center, None)


def _bfs(adj: Mapping[int, Iterable[int]], source: int, limit: int | None,
         allowed=None) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        d = dist[v]
        if limit is not None and d >= limit:
            continue
        for w in adj[v]:
            if w not in dist and (allowed is None or w in allowed):
                dist[w] = d + 1
                queue.append(w)
    return dist


def ball_from_graph(adj: Mapping[int, Iterable[int]], center: int, radius: int,
                    alive=None) -> Ball:
    """Exact radius-``radius`` ball by traversal (the reference construction)."""
    dist = _bfs(adj, center, radius, alive)
    nodes = frozenset(dist)
    edges = frozenset((min(u, w), max(u, w)) for u in nodes for w in adj[u]
                      if w in dist and dist[u] < radius)
    return Ball(center, radius, nodes, edges)


def initial_balls(adj: Mapping[int, Iterable[int]], alive=None) -> dict[int, Ball]:
    """Radius-1 balls, i.e. every node's own adjacency list."""
    nodes = adj.keys() if alive is None else alive
    balls = {}
    for v in nodes:
        nbrs = [w for w in adj[v] if alive is None or w in alive]
        balls[v] = Ball(v, 1, frozenset([v, *nbrs]), frozenset((min(v, w), max(v, w)) for w in nbrs))
    return balls


def restrict_ball(ball: Ball, alive) -> Ball:
    """The same-radius ball after the nodes outside ``alive`` were removed.

    Paths in a forest are unique, so surviving distances do not change and
    the new ball is the center's component inside the old one."""
    if ball.nodes <= alive:
        return ball
    edges = [(u, v) for u, v in ball.edges if u in alive and v in alive]
    adj = {v: [] for v in ball.nodes if v in alive}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    reach = _bfs(adj, ball.center, None)
    return Ball(ball.center, ball.radius, frozenset(reach),
                frozenset(e for e in edges if e[0] in reach), ball.stuck)


def exponentiate_step(balls: Mapping[int, Ball], budget: int, merge_cap: int | None = None) -> dict[int, Ball]:
    """One round of graph exponentiation with a per-node participation budget.

    A node doubles its radius by merging the balls of all nodes in its
    current ball, provided its ball has at most ``budget`` nodes, every
    member can serve a ball of the same radius and the merged ball stays
    within ``merge_cap`` (default ``budget**2``).  Otherwise it is marked
    stuck and keeps its ball.  Stuck nodes still serve their balls to others.
    """
    merge_cap = budget * budget if merge_cap is None else merge_cap
    out = {}
    for v in sorted(balls):
        b = balls[v]
        if b.stuck or b.size > budget:
            out[v] = b if b.stuck else _stuck(b)
            continue
        members = [balls.get(u) for u in b.nodes]
        if any(m is None or m.radius < b.radius for m in members):
            out[v] = _stuck(b)
            continue
        if sum(m.size for m in members) > merge_cap:
            # the union is never larger than the sum; only merge when it fits
            union = frozenset().union(*(m.nodes for m in members))
            if len(union) > merge_cap:
                out[v] = _stuck(b)
                continue
        out[v] = _merge(b, members)
    return out


def _stuck(b: Ball) -> Ball:
    return Ball(b.center, b.radius, b.nodes, b.edges, True)


def _merge(b: Ball, members: list[Ball]) -> Ball:
    radius = 2 * b.radius
    edges = set()
    for m in members:
        # members with a larger radius contribute only their radius-r part
        edges |= m.edges if m.radius == b.radius else ball_cut(m, b.radius).edges
    adj: dict[int, list[int]] = {b.center: []}
    for u, w in edges:
        adj.setdefault(u, []).append(w)
        adj.setdefault(w, []).append(u)
    dist = _bfs(adj, b.center, radius)
    nodes = frozenset(dist)
    kept = frozenset(e for e in edges if e[0] in dist and e[1] in dist)
    return Ball(b.center, radius, nodes, kept)


def ball_cut(b: Ball, radius: int) -> Ball:
    dist = _bfs(b.adjacency(), b.center, radius)
    return Ball(b.center, radius, frozenset(dist),
                frozenset(e for e in b.edges if e[0] in dist and e[1] in dist))


# -- directed exponentiation ------------------------------------------------------------


def _out_target(v, target):
    if target is None:
        return None
    if isinstance(target, (set, frozenset, list, tuple)):
        if len(target) > 1:
            raise OrientationError(f"node {v!r} has {len(target)} outgoing edges")
        return next(iter(target)) if target else None
    return target


def initial_directed_balls(out_edge: Mapping[int, Any]) -> dict[int, tuple]:
    """Length-1 dependency-path prefixes (empty for nodes without an out-edge)."""
    res = {}
    for v, t in out_edge.items():
        t = _out_target(v, t)
        res[v] = () if t is None else (t,)
    return res


def directed_exponentiate_step(out_edge: Mapping[int, Any], dballs: Mapping[int, tuple], *,
                               split_const: int = 2, log: RoundLog | None = None,
                               budget: int | None = None, phase: int = 0,
                               base_words: Mapping[int, int] | None = None,
                               stage: str = "") -> dict[int, tuple]:
    """Pointer doubling along dependency paths.

    ``dballs[v]`` is the prefix ``(parent(v), parent(parent(v)), ...)``
    known to ``v``; after ``t`` steps from length-1 prefixes its length is
    ``min(2**t, path length)``.  For accounting, a node with ``d`` incoming
    edges is hosted on ``ceil(d / split_const)`` virtual machines that each
    keep a copy of the node's out-edge and its prefix and serve at most
    ``split_const`` incoming edges.
    """
    for v, t in out_edge.items():
        _out_target(v, t)
    new = {}
    for v in dballs:
        p = dballs[v]
        new[v] = p + dballs.get(p[-1], ()) if p else p
    if log is not None:
        indeg: dict[int, int] = {}
        for v, t in out_edge.items():
            t = _out_target(v, t)
            if t is not None and t in dballs:
                indeg[t] = indeg.get(t, 0) + 1
        machines, words, extra_total, msgs_in = [], [], 0, 0
        for v in sorted(dballs):
            d = indeg.get(v, 0)
            vms = max(1, -(-d // split_const))
            w = 1 + len(new[v]) + (base_words.get(v, 0) if base_words else 0)
            machines.append(v)
            words.append(w)
            extra_total += (vms - 1) * (1 + len(dballs[v]))
            msgs_in = max(msgs_in, min(d, split_const))
        payload = max((len(p) for p in dballs.values()), default=0)
        log.charge(words, machines, phase=phase, msgs_out=split_const * max(payload, 1),
                   msgs_in=max(msgs_in, 1 if any(dballs.values()) else 0), budget=budget,
                   extra_total=extra_total, stage=stage)
    return new


def vm_split(indegree: int, split_const: int) -> tuple[int, int]:
    """(virtual machine count, max incoming edges per machine)."""
    vms = max(1, -(-indegree // split_const))
    return vms, min(indegree, split_const)

"""Rake-and-compress layer decompositions.

A decomposition assigns every node a layer such that each node has at most
two neighbours in its own or higher layers and every layer induces
singletons and paths of at least ``l`` nodes.  One *peeling step* removes,
from the alive subgraph, every node of degree <= 1 and every node on a
maximal run of >= ``l`` consecutive degree-<=2 nodes.  Three constructions
live here: the sequential reference, the constant-degree MPC algorithm and
the budgeted MPC algorithm for arbitrary degree.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, identity
from scipy.sparse.csgraph import connected_components

from .forest import Forest
from .runtime import (Ball, MpcConfig, RoundLog, ceil_log2, exponentiate_step, initial_balls,
                      loglog, loglog_delta, peel_repetitions, restrict_ball, split_words)
from .verify import Report


class DegreeBoundError(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


class InformerConflict(RuntimeError):
    pass


@dataclass(frozen=True)
class PhaseState:
    phase: int
    budget: int
    alive_start: int
    alive_end: int
    layer_base: int


@dataclass
class Decomposition:
    """Layer per node, aligned with the forest's node positions."""

    l: int
    ids: np.ndarray
    layers: np.ndarray
    phases: list[PhaseState] = field(default_factory=list)
    layer_budget: int | None = None

    @property
    def L(self) -> int:
        return int(self.layers.max()) if len(self.layers) else 0

    @property
    def layer(self) -> dict[int, int]:
        return dict(zip(self.ids.tolist(), self.layers.tolist()))

    @classmethod
    def from_map(cls, f: Forest, layer: dict[int, int], l: int = 3) -> "Decomposition":
        return cls(l, f.ids, np.array([layer[v] for v in f.ids.tolist()], dtype=np.int64))

    def to_json(self) -> str:
        pairs = sorted(zip(self.ids.tolist(), self.layers.tolist()))
        return json.dumps({"l": self.l, "L": self.L, "layers": [list(p) for p in pairs]})

    @classmethod
    def from_json(cls, f: Forest, text: str) -> "Decomposition":
        data = json.loads(text)
        return cls.from_map(f, {int(v): int(x) for v, x in data["layers"]}, data["l"])


# -- the peeling step ---------------------------------------------------------------


def _directed(f: Forest):
    e = f.edge_index
    return np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]])


def alive_degree(f: Forest, alive: np.ndarray, src=None, dst=None) -> np.ndarray:
    if src is None:
        src, dst = _directed(f)
    live = alive[src] & alive[dst]
    return np.bincount(src[live], minlength=f.n)


def peel_step(f: Forest, alive: np.ndarray, l: int = 3, _edges=None) -> np.ndarray:
    """Mask of alive nodes removed by one peeling step."""
    src, dst = _directed(f) if _edges is None else _edges
    live = alive[src] & alive[dst]
    deg = np.bincount(src[live], minlength=f.n)
    rake = alive & (deg <= 1)
    if l > 2:
        # isolated edge: the higher-ID endpoint waits one step
        both = live & (deg[src] == 1) & (deg[dst] == 1) & (f.ids[src] > f.ids[dst])
        rake[src[both]] = False
    low = alive & (deg <= 2)
    run = live & low[src] & low[dst]
    if run.any():
        g = coo_matrix((np.ones(int(run.sum()), dtype=np.int8), (src[run], dst[run])), shape=(f.n, f.n))
        _, label = connected_components(g, directed=False)
        size = np.bincount(label[low], minlength=f.n)
        compress = low & (size[label] >= l)
    else:
        compress = np.zeros(f.n, dtype=bool) if l > 1 else low
    return rake | compress


def sequential_decompose(f: Forest, l: int = 3, trace: list | None = None) -> Decomposition:
    """Peel until nothing is left; layer = step of removal.

    ``trace`` (if given) receives ``(alive_before, removed)`` per step.
    """
    edges = _directed(f)
    alive = np.ones(f.n, dtype=bool)
    layers = np.zeros(f.n, dtype=np.int64)
    step = 0
    while alive.any():
        step += 1
        out = peel_step(f, alive, l, edges)
        if trace is not None:
            trace.append((int(alive.sum()), int(out.sum())))
        layers[out] = step
        alive &= ~out
    return Decomposition(l, f.ids, layers)


# -- local simulation on a ball ------------------------------------------------------------

_UNKNOWN = None
_ALIVE = 0


def simulate_peels_on_ball(ball: Ball, steps: int, layer_base: int = 0, l: int = 3,
                           ids=None) -> dict[int, int]:
    """Run ``steps`` peeling steps on the ball and return the certified layers.

    A node's status is tracked as alive, removed-at-step-s, or unknown.  A
    decision is made only from information inside the ball: nodes on the
    ball's boundary have an unknown degree, and unknown statuses propagate.
    A node gets a layer (``layer_base + s``) only if its removal at step
    ``s`` is fully determined.  ``ids`` maps ball labels to node IDs for the
    isolated-edge tie-break (defaults to the labels themselves).
    """
    adj = ball.adjacency()
    dist = ball.distances()
    key = (lambda v: v) if ids is None else (lambda v: ids[v])
    interior = {v: dist.get(v, ball.radius) < ball.radius for v in adj}
    status: dict[int, int | None] = {v: _ALIVE for v in adj}

    for s in range(1, steps + 1):
        info = {}
        for v, st in status.items():
            if st != _ALIVE:
                continue
            lo = unk = 0
            for w in adj[v]:
                sw = status[w]
                if sw == _ALIVE:
                    lo += 1
                elif sw is _UNKNOWN:
                    unk += 1
            info[v] = (lo, lo if interior[v] and unk == 0 else None)

        new = {}
        for v, (lo, exact) in info.items():
            if exact is None:
                new[v] = _ALIVE if lo >= 3 else _UNKNOWN
            elif exact <= 1:
                new[v] = s
                if exact == 1 and l > 2:
                    (w,) = [w for w in adj[v] if status[w] == _ALIVE]
                    wlo, wexact = info[w]
                    if wexact is None:
                        if wlo < 2:
                            new[v] = _UNKNOWN
                    elif wexact == 1 and key(w) < key(v):
                        new[v] = _ALIVE
            elif exact == 2:
                new[v] = _chain_decision(v, adj, status, info, l, s)
            else:
                new[v] = _ALIVE
        changed = False
        for v, st in new.items():
            if st != _ALIVE:
                changed = True
            status[v] = st
        if not changed:
            break

    return {v: layer_base + st for v, st in status.items()
            if st is not _UNKNOWN and st != _ALIVE}


def _chain_decision(v, adj, status, info, l, s):
    count = 1
    unknown = False
    for first in [w for w in adj[v] if status[w] == _ALIVE]:
        prev, cur = v, first
        while count < l:
            lo, exact = info[cur]
            if exact is None:
                if lo < 3:
                    unknown = True
                break
            if exact >= 3:
                break
            count += 1
            if exact <= 1:
                break
            nxt = [w for w in adj[cur] if w != prev and status[w] == _ALIVE]
            prev, cur = cur, nxt[0]
        if count >= l:
            return s
    return _UNKNOWN if unknown else _ALIVE


# -- validation ------------------------------------------------------------------------------


def validate_decomposition(f: Forest, d: Decomposition) -> Report:
    """Check every clause of the decomposition definition; one violation
    entry per offending node (or per offending within-layer component)."""
    rep = Report()
    layers = np.asarray(d.layers)
    ids = f.ids
    if len(layers) != f.n:
        rep.add(None, "layer", f"{len(layers)} layers for {f.n} nodes")
        return rep
    for i in np.flatnonzero(layers < 1):
        rep.add(int(ids[i]), "layer", "node has no positive layer")
    src, dst = _directed(f)
    up = layers[dst] >= layers[src]
    count_up = np.bincount(src[up], minlength=f.n)
    for i in np.flatnonzero(count_up > 2):
        rep.add(int(ids[i]), "degree", f"{int(count_up[i])} neighbours in own or higher layers")
    if d.l == 3:
        higher = np.bincount(src[layers[dst] > layers[src]], minlength=f.n)
        for i in np.flatnonzero(higher > 1):
            rep.add(int(ids[i]), "parent", f"{int(higher[i])} neighbours in strictly higher layers")

    same = layers[src] == layers[dst]
    same_deg = np.bincount(src[same], minlength=f.n)
    g = coo_matrix((np.ones(int(same.sum()), dtype=np.int8), (src[same], dst[same])), shape=(f.n, f.n))
    _, label = connected_components(g, directed=False)
    size = np.bincount(label)
    branchy = np.zeros(len(size), dtype=bool)
    branchy[label[same_deg > 2]] = True
    reported = set()
    for i in range(f.n):
        c = label[i]
        if c in reported:
            continue
        if branchy[c]:
            reported.add(c)
            rep.add(int(ids[i]), "path", f"layer {int(layers[i])} component is not a path")
        elif 1 < size[c] < d.l:
            reported.add(c)
            rep.add(int(ids[i]), "path", f"layer {int(layers[i])} path has {int(size[c])} < {d.l} nodes")
    return rep


# -- MPC: constant degree ------------------------------------------------------------------------


def ball_sizes(f: Forest, alive: np.ndarray, radius: int) -> np.ndarray:
    """``|N^radius(v)|`` in the alive subgraph for every alive node (0 elsewhere)."""
    src, dst = _directed(f)
    live = alive[src] & alive[dst]
    if radius <= 1:
        return np.where(alive, np.bincount(src[live], minlength=f.n) + 1, 0)
    idx = np.flatnonzero(alive)
    pos = np.full(f.n, -1)
    pos[idx] = np.arange(len(idx))
    k = len(idx)
    a = csr_matrix((np.ones(int(live.sum()), dtype=np.int8), (pos[src[live]], pos[dst[live]])), shape=(k, k))
    a = a + identity(k, dtype=np.int8, format="csr")
    reach = a.copy()
    for _ in range(radius - 1):
        reach = reach @ a
        reach.data[:] = 1
    out = np.zeros(f.n, dtype=np.int64)
    out[idx] = np.diff(reach.indptr)
    return out


def mpc_decompose_bounded(f: Forest, cfg: MpcConfig = MpcConfig()) -> tuple[Decomposition, RoundLog]:
    """Constant-degree MPC decomposition.

    Phase ``i`` simulates ``2**(i-1)`` peeling steps ``2c`` times on
    radius-``2**(i-1)`` balls and then doubles the radius; afterwards whole
    radius-sized batches are simulated until the forest is empty.  A batch
    of ``x`` steps on radius-``x`` balls costs ``l`` rounds (each round runs
    ``x`` rounds of the ``l``-round local peeling protocol).  The layer of
    every node is its global step index, so the output equals the
    sequential decomposition.
    """
    n, l = f.n, cfg.l
    if f.max_degree > cfg.max_degree:
        raise DegreeBoundError(f"max degree {f.max_degree} exceeds the configured bound {cfg.max_degree}")
    cap = cfg.local_cap(n)
    reps = cfg.peel_rep_2c if cfg.peel_rep_2c is not None else peel_repetitions(f.max_degree, l)
    phases = loglog_delta(n, cfg.delta)
    log = RoundLog(global_cap=cfg.global_cap(n, f.m), enforce=cfg.enforce_caps)
    edges = _directed(f)
    alive = np.ones(n, dtype=bool)
    layers = np.zeros(n, dtype=np.int64)
    state = {"step": 0}

    def charge(radius, rounds, phase):
        sizes = ball_sizes(f, alive, radius)
        words = split_words(sizes, cap) if radius == 1 else sizes
        log.charge(words, f.ids, phase=phase, msgs_out=max(int(sizes.max()) - 1, 0),
                   msgs_in=max(int(sizes.max()) - 1, 0), budget=cap,
                   extra_total=int((~alive).sum()), stage="decompose", repeat=rounds)

    def simulate(radius, phase):
        charge(radius, l, phase)
        for _ in range(radius):
            if not alive.any():
                break
            out = peel_step(f, alive, l, edges)
            state["step"] += 1
            layers[out] = state["step"]
            alive[out] = False

    radius = 1
    for i in range(1, phases + 1):
        for _ in range(reps):
            if not alive.any():
                break
            simulate(radius, i)
        if not alive.any():
            break
        radius *= 2
        charge(radius, 1, i)
    guard = 0
    while alive.any():
        guard += 1
        if guard > 4 * n + 4:
            raise NonTermination("bounded decomposition did not finish")
        simulate(radius, 0)
    return Decomposition(l, f.ids, layers), log


# -- MPC: arbitrary degree -----------------------------------------------------------------


def phase_budget(n: int, phase: int, cap: int) -> int:
    """``min(cap, ceil(log2 n) ** (2 ** (phase - 1)))`` without overflow."""
    base = max(2, ceil_log2(n))
    b = base
    for _ in range(phase - 1):
        b = b * b
        if b >= cap:
            return cap
    return min(cap, b)


def general_layer_budget(n: int, cfg: MpcConfig) -> int:
    """Emitted-layer budget ``LL + phases * 2 * sims * 2**r`` with the pinned
    phase bound ``LL + sims_per_phase_extra``."""
    ll = loglog(n)
    sims = ll + cfg.sims_per_phase_extra
    return ll + (ll + cfg.sims_per_phase_extra) * 2 * sims * 2 ** ll


def mpc_decompose_general(f: Forest, cfg: MpcConfig = MpcConfig()) -> tuple[Decomposition, RoundLog]:
    """Budgeted MPC decomposition for arbitrary degree.

    Step 1 peels ``LL(n)`` times.  Each phase sets the budget ``B_i`` and
    runs twice: budgeted exponentiation (nodes whose ball exceeds
    ``sqrt(B_i)`` get stuck), ``LL(n) + extra`` ball simulations of a
    ``2**r``-step window with informing, a few plain peeling steps, and a
    memory wipe.  Every simulation advances the layer base by exactly
    ``2**r`` so all nodes agree on layer numbers.
    """
    n, l = f.n, cfg.l
    cap = cfg.local_cap(n)
    ll = loglog(n)
    r = ll
    window = 2 ** r
    exp_steps = r + ceil_log2(l)  # vision l * 2**r certifies a full window
    sims = ll + cfg.sims_per_phase_extra
    guard = cfg.phase_guard_factor * ll
    log = RoundLog(global_cap=cfg.global_cap(n, f.m), enforce=cfg.enforce_caps)
    edges = _directed(f)
    ids = f.ids
    alive = np.ones(n, dtype=bool)
    layers = np.zeros(n, dtype=np.int64)
    base = 0
    phases: list[PhaseState] = []

    def peel_rounds(budget, phase):
        nonlocal base
        deg = alive_degree(f, alive, *edges)
        words = split_words(np.where(alive, deg + 1, 0), budget)
        log.charge(words, ids, phase=phase, msgs_out=int(deg.max(initial=0)), msgs_in=int(deg.max(initial=0)),
                   budget=budget, extra_total=int((~alive).sum()), stage="decompose", repeat=l)
        out = peel_step(f, alive, l, edges)
        base += 1
        layers[out] = base
        alive[out] = False

    for _ in range(ll):
        if not alive.any():
            break
        peel_rounds(cap, 0)

    ids_list = ids.tolist()
    indptr, indices = f.indptr.tolist(), f.indices.tolist()
    phase = 0
    while alive.any():
        phase += 1
        if phase > guard:
            raise NonTermination(f"phase {phase} exceeds guard {guard}")
        budget = cfg.budget_override or phase_budget(n, phase, cap)
        part = math.isqrt(budget)
        alive_start = int(alive.sum())
        for _rep in range(2):
            if not alive.any():
                break
            live = set(np.flatnonzero(alive).tolist())
            adj = {v: [w for w in indices[indptr[v]:indptr[v + 1]] if w in live] for v in live}
            balls = initial_balls(adj)
            for _ in range(exp_steps):
                balls = exponentiate_step(balls, part, merge_cap=budget)
                _charge_balls(log, balls, ids_list, budget, phase, n - len(live), 1)
            for _ in range(sims):
                if not live:
                    break
                balls = {v: restrict_ball(balls[v], live) for v in live}
                informed: dict[int, int] = {}
                for v in sorted(live):
                    cert = simulate_peels_on_ball(balls[v], window, base, l, ids_list)
                    if v not in cert:
                        continue
                    for u, lay in cert.items():
                        prev = informed.setdefault(u, lay)
                        if prev != lay:
                            raise InformerConflict(f"node {ids_list[u]} told layers {prev} and {lay}")
                _charge_balls(log, balls, ids_list, budget, phase, n - len(live), 2)
                for u, lay in informed.items():
                    layers[u] = lay
                    alive[u] = False
                live.difference_update(informed)
                base += window
            for _ in range(cfg.peel_steps_2d()):
                if not alive.any():
                    break
                peel_rounds(budget, phase)
        phases.append(PhaseState(phase, budget, alive_start, int(alive.sum()), base))

    d = Decomposition(l, ids, layers, phases, general_layer_budget(n, cfg))
    return d, log


def _charge_balls(log, balls, ids, budget, phase, removed, rounds):
    words, machines, biggest = [], [], 0
    for v, b in balls.items():
        s = b.size
        biggest = max(biggest, s)
        # an oversized radius-1 ball is just the node's adjacency, hosted on several machines
        words.append(min(s, budget) if b.radius == 1 else s)
        machines.append(ids[v])
    log.charge(words, machines, phase=phase, msgs_out=max(biggest - 1, 0), msgs_in=max(biggest - 1, 0),
               budget=budget, extra_total=removed + _split_extra(balls, budget),
               stage="decompose", repeat=rounds)


def _split_extra(balls, budget):
    # words beyond the first machine of a split node still count globally
    return sum(b.size - budget for b in balls.values() if b.radius == 1 and b.size > budget)


def renumbered(d: Decomposition) -> np.ndarray:
    """Order-preserving renumbering of the non-empty layers to ``1..k``."""
    uniq = np.unique(d.layers)
    return np.searchsorted(uniq, d.layers) + 1

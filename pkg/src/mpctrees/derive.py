"""Maximal independent set and maximal matching from a proper 3-coloring.

Both run a fixed schedule over the colors 1, 2, 3, so their round counts do
not depend on ``n``.  Each is implemented twice: a vectorised version used by
the pipeline and a message-passing version on the superstep harness, which
the tests compare against each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .colorize import Coloring
from .decompose import Decomposition, _directed
from .forest import Forest
from .runtime import MpcConfig, RoundLog, run_superstep, split_words

MIS_ROUNDS_PER_COLOR = 2
MATCHING_ROUNDS_PER_COLOR = 5
COLORS = (1, 2, 3)


class ImproperColoring(ValueError):
    pass


@dataclass(frozen=True)
class MisSet:
    members: frozenset

    def to_json(self) -> str:
        return json.dumps(sorted(self.members))


@dataclass(frozen=True)
class Matching:
    edges: frozenset

    def to_json(self) -> str:
        return json.dumps([list(e) for e in sorted(self.edges)])


def _colors(f: Forest, col) -> np.ndarray:
    c = np.asarray(col.final if isinstance(col, Coloring) else col, dtype=np.int64)
    if len(c) != f.n or np.any((c < 1) | (c > 3)):
        raise ImproperColoring("colors must be given for every node and lie in {1, 2, 3}")
    u, v = f.edge_index[:, 0], f.edge_index[:, 1]
    bad = c[u] == c[v]
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ImproperColoring(f"edge ({int(f.ids[u[i]])}, {int(f.ids[v[i]])}) is monochromatic")
    return c


def _log(f, cfg):
    cap = cfg.local_cap(f.n)
    return RoundLog(global_cap=cfg.global_cap(f.n, f.m), enforce=cfg.enforce_caps), cap


def _charge(log, f, cap, repeat):
    deg = f.degree
    log.charge(split_words(deg + 1, cap), f.ids, msgs_out=min(int(deg.max(initial=0)), cap),
               msgs_in=min(int(deg.max(initial=0)), cap), budget=cap, stage="derive", repeat=repeat)


# -- maximal independent set -----------------------------------------------------------------------


def mis_from_coloring(f: Forest, col, cfg: MpcConfig = MpcConfig()) -> tuple[MisSet, RoundLog]:
    """Color by color: free nodes of the color join, their neighbours drop out."""
    c = _colors(f, col)
    log, cap = _log(f, cfg)
    src, dst = _directed(f)
    member = np.zeros(f.n, dtype=bool)
    out = np.zeros(f.n, dtype=bool)
    for i in COLORS:
        join = (c == i) & ~out
        member |= join
        out[dst[join[src]]] = True
        _charge(log, f, cap, MIS_ROUNDS_PER_COLOR)
    return MisSet(frozenset(f.ids[member].tolist())), log


def mis_by_messages(f: Forest, col) -> tuple[MisSet, RoundLog]:
    """Same schedule on the superstep harness."""
    c = _colors(f, col)
    adj = f.adjacency
    ids = f.ids.tolist()
    states = {v: {"color": int(c[k]), "in": False, "out": False} for k, v in enumerate(ids)}
    log = RoundLog()
    inboxes = None
    for i in COLORS:
        def announce(v, s, inbox, i=i):
            s = dict(s)
            if s["color"] == i and not s["out"]:
                s["in"] = True
                return s, [(w, "in") for w in adj[v]]
            return s, []

        def listen(v, s, inbox):
            if inbox and not s["in"]:
                s = dict(s, out=True)
            return s, []

        states, inboxes, _ = run_superstep(states, announce, inboxes, log=log, stage="derive")
        states, inboxes, _ = run_superstep(states, listen, inboxes, log=log, stage="derive")
    return MisSet(frozenset(v for v, s in states.items() if s["in"])), log


# -- maximal matching -----------------------------------------------------------------------------------


def matching_parents(f: Forest, d: Decomposition):
    """Directed edges ``(child, parent)``: the parent is in a strictly higher
    layer, or in the same layer with a higher ID.  At most two per child."""
    layers = np.asarray(d.layers)
    src, dst = _directed(f)
    ids = f.ids
    up = (layers[dst] > layers[src]) | ((layers[dst] == layers[src]) & (ids[dst] > ids[src]))
    child, par = src[up], dst[up]
    count = np.bincount(child, minlength=f.n)
    if np.any(count > 2):
        v = int(np.flatnonzero(count > 2)[0])
        raise ValueError(f"node {int(ids[v])} has {int(count[v])} matching parents")
    return child, par


def _best_parent(f, child, par, mask_child, free_par, exclude=None):
    """Per child in ``mask_child``: highest-ID parent that is free (and not
    ``exclude[child]``).  Returns -1 where none."""
    ok = mask_child[child] & free_par[par]
    if exclude is not None:
        ok &= par != exclude[child]
    best = np.full(f.n, -1, dtype=np.int64)
    if ok.any():
        c, p = child[ok], par[ok]
        order = np.lexsort((f.ids[p], c))
        c, p = c[order], p[order]
        last = np.ones(len(c), dtype=bool)
        last[:-1] = c[1:] != c[:-1]
        best[c[last]] = p[last]
    return best


def _accept(f, best, free):
    """Each free target accepts its highest-ID suitor.  Returns the
    accepted (suitor, target) pairs."""
    suitors = np.flatnonzero((best >= 0))
    if not len(suitors):
        return suitors, suitors
    targets = best[suitors]
    keep = free[targets]
    suitors, targets = suitors[keep], targets[keep]
    order = np.lexsort((f.ids[suitors], targets))
    suitors, targets = suitors[order], targets[order]
    last = np.ones(len(targets), dtype=bool)
    last[:-1] = targets[1:] != targets[:-1]
    return suitors[last], targets[last]


def matching_from_coloring(f: Forest, col, d: Decomposition,
                           cfg: MpcConfig = MpcConfig()) -> tuple[Matching, RoundLog]:
    """Per color: propose to the highest-ID free parent, parents accept the
    highest-ID suitor, rejected nodes retry their other parent once.  Five
    rounds per color (propose, accept, retry, accept, notify)."""
    c = _colors(f, col)
    log, cap = _log(f, cfg)
    child, par = matching_parents(f, d)
    partner = np.full(f.n, -1, dtype=np.int64)
    for i in COLORS:
        free = partner < 0
        prop = (c == i) & free
        first = _best_parent(f, child, par, prop, free)
        s, t = _accept(f, first, free)
        partner[s], partner[t] = t, s
        free = partner < 0
        rejected = np.zeros(f.n, dtype=bool)
        rejected[np.flatnonzero(first >= 0)] = True
        rejected &= free
        second = _best_parent(f, child, par, rejected, free, exclude=first)
        s, t = _accept(f, second, free)
        partner[s], partner[t] = t, s
        _charge(log, f, cap, MATCHING_ROUNDS_PER_COLOR)
    a = np.flatnonzero(partner >= 0)
    a = a[a < partner[a]]
    pairs = np.sort(np.stack([f.ids[a], f.ids[partner[a]]], axis=1), axis=1)
    return Matching(frozenset(map(tuple, pairs.tolist()))), log


def matching_by_messages(f: Forest, col, d: Decomposition) -> tuple[Matching, RoundLog]:
    """Same schedule on the superstep harness; nodes only use what their
    inboxes told them about which neighbours are matched."""
    c = _colors(f, col)
    adj = f.adjacency
    ids = f.ids.tolist()
    layer = dict(zip(ids, np.asarray(d.layers).tolist()))
    states = {}
    for k, v in enumerate(ids):
        parents = sorted((w for w in adj[v] if layer[w] > layer[v] or (layer[w] == layer[v] and w > v)),
                         reverse=True)
        if len(parents) > 2:
            raise ValueError(f"node {v} has {len(parents)} matching parents")
        states[v] = {"color": int(c[k]), "parents": parents, "partner": None, "taken": frozenset(),
                     "asked": None}

    def learn(s, inbox):
        taken = {w for w, msg in inbox if msg == "matched"}
        return dict(s, taken=s["taken"] | taken) if taken else dict(s)

    def proposer(i):
        def step(v, s, inbox):
            s = learn(s, inbox)
            if s["color"] != i or s["partner"] is not None:
                return s, []
            if s["asked"] is not None:  # retry round: was the first proposal accepted?
                if any(msg == "accept" for _, msg in inbox):
                    s["partner"], s["asked"] = s["asked"], None
                    return s, [(w, "matched") for w in adj[v]]
                options = [p for p in s["parents"] if p not in s["taken"] and p != s["asked"]]
                s["asked"] = None
            else:
                options = [p for p in s["parents"] if p not in s["taken"]]
            if not options:
                return s, []
            s["asked"] = options[0]
            return s, [(options[0], "propose")]
        return step

    def acceptor(v, s, inbox):
        s = learn(s, inbox)
        suitors = [w for w, msg in inbox if msg == "propose"]
        if not suitors or s["partner"] is not None:
            return s, []
        best = max(suitors)
        s["partner"] = best
        return s, [(best, "accept")] + [(w, "matched") for w in adj[v] if w != best]

    def finish(i):
        def step(v, s, inbox):
            s = learn(s, inbox)
            if s["color"] == i and s["asked"] is not None:
                if any(msg == "accept" for _, msg in inbox):
                    s["partner"] = s["asked"]
                    s["asked"] = None
                    return s, [(w, "matched") for w in adj[v]]
                s["asked"] = None
            return s, []
        return step

    log = RoundLog()
    inboxes = None
    for i in COLORS:
        for fn in (proposer(i), acceptor, proposer(i), acceptor, finish(i)):
            states, inboxes, _ = run_superstep(states, fn, inboxes, log=log, stage="derive")
    pairs = {tuple(sorted((v, s["partner"]))) for v, s in states.items() if s["partner"] is not None}
    return Matching(frozenset(pairs)), log

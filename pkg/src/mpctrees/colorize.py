"""3-coloring a forest from a layer decomposition.

Each layer induces paths and singletons, so it is first colored on its own
(polynomial color reduction down to a constant palette ``K``, then one
elimination round per color above 3).  Those temporary colors clash only
along edges to strictly higher layers.  Every node has at most one such
neighbour (its parent); walking the parent chain from the top down and
re-picking the smallest free color fixes all clashes.  The MPC drivers learn
the chains by pointer doubling, except for the lowest layers, which are
frozen and recolored one layer per round at the end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .decompose import Decomposition, _directed
from .forest import Forest
from .runtime import (MpcConfig, OrientationError, RoundLog, directed_exponentiate_step,
                      initial_directed_balls, loglog, loglog_delta, split_words)


class PaletteExhausted(RuntimeError):
    pass


@dataclass
class Coloring:
    ids: np.ndarray
    temp: np.ndarray
    final: np.ndarray
    frozen_layers: int = 0
    simulations: int = 0
    max_path: int = 0
    palette_k: int = 3
    sim_bound: int = 0

    @property
    def final_map(self) -> dict[int, int]:
        return dict(zip(self.ids.tolist(), self.final.tolist()))

    @property
    def temp_map(self) -> dict[int, int]:
        return dict(zip(self.ids.tolist(), self.temp.tolist()))

    def to_json(self) -> str:
        pairs = sorted(zip(self.ids.tolist(), self.final.tolist()))
        return json.dumps({"final": [list(p) for p in pairs], "frozen_layers": self.frozen_layers})


# -- within-layer coloring -----------------------------------------------------------------


def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % p for p in range(2, int(q ** 0.5) + 1))


def _iroot(x: int, k: int) -> int:
    """Largest r with r**k <= x."""
    r = int(round(x ** (1 / k)))
    while r ** k > x:
        r -= 1
    while (r + 1) ** k <= x:
        r += 1
    return r


def reduction_params(palette: int) -> tuple[int, int]:
    """``(q, d)`` with prime ``q > 2d`` and ``q**(d+1) >= palette`` minimising ``q``.

    Colors ``0..palette-1`` are read as degree-``d`` polynomials over GF(q)
    (base-``q`` digits); with at most two neighbours a free evaluation point
    always exists, and the new palette has ``q*q`` colors.
    """
    best = None
    for d in range(1, 64):
        q = max(2 * d + 1, _iroot(palette, d + 1))
        while not _is_prime(q) or q ** (d + 1) < palette:
            q += 1
        if best is None or q < best[0]:
            best = (q, d)
        if 2 * d + 1 > best[0]:
            break
    return best


def palette_schedule(palette: int) -> list[int]:
    """Palette sizes visited by the reduction, starting at ``palette``; the
    last entry is the fixed point ``K``."""
    seq = [palette]
    while True:
        q, _ = reduction_params(seq[-1])
        if q * q >= seq[-1]:
            return seq
        seq.append(q * q)


def _same_layer_edges(f: Forest, layers: np.ndarray):
    src, dst = _directed(f)
    same = layers[src] == layers[dst]
    return src[same], dst[same]


def _charge(log, f, cap, stage, repeat=1, phase=0):
    if log is None or repeat <= 0:
        return
    deg = f.degree
    log.charge(split_words(deg + 1, cap), f.ids, phase=phase, msgs_out=min(int(deg.max(initial=0)), cap),
               msgs_in=min(int(deg.max(initial=0)), cap), budget=cap, stage=stage, repeat=repeat)


def linial_within_layers(f: Forest, d: Decomposition, log: RoundLog | None = None,
                         cap: int | None = None) -> tuple[np.ndarray, int]:
    """Proper coloring of every layer, colors in ``1..K``.  Returns
    ``(colors, K)``; one round per reduction."""
    layers = np.asarray(d.layers)
    src, dst = _same_layer_edges(f, layers)
    sched = palette_schedule(f.id_space)
    color = f.ids - 1
    for palette in sched[:-1]:
        q, deg = reduction_params(palette)
        digits = np.stack([(color // q ** j) % q for j in range(deg + 1)], axis=1)
        xs = np.arange(q)
        powers = np.stack([xs ** j % q for j in range(deg + 1)], axis=0)
        values = digits @ powers % q  # (n, q): value of each node's polynomial at each point
        clash = np.zeros((f.n, q), dtype=bool)
        np.logical_or.at(clash, src, values[src] == values[dst])
        x = np.argmax(~clash, axis=1)
        color = x * q + values[np.arange(f.n), x]
        _charge(log, f, cap or f.n, "color")
    return color + 1, max(sched[-1], 3)


def reduce_to_three_within_layers(f: Forest, d: Decomposition, temp, k: int | None = None,
                                  log: RoundLog | None = None, cap: int | None = None) -> np.ndarray:
    """Eliminate colors ``k, k-1, ..., 4`` one per round; each node of the
    eliminated color takes the smallest of 1..3 unused by its layer
    neighbours.  Exactly ``k - 3`` rounds."""
    layers = np.asarray(d.layers)
    src, dst = _same_layer_edges(f, layers)
    color = np.array(temp, dtype=np.int64)
    k = int(color.max(initial=3)) if k is None else k
    for c in range(k, 3, -1):
        mine = color == c
        if mine.any():
            used = np.zeros((f.n, 4), dtype=bool)
            sel = mine[src] & (color[dst] <= 3)
            used[src[sel], color[dst[sel]]] = True
            free = ~used[:, 1:]
            color[mine] = np.argmax(free[mine], axis=1) + 1
        _charge(log, f, cap or f.n, "color")
    return color


# -- dependencies -------------------------------------------------------------------------------------


def orient_dependencies(f: Forest, d: Decomposition) -> np.ndarray:
    """Parent position per node (-1 if none): the unique neighbour in a
    strictly higher layer."""
    layers = np.asarray(d.layers)
    src, dst = _directed(f)
    up = layers[dst] > layers[src]
    count = np.bincount(src[up], minlength=f.n)
    if np.any(count > 1):
        v = int(np.flatnonzero(count > 1)[0])
        raise OrientationError(f"node {int(f.ids[v])} has {int(count[v])} strictly higher neighbours")
    parent = np.full(f.n, -1, dtype=np.int64)
    parent[src[up]] = dst[up]
    return parent


def recolor_along_path(path, temp, banned, anchor_final: int | None = None) -> dict:
    """Final colors for ``path = [v, parent(v), ..., top]``.

    The top keeps its temporary color (or ``anchor_final`` if its final color
    is already known); going down, each node takes the smallest of 1..3
    differing from its parent's final color and from ``banned[node]`` (the
    temporary colors of its same-layer neighbours).
    """
    top = path[-1]
    out = {top: temp[top] if anchor_final is None else anchor_final}
    above = out[top]
    for v in reversed(path[:-1]):
        avoid = {above, *banned[v]}
        free = [c for c in (1, 2, 3) if c not in avoid]
        if not free:
            raise PaletteExhausted(f"node {v!r} must avoid {sorted(avoid)}")
        above = out[v] = free[0]
    return out


def _final_step(final, parent, temp, nb_temp, nodes):
    """Vectorised recolor rule for nodes whose parent is final."""
    avoid = np.zeros((len(nodes), 4), dtype=bool)
    rows = np.arange(len(nodes))
    avoid[rows, final[parent[nodes]]] = True
    for col in nb_temp:
        t = col[nodes]
        avoid[rows[t > 0], t[t > 0]] = True
    free = ~avoid[:, 1:]
    if not free.any(axis=1).all():
        raise PaletteExhausted("node with more than two constraints")
    return np.argmax(free, axis=1) + 1


# -- drivers -----------------------------------------------------------------------------------


def mpc_color_bounded(f: Forest, d: Decomposition, cfg: MpcConfig = MpcConfig()):
    """Constant-degree driver: ``ceil(1/delta)+1``-style simulation budget."""
    return _mpc_color(f, d, cfg, sim_bound=cfg.color_simulations(), split_const=max(f.max_degree, 1))


def mpc_color_general(f: Forest, d: Decomposition, cfg: MpcConfig = MpcConfig()):
    """Arbitrary-degree driver: up to ``LL(n)**2 + const`` simulations and
    in-degree load balancing over ``split_const``-edge virtual machines."""
    extra = cfg.color_sims if cfg.color_sims is not None else 2
    return _mpc_color(f, d, cfg, sim_bound=loglog(f.n) ** 2 + extra, split_const=cfg.split_const)


def _mpc_color(f, d, cfg, sim_bound, split_const):
    n = f.n
    cap = cfg.local_cap(n)
    log = RoundLog(global_cap=cfg.global_cap(n, f.m), enforce=cfg.enforce_caps)
    layers = np.asarray(d.layers)

    temp, k = linial_within_layers(f, d, log, cap)
    temp = reduce_to_three_within_layers(f, d, temp, k, log, cap)
    parent = orient_dependencies(f, d)
    _charge(log, f, cap, "color")  # learn neighbour layers and temporary colors

    # same-layer neighbour temporary colors, at most two per node
    src, dst = _same_layer_edges(f, layers)
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    first = np.ones(len(src), dtype=bool)
    first[1:] = src[1:] != src[:-1]
    nb_temp = [np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)]
    nb_temp[0][src[first]] = temp[dst[first]]
    nb_temp[1][src[~first]] = temp[dst[~first]]

    frozen = min(loglog(n), int(layers.max(initial=0)))
    final = np.zeros(n, dtype=np.int64)
    root = parent < 0
    final[root] = temp[root]

    # unfrozen nodes with a parent learn their dependency path by pointer doubling
    dependent = np.flatnonzero(~root & (layers > frozen))
    sims, max_path = 0, 0
    if len(dependent):
        par = parent.tolist()
        out_edge = {int(v): par[v] for v in dependent}
        dballs = initial_directed_balls(out_edge)
        for _ in range(loglog_delta(n, cfg.delta)):
            dballs = directed_exponentiate_step(out_edge, dballs, split_const=split_const, log=log,
                                                budget=cap, stage="color")
        temp_l = temp.tolist()
        banned = {int(v): [t for t in (nb_temp[0][v], nb_temp[1][v]) if t] for v in dependent}
        known = {int(v): int(final[v]) for v in np.flatnonzero(root & (layers > frozen))}
        pending = sorted(out_edge)
        while pending:
            sims += 1
            if sims > len(out_edge) + 1:
                raise RuntimeError("dependency paths did not resolve")
            resolved = {}
            for v in pending:
                prefix = dballs[v]
                for j, u in enumerate(prefix):
                    if u in known:
                        path = [v, *prefix[:j + 1]]
                        resolved[v] = recolor_along_path(path, temp_l, banned, known[u])[v]
                        break
            log.charge([1 + len(dballs[v]) for v in pending], [int(f.ids[v]) for v in pending],
                       budget=cap, msgs_out=1, msgs_in=1, stage="color")
            known.update(resolved)
            pending = [v for v in pending if v not in resolved]
        for v, c in known.items():
            final[v] = c
        max_path = _longest_chain(parent, layers)

    # frozen layers, top down, one layer per round
    for lay in range(frozen, 0, -1):
        nodes = np.flatnonzero((layers == lay) & ~root)
        if len(nodes):
            final[nodes] = _final_step(final, parent, temp, nb_temp, nodes)
        _charge(log, f, cap, "color")

    chain = max_path or _longest_chain(parent, layers)
    return Coloring(f.ids, temp, final, frozen, sims, chain, k, sim_bound), log


def _longest_chain(parent, layers) -> int:
    """Number of edges on the longest dependency path."""
    depth = np.zeros(len(parent), dtype=np.int64)
    has = parent >= 0
    for lay in np.unique(layers[has])[::-1]:
        nodes = np.flatnonzero(has & (layers == lay))
        depth[nodes] = depth[parent[nodes]] + 1
    return int(depth.max(initial=0))


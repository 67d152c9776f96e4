"""Validators and reference oracles.

Everything here is a plain scan over the forest's ID-level adjacency and
deliberately shares no code with the algorithm modules, so agreement between
an algorithm and these checks is evidence rather than tautology.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .forest import Forest


@dataclass(frozen=True)
class Violation:
    subject: object
    clause: str
    detail: str = ""


@dataclass
class Report:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, subject, clause, detail=""):
        self.violations.append(Violation(subject, clause, detail))

    def clauses(self) -> set[str]:
        return {v.clause for v in self.violations}

    def to_json(self) -> str:
        return json.dumps({"ok": self.ok, "violations": [
            {"subject": _plain(v.subject), "clause": v.clause, "detail": v.detail}
            for v in self.violations]}, sort_keys=True)

    def __str__(self):
        if self.ok:
            return "ok"
        head = "; ".join(f"{v.clause} at {v.subject}: {v.detail}" for v in self.violations[:5])
        more = f" (+{len(self.violations) - 5} more)" if len(self.violations) > 5 else ""
        return head + more


def _plain(x):
    if isinstance(x, tuple):
        return [_plain(y) for y in x]
    if hasattr(x, "item"):
        return x.item()
    return x


def check_proper_coloring(f: Forest, colors, palette=(1, 2, 3)) -> Report:
    rep = Report()
    allowed = set(palette) if palette is not None else None
    for v in f.adjacency:
        if v not in colors:
            rep.add(v, "missing", "node has no color")
        elif allowed is not None and colors[v] not in allowed:
            rep.add(v, "palette", f"color {colors[v]} outside {sorted(allowed)}")
    for u, v in f.edges():
        if colors.get(u) is not None and colors.get(u) == colors.get(v):
            rep.add((u, v), "monochromatic", f"both endpoints colored {colors[u]}")
    return rep


def check_mis(f: Forest, mis) -> Report:
    rep = Report()
    members = set(mis)
    for v in members - f.adjacency.keys():
        rep.add(v, "unknown", "not a node of the forest")
    for u, v in f.edges():
        if u in members and v in members:
            rep.add((u, v), "independence", "both endpoints in the set")
    for v, nbrs in f.adjacency.items():
        if v not in members and not any(w in members for w in nbrs):
            rep.add(v, "maximality", "neither the node nor a neighbour is in the set")
    return rep


def check_maximal_matching(f: Forest, matching) -> Report:
    rep = Report()
    edges = set(f.edges())
    matched: dict[int, tuple] = {}
    for e in matching:
        u, v = sorted(e)
        if (u, v) not in edges:
            rep.add((u, v), "not-an-edge", "pair is not an edge of the forest")
            continue
        for x in (u, v):
            if x in matched:
                rep.add(x, "degree", f"in {matched[x]} and {(u, v)}")
            else:
                matched[x] = (u, v)
    for u, v in sorted(edges):
        if u not in matched and v not in matched:
            rep.add((u, v), "maximality", "edge could be added")
    return rep


def check_budgets(log, cfg, phase_budgets: dict[int, int], n: int, m: int) -> Report:
    """Every round within its active local budget (phase budget if the
    round's phase has one, the local cap otherwise) and the global cap."""
    rep = Report()
    cap = cfg.local_cap(n)
    gcap = cfg.global_cap(n, m)
    machines = getattr(log, "machines", None)
    for k, rec in enumerate(log.records):
        budget = phase_budgets.get(rec.phase, cap)
        who = machines[k] if machines else None
        if rec.peak_local_words > budget:
            rep.add(rec.round, "local", f"machine {who!r}: {rec.peak_local_words} words > {budget}")
        if rec.global_words > gcap:
            rep.add(rec.round, "global", f"{rec.global_words} words > {gcap}")
    return rep


# -- reference decomposition -------------------------------------------------------------


def reference_layers(f: Forest, l: int = 3) -> dict[int, int]:
    """Sequential peeling by explicit traversal.

    A step removes every alive node of degree <= 1 and every node on a
    maximal run of >= l consecutive alive nodes of degree <= 2.  In an
    isolated edge only the lower-ID endpoint goes first (l > 2), otherwise a
    layer would contain a two-node path.
    """
    adj = f.adjacency
    alive = set(adj)
    layer: dict[int, int] = {}
    step = 0
    while alive:
        step += 1
        deg = {v: sum(1 for w in adj[v] if w in alive) for v in alive}
        out = set()
        seen = set()
        for v in alive:
            d = deg[v]
            if d <= 1:
                if d == 1 and l > 2:
                    (w,) = [w for w in adj[v] if w in alive]
                    if deg[w] == 1 and w < v:
                        continue
                out.add(v)
            if d <= 2 and v not in seen:
                run = [v]
                seen.add(v)
                stack = [v]
                while stack:
                    x = stack.pop()
                    for w in adj[x]:
                        if w in alive and w not in seen and deg[w] <= 2:
                            seen.add(w)
                            run.append(w)
                            stack.append(w)
                if len(run) >= l:
                    out.update(run)
        for v in out:
            layer[v] = step
        alive -= out
    return layer


def dense_rank(layers: dict[int, int]) -> dict[int, int]:
    order = {x: i + 1 for i, x in enumerate(sorted(set(layers.values())))}
    return {v: order[x] for v, x in layers.items()}


def oracle_compare_layers(f: Forest, layers: dict[int, int], l: int = 3, renumber: bool = False,
                          reference: dict[int, int] | None = None) -> Report:
    """Compare a layer map against the reference peeling, exactly or after
    the order-preserving renumbering that drops empty layers."""
    ref = reference_layers(f, l) if reference is None else reference
    got = dense_rank(layers) if renumber else layers
    rep = Report()
    for v in sorted(ref):
        if got.get(v) != ref[v]:
            rep.add(v, "layer-mismatch", f"got {got.get(v)}, reference {ref[v]}")
    return rep


def reference_recolor(f: Forest, layers: dict[int, int], temp: dict[int, int]) -> dict[int, int]:
    """Top-down sweep: a node without a strictly higher neighbour keeps its
    temporary color; otherwise it takes the smallest of 1..3 differing from
    its higher neighbour's final color and its same-layer neighbours'
    temporary colors."""
    adj = f.adjacency
    final: dict[int, int] = {}
    for v in sorted(adj, key=lambda x: -layers[x]):
        up = [w for w in adj[v] if layers[w] > layers[v]]
        if not up:
            final[v] = temp[v]
            continue
        (p,) = up
        banned = {final[p]} | {temp[w] for w in adj[v] if layers[w] == layers[v]}
        final[v] = min(c for c in (1, 2, 3) if c not in banned)
    return final

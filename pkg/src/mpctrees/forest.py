"""Forest representation, tree generators and the edge-list file format."""

from __future__ import annotations

import heapq
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class ForestError(ValueError):
    """Raised for malformed input or inputs that are not simple forests."""


class ForestParseError(ForestError):
    pass


class ForestStructureError(ForestError):
    pass


class Forest:
    """Immutable simple undirected forest with unique positive node IDs.

    Nodes are stored by position (``0..n-1``) in input or generation order;
    ``ids[i]`` is the ID of position ``i``.  Adjacency is kept in CSR form
    (``indptr``/``indices``, positions, neighbours sorted by ID) so the
    algorithms can work on arrays; ``adjacency`` gives the ID-level view.
    """

    def __init__(self, ids, edges, id_space=None):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = len(ids)
        if n == 0:
            raise ForestStructureError("a forest needs at least one node")
        if ids.min() < 1:
            raise ForestStructureError("node IDs must be positive")
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
        if np.any(sorted_ids[1:] == sorted_ids[:-1]):
            raise ForestStructureError("node IDs must be distinct")
        N = int(sorted_ids[-1]) if id_space is None else int(id_space)
        if sorted_ids[-1] > N:
            raise ForestStructureError(f"ID {int(sorted_ids[-1])} exceeds id space {N}")

        self.ids = ids
        self.n = n
        self.id_space = N
        self._order = order
        self._sorted_ids = sorted_ids
        self.ids.flags.writeable = False

        u = self.index(edges[:, 0])
        v = self.index(edges[:, 1])
        if np.any(u == v):
            bad = int(ids[u[u == v][0]])
            raise ForestStructureError(f"self-loop at node {bad}")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = lo * n + hi
        if len(np.unique(keys)) != len(keys):
            raise ForestStructureError("duplicate edge")
        m = len(edges)
        if m:
            graph = coo_matrix((np.ones(m, dtype=np.int8), (lo, hi)), shape=(n, n))
            ncomp, _ = connected_components(graph, directed=False)
        else:
            ncomp = n
        if m != n - ncomp:
            raise ForestStructureError("edges contain a cycle")

        self.m = m
        self.edge_index = np.stack([u, v], axis=1) if m else np.zeros((0, 2), dtype=np.int64)
        self.edge_index.flags.writeable = False

        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        # neighbours sorted by ID within each row
        perm = np.lexsort((ids[dst], src))
        self.indices = dst[perm]
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=self.indptr[1:])
        self.degree = np.diff(self.indptr)
        for arr in (self.indices, self.indptr, self.degree):
            arr.flags.writeable = False

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_edges(cls, edges, nodes=(), id_space=None):
        """Build from ID pairs; node order is order of first appearance."""
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        seq = np.concatenate([edges.reshape(-1), np.asarray(list(nodes), dtype=np.int64)])
        uniq, first = np.unique(seq, return_index=True)
        ids = uniq[np.argsort(first, kind="stable")]
        return cls(ids, edges, id_space=id_space)

    def index(self, node_ids):
        """Positions of the given IDs (vectorised); raises on unknown IDs."""
        arr = np.asarray(node_ids, dtype=np.int64)
        pos = np.searchsorted(self._sorted_ids, arr)
        pos = np.clip(pos, 0, self.n - 1)
        if np.any(self._sorted_ids[pos] != arr):
            raise KeyError("unknown node ID")
        return self._order[pos]

    # -- views ---------------------------------------------------------------

    @cached_property
    def adjacency(self) -> dict[int, list[int]]:
        ids = self.ids.tolist()
        idx = self.indices.tolist()
        ptr = self.indptr.tolist()
        return {ids[i]: [ids[j] for j in idx[ptr[i]:ptr[i + 1]]] for i in range(self.n)}

    def neighbors(self, node_id: int) -> list[int]:
        return self.adjacency[node_id]

    def edges(self) -> list[tuple[int, int]]:
        """Edge list as sorted ID pairs ``(min, max)``, sorted."""
        a = self.ids[self.edge_index]
        a.sort(axis=1)
        return sorted(map(tuple, a.tolist()))

    @property
    def max_degree(self) -> int:
        return int(self.degree.max()) if self.n else 0

    @property
    def components(self) -> int:
        return self.n - self.m

    def __repr__(self):
        return f"Forest(n={self.n}, m={self.m}, N={self.id_space})"

    def __eq__(self, other):
        return (isinstance(other, Forest) and sorted(self.ids.tolist()) == sorted(other.ids.tolist())
                and self.edges() == other.edges())

    __hash__ = None


def degree_histogram(f: Forest) -> dict[int, int]:
    counts = np.bincount(f.degree)
    return {d: int(c) for d, c in enumerate(counts) if c}


# -- text format ---------------------------------------------------------------

_NODE_RE = re.compile(r"^node\s+(-?\d+)$")
_PAIR_RE = re.compile(r"^(-?\d+)\s+(-?\d+)$")


def load_forest(text: str, id_space=None) -> Forest:
    """Parse the edge-list format.

    Lines are ``u v`` edges, ``node u`` declarations of (possibly isolated)
    nodes, and ``#`` comments.  The first data line is taken as an ``n m``
    header only when the rest of the document has exactly ``m`` edges over
    exactly ``n`` nodes; otherwise it is an ordinary edge.
    """
    pairs: list[tuple[int, int, int]] = []
    nodes: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        mt = _NODE_RE.match(line)
        if mt:
            nodes.append(int(mt.group(1)))
            continue
        mt = _PAIR_RE.match(line)
        if not mt:
            raise ForestParseError(f"line {lineno}: cannot parse {raw!r}")
        pairs.append((int(mt.group(1)), int(mt.group(2)), lineno))

    if pairs:
        hn, hm, _ = pairs[0]
        rest = pairs[1:]
        if hm == len(rest) and hn >= 1:
            seen = {x for u, v, _ in rest for x in (u, v)} | set(nodes)
            if len(seen) == hn:
                pairs = rest
    if not pairs and not nodes:
        raise ForestParseError("empty document")
    for u, v, lineno in pairs:
        if u < 1 or v < 1:
            raise ForestParseError(f"line {lineno}: IDs must be positive")
    edges = [(u, v) for u, v, _ in pairs]
    return Forest.from_edges(np.asarray(edges, dtype=np.int64).reshape(-1, 2), nodes, id_space=id_space)


def dump_forest(f: Forest) -> str:
    lines = [f"{f.n} {f.m}"]
    lines += [f"{u} {v}" for u, v in f.edges()]
    lines += [f"node {int(i)}" for i in f.ids[f.degree == 0]]
    return "\n".join(lines) + "\n"


def read_forest(path, id_space=None) -> Forest:
    return load_forest(Path(path).read_text(encoding="utf-8"), id_space=id_space)


def write_forest(f: Forest, path) -> None:
    Path(path).write_text(dump_forest(f), encoding="utf-8")


# -- generators ------------------------------------------------------------------

KINDS = ("path", "star", "caterpillar", "spider", "complete_kary", "random_pruefer", "random_bounded")


@dataclass(frozen=True)
class TreeGenSpec:
    """What to generate.  ``param`` is k for complete_kary, dmax for
    random_bounded and the number of legs for spider."""

    kind: str
    n: int
    seed: int = 0
    param: int | None = None

    @classmethod
    def parse(cls, text: str) -> "TreeGenSpec":
        """Parse ``kind:n[:seed]`` where kind may carry ``(param)``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad generator spec {text!r}")
        mt = re.fullmatch(r"([a-z_]+)(?:\((\d+)\))?", parts[0])
        if not mt:
            raise ValueError(f"bad generator kind {parts[0]!r}")
        param = int(mt.group(2)) if mt.group(2) else None
        seed = int(parts[2]) if len(parts) == 3 else 0
        return cls(mt.group(1), int(parts[1]), seed, param)

    def __str__(self):
        kind = self.kind if self.param is None else f"{self.kind}({self.param})"
        return f"{kind}:{self.n}:{self.seed}"


def generate(spec: TreeGenSpec, id_space: int | None = None) -> Forest:
    """Deterministic tree for ``spec``.  With ``id_space`` the IDs are a
    seeded random injection of ``1..n`` into ``[1, id_space]``."""
    n, kind, p = spec.n, spec.kind, spec.param
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    if kind == "path":
        parent = np.arange(-1, n - 1)
    elif kind == "star":
        parent = np.zeros(n, dtype=np.int64)
        parent[0] = -1
    elif kind == "caterpillar":
        spine = max(1, (n + 1) // 2)
        parent = np.empty(n, dtype=np.int64)
        parent[:spine] = np.arange(-1, spine - 1)
        parent[spine:] = np.arange(n - spine) % spine
    elif kind == "spider":
        legs = 3 if p is None else p
        if legs < 1:
            raise ValueError("spider needs at least one leg")
        parent = np.empty(n, dtype=np.int64)
        parent[0] = -1
        # node i >= 1 sits on leg (i-1) % legs; consecutive nodes of a leg chain outward
        i = np.arange(1, n)
        prev = i - legs
        parent[1:] = np.where(prev >= 1, prev, 0)
    elif kind == "complete_kary":
        if p is None or p < 1:
            raise ValueError("complete_kary needs k >= 1")
        parent = (np.arange(n) - 1) // p
        parent[0] = -1
    elif kind == "random_pruefer":
        if n < 3:
            raise ValueError("random_pruefer needs n >= 3")
        seq = rng.integers(0, n, size=n - 2)
        return _relabel(_pruefer_edges(seq.tolist(), n), n, rng, id_space)
    elif kind == "random_bounded":
        if p is None or p < 1 or (p < 2 and n > 2):
            raise ValueError("random_bounded needs dmax >= 2 (or n <= 2)")
        parent = _random_bounded_parents(n, p, rng)
    else:
        raise ValueError(f"unsupported generator kind {kind!r}")
    child = np.arange(1, n)
    edges = np.stack([parent[1:], child], axis=1)
    return _relabel(edges, n, rng, id_space)


def _relabel(edges, n, rng, id_space):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if id_space is None:
        return Forest(np.arange(1, n + 1), edges + 1)
    if id_space < n:
        raise ValueError("id_space must be >= n")
    if id_space <= 4 * n:
        labels = rng.permutation(id_space)[:n] + 1
    else:
        labels = np.unique(rng.integers(1, id_space + 1, size=2 * n + 16))
        while len(labels) < n:
            labels = np.unique(np.concatenate([labels, rng.integers(1, id_space + 1, size=n)]))
        labels = rng.permutation(labels)[:n]
    return Forest(labels, labels[edges], id_space=id_space)


def _pruefer_edges(seq: list[int], n: int) -> list[tuple[int, int]]:
    degree = [1] * n
    for x in seq:
        degree[x] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    u, v = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, v))
    return edges


def _random_bounded_parents(n: int, dmax: int, rng) -> np.ndarray:
    parent = np.full(n, -1, dtype=np.int64)
    if n == 1:
        return parent
    deg = [0] * n
    avail = [0]
    draws = rng.random(n).tolist()
    for i in range(1, n):
        k = int(draws[i] * len(avail))
        p = avail[k]
        parent[i] = p
        deg[p] += 1
        deg[i] = 1
        if deg[p] == dmax:
            last = avail.pop()
            if last != p:
                avail[k] = last
        if dmax > 1:
            avail.append(i)
    return parent


def corrleaf_holds(f: Forest) -> bool:
    """Nodes of degree >= 3 never outnumber degree-1 nodes in a forest."""
    hist = Counter(f.degree.tolist())
    return sum(c for d, c in hist.items() if d >= 3) <= hist.get(1, 0)

"""Min-cut machinery for binary expansion subproblems.

The max-flow solver follows Boykov & Kolmogorov: two search trees grown from
the terminals, augmenting along the path found where they touch, and orphan
adoption with timestamp/distance heuristics so the trees are reused between
augmentations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

TERMINAL = -2
ORPHAN = -3
NONE = -1
_INF_DIST = 1 << 30


@dataclass
class FlowNetwork:
    """Capacitated s-t network.

    ``edges[e] = (p, q)`` carries ``edge_caps[e, 0]`` from p to q and
    ``edge_caps[e, 1]`` from q to p.
    """

    n_nodes: int
    source_caps: np.ndarray
    sink_caps: np.ndarray
    edges: np.ndarray
    edge_caps: np.ndarray

    def __post_init__(self):
        self.source_caps = np.ascontiguousarray(self.source_caps, dtype=np.float64).reshape(self.n_nodes)
        self.sink_caps = np.ascontiguousarray(self.sink_caps, dtype=np.float64).reshape(self.n_nodes)
        self.edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_caps = np.ascontiguousarray(self.edge_caps, dtype=np.float64).reshape(-1, 2)
        if len(self.edges) != len(self.edge_caps):
            raise ValueError("one capacity pair per edge required")
        if (self.source_caps < 0).any() or (self.sink_caps < 0).any() or (self.edge_caps < 0).any():
            raise ValueError("capacities must be non-negative")
        if len(self.edges) and (self.edges.min() < 0 or self.edges.max() >= self.n_nodes):
            raise ValueError("edge references an unknown node")

    def cut_capacity(self, source_side: np.ndarray) -> float:
        s = np.asarray(source_side, dtype=bool)
        total = self.sink_caps[s].sum() + self.source_caps[~s].sum()
        if len(self.edges):
            p, q = self.edges[:, 0], self.edges[:, 1]
            total += self.edge_caps[s[p] & ~s[q], 0].sum()
            total += self.edge_caps[~s[p] & s[q], 1].sum()
        return float(total)


@njit(cache=True, nogil=True)
def _build_arcs(n, edges, caps):
    m = edges.shape[0]
    first = np.full(n, -1, np.int64)
    arc_next = np.empty(2 * m, np.int64)
    arc_head = np.empty(2 * m, np.int64)
    rcap = np.empty(2 * m, np.float64)
    for e in range(m):
        p = edges[e, 0]
        q = edges[e, 1]
        a = 2 * e
        arc_head[a] = q
        rcap[a] = caps[e, 0]
        arc_next[a] = first[p]
        first[p] = a
        arc_head[a + 1] = p
        rcap[a + 1] = caps[e, 1]
        arc_next[a + 1] = first[q]
        first[q] = a + 1
    return first, arc_next, arc_head, rcap


@njit(cache=True, nogil=True)
def _bk_maxflow(n, tr_cap, first, arc_next, arc_head, rcap):
    """Run max-flow in place. ``tr_cap`` is source minus sink capacity per node.

    Returns (augmented flow, source-side flag per node). Flow routed directly
    source -> node -> sink must be added by the caller.
    """
    parent = np.full(n, NONE, np.int64)
    is_sink = np.zeros(n, np.bool_)
    ts = np.zeros(n, np.int64)
    dist = np.zeros(n, np.int64)
    in_active = np.zeros(n, np.bool_)
    active = np.empty(n + 1, np.int64)
    a_head = 0
    a_tail = 0
    orphans = np.empty(n + 1, np.int64)
    cap_q = n + 1

    for i in range(n):
        if tr_cap[i] > 0:
            parent[i] = TERMINAL
            is_sink[i] = False
        elif tr_cap[i] < 0:
            parent[i] = TERMINAL
            is_sink[i] = True
        else:
            continue
        dist[i] = 1
        in_active[i] = True
        active[a_tail] = i
        a_tail = (a_tail + 1) % cap_q

    flow = 0.0
    time = 0
    current = -1
    while True:
        i = current
        if i < 0 or parent[i] == NONE:
            i = -1
            while a_head != a_tail:
                cand = active[a_head]
                a_head = (a_head + 1) % cap_q
                in_active[cand] = False
                if parent[cand] != NONE:
                    i = cand
                    break
            if i < 0:
                break
        current = -1

        # grow
        middle = -1
        if not is_sink[i]:
            a = first[i]
            while a >= 0:
                if rcap[a] > 0:
                    j = arc_head[a]
                    if parent[j] == NONE:
                        is_sink[j] = False
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_active[j]:
                            in_active[j] = True
                            active[a_tail] = j
                            a_tail = (a_tail + 1) % cap_q
                    elif is_sink[j]:
                        middle = a
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                a = arc_next[a]
        else:
            a = first[i]
            while a >= 0:
                if rcap[a ^ 1] > 0:
                    j = arc_head[a]
                    if parent[j] == NONE:
                        is_sink[j] = True
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                        if not in_active[j]:
                            in_active[j] = True
                            active[a_tail] = j
                            a_tail = (a_tail + 1) % cap_q
                    elif not is_sink[j]:
                        middle = a ^ 1
                        break
                    elif ts[j] <= ts[i] and dist[j] > dist[i]:
                        parent[j] = a ^ 1
                        ts[j] = ts[i]
                        dist[j] = dist[i] + 1
                a = arc_next[a]

        time += 1
        if middle < 0:
            continue
        current = i

        # augment along source-tree path + middle arc + sink-tree path
        bottleneck = rcap[middle]
        k = arc_head[middle ^ 1]
        while parent[k] != TERMINAL:
            pa = parent[k]
            if rcap[pa ^ 1] < bottleneck:
                bottleneck = rcap[pa ^ 1]
            k = arc_head[pa]
        if tr_cap[k] < bottleneck:
            bottleneck = tr_cap[k]
        k = arc_head[middle]
        while parent[k] != TERMINAL:
            pa = parent[k]
            if rcap[pa] < bottleneck:
                bottleneck = rcap[pa]
            k = arc_head[pa]
        if -tr_cap[k] < bottleneck:
            bottleneck = -tr_cap[k]

        o_head = 0
        o_tail = 0
        rcap[middle ^ 1] += bottleneck
        rcap[middle] -= bottleneck
        k = arc_head[middle ^ 1]
        while parent[k] != TERMINAL:
            pa = parent[k]
            rcap[pa] += bottleneck
            rcap[pa ^ 1] -= bottleneck
            if rcap[pa ^ 1] <= 0:
                parent[k] = ORPHAN
                orphans[o_tail] = k
                o_tail = (o_tail + 1) % cap_q
            k = arc_head[pa]
        tr_cap[k] -= bottleneck
        if tr_cap[k] <= 0:
            parent[k] = ORPHAN
            orphans[o_tail] = k
            o_tail = (o_tail + 1) % cap_q
        k = arc_head[middle]
        while parent[k] != TERMINAL:
            pa = parent[k]
            rcap[pa ^ 1] += bottleneck
            rcap[pa] -= bottleneck
            if rcap[pa] <= 0:
                parent[k] = ORPHAN
                orphans[o_tail] = k
                o_tail = (o_tail + 1) % cap_q
            k = arc_head[pa]
        tr_cap[k] += bottleneck
        if tr_cap[k] >= 0:
            parent[k] = ORPHAN
            orphans[o_tail] = k
            o_tail = (o_tail + 1) % cap_q
        flow += bottleneck

        # adopt orphans
        time += 1
        while o_head != o_tail:
            o = orphans[o_head]
            o_head = (o_head + 1) % cap_q
            sink_tree = is_sink[o]
            d_min = _INF_DIST
            a_min = NONE
            a0 = first[o]
            while a0 >= 0:
                ok = rcap[a0] > 0 if sink_tree else rcap[a0 ^ 1] > 0
                if ok:
                    j = arc_head[a0]
                    if is_sink[j] == sink_tree and parent[j] != NONE:
                        d = 0
                        jj = j
                        while True:
                            if ts[jj] == time:
                                d += dist[jj]
                                break
                            pa = parent[jj]
                            d += 1
                            if pa == TERMINAL:
                                ts[jj] = time
                                dist[jj] = 1
                                break
                            if pa == ORPHAN:
                                d = _INF_DIST
                                break
                            jj = arc_head[pa]
                        if d < _INF_DIST:
                            if d < d_min:
                                a_min = a0
                                d_min = d
                            jj = j
                            while ts[jj] != time:
                                ts[jj] = time
                                dist[jj] = d
                                d -= 1
                                jj = arc_head[parent[jj]]
                a0 = arc_next[a0]

            if a_min != NONE:
                parent[o] = a_min
                ts[o] = time
                dist[o] = d_min + 1
                continue

            parent[o] = NONE
            a0 = first[o]
            while a0 >= 0:
                j = arc_head[a0]
                if is_sink[j] == sink_tree and parent[j] != NONE:
                    ok = rcap[a0] > 0 if sink_tree else rcap[a0 ^ 1] > 0
                    if ok and not in_active[j]:
                        in_active[j] = True
                        active[a_tail] = j
                        a_tail = (a_tail + 1) % cap_q
                    pj = parent[j]
                    if pj != TERMINAL and pj != ORPHAN and arc_head[pj] == o:
                        parent[j] = ORPHAN
                        orphans[o_tail] = j
                        o_tail = (o_tail + 1) % cap_q
                a0 = arc_next[a0]

    source_side = np.zeros(n, np.bool_)
    for i in range(n):
        source_side[i] = parent[i] != NONE and not is_sink[i]
    return flow, source_side


@njit(cache=True, nogil=True)
def _max_flow(n, source_caps, sink_caps, edges, caps):
    first, arc_next, arc_head, rcap = _build_arcs(n, edges, caps)
    tr_cap = np.empty(n)
    base = 0.0
    for i in range(n):
        direct = min(source_caps[i], sink_caps[i])
        base += direct
        tr_cap[i] = source_caps[i] - sink_caps[i]
    flow, side = _bk_maxflow(n, tr_cap, first, arc_next, arc_head, rcap)
    return base + flow, side


def max_flow(net: FlowNetwork) -> tuple[float, np.ndarray]:
    """Maximum flow value and a minimum cut (True = node on the source side)."""
    if net.n_nodes == 0:
        return 0.0, np.zeros(0, dtype=bool)
    flow, side = _max_flow(net.n_nodes, net.source_caps, net.sink_caps, net.edges, net.edge_caps)
    return float(flow), side


class NotSubmodularError(ValueError):
    pass


@dataclass
class BinarySubproblem:
    """Keep/switch energy over the pixels of an expansion region.

    ``unary[i] = (cost if pixel i keeps its label, cost if it switches)``;
    ``tables[e] = (theta00, theta01, theta10, theta11)`` for the pixel pair
    ``pairs[e]``, where 1 means "switch". ``constant`` collects terms that do
    not depend on the binary variables.
    """

    pixels: np.ndarray
    unary: np.ndarray
    pairs: np.ndarray
    tables: np.ndarray
    constant: float = 0.0

    @property
    def n(self) -> int:
        return len(self.unary)

    def energy(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        e = self.unary[np.arange(self.n), x].sum()
        if len(self.pairs):
            e += self.tables[np.arange(len(self.pairs)), 2 * x[self.pairs[:, 0]] + x[self.pairs[:, 1]]].sum()
        return float(e + self.constant)

    def check_submodular(self, tol: float = 1e-9):
        t = self.tables
        slack = t[:, 1] + t[:, 2] - t[:, 0] - t[:, 3]
        if len(t) and slack.min() < -tol * max(1.0, float(np.abs(t).max())):
            raise NotSubmodularError(f"pairwise table violates submodularity by {-slack.min():g}")


@njit(cache=True, nogil=True)
def _solve_tables(unary, pairs, tables):
    n = unary.shape[0]
    m = pairs.shape[0]
    c0 = unary[:, 0].copy()
    c1 = unary[:, 1].copy()
    caps = np.zeros((m, 2))
    for e in range(m):
        p = pairs[e, 0]
        q = pairs[e, 1]
        A = tables[e, 0]
        B = tables[e, 1]
        C = tables[e, 2]
        D = tables[e, 3]
        c1[p] += C - A
        c1[q] += D - C
        w = B + C - A - D
        caps[e, 0] = w if w > 0 else 0.0
    src = np.zeros(n)
    snk = np.zeros(n)
    for i in range(n):
        diff = c1[i] - c0[i]
        if diff > 0:
            src[i] = diff
        else:
            snk[i] = -diff
    _, side = _max_flow(n, src, snk, pairs, caps)
    x = np.empty(n, np.int8)
    for i in range(n):
        x[i] = 0 if side[i] else 1
    return x


def solve_binary(sub: BinarySubproblem, check: bool = True) -> np.ndarray:
    """Global minimiser of a submodular keep/switch energy; 1 marks a switch."""
    if check:
        sub.check_submodular()
    if sub.n == 0:
        return np.zeros(0, dtype=np.int8)
    pairs = np.ascontiguousarray(sub.pairs, dtype=np.int64).reshape(-1, 2)
    tables = np.ascontiguousarray(sub.tables, dtype=np.float64).reshape(-1, 4)
    x = _solve_tables(np.ascontiguousarray(sub.unary, dtype=np.float64), pairs, tables)
    if sub.energy(x) > sub.energy(np.zeros(sub.n, np.int64)):
        return np.zeros(sub.n, dtype=np.int8)
    return x

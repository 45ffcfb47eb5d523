"""Brute-force oracles for the red-blue pebble game and S-partitions.

These are exact on tiny DAGs and exist to validate the analytic bounds
empirically. The game semantics:

* inputs (in-degree 0) hold blue pebbles permanently, so a Load of an
  input is always legal;
* a complete calculation must place a blue pebble on every output
  (out-degree 0) via an explicit Store, even if the vertex is an input;
* re-computation is allowed: a vertex may receive a red pebble by
  Compute any number of times.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import combinations

from .dag import Dag

DEFAULT_PEBBLE_CAP = 25
DEFAULT_PARTITION_CAP = 12


class PebbleCapError(ValueError):
    """DAG too large for an exact oracle."""


class PebbleInfeasibleError(ValueError):
    """No complete calculation exists with the given number of red pebbles."""


def _masks(dag: Dag):
    preds = dag.predecessors()
    succs = dag.successors()
    n = dag.n_vertices
    pred_mask = [0] * n
    for v in range(n):
        for u in preds[v]:
            pred_mask[v] |= 1 << u
    inputs = sum(1 << v for v in range(n) if not preds[v])
    outputs = sum(1 << v for v in range(n) if not succs[v])
    return pred_mask, inputs, outputs


def min_io_pebbling(dag: Dag, s: int, cap: int = DEFAULT_PEBBLE_CAP) -> int:
    """Exact minimum Load+Store count over all complete calculations.

    A* over (red set, blue set) states with unit cost on Load/Store and
    free Compute; evictions are deferred until fast memory is full,
    which loses no optimal play.
    """
    n = dag.n_vertices
    if n > cap:
        raise PebbleCapError(f"dag has {n} vertices, pebbling cap is {cap}")
    if s < 1:
        raise PebbleInfeasibleError("need at least one red pebble")
    pred_mask, inputs, outputs = _masks(dag)

    # every ancestor of an output must be computable: in-degree + 1 <= s
    need = outputs
    frontier = outputs
    while frontier:
        v = (frontier & -frontier).bit_length() - 1
        frontier &= frontier - 1
        add = pred_mask[v] & ~need
        need |= add
        frontier |= add
    for v in range(n):
        if need >> v & 1 and pred_mask[v]:
            if pred_mask[v].bit_count() + 1 > s:
                raise PebbleInfeasibleError(
                    f"vertex {v} has in-degree {pred_mask[v].bit_count()}, "
                    f"cannot compute with s={s}"
                )

    non_inputs = [v for v in range(n) if pred_mask[v]]
    out_list = [v for v in range(n) if outputs >> v & 1]

    start = (0, 0)  # (red, blue)
    best = {start: 0}
    # A* ordered by f = g + missing-store count, deeper states first on ties
    heap = [(out_list and len(out_list) or 0, 0, 0, 0)]  # (f, -g, red, blue)
    while heap:
        f, neg_g, red, blue = heapq.heappop(heap)
        g = -neg_g
        if best.get((red, blue), -1) != g:
            continue
        missing = outputs & ~blue
        if not missing:
            return g
        full = red.bit_count() >= s

        def push(nr, nb, ng):
            key = (nr, nb)
            old = best.get(key)
            if old is None or ng < old:
                best[key] = ng
                heapq.heappush(heap, (ng + (outputs & ~nb).bit_count(), -ng, nr, nb))

        if full:
            # evict one red pebble (free); placements resume afterwards
            rem = red
            while rem:
                bit = rem & -rem
                rem &= rem - 1
                push(red & ~bit, blue, g)
        else:
            loadable = (inputs | blue) & ~red
            rem = loadable
            while rem:
                bit = rem & -rem
                rem &= rem - 1
                push(red | bit, blue, g + 1)
            for v in non_inputs:
                bit = 1 << v
                if not red & bit and pred_mask[v] & red == pred_mask[v]:
                    push(red | bit, blue, g)
        # stores are legal regardless of capacity
        rem = red & ~blue & (outputs | ~inputs)
        while rem:
            bit = rem & -rem
            rem &= rem - 1
            push(red, blue | bit, g + 1)
    raise PebbleInfeasibleError(f"no complete calculation found with s={s}")


# -- S-partitions -------------------------------------------------------------


@dataclass
class SPartition:
    """Candidate S-partition: subsets plus optional dominator sets."""

    subsets: list[set[int]]
    dominators: list[set[int]] | None = None

    @property
    def h(self) -> int:
        return len(self.subsets)


@dataclass
class SPartitionCheck:
    ok: bool
    clause: str | None = None
    detail: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def partition_universe(dag: Dag) -> set[int]:
    """Vertices an S-partition must cover: computed vertices plus all outputs."""
    preds = dag.predecessors()
    succs = dag.successors()
    return {
        v for v in range(dag.n_vertices)
        if preds[v] or not succs[v]
    }


def generated_set(dag: Dag, dominator: set[int]) -> set[int]:
    """Theta(D): vertices whose every input-to-vertex path meets `dominator`."""
    preds = dag.predecessors()
    free = set()
    for v in dag.topological_order():
        if v in dominator:
            continue
        if not preds[v] or any(u in free for u in preds[v]):
            free.add(v)
    return {v for v in range(dag.n_vertices) if v not in free}


def minimum_set(dag: Dag, subset: set[int]) -> set[int]:
    """Vertices of the subset with no successor inside the subset."""
    succs = dag.successors()
    return {v for v in subset if not any(w in subset for w in succs[v])}


def min_dominator_size(dag: Dag, subset: set[int], limit: int | None = None) -> int:
    """Minimum vertex count intersecting every input-to-subset path.

    Unit-capacity vertex min cut via augmenting paths; stops early once
    the flow exceeds `limit`.
    """
    n = dag.n_vertices
    # split nodes: v_in = 2v, v_out = 2v + 1; source = 2n, sink = 2n + 1
    source, sink = 2 * n, 2 * n + 1
    cap: dict[tuple[int, int], int] = {}
    adj: dict[int, list[int]] = {source: [], sink: []}

    def add(a, b, c):
        if (a, b) not in cap:
            cap[(a, b)] = 0
            cap[(b, a)] = cap.get((b, a), 0)
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        cap[(a, b)] += c

    big = n + 1
    preds = dag.predecessors()
    for v in range(n):
        add(2 * v, 2 * v + 1, 1)
        for u in preds[v]:
            add(2 * u + 1, 2 * v, big)
        if not preds[v]:
            add(source, 2 * v, big)
    for v in subset:
        add(2 * v + 1, sink, big)

    flow = 0
    while True:
        parent = {source: source}
        queue = [source]
        while queue and sink not in parent:
            a = queue.pop(0)
            for b in adj.get(a, []):
                if b not in parent and cap.get((a, b), 0) > 0:
                    parent[b] = a
                    queue.append(b)
        if sink not in parent:
            return flow
        b = sink
        while b != source:
            a = parent[b]
            cap[(a, b)] -= 1
            cap[(b, a)] += 1
            b = a
        flow += 1
        if limit is not None and flow > limit:
            return flow


def is_dominator(dag: Dag, dominator: set[int], subset: set[int]) -> bool:
    gen = generated_set(dag, dominator)
    return subset <= gen


def verify_s_partition(dag: Dag, partition: SPartition, s: int) -> SPartitionCheck:
    """Check Properties 1-4; dominator/minimum sets are re-derived, not trusted."""
    universe = partition_universe(dag)
    seen: set[int] = set()
    for i, sub in enumerate(partition.subsets):
        if seen & sub:
            return SPartitionCheck(False, "property 1", f"subset {i} overlaps another")
        seen |= sub
    if not universe <= seen:
        return SPartitionCheck(
            False, "property 1",
            f"vertices {sorted(universe - seen)} not covered"
        )

    for i, sub in enumerate(partition.subsets):
        if not sub:
            return SPartitionCheck(False, "property 1", f"subset {i} is empty")
        if partition.dominators is not None:
            dom = partition.dominators[i]
            if len(dom) > s:
                return SPartitionCheck(False, "property 2", f"|D_{i}| = {len(dom)} > {s}")
            if not is_dominator(dag, dom, sub):
                return SPartitionCheck(False, "property 2", f"D_{i} does not dominate subset {i}")
        else:
            if min_dominator_size(dag, sub, limit=s) > s:
                return SPartitionCheck(False, "property 2", f"no dominator of size <= {s} for subset {i}")
        if len(minimum_set(dag, sub)) > s:
            return SPartitionCheck(False, "property 3", f"|M_{i}| > {s}")

    # property 4: dependence among subsets must be acyclic
    owner = {}
    for i, sub in enumerate(partition.subsets):
        for v in sub:
            owner[v] = i
    succs = dag.successors()
    dep: dict[int, set[int]] = {i: set() for i in range(partition.h)}
    for v, i in owner.items():
        for w in succs[v]:
            j = owner.get(w)
            if j is not None and j != i:
                dep[i].add(j)
    state: dict[int, int] = {}

    def cyclic(i) -> bool:
        state[i] = 1
        for j in dep[i]:
            if state.get(j) == 1 or (state.get(j) is None and cyclic(j)):
                return True
        state[i] = 2
        return False

    for i in range(partition.h):
        if state.get(i) is None and cyclic(i):
            return SPartitionCheck(False, "property 4", f"cyclic dependence through subset {i}")
    return SPartitionCheck(True)


def s_partition_oracle(
    dag: Dag, s: int, cap: int = DEFAULT_PARTITION_CAP
) -> tuple[int, SPartition]:
    """Exact P(S) with a witness partition, by exhaustive subset search.

    Subsets are enumerated in dependence order (every predecessor of a
    member is already assigned or in the subset), which enumerates
    exactly the partitions with acyclic inter-subset dependence.
    """
    universe = sorted(partition_universe(dag))
    m = len(universe)
    if m > cap:
        raise PebbleCapError(f"{m} partitionable vertices, cap is {cap}")
    if m == 0:
        return 0, SPartition([])
    idx = {v: i for i, v in enumerate(universe)}
    preds = dag.predecessors()
    pred_mask = [0] * m
    for i, v in enumerate(universe):
        for u in preds[v]:
            if u in idx:
                pred_mask[i] |= 1 << idx[u]
    succs = dag.successors()
    succ_mask = [0] * m
    for i, v in enumerate(universe):
        for w in succs[v]:
            if w in idx:
                succ_mask[i] |= 1 << idx[w]

    full = (1 << m) - 1
    valid_cache: dict[int, bool] = {}

    def bits(mask):
        while mask:
            b = mask & -mask
            yield b.bit_length() - 1
            mask &= mask - 1

    def valid(t: int) -> bool:
        got = valid_cache.get(t)
        if got is None:
            members = [i for i in bits(t)]
            minset = sum(1 for i in members if not succ_mask[i] & t)
            if minset > s:
                got = False
            else:
                subset = {universe[i] for i in members}
                got = min_dominator_size(dag, subset, limit=s) <= s
            valid_cache[t] = got
        return got

    best_h = m + 1
    best_parts: list[int] = []

    def search(assigned: int, parts: list[int]):
        nonlocal best_h, best_parts
        if assigned == full:
            if len(parts) < best_h:
                best_h = len(parts)
                best_parts = list(parts)
            return
        if len(parts) + 1 >= best_h:
            return
        rest = full & ~assigned
        # try the whole remainder first: if it stands alone we are done here
        candidates = [rest]
        t = (rest - 1) & rest
        while t:
            candidates.append(t)
            t = (t - 1) & rest
        for t in candidates:
            closed = all(pred_mask[i] & ~(assigned | t) == 0 for i in bits(t))
            if not closed or not valid(t):
                continue
            parts.append(t)
            search(assigned | t, parts)
            parts.pop()
            if len(parts) + 1 >= best_h:
                return

    search(0, [])
    if best_h > m:
        raise PebbleInfeasibleError(f"no valid S-partition with s={s}")
    subsets = [{universe[i] for i in bits(t)} for t in best_parts]
    return best_h, SPartition(subsets)


def brute_force_p(dag: Dag, s: int, cap: int = DEFAULT_PARTITION_CAP) -> int:
    """Minimum number of subsets over all S-partitions of the DAG."""
    h, _ = s_partition_oracle(dag, s, cap)
    return h


@dataclass
class HongKungResult:
    q_min: int
    p_2s: int
    holds: bool


def check_hong_kung(
    dag: Dag,
    s: int,
    pebble_cap: int = DEFAULT_PEBBLE_CAP,
    partition_cap: int = DEFAULT_PARTITION_CAP,
) -> HongKungResult:
    """Exercise Q >= S * (P(2S) - 1) with both exact oracles."""
    q = min_io_pebbling(dag, s, cap=pebble_cap)
    p = brute_force_p(dag, 2 * s, cap=partition_cap)
    return HongKungResult(q, p, q >= s * (p - 1))


def enumerate_small_dominators(dag: Dag, max_size: int):
    """Yield (D, Theta(D)) for every vertex set D with |D| <= max_size."""
    n = dag.n_vertices
    for size in range(1, max_size + 1):
        for combo in combinations(range(n), size):
            d = set(combo)
            yield d, generated_set(dag, d)

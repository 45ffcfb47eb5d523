"""Exact computation DAGs for direct and Winograd convolution.

Vertices carry a kind (input / internal / output) and a sub-computation
step label. Accumulations are built as left-deep trees: a summation tree
with k leaves has k-2 internal vertices and one output; a linear
combination tree (leaves scaled by coefficients first) has 2k-2 internal
vertices and one output. Transform coefficients live on edges, never as
vertices, so they contribute nothing to any count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import ConvShape, WinogradParams, GeometryError

INPUT, INTERNAL, OUTPUT = 0, 1, 2
KIND_NAMES = {INPUT: "input", INTERNAL: "internal", OUTPUT: "output"}
KIND_IDS = {v: k for k, v in KIND_NAMES.items()}

DEFAULT_VERTEX_CAP = 10_000_000


class SizeCapError(ValueError):
    """DAG would exceed the configured vertex cap."""


class MultiStepViolation(ValueError):
    """A Definition-level clause of the multi-step partition failed."""

    def __init__(self, vertex: int, clause: str):
        self.vertex = vertex
        self.clause = clause
        super().__init__(f"vertex {vertex}: {clause}")


class Dag:
    """Append-only DAG; treat as immutable once built."""

    def __init__(self):
        self.kinds: list[int] = []
        self.steps: list[int] = []
        self.edges: list[tuple[int, int]] = []
        self._preds: list[list[int]] | None = None
        self._succs: list[list[int]] | None = None

    # -- construction -------------------------------------------------

    def add_vertex(self, kind: int, step: int = 0) -> int:
        self.kinds.append(kind)
        self.steps.append(step)
        self._preds = self._succs = None
        return len(self.kinds) - 1

    def add_edge(self, src: int, dst: int) -> None:
        self.edges.append((src, dst))
        self._preds = self._succs = None

    # -- views ----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.kinds)

    def predecessors(self) -> list[list[int]]:
        if self._preds is None:
            preds = [[] for _ in range(self.n_vertices)]
            succs = [[] for _ in range(self.n_vertices)]
            for s, d in self.edges:
                preds[d].append(s)
                succs[s].append(d)
            self._preds, self._succs = preds, succs
        return self._preds

    def successors(self) -> list[list[int]]:
        self.predecessors()
        return self._succs

    def input_vertices(self) -> list[int]:
        return [v for v, k in enumerate(self.kinds) if k == INPUT]

    def output_vertices(self) -> list[int]:
        return [v for v, k in enumerate(self.kinds) if k == OUTPUT]

    def count_vertices(self, kinds: set[int]) -> int:
        """Exact count of vertices of the requested kinds."""
        if not kinds:
            return 0
        return sum(1 for k in self.kinds if k in kinds)

    def topological_order(self) -> list[int]:
        """Kahn topological sort; raises if a cycle exists."""
        preds = self.predecessors()
        indeg = [len(p) for p in preds]
        succs = self.successors()
        frontier = [v for v, d in enumerate(indeg) if d == 0]
        order = []
        while frontier:
            v = frontier.pop()
            order.append(v)
            for w in succs[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    frontier.append(w)
        if len(order) != self.n_vertices:
            raise ValueError("dag contains a cycle")
        return order

    def step_output_sets(self) -> dict[int, set[int]]:
        """For each step j, the sinks of sub-DAG G_j (no same-step successor)."""
        succs = self.successors()
        out: dict[int, set[int]] = {}
        for v in range(self.n_vertices):
            j = self.steps[v]
            if j == 0:
                continue
            if not any(self.steps[w] == j for w in succs[v]):
                out.setdefault(j, set()).add(v)
        return out

    # -- adjacency text format -------------------------------------------

    def to_adjacency_text(self) -> str:
        lines = ["# convio dag v1", f"# vertices {self.n_vertices}"]
        for v in range(self.n_vertices):
            lines.append(f"# vertex {v} {KIND_NAMES[self.kinds[v]]} {self.steps[v]}")
        for s, d in self.edges:
            lines.append(f"{s} {d}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_adjacency_text(cls, text: str) -> "Dag":
        dag = cls()
        declared: dict[int, tuple[int, int]] = {}
        edges = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "vertex":
                    vid, kind, step = int(parts[1]), KIND_IDS[parts[2]], int(parts[3])
                    declared[vid] = (kind, step)
                continue
            a, b = line.split()
            edges.append((int(a), int(b)))
        n = max(declared, default=-1) + 1
        if edges:
            n = max(n, max(max(s, d) for s, d in edges) + 1)
        for v in range(n):
            kind, step = declared.get(v, (INTERNAL, 1))
            dag.add_vertex(kind, step)
        for s, d in edges:
            dag.add_edge(s, d)
        return dag

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_adjacency_text())

    @classmethod
    def load(cls, path) -> "Dag":
        with open(path) as fh:
            return cls.from_adjacency_text(fh.read())


@dataclass
class StepPartition:
    """Vertex sets per sub-computation step with their output subsets."""

    labels: list[int]
    step_sets: dict[int, set[int]] = field(repr=False)
    output_sets: dict[int, set[int]] = field(repr=False)

    @property
    def n_steps(self) -> int:
        return len(self.labels)


# -- closed-form vertex counts --------------------------------------------


def dc_internal_output_count(shape: ConvShape) -> int:
    """(2*Wker*Hker*Cin - 1) * Wout*Hout*Cout per image."""
    k = shape.window_size
    return (2 * k - 1) * shape.outputs_per_image * shape.n


def wa_per_tile_count(p: WinogradParams, c_in: int) -> int:
    """Internal+output vertices one (tile position, output channel) pair adds."""
    m2 = p.m * p.m
    return (
        (2 * m2 - 1) * m2 * c_in        # input transform trees
        + (2 * p.r ** 2 - 1) * m2 * c_in  # kernel transform trees
        + m2 * c_in                      # element-wise products
        + (c_in - 1) * m2                # channel summation trees
        + (2 * m2 - 1) * p.e ** 2        # output transform trees
    )


def wa_internal_output_count(shape: ConvShape, p: WinogradParams) -> int:
    tiles = (shape.w_out // p.e) * (shape.h_out // p.e) * shape.c_out
    return tiles * wa_per_tile_count(p, shape.c_in) * shape.n


# -- tree builders ----------------------------------------------------------


def _sum_tree(dag: Dag, leaves: list[int], step: int, root_kind: int) -> int:
    """Left-deep summation over `leaves`; returns the root vertex.

    One leaf: the leaf itself is the root (no vertex added), so the caller
    must have given it the right kind already.
    """
    if len(leaves) == 1:
        return leaves[0]
    acc = leaves[0]
    for i, leaf in enumerate(leaves[1:], start=2):
        kind = root_kind if i == len(leaves) else INTERNAL
        node = dag.add_vertex(kind, step)
        dag.add_edge(acc, node)
        dag.add_edge(leaf, node)
        acc = node
    return acc


def _linear_combination_tree(dag: Dag, leaves: list[int], step: int, root_kind: int) -> int:
    """Scale every leaf, then sum left-deep; 2k-2 internals + 1 root."""
    scaled = []
    for leaf in leaves:
        kind = root_kind if len(leaves) == 1 else INTERNAL
        node = dag.add_vertex(kind, step)
        dag.add_edge(leaf, node)
        scaled.append(node)
    return _sum_tree(dag, scaled, step, root_kind)


def _check_cap(total: int, cap: int, what: str) -> None:
    if total > cap:
        raise SizeCapError(f"{what} needs {total} vertices, cap is {cap}")


# -- direct convolution -----------------------------------------------------


def build_direct_conv_dag(shape: ConvShape, cap: int = DEFAULT_VERTEX_CAP) -> Dag:
    """Two-step DAG: per-window products, then one summation tree per output."""
    k = shape.window_size
    inputs = shape.n * shape.w_in * shape.h_in * shape.c_in \
        + shape.w_ker * shape.h_ker * shape.c_in * shape.c_out
    total = inputs + dc_internal_output_count(shape)
    _check_cap(total, cap, "direct convolution dag")

    dag = Dag()
    img = {}
    for b in range(shape.n):
        for c in range(shape.c_in):
            for y in range(shape.h_in):
                for x in range(shape.w_in):
                    img[b, c, y, x] = dag.add_vertex(INPUT, 0)
    wt = {}
    for oc in range(shape.c_out):
        for c in range(shape.c_in):
            for ky in range(shape.h_ker):
                for kx in range(shape.w_ker):
                    wt[oc, c, ky, kx] = dag.add_vertex(INPUT, 0)

    mu = shape.stride
    for b in range(shape.n):
        for oc in range(shape.c_out):
            for oy in range(shape.h_out):
                for ox in range(shape.w_out):
                    products = []
                    for c in range(shape.c_in):
                        for ky in range(shape.h_ker):
                            for kx in range(shape.w_ker):
                                kind = OUTPUT if k == 1 else INTERNAL
                                prod = dag.add_vertex(kind, 1)
                                dag.add_edge(img[b, c, oy * mu + ky, ox * mu + kx], prod)
                                dag.add_edge(wt[oc, c, ky, kx], prod)
                                products.append(prod)
                    if k > 1:
                        _sum_tree(dag, products, 2, OUTPUT)
    return dag


# -- Winograd ----------------------------------------------------------------


def pad_shape_for_winograd(shape: ConvShape, p: WinogradParams) -> ConvShape:
    """Pad output dims up to the next multiple of e (input grows to match)."""
    def up(v):
        return -(-v // p.e) * p.e

    return ConvShape.from_output(
        up(shape.w_out), up(shape.h_out), shape.c_out,
        shape.c_in, shape.w_ker, shape.h_ker, shape.stride, shape.n,
    )


def build_winograd_dag(
    shape: ConvShape,
    p: WinogradParams,
    shared_kernel_transform: bool = False,
    pad: bool = False,
    cap: int = DEFAULT_VERTEX_CAP,
) -> Dag:
    """Four-step DAG of F(e x e, r x r) over all tiles and output channels.

    With ``shared_kernel_transform`` off (the default), kernel transform
    trees are rebuilt per tile position, exactly matching the
    independent per-tile count; switching it on shares them across tile
    positions of the same output channel, which is how a real
    implementation would cache them.
    """
    p.check_shape(shape)
    if shape.w_out % p.e or shape.h_out % p.e:
        if not pad:
            raise GeometryError(
                f"output {shape.w_out}x{shape.h_out} not divisible by e={p.e}; "
                "pass pad=True to pad the output domain"
            )
        shape = pad_shape_for_winograd(shape, p)

    m = p.m
    m2 = m * m
    r2 = p.r ** 2
    tiles_x = shape.w_out // p.e
    tiles_y = shape.h_out // p.e
    n_pairs = tiles_x * tiles_y * shape.c_out
    inputs = shape.n * shape.w_in * shape.h_in * shape.c_in + r2 * shape.c_in * shape.c_out
    body = wa_internal_output_count(shape, p)
    if shared_kernel_transform:
        body -= (2 * r2 - 1) * m2 * shape.c_in * shape.c_out * shape.n \
            * (tiles_x * tiles_y - 1)
    _check_cap(inputs + body, cap, "winograd dag")

    dag = Dag()
    img = {}
    for b in range(shape.n):
        for c in range(shape.c_in):
            for y in range(shape.h_in):
                for x in range(shape.w_in):
                    img[b, c, y, x] = dag.add_vertex(INPUT, 0)
    wt = {}
    for oc in range(shape.c_out):
        for c in range(shape.c_in):
            for ky in range(p.r):
                for kx in range(p.r):
                    wt[oc, c, ky, kx] = dag.add_vertex(INPUT, 0)

    shared_j: dict[tuple[int, int], list[int]] = {}
    for b in range(shape.n):
        for oc in range(shape.c_out):
            for ty in range(tiles_y):
                for tx in range(tiles_x):
                    # step 1: transform the input patch and the kernel
                    p_vals, j_vals = [], []
                    for c in range(shape.c_in):
                        patch = [
                            img[b, c, ty * p.e + dy, tx * p.e + dx]
                            for dy in range(m) for dx in range(m)
                        ]
                        p_vals.append([
                            _linear_combination_tree(dag, patch, 1, INTERNAL)
                            for _ in range(m2)
                        ])
                        key = (oc, c)
                        if shared_kernel_transform and key in shared_j:
                            j_vals.append(shared_j[key])
                            continue
                        kern = [
                            wt[oc, c, ky, kx]
                            for ky in range(p.r) for kx in range(p.r)
                        ]
                        jk = [
                            _linear_combination_tree(dag, kern, 1, INTERNAL)
                            for _ in range(m2)
                        ]
                        if shared_kernel_transform:
                            shared_j[key] = jk
                        j_vals.append(jk)
                    # step 2: element-wise products
                    lam = []
                    for c in range(shape.c_in):
                        row = []
                        for i in range(m2):
                            prod = dag.add_vertex(INTERNAL, 2)
                            dag.add_edge(p_vals[c][i], prod)
                            dag.add_edge(j_vals[c][i], prod)
                            row.append(prod)
                        lam.append(row)
                    # step 3: sum along the channel direction
                    pi = [
                        _sum_tree(dag, [lam[c][i] for c in range(shape.c_in)], 3, INTERNAL)
                        for i in range(m2)
                    ]
                    # step 4: output transform, e^2 outputs per pair
                    for _ in range(p.e ** 2):
                        _linear_combination_tree(dag, pi, 4, OUTPUT)
    assert dag.n_vertices == inputs + body, "vertex accounting drifted"
    return dag


# -- multi-step partition validation ----------------------------------------


def validate_multi_step_partition(dag: Dag) -> StepPartition:
    """Check every clause of the multi-step partition and return it.

    Empty step labels (e.g. a single-channel Winograd DAG, whose channel
    summation is a passthrough) are skipped: adjacency is checked over the
    sequence of non-empty steps.
    """
    dag.topological_order()  # raises on cycles
    preds = dag.predecessors()

    step_sets: dict[int, set[int]] = {}
    for v in range(dag.n_vertices):
        j = dag.steps[v]
        if j == 0:
            if dag.kinds[v] != INPUT:
                raise MultiStepViolation(v, "step-0 vertex is not a primary input")
            if preds[v]:
                raise MultiStepViolation(v, "primary input has predecessors")
        else:
            if dag.kinds[v] == INPUT:
                raise MultiStepViolation(v, "primary input carries a nonzero step label")
            step_sets.setdefault(j, set()).add(v)

    labels = sorted(step_sets)
    prev_of = {lab: (labels[i - 1] if i else 0) for i, lab in enumerate(labels)}
    output_sets = dag.step_output_sets()

    for v in range(dag.n_vertices):
        j = dag.steps[v]
        if j == 0:
            continue
        for u in preds[v]:
            ju = dag.steps[u]
            if ju == j:
                continue
            if ju != prev_of[j]:
                where = "a primary input" if ju == 0 else f"step {ju}"
                raise MultiStepViolation(
                    v, f"step-{j} vertex reads {where}, not an output of the previous step"
                )
            if ju != 0 and u not in output_sets.get(ju, set()):
                raise MultiStepViolation(
                    v, f"step-{j} vertex reads a non-output vertex of step {ju}"
                )
    return StepPartition(
        labels,
        step_sets,
        {j: output_sets.get(j, set()) for j in labels},
    )

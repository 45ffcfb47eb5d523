import random

import pytest

from convio.model import ConvShape, WinogradParams, GeometryError
from convio.dag import (
    Dag, INPUT, INTERNAL, OUTPUT, SizeCapError, MultiStepViolation,
    build_direct_conv_dag, build_winograd_dag, pad_shape_for_winograd,
    dc_internal_output_count, wa_internal_output_count, wa_per_tile_count,
    validate_multi_step_partition,
)


def body_count(dag):
    return dag.count_vertices({INTERNAL, OUTPUT})


def test_dc_examples():
    # 1x1 kernel, single channel: the products are the outputs
    d = build_direct_conv_dag(ConvShape.from_output(2, 2, 1, 1, 1, 1))
    assert body_count(d) == 4
    assert d.count_vertices({OUTPUT}) == 4
    assert d.count_vertices({INTERNAL}) == 0

    d = build_direct_conv_dag(ConvShape.from_output(2, 2, 1, 2, 3, 3))
    assert body_count(d) == 140

    d = build_direct_conv_dag(ConvShape.from_output(1, 1, 1, 1, 3, 3))
    # 9 products + 7 tree internals + 1 output
    assert body_count(d) == 17
    assert d.count_vertices({OUTPUT}) == 1


def test_dc_count_lemma_random_shapes():
    rng = random.Random(7)
    for _ in range(30):
        shape = ConvShape.from_output(
            rng.randint(1, 4), rng.randint(1, 4), rng.randint(1, 3),
            rng.randint(1, 3), rng.randint(1, 3), rng.randint(1, 3),
            stride=rng.randint(1, 2),
        )
        d = build_direct_conv_dag(shape)
        assert body_count(d) == dc_internal_output_count(shape)
        d.topological_order()  # acyclic


def test_dc_batch_scales_counts():
    s1 = ConvShape.from_output(2, 2, 2, 2, 2, 2)
    s3 = ConvShape.from_output(2, 2, 2, 2, 2, 2, n=3)
    assert dc_internal_output_count(s3) == 3 * dc_internal_output_count(s1)
    assert body_count(build_direct_conv_dag(s3)) == dc_internal_output_count(s3)


def test_wa_examples():
    p = WinogradParams(2, 3)
    d = build_winograd_dag(ConvShape.from_output(2, 2, 1, 1, 3, 3), p)
    # 496 + 272 + 16 + 0 + 124 per the per-tile accounting
    assert body_count(d) == 908
    assert wa_per_tile_count(p, 1) == 496 + 272 + 16 + 0 + 124
    assert d.count_vertices({OUTPUT}) == 4

    d = build_winograd_dag(ConvShape.from_output(2, 2, 1, 2, 3, 3), p)
    shape = ConvShape.from_output(2, 2, 1, 2, 3, 3)
    assert body_count(d) == wa_internal_output_count(shape, p)

    # single-channel step 3 degenerates to a passthrough: no vertices added
    p11 = WinogradParams(1, 1)
    d = build_winograd_dag(ConvShape.from_output(1, 1, 1, 1, 1, 1), p11)
    assert body_count(d) == 4
    assert validate_multi_step_partition(d).labels == [1, 2, 4]


def test_wa_count_lemma_shapes():
    for e, r in ((2, 3), (4, 3), (2, 1)):
        p = WinogradParams(e, r)
        for mult in (1, 2):
            for c_in in (1, 2):
                shape = ConvShape.from_output(e * mult, e, 2, c_in, r, r)
                d = build_winograd_dag(shape, p)
                assert body_count(d) == wa_internal_output_count(shape, p)
                d.topological_order()


def test_tree_internal_counts():
    # summation tree: k-2 internals; linear combination tree: 2k-2 internals
    shape = ConvShape.from_output(1, 1, 1, 1, 3, 2)  # k = 6 leaves
    d = build_direct_conv_dag(shape)
    products = 6
    assert d.count_vertices({INTERNAL}) == products + (6 - 2)
    p = WinogradParams(2, 3)
    w = build_winograd_dag(ConvShape.from_output(2, 2, 1, 1, 3, 3), p)
    # step-1 input transform trees: 16 leaves -> 30 internals + 1 root each
    step1 = [v for v in range(w.n_vertices) if w.steps[v] == 1]
    assert len(step1) == (2 * 16 - 1) * 16 + (2 * 9 - 1) * 16


def test_count_vertices_empty_kind_set():
    d = build_direct_conv_dag(ConvShape.from_output(2, 2, 1, 1, 1, 1))
    assert d.count_vertices(set()) == 0


def test_multi_step_partition_dc_wa():
    d = build_direct_conv_dag(ConvShape.from_output(2, 2, 1, 2, 3, 3))
    part = validate_multi_step_partition(d)
    assert part.n_steps == 2
    w = build_winograd_dag(ConvShape.from_output(2, 2, 1, 2, 3, 3), WinogradParams(2, 3))
    assert validate_multi_step_partition(w).n_steps == 4
    # step output sets feed the next step only
    for j, out in part.output_sets.items():
        assert out <= part.step_sets[j]


def test_multi_step_violation():
    # a step-2 vertex reading a primary input directly
    d = Dag()
    a = d.add_vertex(INPUT, 0)
    b = d.add_vertex(INPUT, 0)
    p = d.add_vertex(INTERNAL, 1)
    d.add_edge(a, p)
    d.add_edge(b, p)
    bad = d.add_vertex(OUTPUT, 2)
    d.add_edge(p, bad)
    d.add_edge(a, bad)  # primary input into step 2
    with pytest.raises(MultiStepViolation) as err:
        validate_multi_step_partition(d)
    assert err.value.vertex == bad
    assert "primary input" in err.value.clause


def test_multi_step_violation_skipping_a_step():
    d = Dag()
    a = d.add_vertex(INPUT, 0)
    u1 = d.add_vertex(INTERNAL, 1)
    d.add_edge(a, u1)
    u2 = d.add_vertex(INTERNAL, 2)
    d.add_edge(u1, u2)
    u3 = d.add_vertex(OUTPUT, 3)
    d.add_edge(u1, u3)  # step-1 vertex feeding step 3 over step 2's head
    with pytest.raises(MultiStepViolation):
        validate_multi_step_partition(d)


def test_vertex_cap():
    with pytest.raises(SizeCapError) as err:
        build_direct_conv_dag(ConvShape.from_output(64, 64, 64, 64, 3, 3), cap=1000)
    assert "vertices" in str(err.value)


def test_winograd_requires_divisible_or_pad():
    p = WinogradParams(2, 3)
    odd = ConvShape.from_output(3, 3, 1, 1, 3, 3)
    with pytest.raises(GeometryError):
        build_winograd_dag(odd, p)
    padded = pad_shape_for_winograd(odd, p)
    assert (padded.w_out, padded.h_out) == (4, 4)
    d = build_winograd_dag(odd, p, pad=True)
    assert body_count(d) == wa_internal_output_count(padded, p)


def test_shared_kernel_transform_reduces_j_trees():
    shape = ConvShape.from_output(4, 4, 1, 2, 3, 3)
    p = WinogradParams(2, 3)
    full = build_winograd_dag(shape, p)
    shared = build_winograd_dag(shape, p, shared_kernel_transform=True)
    tiles = (4 // 2) * (4 // 2)
    j_tree = (2 * 9 - 1) * 16 * shape.c_in  # per (tile, channel-set) kernel transform
    assert body_count(full) - body_count(shared) == j_tree * (tiles - 1)


def test_adjacency_round_trip(tmp_path):
    d = build_direct_conv_dag(ConvShape.from_output(2, 1, 1, 1, 2, 1))
    path = tmp_path / "dag.txt"
    d.save(path)
    d2 = Dag.load(path)
    assert d2.kinds == d.kinds
    assert d2.steps == d.steps
    assert d2.edges == d.edges

import pytest

from convio.model import ConvShape
from convio.dag import Dag, INPUT, INTERNAL, OUTPUT, build_direct_conv_dag
from convio.pebble import (
    min_io_pebbling, brute_force_p, check_hong_kung, s_partition_oracle,
    verify_s_partition, SPartition, PebbleCapError, PebbleInfeasibleError,
    generated_set, minimum_set, min_dominator_size, partition_universe,
)
from convio.fixtures import corpus


def product_dag():
    d = Dag()
    a, b = d.add_vertex(INPUT, 0), d.add_vertex(INPUT, 0)
    p = d.add_vertex(OUTPUT, 1)
    d.add_edge(a, p)
    d.add_edge(b, p)
    return d


def single_vertex():
    d = Dag()
    d.add_vertex(OUTPUT, 0)
    return d


def chain(n):
    d = Dag()
    prev = d.add_vertex(INPUT, 0)
    for i in range(n):
        v = d.add_vertex(OUTPUT if i == n - 1 else INTERNAL, 1)
        d.add_edge(prev, v)
        prev = v
    return d


def test_min_io_examples():
    assert min_io_pebbling(product_dag(), 3) == 3  # two loads, one store
    assert min_io_pebbling(single_vertex(), 1) == 2  # one load, one store
    dc = build_direct_conv_dag(ConvShape.from_output(1, 1, 1, 2, 1, 1))
    # regression fixture: exhaustive search on 2 products + 1 sum
    assert min_io_pebbling(dc, 3) == 7


def test_min_io_caps_and_infeasibility():
    with pytest.raises(PebbleCapError):
        min_io_pebbling(product_dag(), 3, cap=2)
    with pytest.raises(PebbleInfeasibleError):
        min_io_pebbling(product_dag(), 2)  # binary op needs 3 red pebbles


def test_min_io_nonincreasing_in_s():
    for name in ("dc_1x1_cin2_out1x1x1", "bintree8", "diamond"):
        dag = corpus()[name].dag
        qs = [min_io_pebbling(dag, s) for s in (3, 4, 5)]
        assert qs[0] >= qs[1] >= qs[2]


def test_min_io_at_least_inputs_plus_outputs():
    # every fixture input reaches an output, so each needs one load and
    # each output one store
    for name, fx in corpus().items():
        dag = fx.dag
        preds = dag.predecessors()
        succs = dag.successors()
        inputs = sum(1 for v in range(dag.n_vertices) if not preds[v])
        outputs = sum(1 for v in range(dag.n_vertices) if not succs[v])
        assert min_io_pebbling(dag, 5) >= inputs + outputs, name


def test_generated_set_and_dominators():
    d = product_dag()
    assert generated_set(d, {2}) == {2}
    assert generated_set(d, {0, 1}) == {0, 1, 2}
    assert generated_set(d, {0}) == {0}
    assert min_dominator_size(d, {2}) == 1
    assert min_dominator_size(d, {0, 1, 2}) == 2
    assert minimum_set(d, {0, 1, 2}) == {2}


def test_verify_s_partition_examples():
    ch = chain(2)  # input -> internal -> output, 3 vertices
    ok = verify_s_partition(ch, SPartition([{0, 1, 2}]), 3)
    assert bool(ok)
    # with S=1 a subset needing 2 dominator inputs fails property 2
    d = product_dag()
    bad = verify_s_partition(d, SPartition([{2}], dominators=[{0, 1}]), 1)
    assert not bad and bad.clause == "property 2"
    # cyclic dependence between two subsets fails property 4
    dd = Dag()
    a = dd.add_vertex(INPUT, 0)
    u = dd.add_vertex(INTERNAL, 1)
    v = dd.add_vertex(INTERNAL, 1)
    w = dd.add_vertex(OUTPUT, 1)
    dd.add_edge(a, u)
    dd.add_edge(u, v)
    dd.add_edge(v, w)
    cyc = verify_s_partition(dd, SPartition([{u, w}, {v}]), 3)
    assert not cyc and cyc.clause == "property 4"


def test_brute_force_p_examples():
    # whole dag in one subset when dominator and minimum set fit
    dc = build_direct_conv_dag(ConvShape.from_output(1, 1, 1, 2, 1, 1))
    assert brute_force_p(dc, 2) == 1  # regression: enumeration on products+sum
    assert brute_force_p(chain(4), 2) == 1
    assert brute_force_p(single_vertex(), 1) == 1
    # bipartite 3x3 products need two subsets at S=6
    assert brute_force_p(corpus()["bipartite3x3"].dag, 6) == 2


def test_brute_force_p_cap():
    with pytest.raises(PebbleCapError):
        brute_force_p(corpus()["bintree8"].dag, 3, cap=4)


def test_oracle_certificate_verifies():
    for name in ("product2", "chain4", "diamond", "dc_1x1_cin2_out1x1x1",
                 "bipartite3x3", "wa_e1r1_cin2_out1x1x1"):
        dag = corpus()[name].dag
        for s in (2, 3):
            try:
                h, cert = s_partition_oracle(dag, s)
            except PebbleInfeasibleError:
                continue
            assert cert.h == h
            assert bool(verify_s_partition(dag, cert, s)), name
            covered = set().union(*cert.subsets) if cert.subsets else set()
            assert partition_universe(dag) <= covered or not cert.subsets


def test_check_hong_kung_examples():
    res = check_hong_kung(single_vertex(), 3)
    assert (res.q_min, res.p_2s, res.holds) == (2, 1, True)
    res = check_hong_kung(product_dag(), 3)
    assert res.q_min == 3 and res.p_2s >= 1 and res.holds


def test_bundled_fixture_files_match_corpus():
    import os
    from convio.fixtures import bundled_fixture_dir
    from convio.dag import Dag

    directory = bundled_fixture_dir()
    for name, fx in corpus().items():
        path = os.path.join(directory, f"{name}.dag")
        assert os.path.exists(path), name
        loaded = Dag.load(path)
        assert loaded.kinds == fx.dag.kinds
        assert loaded.steps == fx.dag.steps
        assert loaded.edges == fx.dag.edges

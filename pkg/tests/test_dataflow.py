import math
from fractions import Fraction

import pytest

from convio.model import ConvShape, WinogradParams, HwModel, reuse_factor
from convio.bounds import lower_bound_dc
from convio.dataflow import (
    TileConfig, Schedule, ScheduleError, InfeasibleTileError,
    divisors, input_tile_dims,
    optimal_tile_dc, optimal_tile_wa,
    plan_direct_dataflow, plan_winograd_dataflow, simulate,
    analytic_dc_io, analytic_wa_io, dc_io_at_optimum, wa_io_at_optimum,
    stage_trace_rows,
)


def enumerate_dc_triples(shape, hw):
    budget = Fraction(hw.s, hw.n_p)
    for x in divisors(shape.w_out):
        for y in divisors(shape.h_out):
            for z in divisors(shape.c_out):
                if x * y * z <= budget:
                    yield x, y, z


def brute_best_tile(triples, target):
    """Reference objective: min |xy - target*z|, max xyz, lexicographic."""
    return min(
        triples,
        key=lambda t: (abs(Fraction(t[0] * t[1]) - target * t[2]),
                       -(t[0] * t[1] * t[2]), t),
    )


def dc_tile(shape, x, y, z):
    xp, yp = input_tile_dims(shape, x, y)
    s_b = x * y * z + xp * yp + shape.w_ker * shape.h_ker * z
    return TileConfig(x, y, z, s_b)


def test_optimal_tile_dc_examples():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    t = optimal_tile_dc(shape, HwModel(s=144))
    assert (t.x, t.y, t.z) == (6, 6, 4)
    assert t.x * t.y == 9 * t.z and t.volume == 144

    assert optimal_tile_dc(
        ConvShape.from_output(1, 1, 1, 1, 3, 3), HwModel(s=144)
    ).volume == 1

    # divisor-constrained case: agree with the enumeration oracle
    shape = ConvShape.from_output(8, 8, 16, 32, 3, 3)
    hw = HwModel(s=144)
    t = optimal_tile_dc(shape, hw)
    best = brute_best_tile(list(enumerate_dc_triples(shape, hw)), reuse_factor(shape))
    assert (t.x, t.y, t.z) == best == (1, 8, 1)


def test_optimal_tile_dc_agrees_with_oracle_random():
    hw = HwModel(s=96)
    for dims in [(4, 6, 8), (8, 4, 2), (12, 2, 6), (9, 3, 3)]:
        shape = ConvShape.from_output(*dims, 4, 3, 3)
        t = optimal_tile_dc(shape, hw)
        best = brute_best_tile(list(enumerate_dc_triples(shape, hw)),
                               reuse_factor(shape))
        assert (t.x, t.y, t.z) == best


def test_optimal_tile_infeasible():
    shape = ConvShape.from_output(4, 4, 4, 2, 3, 3)
    with pytest.raises(InfeasibleTileError) as err:
        optimal_tile_dc(shape, HwModel(s=8, s_sm=64, n_p=16))
    assert "divisor" in str(err.value)


def test_plan_direct_examples():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    hw = HwModel(s=144)
    sch = plan_direct_dataflow(shape, hw, dc_tile(shape, 6, 6, 4))
    assert len(sch.block_stages) == 2
    assert sch.block_stages[0].load_words == 8 * 8 + 9 * 4  # 100 words
    assert sch.block_stages[-1].store_words == 144
    assert sch.n_blocks == 1

    tiny = ConvShape.from_output(1, 1, 1, 1, 1, 1)
    sch = plan_direct_dataflow(tiny, hw, dc_tile(tiny, 1, 1, 1))
    assert len(sch.block_stages) == 1
    assert sch.block_stages[0].input_words == 1
    assert sch.block_stages[0].weight_words == 1
    assert sch.block_stages[0].store_words == 1

    # stride-2 geometry: x' = 2(x-1) + 3
    strided = ConvShape.from_output(4, 4, 1, 1, 3, 3, stride=2)
    assert input_tile_dims(strided, 2, 2) == (5, 5)


def test_plan_capacity_error():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    with pytest.raises(ScheduleError) as err:
        plan_direct_dataflow(shape, HwModel(s=144), TileConfig(6, 6, 4, s_b=100))
    assert "resident" in str(err.value)
    with pytest.raises(ScheduleError):
        plan_direct_dataflow(shape, HwModel(s=144), TileConfig(4, 4, 4, s_b=999))


def test_simulate_dc_examples():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    hw = HwModel(s=144)
    rep = simulate(plan_direct_dataflow(shape, hw, dc_tile(shape, 6, 6, 4)), hw)
    assert (rep.loads, rep.stores, rep.q_total) == (200, 144, 344)

    small = simulate(plan_direct_dataflow(shape, hw, dc_tile(shape, 2, 2, 1)), hw)
    assert small.q_total > rep.q_total

    empty = simulate(Schedule("direct", TileConfig(1, 1, 1, 8), [], 0, 0), hw)
    assert (empty.loads, empty.stores, empty.flops, empty.peak_fast_mem) == (0, 0, 0, 0)
    assert empty.runtime_proxy == 0.0


def test_sim_equals_analytic_dc_grid():
    hw = HwModel(s=4096)
    cases = 0
    for dims in [(4, 4, 2), (6, 6, 4), (8, 4, 8), (12, 6, 2)]:
        for ker, mu in [((3, 3), 1), ((2, 2), 2), ((1, 1), 1), ((3, 3), 3)]:
            for c_in in (1, 3):
                shape = ConvShape.from_output(*dims, c_in, *ker, stride=mu)
                for x in divisors(shape.w_out)[:2]:
                    tile = dc_tile(shape, x, dims[1], dims[2])
                    rep = simulate(plan_direct_dataflow(shape, hw, tile), hw)
                    est = analytic_dc_io(shape, hw, tile)
                    assert rep.q_total == est.total_exact
                    assert rep.stores == shape.outputs_per_image * shape.n
                    cases += 1
    assert cases >= 20


def test_sim_analytic_with_batch():
    shape = ConvShape.from_output(4, 4, 2, 2, 3, 3, n=3)
    hw = HwModel(s=512)
    tile = dc_tile(shape, 4, 4, 2)
    rep = simulate(plan_direct_dataflow(shape, hw, tile), hw)
    est = analytic_dc_io(shape, hw, tile)
    assert rep.q_total == est.total_exact
    assert rep.stores == 4 * 4 * 2 * 3


def test_analytic_dc_examples():
    # Eq-18 value at the optimality condition
    shape = ConvShape.from_output(8, 8, 16, 32, 3, 3)
    assert dc_io_at_optimum(shape, HwModel(s=144)) == pytest.approx(16384 + 1024)
    # doubling n_p scales the reading term by sqrt(2)
    r1 = dc_io_at_optimum(shape, HwModel(s=144, n_p=1)) - 1024
    r2 = dc_io_at_optimum(shape, HwModel(s=144, n_p=2)) - 1024
    assert r2 / r1 == pytest.approx(math.sqrt(2))
    # whole-image tile: reading = Hker*Wker*Cin * (c_out + w_out*h_out/R)
    shape = ConvShape.from_output(4, 4, 2, 3, 3, 3)
    hw = HwModel(s=4096)
    est = analytic_dc_io(shape, hw, dc_tile(shape, 4, 4, 2))
    assert est.reading_approx == 9 * 3 * (2 + Fraction(16, 9))


def test_analytic_dc_optimal_condition_gate():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    hw = HwModel(s=144)
    est = analytic_dc_io(shape, hw, dc_tile(shape, 6, 6, 4))
    assert est.optimal_total == pytest.approx(dc_io_at_optimum(shape, hw))
    est2 = analytic_dc_io(shape, hw, dc_tile(shape, 2, 2, 1))
    assert est2.optimal_total is None


def wa_tile(shape, p, x, y, z, shared=False):
    m2 = p.m ** 2
    pos = (x // p.e) * (y // p.e)
    weight_res = z * p.r ** 2 if shared else pos * z * p.r ** 2
    return TileConfig(x, y, z, 2 * m2 * pos * z + pos * m2 + weight_res, e=p.e)


def test_optimal_tile_wa_oracle():
    shape = ConvShape.from_output(4, 4, 2, 8, 3, 3)
    p = WinogradParams(2, 3)
    hw = HwModel(s=512)
    t = optimal_tile_wa(shape, p, hw)
    budget = Fraction(hw.s * 4, 2 * 16)  # xyz <= 64
    triples = [
        (x, y, z)
        for x in divisors(4) if x % 2 == 0
        for y in divisors(4) if y % 2 == 0
        for z in divisors(2)
        if x * y * z <= budget
    ]
    best = brute_best_tile(triples, Fraction(9))
    assert (t.x, t.y, t.z) == best == (2, 4, 1)
    # scaling s by 4 scales the admissible xyz budget linearly
    hw4 = HwModel(s=2048)
    budget4 = Fraction(hw4.s * 4, 2 * 16)
    assert budget4 == 4 * budget


def test_plan_winograd_examples():
    p = WinogradParams(2, 3)
    shape = ConvShape.from_output(2, 2, 1, 2, 3, 3)
    hw = HwModel(s=512)
    sch = plan_winograd_dataflow(shape, p, hw, wa_tile(shape, p, 2, 2, 1))
    assert len(sch.block_stages) == 2
    assert sch.block_stages[0].input_words == 16
    assert sch.block_stages[0].weight_words == 9
    assert sch.block_stages[-1].store_words == 4

    solo = ConvShape.from_output(2, 2, 1, 1, 3, 3)
    sch1 = plan_winograd_dataflow(solo, p, hw, wa_tile(solo, p, 2, 2, 1))
    assert len(sch1.block_stages) == 1


def test_shared_kernel_transform_drops_weight_loads():
    p = WinogradParams(2, 3)
    shape = ConvShape.from_output(8, 8, 1, 4, 3, 3)
    hw = HwModel(s=8192)
    off = simulate(plan_winograd_dataflow(
        shape, p, hw, wa_tile(shape, p, 8, 8, 1)), hw)
    on = simulate(plan_winograd_dataflow(
        shape, p, hw, wa_tile(shape, p, 8, 8, 1, shared=True),
        shared_kernel_transform=True), hw)
    positions = 16
    off_weights = positions * 9 * 4
    on_weights = 9 * 4
    assert off.loads - on.loads == off_weights - on_weights


def test_analytic_wa_examples():
    p = WinogradParams(2, 3)
    shape = ConvShape.from_output(4, 4, 2, 8, 3, 3)
    hw = HwModel(s=512)
    est = analytic_wa_io(shape, p, hw, wa_tile(shape, p, 4, 4, 2))
    assert est.total_approx == 304  # (128 + 144) + 32
    # whole-image substitution: reading = c_in*(w_out*h_out + c_out*r^2)
    assert est.reading_approx == 8 * (16 + 2 * 9)
    # the xy = r^2 z identity, numerically over a grid
    for z in (1, 2, 4):
        x, y = 3 * z, 3  # xy = 9z
        shape2 = ConvShape.from_output(x, y, z, 4, 3, 3)
        est2 = analytic_wa_io(
            shape2, WinogradParams(3, 3), HwModel(s=4096),
            wa_tile(shape2, WinogradParams(3, 3), x, y, z),
        )
        expect = 2 * shape2.outputs_per_image * 4 * 3 / math.sqrt(x * y * z)
        assert float(est2.reading_approx) == pytest.approx(expect)


def test_wa_sim_equals_analytic_grid():
    p = WinogradParams(2, 3)
    hw = HwModel(s=65536)
    cases = 0
    for dims in [(4, 4, 2), (8, 4, 4), (4, 8, 1)]:
        for c_in in (1, 2, 5):
            shape = ConvShape.from_output(*dims, c_in, 3, 3)
            for x in (2, dims[0]):
                tile = wa_tile(shape, p, x, dims[1], dims[2])
                rep = simulate(plan_winograd_dataflow(shape, p, hw, tile), hw)
                est = analytic_wa_io(shape, p, hw, tile)
                assert rep.q_total == est.total_exact
                assert rep.stores == shape.outputs_per_image
                cases += 1
    assert cases >= 15


def test_sim_at_least_exact_lower_bound():
    hw = HwModel(s=256)
    for dims, ker, mu, c_in in [
        ((8, 8, 16), (3, 3), 3, 32),
        ((6, 6, 4), (3, 3), 1, 8),
        ((4, 4, 4), (2, 2), 2, 16),
    ]:
        shape = ConvShape.from_output(*dims, c_in, *ker, stride=mu)
        tile = optimal_tile_dc(shape, hw)
        rep = simulate(plan_direct_dataflow(shape, hw, tile), hw)
        bound = lower_bound_dc(shape, hw.s)
        assert rep.q_total >= bound.q_exact


def test_runtime_proxy_monotone():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    hw = HwModel(s=144)
    big = simulate(plan_direct_dataflow(shape, hw, dc_tile(shape, 6, 6, 4)), hw)
    small = simulate(plan_direct_dataflow(shape, hw, dc_tile(shape, 2, 2, 1)), hw)
    assert small.flops >= big.flops and small.q_total > big.q_total
    assert small.runtime_proxy > big.runtime_proxy


def test_argmin_agreement_analytic_vs_simulated():
    hw = HwModel(s=144)
    for dims, ker, mu, c_in in [
        ((6, 6, 4), (3, 3), 1, 2),
        ((8, 8, 16), (3, 3), 3, 4),
        ((4, 4, 4), (2, 2), 2, 2),
    ]:
        shape = ConvShape.from_output(*dims, c_in, *ker, stride=mu)
        feasible = list(enumerate_dc_triples(shape, hw))
        by_sim = min(
            feasible,
            key=lambda t: (simulate(plan_direct_dataflow(
                shape, hw, dc_tile(shape, *t)), hw).q_total, t),
        )
        by_analytic = min(
            feasible,
            key=lambda t: (analytic_dc_io(shape, hw, dc_tile(shape, *t)).reading_approx, t),
        )
        assert by_sim == by_analytic


def test_stage_trace_rows():
    shape = ConvShape.from_output(6, 6, 4, 2, 3, 3)
    hw = HwModel(s=144)
    rows = stage_trace_rows(plan_direct_dataflow(shape, hw, dc_tile(shape, 6, 6, 4)))
    assert len(rows) == 2
    assert rows[0]["input_words"] == 64
    assert rows[1]["store_words"] == 144

"""Tiled dataflow schedules and exact off-chip traffic counting.

Sweeps the feasible output sub-blocks for one layer, showing how the
simulated volume tracks the balance |xy - R*z| and bottoms out at the
optimality condition xy = R*z; then compares the best schedule against
the analytic formula and the closed-form lower bound.
"""

from convio import ConvShape, HwModel, reuse_factor, lower_bound_dc
from convio.dataflow import (
    TileConfig, divisors, input_tile_dims,
    optimal_tile_dc, plan_direct_dataflow, simulate, analytic_dc_io,
)

shape = ConvShape.from_output(12, 12, 8, 16, 3, 3)
hw = HwModel(s=576)
r = reuse_factor(shape)
print(f"layer: out 12x12x8, 3x3 kernel, c_in=16, R={r}, S={hw.s}")
print()
print(f"{'tile':>10} {'xyz':>5} {'|xy-Rz|':>8} {'q_total':>9}")


def tile_for(x, y, z):
    xp, yp = input_tile_dims(shape, x, y)
    return TileConfig(x, y, z, x * y * z + xp * yp + 9 * z)


rows = []
for x in divisors(12):
    for y in divisors(12):
        for z in divisors(8):
            if x * y * z > hw.s:
                continue
            rep = simulate(plan_direct_dataflow(shape, hw, tile_for(x, y, z)), hw)
            rows.append((abs(x * y - r * z), rep.q_total, (x, y, z)))
for bal, q, t in sorted(rows, key=lambda r: r[1])[:6]:
    print(f"{str(t):>10} {t[0]*t[1]*t[2]:>5} {str(bal):>8} {q:>9}")

best = optimal_tile_dc(shape, hw)
sched = plan_direct_dataflow(shape, hw, best)
rep = simulate(sched, hw)
est = analytic_dc_io(shape, hw, best)
bound = lower_bound_dc(shape, hw.s)
print()
print(f"auto tile: ({best.x},{best.y},{best.z}), xy = {best.x*best.y}, "
      f"R*z = {r * best.z}")
print(f"simulated q_total     : {rep.q_total}")
print(f"analytic exact volume : {est.total_exact}")
print(f"approximate estimate  : {float(est.total_approx):.0f}")
print(f"closed-form omega     : {bound.omega:.0f}")
print(f"achieved / omega      : {rep.q_total / bound.omega:.2f}")

"""Auto-tuning over the constrained searching domain.

Builds the searching domain for one layer, reports how much the
optimality-condition constraints shrink it, then races the tuner against
pure random search at the same measurement budget and checks the result
against the exhaustive oracle.
"""

from convio import ConvShape, HwModel
from convio.autotune import build_space, exhaustive_oracle, random_search, tune

shape = ConvShape.from_output(4, 4, 4, 8, 3, 3)
hw = HwModel(s=512, s_sm=256)
space = build_space(shape, hw, "direct")
print(f"searching domain: {space.size} configurations "
      f"({space.unconstrained_size} without the optimality-condition pruning, "
      f"ratio {100 * space.reduction_ratio:.0f}%)")

oracle_cfg, oracle_cost = exhaustive_oracle(space)
print(f"exhaustive oracle: cost {oracle_cost:.0f} at "
      f"(x,y,z)=({oracle_cfg.x},{oracle_cfg.y},{oracle_cfg.z}), "
      f"s_b={oracle_cfg.s_b}, threads=({oracle_cfg.n_xt},{oracle_cfg.n_yt},"
      f"{oracle_cfg.n_zt}), layout={oracle_cfg.layout}")

budget = int(0.3 * space.size)
print(f"\nbudget = {budget} measurements (30% of the space), 3 seeds:")
print(f"{'seed':>4} {'tuned':>10} {'random':>10} {'gap to oracle':>14}")
for seed in range(3):
    session = tune(shape, hw, "direct", budget=budget, seed=seed, space=space)
    _, rand_cost = random_search(space, budget, seed)
    gap = session.best_cost / oracle_cost - 1
    print(f"{seed:>4} {session.best_cost:>10.0f} {rand_cost:>10.0f} {gap:>13.1%}")

session = tune(shape, hw, "direct", budget=budget, seed=0, space=space)
curve = [float(r["best_cost"]) for r in session.history]
shown = ["inf" if c == float("inf") else round(c) for c in curve[::10]]
print(f"\nbest-so-far curve (seed 0, every 10th measurement): {shown}")
print(f"stopped by: {session.stopped_by} after {session.iterations} iterations")

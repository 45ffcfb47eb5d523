"""Auto-tuning over the constrained searching domain.

The engine mirrors the three-stage loop: train a boosted-tree cost model
on measured configurations, explore with parallel greedy random walks,
measure the promising endpoints with the dataflow simulator, repeat.
Measurement is simulator-backed (runtime proxy), so costs are noiseless
and every run is reproducible from its seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor

from .model import ConvShape, WinogradParams, HwModel, reuse_factor
from .dataflow import (
    LAYOUTS,
    TileConfig,
    InfeasibleTileError,
    ScheduleError,
    divisors,
    plan_direct_dataflow,
    plan_winograd_dataflow,
    simulate,
)

EXHAUSTIVE_CAP = 100_000


class TrainingError(ValueError):
    """Cost-model training is impossible (not enough finite samples)."""


def default_sb_values(hw: HwModel) -> list[int]:
    """Powers of two up to half the per-SM shared memory."""
    cap = hw.s_sm // 2
    vals = []
    v = 8
    while v <= cap:
        vals.append(v)
        v *= 2
    return vals


def table_constraints_ok(cfg: TileConfig, hw: HwModel, r_factor: Fraction) -> bool:
    """Independent predicate for the searching-domain constraints."""
    if cfg.s_b * 2 > hw.s_sm:
        return False
    if cfg.volume > cfg.s_b:
        return False
    # z <= sqrt(s_b / R) and xy <= sqrt(s_b * R), kept exact
    if cfg.z ** 2 * r_factor > cfg.s_b:
        return False
    if Fraction((cfg.x * cfg.y) ** 2) > cfg.s_b * r_factor:
        return False
    return True


@dataclass
class ConfigSpace:
    """Enumerated searching domain for one (shape, hardware, algorithm)."""

    shape: ConvShape
    hw: HwModel
    algorithm: str
    winograd: WinogradParams | None
    r_factor: Fraction
    members: tuple[TileConfig, ...]
    unconstrained_size: int

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def reduction_ratio(self) -> float:
        return self.size / self.unconstrained_size if self.unconstrained_size else 0.0

    def __contains__(self, cfg: TileConfig) -> bool:
        return cfg in set(self.members)

    def index(self) -> set[TileConfig]:
        return set(self.members)


def build_space(
    shape: ConvShape,
    hw: HwModel,
    algorithm: str,
    winograd: WinogradParams | None = None,
    s_b_values: list[int] | None = None,
    thread_axes: bool = True,
    layouts: tuple[str, ...] = LAYOUTS,
) -> ConfigSpace:
    """Enumerate the constrained domain; also count its unconstrained variant.

    The unconstrained variant keeps only the divisor constraints and
    xyz <= s_b; the constrained domain adds the optimality-condition
    prunes z <= sqrt(s_b/R) and xy <= sqrt(s_b*R).
    """
    if algorithm == "winograd":
        if winograd is None:
            raise InfeasibleTileError("winograd space needs WinogradParams")
        winograd.check_shape(shape)
        r = Fraction(winograd.r ** 2)
        dx = [d for d in divisors(shape.w_out) if d % winograd.e == 0]
        dy = [d for d in divisors(shape.h_out) if d % winograd.e == 0]
    elif algorithm == "direct":
        r = reuse_factor(shape)
        dx, dy = divisors(shape.w_out), divisors(shape.h_out)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    dz = divisors(shape.c_out)
    sbs = sorted(s_b_values) if s_b_values else default_sb_values(hw)

    members = []
    unconstrained = 0
    e = winograd.e if winograd else None
    for li, layout in enumerate(layouts):
        for s_b in sbs:
            for x in dx:
                for y in dy:
                    for z in dz:
                        if x * y * z > s_b:
                            continue
                        if thread_axes:
                            threads = [
                                (tx, ty, tz)
                                for tx in divisors(x)
                                for ty in divisors(y)
                                for tz in divisors(z)
                            ]
                        else:
                            threads = [(1, 1, 1)]
                        cfg0 = TileConfig(x, y, z, s_b, layout=layout, e=e)
                        ok = table_constraints_ok(cfg0, hw, r)
                        unconstrained += len(threads)
                        if not ok:
                            continue
                        for tx, ty, tz in threads:
                            members.append(TileConfig(
                                x, y, z, s_b, tx, ty, tz, layout, e
                            ))
    if not members:
        raise InfeasibleTileError(
            f"empty searching domain: s_b axis {sbs}, divisors {dx}/{dy}/{dz}"
        )
    members.sort(key=lambda c: (LAYOUTS.index(c.layout), c.s_b, c.x, c.y, c.z,
                                c.n_xt, c.n_yt, c.n_zt))
    return ConfigSpace(shape, hw, algorithm, winograd, r, tuple(members), unconstrained)


# -- measurement ----------------------------------------------------------------


@dataclass(frozen=True)
class Measurement:
    config: TileConfig
    cost: float
    index: int = 0

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.cost)


def measure(
    cfg: TileConfig,
    shape: ConvShape,
    hw: HwModel,
    algorithm: str,
    winograd: WinogradParams | None = None,
    index: int = 0,
) -> Measurement:
    """Plan + simulate one configuration; schedule errors become infinite cost."""
    try:
        if algorithm == "direct":
            schedule = plan_direct_dataflow(shape, hw, cfg)
        else:
            schedule = plan_winograd_dataflow(shape, winograd, hw, cfg)
        cost = simulate(schedule, hw).runtime_proxy
    except (ScheduleError, InfeasibleTileError):
        cost = math.inf
    return Measurement(cfg, cost, index)


# -- cost model -------------------------------------------------------------------


def config_features(cfg: TileConfig, r_factor: Fraction) -> list[float]:
    ratio = float(Fraction(cfg.x * cfg.y) / (r_factor * cfg.z))
    return [
        cfg.x, cfg.y, cfg.z, cfg.s_b,
        cfg.n_xt, cfg.n_yt, cfg.n_zt,
        *(1.0 if cfg.layout == lay else 0.0 for lay in LAYOUTS),
        ratio,
        cfg.volume / cfg.s_b,
    ]


class CostModel:
    """Gradient-boosted regression trees over the numeric config features."""

    HYPERPARAMS = dict(n_estimators=100, max_depth=4, learning_rate=0.1,
                       loss="squared_error")

    def __init__(self, r_factor: Fraction, seed: int = 0):
        self.r_factor = r_factor
        self.seed = seed
        self._gbr = GradientBoostingRegressor(random_state=seed, **self.HYPERPARAMS)
        self._fitted = False

    def fit(self, measurements: list[Measurement]) -> "CostModel":
        finite = [m for m in measurements if m.feasible]
        if len(finite) < 2:
            raise TrainingError(
                f"need >= 2 finite-cost measurements, got {len(finite)}"
            )
        xs = np.array([config_features(m.config, self.r_factor) for m in finite])
        ys = np.array([m.cost for m in finite])
        self._gbr.fit(xs, ys)
        self._fitted = True
        return self

    def predict(self, cfgs: list[TileConfig]) -> np.ndarray:
        if not self._fitted:
            raise TrainingError("model is not trained")
        xs = np.array([config_features(c, self.r_factor) for c in cfgs])
        return self._gbr.predict(xs)

    def predict_one(self, cfg: TileConfig) -> float:
        return float(self.predict([cfg])[0])


def train(measurements: list[Measurement], r_factor: Fraction, seed: int = 0) -> CostModel:
    return CostModel(r_factor, seed).fit(measurements)


# -- configuration explorer --------------------------------------------------------


_AXES = ("x", "y", "z", "s_b", "n_xt", "n_yt", "n_zt", "layout")


class _Neighborhood:
    """Nearest-feasible neighbor lookup per axis over an enumerated space."""

    def __init__(self, space: ConfigSpace):
        self.space = space
        self.member_set = set(space.members)
        self.axis_values = {
            name: sorted({getattr(c, name) for c in space.members},
                         key=(LAYOUTS.index if name == "layout" else lambda v: v))
            for name in _AXES
        }

    def _with(self, cfg: TileConfig, axis: str, value) -> TileConfig | None:
        fields = cfg.to_dict()
        fields[axis] = value
        try:
            cand = TileConfig(**fields)
        except InfeasibleTileError:
            return None
        return cand if cand in self.member_set else None

    def neighbors(self, cfg: TileConfig) -> list[TileConfig]:
        """Nearest feasible member up and down each axis."""
        out = []
        for axis in _AXES:
            vals = self.axis_values[axis]
            i = vals.index(getattr(cfg, axis))
            for direction in (-1, 1):
                j = i + direction
                while 0 <= j < len(vals):
                    cand = self._with(cfg, axis, vals[j])
                    if cand is not None:
                        out.append(cand)
                        break
                    j += direction
        return out


def random_walk(
    space: ConfigSpace,
    start: TileConfig,
    model: CostModel,
    max_steps: int,
    seed: int | np.random.Generator,
    epsilon: float = 0.05,
    neighborhood: _Neighborhood | None = None,
) -> TileConfig:
    """Greedy descent on predicted cost with rare sideways moves.

    Moves only to strictly better neighbors; with probability epsilon a
    cost-tied neighbor is taken to escape plateaus. Stops at max_steps or
    at a local minimum of the predicted cost.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    nb = neighborhood or _Neighborhood(space)
    cur = start
    cur_cost = model.predict_one(cur)
    for _ in range(max_steps):
        neigh = nb.neighbors(cur)
        if not neigh:
            break
        costs = model.predict(neigh)
        better = [i for i, c in enumerate(costs) if c < cur_cost]
        if better:
            pick = better[rng.integers(len(better))]
        else:
            tied = [i for i, c in enumerate(costs) if c == cur_cost]
            if tied and rng.random() < epsilon:
                pick = tied[rng.integers(len(tied))]
            else:
                break  # local minimum
        cur = neigh[pick]
        cur_cost = costs[pick]
    return cur


def explore(
    space: ConfigSpace,
    model: CostModel,
    n_s: int,
    seed: int,
    starts: list[TileConfig] | None = None,
    threshold: float | None = None,
    max_steps: int = 64,
    retry_cap: int = 3,
    epsilon: float = 0.05,
) -> tuple[list[TileConfig], bool]:
    """n_s independent walks; endpoints above the threshold restart.

    Each walk draws from its own RNG stream spawned off the master seed,
    so running the walks concurrently cannot change the result. Returns
    the endpoints and a flag telling whether every endpoint's predicted
    cost ended up at or below the threshold (always True when no
    threshold is given).
    """
    master = np.random.SeedSequence(seed)
    start_rng = np.random.default_rng(master.spawn(1)[0])
    walk_streams = master.spawn(n_s)
    nb = _Neighborhood(space)
    if starts is None:
        starts = [space.members[start_rng.integers(space.size)] for _ in range(n_s)]
    endpoints = []
    all_met = True
    for i in range(n_s):
        rng = np.random.default_rng(walk_streams[i])
        start = starts[i % len(starts)]
        best_end, best_pred = None, math.inf
        for _attempt in range(retry_cap + 1):
            end = random_walk(space, start, model, max_steps, rng,
                              epsilon=epsilon, neighborhood=nb)
            pred = model.predict_one(end)
            if pred < best_pred:
                best_end, best_pred = end, pred
            if threshold is None or best_pred <= threshold:
                break
            start = space.members[rng.integers(space.size)]
        if threshold is not None and best_pred > threshold:
            all_met = False
        endpoints.append(best_end)
    return endpoints, all_met


# -- the tuning loop -----------------------------------------------------------------


@dataclass
class TuneSession:
    space: ConfigSpace
    seed: int
    n_s: int
    patience: int
    measurements: list[Measurement] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    best: Measurement | None = None
    iterations: int = 0
    stopped_by: str = ""

    @property
    def best_cost(self) -> float:
        return self.best.cost if self.best else math.inf

    def measured_set(self) -> set[TileConfig]:
        return {m.config for m in self.measurements}

    HISTORY_FIELDS = [
        "iteration", "x", "y", "z", "s_b", "n_xt", "n_yt", "n_zt", "layout", "e",
        "predicted_cost", "measured_cost", "best_cost",
    ]

    def record(self, iteration: int, m: Measurement, predicted: float | None):
        if m.feasible and (self.best is None or m.cost < self.best.cost):
            self.best = m
        row = {"iteration": iteration, **m.config.to_dict(),
               "predicted_cost": "" if predicted is None else repr(float(predicted)),
               "measured_cost": repr(float(m.cost)),
               "best_cost": repr(float(self.best_cost))}
        self.history.append(row)

    def write_history_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.HISTORY_FIELDS)
            writer.writeheader()
            for row in self.history:
                writer.writerow(row)

    def write_dataset(self, path) -> None:
        """Measurements only; enough to resume a session."""
        payload = [
            {"config": m.config.to_dict(), "cost": repr(float(m.cost)), "index": m.index}
            for m in self.measurements
        ]
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)

    @staticmethod
    def load_dataset(path) -> list[Measurement]:
        with open(path) as fh:
            payload = json.load(fh)
        return [
            Measurement(TileConfig(**row["config"]), float(row["cost"]), row["index"])
            for row in payload
        ]

    def to_best_json(self) -> str:
        body = {
            "best_config": self.best.config.to_dict() if self.best else None,
            "best_cost": self.best_cost,
            "iterations": self.iterations,
            "measurements": len(self.measurements),
            "stopped_by": self.stopped_by,
            "seed": self.seed,
        }
        return json.dumps(body, sort_keys=True, indent=2)


def tune(
    shape: ConvShape,
    hw: HwModel,
    algorithm: str,
    budget: int,
    seed: int,
    winograd: WinogradParams | None = None,
    n_s: int = 16,
    patience: int = 50,
    space: ConfigSpace | None = None,
    resume_measurements: list[Measurement] | None = None,
    threshold_quantile: float = 0.20,
    max_steps: int = 64,
) -> TuneSession:
    """Train -> explore -> measure until the budget or patience runs out."""
    if budget < n_s:
        raise ValueError(f"budget {budget} must be >= n_s {n_s}")
    if space is None:
        space = build_space(shape, hw, algorithm, winograd)
    session = TuneSession(space, seed, n_s, patience)
    rng = np.random.default_rng(seed)
    model_seed = int(np.random.default_rng(seed + 1).integers(2 ** 31 - 1))

    if resume_measurements:
        for m in resume_measurements:
            session.measurements.append(m)
            session.record(0, m, None)

    def sample_unmeasured(k: int) -> list[TileConfig]:
        seen = session.measured_set()
        pool = [c for c in space.members if c not in seen]
        if not pool:
            return []
        k = min(k, len(pool))
        idx = rng.choice(len(pool), size=k, replace=False)
        return [pool[i] for i in sorted(int(i) for i in idx)]

    def do_measure(cfgs: list[TileConfig], iteration: int, preds=None):
        for i, cfg in enumerate(cfgs):
            m = measure(cfg, shape, hw, algorithm, winograd,
                        index=len(session.measurements))
            session.measurements.append(m)
            session.record(iteration, m, None if preds is None else preds[i])

    # iteration 1: seed the dataset with random configurations
    session.iterations = 1
    do_measure(sample_unmeasured(min(n_s, budget)), 1)

    prev_endpoints: list[TileConfig] = []
    best_before = session.best_cost
    stale = 0
    while len(session.measurements) - len(resume_measurements or []) < budget:
        finite = [m for m in session.measurements if m.feasible]
        if len(finite) < 2:
            extra = sample_unmeasured(min(n_s, budget - len(session.measurements)))
            if not extra:
                session.stopped_by = "space exhausted"
                break
            session.iterations += 1
            do_measure(extra, session.iterations)
            continue
        model = train(session.measurements, space.r_factor, model_seed)
        costs = sorted(m.cost for m in finite)
        threshold = costs[int(threshold_quantile * (len(costs) - 1))]

        n_fresh = max(1, n_s // 4)
        starts = []
        if prev_endpoints:
            starts.extend(prev_endpoints[: n_s - n_fresh])
        while len(starts) < n_s:
            starts.append(space.members[rng.integers(space.size)])

        walk_seed = int(rng.integers(2 ** 31 - 1))
        endpoints, _met = explore(
            space, model, n_s, walk_seed, starts=starts,
            threshold=threshold, max_steps=max_steps,
        )
        prev_endpoints = endpoints

        seen = session.measured_set()
        fresh, dedup = [], set()
        for cfg in endpoints:
            if cfg not in seen and cfg not in dedup:
                fresh.append(cfg)
                dedup.add(cfg)
        room = budget - (len(session.measurements) - len(resume_measurements or []))
        if len(fresh) < min(n_s, room):
            extra = [c for c in sample_unmeasured(min(n_s, room) - len(fresh))
                     if c not in dedup]
            fresh.extend(extra)
        fresh = fresh[:room]
        if not fresh:
            session.stopped_by = "space exhausted"
            break
        preds = model.predict(fresh)
        session.iterations += 1
        do_measure(fresh, session.iterations, preds)

        if session.best_cost < best_before:
            best_before = session.best_cost
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                session.stopped_by = "patience"
                break
    if not session.stopped_by:
        session.stopped_by = "budget"
    return session


# -- oracles -----------------------------------------------------------------------


def exhaustive_oracle(space: ConfigSpace, cap: int = EXHAUSTIVE_CAP) -> tuple[TileConfig, float]:
    """Measure every member; exact argmin with lexicographic tie-break."""
    if space.size > cap:
        raise InfeasibleTileError(f"space has {space.size} members, oracle cap {cap}")
    best_cfg, best_cost = None, math.inf
    for cfg in space.members:  # members are sorted, so first-min is the tie-break
        m = measure(cfg, space.shape, space.hw, space.algorithm, space.winograd)
        if m.cost < best_cost:
            best_cfg, best_cost = cfg, m.cost
    return best_cfg, best_cost


def random_search(space: ConfigSpace, budget: int, seed: int) -> tuple[TileConfig, float]:
    """Uniform sampling without replacement; the natural tuner baseline."""
    rng = np.random.default_rng(seed)
    k = min(budget, space.size)
    idx = rng.choice(space.size, size=k, replace=False)
    best_cfg, best_cost = None, math.inf
    for i in sorted(int(i) for i in idx):
        cfg = space.members[i]
        m = measure(cfg, space.shape, space.hw, space.algorithm, space.winograd)
        if m.cost < best_cost:
            best_cfg, best_cost = cfg, m.cost
    return best_cfg, best_cost

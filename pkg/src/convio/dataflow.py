"""Tiled dataflow schedules with exact off-chip traffic counting.

The planner emits the output-stationary schedule for direct convolution
and the temporary-array schedule for Winograd, each as a per-block stage
template (all blocks are identical because ragged tiles are refused).
The simulator walks the template and multiplies by the block and batch
counts, so every reported word count is exact.

Analytic comparators return both the per-sub-block estimate with the
x' ~ mu*x approximation and the exact-geometry count the simulator must
reproduce; totals include the batch factor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .model import ConvShape, WinogradParams, HwModel, reuse_factor

LAYOUTS = ("CHW", "CWH", "HWC")


class InfeasibleTileError(ValueError):
    """No tile satisfying the divisor and budget constraints exists."""


class ScheduleError(ValueError):
    """A schedule stage violates capacity or divisibility."""


@dataclass(frozen=True, order=True)
class TileConfig:
    """One point of the configuration space: an x*y*z output sub-block."""

    x: int
    y: int
    z: int
    s_b: int
    n_xt: int = 1
    n_yt: int = 1
    n_zt: int = 1
    layout: str = "CHW"
    e: int | None = None

    def __post_init__(self):
        if min(self.x, self.y, self.z, self.s_b, self.n_xt, self.n_yt, self.n_zt) < 1:
            raise InfeasibleTileError("tile fields must be >= 1")
        if self.layout not in LAYOUTS:
            raise InfeasibleTileError(f"layout must be one of {LAYOUTS}")
        if self.x % self.n_xt or self.y % self.n_yt or self.z % self.n_zt:
            raise InfeasibleTileError("thread counts must divide the tile dims")

    @property
    def volume(self) -> int:
        return self.x * self.y * self.z

    @property
    def threads(self) -> int:
        return self.n_xt * self.n_yt * self.n_zt

    def divides_output(self, shape: ConvShape) -> bool:
        return (
            shape.w_out % self.x == 0
            and shape.h_out % self.y == 0
            and shape.c_out % self.z == 0
        )

    def to_dict(self) -> dict:
        return {
            "x": self.x, "y": self.y, "z": self.z, "s_b": self.s_b,
            "n_xt": self.n_xt, "n_yt": self.n_yt, "n_zt": self.n_zt,
            "layout": self.layout, "e": self.e,
        }


@dataclass(frozen=True)
class Stage:
    index: int
    input_words: int
    weight_words: int
    flops: int
    store_words: int
    resident_words: int
    note: str = ""

    @property
    def load_words(self) -> int:
        return self.input_words + self.weight_words


@dataclass
class Schedule:
    """Per-block stage template plus replication counts."""

    algorithm: str
    tile: TileConfig
    block_stages: list[Stage]
    n_blocks: int
    batch: int = 1
    meta: dict = field(default_factory=dict)

    @property
    def replication(self) -> int:
        return self.n_blocks * self.batch

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "tile": self.tile.to_dict(),
            "stages_per_block": len(self.block_stages),
            "n_blocks": self.n_blocks,
            "batch": self.batch,
            "meta": self.meta,
        }


@dataclass
class SimReport:
    loads: int
    stores: int
    flops: int
    peak_fast_mem: int
    runtime_proxy: float

    @property
    def q_total(self) -> int:
        return self.loads + self.stores

    def to_dict(self) -> dict:
        return {
            "loads": self.loads,
            "stores": self.stores,
            "q_total": self.q_total,
            "flops": self.flops,
            "peak_fast_mem": self.peak_fast_mem,
            "runtime_proxy": self.runtime_proxy,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def divisors(v: int) -> list[int]:
    out = [d for d in range(1, int(v ** 0.5) + 1) if v % d == 0]
    out += [v // d for d in reversed(out) if d * d != v]
    return out


def input_tile_dims(shape: ConvShape, x: int, y: int) -> tuple[int, int]:
    """Exact footprint of an x*y output tile on the input image."""
    mu = shape.stride
    return mu * (x - 1) + shape.w_ker, mu * (y - 1) + shape.h_ker


# -- tile selection -----------------------------------------------------------


def _select_tile(triples, balance_target, budget) -> tuple[int, int, int]:
    """argmin |xy - target*z|, then max xyz, then lexicographic (x, y, z)."""
    best_key, best = None, None
    for x, y, z in triples:
        vol = x * y * z
        if vol > budget:
            continue
        key = (abs(Fraction(x * y) - balance_target * z), -vol, x, y, z)
        if best_key is None or key < best_key:
            best_key, best = key, (x, y, z)
    return best


def optimal_tile_dc(shape: ConvShape, hw: HwModel) -> TileConfig:
    """Best output sub-block under xyz <= S/N_p and the divisor constraints."""
    r = reuse_factor(shape)
    budget = Fraction(hw.s, hw.n_p)
    dx, dy, dz = divisors(shape.w_out), divisors(shape.h_out), divisors(shape.c_out)
    best = _select_tile(
        ((x, y, z) for x in dx for y in dy for z in dz), r, budget
    )
    if best is None:
        raise InfeasibleTileError(
            f"no divisor triple fits xyz <= {budget}; "
            f"divisors x:{dx} y:{dy} z:{dz}"
        )
    x, y, z = best
    xp, yp = input_tile_dims(shape, x, y)
    s_b = x * y * z + xp * yp + shape.w_ker * shape.h_ker * z
    return TileConfig(x, y, z, s_b)


def optimal_tile_wa(shape: ConvShape, p: WinogradParams, hw: HwModel) -> TileConfig:
    """Best sub-block under the temporary-array budget 2*m^2/e^2 * xyz <= S/N_p."""
    p.check_shape(shape)
    m2 = p.m * p.m
    budget = Fraction(hw.s * p.e ** 2, 2 * m2 * hw.n_p)
    dx = [d for d in divisors(shape.w_out) if d % p.e == 0]
    dy = [d for d in divisors(shape.h_out) if d % p.e == 0]
    dz = divisors(shape.c_out)
    best = _select_tile(
        ((x, y, z) for x in dx for y in dy for z in dz),
        Fraction(p.r ** 2), budget,
    )
    if best is None:
        raise InfeasibleTileError(
            f"no divisor triple fits xyz <= {budget} with e | x, e | y; "
            f"divisors x:{dx} y:{dy} z:{dz}"
        )
    x, y, z = best
    positions = (x // p.e) * (y // p.e)
    s_b = 2 * m2 * positions * z + positions * m2 + positions * z * p.r ** 2
    return TileConfig(x, y, z, s_b, e=p.e)


# -- schedule planning --------------------------------------------------------


def plan_direct_dataflow(shape: ConvShape, hw: HwModel, tile: TileConfig) -> Schedule:
    """Output-stationary schedule: partial sums resident, channel-sliced loads."""
    if not tile.divides_output(shape):
        raise ScheduleError(
            f"tile {tile.x}x{tile.y}x{tile.z} does not divide output "
            f"{shape.w_out}x{shape.h_out}x{shape.c_out}"
        )
    xp, yp = input_tile_dims(shape, tile.x, tile.y)
    kw = shape.w_ker * shape.h_ker
    resident = tile.volume + xp * yp + kw * tile.z
    if resident > tile.s_b:
        raise ScheduleError(
            f"stage 0 resident set {resident} words exceeds s_b={tile.s_b} "
            f"(outputs {tile.volume} + inputs {xp * yp} + weights {kw * tile.z})"
        )
    stages = []
    for c in range(shape.c_in):
        last = c == shape.c_in - 1
        stages.append(Stage(
            index=c,
            input_words=xp * yp,
            weight_words=kw * tile.z,
            flops=2 * kw * tile.volume,
            store_words=tile.volume if last else 0,
            resident_words=resident,
            note=f"channel {c}",
        ))
    n_blocks = (shape.w_out // tile.x) * (shape.h_out // tile.y) * (shape.c_out // tile.z)
    return Schedule(
        "direct", tile, stages, n_blocks, shape.n,
        meta={"input_tile": [xp, yp], "shape": f"{shape.w_out}x{shape.h_out}x{shape.c_out}"},
    )


def plan_winograd_dataflow(
    shape: ConvShape,
    p: WinogradParams,
    hw: HwModel,
    tile: TileConfig,
    shared_kernel_transform: bool = False,
) -> Schedule:
    """Per-tile-position stages with two m*m temporary accumulator arrays."""
    p.check_shape(shape)
    if not tile.divides_output(shape):
        raise ScheduleError(
            f"tile {tile.x}x{tile.y}x{tile.z} does not divide output "
            f"{shape.w_out}x{shape.h_out}x{shape.c_out}"
        )
    if tile.x % p.e or tile.y % p.e:
        raise ScheduleError(f"tile dims {tile.x}x{tile.y} not divisible by e={p.e}")
    m2 = p.m * p.m
    r2 = p.r ** 2
    positions = (tile.x // p.e) * (tile.y // p.e)
    temps = 2 * m2 * positions * tile.z
    weight_res = tile.z * r2 if shared_kernel_transform else positions * tile.z * r2
    resident = temps + positions * m2 + weight_res
    if resident > tile.s_b:
        raise ScheduleError(
            f"stage 0 resident set {resident} words exceeds s_b={tile.s_b} "
            f"(temporaries {temps} + inputs {positions * m2} + weights {weight_res})"
        )
    weight_words = weight_res  # loaded fresh each channel stage
    transform_flops = positions * m2 * (2 * m2 - 1)
    kernel_flops = (1 if shared_kernel_transform else positions) * tile.z * m2 * (2 * r2 - 1)
    product_flops = positions * tile.z * m2
    stages = []
    for c in range(shape.c_in):
        last = c == shape.c_in - 1
        flops = transform_flops + kernel_flops + product_flops
        if c > 0:
            flops += positions * tile.z * m2  # accumulate into the first array
        if last:
            flops += positions * tile.z * p.e ** 2 * (2 * m2 - 1)  # output transform
        stages.append(Stage(
            index=c,
            input_words=positions * m2,
            weight_words=weight_words,
            flops=flops,
            store_words=tile.volume if last else 0,
            resident_words=resident,
            note=f"channel {c}",
        ))
    n_blocks = (shape.w_out // tile.x) * (shape.h_out // tile.y) * (shape.c_out // tile.z)
    return Schedule(
        "winograd", tile, stages, n_blocks, shape.n,
        meta={
            "positions": positions,
            "temporary_words": temps,
            "shared_kernel_transform": shared_kernel_transform,
            "shape": f"{shape.w_out}x{shape.h_out}x{shape.c_out}",
        },
    )


# -- the simulator -------------------------------------------------------------


def simulate(schedule: Schedule, hw: HwModel) -> SimReport:
    """Walk the stage template, count every declared transfer exactly."""
    loads = stores = flops = 0
    peak_block = 0
    for stage in schedule.block_stages:
        if stage.resident_words > schedule.tile.s_b:
            raise ScheduleError(
                f"stage {stage.index}: resident {stage.resident_words} words "
                f"exceeds s_b={schedule.tile.s_b}"
            )
        loads += stage.load_words
        stores += stage.store_words
        flops += stage.flops
        peak_block = max(peak_block, stage.resident_words)
    rep = schedule.replication
    loads *= rep
    stores *= rep
    flops *= rep
    concurrent = min(hw.n_p, rep) if rep else 0
    peak = concurrent * peak_block
    threads = schedule.tile.threads if schedule.block_stages else 1
    proxy = hw.alpha * flops / (hw.n_p * threads) + hw.beta * (loads + stores)
    return SimReport(loads, stores, flops, peak, proxy)


# -- analytic I/O volumes --------------------------------------------------------


@dataclass
class IoEstimate:
    """Reading/store volumes: the mu*x-approximation estimate and the exact count."""

    reading_approx: Fraction
    reading_exact: int
    store: int
    optimal_total: float | None = None

    @property
    def total_approx(self) -> Fraction:
        return self.reading_approx + self.store

    @property
    def total_exact(self) -> int:
        return self.reading_exact + self.store

    def to_dict(self) -> dict:
        return {
            "reading_approx": float(self.reading_approx),
            "reading_exact": self.reading_exact,
            "store": self.store,
            "total_approx": float(self.total_approx),
            "total_exact": self.total_exact,
            "optimal_total": self.optimal_total,
        }


def dc_io_at_optimum(shape: ConvShape, hw: HwModel) -> float:
    """Total volume at xy = R*z, xyz = S/N_p (independent of any tile)."""
    r = reuse_factor(shape)
    hwc = shape.outputs_per_image
    kw = shape.w_ker * shape.h_ker
    reading = 2.0 * hwc * kw * shape.c_in / math.sqrt(float(r) * hw.s / hw.n_p)
    return (reading + hwc) * shape.n


def analytic_dc_io(shape: ConvShape, hw: HwModel, tile: TileConfig) -> IoEstimate:
    r = reuse_factor(shape)
    if not tile.divides_output(shape):
        raise ScheduleError("tile must divide the output dims")
    hwc = shape.outputs_per_image
    blocks = hwc // tile.volume
    kw = shape.w_ker * shape.h_ker
    reading_approx = blocks * kw * shape.c_in * (tile.z + Fraction(tile.x * tile.y) / r)
    xp, yp = input_tile_dims(shape, tile.x, tile.y)
    reading_exact = blocks * shape.c_in * (xp * yp + kw * tile.z)
    optimal = None
    if (Fraction(tile.x * tile.y) == r * tile.z
            and Fraction(tile.volume) == Fraction(hw.s, hw.n_p)):
        optimal = dc_io_at_optimum(shape, hw)
    return IoEstimate(
        reading_approx * shape.n, reading_exact * shape.n, hwc * shape.n, optimal
    )


def wa_io_at_optimum(shape: ConvShape, p: WinogradParams, hw: HwModel) -> float:
    """Total volume at xy = r^2 z, 2 m^2/e^2 xyz = S/N_p."""
    hwc = shape.outputs_per_image
    reading = (
        2.0 * hwc * shape.c_in * p.r * p.m
        / (p.e * math.sqrt(hw.s / hw.n_p))
    )
    return (reading + hwc) * shape.n


def analytic_wa_io(
    shape: ConvShape,
    p: WinogradParams,
    hw: HwModel,
    tile: TileConfig,
    shared_kernel_transform: bool = False,
) -> IoEstimate:
    p.check_shape(shape)
    if not tile.divides_output(shape) or tile.x % p.e or tile.y % p.e:
        raise ScheduleError("tile must divide the output dims and be e-aligned")
    hwc = shape.outputs_per_image
    blocks = hwc // tile.volume
    r2 = p.r ** 2
    m2 = p.m * p.m
    positions = (tile.x // p.e) * (tile.y // p.e)
    reading_approx = Fraction(
        blocks * (tile.x * tile.y * shape.c_in + tile.z * r2 * shape.c_in)
    )
    weight_exact = (
        blocks * tile.z * r2 * shape.c_in
        if shared_kernel_transform
        else blocks * positions * tile.z * r2 * shape.c_in
    )
    reading_exact = blocks * positions * m2 * shape.c_in + weight_exact
    optimal = None
    if (tile.x * tile.y == r2 * tile.z
            and Fraction(2 * m2 * tile.volume, p.e ** 2) == Fraction(hw.s, hw.n_p)):
        optimal = wa_io_at_optimum(shape, p, hw)
    return IoEstimate(
        reading_approx * shape.n, reading_exact * shape.n, hwc * shape.n, optimal
    )


# -- CSV trace ------------------------------------------------------------------


def stage_trace_rows(schedule: Schedule) -> list[dict]:
    """Per-stage trace of the block template (CSV-friendly dicts)."""
    return [
        {
            "stage": st.index,
            "input_words": st.input_words,
            "weight_words": st.weight_words,
            "store_words": st.store_words,
            "flops": st.flops,
            "resident_words": st.resident_words,
            "note": st.note,
        }
        for st in schedule.block_stages
    ]

"""I/O lower bounds, pebble-game oracles, tiled dataflow simulation and
auto-tuning for CNN convolutions (direct and Winograd)."""

from .model import ConvShape, WinogradParams, HwModel, reuse_factor, output_shape
from .dag import (
    Dag, StepPartition, INPUT, INTERNAL, OUTPUT,
    build_direct_conv_dag, build_winograd_dag,
    dc_internal_output_count, wa_internal_output_count,
    validate_multi_step_partition,
)
from .pebble import (
    min_io_pebbling, brute_force_p, check_hong_kung,
    verify_s_partition, s_partition_oracle, SPartition,
)
from .bounds import (
    phi_psi_dc, phi_psi_wa, dc_profile, wa_profile,
    t_upper_generic, t_upper_dc, t_upper_wa,
    lower_bound_dc, lower_bound_wa, BoundReport,
)
from .dataflow import (
    TileConfig, Schedule, SimReport,
    optimal_tile_dc, optimal_tile_wa,
    plan_direct_dataflow, plan_winograd_dataflow,
    simulate, analytic_dc_io, analytic_wa_io,
    dc_io_at_optimum, wa_io_at_optimum,
)
from .autotune import (
    ConfigSpace, Measurement, CostModel, TuneSession,
    build_space, measure, train, random_walk, explore, tune,
    exhaustive_oracle, random_search,
)

__version__ = "0.1.0"

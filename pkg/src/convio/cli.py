"""Command-line front end.

Subcommands: lower-bound, dag-stats, pebble, simulate, tune, report.
A key=value config file with sections can pre-fill any flag; explicit
flags always win. All randomness flows from --seed, and every output is
byte-identical across reruns with the same flags.

Exit codes: 0 success, 2 usage, 3 infeasibility or size cap, 4 internal.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field

from .model import ConvShape, WinogradParams, HwModel, GeometryError
from .dag import (
    Dag, INPUT, INTERNAL, OUTPUT, SizeCapError,
    build_direct_conv_dag, build_winograd_dag,
    dc_internal_output_count, wa_internal_output_count,
    validate_multi_step_partition, MultiStepViolation,
)
from .pebble import check_hong_kung, PebbleCapError, PebbleInfeasibleError
from .bounds import lower_bound_dc, lower_bound_wa
from .dataflow import (
    TileConfig, InfeasibleTileError, ScheduleError,
    optimal_tile_dc, optimal_tile_wa,
    plan_direct_dataflow, plan_winograd_dataflow,
    simulate, analytic_dc_io, analytic_wa_io, stage_trace_rows, input_tile_dims,
)
from .autotune import tune, TuneSession, TrainingError
from . import fixtures

INFEASIBLE_ERRORS = (
    GeometryError, SizeCapError, InfeasibleTileError, ScheduleError,
    PebbleCapError, PebbleInfeasibleError, TrainingError, MultiStepViolation,
)


class UsageError(ValueError):
    pass


# -- config files ----------------------------------------------------------------


@dataclass
class RunConfig:
    """Flat key=value settings grouped in sections; canonically serializable."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        sections: dict[str, dict[str, str]] = {}
        current = "run"
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith(("#", ";")):
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise UsageError(f"config line is not key=value: {raw!r}")
            key, value = line.split("=", 1)
            sections.setdefault(current, {})[key.strip()] = value.strip()
        return cls(sections)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        chunks = []
        for name in sorted(self.sections):
            body = self.sections[name]
            if not body:
                continue
            chunks.append(f"[{name}]")
            for key in sorted(body):
                chunks.append(f"{key} = {body[key]}")
            chunks.append("")
        return "\n".join(chunks)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def flat(self) -> dict[str, str]:
        out = {}
        for body in self.sections.values():
            out.update(body)
        return out


# -- flag parsing helpers -----------------------------------------------------------


def _parse_dims(text: str, n: int, what: str) -> tuple[int, ...]:
    parts = text.lower().split("x")
    if len(parts) != n:
        raise UsageError(f"{what} must look like {'x'.join(['N'] * n)}, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"bad integer in {what}: {text!r}") from exc
    if any(d < 1 for d in dims):
        raise UsageError(f"{what} dims must be >= 1: {text!r}")
    return dims


def _resolve(args, config: RunConfig, key: str, default=None, cast=str):
    """Flag value if given, else config value, else default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    raw = config.flat().get(key)
    if raw is not None:
        return cast(raw)
    return default


def _shape_from_args(args, config: RunConfig) -> ConvShape:
    out = _resolve(args, config, "out")
    ker = _resolve(args, config, "ker")
    cin = _resolve(args, config, "cin", cast=int)
    if out is None or ker is None or cin is None:
        raise UsageError("--out WxHxC, --ker KxK and --cin are required")
    w_out, h_out, c_out = _parse_dims(out, 3, "--out")
    w_ker, h_ker = _parse_dims(ker, 2, "--ker")
    stride = _resolve(args, config, "stride", 1, int)
    batch = _resolve(args, config, "batch", 1, int)
    return ConvShape.from_output(w_out, h_out, c_out, cin, w_ker, h_ker, stride, batch)


def _hw_from_args(args, config: RunConfig) -> HwModel:
    s = _resolve(args, config, "s", cast=int)
    if s is None:
        raise UsageError("--s (fast-memory words) is required")
    return HwModel(
        s=s,
        s_sm=_resolve(args, config, "ssm", cast=int),
        n_p=_resolve(args, config, "np", 1, int),
        alpha=_resolve(args, config, "alpha", 1.0, float),
        beta=_resolve(args, config, "beta", 4.0, float),
    )


def _winograd_from_args(args, config: RunConfig, shape: ConvShape) -> WinogradParams:
    e = _resolve(args, config, "e", cast=int)
    if e is None:
        raise UsageError("--e is required for the winograd algorithm")
    return WinogradParams(e, shape.w_ker)


def _algorithm(args, config: RunConfig) -> str:
    alg = _resolve(args, config, "alg", "direct")
    if alg not in ("direct", "winograd"):
        raise UsageError(f"--alg must be direct or winograd, got {alg!r}")
    return alg


def _config_from_args(args) -> RunConfig:
    path = getattr(args, "config", None)
    return RunConfig.load(path) if path else RunConfig()


def _emit(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------------


def cmd_lower_bound(args) -> int:
    config = _config_from_args(args)
    shape = _shape_from_args(args, config)
    hw_s = _resolve(args, config, "s", cast=int)
    if hw_s is None:
        raise UsageError("--s (fast-memory words) is required")
    alg = _algorithm(args, config)
    if alg == "direct":
        report = lower_bound_dc(shape, hw_s)
    else:
        report = lower_bound_wa(shape, _winograd_from_args(args, config, shape), hw_s)
    _emit(report.to_dict(), args.json)
    return 0


def cmd_dag_stats(args) -> int:
    config = _config_from_args(args)
    shape = _shape_from_args(args, config)
    alg = _algorithm(args, config)
    cap = _resolve(args, config, "cap", 10_000_000, int)
    if alg == "direct":
        dag = build_direct_conv_dag(shape, cap=cap)
        expected = dc_internal_output_count(shape)
    else:
        p = _winograd_from_args(args, config, shape)
        dag = build_winograd_dag(shape, p, cap=cap)
        expected = wa_internal_output_count(shape, p)
    counted = dag.count_vertices({INTERNAL, OUTPUT})
    partition = validate_multi_step_partition(dag)
    payload = {
        "algorithm": alg,
        "vertices": dag.n_vertices,
        "inputs": dag.count_vertices({INPUT}),
        "internal": dag.count_vertices({INTERNAL}),
        "outputs": dag.count_vertices({OUTPUT}),
        "internal_plus_output": counted,
        "closed_form": expected,
        "match": "yes" if counted == expected else "no",
        "steps": partition.labels,
    }
    if args.export:
        dag.save(args.export)
        payload["exported"] = args.export
    _emit(payload, args.json)
    return 0


def cmd_pebble(args) -> int:
    config = _config_from_args(args)
    s = _resolve(args, config, "s", cast=int)
    if s is None:
        raise UsageError("--s (red pebbles) is required")
    if args.dag:
        dag = Dag.load(args.dag)
        name = args.dag
    else:
        name = _resolve(args, config, "fixture", "product2")
        corpus = fixtures.corpus()
        if name not in corpus:
            raise UsageError(
                f"unknown fixture {name!r}; available: {', '.join(sorted(corpus))}"
            )
        dag = corpus[name].dag
    result = check_hong_kung(dag, s)
    payload = {
        "dag": name,
        "vertices": dag.n_vertices,
        "s": s,
        "q_min": result.q_min,
        "p_2s": result.p_2s,
        "bound": s * (result.p_2s - 1),
        "holds": result.holds,
    }
    _emit(payload, args.json)
    return 0


def _plan_and_simulate(shape, hw, alg, tile, winograd, shared_j):
    if alg == "direct":
        schedule = plan_direct_dataflow(shape, hw, tile)
        est = analytic_dc_io(shape, hw, tile)
    else:
        schedule = plan_winograd_dataflow(shape, winograd, hw, tile, shared_j)
        est = analytic_wa_io(shape, winograd, hw, tile, shared_j)
    return schedule, simulate(schedule, hw), est


def cmd_simulate(args) -> int:
    config = _config_from_args(args)
    shape = _shape_from_args(args, config)
    hw = _hw_from_args(args, config)
    alg = _algorithm(args, config)
    winograd = _winograd_from_args(args, config, shape) if alg == "winograd" else None
    shared_j = bool(getattr(args, "shared_j", False))

    tile_text = _resolve(args, config, "tile")
    if tile_text:
        x, y, z = _parse_dims(tile_text, 3, "--tile")
        s_b = _resolve(args, config, "sb", cast=int)
        if s_b is None:
            xp, yp = input_tile_dims(shape, x, y)
            s_b = x * y * z + xp * yp + shape.w_ker * shape.h_ker * z
            if alg == "winograd":
                m2 = winograd.m ** 2
                pos = (x // winograd.e) * (y // winograd.e) if x % winograd.e == 0 and y % winograd.e == 0 else 1
                s_b = 2 * m2 * pos * z + pos * m2 + pos * z * winograd.r ** 2
        tile = TileConfig(x, y, z, s_b, e=winograd.e if winograd else None)
    elif alg == "direct":
        tile = optimal_tile_dc(shape, hw)
    else:
        tile = optimal_tile_wa(shape, winograd, hw)

    schedule, report, est = _plan_and_simulate(shape, hw, alg, tile, winograd, shared_j)
    if alg == "direct":
        bound = lower_bound_dc(shape, hw.s)
    else:
        bound = lower_bound_wa(shape, winograd, hw.s)
    ratio = report.q_total / bound.omega if bound.omega > 0 else None
    payload = {
        "schedule": schedule.summary(),
        "simulated": report.to_dict(),
        "analytic": est.to_dict(),
        "lower_bound": bound.to_dict(),
        "ratio_sim_over_omega": ratio,
    }
    if args.trace:
        rows = stage_trace_rows(schedule)
        with open(args.trace, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["stage"])
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        payload["trace"] = args.trace
    _emit(payload, args.json)
    return 0


def cmd_tune(args) -> int:
    config = _config_from_args(args)
    shape = _shape_from_args(args, config)
    hw = _hw_from_args(args, config)
    alg = _algorithm(args, config)
    winograd = _winograd_from_args(args, config, shape) if alg == "winograd" else None
    n_s = _resolve(args, config, "ns", 16, int)
    budget = _resolve(args, config, "budget", cast=int)
    if budget is None:
        raise UsageError("--budget (total measurements) is required")
    if budget < n_s:
        raise UsageError(f"--budget {budget} must be >= --ns {n_s}")
    seed = _resolve(args, config, "seed", 0, int)
    patience = _resolve(args, config, "patience", 50, int)
    resume = None
    if args.resume:
        resume = TuneSession.load_dataset(args.resume)
    session = tune(
        shape, hw, alg, budget, seed,
        winograd=winograd, n_s=n_s, patience=patience,
        resume_measurements=resume,
    )
    if args.csv:
        session.write_history_csv(args.csv)
    if args.save_dataset:
        session.write_dataset(args.save_dataset)
    sys.stdout.write(session.to_best_json() + "\n")
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(session.to_best_json() + "\n")
    return 0


def cmd_report(args) -> int:
    """Combined bounds + auto-tile + simulation report for one config."""
    config = _config_from_args(args)
    shape = _shape_from_args(args, config)
    hw = _hw_from_args(args, config)
    alg = _algorithm(args, config)
    winograd = _winograd_from_args(args, config, shape) if alg == "winograd" else None
    if alg == "direct":
        tile = optimal_tile_dc(shape, hw)
        bound = lower_bound_dc(shape, hw.s)
    else:
        tile = optimal_tile_wa(shape, winograd, hw)
        bound = lower_bound_wa(shape, winograd, hw.s)
    schedule, report, est = _plan_and_simulate(shape, hw, alg, tile, winograd, False)
    payload = {
        "config": {
            "algorithm": alg,
            "shape": {
                "out": f"{shape.w_out}x{shape.h_out}x{shape.c_out}",
                "ker": f"{shape.w_ker}x{shape.h_ker}",
                "cin": shape.c_in,
                "stride": shape.stride,
                "batch": shape.n,
            },
            "hardware": {"s": hw.s, "s_sm": hw.s_sm, "n_p": hw.n_p},
        },
        "tile": tile.to_dict(),
        "lower_bound": bound.to_dict(),
        "analytic": est.to_dict(),
        "simulated": report.to_dict(),
        "ratio_sim_over_omega": report.q_total / bound.omega if bound.omega else None,
        "ratio_sim_over_exact_bound": (
            report.q_total / bound.q_exact if bound.q_exact > 0 else None
        ),
    }
    _emit(payload, args.json)
    return 0


# -- parser ------------------------------------------------------------------------


def _add_shape_flags(p):
    p.add_argument("--out", help="output dims WxHxC")
    p.add_argument("--ker", help="kernel dims KxK")
    p.add_argument("--cin", type=int, help="input channels")
    p.add_argument("--stride", type=int, help="stride (default 1)")
    p.add_argument("--batch", type=int, help="batch size (default 1)")
    p.add_argument("--alg", choices=("direct", "winograd"))
    p.add_argument("--e", type=int, help="Winograd output tile edge")
    p.add_argument("--config", help="key=value config file; flags win")
    p.add_argument("--json", help="also write the JSON payload to this path")


def _add_hw_flags(p):
    p.add_argument("--s", type=int, help="fast-memory words")
    p.add_argument("--ssm", type=int, help="shared-memory words per SM")
    p.add_argument("--np", type=int, help="active processors (default 1)")
    p.add_argument("--alpha", type=float, help="cost per flop (default 1)")
    p.add_argument("--beta", type=float, help="cost per word moved (default 4)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convio",
        description="I/O lower bounds, pebble oracles, dataflow simulation "
                    "and auto-tuning for CNN convolutions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lower-bound", help="closed-form and composite I/O lower bounds")
    _add_shape_flags(p)
    p.add_argument("--s", type=int, help="fast-memory words")
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("dag-stats", help="build a DAG and cross-check the count lemmas")
    _add_shape_flags(p)
    p.add_argument("--cap", type=int, help="vertex cap (default 1e7)")
    p.add_argument("--export", help="write the dag in adjacency text format")
    p.set_defaults(func=cmd_dag_stats)

    p = sub.add_parser("pebble", help="exact pebbling + S-partition oracles")
    p.add_argument("--fixture", help="bundled fixture name (default product2)")
    p.add_argument("--dag", help="adjacency text file with a user dag")
    p.add_argument("--s", type=int, help="red pebbles")
    p.add_argument("--config", help="key=value config file; flags win")
    p.add_argument("--json", help="also write the JSON payload to this path")
    p.set_defaults(func=cmd_pebble)

    p = sub.add_parser("simulate", help="plan a dataflow and count its traffic")
    _add_shape_flags(p)
    _add_hw_flags(p)
    p.add_argument("--tile", help="tile XxYxZ (default: auto-optimal)")
    p.add_argument("--sb", type=int, help="per-block fast-memory words for --tile")
    p.add_argument("--shared-j", action="store_true",
                   help="share kernel transforms across tile positions (winograd)")
    p.add_argument("--trace", help="write the per-stage CSV trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", help="auto-tune a tile configuration")
    _add_shape_flags(p)
    _add_hw_flags(p)
    p.add_argument("--ns", type=int, help="parallel walks per iteration (default 16)")
    p.add_argument("--budget", type=int, help="total simulator measurements")
    p.add_argument("--patience", type=int, help="stop after this many stale iterations")
    p.add_argument("--seed", type=int, help="master RNG seed (default 0)")
    p.add_argument("--csv", help="write the tuning history CSV here")
    p.add_argument("--resume", help="resume from a saved dataset file")
    p.add_argument("--save-dataset", help="save the measurement dataset here")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("report", help="bounds + auto tile + simulation, one JSON")
    _add_shape_flags(p)
    _add_hw_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except INFEASIBLE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal assertion
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

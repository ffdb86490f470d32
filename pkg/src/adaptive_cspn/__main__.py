"""命令行入口：场景生成、传播、拟合、梯度校验、效率对比与消融实验。

Exit codes: 0 success, 1 usage (bad flags, missing files, invalid
configuration), 2 malformed input files, 3 numeric failure (divergence or a
failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from adaptive_cspn.analysis.cost import count_ops
from adaptive_cspn.automation.ablation import AblationSettings, run_ablation_suite
from adaptive_cspn.automation.bench import (
    DEFAULT_LATENCY_BUDGET,
    HARD_SELECTION_NOTE_RATIO,
    bench,
    hard_selection_gap,
    write_bench_table,
)
from adaptive_cspn.automation.report_builder import write_markdown_report
from adaptive_cspn.config.loader import ConfigError, RunConfig, load_run_config, load_scene_spec
from adaptive_cspn.core.errors import CSPNError, DivergenceError
from adaptive_cspn.core.grid import AffinityField, DepthGrid, SparseObservations
from adaptive_cspn.core.params import AssemblyWeights, PropagationConfig
from adaptive_cspn.data_gen.scene import SceneSpec, make_scene
from adaptive_cspn.engine.counters import ExecutionTrace, OpCounter
from adaptive_cspn.formats.params import (
    ManifestError,
    load_params,
    save_params,
    weights_from_array,
)
from adaptive_cspn.formats.rasters import (
    RasterFormatError,
    RasterRangeError,
    read_depth_raster,
    read_float_raster,
    write_depth_raster,
)
from adaptive_cspn.formats.scenes import load_scene, save_scene
from adaptive_cspn.formats.tables import write_csv
from adaptive_cspn.monitoring.metrics import record_epoch, record_error, record_run, write_metrics
from adaptive_cspn.propagation.context_aware import run_ca_cspn
from adaptive_cspn.propagation.resource_aware import (
    budget_round,
    run_ra_cspn_naive,
    run_ra_cspn_scheduled,
    select_configuration,
)
from adaptive_cspn.propagation.vanilla import run_cspn
from adaptive_cspn.training.fit import HISTORY_COLUMNS, fit
from adaptive_cspn.training.gradcheck import build_gradcheck_instance, finite_difference_check
from adaptive_cspn.utils.logging import setup_logging

logger = logging.getLogger("adaptive_cspn")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3

GRADCHECK_THRESHOLD = 1e-5


class ApplicationError(Exception):
    """应用级异常，携带退出码，便于统一退出控制。"""

    def __init__(self, message: str, exit_code: int = EXIT_USAGE):
        super().__init__(message)
        self.exit_code = exit_code


class CLIArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors through ApplicationError."""

    def error(self, message: str):  # type: ignore[override]
        raise ApplicationError(f"{self.prog}: {message}", EXIT_USAGE)


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _existing_file(path: Optional[str], what: str) -> Optional[Path]:
    if path is None:
        return None
    target = Path(path)
    if not target.is_file():
        raise ApplicationError(f"{what} not found: {path}", EXIT_USAGE)
    return target


def _existing_dir(path: str, what: str) -> Path:
    target = Path(path)
    if not target.is_dir():
        raise ApplicationError(f"{what} not found: {path}", EXIT_USAGE)
    return target


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_make_scene(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec_path = _existing_file(args.spec, "scene descriptor")
    spec = load_scene_spec(spec_path) if spec_path is not None else SceneSpec()
    scene = make_scene(spec, args.seed)
    written = save_scene(args.out, scene)
    logger.info("scene seed=%d written: %s", args.seed, ", ".join(p.name for p in written.values()))
    return EXIT_OK


def _propagation_inputs(
    args: argparse.Namespace, config: PropagationConfig
) -> Tuple[DepthGrid, AffinityField, Optional[SparseObservations], AssemblyWeights]:
    h0_path = _existing_file(args.h0, "h0 raster")
    affinity_path = _existing_file(args.affinity, "affinity grid")
    sparse_path = _existing_file(args.sparse, "sparse raster")
    weights_path = _existing_file(args.weights, "weights grid")

    h0, _ = read_depth_raster(h0_path)
    raw = AffinityField(read_float_raster(affinity_path))
    obs = None
    if sparse_path is not None:
        sparse, mask = read_depth_raster(sparse_path)
        obs = SparseObservations.from_depth(np.where(mask, sparse.values[:, :, 0], 0.0))
    if weights_path is not None:
        weights = weights_from_array(read_float_raster(weights_path), config)
    else:
        weights = AssemblyWeights.uniform(h0.height, h0.width, config)
    return h0, raw, obs, weights


def cmd_propagate(args: argparse.Namespace, cfg: RunConfig) -> int:
    config = replace(
        cfg.propagation,
        kernel_sizes=args.kernels or cfg.propagation.kernel_sizes,
        iteration_checkpoints=args.iters or cfg.propagation.iteration_checkpoints,
    )
    h0, raw, obs, weights = _propagation_inputs(args, config)
    counter = OpCounter()
    started = time.perf_counter()
    trace_fields: Dict[str, object] = {}

    if args.mode == "cspn":
        output = run_cspn(h0, raw, obs, config.k_max, config.n_steps, counter, config)
        trace_fields.update(kernel_size=config.k_max, n_steps=config.n_steps)
    elif args.mode == "ca":
        output = run_ca_cspn(h0, raw, obs, weights, config, counter)
        trace_fields.update(weights=weights)
    else:
        selection = select_configuration(weights, config)
        if args.budget_latency is not None:
            selection = budget_round(selection, config, args.budget_latency, args.budget_memory)
        runner = run_ra_cspn_naive if args.naive else run_ra_cspn_scheduled
        output = runner(h0, raw, obs, selection, config, counter)
        trace_fields.update(selection=selection)

    trace = ExecutionTrace(
        mode=args.mode,
        counter=counter,
        wall_time_s=time.perf_counter() - started,
        **trace_fields,
    )
    report = count_ops(trace, config)
    record_run(report)
    write_depth_raster(args.out, output, output.values[:, :, 0] > 0)
    cost_path = Path(args.cost_csv) if args.cost_csv else Path(args.out).with_suffix(".cost.csv")
    write_csv(cost_path, [report.as_row()], list(report.as_row().keys()))
    logger.info(
        "propagate mode=%s cost=%.4f mult_adds=%d -> %s",
        args.mode,
        report.expected_latency,
        report.actual_mult_adds,
        args.out,
    )
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = load_scene(_existing_dir(args.scene, "scene directory"))
    obj = cfg.objective
    overrides = {
        "eta2": args.eta2,
        "latency_budget": args.budget_latency,
        "memory_budget": args.budget_memory,
    }
    obj = replace(obj, **{k: v for k, v in overrides.items() if v is not None})
    epochs = args.epochs if args.epochs is not None else cfg.fit.epochs
    step = args.step if args.step is not None else cfg.fit.step_size
    seed = args.seed if args.seed is not None else cfg.fit.seed

    result = fit(
        scene,
        cfg.propagation,
        obj,
        epochs,
        step,
        seed,
        freeze_confidence=args.freeze_confidence,
        workers=args.workers or cfg.fit.workers,
        on_epoch=lambda m: record_epoch(m.loss, m.e_cost, m.rmse_mm),
        init_noise=cfg.fit.init_noise,
    )
    out = Path(args.out)
    write_csv(out / "history.csv", [m.as_row() for m in result.history], HISTORY_COLUMNS)
    if result.failed:
        raise DivergenceError(result.message, result.failed_epoch or 0)
    save_params(out, result.params, cfg.propagation)
    final = result.final
    print(
        f"epochs={epochs} loss={final.loss:.6g} rmse_mm={final.rmse_mm:.3f} "
        f"mae_mm={final.mae_mm:.3f} e_cost={final.e_cost:.4f}"
    )
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace, cfg: RunConfig) -> int:
    params, instance, config, obj = build_gradcheck_instance(
        args.seed, args.size, with_budgets=args.with_budgets
    )
    report = finite_difference_check(
        params, instance, config, obj, args.eps, args.samples, args.seed, scale="coordinate"
    )
    print(f"max relative error: {report.max_error:.3e}")
    for name, error in report.per_family.items():
        logger.info("gradcheck %s: %.3e over %d coordinates", name, error, report.coordinates[name])
    if not report.passed(GRADCHECK_THRESHOLD):
        raise ApplicationError(
            f"gradient check failed: {report.max_error:.3e} >= {GRADCHECK_THRESHOLD}", EXIT_NUMERIC
        )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace, cfg: RunConfig) -> int:
    scene = load_scene(_existing_dir(args.scene, "scene directory"))
    params, config = load_params(_existing_dir(args.params, "parameter directory"))
    if params.raw.shape != scene.shape:
        raise ApplicationError(
            f"parameters are {params.raw.shape}, scene is {scene.shape}", EXIT_USAGE
        )
    budget = args.budget_latency
    if budget is None:
        budget = cfg.objective.latency_budget or DEFAULT_LATENCY_BUDGET
    rows = bench(scene, params, config, budget, args.budget_memory, workers=cfg.fit.workers)
    write_bench_table(rows, args.out)
    for row in rows:
        ratio = "-" if row.mult_add_ratio is None else f"{row.mult_add_ratio:.3f}"
        print(f"{row.method}: rmse_mm={row.rmse_mm:.3f} mult_adds={row.mult_adds} ratio={ratio}")
    gap = hard_selection_gap([row.as_row() for row in rows])
    if gap is not None and gap > HARD_SELECTION_NOTE_RATIO:
        print(
            f"note: RA-CSPN runs the argmax of the fitted soft weights without retraining "
            f"(rmse {gap:.1f}x CA-CSPN)"
        )
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace, cfg: RunConfig) -> int:
    spec_path = _existing_file(args.spec, "scene descriptor")
    spec = load_scene_spec(spec_path) if spec_path is not None else SceneSpec()
    settings = AblationSettings(
        epochs=args.epochs if args.epochs is not None else cfg.fit.epochs,
        step_size=args.step if args.step is not None else cfg.fit.step_size,
        workers=cfg.fit.workers,
    )
    payload = run_ablation_suite(
        spec, args.seed, settings, cfg.propagation, cfg.objective, output_path=args.out
    )
    if args.report:
        write_markdown_report(payload, args.report)
    for experiment in payload["experiments"]:
        verdict = "passed" if experiment["metrics"].get("passed") else "failed"
        print(f"{experiment['name']}: {verdict}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "make-scene": cmd_make_scene,
    "propagate": cmd_propagate,
    "fit": cmd_fit,
    "gradcheck": cmd_gradcheck,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def build_parser() -> CLIArgumentParser:
    parser = CLIArgumentParser(prog="adaptive-cspn", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="run configuration file (YAML or JSON)")
    parser.add_argument("--log-level", default=None, help="logging level, e.g. DEBUG")
    parser.add_argument("--log-file", default=None)
    parser.add_argument("--metrics-file", default=None, help="write Prometheus metrics here")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-scene", help="generate a synthetic scene directory")
    p.add_argument("--spec", help="scene descriptor (YAML or JSON)")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("propagate", help="run one propagation variant")
    p.add_argument("--mode", choices=("cspn", "ca", "ra"), required=True)
    p.add_argument("--h0", required=True)
    p.add_argument("--affinity", required=True)
    p.add_argument("--sparse")
    p.add_argument("--weights")
    p.add_argument("--kernels", type=_int_list)
    p.add_argument("--iters", type=_int_list)
    p.add_argument("--budget-latency", type=float)
    p.add_argument("--budget-memory", type=float)
    p.add_argument("--naive", action="store_true", help="use the dense resource-aware oracle")
    p.add_argument("--cost-csv")
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="fit per-pixel parameters on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--budget-latency", type=float)
    p.add_argument("--budget-memory", type=float)
    p.add_argument("--freeze-confidence", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--seed", type=_u64, required=True)
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--with-budgets", action="store_true")

    p = sub.add_parser("bench", help="efficiency comparison table")
    p.add_argument("--scene", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--budget-latency", type=float)
    p.add_argument("--budget-memory", type=float)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ablate", help="paired-seed ablation suite")
    p.add_argument("--spec")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--out", required=True, help="JSON results")
    p.add_argument("--report", help="markdown report")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one subcommand and return its exit code."""
    exit_code = EXIT_OK
    metrics_file: Optional[str] = None
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        metrics_file = args.metrics_file
        try:
            cfg = load_run_config(args.config)
        except ConfigError as exc:
            raise ApplicationError(f"Configuration loading failed: {exc}", EXIT_USAGE) from exc
        setup_logging(args.log_level or cfg.logging.level, args.log_file or cfg.logging.file)
        logger.debug("command %s with config %s", args.command, cfg.source or "<defaults>")
        exit_code = COMMANDS[args.command](args, cfg)
    except ApplicationError as exc:
        exit_code = exc.exit_code
        logger.error("%s", exc)
    except ConfigError as exc:
        exit_code = EXIT_USAGE
        logger.error("configuration error (%s): %s", exc.category, exc)
    except (RasterFormatError, RasterRangeError, ManifestError) as exc:
        exit_code = EXIT_FORMAT
        record_error(type(exc).__name__, "formats")
        logger.error("%s", exc)
    except DivergenceError as exc:
        exit_code = EXIT_NUMERIC
        record_error(type(exc).__name__, "training")
        logger.error("numeric failure at epoch %d: %s", exc.epoch, exc)
    except CSPNError as exc:
        exit_code = EXIT_USAGE
        logger.error("%s", exc)
    finally:
        if metrics_file:
            try:
                write_metrics(metrics_file)
            except OSError as exc:
                logger.warning("failed to write metrics to %s: %s", metrics_file, exc)
    return exit_code


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
cli.py: Command-line front end of risforge.

Subcommands:
    heatmap   capacity over an azimuth/elevation scan of one panel's quantized steering
    compare   energy efficiency and reciprocal condition number, single vs multi RIS,
              over an LNA gain sweep
    converge  final capacity of codebook, RMS, SCSM and BG versus search budget
    eval      metrics of an explicit phase configuration
    optimize  run one algorithm and store a run record per seed
    codebook  export a panel codebook

Every subcommand writes plot-ready CSV (or JSON with --format json) to --out,
or to stdout when --out is omitted. Rows are written in a fixed order, so
reruns with the same inputs produce identical files.

Configuration can be set via:
    1. Command line arguments (highest priority)
    2. Environment variables (RISFORGE_*, also read from a .env file)
    3. Configuration file (~/.config/risforge/config.json)
    4. Default values (lowest priority)

Exit codes: 0 success, 2 configuration or validation error, 3 numeric error.
"""
import os
import io
import sys
import csv
import json
import math
import logging
import argparse
from datetime import datetime, timezone
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from logging.handlers import TimedRotatingFileHandler

from dotenv import load_dotenv
from pydantic import ValidationError

from codebook import AngleGrid, build_codebook, quantized_steering, write_codebook_csv
from config import CONFIG_PATH, RisforgeConfig, __version__
from errors import ConfigurationError, NumericError
from geometry_channel import PhaseConfig, Vec3, synth_channels, with_phase_bits, with_ue_position
from metrics import icdf_at
from optimizers import (
    Budget,
    LinkEvaluator,
    build_objective,
    greedy_split,
    run_algorithm,
    write_trace_csv,
)
from scenario_io import RunRecord, ScenarioConfig, load_run, load_scenario, save_run, scenario_hash

logger = logging.getLogger("risforge")

SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"
CONVERGE_ALGORITHMS = ("codebook", "rms", "scsm", "bg")


def parse_seeds(text):
    """Parse ``n``, ``a..b`` (inclusive) or a comma separated list of seeds."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"Empty seed range '{part}'")
            seeds.extend(range(lo, hi + 1))
        elif part:
            seeds.append(int(part))
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("At least one non-negative seed is required")
    return seeds


def parse_floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def parse_ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def parse_positions(text):
    """``x,y,z;x,y,z`` -> list of Vec3."""
    positions = []
    for chunk in text.split(";"):
        if chunk.strip():
            positions.append(Vec3.model_validate(parse_floats(chunk)))
    return positions


def parse_algorithm_bits(text):
    """``name=B,name=B`` -> {name: B}."""
    bits = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, sep, value = part.partition("=")
        if not sep or not value.strip().isdigit():
            raise argparse.ArgumentTypeError(f"Expected algorithm=bits, got '{part.strip()}'")
        bits[name.strip()] = int(value)
    return bits


def parse_range(text):
    lo, hi = parse_floats(text)
    return lo, hi


def parse_args(argv=None):
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="Path to a scenario (.scn) file")
    common.add_argument("--seed", type=parse_seeds, help="Seed, range a..b or list a,b,c")
    common.add_argument("--out", help="Output path (stdout when omitted)")
    common.add_argument("--format", choices=["csv", "json"], default="csv", help="Output format")
    common.add_argument("--config", default=CONFIG_PATH, help="Path to config file")
    common.add_argument("--threads", type=int, help="Worker threads (overrides RISFORGE_THREADS)")
    common.add_argument("--log-level", help="Logging level")
    common.add_argument("--no-log", action="store_true", help="Disable the log file")

    parser = argparse.ArgumentParser(
        prog="risforge",
        description="Active multi-RIS MIMO link simulator and phase-configuration optimizer."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("heatmap", parents=[common], help="Capacity over an angular scan")
    p.add_argument("--panel", required=True, help="Panel id to activate")
    p.add_argument("--alpha-range", type=parse_range, default=(-180.0, 180.0), help="Azimuth span in degrees, lo,hi")
    p.add_argument("--beta-range", type=parse_range, default=(-90.0, 90.0), help="Elevation span in degrees, lo,hi")
    p.add_argument("--steps", type=parse_ints, default=[37, 19], help="Scan points: n or n_alpha,n_beta")
    p.add_argument("--bits", type=int, help="Phase resolution override")

    p = sub.add_parser("compare", parents=[common], help="Single vs multi RIS over a gain sweep")
    p.add_argument("--single", help="Single-RIS scenario file")
    p.add_argument("--multi", help="Multi-RIS scenario file")
    p.add_argument("--gains", type=parse_floats, default=[0.0, 6.0, 12.0, 18.0, 21.0], help="LNA gains in dB")
    p.add_argument("--ue-positions", type=parse_positions, help="UE positions x,y,z;x,y,z")

    p = sub.add_parser("converge", parents=[common], help="Capacity versus search budget")
    p.add_argument("--t-values", type=parse_ints, default=[4, 9, 16, 25, 36, 49], help="Samples per panel")
    p.add_argument("--algorithms", default=",".join(CONVERGE_ALGORITHMS), help="Comma separated algorithms")
    p.add_argument("--bits", type=int, help="Phase resolution override for every panel")
    p.add_argument("--algorithm-bits", type=parse_algorithm_bits, default={},
                   help="Per-algorithm phase resolution, e.g. codebook=3,rms=2,scsm=2,bg=1")

    p = sub.add_parser("eval", parents=[common], help="Metrics of an explicit configuration")
    p.add_argument("--configs", required=True, help="JSON file with per-panel configs or a run record")

    p = sub.add_parser("optimize", parents=[common], help="Run one algorithm and store run records")
    p.add_argument("--algorithm", default="codebook", help="Algorithm name")
    p.add_argument("--t", type=int, help="Samples per panel for rms, scsm and bg")
    p.add_argument("--trace", action="store_true", help="Also write the running-best trace of each run as CSV")

    p = sub.add_parser("codebook", parents=[common], help="Export a panel codebook as CSV")
    p.add_argument("--panel", required=True, help="Panel id")

    return parser.parse_args(argv)


def setup_logging(config, config_path):
    """Console handler plus an optional daily-rotated log file next to the config file."""
    root = logging.getLogger()
    root.setLevel(config.log_level)
    for handler in list(root.handlers):
        if getattr(handler, "_risforge", False):
            root.removeHandler(handler)
            handler.close()

    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    console._risforge = True
    root.addHandler(console)

    if config.log_enabled:
        log_dir = os.path.dirname(os.path.abspath(config_path))
        os.makedirs(log_dir, exist_ok=True)
        handler = TimedRotatingFileHandler(
            os.path.join(log_dir, "risforge.log"),
            when="D",
            interval=1,
            backupCount=config.log_retention_days
        )
        handler.setFormatter(logging.Formatter(
            "%(asctime)s %(levelname)s %(name)s: %(message)s", datefmt="%Y-%m-%d %H:%M:%S"
        ))
        handler._risforge = True
        root.addHandler(handler)


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows, columns, out, fmt):
    """Write ``rows`` (dicts) as CSV or a JSON array; ``out`` None means stdout."""
    buffer = io.StringIO()
    if fmt == "json":
        json.dump([{c: r[c] for c in columns} for r in rows], buffer, indent=2)
        buffer.write("\n")
    else:
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_format_value(r[c]) for c in columns])
    _emit(buffer.getvalue(), out)


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _require(value, flag):
    if value is None:
        raise ConfigurationError(f"Missing required option {flag}")
    return value


def _load_scenario(path, settings):
    """Load a scenario; config values override its analysis section."""
    scenario = load_scenario(path)
    update = {key: getattr(settings, key) for key in ("rank_tau", "icdf_level")
              if getattr(settings, key) is not None}
    return scenario.model_copy(update=update) if update else scenario


def _geometry_for(scenario, seed=None, ue_position=None, panels=None):
    update = {}
    if seed is not None:
        update["seed"] = seed
    if panels is not None:
        update["panels"] = tuple(panels)
    geom = scenario.geometry
    if update:
        geom = geom.model_validate({**geom.model_dump(), **update})
    if ue_position is not None:
        geom = with_ue_position(geom, ue_position)
    return geom


def _seeds(args, scenario):
    return args.seed if args.seed else [scenario.geometry.seed]


def _map(func, items, workers):
    """Order-preserving map, threaded when ``workers`` > 1."""
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def _objective(scenario, evaluator, seed):
    return build_objective(evaluator, scenario.objective_metric, scenario.noise_objective_std, seed)


def cmd_heatmap(args, settings):
    scenario = _load_scenario(_require(args.scenario, "--scenario"), settings)
    panel = scenario.geometry.panel(args.panel)
    if args.bits is not None:
        panel = with_phase_bits([panel], args.bits)[0]
    steps = args.steps * 2 if len(args.steps) == 1 else args.steps
    if len(steps) != 2 or min(steps) < 2:
        raise ConfigurationError("--steps needs values >= 2")

    geom = _geometry_for(scenario, seed=_seeds(args, scenario)[0], panels=[panel])
    channels = synth_channels(geom)
    evaluator = LinkEvaluator(channels, geom.panels, scenario.system)
    alphas = [args.alpha_range[0] + i * (args.alpha_range[1] - args.alpha_range[0]) / (steps[0] - 1)
              for i in range(steps[0])]
    betas = [args.beta_range[0] + i * (args.beta_range[1] - args.beta_range[0]) / (steps[1] - 1)
             for i in range(steps[1])]

    def row(point):
        alpha_deg, beta_deg = point
        config = quantized_steering(geom.panels[0], math.radians(alpha_deg), math.radians(beta_deg),
                                    channels.wavelength)
        return {"alpha_deg": alpha_deg, "beta_deg": beta_deg,
                "capacity_bpshz": evaluator.capacity([config])}

    points = [(a, b) for b in betas for a in alphas]
    rows = _map(row, points, settings.worker_count(len(points)))
    write_rows(rows, ["alpha_deg", "beta_deg", "capacity_bpshz"], args.out, args.format)


def _codebooks(scenario, panels, wavelength, t=None):
    """Codebooks from the scenario grids, or square sqrt(T) grids when ``t`` is given."""
    books = []
    for panel in panels:
        if t is None:
            grid = scenario.grid_for(panel.id)
        else:
            base = scenario.grids.get(panel.id)
            grid = AngleGrid.square(t, *((base.alpha0, base.beta0) if base else ()))
        books.append(build_codebook(panel, grid, wavelength))
    return books


def compare_deployment(scenario, gain_db, seeds, ue_positions, level):
    """EE samples (one per UE position and seed) summarized at ``level``, plus mean epsilon."""
    panels = [p.model_copy(update={"lna_gain_db": gain_db}) for p in scenario.geometry.panels]
    ees, epsilons = [], []
    for position in ue_positions:
        for seed in seeds:
            geom = _geometry_for(scenario, seed=seed, ue_position=position, panels=panels)
            channels = synth_channels(geom)
            evaluator = LinkEvaluator(channels, geom.panels, scenario.system)
            result = run_algorithm(
                "codebook", _objective(scenario, evaluator, seed), geom.panels,
                codebooks=_codebooks(scenario, geom.panels, channels.wavelength),
            )
            report = evaluator.report(result.configs, scenario.power, scenario.rank_tau)
            ees.append(report.ee_bits_per_joule)
            epsilons.append(report.epsilon)
    return icdf_at(ees, level), sum(epsilons) / len(epsilons)


def cmd_compare(args, settings):
    single = _load_scenario(_require(args.single or args.scenario, "--single"), settings)
    multi = _load_scenario(_require(args.multi, "--multi"), settings)
    count = [sum(p.n_elements for p in s.geometry.panels) for s in (single, multi)]
    labels = ["single", "multi"]
    if count[0] != count[1]:
        logger.warning("Unbalanced comparison: %d single-RIS elements vs %d multi-RIS elements", *count)
        labels = [f"{label}-unbalanced" for label in labels]
    if single.icdf_level != multi.icdf_level:
        logger.warning("Scenarios summarize EE at different levels: %g vs %g", single.icdf_level, multi.icdf_level)

    cells = [(label, scenario, gain)
             for label, scenario in zip(labels, (single, multi))
             for gain in args.gains]

    def run(cell):
        label, scenario, gain = cell
        positions = args.ue_positions or [scenario.geometry.ue_position]
        ee, eps = compare_deployment(scenario, gain, _seeds(args, scenario), positions, scenario.icdf_level)
        return {"deployment": label, "gain_db": gain, "ee_icdf68": ee, "epsilon_mean": eps}

    rows = _map(run, cells, settings.worker_count(len(cells)))
    write_rows(rows, ["deployment", "gain_db", "ee_icdf68", "epsilon_mean"], args.out, args.format)


def converge_cell(scenario, algorithm, t, seed, bits=None):
    """Final capacity of one (algorithm, T, seed) run."""
    geom = _geometry_for(scenario, seed=seed)
    panels = with_phase_bits(geom.panels, bits) if bits is not None else geom.panels
    channels = synth_channels(geom)
    evaluator = LinkEvaluator(channels, panels, scenario.system)
    codebooks = None
    if algorithm == "codebook":
        if math.isqrt(t) ** 2 != t:
            raise ConfigurationError(
                f"T={t} is not a perfect square; the codebook grid uses M = N = sqrt(T) and M' = N' = sqrt(T) - 1"
            )
        codebooks = _codebooks(scenario, panels, channels.wavelength, t)
    result = run_algorithm(
        algorithm, _objective(scenario, evaluator, seed), panels,
        codebooks=codebooks, budget=Budget(t_per_panel=t), seed=seed,
    )
    return {
        "algorithm": algorithm,
        "total_iterations": result.evaluations,
        "seed": seed,
        "capacity_bpshz": evaluator.capacity(result.configs),
    }


def cmd_converge(args, settings):
    scenario = _load_scenario(_require(args.scenario, "--scenario"), settings)
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    unknown = [a for a in algorithms if a not in CONVERGE_ALGORITHMS]
    if unknown:
        raise ConfigurationError(f"Unknown algorithms {unknown}; choose from {', '.join(CONVERGE_ALGORITHMS)}")
    stray = sorted(set(args.algorithm_bits) - set(CONVERGE_ALGORITHMS))
    if stray:
        raise ConfigurationError(f"--algorithm-bits names unknown algorithms {stray}")
    if "bg" in algorithms:
        for panel in scenario.geometry.panels:
            t_random, t_greedy = greedy_split(panel, max(args.t_values))
            logger.info("bg split for panel '%s' at T=%d: %d random, %d greedy",
                        panel.id, max(args.t_values), t_random, t_greedy)

    cells = [(a, t, s) for a in algorithms for t in args.t_values for s in _seeds(args, scenario)]
    rows = _map(lambda c: converge_cell(scenario, *c, bits=args.algorithm_bits.get(c[0], args.bits)),
                cells, settings.worker_count(len(cells)))
    rows.sort(key=lambda r: (algorithms.index(r["algorithm"]), r["total_iterations"], r["seed"]))
    write_rows(rows, ["algorithm", "total_iterations", "seed", "capacity_bpshz"], args.out, args.format)


def _load_configs(path):
    """Phase configs from a run record or a ``{"configs": [...]}`` document, plus the record seed."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "record" in data:
        record = load_run(path)
        return list(record.result.configs), record.seed, record.scenario_hash
    items = data.get("configs") if isinstance(data, dict) else data
    if not isinstance(items, list):
        raise ConfigurationError(f"{path}: expected a list of panel configs")
    return [PhaseConfig.model_validate(item) for item in items], None, None


def evaluate_configs(scenario, configs, seed):
    geom = _geometry_for(scenario, seed=seed)
    by_id = {c.panel_id: c for c in configs}
    missing = [p.id for p in geom.panels if p.id not in by_id]
    if missing:
        raise ConfigurationError(f"Missing phase config for panels {missing}")
    ordered = [by_id[p.id] for p in geom.panels]
    evaluator = LinkEvaluator(synth_channels(geom), geom.panels, scenario.system)
    return evaluator.report(ordered, scenario.power, scenario.rank_tau)


def cmd_eval(args, settings):
    scenario = _load_scenario(_require(args.scenario, "--scenario"), settings)
    configs, record_seed, record_hash = _load_configs(args.configs)
    if record_hash is not None and record_hash != scenario_hash(scenario):
        logger.warning("Run record was produced on a different scenario")
    seed = args.seed[0] if args.seed else (record_seed if record_seed is not None else scenario.geometry.seed)
    report = evaluate_configs(scenario, configs, seed)
    if args.format == "csv":
        write_rows([report.model_dump()], list(report.model_dump()), args.out, "csv")
    else:
        _emit(json.dumps(report.model_dump(), indent=2, sort_keys=True) + "\n", args.out)


def _timestamp():
    """UTC timestamp; honours SOURCE_DATE_EPOCH for reproducible records."""
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    moment = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return moment.isoformat(timespec="seconds")


def optimize_record(scenario, algorithm, seed, t=None):
    geom = _geometry_for(scenario, seed=seed)
    channels = synth_channels(geom)
    evaluator = LinkEvaluator(channels, geom.panels, scenario.system)
    codebooks = _codebooks(scenario, geom.panels, channels.wavelength) if algorithm == "codebook" else None
    budget = Budget(t_per_panel=t) if t is not None else None
    result = run_algorithm(algorithm, _objective(scenario, evaluator, seed), geom.panels,
                           codebooks=codebooks, budget=budget, seed=seed)
    return RunRecord(
        scenario_hash=scenario_hash(scenario),
        algorithm=algorithm,
        seed=seed,
        result=result,
        metrics=evaluator.report(result.configs, scenario.power, scenario.rank_tau),
        timestamp=_timestamp(),
    )


def cmd_optimize(args, settings):
    scenario = _load_scenario(_require(args.scenario, "--scenario"), settings)
    out_dir = Path(_require(args.out, "--out"))
    seeds = _seeds(args, scenario)
    records = _map(lambda s: optimize_record(scenario, args.algorithm, s, args.t), seeds,
                   settings.worker_count(len(seeds)))
    rows = []
    for record in records:
        path = out_dir / f"{record.algorithm}_seed{record.seed}.json"
        save_run(record, path)
        if args.trace:
            write_trace_csv(record.result, str(path.with_name(f"{path.stem}_trace.csv")))
        rows.append({"algorithm": record.algorithm, "seed": record.seed,
                     "capacity_bpshz": record.metrics.capacity_bpshz, "record": str(path)})
    write_rows(rows, ["algorithm", "seed", "capacity_bpshz", "record"], None, args.format)


def cmd_codebook(args, settings):
    scenario = _load_scenario(_require(args.scenario, "--scenario"), settings)
    panel = scenario.geometry.panel(args.panel)
    book = build_codebook(panel, scenario.grid_for(panel.id), scenario.geometry.wavelength)
    buffer = io.StringIO()
    write_codebook_csv(book, buffer)
    _emit(buffer.getvalue(), args.out)


COMMANDS = {
    "heatmap": cmd_heatmap,
    "compare": cmd_compare,
    "converge": cmd_converge,
    "eval": cmd_eval,
    "optimize": cmd_optimize,
    "codebook": cmd_codebook,
}


def _fail(exc, code):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None):
    """
    Entry point: load settings, configure logging, run one subcommand.

    Returns the process exit code.
    """
    load_dotenv()
    args = parse_args(argv)

    try:
        settings = RisforgeConfig.load_config(args.config)
        overrides = {}
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.log_level:
            overrides["log_level"] = args.log_level
        if args.no_log:
            overrides["log_enabled"] = False
        if overrides:
            settings = RisforgeConfig(**{**settings.model_dump(), **overrides})
        setup_logging(settings, args.config)
        COMMANDS[args.command](args, settings)
    except (ConfigurationError, ValidationError, OSError, json.JSONDecodeError) as e:
        return _fail(e, 2)
    except NumericError as e:
        return _fail(e, 3)
    return 0


if __name__ == '__main__':
    sys.exit(main())

"""Command-line front end: generate clouds, run the sieve, evaluate against
ground truth and fit convergence slopes.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import metrics
from .core import PRACTICAL_TUPLE_CAP, run
from .files import (DataError, UsageError, append_eval_rows, cloud_stem, read_cloud, read_eval_rows,
                    read_result, validate, write_cloud, write_result)
from .params import InconsistentOverride, InvalidDims, ParamSchedule, schedule_from_dict
from .samplers import PRESETS, ManifoldSpec, WeightError, preset, sample_mixture

log = logging.getLogger("slabeling")

EXPECTED_SLOPE = {"hausdorff": lambda d: -2 / d, "tangent": lambda d: -1 / d, "clustering": lambda d: math.nan}
RATE_LOSSES = ("hausdorff", "tangent", "clustering")


class InsufficientData(DataError):
    pass


@dataclass
class ExperimentConfig:
    scene: str | dict = "circle"
    n_grid: list = field(default_factory=lambda: [1000])
    seeds: list = field(default_factory=lambda: [0])
    schedule: dict = field(default_factory=dict)
    eval: dict = field(default_factory=dict)
    output_dir: str = "out"
    threads: int = 1
    max_tuples_per_anchor: int | None = PRACTICAL_TUPLE_CAP

    def __post_init__(self):
        if list(self.n_grid) != sorted(self.n_grid):
            raise UsageError("n_grid must be ascending")
        if not self.seeds:
            raise UsageError("seeds must be nonempty")
        if self.threads < 1:
            raise UsageError("threads must be at least 1")

    @property
    def scene_name(self) -> str:
        if isinstance(self.scene, str):
            return self.scene
        return self.scene.get("name", "custom")

    def scene_specs(self):
        if isinstance(self.scene, str):
            try:
                return preset(self.scene)
            except KeyError as e:
                raise UsageError(e.args[0]) from None
        specs = [ManifoldSpec.from_dict(s) for s in self.scene["specs"]]
        weights = self.scene.get("weights") or [1 / len(specs)] * len(specs)
        return specs, weights

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def cloud_path(self, n: int, seed: int) -> Path:
        return self.out / "clouds" / f"{cloud_stem(self.scene_name, n, seed)}.csv"

    def result_path(self, n: int, seed: int) -> Path:
        return self.out / "results" / f"{cloud_stem(self.scene_name, n, seed)}.result.json"


def load_config(path=None, **overrides) -> ExperimentConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"missing config file: {path}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
        try:
            validate(data, "config")
        except DataError as e:
            raise UsageError(str(e)) from None
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


def _schedule(cfg: ExperimentConfig, n: int, D: int, schedule_file=None) -> ParamSchedule:
    data = cfg.schedule
    if schedule_file is not None:
        try:
            data = json.loads(Path(schedule_file).read_text())
        except FileNotFoundError:
            raise UsageError(f"missing schedule file: {schedule_file}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"{schedule_file}:{e.lineno}: invalid JSON ({e.msg})") from None
    try:
        return schedule_from_dict(dict(data), n=n, D=D)
    except (InvalidDims, InconsistentOverride, ValueError) as e:
        raise UsageError(f"invalid schedule: {e}") from None


# --- commands --------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig) -> list:
    """Write one cloud CSV and sidecar per (n, seed); returns the paths."""
    specs, weights = cfg.scene_specs()
    paths = []
    for n in cfg.n_grid:
        for seed in cfg.seeds:
            try:
                pc = sample_mixture(specs, weights, n, seed)
            except WeightError as e:
                raise UsageError(str(e)) from None
            path = cfg.cloud_path(n, seed)
            try:
                write_cloud(pc, path, preset=cfg.scene_name)
            except OSError as e:
                raise DataError(f"cannot write {path}: {e}") from None
            paths.append(path)
    return paths


def cmd_run(cloud_path, cfg: ExperimentConfig, schedule_file=None, output=None) -> Path:
    """Run the sieve on one cloud file and write its result JSON."""
    pc = read_cloud(cloud_path)
    sched = _schedule(cfg, pc.n, pc.ambient, schedule_file)
    try:
        sched.check_ambient(pc.ambient)
    except InvalidDims as e:
        raise UsageError(str(e)) from None
    res = run(pc.points, sched, threads=cfg.threads, max_tuples_per_anchor=cfg.max_tuples_per_anchor,
              seed=pc.seed)
    if output is None:
        output = Path(cfg.output_dir) / "results" / (Path(cloud_path).stem + ".result.json")
    write_result(res, output, source=str(cloud_path))
    log.info("%s: K_hat=%d dims=%s in %.0f ms", cloud_path, res.K_hat, res.dims, res.metadata["wall_ms"])
    return Path(output)


def evaluation_rows(res, evals: list, n: int, seed) -> list:
    return [{
        "n": n, "seed": -1 if seed is None else seed, "layer": ev.k, "dim": ev.dim,
        "hausdorff": ev.hausdorff_error, "clustering": ev.clustering_error, "tangent": ev.tangent_error,
        "delta": ev.delta_used, "resolution": ev.resolution, "wall_ms": res.metadata.get("wall_ms", math.nan),
    } for ev in evals]


def cmd_evaluate(result_path, cfg: ExperimentConfig, cloud_path=None) -> tuple[dict, list]:
    """Score one result against the ground truth of its cloud; writes the
    report JSON and merges one row per (n, seed, layer) into evaluation.csv."""
    res, raw = read_result(result_path)
    cloud_path = cloud_path or raw.get("source")
    if cloud_path is None:
        raise DataError(f"{result_path}: no source cloud recorded; pass --cloud")
    truth = read_cloud(cloud_path, require_sidecar=True)
    if truth.true_labels is None or truth.specs is None:
        raise metrics.MissingLabels(f"{cloud_path}: ground truth needs labels and specs")
    if truth.n != res.n_points:
        raise DataError(f"{result_path}: result has {res.n_points} points, cloud has {truth.n}")
    ev_cfg = cfg.eval
    evals = metrics.evaluate(res, truth, resolution=ev_cfg.get("resolution"), delta=ev_cfg.get("delta"),
                             delta_factor=ev_cfg.get("delta_factor", 3.0),
                             tangent_resolution=ev_cfg.get("tangent_resolution"))
    tau = ev_cfg.get("tau")
    report = {
        "n": truth.n,
        "seed": truth.seed,
        "K_hat": res.K_hat,
        "dims": res.dims,
        "true_dims": [s.dim for s in truth.specs],
        "dimension_check": None if tau is None else metrics.dimension_label_check(res, truth, tau),
        "layers": [ev.to_dict() for ev in evals],
    }
    validate(report, "evaluation")
    out = Path(cfg.output_dir)
    stem = Path(result_path).name.removesuffix(".result.json")
    path = out / "evaluations" / f"{stem}.eval.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    rows = evaluation_rows(res, evals, truth.n, truth.seed)
    append_eval_rows(out / "evaluation.csv", rows)
    return report, rows


@dataclass
class RateFit:
    layer: int
    dim: int
    loss: str
    slope: float
    stderr: float
    intercept: float
    n_values: int
    expected: float


def fit_rate(ns, medians) -> tuple[float, float, float]:
    """Least-squares slope of log(median) against log(n / log n), with its
    standard error and intercept."""
    x = np.log(np.asarray(ns, dtype=float) / np.log(ns))
    y = np.log(np.asarray(medians, dtype=float))
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.stderr), float(fit.intercept)


def median_table(rows: list, min_seeds: int = 3) -> dict:
    """{(layer, dim, loss): [(n, median over seeds), ...]} for n values with
    at least ``min_seeds`` seeds."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        for loss in RATE_LOSSES:
            groups[(r["layer"], r["dim"], loss)][r["n"]].append(r[loss])
    out = {}
    for key, by_n in groups.items():
        out[key] = [(n, float(np.median(v))) for n, v in sorted(by_n.items()) if len(v) >= min_seeds]
    return out


def cmd_rates(eval_csv, min_n: int = 4, min_seeds: int = 3, output_dir=None) -> list:
    """Fit one slope per layer and loss. Needs at least ``min_n`` distinct n
    values with ``min_seeds`` seeds each."""
    rows = read_eval_rows(eval_csv)
    table = median_table(rows, min_seeds)
    fits = []
    for (layer, dim, loss), pts in sorted(table.items()):
        if len(pts) < min_n:
            raise InsufficientData(f"layer {layer} {loss}: {len(pts)} n values with >= {min_seeds} seeds, "
                                   f"need {min_n}")
        ns, med = zip(*pts)
        if all(m > 0 and math.isfinite(m) for m in med):
            slope, se, icpt = fit_rate(ns, med)
        else:
            # a zero or infinite median has no logarithm
            slope = se = icpt = math.nan
        fits.append(RateFit(layer, dim, loss, slope, se, icpt, len(pts), EXPECTED_SLOPE[loss](dim)))
    if not fits:
        raise InsufficientData(f"{eval_csv}: no evaluation rows")
    if output_dir is not None:
        _write_rates(Path(output_dir), fits, table)
    return fits


def _write_rates(out: Path, fits: list, table: dict):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rates.csv", "w") as f:
        f.write("layer,dim,loss,slope,stderr,intercept,n_values,expected\n")
        for r in fits:
            f.write(f"{r.layer},{r.dim},{r.loss},{r.slope:.6g},{r.stderr:.6g},{r.intercept:.6g},"
                    f"{r.n_values},{r.expected:.6g}\n")
    with open(out / "medians.csv", "w") as f:
        f.write("layer,dim,loss,n,log_n_over_log_n,median\n")
        for (layer, dim, loss), pts in sorted(table.items()):
            for n, m in pts:
                f.write(f"{layer},{dim},{loss},{n},{math.log(n / math.log(n)):.6g},{m:.6g}\n")
    (out / "plot_rates.gp").write_text(PLOT_SCRIPT)


PLOT_SCRIPT = """\
# gnuplot script: log median loss against log(n / log n), one curve per layer and loss
# usage: gnuplot -e "loss='hausdorff'" plot_rates.gp
if (!exists("loss")) loss = 'hausdorff'
set datafile separator ','
set terminal pngcairo size 800,600
set output sprintf('rates_%s.png', loss)
set xlabel 'log(n / log n)'
set ylabel sprintf('log median %s error', loss)
set key top right
plot for [k=1:4] 'medians.csv' using (stringcolumn(3) eq loss && $1 == k ? $5 : NaN):(log($6)) \\
     with linespoints title sprintf('layer %d', k)
"""


# --- argument parsing ------------------------------------------------------------


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="experiment configuration JSON")
    p.add_argument("--seed", type=int, help="single seed replacing the configured seeds")
    p.add_argument("--threads", type=int, help="worker threads (outputs do not depend on it)")
    p.add_argument("--output", type=Path, help="output directory")
    p.add_argument("--preset", help=f"named scene: {', '.join(PRESETS)}")
    p.add_argument("-n", "--n", type=int, dest="n", help="single sample size replacing n_grid")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slabeling", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate", help="sample clouds for every (n, seed)")
    _common(g)
    r = sub.add_parser("run", help="run the sieve on clouds (generated from the config if absent)")
    _common(r)
    r.add_argument("clouds", nargs="*", type=Path)
    r.add_argument("--schedule", type=Path, help="schedule JSON (explicit or practical overrides)")
    r.add_argument("--uncapped", action="store_true", help="enumerate every tuple (no per-anchor cap)")
    e = sub.add_parser("evaluate", help="score results against their ground truth")
    _common(e)
    e.add_argument("results", nargs="*", type=Path)
    e.add_argument("--cloud", type=Path, help="truth cloud (default: the result's recorded source)")
    t = sub.add_parser("rates", help="fit convergence slopes from an evaluation CSV")
    _common(t)
    t.add_argument("eval_csv", nargs="?", type=Path)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    over = {
        "scene": args.preset,
        "seeds": None if args.seed is None else [args.seed],
        "n_grid": None if args.n is None else [args.n],
        "threads": args.threads,
        "output_dir": None if args.output is None else str(args.output),
    }
    cfg = load_config(args.config, **over)
    if isinstance(cfg.scene, str) and cfg.scene not in PRESETS:
        raise UsageError(f"unknown preset {cfg.scene!r}; choose from {', '.join(PRESETS)}")
    if args.command == "run" and args.uncapped:
        cfg.max_tuples_per_anchor = None
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "generate":
            for p in cmd_generate(cfg):
                print(p)
        elif args.command == "run":
            clouds = args.clouds
            if not clouds:
                clouds = []
                for n in cfg.n_grid:
                    for seed in cfg.seeds:
                        path = cfg.cloud_path(n, seed)
                        if not path.exists():
                            sub = ExperimentConfig(**{**cfg.__dict__, "n_grid": [n], "seeds": [seed]})
                            cmd_generate(sub)
                        clouds.append(path)
            for c in clouds:
                print(cmd_run(c, cfg, args.schedule))
        elif args.command == "evaluate":
            results = args.results or [cfg.result_path(n, s) for n in cfg.n_grid for s in cfg.seeds]
            for rp in results:
                t0 = time.perf_counter()
                report, _ = cmd_evaluate(rp, cfg, args.cloud)
                log.info("%s evaluated in %.1f s", rp, time.perf_counter() - t0)
                print(json.dumps({"result": str(rp), "dims": report["dims"],
                                  "layers": report["layers"]}))
        else:
            csv_path = args.eval_csv or cfg.out / "evaluation.csv"
            fits = cmd_rates(csv_path, output_dir=cfg.out)
            print("layer dim loss        slope    stderr   expected")
            for f in fits:
                print(f"{f.layer:5d} {f.dim:3d} {f.loss:10s} {f.slope:8.3f} {f.stderr:8.3f} {f.expected:8.3f}")
        return 0
    except (UsageError, InvalidDims, InconsistentOverride) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, metrics.MissingLabels, metrics.EmptyLayer) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except AssertionError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

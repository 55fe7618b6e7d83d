"""Command-line front end: ``bodybrain evolve | learn | analyze``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .cpg_controller import weights_from_json, weights_to_json
from .evolution import (
    EvoParams,
    Mode,
    STAT_FIELDS,
    genealogy_dot,
    individuals_csv,
    nominal_evaluation_counts,
    run_evolution,
    stats_csv,
)
from .fitness import TARGET_DIRECTIONS, evaluate_brain, evaluation_log_csv, evaluation_rows
from .locomotion_sim import SimConfig, cpg_structure, trajectories_csv
from .morphology import DESCRIPTOR_NAMES, MAX_MODULES, Morphology, decode_body
from .revde_learner import LearnerParams, learn, trace_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("bodybrain")

ANALYSIS_SCHEMA = "# schema: bodybrain-analysis/1"
RUN_FILES = ("stats.csv", "individuals.csv", "trajectories.csv")
LANDSCAPES = (("rel_limbs", "num_bricks"), ("symmetry", "absolute_size"))
COUNT_DESCRIPTORS = {"absolute_size", "num_bricks"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    evo: EvoParams = field(default_factory=EvoParams)
    repetitions: int = 10
    threads: int = 1
    out: Path = Path("runs")

    def to_dict(self) -> dict:
        """Experiment settings; worker count and output path do not affect results and are left out."""
        return {**self.evo.to_dict(), "repetitions": self.repetitions}


_EVO_KEYS = {f.name for f in fields(EvoParams)} - {"learner", "sim"}
_TOP_KEYS = _EVO_KEYS | {"repetitions", "threads", "out", "learner", "sim"}


def load_config(path: Path | None, overrides: dict) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = tomllib.loads(Path(path).read_text())
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    learner_raw = raw.pop("learner", {})
    sim_raw = raw.pop("sim", {})
    for section, raw_section, cls in (("learner", learner_raw, LearnerParams), ("sim", sim_raw, SimConfig)):
        bad = set(raw_section) - {f.name for f in fields(cls)}
        if bad:
            raise ConfigError(f"unknown [{section}] keys: {', '.join(sorted(bad))}")
    try:
        evo = EvoParams(
            learner=LearnerParams(**learner_raw),
            sim=SimConfig(**sim_raw),
            **{k: raw[k] for k in _EVO_KEYS if k in raw},
        )
        cfg = ExperimentConfig(
            evo=evo,
            repetitions=int(raw.get("repetitions", 10)),
            threads=int(raw.get("threads", 1)),
            out=Path(raw.get("out", "runs")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.repetitions < 1 or cfg.threads < 1:
        raise ConfigError("repetitions and threads must be >= 1")
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def read_csv(path: Path) -> list[dict]:
    """Rows of a CSV written by this package (schema comment line skipped)."""
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def _grid_csv(rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(ANALYSIS_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def cmd_evolve(cfg: ExperimentConfig, resume: bool = False) -> dict:
    cfg.out.mkdir(parents=True, exist_ok=True)
    _write(cfg.out / "config.json", json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    runs = []
    for rep in range(cfg.repetitions):
        params = EvoParams(**{**{f.name: getattr(cfg.evo, f.name) for f in fields(EvoParams)}, "seed": cfg.evo.seed + rep})
        run_dir = cfg.out / f"run_{rep:02d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        log.info("run %d/%d (seed %d, %s)", rep + 1, cfg.repetitions, params.seed, params.mode.value)
        result = run_evolution(params, workers=cfg.threads, checkpoint=run_dir / "checkpoint.json", resume=resume)
        _write(run_dir / "stats.csv", stats_csv(result.stats))
        _write(run_dir / "individuals.csv", individuals_csv(result.individuals))
        _write(run_dir / "genealogy.dot", genealogy_dot(result.individuals))
        rows = [r for k in sorted(result.individuals) for r in evaluation_rows(k, result.individuals[k].components)]
        _write(run_dir / "evaluations.csv", evaluation_log_csv(rows))

        best = result.best
        body = decode_body(best.body)
        evaluation = evaluate_brain(body, best.learned, params.sim)
        labels = [round(math.degrees(td)) for td in TARGET_DIRECTIONS]
        _write(run_dir / "trajectories.csv", trajectories_csv(dict(zip(labels, evaluation.trajectories))))
        _write(run_dir / "best_body.json", body.to_json() + "\n")
        _write(run_dir / "best_brain.json", weights_to_json(cpg_structure(body), best.learned) + "\n")
        runs.append(result)

    summary = _summary(cfg, runs)
    _write(cfg.out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return summary


def _summary(cfg: ExperimentConfig, runs) -> dict:
    per_gen = []
    n_gen = len(runs[0].stats)
    for g in range(n_gen):
        entry = {"generation": g}
        for key in STAT_FIELDS[1:]:
            vals = np.array([r.stats[g][key] for r in runs], dtype=float)
            entry[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        per_gen.append(entry)
    counts = nominal_evaluation_counts(cfg.evo)
    return {
        "mode": cfg.evo.mode.value,
        "repetitions": cfg.repetitions,
        "seeds": [cfg.evo.seed + r for r in range(cfg.repetitions)],
        "evaluations_per_run": [r.evaluations for r in runs],
        "nominal_evaluations": counts,
        "final_max_fitness": [r.stats[-1]["max_fitness"] for r in runs],
        "generations": per_gen,
    }


def cmd_learn(body_path: Path, brain_path: Path, params: LearnerParams, sim: SimConfig,
              seed: int, flat: bool = False, trace_path: Path | None = None) -> dict:
    try:
        body = Morphology.from_dict(json.loads(Path(body_path).read_text()))
        weights = weights_from_json(Path(brain_path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed input: {exc}") from exc
    net = cpg_structure(body)
    expected = net.n_joints + len(net.pairs)
    if weights.shape != (expected,):
        raise ConfigError(f"brain has {weights.size} weights, body needs {expected}")

    if flat:
        evaluator = lambda w: 0.0  # noqa: E731
    else:
        evaluator = lambda w: evaluate_brain(net, w, sim).fitness  # noqa: E731
    result = learn(weights, evaluator, params, np.random.default_rng(seed))
    report = {
        "joints": net.n_joints,
        "inherited_fitness": result.inherited_fitness,
        "best_fitness": result.best_fitness,
        "delta": result.delta,
        "evaluations": result.evaluations,
        "simulations": 0 if flat else result.evaluations * len(TARGET_DIRECTIONS),
        "best_weights": [float(v) for v in result.best],
    }
    if trace_path is not None:
        _write(Path(trace_path), trace_csv(result.trace))
    return report


def _bin_index(v: float, bins: int) -> int:
    return min(max(int(math.floor(v * bins)), 0), bins - 1)


def landscape(xs, ys, values, bins: int = 20):
    """Mean value and count per cell of a bins x bins grid over [0, 1]^2."""
    total = np.zeros((bins, bins))
    count = np.zeros((bins, bins), dtype=int)
    for x, y, v in zip(xs, ys, values):
        i, j = _bin_index(y, bins), _bin_index(x, bins)
        total[i, j] += v
        count[i, j] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return mean, count


def _normalised(name: str, v: float) -> float:
    return v / MAX_MODULES if name in COUNT_DESCRIPTORS else v


def cmd_analyze(run_dir: Path, bins: int = 20, out: Path | None = None) -> Path:
    run_dir = Path(run_dir)
    runs = sorted(p for p in run_dir.glob("run_*") if p.is_dir())
    missing = [str(p / f) for p in runs for f in RUN_FILES if not (p / f).exists()]
    if not runs or missing:
        expected = missing or [str(run_dir / "run_XX" / f) for f in RUN_FILES]
        raise ConfigError("missing run artifacts; expected:\n  " + "\n  ".join(expected))
    out = Path(out) if out else run_dir / "analysis"
    out.mkdir(parents=True, exist_ok=True)

    stats = [read_csv(p / "stats.csv") for p in runs]
    n_gen = min(len(s) for s in stats)

    rows = [["generation", *(f"mean_{d}" for d in DESCRIPTOR_NAMES)]]
    for g in range(n_gen):
        rows.append([g] + [_fmt(float(np.mean([float(s[g][f"mean_{d}"]) for s in stats]))) for d in DESCRIPTOR_NAMES])
    _write(out / "descriptors.csv", _grid_csv(rows))

    rows = [["generation", "mean_delta", "std_delta", "mean_fitness", "mean_fitness_before"]]
    for g in range(n_gen):
        deltas = np.array([float(s[g]["mean_delta"]) for s in stats])
        rows.append([g, _fmt(float(deltas.mean())), _fmt(float(deltas.std())),
                     _fmt(float(np.mean([float(s[g]["mean_fitness"]) for s in stats]))),
                     _fmt(float(np.mean([float(s[g]["mean_fitness_before"]) for s in stats])))])
    _write(out / "learning_delta.csv", _grid_csv(rows))

    inds = [r for p in runs for r in read_csv(p / "individuals.csv")]
    fit = [float(r["fitness_after"]) for r in inds]
    edges = [_fmt(k / bins) for k in range(bins)]
    for xname, yname in LANDSCAPES:
        xs = [_normalised(xname, float(r[xname])) for r in inds]
        ys = [_normalised(yname, float(r[yname])) for r in inds]
        mean, count = landscape(xs, ys, fit, bins)
        stem = f"landscape_{yname}_vs_{xname}"
        _write(out / f"{stem}.csv", _grid_csv([[f"{yname}\\{xname}", *edges]] +
                                              [[edges[i], *(_fmt(float(v)) for v in mean[i])] for i in range(bins)]))
        _write(out / f"{stem}_counts.csv", _grid_csv([[f"{yname}\\{xname}", *edges]] +
                                                     [[edges[i], *map(str, count[i])] for i in range(bins)]))

    traj = [r for p in runs for r in read_csv(p / "trajectories.csv")]
    pts = np.array([[float(r["X"]), float(r["Y"])] for r in traj]) if traj else np.zeros((0, 2))
    extent = float(np.abs(pts).max()) if pts.size else 1.0
    extent = extent if extent > 0 else 1.0
    hist, xe, ye = np.histogram2d(pts[:, 0], pts[:, 1], bins=bins, range=[[-extent, extent], [-extent, extent]])
    rows = [["x_lo", "y_lo", "count"]]
    for i in range(bins):
        for j in range(bins):
            rows.append([_fmt(float(xe[i])), _fmt(float(ye[j])), int(hist[i, j])])
    _write(out / "trajectory_density.csv", _grid_csv(rows))
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bodybrain", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evolve", help="run evolution experiments")
    ev.add_argument("--config", type=Path)
    ev.add_argument("--mode", choices=[m.value for m in Mode])
    ev.add_argument("--generations", type=int)
    ev.add_argument("--population", type=int)
    ev.add_argument("--offspring", type=int)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--repetitions", type=int)
    ev.add_argument("--threads", type=int)
    ev.add_argument("--out", type=Path)
    ev.add_argument("--resume", action="store_true", help="continue runs from their checkpoints")

    le = sub.add_parser("learn", help="run infant learning on one body/brain pair")
    le.add_argument("body", type=Path, help="morphology JSON")
    le.add_argument("brain", type=Path, help="brain weights JSON")
    le.add_argument("--seed", type=int, default=0)
    le.add_argument("--population", type=int, default=LearnerParams.population)
    le.add_argument("--iterations", type=int, default=LearnerParams.iterations)
    le.add_argument("--scaling", type=float, default=LearnerParams.scaling)
    le.add_argument("--crossover", type=float, default=LearnerParams.crossover)
    le.add_argument("--neighbours", type=int, default=LearnerParams.neighbours)
    le.add_argument("--flat", action="store_true", help="constant-fitness stub evaluator")
    le.add_argument("--trace", type=Path, help="write the learning trace CSV here")

    an = sub.add_parser("analyze", help="derive plot-ready data from a run directory")
    an.add_argument("run_dir", type=Path)
    an.add_argument("--bins", type=int, default=20)
    an.add_argument("--out", type=Path)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        if args.command == "evolve":
            overrides = {k: getattr(args, k) for k in
                         ("mode", "generations", "population", "offspring", "seed", "repetitions", "threads", "out")}
            if overrides["out"] is not None:
                overrides["out"] = str(overrides["out"])
            cfg = load_config(args.config, overrides)
            summary = cmd_evolve(cfg, resume=args.resume)
            print(f"wrote {cfg.repetitions} run(s) to {cfg.out}; "
                  f"final max fitness per run: {', '.join(f'{v:.4f}' for v in summary['final_max_fitness'])}")
        elif args.command == "learn":
            try:
                params = LearnerParams(args.population, args.scaling, args.crossover, args.neighbours, args.iterations)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            report = cmd_learn(args.body, args.brain, params, SimConfig(), args.seed, args.flat, args.trace)
            print(f"delta {report['delta']:.6f}  best fitness {report['best_fitness']:.6f}  "
                  f"real evaluations {report['evaluations']} ({report['simulations']} simulations)")
        elif args.command == "analyze":
            out = cmd_analyze(args.run_dir, args.bins, args.out)
            print(f"analysis written to {out}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Experiment runner: build or load a forest, run a pipeline, validate, and
write artifacts and a one-line CSV summary."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import colorize, decompose, derive, verify
from .forest import Forest, ForestError, TreeGenSpec, generate, read_forest
from .runtime import CapViolation, MpcConfig, RoundLog

STAGES = ("decompose_bounded", "decompose_general", "color", "mis", "matching", "validate")
DEFAULT_PIPELINE = ("decompose_general", "color", "mis", "matching", "validate")
CSV_COLUMNS = ("n", "m", "delta", "algo", "rounds", "layers", "peak_local_words", "global_words", "valid")
SWEEP_COLUMNS = ("n", "runs", "mean_rounds", "max_rounds", "mean_layers", "max_layers", "valid")


class PipelineError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    source: str | TreeGenSpec
    pipeline: tuple[str, ...] = DEFAULT_PIPELINE
    cfg: MpcConfig = field(default_factory=MpcConfig)
    out: Path | None = None

    def __post_init__(self):
        self.pipeline = check_pipeline(self.pipeline)

    def forest(self) -> Forest:
        if isinstance(self.source, TreeGenSpec):
            return generate(self.source)
        return read_forest(self.source)


def check_pipeline(stages) -> tuple[str, ...]:
    stages = tuple(s.strip() for s in stages if s.strip())
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise PipelineError(f"unknown stage(s): {', '.join(unknown)}")
    decomps = [s for s in stages if s.startswith("decompose")]
    if len(decomps) > 1:
        raise PipelineError("choose one decomposition algorithm")
    if "color" in stages and not decomps:
        raise PipelineError("coloring needs a decomposition stage")
    if ("mis" in stages or "matching" in stages) and "color" not in stages:
        raise PipelineError("mis and matching need the color stage")
    return stages


@dataclass
class Result:
    forest: Forest
    algo: str
    decomposition: decompose.Decomposition | None = None
    coloring: colorize.Coloring | None = None
    mis: derive.MisSet | None = None
    matching: derive.Matching | None = None
    log: RoundLog = field(default_factory=RoundLog)
    stage_rounds: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(r.ok for r in self.reports.values())

    def first_failure(self):
        for name, rep in self.reports.items():
            if not rep.ok:
                return name, rep
        return None

    def summary(self, cfg: MpcConfig) -> dict:
        d = self.decomposition
        return {
            "n": self.forest.n,
            "m": self.forest.m,
            "delta": cfg.delta,
            "algo": self.algo,
            "rounds": self.log.rounds,
            "layers": d.L if d is not None else 0,
            "peak_local_words": self.log.peak_local_words,
            "global_words": self.log.peak_global_words,
            "valid": str(self.valid).lower(),
        }


def run_pipeline(f: Forest, pipeline=DEFAULT_PIPELINE, cfg: MpcConfig = MpcConfig()) -> Result:
    pipeline = check_pipeline(pipeline)
    algo = "bounded" if "decompose_bounded" in pipeline else "general" if "decompose_general" in pipeline else "none"
    res = Result(f, algo, log=RoundLog(global_cap=cfg.global_cap(f.n, f.m), enforce=False))

    def add(name, log):
        res.stage_rounds[name] = log.rounds
        res.log.extend(log)

    if algo == "bounded":
        res.decomposition, log = decompose.mpc_decompose_bounded(f, cfg)
        add("decompose", log)
    elif algo == "general":
        res.decomposition, log = decompose.mpc_decompose_general(f, cfg)
        add("decompose", log)
    if "color" in pipeline:
        driver = colorize.mpc_color_bounded if algo == "bounded" else colorize.mpc_color_general
        res.coloring, log = driver(f, res.decomposition, cfg)
        add("color", log)
    if "mis" in pipeline:
        res.mis, log = derive.mis_from_coloring(f, res.coloring, cfg)
        add("mis", log)
    if "matching" in pipeline:
        res.matching, log = derive.matching_from_coloring(f, res.coloring, res.decomposition, cfg)
        add("matching", log)
    if "validate" in pipeline:
        validate(res, cfg)
    return res


def validate(res: Result, cfg: MpcConfig) -> None:
    f, d = res.forest, res.decomposition
    if d is not None:
        res.reports["decomposition"] = decompose.validate_decomposition(f, d)
        if res.algo == "bounded":
            res.reports["oracle"] = verify.oracle_compare_layers(f, d.layer, d.l)
    if res.coloring is not None:
        res.reports["coloring"] = verify.check_proper_coloring(f, res.coloring.final_map)
    if res.mis is not None:
        res.reports["mis"] = verify.check_mis(f, res.mis.members)
    if res.matching is not None:
        res.reports["matching"] = verify.check_maximal_matching(f, res.matching.edges)
    budgets = {p.phase: p.budget for p in d.phases} if d is not None else {}
    res.reports["budgets"] = verify.check_budgets(res.log, cfg, budgets, f.n, f.m)


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_artifacts(res: Result, cfg: MpcConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if res.decomposition is not None:
        (out / "decomposition.json").write_text(res.decomposition.to_json() + "\n")
    if res.coloring is not None:
        (out / "coloring.json").write_text(res.coloring.to_json() + "\n")
    if res.mis is not None:
        (out / "mis.json").write_text(res.mis.to_json() + "\n")
    if res.matching is not None:
        (out / "matching.json").write_text(res.matching.to_json() + "\n")
    if res.reports:
        reports = {k: json.loads(r.to_json()) for k, r in res.reports.items()}
        (out / "reports.json").write_text(json.dumps(reports, sort_keys=True) + "\n")
    (out / "rounds.jsonl").write_text(res.log.to_jsonl())
    (out / "stage_rounds.json").write_text(json.dumps(res.stage_rounds, sort_keys=True) + "\n")
    (out / "summary.csv").write_text(csv_text([res.summary(cfg)], CSV_COLUMNS))


def run(spec: ExperimentSpec) -> int:
    """Run one experiment; 0 iff every requested validation passed."""
    try:
        f = spec.forest()
        res = run_pipeline(f, spec.pipeline, spec.cfg)
    except (ForestError, CapViolation, decompose.DegreeBoundError, PipelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if spec.out is not None:
        write_artifacts(res, spec.cfg, Path(spec.out))
    summary = res.summary(spec.cfg)
    print(",".join(str(summary[c]) for c in CSV_COLUMNS))
    failure = res.first_failure()
    if failure is not None:
        name, rep = failure
        print(f"{name} validation failed: {rep}", file=sys.stderr)
        return 1
    return 0


def sweep(base: TreeGenSpec, sizes, seeds, pipeline=DEFAULT_PIPELINE, cfg: MpcConfig = MpcConfig()):
    """Run every (n, seed) pair; returns (per-run rows, one aggregate row per n)."""
    sizes = list(sizes)
    if len(sizes) < 2:
        raise PipelineError("a sweep needs at least two sizes")
    runs, agg = [], []
    for n in sizes:
        batch = []
        for seed in seeds:
            f = generate(TreeGenSpec(base.kind, n, seed, base.param))
            row = run_pipeline(f, pipeline, cfg).summary(cfg)
            batch.append(dict(row, seed=seed))
        runs.extend(batch)
        rounds = [r["rounds"] for r in batch]
        layers = [r["layers"] for r in batch]
        agg.append({
            "n": n,
            "runs": len(batch),
            "mean_rounds": f"{sum(rounds) / len(rounds):.3f}",
            "max_rounds": max(rounds),
            "mean_layers": f"{sum(layers) / len(layers):.3f}",
            "max_layers": max(layers),
            "valid": str(all(r["valid"] == "true" for r in batch)).lower(),
        })
    return runs, agg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mpctrees", description=__doc__)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="edge-list file")
    src.add_argument("--gen", help="generator spec kind[(param)]:n:seed, e.g. random_bounded(4):1000:0")
    p.add_argument("--config", help="JSON file with configuration fields")
    p.add_argument("--delta", type=float)
    p.add_argument("--l", type=int)
    p.add_argument("--pipeline", default=",".join(DEFAULT_PIPELINE))
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-caps", action="store_true", help="record memory cap breaches instead of failing")
    p.add_argument("--sweep", help="comma-separated sizes (uses --gen for the tree kind)")
    p.add_argument("--seeds", default="0", help="comma-separated seeds for --sweep")
    return p


def config_from_args(args) -> MpcConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    if args.delta is not None:
        data["delta"] = args.delta
    if args.l is not None:
        data["l"] = args.l
    if args.no_caps:
        data["enforce_caps"] = False
    return MpcConfig.from_dict(data)


def main(argv=None) -> int:
    p = build_parser()
    args = p.parse_args(argv)
    try:
        cfg = config_from_args(args)
        pipeline = check_pipeline(args.pipeline.split(","))
        gen = TreeGenSpec.parse(args.gen) if args.gen else None
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.sweep:
        if gen is None:
            p.error("--sweep needs --gen")
        sizes = [int(x) for x in args.sweep.split(",")]
        seeds = [int(x) for x in args.seeds.split(",")]
        try:
            runs, agg = sweep(gen, sizes, seeds, pipeline, cfg)
        except (PipelineError, CapViolation, decompose.DegreeBoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        text = csv_text(agg, SWEEP_COLUMNS)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "sweep.csv").write_text(text)
            (out / "runs.csv").write_text(csv_text(runs, CSV_COLUMNS + ("seed",)))
        sys.stdout.write(text)
        return 0 if all(r["valid"] == "true" for r in agg) else 1
    spec = ExperimentSpec(gen if gen is not None else args.input, pipeline, cfg,
                          Path(args.out) if args.out else None)
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: build-graph, assess and eval."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluation, figures
from .execution_model import ExecutionGraph, GraphFormatError, TraceFormatError, build_graph, load_graph, parse_trace, save_graph
from .llm_gateway import ConfigError, Gateway, GatewayError, ModelConfig
from .mapping_engine import TraversalResult, traverse
from .quality_report import QualityReport, ReportFileError, assemble, load_machine, render
from .report_ingest import BugReport, ReportFormatError, load_report, load_reports
from .s2r_pipeline import PipelineError, extract_steps

PROVIDERS = {"mock": "mock_oracle", "remote": "remote_api", "mock_oracle": "mock_oracle", "remote_api": "remote_api"}


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    graph: str | None = None
    out_dir: str = "s2rqa-out"
    verbose: bool = False
    workers: int | None = None

    def validate(self) -> None:
        self.model.validate()
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError(f"workers must be a positive integer, got {self.workers!r}")


_CONFIG_KEYS = {
    "provider", "model", "endpoint", "api_key_env", "threshold", "max_retries", "timeout",
    "graph", "out_dir", "verbose", "workers",
}


def load_config_file(path: str | Path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path}: top level must be an object")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys: {', '.join(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> Config:
    """Defaults, then the config file, then explicit flags."""
    values = load_config_file(args.config) if getattr(args, "config", None) else {}
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    provider = values.get("provider", "mock")
    if provider not in PROVIDERS:
        raise ConfigError(f"unknown provider: {provider}")
    model = ModelConfig(provider=PROVIDERS[provider])
    if model.provider == "remote_api":
        model.model_name = "gpt-4"
    for name, key in (("model_name", "model"), ("endpoint", "endpoint"), ("api_key_env", "api_key_env"),
                      ("threshold", "threshold"), ("max_retries", "max_retries"), ("timeout", "timeout")):
        if key in values:
            setattr(model, name, values[key])
    cfg = Config(model, values.get("graph"), values.get("out_dir", "s2rqa-out"),
                 bool(values.get("verbose", False)), values.get("workers"))
    cfg.validate()
    return cfg


# --- pipeline ---------------------------------------------------------------

def assess_report(report: BugReport, graph: ExecutionGraph, gateway: Gateway,
                  verbose: bool = False) -> tuple[QualityReport, TraversalResult]:
    s2rs = extract_steps(report, gateway)
    result = traverse(graph, s2rs, gateway, verbose=verbose)
    return assemble(result, report, s2rs, graph.app_id), result


def _err(msg: str) -> None:
    print(f"s2rqa: error: {msg}", file=sys.stderr)


def cmd_build_graph(trace_dir: str, out_path: str) -> int:
    if not Path(trace_dir).is_dir():
        _err(f"{trace_dir}: not a directory")
        return 1
    files = sorted(Path(trace_dir).glob("*.json"))
    if not files:
        _err(f"{trace_dir}: no trace files (*.json)")
        return 1
    traces, failed = [], False
    for f in files:
        try:
            traces.append(parse_trace(f))
        except TraceFormatError as exc:
            _err(str(exc))
            failed = True
    if failed:
        return 1
    try:
        g = build_graph(traces)
    except (ValueError, GraphFormatError) as exc:
        _err(str(exc))
        return 1
    save_graph(g, out_path)
    print(f"{out_path}: {len(g.nodes)} nodes, {len(g.edges)} edges (from {len(traces)} traces)")
    return 0


def _collect_reports(report_paths: list[str], reports_dir: str | None) -> list[BugReport]:
    paths = [Path(p) for p in report_paths or []]
    if reports_dir:
        d = Path(reports_dir)
        if not d.is_dir():
            raise ReportFormatError(f"{reports_dir}: not a directory")
        paths += sorted(p for p in d.iterdir() if p.suffix.lower() in (".json", ".txt"))
    reports: list[BugReport] = []
    for p in paths:
        reports += load_reports(p) if p.suffix.lower() == ".json" else [load_report(p)]
    if not reports:
        raise ReportFormatError("no bug reports given (use --report or --reports-dir)")
    ids = [r.id for r in reports]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ReportFormatError(f"duplicate report ids: {', '.join(dupes)}")
    return reports


def cmd_assess(args: argparse.Namespace) -> int:
    try:
        cfg = resolve_config(args)
        if not cfg.graph:
            raise ConfigError("no graph given (use --graph or the config file)")
        graph = load_graph(cfg.graph)
        reports = _collect_reports(args.report, args.reports_dir)
    except (ConfigError, GraphFormatError, ReportFormatError) as exc:
        _err(str(exc))
        return 1
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gateway = Gateway(cfg.model, audit_log=out / "llm_audit.jsonl")

    def run(report: BugReport):
        try:
            return report, assess_report(report, graph, gateway, cfg.verbose), None
        except (GatewayError, PipelineError, ValueError) as exc:
            return report, None, exc

    workers = cfg.workers or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, reports))
    status = 0
    for report, done, exc in results:
        if exc is not None:
            _err(f"report {report.id}: {exc}")
            status = 1
            continue
        qr, traversal = done
        if cfg.verbose:
            for line in traversal.trace:
                print(f"[{report.id}] {line}", file=sys.stderr)
        for d in qr.diagnostics:
            print(f"s2rqa: warning: report {report.id}: {d}", file=sys.stderr)
        machine = out / f"{report.id}.quality.json"
        machine.write_text(render(qr, "machine"), encoding="utf-8")
        (out / f"{report.id}.quality.txt").write_text(render(qr, "human"), encoding="utf-8")
        counts = ", ".join(f"{k} {v}" for k, v in qr.summary.items())
        print(f"{report.id}: {counts} -> {machine}")
    return status


def _load_dir(path: str, loader, what: str) -> list:
    d = Path(path)
    if not d.is_dir():
        raise ValueError(f"{path}: not a directory")
    files = sorted(d.glob("*.json"))
    if not files:
        raise ValueError(f"{path}: no {what} files (*.json)")
    return [loader(f) for f in files]


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        predicted = _load_dir(args.predicted_dir, load_machine, "quality report")
        truth = _load_dir(args.truth_dir, evaluation.load_ground_truth, "ground-truth")
        compare = _load_dir(args.compare, load_machine, "quality report") if args.compare else None
        results = {"predicted": evaluation.evaluate_corpus(predicted, truth, compare)}
        if compare is not None:
            results["compare"] = evaluation.evaluate_corpus(compare, truth)
    except (ValueError, ReportFileError, evaluation.TruthFormatError) as exc:
        _err(str(exc))
        return 1
    names = {"predicted": Path(args.predicted_dir).name or "predicted",
             "compare": Path(args.compare).name if args.compare else "compare"}
    for key, res in results.items():
        print(evaluation.format_table(res, f"== {names[key]} ({len(truth)} reports) =="))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {names[k]: {"annotations": r.annotations.as_dict(), "missing_steps": r.missing_steps.as_dict()}
           for k, r in results.items()}
    overlap = results["predicted"].overlap
    if overlap is not None:
        doc["missing_step_overlap"] = overlap.counts()
        print("missing-step overlap: " + ", ".join(f"{k} {v}" for k, v in overlap.counts().items()))
    (out / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    rows = [row for k, r in results.items() for row in evaluation.metrics_rows(r, names[k])]
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    figures.plot_annotation_scores({names[k]: r for k, r in results.items()}, out / "annotation_scores.png")
    if overlap is not None:
        figures.plot_missing_overlap(overlap, (names["predicted"], names["compare"]), out / "missing_step_overlap.png")
    print(f"metrics written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2rqa", description="Assess the steps to reproduce in bug reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="build the app execution graph from interaction traces")
    p.add_argument("trace_dir")
    p.add_argument("--out", required=True, help="graph file to write")

    p = sub.add_parser("assess", help="annotate the S2Rs of bug reports")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--graph")
    p.add_argument("--report", action="append", default=[], help="bug report file (repeatable)")
    p.add_argument("--reports-dir")
    p.add_argument("--provider", choices=["mock", "remote"])
    p.add_argument("--model")
    p.add_argument("--endpoint")
    p.add_argument("--threshold", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir")
    p.add_argument("--verbose", action="store_true", default=None)

    p = sub.add_parser("eval", help="score quality reports against ground truth")
    p.add_argument("predicted_dir")
    p.add_argument("truth_dir")
    p.add_argument("--compare", help="a second system's quality reports")
    p.add_argument("--out-dir", default="s2rqa-eval")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="s2rqa: %(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "build-graph":
        return cmd_build_graph(args.trace_dir, args.out)
    if args.command == "assess":
        return cmd_assess(args)
    return cmd_eval(args)


if __name__ == "__main__":
    sys.exit(main())

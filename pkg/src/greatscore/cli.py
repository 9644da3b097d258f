"""Command-line entry point: ``great-score <command> [options]``.

Exit codes:
  0  success
  1  usage error (unknown command or flag, missing required option)
  2  input validation error (bad or missing file, contradictory records)
  3  endpoint failure
  4  invariant violation reported by ``verify``
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .audit import EndpointConfig, RemoteClassifier, audit_groups
from .calibration import calibrate, rank_report
from .errors import EndpointError, InvalidInput, RunAborted
from .io import load_groups, load_json, load_logits_bundle, load_metric_table, load_predictions, load_reference
from .lab import AffineModel, GeneratorSpec
from .lab.suite import SUITES, run_suites
from .reporting import RunManifest, TimingRecord, dumps, render, write_report
from .score import (
    Guarantee,
    GlobalEstimate,
    achieved_epsilon,
    cumulative_certified_ra,
    great_score_mean,
    local_great_score,
    sample_complexity,
    sample_scores,
)
from .transform import MODES, TransformConfig

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_ENDPOINT, EXIT_INVARIANT = 0, 1, 2, 3, 4
DEFAULT_SAMPLES = 500

log = logging.getLogger("greatscore")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--format", choices=("json", "csv"), default="json", help="artifact format")
    g.add_argument("--out", type=Path, help="write the artifact here (and a .manifest.json beside it)")
    g.add_argument("--transform", choices=MODES, help="output layer applied to logits")
    g.add_argument("--t1", type=float, default=1.0, help="sigmoid temperature")
    g.add_argument("--t2", type=float, default=1.0, help="softmax temperature")
    g.add_argument("--jobs", type=int, default=1, help="worker threads; never changes results")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="great-score", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    def add_sources(p):
        p.add_argument("--predictions", type=Path, help="JSONL with id, label and probs or logits")
        p.add_argument("--generator", type=Path, help="affine generator JSON")
        p.add_argument("--model", type=Path, help="affine model JSON")
        p.add_argument("--endpoint", help="prediction endpoint url, used with --generator")
        p.add_argument("--n", type=int, default=DEFAULT_SAMPLES, help="samples to draw from --generator")
        p.add_argument("--labels", choices=("uniform", "stratified"), default="uniform")

    p = add("score", "GREAT score from predictions, an affine model or an endpoint")
    add_sources(p)
    p.add_argument("--delta", type=float, help="attach the epsilon guaranteed at this confidence")
    p.add_argument("--timing", type=Path, help="write a timing record here")

    p = add("plan", "samples needed for an (epsilon, delta) guarantee")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--radius-units", action="store_true", help="epsilon is in radius units, not normalised gap units")

    p = add("curve", "cumulative certified robust accuracy")
    add_sources(p)
    p.add_argument("--radii", help="comma-separated increasing radii")
    p.add_argument("--max-radius", type=float, default=1.3)
    p.add_argument("--steps", type=int, default=27)

    p = add("calibrate", "temperature grid search maximising Spearman's rho")
    p.add_argument("--bundle", type=Path, required=True, help="JSONL with model, id, label, logits")
    p.add_argument("--reference", type=Path, required=True, help="CSV model,distortion")
    p.add_argument("--mode", choices=MODES[1:], default="softmax-after-sigmoid")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--trace-stride", type=int, default=1)

    p = add("verify", "run the verification property suites")
    p.add_argument("--suite", action="append", choices=("all", *SUITES), help="suite to run (repeatable)")

    p = add("audit", "group-wise scores from a remote endpoint")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--groups", type=Path, required=True, help="groups manifest JSON")
    p.add_argument("--cache-dir", type=Path)
    p.add_argument("--rate", type=float, default=10.0, help="requests per second")
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--timeout-ms", type=int, default=10_000)
    p.add_argument("--class-order", type=Path, help="JSON list naming classes in index order")
    p.add_argument("--renormalize", action="store_true")

    p = add("rank", "pairwise Spearman matrix of metric columns")
    p.add_argument("--table", type=Path, required=True, help="CSV: name,<metric>,<metric>,...")
    return parser


def _transform(args):
    if args.transform is None:
        return None
    return TransformConfig(args.transform, args.t1, args.t2)


def _scores(args):
    """Per-sample local scores from whichever source the flags name."""
    if args.predictions is not None:
        if args.generator or args.model or args.endpoint:
            raise UsageError("--predictions cannot be combined with --generator/--model/--endpoint")
        records = load_predictions(args.predictions, _transform(args))
        return np.array([local_great_score(r.prediction, r.label) for r in records]), [str(args.predictions)]
    if args.generator is None:
        raise UsageError("give --predictions, or --generator with --model or --endpoint")
    gen = GeneratorSpec.from_dict(load_json(args.generator))
    if (args.model is None) == (args.endpoint is None):
        raise UsageError("--generator needs exactly one of --model or --endpoint")
    if args.model is not None:
        model = AffineModel.from_dict(load_json(args.model))
        transform = _transform(args) or model.transform
        return (sample_scores(gen, model, transform, args.n, args.seed, labels=args.labels, jobs=args.jobs),
                [str(args.generator), str(args.model)])
    classifier = RemoteClassifier(EndpointConfig(args.endpoint, max_in_flight=max(1, args.jobs)))
    return (sample_scores(gen, classifier, _transform(args), args.n, args.seed, labels=args.labels, jobs=1),
            [str(args.generator), args.endpoint])


def _emit(args, artifact, inputs, name="estimate", trace_stride=1):
    if args.out is None:
        sys.stdout.write(render(artifact, args.format, name, trace_stride))
        return
    write_report(artifact, args.format, args.out, name, trace_stride)
    _write_manifest(args, inputs)


def _write_manifest(args, inputs):
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
              if k not in ("out", "verbose", "jobs", "seed", "command")}
    manifest = RunManifest(args.command, config, args.seed, tuple(inputs), (str(args.out),), __version__)
    Path(str(args.out) + ".manifest.json").write_text(dumps(manifest.to_dict()) + "\n", encoding="utf-8")


def cmd_score(args):
    start = time.perf_counter()
    scores, inputs = _scores(args)
    elapsed = time.perf_counter() - start
    est = great_score_mean(scores)
    if args.delta is not None:
        est = GlobalEstimate(est.mean, est.count, Guarantee(achieved_epsilon(est.count, args.delta), args.delta))
    _emit(args, est, inputs)
    if args.timing is not None:
        write_report(TimingRecord("score", len(scores), elapsed), args.format, args.timing)
    return EXIT_OK


def cmd_plan(args):
    plan = sample_complexity(args.epsilon, args.delta, radius_units=args.radius_units)
    print(f"n = {plan.n}")
    if args.out is not None:
        _emit(args, plan, [])
    return EXIT_OK


def cmd_curve(args):
    scores, inputs = _scores(args)
    if args.radii:
        try:
            radii = [float(v) for v in args.radii.split(",")]
        except ValueError as exc:
            raise InvalidInput(f"--radii: {exc}") from exc
    else:
        radii = np.linspace(0.0, args.max_radius, args.steps).tolist()
    _emit(args, cumulative_certified_ra(scores, radii), inputs)
    return EXIT_OK


def cmd_calibrate(args):
    models = load_logits_bundle(args.bundle)
    reference = load_reference(args.reference)
    result = calibrate(models, reference, args.mode, args.lo, args.hi, args.step)
    _emit(args, result, [str(args.bundle), str(args.reference)], trace_stride=args.trace_stride)
    return EXIT_OK


def cmd_verify(args):
    chosen = args.suite or ["all"]
    names = list(SUITES) if "all" in chosen else list(dict.fromkeys(chosen))
    results = run_suites(names, args.seed, jobs=args.jobs)
    for r in results:
        print(r.line())
    if args.out is not None:
        report = {"seed": args.seed, "checks": [{"name": r.name, "passed": r.passed, "summary": r.summary}
                                                for r in results]}
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(dumps(report) + "\n", encoding="utf-8")
        _write_manifest(args, [])
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def cmd_audit(args):
    class_order = None
    if args.class_order is not None:
        class_order = load_json(args.class_order)
        if not isinstance(class_order, list):
            raise InvalidInput("--class-order must hold a JSON list of class names")
    endpoint = EndpointConfig(args.endpoint, timeout_ms=args.timeout_ms, max_in_flight=args.max_in_flight,
                              rate_limit_per_s=args.rate, max_retries=args.retries,
                              cache_dir=str(args.cache_dir) if args.cache_dir else None,
                              class_order=class_order, renormalize=args.renormalize)
    report = audit_groups(endpoint, load_groups(args.groups))
    _emit(args, report, [str(args.groups), args.endpoint])
    failures = sum(g.failures for g in report.groups)
    if failures:
        log.warning("%d samples failed and were left out of the means", failures)
    return EXIT_OK if report.overall is not None else EXIT_ENDPOINT


def cmd_rank(args):
    _emit(args, rank_report(load_metric_table(args.table)), [str(args.table)])
    return EXIT_OK


COMMANDS = {"score": cmd_score, "plan": cmd_plan, "curve": cmd_curve, "calibrate": cmd_calibrate,
            "verify": cmd_verify, "audit": cmd_audit, "rank": cmd_rank}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"great-score: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunAborted, EndpointError) as exc:
        print(f"great-score: endpoint failure: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (InvalidInput, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"great-score: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

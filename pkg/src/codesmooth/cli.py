"""Command-line interface over the smoothing and certification core.

Subcommands: tokenize, perturb, predict, certify, evaluate, oracle
(beta | quantile | coverage | soundness), and serve. JSON results go to
stdout; progress and summaries go to stderr.

Exit codes: 0 success, 1 usage, 2 data or lexing error, 3 adapter or
transport error, 4 numerics error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from math import comb
from typing import Callable, Optional, Sequence, TypeVar

from .adapters import ClassifierAdapter, make_adapter
from .certification import beta_factor, beta_quantile, certificate_row, smoothed_predict
from .code_model import snippet_from_source
from .errors import (
    AdapterError,
    AlignmentError,
    DataError,
    LexError,
    NumericsError,
    PerturbationError,
    RenameError,
)
from .evaluation import (
    certify_dataset_detailed,
    emit_report,
    evaluate_dataset,
    load_adv,
    load_certificates,
    load_dataset,
    mean_radius,
    ncrr,
    snippet_from_record,
)
from .oracle import (
    _soundness_sweep_detailed,
    beta_quantile_oracle,
    coverage_experiment,
    enumerate_beta,
    make_report,
    mc_beta_estimate,
)
from .perturbation import ALL_OPS, EditOp, SmoothingConfig, generate_batch

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ADAPTER = 3
EXIT_NUMERICS = 4

MODEL_ENV_VAR = "CODESMOOTH_MODEL"

_T = TypeVar("_T")
_R = TypeVar("_R")


class _UsageError(Exception):
    """Raised by handlers for argument problems argparse cannot see."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage failures use the usage exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_source(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None


def _parse_ops(text: str) -> frozenset[EditOp]:
    by_name = {op.value: op for op in EditOp}
    ops = set()
    for part in text.split(","):
        name = part.strip().lower()
        if name not in by_name:
            raise argparse.ArgumentTypeError(
                f"unknown op {name!r}; expected a comma list of insert,replace,delete"
            )
        ops.add(by_name[name])
    if not ops:
        raise argparse.ArgumentTypeError("op set must not be empty")
    return frozenset(ops)


def _add_smoothing_flags(parser: argparse.ArgumentParser, with_alpha: bool = False) -> None:
    group = parser.add_argument_group("smoothing")
    group.add_argument("--n", dest="n_samples", type=int, default=100,
                       help="samples per vote (default 100)")
    group.add_argument("--eta", type=float, default=0.6,
                       help="edit-mode perturbation rate (default 0.6)")
    group.add_argument("--perturb-fraction", type=float, default=0.9,
                       help="fraction of identifier entries rewritten (default 0.9)")
    group.add_argument("--mode", choices=("mask", "edit"), default="mask",
                       help="perturbation mode (default mask)")
    group.add_argument("--ops", type=_parse_ops, default=ALL_OPS,
                       help="edit-mode op set, e.g. insert,replace,delete")
    group.add_argument("--seed", type=int, default=0, help="base RNG seed (default 0)")
    if with_alpha:
        group.add_argument("--alpha", type=float, default=0.001,
                           help="one-sided bound level (default 0.001)")


def _config_from_args(args: argparse.Namespace, two_batch: bool = False) -> SmoothingConfig:
    return SmoothingConfig(
        n_samples=args.n_samples,
        perturb_fraction=args.perturb_fraction,
        eta=args.eta,
        mode=args.mode,
        op_set=args.ops,
        alpha=getattr(args, "alpha", 0.001),
        seed=args.seed,
        two_batch=two_batch,
    )


def _resolve_model(args: argparse.Namespace) -> ClassifierAdapter:
    spec = getattr(args, "model", None) or os.environ.get(MODEL_ENV_VAR)
    if not spec:
        raise _UsageError(f"--model is required (or set {MODEL_ENV_VAR})")
    return make_adapter(spec)


def _map_records(fn: Callable[[_T], _R], items: Sequence[_T], workers: int) -> list[_R]:
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(fn, items))


def cmd_tokenize(args: argparse.Namespace) -> int:
    snippet = snippet_from_source(_read_source(args.file), args.lang)
    if args.table:
        table = {
            "h": snippet.identifier_count,
            "identifiers": [
                {"name": entry.name, "occurrences": list(entry.occurrences)}
                for entry in snippet.identifiers.entries
            ],
        }
        print(json.dumps(table))
    else:
        for token in snippet.tokens:
            print(json.dumps(
                {"text": token.text, "kind": token.kind,
                 "start": token.start, "end": token.end}
            ))
    return EXIT_OK


def cmd_perturb(args: argparse.Namespace) -> int:
    snippet = snippet_from_source(_read_source(args.file), args.lang)
    config = _config_from_args(args)
    for sample in generate_batch(snippet, config):
        print(json.dumps({
            "index": sample.sample_index,
            "code": sample.snippet.source,
            "perturbed": sorted(sample.perturbed_indices),
        }))
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    records = load_dataset(args.dataset)
    config = _config_from_args(args)
    with _resolve_model(args) as adapter:

        def one(record):
            snippet = snippet_from_record(record)
            label, tally = smoothed_predict(snippet, config, adapter)
            votes = {str(lbl): count for lbl, count in sorted(tally.counts.items())}
            return {"id": record.id, "predicted": label, "votes": votes}

        rows = _map_records(one, records, args.workers)
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    records = load_dataset(args.dataset)
    if args.mode == "edit" and not args.unsound_edit_certificates:
        print(
            "warning: edit mode does not yield sound certificates; forcing mask "
            "mode (pass --unsound-edit-certificates to override)",
            file=sys.stderr,
        )
        args.mode = "mask"
    config = _config_from_args(args, two_batch=args.two_batch)
    with _resolve_model(args) as adapter:
        detailed = certify_dataset_detailed(
            records, config, adapter,
            workers=args.workers,
            allow_unsound_edit_certificates=args.unsound_edit_certificates,
        )
    with open(args.out, "w", encoding="utf-8") as handle:
        for record, cert, _ in detailed:
            handle.write(json.dumps(certificate_row(record.id, cert)) + "\n")
    certs = [cert for _, cert, _ in detailed]
    try:
        ncrr_value = ncrr(certs)
    except DataError:
        ncrr_value = float("nan")
    abstain = sum(1 for c in certs if c.abstained) / len(certs) if certs else 0.0
    print(
        f"certified {len(certs)} records: abstain_rate={abstain:.4f} "
        f"mean_radius={mean_radius(certs):.4f} ncrr={ncrr_value:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    records = load_dataset(args.dataset)
    adv = load_adv(args.adv) if args.adv else None
    cert_rows = load_certificates(args.certs) if args.certs else None
    config = _config_from_args(args)
    need_model = cert_rows is None or adv is not None
    adapter = _resolve_model(args) if need_model else None
    try:
        report = evaluate_dataset(
            records, config, adapter,
            adv_pairs=adv, certificate_rows=cert_rows, workers=args.workers,
        )
    finally:
        if adapter is not None:
            adapter.close()
    emit_report(report, args.report, args.format)
    asr_text = "n/a" if report.asr is None else f"{report.asr:.4f}"
    print(
        f"evaluated {len(report.per_sample)} records: acc={report.acc:.4f} "
        f"asr={asr_text} ncrr={report.ncrr:.4f} abstain_rate={report.abstain_rate:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


def _print_oracle(report) -> None:
    print(json.dumps(asdict(report), sort_keys=True))


def cmd_oracle_beta(args: argparse.Namespace) -> int:
    analytic = beta_factor(args.h, args.k, args.r)
    method = args.method
    if method == "auto":
        method = "enumerate" if args.h <= 20 else "mc"
    if method == "enumerate":
        oracle_value = enumerate_beta(args.h, args.k, args.r)
        count = comb(args.h, args.k)
    else:
        oracle_value = mc_beta_estimate(args.h, args.k, args.r, args.trials, args.seed)
        count = args.trials
    _print_oracle(make_report("beta_factor", analytic, oracle_value, count))
    return EXIT_OK


def cmd_oracle_quantile(args: argparse.Namespace) -> int:
    analytic = beta_quantile(args.p, args.a, args.b)
    oracle_value = beta_quantile_oracle(args.p, args.a, args.b)
    _print_oracle(make_report("beta_quantile", analytic, oracle_value, 0))
    return EXIT_OK


def cmd_oracle_coverage(args: argparse.Namespace) -> int:
    observed = coverage_experiment(args.p_true, args.n, args.alpha, args.trials, args.seed)
    nominal = 1.0 - 2.0 * args.alpha
    _print_oracle(make_report("coverage", nominal, observed, args.trials))
    return EXIT_OK


def cmd_oracle_soundness(args: argparse.Namespace) -> int:
    if args.watch_size < 0 or args.watch_size > args.h:
        raise _UsageError("--watch-size must lie in [0, --h]")
    source = "".join(f"int v{i};\n" for i in range(args.h))
    snippet = snippet_from_source(source, "c")
    watch = {f"v{i}" for i in range(args.watch_size)}
    config = SmoothingConfig(
        n_samples=args.n_samples,
        perturb_fraction=args.perturb_fraction,
        alpha=args.alpha,
    )
    beta_fn = beta_factor
    if args.negative_control:
        def beta_fn(h: int, k: int, r: int) -> float:
            return beta_factor(h, k, r) / 2.0

    violations, enumerated, radius = _soundness_sweep_detailed(
        snippet, config, watch, beta_fn=beta_fn
    )
    print(f"claimed radius {radius} over h={args.h}", file=sys.stderr)
    _print_oracle(make_report("soundness_violations", 0.0, float(violations), enumerated))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(default_model=args.model or os.environ.get(MODEL_ENV_VAR))
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="codesmooth",
                     description="Randomized smoothing and certification for code classifiers.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_tok = sub.add_parser("tokenize", help="lex a file and print tokens or the identifier table")
    p_tok.add_argument("--lang", required=True, choices=("c", "java", "generic"))
    p_tok.add_argument("--table", action="store_true", help="print the identifier table instead")
    p_tok.add_argument("file", help="source file, or - for stdin")
    p_tok.set_defaults(func=cmd_tokenize)

    p_pert = sub.add_parser("perturb", help="print smoothed variants of a file as JSON lines")
    p_pert.add_argument("--lang", default="generic", choices=("c", "java", "generic"))
    _add_smoothing_flags(p_pert)
    p_pert.add_argument("file", help="source file, or - for stdin")
    p_pert.set_defaults(func=cmd_perturb)

    p_pred = sub.add_parser("predict", help="smoothed majority-vote predictions for a dataset")
    p_pred.add_argument("--model", help="builtin:NAME | subprocess:CMD | http:URL "
                                        f"(default ${MODEL_ENV_VAR})")
    _add_smoothing_flags(p_pred)
    p_pred.add_argument("--workers", type=int, default=1)
    p_pred.add_argument("dataset", help="dataset JSON lines file")
    p_pred.set_defaults(func=cmd_predict)

    p_cert = sub.add_parser("certify", help="certify a dataset and write certificate rows")
    p_cert.add_argument("--model", help="builtin:NAME | subprocess:CMD | http:URL "
                                        f"(default ${MODEL_ENV_VAR})")
    _add_smoothing_flags(p_cert, with_alpha=True)
    p_cert.add_argument("--two-batch", action="store_true",
                        help="separate selection and estimation batches of N samples each")
    p_cert.add_argument("--unsound-edit-certificates", action="store_true",
                        help="allow certificates in edit mode (statistically unsound)")
    p_cert.add_argument("--workers", type=int, default=1)
    p_cert.add_argument("--out", required=True, help="output certificate JSON lines path")
    p_cert.add_argument("dataset", help="dataset JSON lines file")
    p_cert.set_defaults(func=cmd_certify)

    p_eval = sub.add_parser("evaluate", help="dataset metrics report (ACC/ASR/NCRR)")
    p_eval.add_argument("--model", help="builtin:NAME | subprocess:CMD | http:URL "
                                        f"(default ${MODEL_ENV_VAR})")
    _add_smoothing_flags(p_eval, with_alpha=True)
    p_eval.add_argument("--adv", help="adversarial pairs JSON lines file")
    p_eval.add_argument("--certs", help="precomputed certificate JSON lines file")
    p_eval.add_argument("--report", required=True, help="report output path (.json or .csv)")
    p_eval.add_argument("--format", choices=("json", "csv"),
                        help="report format (default: by extension)")
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("dataset", help="dataset JSON lines file")
    p_eval.set_defaults(func=cmd_evaluate)

    p_oracle = sub.add_parser("oracle", help="independent verifiers for certified quantities")
    osub = p_oracle.add_subparsers(dest="oracle_command", required=True, metavar="QUANTITY")

    p_beta = osub.add_parser("beta", help="beta factor vs enumeration or Monte Carlo")
    p_beta.add_argument("--h", type=int, required=True)
    p_beta.add_argument("--k", type=int, required=True)
    p_beta.add_argument("--r", type=int, required=True)
    p_beta.add_argument("--method", choices=("auto", "enumerate", "mc"), default="auto")
    p_beta.add_argument("--trials", type=int, default=100_000)
    p_beta.add_argument("--seed", type=int, default=0)
    p_beta.set_defaults(func=cmd_oracle_beta)

    p_quant = osub.add_parser("quantile", help="beta quantile vs integration oracle")
    p_quant.add_argument("--p", type=float, required=True)
    p_quant.add_argument("--a", type=float, required=True)
    p_quant.add_argument("--b", type=float, required=True)
    p_quant.set_defaults(func=cmd_oracle_quantile)

    p_cov = osub.add_parser("coverage", help="bound coverage over simulated binomial draws")
    p_cov.add_argument("--p-true", type=float, required=True)
    p_cov.add_argument("--n", type=int, required=True)
    p_cov.add_argument("--alpha", type=float, default=0.001)
    p_cov.add_argument("--trials", type=int, default=10_000)
    p_cov.add_argument("--seed", type=int, default=0)
    p_cov.set_defaults(func=cmd_oracle_coverage)

    p_sound = osub.add_parser("soundness",
                              help="exhaustive certificate check on a synthetic fixture")
    p_sound.add_argument("--h", type=int, default=8)
    p_sound.add_argument("--watch-size", type=int, default=1)
    p_sound.add_argument("--n", dest="n_samples", type=int, default=100)
    p_sound.add_argument("--perturb-fraction", type=float, default=0.9)
    p_sound.add_argument("--alpha", type=float, default=0.001)
    p_sound.add_argument("--negative-control", action="store_true",
                         help="halve the beta factor to prove the sweep detects unsoundness")
    p_sound.set_defaults(func=cmd_oracle_soundness)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--model", help="default model spec for requests that omit one")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LexError, PerturbationError, AlignmentError, RenameError) as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AdapterError as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except NumericsError as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except ValueError as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"codesmooth: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

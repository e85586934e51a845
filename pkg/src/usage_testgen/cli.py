"""Command-line front-end.

Exit codes: 0 success, 1 validation/parse errors, 2 infeasible model (also
non-ergodic sampler and stalled campaign), 3 enumeration limit exceeded,
4 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile

from . import campaign as camp
from .convergence import diagnostics, optimize_alpha
from .core import Configuration, validate_model
from .errors import (
    InfeasibleError,
    MergeScopeError,
    ModelError,
    ParseError,
    StallError,
    TooLargeError,
    UsageModelError,
)
from .exact import DEFAULT_LIMIT, check_positivity, joint_distribution, marginal, merge_parameters, top_k
from .modelio import dumps_canonical, parse_model, serialize_model
from .rng import MASK64
from .samplers import AlphaVector, SamplerConfig, run, trace_to_tsv

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_USAGE = 0, 1, 2, 3, 4
LIMIT_ENV = "USAGE_TESTGEN_LIMIT"
_USAGE_CODES = {"E_USAGE", "E_ALPHA", "E_SHAPE"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def exit_code_for(exc: BaseException) -> int:
    """Map any package error to its documented exit code."""
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, TooLargeError):
        return EXIT_LIMIT
    if isinstance(exc, (InfeasibleError, StallError)):
        return EXIT_INFEASIBLE
    if isinstance(exc, UsageModelError) and exc.code in _USAGE_CODES:
        return EXIT_USAGE
    if isinstance(exc, (ParseError, ModelError, MergeScopeError, UsageModelError, OSError)):
        return EXIT_INVALID
    return EXIT_INVALID


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _nonneg(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="usage-testgen", description="Usage-model test generation with Gibbs samplers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("model", help="model document (JSON)")
        sp.add_argument("--limit", type=_pos, help=f"enumeration cap (env {LIMIT_ENV}, default {DEFAULT_LIMIT})")
        sp.add_argument("--out", help="output file (written atomically)")
        return sp

    cmd("validate", "check a model document")
    sp = cmd("exact", "exact joint distribution by enumeration")
    sp.add_argument("--top", type=_pos, default=10, help="configurations listed on stdout")

    sp = cmd("sample", "draw a Gibbs-sampler trace")
    sp.add_argument("--seed", type=_u64, required=True)
    sp.add_argument("--n", type=_nonneg, default=1000)
    sp.add_argument("--burn-in", type=_nonneg)
    sp.add_argument("--thin", type=_pos, default=1)
    sp.add_argument("--sampler", choices=("rsgs", "periodic"), default="rsgs")
    sp.add_argument("--alpha", type=_csv_list)
    sp.add_argument("--sweep-order", type=_csv_list)

    sp = cmd("analyze", "exact convergence diagnostics of a sampler")
    sp.add_argument("--sampler", choices=("rsgs", "periodic"), default="rsgs")
    sp.add_argument("--alpha", type=_csv_list)
    sp.add_argument("--sweep-order", type=_csv_list)
    sp.add_argument("--n", type=_pos, default=50, help="contraction table length")

    sp = cmd("optimize-alpha", "search site probabilities minimizing Dobrushin's coefficient")
    sp.add_argument("--budget", type=_pos, default=200)

    sp = cmd("merge", "replace parameters by one macro-parameter")
    sp.add_argument("--ids", type=_csv_list, required=True)

    sp = cmd("campaign", "generate a test campaign")
    sp.add_argument("--strategy", choices=camp.STRATEGIES, default="profile")
    sp.add_argument("--size", type=_nonneg, default=10)
    sp.add_argument("--seed", type=_u64)
    sp.add_argument("--burn-in", type=_nonneg)
    sp.add_argument("--thin", type=_pos, default=1)
    sp.add_argument("--format", choices=("structured", "csv"), default="structured")

    sp = cmd("report", "coverage and traceability report of a campaign")
    sp.add_argument("campaign", help="campaign file (structured or CSV export)")
    return p


def _limit(args):
    if args.limit is not None:
        return args.limit
    env = os.environ.get(LIMIT_ENV)
    if env:
        try:
            v = int(env)
        except ValueError:
            raise UsageError(f"{LIMIT_ENV} must be a positive integer, got {env!r}") from None
        if v < 1:
            raise UsageError(f"{LIMIT_ENV} must be a positive integer, got {env!r}")
        return v
    return DEFAULT_LIMIT


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _alpha(model, args):
    if args.alpha is None:
        return None
    if args.sampler != "rsgs":
        raise UsageError("--alpha applies to --sampler rsgs only")
    try:
        return AlphaVector.from_sequence(model, [float(a) for a in args.alpha])
    except ValueError as exc:
        raise UsageError(f"bad --alpha: {exc}") from None


def _sweep(args):
    if args.sweep_order is not None and args.sampler != "periodic":
        raise UsageError("--sweep-order applies to --sampler periodic only")
    return args.sweep_order


def _cmd_validate(args, out, err):
    text = _read(args.model)
    try:
        model = parse_model(text)
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=err)
        print(f"{len(exc.diagnostics)} errors, 0 warnings", file=out)
        return EXIT_INVALID, None
    report = validate_model(model)
    for d in report.warnings:
        print(d, file=err)
    print(report.summary(), file=out)
    return EXIT_OK, None


def _cmd_exact(args, model, out, err):
    dist = joint_distribution(model, _limit(args))
    holds, zero = check_positivity(dist)
    cm = dist.compiled
    print(f"{len(dist)} feasible configurations with positive mass (of {dist.size_of_space}); "
          f"z_raw={dist.z_raw!r}; positivity={'holds' if holds else f'fails ({zero} zero-mass)'}", file=out)
    for cfg, p in top_k(dist, args.top):
        print(f"  {p:.12f}  " + " ".join(f"{k}={v}" for k, v in cfg.items()), file=out)
    doc = {
        "model_name": model.name,
        "parameters": list(cm.order),
        "z_raw": dist.z_raw,
        "temperature": dist.temperature,
        "positivity": holds,
        "zero_mass_configurations": zero,
        "marginals": {pid: marginal(dist, pid) for pid in cm.order},
        "configurations": [
            {"config": [cm.class_ids[k][c] for k, c in enumerate(row)], "probability": float(p)}
            for row, p in zip(dist.states.tolist(), dist.probs)
        ],
    }
    return EXIT_OK, dumps_canonical(doc)


def _cmd_sample(args, model, out, err):
    cfg = SamplerConfig(
        kind=args.sampler, n_samples=args.n, seed=args.seed, burn_in=args.burn_in,
        thinning=args.thin, alpha=_alpha(model, args),
        sweep_order=tuple(_sweep(args)) if args.sweep_order else None,
    )
    trace = run(model, cfg)
    print(f"{len(trace)} samples, {trace.meta['raw_steps']} raw steps ({trace.meta['step_unit']}s), "
          f"seed {args.seed}", file=out)
    return EXIT_OK, trace_to_tsv(trace)


def _cmd_analyze(args, model, out, err):
    report = diagnostics(model, args.sampler, _alpha(model, args), _sweep(args), n_max=args.n,
                         limit=_limit(args))
    print(report.table_text(), file=out)
    if not report.ergodic:
        reason = "reducible" if not report.irreducible else f"periodic (period {report.period})"
        print(f"E_NOT_ERGODIC: the {args.sampler} kernel is {reason} over the {report.n_states} feasible "
              "states; samples will not converge to the model distribution", file=err)
        return EXIT_INFEASIBLE, None
    return EXIT_OK, dumps_canonical(report.to_document())


def _cmd_optimize(args, model, out, err):
    res = optimize_alpha(model, budget=args.budget, limit=_limit(args))
    print(f"delta {res.dobrushin:.12f} (uniform {res.uniform_dobrushin:.12f}) after {res.evaluations} evaluations",
          file=out)
    print("alpha " + ",".join(repr(res.alpha.values[p]) for p in model.chain_order), file=out)
    doc = {"alpha": dict(res.alpha.values), "dobrushin": res.dobrushin,
           "uniform_dobrushin": res.uniform_dobrushin, "evaluations": res.evaluations}
    return EXIT_OK, dumps_canonical(doc)


def _cmd_merge(args, model, out, err):
    merged = merge_parameters(model, args.ids, limit=_limit(args))
    print(f"merged {','.join(args.ids)}: {model.V} -> {merged.V} parameters", file=out)
    return EXIT_OK, serialize_model(merged)


def _cmd_campaign(args, model, out, err):
    if args.strategy == "profile" and args.seed is None:
        raise UsageError("--seed is required for the profile strategy")
    seed = 0 if args.seed is None else args.seed
    c = camp.generate_campaign(model, args.strategy, args.size, seed, limit=_limit(args),
                               burn_in=args.burn_in, thinning=args.thin)
    print(f"{len(c)} cases ({args.strategy}), {c.duplicates_eliminated} duplicates eliminated", file=out)
    return EXIT_OK, camp.export_campaign(c, args.format)


def _load_campaign(text, model):
    if text.lstrip().startswith("{"):
        return camp.import_campaign(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    params = tuple(model.chain_order)
    cases = tuple(
        camp.TestCase(int(r["case_id"]), Configuration((p, r[p]) for p in params),
                      float(r["probability"]) if r["probability"] else None, r["strategy"],
                      tuple(x for x in r["requirements"].split(";") if x))
        for r in rows
    )
    strategy = cases[0].strategy if cases else ""
    return camp.TestCampaign(model.name, camp.model_digest(model), 0, strategy, params, cases, 0)


def _cmd_report(args, model, out, err):
    c = _load_campaign(_read(args.campaign).decode("utf-8"), model)
    digest = camp.model_digest(model)
    if c.model_digest != digest:
        print(f"warning: campaign digest {c.model_digest[:12]} does not match model {digest[:12]}", file=err)
    rep = camp.coverage_report(c, model, limit=_limit(args))
    print(f"cases                 {len(c)}", file=out)
    print(f"class coverage        {rep.class_coverage:.4f} ({rep.n_classes} classes)", file=out)
    print(f"pair coverage         {rep.pair_coverage:.4f} ({rep.n_pairs} pairs)", file=out)
    print(f"requirement coverage  {rep.requirement_coverage:.4f} ({rep.n_requirements} requirements)", file=out)
    for case in c.cases:
        print(f"  case {case.id}: {', '.join(case.requirement_ids) or '-'}", file=out)
    doc = {"model_name": model.name, "model_digest": digest, "cases": len(c), **rep.to_document()}
    return EXIT_OK, dumps_canonical(doc)


_COMMANDS = {
    "exact": _cmd_exact,
    "sample": _cmd_sample,
    "analyze": _cmd_analyze,
    "optimize-alpha": _cmd_optimize,
    "merge": _cmd_merge,
    "campaign": _cmd_campaign,
    "report": _cmd_report,
}


def run_cli(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "validate":
            code, payload = _cmd_validate(args, out, err)
        else:
            model = parse_model(_read(args.model))
            code, payload = _COMMANDS[args.command](args, model, out, err)
        if code == EXIT_OK and payload is not None and args.out:
            _write_atomic(args.out, payload)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    except ParseError as exc:
        for d in exc.diagnostics:
            print(d, file=err)
        return EXIT_INVALID
    except TooLargeError as exc:
        print(f"{exc} (raise it with --limit or {LIMIT_ENV})", file=err)
        return EXIT_LIMIT
    except (UsageModelError, OSError) as exc:
        print(exc, file=err)
        return exit_code_for(exc)


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

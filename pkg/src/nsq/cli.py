"""Command-line front end.

Subcommands: ``embed``, ``quantize``, ``recover``, ``rip``, ``mrip``,
``identity``, ``experiment``.  Exit codes: 0 success, 1 usage error,
2 invariant violation.  ``NSQ_THREADS`` caps trial parallelism.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .condense import HAT, condenser_for_scheme
from .embed import (
    EmbeddingPipeline,
    embed_point,
    evaluate_embedding,
    gaussian_width_mc,
    recommended_p,
    sample_l1_ball_points,
    write_code,
)
from .experiments import EXPERIMENT_KINDS, ExperimentConfig, run_experiment, _fmt
from .quantize import (
    Alphabet,
    Beta,
    MSQ,
    noise_transfer_matrix,
    quantize_noise_shaping,
    scheme_from_string,
    scheme_label,
    stability_margin,
)
from .recover import (
    RecoveryProblem,
    choose_eta,
    generate_sparse_signal,
    oracle_eta,
    reconstruct,
)
from .rip import estimate_rip, exact_rip_small, expectation_identity_check, mrip_check
from .transforms import ENSEMBLE_KINDS, sample_ensemble
from . import plotting

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _parse_p(value: str):
    return value if value == "auto" else int(value)


def _add_common(sub, *, with_scheme=True):
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--kind", choices=ENSEMBLE_KINDS, default="boe-hadamard",
                     help="measurement ensemble family")
    if with_scheme:
        sub.add_argument("--scheme", default="sd:r=1",
                         help="msq | sd:r=R | beta:B (B may be a fraction like 10/9)")
    sub.add_argument("--L", type=int, default=1, help="alphabet has 2L levels")
    sub.add_argument("--delta", type=float, default=1.0, help="half the level spacing")
    sub.add_argument("--out", default="", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nsq", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nsq {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("quantize", parents=[], help="noise-shape a signal")
    s.add_argument("--m", type=int, default=0, help="length of the synthesized signal")
    s.add_argument("--mu", type=float, default=None,
                   help="input amplitude for the synthesized signal (default 8/9 * delta)")
    s.add_argument("--input", default="", help="text file of samples (overrides --m/--mu)")
    _add_common(s)

    s = subs.add_parser("embed", help="embed random l1-ball points into codes")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p", type=_parse_p, default="auto",
                   help="block count; 'auto' picks a good divisor of m")
    s.add_argument("--points", type=int, default=8)
    s.add_argument("--alpha", type=float, default=0.5,
                   help="assumed multiplicative distortion in the report")
    _add_common(s)

    s = subs.add_parser("recover", help="quantize measurements of a sparse signal and reconstruct")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--eta-mode", choices=("analytic", "oracle"), default="analytic")
    _add_common(s)

    s = subs.add_parser("rip", help="estimate the isometry defect of the condensed operator")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--exact", action="store_true", help="also enumerate all supports")
    _add_common(s)

    s = subs.add_parser("mrip", help="multilevel isometry profile")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--base-k", type=int, default=1)
    s.add_argument("--base-alpha", type=float, default=0.5)
    s.add_argument("--trials", type=int, default=1000)
    _add_common(s)

    s = subs.add_parser("identity", help="check the sign-expectation identity by enumeration")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--count", type=int, default=10, help="number of random test vectors")
    _add_common(s)

    s = subs.add_parser("experiment", help="run a configured sweep")
    s.add_argument("--config", default="", help="key=value config file")
    s.add_argument("--experiment", choices=EXPERIMENT_KINDS, default=None,
                   dest="exp_kind", help="experiment kind (config key: kind)")
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--m", type=int, default=None)
    s.add_argument("--p", type=int, default=None)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--lambda-sweep", default=None, help="comma list, e.g. 4,8,16")
    s.add_argument("--scheme", default=None)
    s.add_argument("--ensemble", choices=ENSEMBLE_KINDS, default=None)
    s.add_argument("--L", type=int, default=None)
    s.add_argument("--delta", type=float, default=None)
    s.add_argument("--trials", type=int, default=None)
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--eta-mode", choices=("analytic", "oracle"), default=None)
    s.add_argument("--base-k", type=int, default=None)
    s.add_argument("--base-alpha", type=float, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default=None)
    return parser


def _scheme_for(args, lam: int):
    scheme = scheme_from_string(args.scheme)
    if isinstance(scheme, Beta):
        scheme = Beta(beta=scheme.beta, lam=lam)
    return scheme


def _cmd_quantize(args) -> int:
    alphabet = Alphabet(L=args.L, delta=args.delta)
    if args.input:
        y = np.loadtxt(args.input).ravel()
        m = y.shape[0]
    elif args.m > 0:
        m = args.m
        mu = args.mu if args.mu is not None else (8.0 / 9.0) * args.delta
        y = np.random.default_rng(args.seed).uniform(-mu, mu, size=m)
    else:
        print("error: give --m or --input", file=sys.stderr)
        return EXIT_USAGE
    scheme = _scheme_for(args, lam=max(1, m))  # beta runs as a single block
    code = quantize_noise_shaping(y, scheme, alphabet)
    margin = stability_margin(scheme, alphabet, code.mu)
    print(f"scheme={scheme_label(scheme)} m={m} L={args.L} delta={args.delta:g}")
    print(f"input sup-norm    : {code.mu:.6g}")
    print(f"stability margin  : {margin:.6g} ({'certified' if margin >= 0 else 'uncertified'})")
    print(f"state sup-norm    : {code.state_sup:.6g}")
    if m and m <= 4096:
        h = noise_transfer_matrix(scheme, m)
        resid = float(np.max(np.abs(y - code.q - h @ code.u)))
        print(f"relation residual : {resid:.3e}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "y", "q", "u"])
            for i in range(m):
                writer.writerow([i, _fmt(float(y[i])), _fmt(float(code.q[i])), _fmt(float(code.u[i]))])
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_embed(args) -> int:
    scheme = scheme_from_string(args.scheme)
    p = args.p
    if p == "auto":
        if isinstance(scheme, MSQ):
            p = args.m
        else:
            p = recommended_p(args.m, scheme)
    pl = EmbeddingPipeline.create(
        args.n, args.m, p, scheme, kind=args.kind, seed=args.seed,
        L=args.L, delta=args.delta,
    )
    pts = sample_l1_ball_points(args.n, args.points, seed=args.seed ^ 0x9E3779B9)
    report = evaluate_embedding(pts, pl, alpha=args.alpha)
    width = gaussian_width_mc(pts, samples=2000, seed=args.seed)
    print(f"n={args.n} m={args.m} p={p} lambda={args.m // p} scheme={scheme_label(pl.scheme)}")
    print(f"points={args.points} pairs={report.d_true.shape[0]}")
    print(f"gaussian width    : {width.width:.4f} (radius {width.radius:.4f})")
    print(f"fitted alpha, eta : {report.alpha_fit:.4f}, {report.eta_fit:.4f}")
    print(f"eta at alpha={args.alpha:g} : {report.eta_needed:.4f}")
    print(f"max additive part : {float(np.max(report.add_residual)):.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        codes = embed_point(pl, pts)
        for i in range(codes.shape[0]):
            write_code(out / f"code_{i:04d}.nsqc", codes[i], pl.condenser.lam, p, pl.scheme)
        with open(out / "distances.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["d_true", "d_embedded", "d_linear", "add_residual"])
            for row in zip(
                report.d_true, report.d_embedded, report.d_linear, report.add_residual
            ):
                writer.writerow([_fmt(float(v)) for v in row])
        plotting.save_distance_scatter(
            out / "distances.png",
            report.d_true,
            report.d_embedded,
            title=f"embedded vs true distances ({scheme_label(pl.scheme)})",
        )
        print(f"wrote {out}/code_*.nsqc, distances.csv, distances.png")
    return EXIT_OK


def _cmd_recover(args) -> int:
    if args.m % args.p != 0:
        print("error: p must divide m", file=sys.stderr)
        return EXIT_USAGE
    lam = args.m // args.p
    scheme = _scheme_for(args, lam)
    if isinstance(scheme, MSQ):
        print("error: recovery needs a noise-shaping scheme", file=sys.stderr)
        return EXIT_USAGE
    alphabet = Alphabet(L=args.L, delta=args.delta)
    kids = np.random.SeedSequence(args.seed).spawn(2)
    ens = sample_ensemble(args.kind, args.n, args.m,
                          int(kids[0].generate_state(1, dtype=np.uint64)[0]))
    sig = generate_sparse_signal(args.n, args.k,
                                 int(kids[1].generate_state(1, dtype=np.uint64)[0]), ens)
    x = sig.dense()
    code = quantize_noise_shaping(ens.apply(x), scheme, alphabet)
    cond = condenser_for_scheme(scheme, lam=lam, p=args.p, scaling=HAT)
    analytic = choose_eta(scheme, lam, args.delta)
    realized = oracle_eta(ens, cond, x, code.q)
    eta = realized if args.eta_mode == "oracle" else analytic
    feasible = realized <= analytic + 1e-12
    res = reconstruct(RecoveryProblem(ensemble=ens, condenser=cond, q=code.q, eta=eta))
    err = float(np.linalg.norm(res.x - x))
    print(f"n={args.n} m={args.m} p={args.p} lambda={lam} k={args.k} "
          f"scheme={scheme_label(scheme)}")
    print(f"eta ({args.eta_mode})    : {eta:.6g}  [analytic {analytic:.6g}, realized {realized:.6g}]")
    print(f"recovery error    : {err:.6g}")
    print(f"solver            : {res.iterations} iterations, "
          f"residual {res.residual_norm:.3e}, converged={res.converged}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "recovery.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "x_true", "x_hat"])
            for i in range(args.n):
                writer.writerow([i, _fmt(float(x[i])), _fmt(float(res.x[i]))])
        print(f"wrote {out}/recovery.csv")
    if not feasible:
        print("violation: true signal infeasible at the analytic eta", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_rip(args) -> int:
    if args.m % args.p != 0:
        print("error: p must divide m", file=sys.stderr)
        return EXIT_USAGE
    lam = args.m // args.p
    scheme = _scheme_for(args, lam)
    cond = condenser_for_scheme(scheme, lam=lam, p=args.p, scaling=HAT)
    kids = np.random.SeedSequence(args.seed).spawn(2)
    ens = sample_ensemble(args.kind, args.n, args.m,
                          int(kids[0].generate_state(1, dtype=np.uint64)[0]))
    est = estimate_rip(ens, cond, args.k, args.trials,
                       seed=int(kids[1].generate_state(1, dtype=np.uint64)[0]))
    print(f"sampled delta_hat({args.k}) = {est.delta_hat:.6g} over {args.trials} trials")
    exact_val = None
    if args.exact:
        exact_val = exact_rip_small(ens, cond, args.k)
        print(f"exact delta({args.k})       = {exact_val:.6g}")
        if est.delta_hat > exact_val + 1e-9:
            print("violation: sampled estimate exceeds the exact constant", file=sys.stderr)
            return EXIT_VIOLATION
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            cols = ["seed", "n", "m", "p", "lambda", "scheme", "k", "trials", "delta_hat"]
            row = [args.seed, args.n, args.m, args.p, lam, scheme_label(scheme),
                   args.k, args.trials, _fmt(est.delta_hat)]
            if exact_val is not None:
                cols.append("delta_exact")
                row.append(_fmt(exact_val))
            writer.writerow(cols)
            writer.writerow(row)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_mrip(args) -> int:
    if args.m % args.p != 0:
        print("error: p must divide m", file=sys.stderr)
        return EXIT_USAGE
    lam = args.m // args.p
    scheme = _scheme_for(args, lam)
    cond = condenser_for_scheme(scheme, lam=lam, p=args.p, scaling=HAT)
    kids = np.random.SeedSequence(args.seed).spawn(2)
    ens = sample_ensemble(args.kind, args.n, args.m,
                          int(kids[0].generate_state(1, dtype=np.uint64)[0]))
    report = mrip_check(ens, cond, args.base_k, args.base_alpha, trials=args.trials,
                        seed=int(kids[1].generate_state(1, dtype=np.uint64)[0]))
    for lv in report.levels:
        mark = "ok " if lv.passed else "FAIL"
        print(f"level {lv.level:2d}  k={lv.k:5d}  delta_hat={lv.delta_hat:.4f}  "
              f"allowed={lv.threshold:.4f}  {mark}")
    print("result:", "pass" if report.passed else f"first failure at level {report.first_failure}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        plotting.save_level_profile(
            out / "mrip.png",
            [lv.level for lv in report.levels],
            [max(lv.delta_hat, 1e-18) for lv in report.levels],
            [lv.threshold for lv in report.levels],
            title="multilevel isometry profile",
        )
        print(f"wrote {out}/mrip.png")
    return EXIT_OK


def _cmd_identity(args) -> int:
    if args.m % args.p != 0:
        print("error: p must divide m", file=sys.stderr)
        return EXIT_USAGE
    lam = args.m // args.p
    scheme = _scheme_for(args, lam)
    cond = condenser_for_scheme(scheme, lam=lam, p=args.p, scaling="raw")
    report = expectation_identity_check(
        args.n, args.m, args.p, cond.v, seed=args.seed, kind=args.kind, count=args.count
    )
    print(f"max relative error over {args.count} vectors: {report.max_rel_error:.3e}")
    if report.max_rel_error >= 1e-10:
        print("violation: identity relative error above 1e-10", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_experiment(args) -> int:
    mapping = {}
    if args.config:
        mapping.update(
            {
                k.strip(): v.strip()
                for k, v in (
                    line.partition("=")[::2]
                    for line in Path(args.config).read_text().splitlines()
                    if line.strip() and not line.strip().startswith("#")
                )
            }
        )
    overrides = {
        "kind": args.exp_kind,
        "n": args.n,
        "m": args.m,
        "p": args.p,
        "k": args.k,
        "lambda_sweep": args.lambda_sweep,
        "scheme": args.scheme,
        "ensemble": args.ensemble,
        "L": args.L,
        "delta": args.delta,
        "trials": args.trials,
        "points": args.points,
        "eta_mode": args.eta_mode,
        "base_k": args.base_k,
        "base_alpha": args.base_alpha,
        "seed": args.seed,
        "out": args.out,
    }
    mapping.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in mapping:
        print("error: experiment kind missing (flag --experiment or config key 'kind')",
              file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = ExperimentConfig.from_mapping(mapping)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    result = run_experiment(cfg)
    sys.stdout.write(result.summary)
    if result.csv_path:
        print(f"wrote {result.csv_path} and {result.summary_path}")
        for fig in result.figure_paths:
            print(f"wrote {fig}")
    return EXIT_OK if result.ok else EXIT_VIOLATION


_COMMANDS = {
    "quantize": _cmd_quantize,
    "embed": _cmd_embed,
    "recover": _cmd_recover,
    "rip": _cmd_rip,
    "mrip": _cmd_mrip,
    "identity": _cmd_identity,
    "experiment": _cmd_experiment,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Experiment orchestration: configuration, sweeps, CSV/summary/figure
emission, and the invariant checks that gate the exit status.

Every run embeds (seed, config hash, library version) in its outputs,
derives per-trial seeds by splitting the master seed, and aggregates
trial results in index order so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .condense import HAT, TILDE, condenser_for_scheme
from .embed import EmbeddingPipeline, evaluate_embedding, sample_l1_ball_points
from .quantize import (
    Alphabet,
    Beta,
    MSQ,
    Scheme,
    SigmaDelta,
    quantize_noise_shaping,
    scheme_from_string,
    scheme_label,
)
from .recover import (
    RecoveryProblem,
    SolverParams,
    choose_eta,
    generate_sparse_signal,
    oracle_eta,
    reconstruct,
)
from .rip import estimate_rip, expectation_identity_check, mrip_check
from .transforms import sample_ensemble
from . import plotting

EXPERIMENT_KINDS = (
    "embed-decay",
    "recover-decay",
    "rip-estimate",
    "mrip-check",
    "expectation-identity",
)

IDENTITY_TOL = 1e-10

PREFIX_COLUMNS = (
    "seed",
    "n",
    "m",
    "p",
    "lambda",
    "scheme",
    "r_or_beta",
    "L",
    "delta",
    "trials",
)


def worker_count() -> int:
    """Thread cap: NSQ_THREADS if set, else a small CPU-based default."""
    env = os.environ.get("NSQ_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


def _run_indexed(tasks):
    """Run callables concurrently, return results sorted by task index."""
    workers = worker_count()
    if workers == 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task) for task in tasks]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    n: int = 64
    m: int = 0  # derived as p * lambda for sweep experiments
    p: int = 8
    lambda_sweep: tuple[int, ...] = ()
    k: int = 3
    scheme: str = "sd:r=1"
    ensemble: str = "boe-hadamard"
    L: int = 1
    delta: float = 1.0
    trials: int = 10
    points: int = 32
    eta_mode: str = "analytic"  # or "oracle"
    base_k: int = 1
    base_alpha: float = 0.5
    seed: int = 0
    out: str = ""

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.eta_mode not in ("analytic", "oracle"):
            raise ValueError(f"unknown eta mode {self.eta_mode!r}")
        object.__setattr__(self, "lambda_sweep", tuple(int(v) for v in self.lambda_sweep))
        if self.kind in ("embed-decay", "recover-decay"):
            if not self.lambda_sweep:
                raise ValueError(f"{self.kind} needs a lambda sweep")
        elif self.m < 1:
            raise ValueError(f"{self.kind} needs an explicit m")
        if self.m and self.m % self.p != 0:
            raise ValueError(f"p={self.p} must divide m={self.m}")
        scheme_from_string(self.scheme)  # validate early

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "lambda_sweep":
                value = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                value = format(value, ".17g")
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ExperimentConfig":
        kwargs = {}
        type_of = {f.name: f.type for f in fields(cls)}
        for key, raw in mapping.items():
            if key not in type_of:
                raise ValueError(f"unknown config key {key!r}")
            if key == "lambda_sweep":
                if isinstance(raw, str):
                    raw = [t for t in raw.replace(" ", "").split(",") if t]
                kwargs[key] = tuple(int(v) for v in raw)
            elif key in ("delta", "base_alpha"):
                kwargs[key] = float(raw)
            elif key in ("kind", "scheme", "ensemble", "eta_mode", "out"):
                kwargs[key] = str(raw)
            else:
                kwargs[key] = int(raw)
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        mapping = {}
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {line_no}: {line!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
        return cls.from_mapping(mapping)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    columns: list[str]
    rows: list[list]
    summary: str
    violations: list[str] = field(default_factory=list)
    csv_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    figure_paths: list[Path] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _prefix(cfg: ExperimentConfig, m: int, lam: int, scheme: Scheme) -> list:
    if isinstance(scheme, SigmaDelta):
        r_or_beta = float(scheme.r)
    elif isinstance(scheme, Beta):
        r_or_beta = scheme.beta
    else:
        r_or_beta = 0.0
    return [
        cfg.seed,
        cfg.n,
        m,
        cfg.p,
        lam,
        scheme_label(scheme),
        r_or_beta,
        cfg.L,
        cfg.delta,
        cfg.trials,
    ]


def fit_line(x, y) -> tuple[float, float, float]:
    """Least squares y ~ slope * x + intercept; returns (slope, intercept, R^2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    design = np.column_stack([x, np.ones_like(x)])
    sol, *_ = np.linalg.lstsq(design, y, rcond=None)
    pred = design @ sol
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(sol[0]), float(sol[1]), r2


def _trial_seeds(master: int, count: int) -> list[int]:
    children = np.random.SeedSequence(master).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


# -- individual experiments ------------------------------------------------


def _run_embed_decay(cfg: ExperimentConfig):
    scheme = scheme_from_string(cfg.scheme)
    if isinstance(scheme, MSQ):
        raise ValueError("embed-decay needs a noise-shaping scheme")
    columns = list(PREFIX_COLUMNS) + [
        "median_additive_residual",
        "max_additive_residual",
        "fitted_eta",
        "median_mult_residual",
    ]
    rows = []
    violations = []
    medians = []
    seeds = _trial_seeds(cfg.seed, cfg.trials)

    for lam in cfg.lambda_sweep:
        m = cfg.p * lam

        def one(seed_i, lam=lam, m=m):
            pl = EmbeddingPipeline.create(
                cfg.n, m, cfg.p, scheme, kind=cfg.ensemble, seed=seed_i,
                L=cfg.L, delta=cfg.delta,
            )
            pts = sample_l1_ball_points(cfg.n, cfg.points, seed=seed_i ^ 0x9E3779B9)
            return evaluate_embedding(pts, pl)

        reports = _run_indexed([lambda s=s: one(s) for s in seeds])
        for rep in reports:
            if np.any(rep.quantization_error > rep.quantization_bound + 1e-12):
                violations.append(
                    f"embed-decay lam={lam}: condensed quantization error "
                    f"exceeded its analytic bound"
                )
        add = np.concatenate([rep.add_residual for rep in reports])
        mult = np.concatenate([rep.mult_residual for rep in reports])
        med = float(np.median(add))
        medians.append(med)
        fitted = float(np.median([rep.eta_fit for rep in reports]))
        row_scheme = (
            Beta(beta=scheme.beta, lam=lam) if isinstance(scheme, Beta) else scheme
        )
        rows.append(
            _prefix(cfg, m, lam, row_scheme)
            + [med, float(np.max(add)), fitted, float(np.median(mult))]
        )

    if isinstance(scheme, Beta) and len(medians) > 1:
        if any(b > a + 1e-15 for a, b in zip(medians, medians[1:])):
            violations.append("embed-decay: median additive residual not non-increasing")

    lam_arr = np.array(cfg.lambda_sweep, dtype=float)
    med_arr = np.maximum(np.array(medians), 1e-300)
    loglog = isinstance(scheme, SigmaDelta)
    xs = np.log(lam_arr) if loglog else lam_arr
    slope, intercept, r2 = fit_line(xs, np.log(med_arr))
    summary = (
        f"median additive residual decay: slope={slope:.6g} "
        f"({'log-log' if loglog else 'semilog'}), R^2={r2:.4f}\n"
        f"residuals measured against the unquantized linear control\n"
    )
    figures = {
        "decay": lambda path: plotting.save_decay_figure(
            path,
            lam_arr,
            {
                "median": med_arr,
                "max": [row[len(PREFIX_COLUMNS) + 1] for row in rows],
            },
            ylabel="additive residual",
            title=f"embedding residual decay ({scheme_label(scheme)})",
            loglog=loglog,
            fit=(slope, intercept),
        )
    }
    return columns, rows, summary, violations, figures


def _run_recover_decay(cfg: ExperimentConfig):
    scheme = scheme_from_string(cfg.scheme)
    if isinstance(scheme, MSQ):
        raise ValueError("recover-decay needs a noise-shaping scheme")
    alphabet = Alphabet(L=cfg.L, delta=cfg.delta)
    columns = list(PREFIX_COLUMNS) + [
        "median_error",
        "q25_error",
        "q75_error",
        "median_eta",
        "solved_fraction",
    ]
    rows = []
    violations = []
    medians = []
    seeds = _trial_seeds(cfg.seed, cfg.trials)

    for lam in cfg.lambda_sweep:
        m = cfg.p * lam
        run_scheme = Beta(beta=scheme.beta, lam=lam) if isinstance(scheme, Beta) else scheme
        analytic = choose_eta(run_scheme, lam, cfg.delta)

        def one(seed_i, lam=lam, m=m, run_scheme=run_scheme, analytic=analytic):
            kids = _trial_seeds(seed_i, 2)
            ens = sample_ensemble(cfg.ensemble, cfg.n, m, kids[0])
            sig = generate_sparse_signal(cfg.n, cfg.k, kids[1], ens)
            x = sig.dense()
            code = quantize_noise_shaping(ens.apply(x), run_scheme, alphabet)
            cond = condenser_for_scheme(run_scheme, lam=lam, p=cfg.p, scaling=HAT)
            realized = oracle_eta(ens, cond, x, code.q)
            eta = realized if cfg.eta_mode == "oracle" else analytic
            feasible = realized <= analytic + 1e-12
            rp = RecoveryProblem(ensemble=ens, condenser=cond, q=code.q, eta=eta)
            res = reconstruct(rp)
            return float(np.linalg.norm(res.x - x)), eta, res.converged, feasible

        outcomes = _run_indexed([lambda s=s: one(s) for s in seeds])
        errs = np.array([o[0] for o in outcomes])
        etas = np.array([o[1] for o in outcomes])
        if not all(o[3] for o in outcomes):
            violations.append(
                f"recover-decay lam={lam}: true signal infeasible at the analytic eta"
            )
        med = float(np.median(errs))
        medians.append(med)
        rows.append(
            _prefix(cfg, m, lam, run_scheme)
            + [
                med,
                float(np.quantile(errs, 0.25)),
                float(np.quantile(errs, 0.75)),
                float(np.median(etas)),
                float(np.mean([o[2] for o in outcomes])),
            ]
        )

    lam_arr = np.array(cfg.lambda_sweep, dtype=float)
    med_arr = np.maximum(np.array(medians), 1e-300)
    loglog = isinstance(scheme, SigmaDelta)
    xs = np.log(lam_arr) if loglog else lam_arr
    slope, intercept, r2 = fit_line(xs, np.log(med_arr))
    summary = (
        f"median recovery error decay: slope={slope:.6g} "
        f"({'log-log' if loglog else 'semilog'}), R^2={r2:.4f}\n"
        f"eta mode: {cfg.eta_mode}\n"
    )
    figures = {
        "decay": lambda path: plotting.save_decay_figure(
            path,
            lam_arr,
            {"median": med_arr},
            ylabel="recovery error",
            title=f"recovery error decay ({scheme_label(scheme)})",
            loglog=loglog,
            fit=(slope, intercept),
        )
    }
    return columns, rows, summary, violations, figures


def _run_rip_estimate(cfg: ExperimentConfig):
    scheme = scheme_from_string(cfg.scheme)
    lam = cfg.m // cfg.p
    run_scheme = Beta(beta=scheme.beta, lam=lam) if isinstance(scheme, Beta) else scheme
    cond = condenser_for_scheme(run_scheme, lam=lam, p=cfg.p, scaling=HAT)
    kids = _trial_seeds(cfg.seed, 2)
    ens = sample_ensemble(cfg.ensemble, cfg.n, cfg.m, kids[0])
    est = estimate_rip(ens, cond, cfg.k, cfg.trials, seed=kids[1])
    columns = list(PREFIX_COLUMNS) + ["k", "delta_hat", "exact"]
    rows = [_prefix(cfg, cfg.m, lam, run_scheme) + [cfg.k, est.delta_hat, int(est.exact)]]
    summary = f"sampled isometry defect delta_hat({cfg.k}) = {est.delta_hat:.6g}\n"
    return columns, rows, summary, [], {}


def _run_mrip_check(cfg: ExperimentConfig):
    scheme = scheme_from_string(cfg.scheme)
    lam = cfg.m // cfg.p
    run_scheme = Beta(beta=scheme.beta, lam=lam) if isinstance(scheme, Beta) else scheme
    cond = condenser_for_scheme(run_scheme, lam=lam, p=cfg.p, scaling=HAT)
    kids = _trial_seeds(cfg.seed, 2)
    ens = sample_ensemble(cfg.ensemble, cfg.n, cfg.m, kids[0])
    report = mrip_check(
        ens, cond, cfg.base_k, cfg.base_alpha, trials=cfg.trials, seed=kids[1]
    )
    columns = list(PREFIX_COLUMNS) + ["level", "level_k", "threshold", "delta_hat", "passed"]
    rows = [
        _prefix(cfg, cfg.m, lam, run_scheme)
        + [lv.level, lv.k, lv.threshold, lv.delta_hat, int(lv.passed)]
        for lv in report.levels
    ]
    status = "pass" if report.passed else f"first failing level {report.first_failure}"
    summary = f"multilevel isometry check: {status}\n"
    figures = {
        "levels": lambda path: plotting.save_level_profile(
            path,
            [lv.level for lv in report.levels],
            [max(lv.delta_hat, 1e-18) for lv in report.levels],
            [lv.threshold for lv in report.levels],
            title="multilevel isometry profile",
        )
    }
    return columns, rows, summary, [], figures


def _run_expectation_identity(cfg: ExperimentConfig):
    scheme = scheme_from_string(cfg.scheme)
    lam = cfg.m // cfg.p
    run_scheme = Beta(beta=scheme.beta, lam=lam) if isinstance(scheme, Beta) else scheme
    cond = condenser_for_scheme(run_scheme, lam=lam, p=cfg.p, scaling="raw")
    report = expectation_identity_check(
        cfg.n, cfg.m, cfg.p, cond.v, seed=cfg.seed, kind=cfg.ensemble, count=cfg.trials
    )
    columns = list(PREFIX_COLUMNS) + ["case", "lhs", "rhs", "rel_error"]
    rows = [
        _prefix(cfg, cfg.m, lam, run_scheme)
        + [t, float(report.lhs[t]), float(report.rhs[t]), float(report.rel_errors[t])]
        for t in range(len(report.lhs))
    ]
    violations = []
    if report.max_rel_error >= IDENTITY_TOL:
        violations.append(
            f"expectation identity broke: max relative error {report.max_rel_error:.3e}"
        )
    summary = f"sign-expectation identity: max relative error {report.max_rel_error:.3e}\n"
    figures = {
        "identity": lambda path: plotting.save_error_bars(
            path,
            [str(t) for t in range(len(report.lhs))],
            report.rel_errors,
            IDENTITY_TOL,
            title="sign-expectation identity check",
        )
    }
    return columns, rows, summary, violations, figures


_RUNNERS = {
    "embed-decay": _run_embed_decay,
    "recover-decay": _run_recover_decay,
    "rip-estimate": _run_rip_estimate,
    "mrip-check": _run_mrip_check,
    "expectation-identity": _run_expectation_identity,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the configured experiment; write CSV, summary, and figures when
    an output directory is set.  Violated invariants are collected, not
    raised, so the CLI can map them to its exit status."""
    columns, rows, summary, violations, figures = _RUNNERS[cfg.kind](cfg)

    header = (
        f"# experiment={cfg.kind} seed={cfg.seed} config_hash={cfg.config_hash()} "
        f"version={__version__}\n"
    )
    summary_text = header + summary
    if violations:
        summary_text += "".join(f"violation: {v}\n" for v in violations)

    result = ExperimentResult(
        config=cfg, columns=columns, rows=rows, summary=summary_text, violations=violations
    )

    if cfg.out:
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "results.csv"
        with open(csv_path, "w", newline="") as fh:
            fh.write(header)
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        summary_path = out_dir / "summary.txt"
        summary_path.write_text(summary_text)
        result.csv_path = csv_path
        result.summary_path = summary_path
        for name, render in figures.items():
            fig_path = out_dir / f"{cfg.kind.replace('-', '_')}_{name}.png"
            render(fig_path)
            result.figure_paths.append(fig_path)
    return result

"""``hoinfer`` command: fits, profiles, intervals, contours, sampling and exact enumeration.

Every subcommand validates its inputs completely before computing and
collects its output files in memory, writing them only after the whole
analysis has succeeded.  Numbers on standard output carry six significant
digits; TSV and JSON files carry full precision.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from ..core import ModelFit
from ..exceptions import (
    HoinferError,
    NumericalError,
    SampleSizeError,
    UnsupportedVariantError,
    ValidationError,
)
from ..profiling import GridSpec, PivotProfile, standard_intervals, with_grid_retry
from .config import AnalysisConfig, load_config
from .ingest import ingest

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
COMMANDS = ("fit", "profile", "ci", "pvalue", "contour", "sample", "exact-enum", "efficiency")
DEFAULT_PIVOTS = {
    "logistic": ["wald", "wald_a", "r", "rstar"],
    "regscale": ["wald", "r", "rstar"],
    "nlreg": ["wald", "r", "rstar"],
}
GRID_RETRIES = 4

_HINTS = {
    "ExtendGridError": "widen the profile grid (grid.width or grid.lower/upper in the config)",
    "SingularInformationError": "check for collinear covariates or an over-parametrized model",
    "SamplerTuningError": "set sampler.scale explicitly or increase sampler.pilot_iterations",
    "SampleSizeError": "increase sampler.iterations or reduce sampler.thin",
    "StudyIntegrityError": "inspect the chain; many draws could not be refitted",
    "BudgetExceededError": "use the generating-function method or a smaller design",
    "DomainError": "supply start values nearer the estimate",
    "ProfileFailureError": "supply better start values or narrow the grid",
    "UnsupportedVariantError": "choose a variant offered for this model class",
    "FileNotFoundError": "check data_path in the config",
}


class UsageError(ValidationError):
    """Conflicting or missing command-line options."""


# ---- output collection -------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars become floats and non-finite values null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _g(v) -> str:
    v = float(v)
    return f"{v:.6g}" if np.isfinite(v) else "nan"


def _r(v) -> str:
    v = float(v)
    return repr(v) if np.isfinite(v) else "nan"


@dataclass
class Report:
    """Files and console lines produced by one command."""

    files: dict[str, str] = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    def json(self, name: str, obj) -> None:
        self.files[name] = json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"

    def tsv(self, name: str, header, rows) -> None:
        out = ["\t".join(header)]
        out += ["\t".join(c if isinstance(c, str) else _r(c) for c in row) for row in rows]
        self.files[name] = "\n".join(out) + "\n"

    def say(self, line: str = "") -> None:
        self.lines.append(line)

    def emit(self, out_dir: Path | None, stream) -> None:
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (out_dir / name).write_text(text, encoding="utf-8")
        for line in self.lines:
            print(line, file=stream)


# ---- model assembly ------------------------------------------------------------


@dataclass
class Options:
    command: str
    config: AnalysisConfig | None
    level: float
    pivots: list[str]
    variant: str | None
    psi0: float | None
    seed: int


@dataclass
class Analysis:
    """A fitted model with the means to profile one of its parameters."""

    kind: str
    names: tuple[str, ...]
    fit: ModelFit
    profile_fn: object
    default_grid: GridSpec
    extra: dict = field(default_factory=dict)

    def estimates(self) -> tuple[np.ndarray, np.ndarray]:
        return self.fit.natural_estimates()


def _table_columns(cfg: AnalysisConfig, needed: list[str]) -> dict[str, np.ndarray]:
    table = ingest(cfg.data_file)
    cols = table.select(needed)
    return cols


def _require(cfg: AnalysisConfig, key: str):
    if key not in cfg.raw:
        raise ValidationError(f"config for {cfg.model_class} needs {key!r}")
    return cfg.raw[key]


def _build_logistic(cfg: AnalysisConfig, opts: Options) -> Analysis:
    from ..fixtures.datasets import load_sixteen, load_urine
    from ..logistic import BinaryDataset, fit_logistic, profile_logistic

    if cfg.get("dataset") == "urine":
        data = load_urine(cfg.get("interest", "urea"))
    elif cfg.get("dataset") == "sixteen":
        data = load_sixteen()
    else:
        resp = _require(cfg, "response")
        interest = _require(cfg, "interest")
        covs = list(cfg.get("covariates", []))
        if interest not in covs:
            covs.append(interest)
        cols = _table_columns(cfg, [resp] + covs)
        if not np.all((cols[resp] == 0) | (cols[resp] == 1)):
            raise ValidationError(f"response column {resp!r} is not binary")
        others = [c for c in covs if c != interest]
        n = len(cols[resp])
        xs = ([np.ones(n)] if cfg.get("intercept", True) else []) + [cols[c] for c in others]
        xn = (("intercept",) if cfg.get("intercept", True) else ()) + tuple(others)
        X = np.column_stack(xs) if xs else np.zeros((n, 0))
        data = BinaryDataset(cols[resp], X, cols[interest][:, None], xn, (interest,))
    data.check_rank()
    fit = fit_logistic(data)
    if not fit.converged:
        raise NumericalError(f"logistic fit did not converge: {fit.message}")

    def profile(interest, grid):
        idx = data.names.index(interest) if isinstance(interest, str) else int(interest)
        if idx != 0:
            raise ValidationError("logistic profiles are available for the interest covariate only")
        return profile_logistic(data, 0, grid=grid, fit=fit)

    return Analysis("logistic", data.names, fit, profile, GridSpec(), {"data": data})


def _build_regscale(cfg: AnalysisConfig, opts: Options) -> Analysis:
    from ..regscale import fit_rsm, get_law, rsm_profile

    if cfg.get("dataset"):
        raise ValidationError("regscale analyses need data_path")
    sec = cfg.section
    law = get_law(sec.get("law", "normal"), sec.get("df"))
    resp = _require(cfg, "response")
    covs = list(cfg.get("covariates", []))
    cols = _table_columns(cfg, [resp] + covs)
    n = len(cols[resp])
    xs = ([np.ones(n)] if cfg.get("intercept", True) else []) + [cols[c] for c in covs]
    names = (("intercept",) if cfg.get("intercept", True) else ()) + tuple(covs)
    if not xs:
        raise ValidationError("regscale model needs at least one regression column")
    X = np.column_stack(xs)
    y = cols[resp]
    fit, anc = fit_rsm(y, X, law, names=names)
    if not fit.converged:
        raise NumericalError(f"regression-scale fit did not converge: {fit.message}")

    def profile(interest, grid):
        return rsm_profile(y, X, law, interest, grid=grid, fit=fit, names=names)

    return Analysis("regscale", names + ("log_sigma",), fit, profile, GridSpec(),
                    {"y": y, "X": X, "law": law, "anc": anc})


def _build_nlreg(cfg: AnalysisConfig, opts: Options) -> Analysis:
    from ..nlreg import NLModel, fit_nlreg, logistic4_errinvar_model, rstar_profile_nlreg

    sec = cfg.section
    resp = _require(cfg, "response")
    covs = list(cfg.get("covariates", []))
    if len(covs) != 1:
        raise ValidationError("nlreg needs exactly one covariate")
    if cfg.get("dataset"):
        raise ValidationError("nlreg analyses need data_path")
    cols = _table_columns(cfg, [covs[0], resp])
    x, y = cols[covs[0]], cols[resp]
    if sec.get("builtin") == "logistic4-errinvar":
        model = logistic4_errinvar_model(x, y, log_response=sec.get("log_response", True), covariate=covs[0])
    else:
        model = NLModel(x, y, sec["mean"], sec.get("variance"), tuple(sec.get("beta", ())),
                        tuple(sec.get("rho", ())), tuple(sec.get("positive", ())), covariate=covs[0])
    fit = fit_nlreg(model, sec["start"])
    if not fit.converged:
        raise NumericalError(f"nonlinear fit did not converge: {fit.message}")
    qv = opts.variant if opts.variant in ("skovgaard", "frw") else "skovgaard"
    adjust = opts.variant if opts.variant in ("m1", "m2") else None
    if adjust is None and any(p in ("ra", "wald_a") for p in opts.pivots):
        adjust = "m1"

    def profile(interest, grid):
        return rstar_profile_nlreg(model, fit, interest, variant=qv, grid=grid, adjust=adjust)

    return Analysis("nlreg", model.names, fit, profile, GridSpec(skip=0.05, bridge=False, singular=0.0),
                    {"model": model})


BUILDERS = {"logistic": _build_logistic, "regscale": _build_regscale, "nlreg": _build_nlreg}


def _grid(cfg: AnalysisConfig, analysis: Analysis) -> GridSpec:
    over = {k: v for k, v in cfg.get("grid", {}).items()}
    return replace(analysis.default_grid, **over)


def _interest(cfg: AnalysisConfig, analysis: Analysis) -> str:
    name = cfg.get("interest")
    if name is None:
        raise ValidationError("config needs an 'interest' parameter for this command")
    if analysis.kind == "logistic":
        return name
    if name not in analysis.names:
        raise ValidationError(f"unknown interest parameter {name!r}; known: {list(analysis.names)}")
    return name


def _with_profile(analysis: Analysis, interest: str, grid: GridSpec, task):
    return with_grid_retry(lambda g: analysis.profile_fn(interest, g), task, grid, retries=GRID_RETRIES)


# ---- subcommands ----------------------------------------------------------------


def _estimate_rows(analysis: Analysis):
    est, se = analysis.estimates()
    return [(nm, e, s) for nm, e, s in zip(analysis.names, est, se)]


def cmd_fit(opts: Options, rep: Report) -> None:
    analysis = _analysis(opts)
    rows = _estimate_rows(analysis)
    rep.json("fit.json", {
        "model_class": analysis.kind, "loglik": analysis.fit.loglik, "iterations": analysis.fit.iterations,
        "estimates": {nm: {"estimate": e, "se": s} for nm, e, s in rows},
    })
    rep.tsv("fit.tsv", ["parameter", "estimate", "se"], rows)
    rep.say(f"{'parameter':<14}{'estimate':>14}{'se':>14}")
    for nm, e, s in rows:
        rep.say(f"{nm:<14}{_g(e):>14}{_g(s):>14}")
    rep.say(f"log likelihood {_g(analysis.fit.loglik)}")
    if analysis.kind == "nlreg":
        from ..nlreg import mpl_estimates

        model = analysis.extra["model"]
        variants = [opts.variant] if opts.variant in ("m1", "m2") else ["m1", "m2"]
        mpl = {}
        for v in variants:
            m = mpl_estimates(model, analysis.fit, variant=v)
            mpl[v] = m.as_dict()
            for nm, e, s in zip(m.names, m.psi_hat_a, m.se_a):
                rep.say(f"mpl {v} {nm:<10}{_g(e):>14}{_g(s):>14}")
        rep.json("mpl.json", mpl)


def _profile_common(opts: Options):
    analysis = _analysis(opts)
    cfg = opts.config
    return analysis, _interest(cfg, analysis), _grid(cfg, analysis)


def _summary_line(prof: PivotProfile) -> dict:
    out = {"estimate": float(prof.natural(prof.psi_hat)), "se": prof.se_natural, "flags": prof.global_flags}
    if prof.adjusted is not None:
        out["estimate_adjusted"] = prof.adjusted.psi_hat_a
        out["se_adjusted"] = prof.adjusted.se_a
    return out


def cmd_profile(opts: Options, rep: Report) -> None:
    analysis, interest, grid = _profile_common(opts)
    prof = analysis.profile_fn(interest, grid)
    rep.files[f"profile_{interest}.tsv"] = prof.to_tsv()
    rep.json(f"profile_{interest}.json", {"parameter": interest, **_summary_line(prof)})
    rep.say(f"profile of {interest}: {len(prof.psi)} grid points")
    rep.say(f"estimate {_g(prof.natural(prof.psi_hat))}  se {_g(prof.se_natural)}")
    if prof.global_flags:
        rep.say("flags: " + ", ".join(prof.global_flags))


def cmd_ci(opts: Options, rep: Report) -> None:
    analysis, interest, grid = _profile_common(opts)
    prof, cis = _with_profile(analysis, interest, grid, lambda p: standard_intervals(p, opts.pivots, opts.level))
    rep.json("ci.json", {"parameter": interest, "level": opts.level, **_summary_line(prof),
                         "intervals": {k: list(v) for k, v in cis.items()}})
    rep.tsv("ci.tsv", ["pivot", "lower", "upper"], [(k, lo, hi) for k, (lo, hi) in cis.items()])
    rep.say(f"{100 * opts.level:g}% confidence intervals for {interest}")
    for k, (lo, hi) in cis.items():
        rep.say(f"{k:<8}({_g(lo)}, {_g(hi)})")


def cmd_pvalue(opts: Options, rep: Report) -> None:
    if opts.psi0 is None:
        raise UsageError("pvalue needs --psi0 or psi0 in the config")
    analysis, interest, grid = _profile_common(opts)
    psi0 = opts.psi0

    def task(prof):
        out = {}
        for p in opts.pivots:
            if p == "wald":
                z = (float(prof.natural(prof.psi_hat)) - psi0) / prof.se_natural
            elif p == "wald_a":
                if prof.adjusted is None:
                    raise ValidationError("no adjusted profile available")
                z = (prof.adjusted.psi_hat_a - psi0) / prof.adjusted.se_a
            else:
                out[p] = prof.curve(p).pvalues(psi0)
                continue
            lower = float(norm.cdf(z))
            out[p] = {"z": z, "lower": lower, "upper": float(norm.sf(z)),
                      "two_sided": float(min(1.0, 2 * min(lower, 1 - lower)))}
        return out

    prof, pv = _with_profile(analysis, interest, grid, task)
    rep.json("pvalue.json", {"parameter": interest, "psi0": psi0, "pvalues": pv})
    rep.tsv("pvalue.tsv", ["pivot", "z", "lower", "upper", "two_sided"],
            [(k, v["z"], v["lower"], v["upper"], v["two_sided"]) for k, v in pv.items()])
    rep.say(f"tests of {interest} = {_g(psi0)}")
    rep.say(f"{'pivot':<8}{'z':>12}{'lower':>12}{'upper':>12}{'two-sided':>12}")
    for k, v in pv.items():
        rep.say(f"{k:<8}{_g(v['z']):>12}{_g(v['lower']):>12}{_g(v['upper']):>12}{_g(v['two_sided']):>12}")


def cmd_contour(opts: Options, rep: Report) -> None:
    from ..nlreg import nlreg_contour

    cfg = opts.config
    if cfg.model_class != "nlreg":
        raise UsageError("contour is available for nlreg models only")
    spec = cfg.section.get("contour")
    if spec is None:
        raise ValidationError("contour needs nlreg.contour.pair in the config")
    analysis = _analysis(opts)
    for nm in spec["pair"]:
        if nm not in analysis.names:
            raise ValidationError(f"unknown contour parameter {nm!r}")
    alpha = spec.get("alpha", round(1 - opts.level, 12))
    cs = nlreg_contour(analysis.extra["model"], analysis.fit, spec["pair"], alpha=alpha,
                       points=spec.get("points", 60), width=spec.get("width", 3.5))
    rows = []
    for scale, curves in (("natural", cs.contours), ("r", cs.contours_r)):
        for stat in ("wald", "w", "wstar"):
            for k, line in enumerate(curves[stat]):
                rows += [(stat, scale, str(k), x, y) for x, y in line]
    tag = "_".join(cs.pair)
    rep.tsv(f"contour_{tag}.tsv", ["statistic", "scale", "line", cs.pair[0], cs.pair[1]], rows)
    trows = []
    for scale, tr in (("natural", cs.traces), ("r", cs.traces_r)):
        for which, pts in tr.items():
            trows += [(which, scale, x, y) for x, y in pts]
    rep.tsv(f"traces_{tag}.tsv", ["trace", "scale", cs.pair[0], cs.pair[1]], trows)
    rep.json(f"contour_{tag}.json", {"pair": list(cs.pair), "alpha": cs.alpha, "level": cs.level,
                                     "estimate": cs.estimate, "clipped": cs.clipped,
                                     "trace_angle": cs.trace_angle, "flags": cs.flags})
    rep.say(f"{100 * (1 - alpha):g}% contours for ({cs.pair[0]}, {cs.pair[1]}) at chi2 level {_g(cs.level)}")
    for stat in ("wald", "w", "wstar"):
        rep.say(f"{stat:<6}{len(cs.contours[stat])} line(s){'  clipped' if cs.clipped[stat] else ''}")
    rep.say(f"trace angle {_g(cs.trace_angle)} rad")


def cmd_sample(opts: Options, rep: Report) -> None:
    from ..sampling import SamplerConfig, conditional_accuracy_study, run_conditional_sampler

    cfg = opts.config
    if cfg.model_class != "regscale":
        raise UsageError("sample is available for regscale models only")
    sec = dict(cfg.get("sampler", {}))
    study = sec.pop("study", False)
    config = SamplerConfig(seed=opts.seed, **sec)
    analysis = _analysis(opts)
    X, law, anc = analysis.extra["X"], analysis.extra["law"], analysis.extra["anc"]
    p = X.shape[1]
    theta = analysis.fit.theta
    chain = run_conditional_sampler(X, anc.a, law, config, beta_hat=theta[:p], sigma_hat=float(np.exp(theta[p])),
                                    names=analysis.names)
    rep.files["chain.tsv"] = chain.to_tsv()
    summary = {"acceptance_rate": chain.acceptance_rate, "scale": chain.scale,
               "pilot_acceptance": chain.pilot_acceptance, "draws": len(chain.draws), "flags": chain.flags,
               "seed": opts.seed}
    rep.say(f"{len(chain.draws)} draws kept, acceptance {_g(chain.acceptance_rate)}, candidate scale {_g(chain.scale)}")
    if study:
        interest = cfg.get("interest")
        targets = [interest] if interest else [analysis.names[min(1, p - 1)], "log_sigma"]
        reports = {}
        for t in targets:
            which = "log_sigma" if t == "log_sigma" else analysis.names.index(t)
            report = conditional_accuracy_study(chain, which)
            reports[t] = {"rows": {m: {str(l): list(v) for l, v in row.items()} for m, row in report.rows.items()},
                          "lr_above_one": report.lr_above_one, "breakdown": list(report.breakdown)}
            for line in report.to_text().rstrip().splitlines():
                rep.say(line)
        summary["study"] = reports
    rep.json("sample.json", summary)


def cmd_exact_enum(opts: Options, rep: Report) -> None:
    from ..fixtures.datasets import load_sixteen
    from ..logistic import ConditionalLattice, conditional_counts

    cfg = opts.config
    if cfg is None:
        data = load_sixteen()
        cond = None
    else:
        if cfg.model_class != "logistic":
            raise UsageError("exact-enum is available for logistic models only")
        data = _build_logistic(cfg, opts).extra["data"]
        names = cfg.section.get("condition_on")
        cond = None
        if names is not None:
            unknown = [n for n in names if n not in data.x_names]
            if unknown:
                raise ValidationError(f"condition_on names {unknown} are not nuisance covariates {list(data.x_names)}")
            cond = [data.x_names.index(n) for n in names]
    support, counts = conditional_counts(data, condition_on=cond)
    psi = 0.0 if opts.psi0 is None else opts.psi0
    pmf = ConditionalLattice(support, counts, 0.0, np.empty(0)).at(psi).pmf
    total = int(sum(int(c) for c in counts))
    t_obs = float(data.t[0])
    rep.tsv("exact.tsv", ["t", "count", "pmf"], [(t, str(int(c)), p) for t, c, p in zip(support, counts, pmf)])
    rep.json("exact.json", {"reference_set_size": total, "support": support, "counts": [str(int(c)) for c in counts],
                            "support_size": len(support), "t_observed": t_obs, "psi": psi,
                            "condition_on": None if cond is None else [data.x_names[i] for i in cond]})
    rep.say(f"reference set size {total}")
    rep.say(f"support of T: {_g(support[0])} .. {_g(support[-1])} ({len(support)} values), observed t = {_g(t_obs)}")
    for t, c, p in zip(support, counts, pmf):
        rep.say(f"{_g(t):>8}{int(c):>12}{_g(p):>14}")


def cmd_efficiency(opts: Options, rep: Report) -> None:
    from ..logistic import efficiency_curve, efficiency_ratio

    cfg = opts.config
    sec = {} if cfg is None else dict(cfg.get("efficiency", {}))
    if cfg is not None and not sec:
        if cfg.model_class != "logistic":
            raise UsageError("efficiency from a fitted model needs a logistic config")
        analysis = _build_logistic(cfg, opts)
        data = analysis.extra["data"]
        res = efficiency_ratio(data.design, analysis.fit.theta, data.n)
        names = data.names
    else:
        z = np.asarray(sec.get("z", np.linspace(-1.0, 1.0, 21)), float)
        res = efficiency_curve(z, float(sec.get("lambda", 0.0)), float(sec.get("psi", 0.0)))
        names = ("lambda", "psi")
    rows = [(nm, r, n, vc, vb) for nm, r, n, vc, vb in zip(names, res.ratio, res.equivalent_n, res.v_cont, res.v_bin)]
    rep.tsv("efficiency.tsv", ["parameter", "ratio", "equivalent_n", "v_cont", "v_bin"], rows)
    rep.json("efficiency.json", {nm: {"ratio": r, "equivalent_n": n, "v_cont": vc, "v_bin": vb}
                                 for nm, r, n, vc, vb in rows})
    rep.say(f"{'parameter':<12}{'ratio':>12}{'equiv. n':>12}")
    for nm, r, n, _, _ in rows:
        rep.say(f"{nm:<12}{_g(r):>12}{_g(n):>12}")


HANDLERS = {
    "fit": cmd_fit, "profile": cmd_profile, "ci": cmd_ci, "pvalue": cmd_pvalue, "contour": cmd_contour,
    "sample": cmd_sample, "exact-enum": cmd_exact_enum, "efficiency": cmd_efficiency,
}


def _analysis(opts: Options) -> Analysis:
    cfg = opts.config
    if cfg is None:
        raise UsageError(f"{opts.command} needs --config")
    return BUILDERS[cfg.model_class](cfg, opts)


# ---- argument handling ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hoinfer", description="Higher-order likelihood inference.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON analysis configuration")
    parser.add_argument("--out", type=Path, help="directory for output files")
    parser.add_argument("--seed", type=int, help="random seed (sampling)")
    parser.add_argument("--level", type=float, help="confidence level (default 0.95)")
    parser.add_argument("--pivot", choices=("wald", "r", "rstar", "ra", "wald_a", "wstar"))
    parser.add_argument("--variant", choices=("skovgaard", "frw", "m1", "m2"))
    parser.add_argument("--psi0", type=float, help="hypothesised value for pvalue; tilt for exact-enum")
    return parser


def _options(args, cfg: AnalysisConfig | None) -> Options:
    raw = cfg.raw if cfg is not None else {}
    level = args.level if args.level is not None else raw.get("level", 0.95)
    if not 0 < level < 1:
        raise UsageError("--level must lie in (0, 1)")
    kind = cfg.model_class if cfg is not None else None
    if args.pivot is not None:
        pivots = [args.pivot]
    elif "pivots" in raw:
        pivots = list(raw["pivots"])
    else:
        pivots = list(DEFAULT_PIVOTS.get(kind, ["wald", "r", "rstar"]))
    if args.command != "contour" and "wstar" in pivots:
        raise UsageError("the wstar pivot applies to contour only")
    if args.command in ("ci", "pvalue") and "ra" in pivots and kind == "regscale":
        raise UsageError("adjusted pivots are not available for regscale models")
    variant = args.variant if args.variant is not None else raw.get("variant")
    if variant is not None:
        if kind == "logistic" or (kind is None and args.command in ("exact-enum", "efficiency")):
            raise UsageError("--variant does not apply to logistic analyses")
        if kind == "regscale" and variant != "frw":
            raise UnsupportedVariantError("regscale models support the frw variant only")
    psi0 = args.psi0 if args.psi0 is not None else raw.get("psi0")
    if args.psi0 is not None and args.command not in ("pvalue", "exact-enum"):
        raise UsageError("--psi0 applies to pvalue and exact-enum only")
    if args.seed is not None and args.seed < 0:
        raise UsageError("--seed must be non-negative")
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    if args.command == "contour" and kind != "nlreg":
        raise UsageError("contour is available for nlreg models only")
    if args.command == "sample" and kind != "regscale":
        raise UsageError("sample is available for regscale models only")
    if cfg is None and args.command not in ("exact-enum", "efficiency"):
        raise UsageError(f"{args.command} needs --config")
    return Options(args.command, cfg, float(level), pivots, variant, psi0, int(seed))


def _origin(exc: BaseException) -> str:
    """Package module in which the exception was raised."""
    mod = "hoinfer"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("hoinfer"):
            mod = name
    return mod


def _fail(exc: BaseException, code: int, stream) -> int:
    kind = type(exc).__name__
    print(f"hoinfer: {kind} in {_origin(exc)}: {exc}", file=stream)
    hint = _HINTS.get(kind)
    if hint:
        print(f"hint: {hint}", file=stream)
    return code


def main(argv: list[str] | None = None, *, stdout=None, stderr=None) -> int:
    """Run one subcommand and return the process exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    try:
        cfg = load_config(args.config) if args.config is not None else None
        opts = _options(args, cfg)
        out_dir = args.out
        if out_dir is None and cfg is not None and cfg.get("output_dir"):
            out_dir = cfg.base_dir / cfg.get("output_dir")
        rep = Report()
        with np.errstate(all="ignore"):
            HANDLERS[args.command](opts, rep)
    except (UsageError, SampleSizeError, UnsupportedVariantError) as exc:
        return _fail(exc, EXIT_VALIDATION, stderr)
    except FileNotFoundError as exc:
        return _fail(exc, EXIT_VALIDATION, stderr)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERICAL, stderr)
    except (ValidationError, HoinferError) as exc:
        return _fail(exc, EXIT_VALIDATION, stderr)
    rep.emit(out_dir, stdout)
    return EXIT_OK

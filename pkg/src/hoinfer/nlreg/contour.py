"""Bivariate confidence contours for the Wald, likelihood ratio and adjusted ``w*`` statistics.

The three statistics are evaluated on a rectangular grid spanning
``+/- width`` standard errors around the joint estimate and level curves are
traced by marching squares.  Profile traces, the constrained estimate of each
parameter as a function of the other, come from the two one-parameter
profiles, which also supply the signed likelihood roots used for the
r-scale display.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import contourpy
import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import chi2

from ..core import ModelFit, ModelSpec, constrained_maximize, natural_derivative, to_natural
from ..corrections import QIngredients, multiparameter_u, w_star
from ..exceptions import NumericalError, ValidationError
from ..profiling import GridSpec, build_profile

STATISTICS = ("wald", "w", "wstar")


@dataclass
class ContourSet:
    """Level curves of three statistics for a pair of parameters.

    Attributes
    ----------
    pair : tuple of str
    level : float
        Chi-squared (2 d.f.) quantile defining the contours.
    grid : tuple of ndarray
        Working-scale grid axes.
    fields : dict
        ``"wald"``, ``"w"`` and ``"wstar"`` values on the grid, shape ``(n1, n2)``.
    contours, contours_r : dict
        Polylines ``(k, 2)`` per statistic on the reported scale and on the
        r scale.  On the r scale each axis ``psi_k`` is replaced by
        ``sign(psi_k - psi_hat_k) sqrt(w_k(psi_k))`` from its own profile.
    traces, traces_r : dict
        ``"first"``: points ``(psi_1, psi_2 constrained)``; ``"second"``:
        ``(psi_1 constrained, psi_2)``.
    clipped : dict
        True when a contour leaves the grid and is cut at its boundary.
    trace_angle : float
        Angle in radians between the two traces at the estimate, measured on
        the r scale.
    """

    pair: tuple[str, str]
    alpha: float
    level: float
    estimate: np.ndarray
    grid: tuple[np.ndarray, np.ndarray]
    fields: dict[str, np.ndarray]
    contours: dict[str, list[np.ndarray]]
    contours_r: dict[str, list[np.ndarray]]
    traces: dict[str, np.ndarray]
    traces_r: dict[str, np.ndarray]
    clipped: dict[str, bool]
    trace_angle: float
    failed_points: int = 0
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "alpha": self.alpha,
            "level": self.level,
            "estimate": self.estimate.tolist(),
            "contours": {k: [p.tolist() for p in v] for k, v in self.contours.items()},
            "contours_r": {k: [p.tolist() for p in v] for k, v in self.contours_r.items()},
            "traces": {k: v.tolist() for k, v in self.traces.items()},
            "traces_r": {k: v.tolist() for k, v in self.traces_r.items()},
            "clipped": self.clipped,
            "trace_angle": self.trace_angle,
            "failed_points": self.failed_points,
            "flags": self.flags,
        }


def _signed_root_map(prof) -> CubicSpline:
    ok = np.isfinite(prof.r)
    # increasing orientation so that the r-scale display keeps the original layout
    return CubicSpline(prof.psi[ok], -prof.r[ok], bc_type="natural")


def _lines(x, y, z, level) -> tuple[list[np.ndarray], bool]:
    zm = np.ma.masked_invalid(z.T)
    gen = contourpy.contour_generator(x=x, y=y, z=zm, line_type=contourpy.LineType.Separate)
    lines = [np.asarray(p, float) for p in gen.lines(level)]
    clipped = any(not np.allclose(p[0], p[-1]) for p in lines) or not lines
    return lines, clipped


def _slope(u, v, near):
    ok = near & np.isfinite(u) & np.isfinite(v)
    if ok.sum() < 2:
        return np.nan
    return float(np.polyfit(u[ok], v[ok], 1)[0])


def wstar_contour(
    model: ModelSpec,
    fit: ModelFit,
    pair,
    ingredients: QIngredients,
    *,
    alpha: float = 0.05,
    points: int = 60,
    width: float = 3.5,
) -> ContourSet:
    """Wald, ``w`` and ``w*`` contours at level ``1 - alpha`` for two parameters.

    Parameters
    ----------
    model : ModelSpec
    fit : ModelFit
    pair : sequence of two names or indices
    ingredients : QIngredients
        Score covariances ``S``, ``Q`` and expected information for ``w*``.
    points : int
        Grid size along each axis.
    width : float
        Half-width of the grid in standard errors.
    """
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if len(pair) != 2:
        raise ValidationError("contours need exactly two parameters")
    idx = [model.index(p) for p in pair]
    if idx[0] == idx[1]:
        raise ValidationError("contour parameters must differ")
    names = tuple(model.names[i] if model.names else f"theta[{i}]" for i in idx)
    spec = model.with_interest(idx)
    est = fit.theta[idx]
    cov = fit.covariance[np.ix_(idx, idx)]
    se = np.sqrt(np.diag(cov))
    axes = tuple(np.linspace(e - width * s, e + width * s, points) for e, s in zip(est, se))
    scales = [model.scale_of(i) for i in idx]

    wf = np.full((points, points), np.nan)
    ws = np.full((points, points), np.nan)
    failed = 0
    start = fit.theta.copy()
    for a in range(points):
        cols = range(points) if a % 2 == 0 else range(points - 1, -1, -1)
        for b in cols:
            psi = np.array([axes[0][a], axes[1][b]])
            try:
                cf = constrained_maximize(spec, psi, start)
            except NumericalError:
                failed += 1
                continue
            if not cf.converged:
                failed += 1
                continue
            start = cf.theta
            w = max(2.0 * (fit.loglik - cf.loglik), 0.0)
            wf[a, b] = w
            try:
                ws[a, b] = w_star(w, multiparameter_u(ingredients, fit, cf, w))
            except NumericalError:
                pass

    # Wald statistic on the reported scale
    D = np.array([natural_derivative(sc, e) for sc, e in zip(scales, est)], float)
    prec = np.linalg.inv(cov * np.outer(D, D))
    n1 = to_natural(scales[0], axes[0])[:, None] - to_natural(scales[0], est[0])
    n2 = to_natural(scales[1], axes[1])[None, :] - to_natural(scales[1], est[1])
    wald = prec[0, 0] * n1**2 + 2 * prec[0, 1] * n1 * n2 + prec[1, 1] * n2**2
    fields = {"wald": wald, "w": wf, "wstar": ws}

    level = float(chi2.ppf(1 - alpha, 2))
    profiles = [
        build_profile(model, fit, i, grid=GridSpec(lower=ax[0], upper=ax[-1], points=points, bridge=False, singular=0.0))
        for i, ax in zip(idx, axes)
    ]
    maps = [_signed_root_map(p) for p in profiles]

    def natural(line):
        return np.column_stack([to_natural(scales[0], line[:, 0]), to_natural(scales[1], line[:, 1])])

    def r_scale(line):
        return np.column_stack([maps[0](line[:, 0]), maps[1](line[:, 1])])

    contours, contours_r, clipped = {}, {}, {}
    for key, z in fields.items():
        lines, cut = _lines(axes[0], axes[1], z, level)
        contours[key] = [natural(p) for p in lines]
        contours_r[key] = [r_scale(p) for p in lines]
        clipped[key] = cut

    t1 = np.column_stack([profiles[0].psi, profiles[0].theta[:, idx[1]]])
    t2 = np.column_stack([profiles[1].theta[:, idx[0]], profiles[1].psi])
    traces = {"first": natural(t1), "second": natural(t2)}
    t1r, t2r = r_scale(t1), r_scale(t2)
    traces_r = {"first": t1r, "second": t2r}
    s1 = _slope(t1r[:, 0], t1r[:, 1], np.abs(t1r[:, 0]) <= 1.0)
    s2 = _slope(t2r[:, 1], t2r[:, 0], np.abs(t2r[:, 1]) <= 1.0)
    d1, d2 = np.array([1.0, s1]), np.array([s2, 1.0])
    cosang = abs(d1 @ d2) / (np.linalg.norm(d1) * np.linalg.norm(d2))
    angle = float(np.arccos(np.clip(cosang, 0.0, 1.0)))

    flags = []
    if failed:
        flags.append(f"failed-points={failed}")
    flags += [f"clipped-{k}" for k, v in clipped.items() if v]
    return ContourSet(
        pair=names, alpha=alpha, level=level,
        estimate=np.array([to_natural(sc, e) for sc, e in zip(scales, est)], float),
        grid=axes, fields=fields, contours=contours, contours_r=contours_r,
        traces=traces, traces_r=traces_r, clipped=clipped, trace_angle=angle,
        failed_points=failed, flags=flags,
    )


def nlreg_contour(nlmodel, fit: ModelFit, pair, **kwargs) -> ContourSet:
    """Contours for a nonlinear regression with the score-covariance construction of ``w*``."""
    return wstar_contour(nlmodel.model_spec(), fit, pair, nlmodel.ingredients("skovgaard"), **kwargs)

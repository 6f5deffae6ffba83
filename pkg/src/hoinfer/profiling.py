"""Pivot profiles over a grid of interest values.

A :class:`PivotProfile` holds, for each grid value of a scalar interest
parameter, the profile and adjusted log likelihoods, the likelihood root, its
correction ``q`` and the modified root.  Natural cubic splines turn these
into continuous significance functions, from which confidence limits and
P-values are read.

Near the maximum likelihood estimate ``r`` and ``q`` both vanish and the
modified root is numerically unstable.  Points with ``|r|`` below a threshold
are excluded and the gap is bridged by composing two least-squares cubics,
``r`` as a function of ``psi`` and ``r*`` as a function of ``r``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.stats import norm

from .core import ConstrainedFit, ModelFit, ModelSpec, constrained_maximize, natural_derivative, to_natural, from_natural
from .corrections import SINGULAR_R, AdjustedProfile, adjusted_profile, modified_root
from .exceptions import BridgeError, ExtendGridError, NumericalError, ProfileFailureError, ValidationError

PIVOTS = ("wald", "r", "rstar", "ra", "wald_a")


@dataclass(frozen=True)
class GridSpec:
    """Profile grid: ``psi_hat +/- width * SE`` with ``points`` values.

    Attributes
    ----------
    skip : float or None
        If set, grid points within ``skip * SE`` of ``psi_hat`` are not
        evaluated at all and no bridge is built.
    """

    width: float = 3.5
    points: int = 50
    singular: float = SINGULAR_R
    bridge: bool = True
    skip: float | None = None
    bridge_points: int = 12
    bridge_degree: int = 3
    lower: float | None = None
    upper: float | None = None


@dataclass
class BridgeFit:
    r_coef: np.ndarray
    rstar_coef: np.ndarray
    window: tuple[float, float]
    jump: float

    def __call__(self, psi):
        return np.polyval(self.rstar_coef, np.polyval(self.r_coef, psi))


@dataclass
class PivotProfile:
    """Pivot values on a grid of a scalar interest parameter (working scale).

    Attributes
    ----------
    psi : ndarray
        Strictly increasing grid.
    theta : ndarray, optional
        Constrained estimates, one row per grid point (NaN where the fit failed).
    lp, la, r, q, rstar, wald : ndarray
        Per-point records; ``rstar`` holds the raw value (NaN in the singular
        window) and ``rstar_bridged`` the value used for inference.
    flags : list of str
        Per-point comma-separated flags.
    """

    name: str
    psi: np.ndarray
    lp: np.ndarray
    la: np.ndarray | None
    r: np.ndarray
    q: np.ndarray
    rstar: np.ndarray
    rstar_bridged: np.ndarray
    wald: np.ndarray
    flags: list[str]
    psi_hat: float
    se: float
    loglik_hat: float
    scale: str = "identity"
    bridge: BridgeFit | None = None
    adjusted: AdjustedProfile | None = None
    singular_window: tuple[float, float] | None = None
    global_flags: list[str] = field(default_factory=list)
    theta: np.ndarray | None = None

    def natural(self, psi):
        return to_natural(self.scale, psi)

    @property
    def se_natural(self) -> float:
        return float(self.se * natural_derivative(self.scale, self.psi_hat))

    def pivot_values(self, pivot: str) -> tuple[np.ndarray, np.ndarray]:
        """Grid and finite pivot values for a pivot family."""
        if pivot == "r":
            vals = self.r
        elif pivot == "rstar":
            vals = self.rstar_bridged
        elif pivot == "wald":
            vals = self.wald
        elif pivot in ("ra", "wald_a"):
            if self.adjusted is None:
                raise ValidationError("profile has no adjusted likelihood; r_a unavailable")
            vals = self.adjusted.r_a(self.psi) if pivot == "ra" else (self.adjusted.psi_hat_a - self.psi) / self.adjusted.se_a
        else:
            raise ValidationError(f"unknown pivot {pivot!r}; choose from {PIVOTS}")
        ok = np.isfinite(vals)
        return self.psi[ok], np.asarray(vals, float)[ok]

    def curve(self, pivot: str) -> "SignificanceCurve":
        x, y = self.pivot_values(pivot)
        if len(x) < 4:
            raise ProfileFailureError(f"too few finite {pivot} values to interpolate")
        return SignificanceCurve(pivot, x, y, self.scale)

    def to_tsv(self) -> str:
        """Tab-separated export with columns psi, lp, la, r, q, rstar, wald, flags.

        ``psi`` is on the reported scale; ``rstar`` is the bridged value.
        """
        out = io.StringIO()
        out.write("psi\tlp\tla\tr\tq\trstar\twald\tflags\n")
        la = self.la if self.la is not None else np.full_like(self.psi, np.nan)
        for k in range(len(self.psi)):
            vals = [self.natural(self.psi[k]), self.lp[k], la[k], self.r[k], self.q[k], self.rstar_bridged[k], self.wald[k]]
            out.write("\t".join(_fmt(v) for v in vals) + "\t" + (self.flags[k] or "-") + "\n")
        return out.getvalue()


def _fmt(v) -> str:
    v = float(v)
    return "nan" if not np.isfinite(v) else repr(v)


@dataclass
class SignificanceCurve:
    """Continuous pivot ``psi -> z(psi)`` with significance ``Phi(z(psi))``.

    ``psi`` values are on the working scale; public methods accept and return
    reported-scale values.
    """

    pivot: str
    psi: np.ndarray
    z: np.ndarray
    scale: str = "identity"
    spline: CubicSpline = field(init=False, repr=False)
    monotone: bool = field(init=False)

    def __post_init__(self):
        self.spline = CubicSpline(self.psi, self.z, bc_type="natural")
        self.monotone = bool(np.all(np.diff(self.z) < 0))

    def pivot_at(self, psi_natural) -> np.ndarray:
        return self.spline(from_natural(self.scale, psi_natural))

    def significance(self, psi_natural):
        """``Phi(z(psi))``, a decreasing function of ``psi``."""
        return norm.cdf(self.pivot_at(psi_natural))

    def solve(self, z_target: float) -> float:
        """Working-scale ``psi`` where the interpolated pivot equals ``z_target``."""
        lo_z, hi_z = self.z[-1], self.z[0]
        if not (min(lo_z, hi_z) <= z_target <= max(lo_z, hi_z)):
            step = self.psi[1] - self.psi[0]
            slope = (self.z[-1] - self.z[0]) / (self.psi[-1] - self.psi[0])
            guess = self.psi[0] + (z_target - self.z[0]) / slope
            need = (min(self.psi[0], guess - 3 * step), max(self.psi[-1], guess + 3 * step))
            raise ExtendGridError(f"{self.pivot} pivot does not reach {z_target:.4g} on the grid", need)
        f = self.spline
        vals = f(self.psi) - z_target
        idx = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if len(idx) == 0:
            k = int(np.argmin(np.abs(vals)))
            return float(self.psi[k])
        # a non-monotone curve can cross more than once; take the outermost crossing
        k = idx[0] if z_target > 0 else idx[-1]
        a, b = self.psi[k], self.psi[k + 1]
        tol = 1e-8 * (self.psi[1] - self.psi[0])
        return float(brentq(lambda v: float(f(v)) - z_target, a, b, xtol=tol, rtol=4 * np.finfo(float).eps))

    def interval(self, level: float = 0.95) -> tuple[float, float]:
        """Equal-tailed confidence limits on the reported scale."""
        if not 0 < level < 1:
            raise ValidationError("level must lie in (0, 1)")
        z = norm.ppf(0.5 + level / 2)
        lo = self.solve(z)
        hi = self.solve(-z)
        return float(to_natural(self.scale, lo)), float(to_natural(self.scale, hi))

    def pvalues(self, psi0: float) -> dict[str, float]:
        """One- and two-sided P-values for ``psi = psi0``.

        ``upper`` is ``pr(Z >= z(psi0))`` (evidence that ``psi > psi0``) and
        ``lower`` its complement.
        """
        w = from_natural(self.scale, psi0)
        if not self.psi[0] <= w <= self.psi[-1]:
            raise ExtendGridError(f"psi0 = {psi0} outside the profiled range", (min(w, self.psi[0]), max(w, self.psi[-1])))
        z = float(self.spline(w))
        lower = float(norm.cdf(z))
        upper = float(norm.sf(z))
        return {"z": z, "lower": lower, "upper": upper, "two_sided": float(min(1.0, 2 * min(lower, upper)))}


def invert_significance(curve: SignificanceCurve, level: float = 0.95) -> tuple[float, float]:
    return curve.interval(level)


def hybrid_bridge(
    psi: np.ndarray, r: np.ndarray, rstar: np.ndarray, singular: np.ndarray, *, n_points: int = 12, degree: int = 3
) -> tuple[np.ndarray, BridgeFit]:
    """Fill singular-window values of ``r*`` by a two-step polynomial bridge.

    Parameters
    ----------
    psi, r, rstar : ndarray
        Grid values; ``rstar`` may be NaN inside the window.
    singular : ndarray of bool
        Points to be replaced.
    n_points : int
        Number of nearest non-singular points used by the least-squares fits.

    Returns
    -------
    filled : ndarray
        ``rstar`` with singular entries replaced.
    fit : BridgeFit
    """
    psi = np.asarray(psi, float)
    usable = ~singular & np.isfinite(r) & np.isfinite(rstar)
    if not singular.any():
        centre = psi[int(np.argmin(np.abs(r)))]
    else:
        centre = 0.5 * (psi[singular].min() + psi[singular].max())
    per_side = n_points // 2
    chosen = None
    for need in (per_side, max(per_side - 2, degree)):
        left = np.nonzero(usable & (psi < centre))[0]
        right = np.nonzero(usable & (psi > centre))[0]
        if len(left) >= need and len(right) >= need:
            chosen = np.concatenate([left[-per_side:], right[:per_side]])
            break
    if chosen is None:
        raise BridgeError("fewer than the required non-singular points on each side of the estimate")
    r_coef = np.polyfit(psi[chosen], r[chosen], degree)
    rstar_coef = np.polyfit(r[chosen], rstar[chosen], degree)
    fit = BridgeFit(r_coef, rstar_coef, (float(psi[singular].min()) if singular.any() else centre, float(psi[singular].max()) if singular.any() else centre), 0.0)
    filled = rstar.copy()
    filled[singular] = fit(psi[singular])
    # continuity at the nearest usable neighbours of the window
    edge = [chosen[per_side - 1], chosen[per_side]] if len(chosen) >= 2 * per_side else list(chosen[:1])
    fit.jump = float(max(abs(fit(psi[k]) - rstar[k]) for k in edge))
    return filled, fit


def _grid(psi_hat: float, se: float, spec: GridSpec) -> np.ndarray:
    lo = spec.lower if spec.lower is not None else psi_hat - spec.width * se
    hi = spec.upper if spec.upper is not None else psi_hat + spec.width * se
    grid = np.linspace(lo, hi, spec.points)
    if spec.skip is not None:
        grid = grid[np.abs(grid - psi_hat) >= spec.skip * se]
    return grid


def build_profile(
    model: ModelSpec,
    fit: ModelFit,
    interest: int | str,
    *,
    q_func: Callable[[ModelFit, ConstrainedFit], float] | None = None,
    log_adjust: Callable[[ModelFit, ConstrainedFit], float] | None = None,
    adjust_variant: str = "",
    grid: GridSpec | None = None,
    max_failed: float = 0.2,
) -> PivotProfile:
    """Profile a scalar interest parameter.

    Parameters
    ----------
    model : ModelSpec
    fit : ModelFit
        Converged full fit.
    interest : int or str
        Interest coordinate (index or working-scale name).
    q_func : callable, optional
        ``(fit, cfit) -> q``; without it ``q`` and ``r*`` are NaN.
    log_adjust : callable, optional
        ``(fit, cfit) -> log M(psi)`` for the adjusted profile likelihood.
    grid : GridSpec, optional

    Raises
    ------
    ProfileFailureError
        When more than ``max_failed`` of the grid points fail.
    """
    if not fit.converged:
        raise ValidationError(f"full fit did not converge: {fit.message}")
    spec = grid or GridSpec()
    model = model.with_interest(interest)
    part = model.partition
    k = part.interest[0]
    name = model.names[k] if model.names else f"theta[{k}]"
    psi_hat = float(fit.theta[k])
    se = float(np.sqrt(fit.covariance[k, k]))
    psis = _grid(psi_hat, se, spec)
    n = len(psis)
    lp = np.full(n, np.nan)
    la = np.full(n, np.nan) if log_adjust is not None else None
    r = np.full(n, np.nan)
    q = np.full(n, np.nan)
    thetas = np.full((n, model.dim), np.nan)
    flags: list[list[str]] = [[] for _ in range(n)]

    # warm starts walk outwards from the estimate on each side
    centre = int(np.searchsorted(psis, psi_hat))
    order = list(range(centre, n)) + list(range(centre - 1, -1, -1))
    start = fit.theta.copy()
    failed = 0
    for j in order:
        if j == centre - 1:
            start = fit.theta.copy()
        try:
            cf = constrained_maximize(model, psis[j], start)
        except NumericalError:
            flags[j].append("fit-error")
            failed += 1
            continue
        if not cf.converged:
            flags[j].append("nonconverged")
            failed += 1
            continue
        start = cf.theta
        thetas[j] = cf.theta
        lp[j] = cf.loglik
        w = 2.0 * (fit.loglik - cf.loglik)
        if w < -1e-7 * (1 + abs(fit.loglik)):
            flags[j].append("lp-above-max")
        r[j] = np.sign(psi_hat - psis[j]) * np.sqrt(max(w, 0.0))
        if q_func is not None:
            try:
                q[j] = q_func(fit, cf)
            except NumericalError:
                flags[j].append("q-failed")
        if log_adjust is not None:
            try:
                la[j] = cf.loglik + log_adjust(fit, cf)
            except NumericalError:
                flags[j].append("adjust-undefined")
    if failed > max_failed * n:
        raise ProfileFailureError(f"{failed} of {n} grid points failed for {name}")

    scale = model.scale_of(k)
    se_nat = se * float(natural_derivative(scale, psi_hat))
    wald = (to_natural(scale, psi_hat) - to_natural(scale, psis)) / se_nat

    rstar = modified_root(r, q) if q_func is not None else np.full(n, np.nan)
    singular = np.abs(r) < spec.singular
    for j in np.nonzero(singular & np.isfinite(r))[0]:
        flags[j].append("singular")
    rstar_raw = np.where(singular, np.nan, rstar)
    for j in np.nonzero(~singular & np.isfinite(r) & np.isfinite(q) & ~np.isfinite(rstar))[0]:
        flags[j].append("sign-mismatch")

    prof = PivotProfile(
        name=name, psi=psis, lp=lp, la=la, r=r, q=q, rstar=rstar_raw, rstar_bridged=rstar_raw.copy(), wald=wald,
        flags=[], psi_hat=psi_hat, se=se, loglik_hat=fit.loglik, scale=scale, theta=thetas,
    )
    if q_func is not None and spec.bridge and spec.skip is None and singular.any():
        filled, bfit = hybrid_bridge(psis, r, rstar_raw, singular & np.isfinite(r), n_points=spec.bridge_points, degree=spec.bridge_degree)
        prof.rstar_bridged = filled
        prof.bridge = bfit
        prof.singular_window = bfit.window
        for j in np.nonzero(singular & np.isfinite(r))[0]:
            flags[j].append("bridged")
        if bfit.jump > 1e-3:
            prof.global_flags.append(f"bridge-jump={bfit.jump:.2e}")
    fin = np.isfinite(r)
    if not np.all(np.diff(r[fin]) < 0):
        prof.global_flags.append("r-not-decreasing")
    fs = np.isfinite(prof.rstar_bridged)
    if q_func is not None and not np.all(np.diff(prof.rstar_bridged[fs]) < 0):
        prof.global_flags.append("rstar-not-monotone")
    if log_adjust is not None:
        prof.adjusted = adjusted_profile(psis, lp, la - lp, adjust_variant)
    prof.flags = [",".join(f) for f in flags]
    return prof


def standard_intervals(profile: PivotProfile, pivots: Iterable[str], level: float = 0.95) -> dict[str, tuple[float, float]]:
    """Confidence limits for several pivot families.

    The Wald interval is computed in closed form as estimate +/- z SE on the
    reported scale; the adjusted Wald interval likewise from the adjusted
    estimate.  The others come from spline inversion.
    """
    z = norm.ppf(0.5 + level / 2)
    out = {}
    for p in pivots:
        if p == "wald":
            est = float(profile.natural(profile.psi_hat))
            out[p] = (est - z * profile.se_natural, est + z * profile.se_natural)
        elif p == "wald_a":
            adj = profile.adjusted
            if adj is None:
                raise ValidationError("no adjusted profile available")
            out[p] = (adj.psi_hat_a - z * adj.se_a, adj.psi_hat_a + z * adj.se_a)
        else:
            out[p] = profile.curve(p).interval(level)
    return out


def with_grid_retry(build: Callable[[GridSpec], PivotProfile], task: Callable[[PivotProfile], object],
                    grid: GridSpec, *, retries: int = 4, factor: float = 1.6):
    """Run ``task(build(grid))``, widening the grid when a limit falls outside it.

    Returns
    -------
    (PivotProfile, object)
        The profile finally used and the task result.
    """
    for attempt in range(retries + 1):
        prof = build(grid)
        try:
            return prof, task(prof)
        except ExtendGridError as exc:
            if attempt == retries:
                raise
            if grid.lower is not None or grid.upper is not None:
                lo, hi = exc.needed
                span = hi - lo
                grid = replace(grid, lower=lo - 0.1 * span, upper=hi + 0.1 * span)
            else:
                grid = replace(grid, width=grid.width * factor)
    raise AssertionError("unreachable")

"""Fringe fitting, accidental subtraction and coincidence-window estimation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .events import CountRecord


class AnalysisError(RuntimeError):
    pass


class UndefinedVisibilityError(AnalysisError, ValueError):
    pass


class InsufficientDataError(AnalysisError):
    pass


class UnidentifiableError(AnalysisError):
    pass


class ConvergenceError(AnalysisError):
    """The fit did not converge; ``last`` holds the last iterate as a :class:`FitResult`."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


def visibility(c_max: float, c_min: float) -> float:
    """``(c_max - c_min) / (c_max + c_min)``."""
    if c_min < 0:
        raise ValueError(f"counts must be nonnegative, got c_min={c_min}")
    if c_min > c_max:
        raise ValueError(f"c_min ({c_min}) exceeds c_max ({c_max})")
    if c_max + c_min == 0:
        raise UndefinedVisibilityError("visibility undefined for c_max + c_min = 0")
    return (c_max - c_min) / (c_max + c_min)


def accidental_rate(singles_rate_A: float, singles_rate_B: float, window: float) -> float:
    """Accidental coincidence rate ``2 S_A S_B window`` for all-pairs counting."""
    return 2.0 * singles_rate_A * singles_rate_B * window


def fringe_model(x, c0, V, omega, x0):
    return c0 * (1.0 + V * np.cos(omega * (np.asarray(x, dtype=float) - x0)))


@dataclass(frozen=True)
class FitResult:
    c0: float
    V: float
    omega: float
    x0: float
    sigma_c0: float
    sigma_V: float
    sigma_omega: float
    sigma_x0: float
    chi2_reduced: float
    n_points: int = 0
    iterations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def format_block(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in self.to_dict().items())


# V = (1 + sin(theta)) / 2 keeps the visibility inside [0, 1]
def _v_of_theta(theta):
    return 0.5 * (1.0 + math.sin(theta))


def _theta_of_v(v):
    return math.asin(min(max(2.0 * v - 1.0, -0.98), 0.98))


def _initial_guess(x, y, w):
    """Weighted linear fit of ``a + b cos(wx) + c sin(wx)`` over a frequency grid.

    The grid runs from one period across the scan to the Nyquist frequency of
    the median spacing; the frequency with the smallest weighted residual wins.
    """
    span = float(np.ptp(x))
    steps = np.diff(np.unique(x))
    nyquist = math.pi / float(np.median(steps))
    w_min = 2.0 * math.pi / span
    n_grid = max(200, int(20 * (nyquist - w_min) / w_min))
    best = None
    sw = np.sqrt(w)
    for om in np.linspace(w_min, nyquist, n_grid):
        A = np.column_stack([np.ones_like(x), np.cos(om * x), np.sin(om * x)]) * sw[:, None]
        coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
        res = float(np.sum((A @ coef - y * sw) ** 2))
        if best is None or res < best[0]:
            best = (res, om, coef)
    _, om, (a, b, c) = best
    c0 = a if a > 0 else float(np.mean(y))
    v = math.hypot(b, c) / c0 if c0 > 0 else 0.5
    x0 = math.atan2(c, b) / om
    return c0, min(max(v, 0.0), 1.0), om, x0


def _lm(x, y, sigma, p, max_iter, xtol):
    """Levenberg-Marquardt on parameters ``(c0, theta, omega, x0)``.

    Returns the final parameters, the number of iterations used and whether the
    relative-step criterion was met.
    """
    def resid(q):
        c0, th, om, x0 = q
        return (fringe_model(x, c0, _v_of_theta(th), om, x0) - y) / sigma

    def jac(q):
        c0, th, om, x0 = q
        V = _v_of_theta(th)
        ph = om * (x - x0)
        cos, sin = np.cos(ph), np.sin(ph)
        J = np.empty((x.size, 4))
        J[:, 0] = 1.0 + V * cos
        J[:, 1] = c0 * cos * 0.5 * math.cos(th)
        J[:, 2] = -c0 * V * sin * (x - x0)
        J[:, 3] = c0 * V * sin * om
        return J / sigma[:, None]

    p = np.array(p, dtype=float)
    r = resid(p)
    chi2 = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac(p)
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = p + step
            r_new = resid(trial)
            chi2_new = float(r_new @ r_new)
            if chi2_new <= chi2:
                break
            lam *= 10.0
            if lam > 1e16:
                return p, it, True  # no downhill direction left: at a minimum to rounding
        p, r, chi2 = trial, r_new, chi2_new
        lam = max(lam / 10.0, 1e-12)
        if np.all(np.abs(step) <= xtol * (np.abs(p) + xtol)):
            return p, it, True
    return p, max_iter, False


def fit_fringe(records: Sequence[CountRecord], piezo_voltage_sigma: float = 0.0,
               max_iter: int = 200, xtol: float = 1e-10) -> FitResult:
    """Weighted fit of ``C(x) = c0 (1 + V cos(omega (x - x0)))`` to coincidences.

    Each point's variance is its Poisson variance plus the piezo voltage
    uncertainty propagated through the local slope of the model (effective
    variance), so the weights are refreshed after each converged pass.
    Uncertainties come from the unscaled covariance at the optimum.
    """
    if len(records) < 8:
        raise InsufficientDataError(f"need at least 8 points for a 4-parameter fringe fit, got {len(records)}")
    x = np.array([r.scan_value for r in records], dtype=float)
    y = np.array([r.coincidences for r in records], dtype=float)
    var_y = np.array([r.variance for r in records], dtype=float)
    if np.unique(x).size < 8:
        raise InsufficientDataError("need at least 8 distinct scan values")
    if not np.any(y > 0):
        raise InsufficientDataError("no coincidences to fit")

    c0, v, om, x0 = _initial_guess(x, y, 1.0 / var_y)
    p = np.array([c0, _theta_of_v(v), om, x0])
    used = 0
    sigma = np.sqrt(var_y)
    for _ in range(6):
        p_prev = p.copy()
        p, it, ok = _lm(x, y, sigma, p, max_iter - used, xtol)
        used += it
        if not ok:
            raise ConvergenceError(f"fringe fit did not converge in {max_iter} iterations",
                                   last=_result(x, y, sigma, p, used))
        if piezo_voltage_sigma <= 0:
            break
        c0, th, om, x0 = p
        slope = c0 * _v_of_theta(th) * om * np.sin(om * (x - x0))
        sigma = np.sqrt(var_y + (slope * piezo_voltage_sigma) ** 2)
        if np.allclose(p, p_prev, rtol=1e-8, atol=0):
            break
    return _result(x, y, sigma, p, used)


def _result(x, y, sigma, p, iterations) -> FitResult:
    c0, th, om, x0 = (float(v) for v in p)
    V = _v_of_theta(th)
    if om < 0:
        om = -om
    period = 2.0 * math.pi / om
    x0 = (x0 + period / 2.0) % period - period / 2.0

    model = fringe_model(x, c0, V, om, x0)
    chi2 = float(np.sum(((model - y) / sigma) ** 2))
    dof = max(x.size - 4, 1)
    ph = om * (x - x0)
    J = np.column_stack([
        1.0 + V * np.cos(ph),
        c0 * np.cos(ph),
        -c0 * V * np.sin(ph) * (x - x0),
        c0 * V * np.sin(ph) * om,
    ]) / sigma[:, None]
    try:
        cov = np.linalg.pinv(J.T @ J)
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(4, np.nan)
    return FitResult(c0=c0, V=V, omega=om, x0=x0,
                     sigma_c0=float(errs[0]), sigma_V=float(errs[1]),
                     sigma_omega=float(errs[2]), sigma_x0=float(errs[3]),
                     chi2_reduced=chi2 / dof, n_points=int(x.size), iterations=int(iterations))


def subtract_accidentals(records: Sequence[CountRecord], window: float) -> list[CountRecord]:
    """Remove the accidental estimate ``2 S_A S_B window / duration`` from each record.

    Negative results are clamped to zero and flagged.
    """
    if window < 0:
        raise ValueError(f"window must be nonnegative, got {window}")
    out = []
    for r in records:
        if not r.duration > 0:
            raise ValueError(f"record at {r.scan_value} has nonpositive duration")
        acc = accidental_rate(r.singles_A / r.duration, r.singles_B / r.duration, window) * r.duration
        corr = r.coincidences_raw - acc
        flag = corr < 0
        out.append(replace(r, coincidences_corr=max(corr, 0.0), corr_flag=flag))
    return out


@dataclass(frozen=True)
class WindowEstimate:
    window: float
    baseline: float
    plateau_rate: float
    sigma_window: float
    sigma_baseline: float
    sigma_plateau: float

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_window(delay_records: Sequence[CountRecord]) -> WindowEstimate:
    """Top-hat plus constant fitted to coincidence rate versus delay.

    For every split of the sorted ``|delay|`` values into inner and outer
    groups the plateau and baseline are the group means (the profiled least
    squares solution); the split with the smallest residual sum wins and the
    half-width is placed midway between the last inner and first outer
    ``|delay|``.
    """
    d = np.abs(np.array([r.scan_value for r in delay_records], dtype=float))
    counts = np.array([r.coincidences for r in delay_records], dtype=float)
    dur = np.array([r.duration for r in delay_records], dtype=float)
    rate = counts / dur
    levels = np.unique(d)
    if levels.size < 2:
        raise UnidentifiableError("delay scan needs at least two distinct |delay| values")

    best = None
    for j in range(levels.size - 1):
        inner = d <= levels[j]
        p_in, p_out = rate[inner].mean(), rate[~inner].mean()
        sse = float(np.sum((rate[inner] - p_in) ** 2) + np.sum((rate[~inner] - p_out) ** 2))
        if best is None or sse < best[0]:
            best = (sse, j, inner)
    _, j, inner = best
    plateau = counts[inner].sum() / dur[inner].sum()
    baseline = counts[~inner].sum() / dur[~inner].sum()
    s_plateau = math.sqrt(max(counts[inner].sum(), 1.0)) / dur[inner].sum()
    s_baseline = math.sqrt(max(counts[~inner].sum(), 1.0)) / dur[~inner].sum()
    if plateau - baseline <= 3.0 * math.hypot(s_plateau, s_baseline):
        raise UnidentifiableError(
            "no significant plateau above baseline; the scan lies entirely inside or outside the window")
    return WindowEstimate(
        window=float(0.5 * (levels[j] + levels[j + 1])),
        baseline=float(baseline),
        plateau_rate=float(plateau),
        sigma_window=float(0.5 * (levels[j + 1] - levels[j])),
        sigma_baseline=float(s_baseline),
        sigma_plateau=float(s_plateau),
    )

"""Post-processing: time derivatives of <F>(t), the logarithmic law near the
critical time, and the slow-quench asymptote of <F>(0)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi
from scipy.stats import linregress

from .errors import ConfigError, DomainError
from .quench import (
    QuenchConfig,
    approx_expectation_f,
    expectation_f,
    integrate,
    lz_final,
    lz_modes,
    momentum_grid,
)

DEFAULT_WINDOW = (0.01, 0.2)
MIN_FIT_POINTS = 8
UNIFORM_RTOL = 1e-9


def derivative(times, values) -> np.ndarray:
    """d(values)/dt on a uniform grid: central differences inside, one-sided at the ends.

    ``values`` may carry extra leading axes; the last axis is time.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise DomainError("derivative needs at least 3 samples")
    if y.shape[-1] != t.size:
        raise DomainError("values and times have different lengths")
    steps = np.diff(t)
    h = steps.mean()
    if h <= 0 or np.max(np.abs(steps - h)) > UNIFORM_RTOL * max(abs(h), np.max(np.abs(t))):
        raise DomainError("derivative needs a uniform, increasing time grid; resample first")
    out = np.empty_like(y)
    out[..., 1:-1] = (y[..., 2:] - y[..., :-2]) / (2 * h)
    out[..., 0] = (y[..., 1] - y[..., 0]) / h
    out[..., -1] = (y[..., -1] - y[..., -2]) / h
    return out


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line |dF/dt| = slope * ln|t - t_c| + intercept."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    side: str
    n_points: int

    def __post_init__(self):
        if not 0.0 <= self.r_squared <= 1.0:
            raise ValueError("r_squared must lie in [0, 1]")
        if self.window[0] <= 0:
            raise ValueError("fit window must exclude t_c")


def fit_log_law(times, deriv, t_c: float, window: tuple[float, float]) -> dict[str, ScalingFit]:
    """Fit |deriv| against ln|t - t_c| for lo <= |t - t_c| <= hi.

    ``window`` is given in absolute time units.  Returns fits keyed by
    ``"before"`` (t < t_c), ``"after"`` (t > t_c) and ``"both"``.
    """
    t = np.asarray(times, dtype=float)
    y = np.abs(np.asarray(deriv, dtype=float))
    lo, hi = map(float, window)
    if not 0 < lo < hi:
        raise DomainError(f"window must satisfy 0 < lo < hi, got {window}")
    if t_c - hi < t.min() - 1e-12 or t_c + hi > t.max() + 1e-12:
        raise DomainError("fit window extends beyond the sampled range")
    dist = np.abs(t - t_c)
    inside = (dist >= lo * (1 - 1e-12)) & (dist <= hi * (1 + 1e-12))
    sides = {"before": inside & (t < t_c), "after": inside & (t > t_c), "both": inside}
    fits = {}
    for side, mask in sides.items():
        n = int(mask.sum())
        if n < MIN_FIT_POINTS:
            raise DomainError(f"only {n} points in the {side} window; need {MIN_FIT_POINTS}")
        x = np.log(dist[mask])
        res = linregress(x, y[mask])
        r2 = float(np.clip(res.rvalue ** 2, 0.0, 1.0)) if np.isfinite(res.rvalue) else 0.0
        fits[side] = ScalingFit(float(res.slope), float(res.intercept), r2, (lo, hi), side, n)
    return fits


@dataclass
class ScalingResult:
    tau_q: float
    t_c: float
    times: np.ndarray
    expectation: np.ndarray
    deriv: np.ndarray
    fits: dict[str, ScalingFit]
    peak_time: float
    dt: float
    halving_change: float

    @property
    def peak_offset_samples(self) -> float:
        return abs(self.peak_time - self.t_c) / self.dt


def _f_series(times, tau_q, method, nk):
    if method == "approx":
        return approx_expectation_f(times, tau_q, nk=nk, clamp=False)
    if method == "approx-clamped":
        return approx_expectation_f(times, tau_q, nk=nk, clamp=True)
    if method == "ode":
        cfg = QuenchConfig(tau_q=tau_q, nk=nk)
        return integrate(cfg, times=times).expectation_F
    raise ConfigError(f"unknown scaling method {method!r}")


def scaling_analysis(tau_q: float, window=DEFAULT_WINDOW, method: str = "approx", nk: int = 4096,
                     n_intervals: int = 4000, halving_tol: float = 1e-2) -> ScalingResult:
    """<F>(t) on [-2 tau_q, 0], its derivative, and the log-law fits around t_c = -tau_q.

    ``window`` is relative to tau_q.  ``method`` selects the mode populations:
    ``"approx"`` uses the approximate mode function without the negative-part
    cut (the cut introduces kinks that move the derivative peak off t_c),
    ``"approx-clamped"`` applies the cut, ``"ode"`` integrates the modes.
    The default grid spacing is tau_q/2000; a run at half the spacing checks
    the derivative over the fit window.
    """
    if tau_q <= 0:
        raise DomainError("tau_q must be > 0")
    if n_intervals % 4:
        raise ConfigError("n_intervals must be divisible by 4 so t_c sits on the grid")
    t_c = -tau_q
    times = np.linspace(-2 * tau_q, 0.0, n_intervals + 1)
    f = _f_series(times, tau_q, method, nk)
    d = derivative(times, f)
    abs_window = (window[0] * tau_q, window[1] * tau_q)
    fits = fit_log_law(times, d, t_c, abs_window)
    peak = float(times[int(np.argmax(np.abs(d)))])

    fine = np.linspace(-2 * tau_q, 0.0, 2 * n_intervals + 1)
    d_fine = derivative(fine, _f_series(fine, tau_q, method, nk))[::2]
    dist = np.abs(times - t_c)
    mask = (dist >= abs_window[0]) & (dist <= abs_window[1])
    change = float(np.max(np.abs(d_fine[mask] - d[mask])) / np.max(np.abs(d[mask])))
    if change > halving_tol:
        warnings.warn(f"derivative changes by {change:.2e} when the grid is halved", stacklevel=2)
    return ScalingResult(tau_q, t_c, times, f, d, fits, peak, float(times[1] - times[0]), change)


def f2_asymptote(tau_q) -> np.ndarray | float:
    """Slow-quench asymptote 1/(pi sqrt(2 tau_q)) of <F>(0)."""
    out = 1.0 / (np.pi * np.sqrt(2.0 * np.asarray(tau_q, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def _f1_integrand(k, tau_q, clip):
    v = 0.5 * (1 + np.cos(k)) - np.exp(-2 * np.pi * tau_q * np.sin(k) ** 2)
    return max(v, 0.0) if clip else v


def f1_quadrature(tau_q: float, clip_negative: bool = True) -> float:
    """<F>(0) = 1 - (1/pi) int_{-pi}^{pi} |v_k|^2 dk with the end-of-ramp populations.

    With ``clip_negative`` the negative part of the population near k = +-pi
    is cut to zero, as for the time-dependent approximation.  The integrand
    is even in k, so the integral runs over [0, pi] and doubles.
    """
    if tau_q < 1:
        raise DomainError("tau_q must be >= 1")
    w = min(np.pi / 4, 12.0 / np.sqrt(2 * np.pi * tau_q))
    edges = [0.0, w, np.pi - w, np.pi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = spi.quad(_f1_integrand, a, b, args=(tau_q, clip_negative), limit=400,
                          epsabs=1e-14, epsrel=1e-12)
        total += val
    return 1.0 - 2.0 * total / np.pi


def f1_grid(tau_q: float, nk: int = 2 ** 16, clip_negative: bool = True) -> float:
    """Same quantity as :func:`f1_quadrature`, through the mode observables on a midpoint grid."""
    ks = momentum_grid("thermodynamic", nk)
    v_sq = lz_modes(ks, tau_q) if clip_negative else lz_final(ks, tau_q).v_sq
    return expectation_f(v_sq)


def asymptote_compare(tau_list, clip_negative: bool = True) -> list[dict]:
    """Rows ``{tau_q, f1, f2, rel_diff}`` with rel_diff = |f1 - f2| / f2."""
    rows = []
    for tau in tau_list:
        f1 = f1_quadrature(float(tau), clip_negative)
        f2 = f2_asymptote(float(tau))
        rows.append({"tau_q": float(tau), "f1": f1, "f2": f2, "rel_diff": abs(f1 - f2) / f2})
    return rows

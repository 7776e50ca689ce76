"""Decay-curve fitting and model selection.

Three model forms, each with a constant offset ``c``:

* ``exp1``:   A exp(-t/tau) + c
* ``gauss1``: A exp(-t^2/tau^2) + c
* ``exp2``:   A1 exp(-t/tau1) + A2 exp(-t/tau2) + c,  tau1 < tau2

Amplitudes and times are fitted through their logarithms so they stay
positive without explicit bounds; for ``exp2`` the slow time is carried as
``tau2 = tau1 * (1 + exp(d))`` which keeps the ordering.  The optimizer is a
Levenberg-Marquardt loop on the weighted residuals with analytic Jacobians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DecayModel",
    "MODELS",
    "FitResult",
    "FitInputError",
    "ModelSelectionError",
    "fit",
    "fit_arrays",
    "select_model",
]

MAX_ITER = 500
RTOL = 1e-10
GTOL = 1e-12
TAU_SCALINGS = np.logspace(-1.0, 1.0, 5)
# amplitude below this fraction of the data scale is reported as sitting on its bound
_BOUND_FRACTION = 1e-9
_POLISH_ITER = 20
_REFINE_MAX_STEP = 1e-4


class FitInputError(ValueError):
    pass


class ModelSelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecayModel:
    id: str
    param_names: tuple[str, ...]

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    # --- parameter maps -------------------------------------------------
    def natural(self, theta: np.ndarray) -> np.ndarray:
        """Internal (log) parameters -> (amplitudes, times, offset)."""
        if self.id == "exp2":
            a1, b1, a2, d, c = theta
            tau1 = math.exp(b1)
            return np.array([math.exp(a1), tau1, math.exp(a2), tau1 * (1 + math.exp(d)), c])
        a, b, c = theta
        return np.array([math.exp(a), math.exp(b), c])

    def natural_jacobian(self, theta: np.ndarray) -> np.ndarray:
        nat = self.natural(theta)
        if self.id == "exp2":
            a1, b1, a2, d, c = theta
            jac = np.diag([nat[0], nat[1], nat[2], 0.0, 1.0])
            jac[3, 1] = nat[3]
            jac[3, 3] = nat[1] * math.exp(d)
            return jac
        return np.diag([nat[0], nat[1], 1.0])

    def internal(self, params) -> np.ndarray:
        p = [float(x) for x in params]
        if self.id == "exp2":
            a1, t1, a2, t2, c = p
            if t2 <= t1:
                a1, t1, a2, t2 = a2, t2, a1, t1
            if t2 <= t1:
                t2 = t1 * (1 + 1e-6)
            return np.array([math.log(a1), math.log(t1), math.log(a2), math.log(t2 / t1 - 1), c])
        a, t, c = p
        return np.array([math.log(a), math.log(t), c])

    # --- model values ---------------------------------------------------
    def evaluate(self, t, params) -> np.ndarray:
        """Model values at ``t`` for natural parameters."""
        t = np.asarray(t, dtype=float)
        if self.id == "exp1":
            A, tau, c = params
            return A * np.exp(-t / tau) + c
        if self.id == "gauss1":
            A, tau, c = params
            return A * np.exp(-((t / tau) ** 2)) + c
        A1, tau1, A2, tau2, c = params
        return A1 * np.exp(-t / tau1) + A2 * np.exp(-t / tau2) + c

    def value_and_jacobian(self, t: np.ndarray, theta: np.ndarray):
        """Model values and d(model)/d(internal parameters)."""
        nat = self.natural(theta)
        jac = np.empty((len(t), self.n_params))
        if self.id == "exp1":
            A, tau, c = nat
            e = A * np.exp(-t / tau)
            jac[:, 0] = e
            jac[:, 1] = e * t / tau
            jac[:, 2] = 1.0
            return e + c, jac
        if self.id == "gauss1":
            A, tau, c = nat
            x2 = (t / tau) ** 2
            g = A * np.exp(-x2)
            jac[:, 0] = g
            jac[:, 1] = 2.0 * g * x2
            jac[:, 2] = 1.0
            return g + c, jac
        A1, tau1, A2, tau2, c = nat
        e1 = A1 * np.exp(-t / tau1)
        e2 = A2 * np.exp(-t / tau2)
        slow = e2 * t / tau2
        jac[:, 0] = e1
        jac[:, 1] = e1 * t / tau1 + slow
        jac[:, 2] = e2
        jac[:, 3] = slow * (1.0 - tau1 / tau2)
        jac[:, 4] = 1.0
        return e1 + e2 + c, jac


MODELS = {
    "exp1": DecayModel("exp1", ("A", "tau", "c")),
    "gauss1": DecayModel("gauss1", ("A", "tau", "c")),
    "exp2": DecayModel("exp2", ("A1", "tau1", "A2", "tau2", "c")),
}


def _model(model) -> DecayModel:
    if isinstance(model, DecayModel):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise FitInputError(f"unknown model {model!r}") from None


@dataclass
class FitResult:
    model: str
    names: tuple[str, ...]
    values: np.ndarray
    sigmas: np.ndarray
    rss: float
    aic: float
    converged: bool
    iterations: int
    at_bound: bool = False
    n_points: int = 0
    weighted: bool = False
    # optimizer coordinates, in units of (max |y|, last time)
    internal: np.ndarray = field(default=None, repr=False)

    @property
    def params(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))

    @property
    def dominant_tau(self) -> float:
        """Decay time of the largest-amplitude component."""
        p = self.params
        if self.model == "exp2":
            return p["tau1"] if p["A1"] >= p["A2"] else p["tau2"]
        return p["tau"]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "parameters": [
                {"name": n, "value": float(v), "sigma": float(s)}
                for n, v, s in zip(self.names, self.values, self.sigmas)
            ],
            "rss": float(self.rss),
            "aic": float(self.aic) if math.isfinite(self.aic) else None,
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "at_bound": bool(self.at_bound),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _initial_guess(model: DecayModel, t: np.ndarray, y: np.ndarray):
    c0 = float(np.min(y))
    scale = float(np.max(np.abs(y))) or 1.0
    a0 = max(float(np.max(y)) - c0, 1e-12 * scale)
    below = np.flatnonzero(y < c0 + a0 / math.e)
    tau0 = float(t[below[0]]) if below.size else float(t[-1])
    if tau0 <= 0:
        tau0 = float(t[t > 0][0])
    return a0, tau0, c0


def _starts(model: DecayModel, t, y):
    a0, tau0, c0 = _initial_guess(model, t, y)
    for s in TAU_SCALINGS:
        if model.id == "exp2":
            yield model.internal([a0 / 2, tau0 / 3 * s, a0 / 2, 3 * tau0 * s, c0])
        else:
            yield model.internal([a0, tau0 * s, c0])


def _rss(model, t, y, sw, theta):
    f, _ = model.value_and_jacobian(t, theta)
    r = (f - y) * sw
    return float(r @ r)


def _levenberg_marquardt(model: DecayModel, t, y, sw, theta):
    """Returns (theta, rss, converged, iterations)."""
    lam = 1e-3
    f, jac = model.value_and_jacobian(t, theta)
    r = (f - y) * sw
    jw = jac * sw[:, None]
    rss = float(r @ r)
    for it in range(1, MAX_ITER + 1):
        if rss == 0.0:
            return theta, rss, True, it - 1
        grad = jw.T @ r
        col = np.sqrt(np.sum(jw * jw, axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            cosines = np.abs(grad) / (col * math.sqrt(rss))
        if np.all(np.nan_to_num(cosines) < GTOL):
            return theta, rss, True, it - 1
        jtj = jw.T @ jw
        diag = np.maximum(np.diag(jtj), 1e-300)
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = theta + step
            if not np.all(np.isfinite(trial)) or np.any(np.abs(trial[:-1]) > 700):
                lam *= 10.0
                continue
            f_new, jac_new = model.value_and_jacobian(t, trial)
            r_new = (f_new - y) * sw
            rss_new = float(r_new @ r_new)
            if np.isfinite(rss_new) and rss_new <= rss:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no downhill step at any damping: stationary to working precision
            return theta, rss, bool(np.all(np.nan_to_num(cosines) < 1e-6)), it
        change = (rss - rss_new) / rss
        theta, r, rss = trial, r_new, rss_new
        jw = jac_new * sw[:, None]
        lam = max(lam / 10.0, 1e-12)
        if change < RTOL:
            return theta, rss, True, it
    return theta, rss, False, MAX_ITER


def _refine(model: DecayModel, t, y, sw, theta, rss):
    """Gauss-Newton steps toward ``J^T r = 0`` while they keep contracting.

    The residual sum is flat to rounding near the optimum, so a residual-based
    stop leaves the parameters loose at the 1e-8 level; the stationarity
    condition pins them to rounding instead.
    """
    prev = math.inf
    for _ in range(_POLISH_ITER):
        f, jac = model.value_and_jacobian(t, theta)
        r = (f - y) * sw
        step = np.linalg.lstsq(jac * sw[:, None], -r, rcond=None)[0]
        size = float(np.max(np.abs(step) / (1.0 + np.abs(theta))))
        # only local corrections; large steps mean a flat or degenerate direction
        if not np.isfinite(size) or size >= prev or size > _REFINE_MAX_STEP:
            break
        trial = theta + step
        new_rss = _rss(model, t, y, sw, trial)
        if not new_rss <= rss * (1.0 + 1e-12):
            break
        theta, rss, prev = trial, min(rss, new_rss), size
        if size == 0.0:
            break
    return theta, rss


def _weights(stat_error):
    """Per-point sqrt-weights; zero-error points take the largest finite weight."""
    if stat_error is None:
        return None
    err = np.asarray(stat_error, dtype=float)
    pos = err > 0
    if not pos.any():
        return None
    sw = np.empty_like(err)
    sw[pos] = 1.0 / err[pos]
    sw[~pos] = sw[pos].max()
    return sw


def fit_arrays(t, y, model, stat_error=None) -> FitResult:
    """Fit ``model`` to samples ``(t, y)``; see :func:`fit`."""
    m = _model(model)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise FitInputError("t and y must be one-dimensional and of equal length")
    if len(t) < 2 + m.n_params:
        raise FitInputError(f"{m.id} needs at least {2 + m.n_params} points, got {len(t)}")
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise FitInputError("times must be non-negative and strictly increasing")
    if not np.all(np.isfinite(y)):
        raise FitInputError("data must be finite")
    # fit in units of the last time and the largest |y| so the optimizer
    # path does not depend on the caller's units
    t_unit = float(t[-1])
    y_unit = float(np.max(np.abs(y))) or 1.0
    tn, yn = t / t_unit, y / y_unit
    sw = _weights(None if stat_error is None else np.asarray(stat_error, dtype=float) / y_unit)
    weighted = sw is not None
    if sw is None:
        sw = np.ones_like(y)

    best = None
    for start in _starts(m, tn, yn):
        theta, rss, ok, its = _levenberg_marquardt(m, tn, yn, sw, start)
        if best is None or rss < best[1]:
            best = (theta, rss, ok, its)
    theta, rss, converged, iterations = best
    if converged:
        theta, rss = _refine(m, tn, yn, sw, theta, rss)

    _, jac = m.value_and_jacobian(tn, theta)
    jw = jac * sw[:, None]
    n, k = len(t), m.n_params
    cov = np.linalg.pinv(jw.T @ jw)
    if not weighted:
        cov *= rss / max(n - k, 1)
        rss *= y_unit**2
    dn = m.natural_jacobian(theta)
    sig = np.sqrt(np.maximum(np.diag(dn @ cov @ dn.T), 0.0))
    unit = np.array([t_unit if name.startswith("tau") else y_unit for name in m.param_names])
    nat = m.natural(theta) * unit
    sig = sig * unit
    aic = n * math.log(rss / n) + 2 * k if rss > 0 else -math.inf
    amp_idx = [0, 2] if m.id == "exp2" else [0]
    at_bound = any(nat[i] < _BOUND_FRACTION * y_unit for i in amp_idx)
    return FitResult(m.id, m.param_names, nat, sig, rss, aic, converged, iterations,
                     at_bound, n, weighted, theta)


def fit(curve, model) -> FitResult:
    """Fit a :class:`~spinwave.retrieval.DecayCurve`.

    Points are weighted by ``1/stat_error^2``; points with zero error (the
    exactly normalized ``t = 0`` value) take the largest weight present, and
    a curve without any positive error is fitted unweighted.
    """
    return fit_arrays(curve.times, curve.efficiency, model, curve.stat_error)


def select_model(curve, candidates=("exp1", "gauss1", "exp2")) -> tuple[FitResult, str]:
    """Lowest-AIC converged fit; within 2 AIC units the simpler model wins."""
    models = [_model(c) for c in candidates]
    if not models:
        raise FitInputError("no candidate models")
    fits = [fit(curve, m) for m in models]
    ok = [f for f in fits if f.converged]
    if not ok:
        raise ModelSelectionError("no candidate fit converged")
    best_aic = min(f.aic for f in ok)
    close = [f for f in ok if f.aic - best_aic < 2.0 or f.aic == best_aic]
    chosen = min(close, key=lambda f: (len(f.names), f.aic))
    return chosen, chosen.model


def fit_all(curve, candidates) -> list[FitResult]:
    return [fit(curve, c) for c in candidates]

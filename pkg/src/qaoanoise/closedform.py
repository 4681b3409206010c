"""Closed-form fidelity and cost models and their least-squares fits.

The per-``m`` averages are modelled as

    f_m ~ 1 + alpha (kappa^-m - 1)            (fidelity, f_0 = 1 built in)
    c_m ~ alpha + alpha_tilde chi^-m          (cost)

and the binomial sum over ``m`` then collapses to

    F(p) = 1 + alpha ([1 - p (kappa-1)/kappa]^n - 1)
    C(p) = alpha + (C_ideal - alpha) [1 - p (chi-1)/chi]^n,   C_ideal = alpha + alpha_tilde

with ``n = N*d`` noise slots. For small ``p`` these match the power laws
``(1-p)^(delta n)`` and ``(1-p)^(eta n) C_ideal`` with the exponents returned
by :func:`delta_exponent` and :func:`eta_exponent`.

Fits use a damped Gauss-Newton (Levenberg-Marquardt) iteration with a fixed
set of starting points. The decay rate is parameterised as ``1 + exp(s)`` so
``kappa > 1`` and ``chi > 1`` hold throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FitError, UndefinedExponentError, ValidationError

START_RATES = (1.5, 2.0, 3.0, 5.0)
MAX_ITER = 200
STEP_TOL = 1e-10


@dataclass(frozen=True)
class FidelityFit:
    alpha: float
    kappa: float
    residual: float
    converged: bool = True

    def f_model(self, m):
        m = np.asarray(m, dtype=float)
        return 1.0 + self.alpha * (self.kappa ** (-m) - 1.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delta"] = delta_exponent(self)
        return out


@dataclass(frozen=True)
class CostFit:
    alpha: float
    alpha_tilde: float
    chi: float
    residual: float
    converged: bool = True

    @property
    def c_ideal(self) -> float:
        return self.alpha + self.alpha_tilde

    def c_model(self, m):
        m = np.asarray(m, dtype=float)
        return self.alpha + self.alpha_tilde * self.chi ** (-m)

    def to_dict(self) -> dict:
        out = asdict(self)
        try:
            out["eta"] = eta_exponent(self)
        except UndefinedExponentError:
            out["eta"] = None
        return out


def save_fit(fit, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(fit.to_dict(), indent=2) + "\n")
    return path


def load_fit(path):
    data = json.loads(Path(path).read_text())
    data.pop("delta", None)
    data.pop("eta", None)
    if "kappa" in data:
        return FidelityFit(**data)
    return CostFit(**data)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@dataclass
class _Solution:
    x: np.ndarray
    cost: float
    converged: bool
    iterations: int


def levenberg_marquardt(residuals, jacobian, x0, max_iter=MAX_ITER, step_tol=STEP_TOL) -> _Solution:
    """Minimise ``sum(residuals(x)**2)`` by damped Gauss-Newton.

    Uses Marquardt's diagonal scaling. Steps that do not reduce the objective
    (or give non-finite residuals) are retried with heavier damping; when no
    damping level helps, the current point is a numerical minimum and the
    run counts as converged.
    """
    x = np.asarray(x0, dtype=float)
    r = residuals(x)
    if not np.all(np.isfinite(r)):
        return _Solution(x, math.inf, False, 0)
    cost = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jacobian(x)
        A = J.T @ J
        g = J.T @ r
        scale = np.diag(A).copy()
        scale[scale <= 0] = 1e-12 * max(1.0, float(np.max(scale)))
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_new = x + step
                r_new = residuals(x_new)
                if np.all(np.isfinite(r_new)):
                    cost_new = float(r_new @ r_new)
                    if cost_new <= cost:
                        break
            lam *= 10.0
            if lam > 1e16:
                return _Solution(x, cost, True, it)
        small = np.linalg.norm(step) < step_tol * (1.0 + np.linalg.norm(x))
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-15)
        if small:
            return _Solution(x, cost, True, it)
    return _Solution(x, cost, False, max_iter)


def _rate(s):
    return 1.0 + math.exp(min(s, 700.0))


def _best(solutions, what):
    ok = [s for s in solutions if s.converged and math.isfinite(s.cost)]
    pool = ok or [s for s in solutions if math.isfinite(s.cost)]
    if not pool:
        raise FitError(f"{what} fit: no start produced a finite objective")
    best = min(pool, key=lambda s: s.cost)
    if not ok:
        raise FitError(f"{what} fit did not converge in {MAX_ITER} iterations", best=best)
    return best


def _curve_arrays(curve, values=None):
    if values is None:
        ms, ys = np.asarray(curve.ms, dtype=float), np.asarray(curve.means, dtype=float)
        return ms, ys, curve
    return np.asarray(curve, dtype=float), np.asarray(values, dtype=float), None


def _weights(curve_obj, keep, weighting, log_space, ys):
    if weighting in (None, "none"):
        return np.ones(int(np.sum(keep)))
    if weighting != "inverse_variance":
        raise ValidationError(f"unknown weighting {weighting!r}")
    if curve_obj is None:
        raise ValidationError("inverse-variance weighting needs an MLevelCurve")
    se = curve_obj.stderr()[keep]
    if log_space:
        se = se / ys
    nonzero = se[se > 0]
    if nonzero.size == 0:
        return np.ones(se.size)
    floor = float(np.min(nonzero))
    return 1.0 / np.maximum(se, floor) ** 2


# ---------------------------------------------------------------------------
# m-level fits
# ---------------------------------------------------------------------------


def fit_fidelity(curve, values=None, weighting: str | None = None) -> FidelityFit:
    """Fit ``1 + alpha (kappa^-m - 1)`` to an overlap curve on a log scale.

    ``curve`` is an :class:`~qaoanoise.decomposition.MLevelCurve`, or an array
    of ``m`` values with ``values`` holding the means. Points with
    non-positive means are dropped, since their log is undefined.
    """
    ms, ys, curve_obj = _curve_arrays(curve, values)
    keep = ys > 0
    if np.unique(ms[keep]).size < 3:
        raise ValidationError("fidelity fit needs >= 3 distinct m values with positive means")
    m, logy = ms[keep], np.log(ys[keep])
    sw = np.sqrt(_weights(curve_obj, keep, weighting, True, ys[keep]))

    def model(x):
        return 1.0 + x[0] * (_rate(x[1]) ** (-m) - 1.0)

    def residuals(x):
        g = model(x)
        if np.any(g <= 0):
            return np.full(m.size, np.inf)
        return sw * (np.log(g) - logy)

    def jacobian(x):
        k = _rate(x[1])
        g = model(x)
        dg_da = k ** (-m) - 1.0
        dg_ds = -x[0] * m * k ** (-m - 1.0) * (k - 1.0)
        return sw[:, None] * np.column_stack([dg_da, dg_ds]) / g[:, None]

    sols = []
    for k0 in START_RATES:
        basis = k0 ** (-m) - 1.0
        denom = float(basis @ basis)
        a_ls = float((ys[keep] - 1.0) @ basis / denom) if denom > 0 else 1.0
        a_ls = a_ls if a_ls != 0 else 1.0
        for a0 in (abs(a_ls), -abs(a_ls)):
            sols.append(levenberg_marquardt(residuals, jacobian, [a0, math.log(k0 - 1.0)]))
    best = _best(sols, "fidelity")
    return FidelityFit(float(best.x[0]), _rate(best.x[1]), best.cost, best.converged)


def fit_cost(curve, values=None, weighting: str | None = None) -> CostFit:
    """Fit ``alpha + alpha_tilde chi^-m`` to a cost curve with linear residuals."""
    ms, ys, curve_obj = _curve_arrays(curve, values)
    keep = np.isfinite(ys)
    if np.unique(ms[keep]).size < 4:
        raise ValidationError("cost fit needs >= 4 distinct m values")
    m, y = ms[keep], ys[keep]
    sw = np.sqrt(_weights(curve_obj, keep, weighting, False, y))

    def residuals(x):
        return sw * (x[0] + x[1] * _rate(x[2]) ** (-m) - y)

    def jacobian(x):
        c = _rate(x[2])
        return sw[:, None] * np.column_stack(
            [np.ones_like(m), c ** (-m), -x[1] * m * c ** (-m - 1.0) * (c - 1.0)]
        )

    sols = []
    for c0 in START_RATES:
        design = np.column_stack([np.ones_like(m), c0 ** (-m)])
        (a_ls, at_ls), *_ = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)
        for a0 in (a_ls, -a_ls):
            sols.append(levenberg_marquardt(residuals, jacobian, [a0, at_ls, math.log(c0 - 1.0)]))
    best = _best(sols, "cost")
    return CostFit(float(best.x[0]), float(best.x[1]), _rate(best.x[2]), best.cost, best.converged)


# ---------------------------------------------------------------------------
# Fits directly against p-curves
# ---------------------------------------------------------------------------


def _p_base(p, rate, n_slots):
    return (1.0 - p * (rate - 1.0) / rate) ** n_slots


def fit_cost_vs_p(ps, costs, n_slots: int) -> CostFit:
    """Fit the closed-form cost model directly to ``C(p)`` samples.

    Free parameters are ``alpha``, ``C_ideal`` and ``chi``; the returned fit
    stores ``alpha_tilde = C_ideal - alpha``.
    """
    p = np.asarray(ps, dtype=float)
    y = np.asarray(costs, dtype=float)
    if p.size < 3:
        raise ValidationError("need at least 3 (p, cost) points")

    def residuals(x):
        return x[0] + (x[1] - x[0]) * _p_base(p, _rate(x[2]), n_slots) - y

    def jacobian(x):
        c = _rate(x[2])
        base = 1.0 - p * (c - 1.0) / c
        B = base**n_slots
        # d base / d chi = -p / chi^2 ; d chi / d s = chi - 1
        dB = n_slots * base ** (n_slots - 1) * (-p / c**2) * (c - 1.0)
        return np.column_stack([1.0 - B, B, (x[1] - x[0]) * dB])

    sols = []
    for c0 in START_RATES:
        B = _p_base(p, c0, n_slots)
        (a_ls, ci_ls), *_ = np.linalg.lstsq(np.column_stack([1.0 - B, B]), y, rcond=None)
        for a0 in (a_ls, -a_ls):
            sols.append(levenberg_marquardt(residuals, jacobian, [a0, ci_ls, math.log(c0 - 1.0)]))
    best = _best(sols, "cost(p)")
    a, ci = float(best.x[0]), float(best.x[1])
    return CostFit(a, ci - a, _rate(best.x[2]), best.cost, best.converged)


def fit_fidelity_vs_p(ps, fids, n_slots: int) -> FidelityFit:
    """Fit ``1 + alpha ([1 - p (kappa-1)/kappa]^n - 1)`` directly to ``F(p)`` samples."""
    p = np.asarray(ps, dtype=float)
    y = np.asarray(fids, dtype=float)
    if p.size < 2:
        raise ValidationError("need at least 2 (p, fidelity) points")

    def residuals(x):
        return 1.0 + x[0] * (_p_base(p, _rate(x[1]), n_slots) - 1.0) - y

    def jacobian(x):
        k = _rate(x[1])
        base = 1.0 - p * (k - 1.0) / k
        dB = n_slots * base ** (n_slots - 1) * (-p / k**2) * (k - 1.0)
        return np.column_stack([base**n_slots - 1.0, x[0] * dB])

    sols = []
    for k0 in START_RATES:
        basis = _p_base(p, k0, n_slots) - 1.0
        denom = float(basis @ basis)
        a_ls = float((y - 1.0) @ basis / denom) if denom > 0 else 1.0
        for a0 in (a_ls, -a_ls):
            sols.append(levenberg_marquardt(residuals, jacobian, [a0, math.log(k0 - 1.0)]))
    best = _best(sols, "fidelity(p)")
    return FidelityFit(float(best.x[0]), _rate(best.x[1]), best.cost, best.converged)


# ---------------------------------------------------------------------------
# Model evaluation
# ---------------------------------------------------------------------------


def _check_p(p):
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise ValidationError("p must lie in [0, 1]")
    return arr


def model_fidelity(fit: FidelityFit, n_slots: int, p):
    """``1 + alpha ([1 - p (kappa-1)/kappa]^n_slots - 1)``; vectorised over ``p``."""
    arr = _check_p(p)
    out = 1.0 + fit.alpha * (_p_base(arr, fit.kappa, n_slots) - 1.0)
    return float(out) if out.ndim == 0 else out


def model_cost(fit: CostFit, n_slots: int, p):
    """``alpha + (C_ideal - alpha) [1 - p (chi-1)/chi]^n_slots``; vectorised over ``p``."""
    arr = _check_p(p)
    out = fit.alpha + (fit.c_ideal - fit.alpha) * _p_base(arr, fit.chi, n_slots)
    return float(out) if out.ndim == 0 else out


def delta_exponent(fit: FidelityFit) -> float:
    """Small-``p`` exponent ``delta = alpha (kappa-1)/kappa`` of ``F ~ (1-p)^(delta n)``."""
    if math.isinf(fit.kappa):
        return float(fit.alpha)
    return fit.alpha * (fit.kappa - 1.0) / fit.kappa


def eta_exponent(fit: CostFit) -> float:
    """Small-``p`` exponent of ``C ~ (1-p)^(eta n) C_ideal``."""
    c_ideal = fit.c_ideal
    if c_ideal == 0:
        raise UndefinedExponentError("eta is undefined when C_ideal = alpha + alpha_tilde = 0")
    return (c_ideal - fit.alpha) / c_ideal * (fit.chi - 1.0) / fit.chi


def haar_cost(diag) -> float:
    """Cost of the maximally mixed state, ``Tr[H_c] / 2^N``."""
    return float(np.mean(np.asarray(diag, dtype=float)))

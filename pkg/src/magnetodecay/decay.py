"""Decay-rate fitting, the Russell-type iteration check and verdict/fit comparison."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSeries, ValidationError

EXPONENTIAL, POLYNOMIAL_FIT, AMBIGUOUS = "Exponential", "Polynomial", "Ambiguous"
MIN_SAMPLES = 32
DEFAULT_MARGIN = 0.10


@dataclass(frozen=True)
class ModelFit:
    kind: str
    rate: float  # a for exp(-a t), p for (t+1)^(-p)
    C: float
    residual: float

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == EXPONENTIAL:
            return self.C * np.exp(-self.rate * t)
        return self.C * (t + 1.0) ** (-self.rate)

    def to_dict(self) -> dict:
        key = "a" if self.kind == EXPONENTIAL else "p"
        return {"model": self.kind, key: self.rate, "C": self.C, "residual": self.residual}


@dataclass(frozen=True)
class DecayFit:
    chosen: str
    exponential: ModelFit
    polynomial: ModelFit
    window: tuple
    margin: float  # 1 - (smaller residual) / (larger residual)
    n_samples: int

    @property
    def model(self) -> ModelFit:
        """The selected model; for an ambiguous fit the one with the smaller residual."""
        if self.chosen == EXPONENTIAL:
            return self.exponential
        if self.chosen == POLYNOMIAL_FIT:
            return self.polynomial
        return min((self.exponential, self.polynomial), key=lambda m: m.residual)

    @property
    def residual(self) -> float:
        return self.model.residual

    def to_dict(self) -> dict:
        return {
            "chosen": self.chosen,
            "fit_exponential": self.exponential.to_dict(),
            "fit_polynomial": self.polynomial.to_dict(),
            "window": list(self.window),
            "margin": self.margin,
            "n_samples": self.n_samples,
        }


def default_window(t_end: float, diam: float, c_T: float) -> tuple:
    """Skip the initial transient ``t < 2 diam / c_T``."""
    return (2.0 * diam / c_T, t_end)


def _series(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, tuple) and len(series) == 2:
        t, E = series
    else:
        t = [r.t for r in series]
        E = [r.E for r in series]
    return np.asarray(t, dtype=float), np.asarray(E, dtype=float)


def _lsq(x, y):
    X = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, resid


def fit_decay(series, window: Optional[Sequence[float]] = None, margin: float = DEFAULT_MARGIN) -> DecayFit:
    """Least-squares fits of ``log E`` against ``t`` and against ``log(t+1)``.

    ``series`` is a list of energy records or a ``(t, E)`` pair. Residuals are
    the RMS misfit of ``log E`` divided by its standard deviation on the window,
    so they are unchanged when ``E`` is scaled. A model is chosen only when its
    residual is at least ``margin`` (relative) below the other one.
    """
    t, E = _series(series)
    if window is not None:
        lo, hi = float(window[0]), float(window[1])
        keep = (t >= lo) & (t <= hi)
        t, E = t[keep], E[keep]
    if t.size < MIN_SAMPLES:
        raise ValidationError(f"decay fit needs at least {MIN_SAMPLES} samples in the window, got {t.size}")
    if np.any(E <= 0) or not np.all(np.isfinite(E)):
        raise DegenerateSeries("energy must be positive and finite on the fit window")
    y = np.log(E)
    spread = float(np.std(y))
    if spread <= 1e-13 * max(1.0, float(np.max(np.abs(y)))):
        raise DegenerateSeries("energy is constant on the fit window")
    fits = []
    for kind, x in ((EXPONENTIAL, t), (POLYNOMIAL_FIT, np.log(t + 1.0))):
        coef, resid = _lsq(x, y)
        fits.append(ModelFit(kind, float(-coef[1]), float(math.exp(coef[0])), float(np.sqrt(np.mean(resid**2)) / spread)))
    ex, po = fits
    if ex.rate <= 0 and po.rate <= 0:
        raise DegenerateSeries("energy does not decay on the fit window")
    lo_r, hi_r = sorted((ex.residual, po.residual))
    gap = 1.0 - lo_r / hi_r if hi_r > 0 else 0.0
    best = ex if ex.residual <= po.residual else po
    chosen = best.kind if gap >= margin and best.rate > 0 else AMBIGUOUS
    return DecayFit(chosen, ex, po, (float(t[0]), float(t[-1])), gap, int(t.size))


# ---------------------------------------------------------------------------
# Russell-type iteration lemma
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RussellCheck:
    holds: bool
    first_violation: Optional[int]
    conclusion_holds: Optional[bool]  # None when the hypothesis fails
    first_conclusion_violation: Optional[int]
    premise_gap: bool  # the first step already exceeds 2 M0, which the recurrence alone does not exclude

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def russell_step_check(beta: Sequence[float], M0: float, start: int = 0, rtol: float = 1e-12) -> RussellCheck:
    """Check ``beta_{n+1}^2 <= M0 (beta_n - beta_{n+1})`` termwise, then ``beta_n <= 2 M0 / n`` for ``n >= 1``.

    ``beta[i]`` is ``beta_{start + i}``. The hypothesis is tested with a
    relative slack ``rtol`` so sequences built to satisfy it with equality pass.
    The conclusion needs ``beta_1 <= 2 M0`` in addition to the recurrence;
    ``premise_gap`` reports when that extra condition fails.
    """
    if not M0 > 0:
        raise ValidationError("M0 must be positive")
    b = np.asarray(beta, dtype=float)
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ValidationError("beta must be a finite non-negative sequence")
    lhs = b[1:] ** 2
    rhs = M0 * (b[:-1] - b[1:])
    bad = np.flatnonzero(lhs > rhs + rtol * np.maximum(lhs, M0 * b[:-1]))
    first = int(bad[0]) + start if bad.size else None
    n = np.arange(start, start + b.size)
    pos = n >= 1
    gap = bool(np.any((n == 1) & (b > 2 * M0 * (1 + rtol))))
    if first is not None:
        return RussellCheck(False, first, None, None, gap)
    viol = np.flatnonzero(pos & (b > 2 * M0 / np.where(pos, n, 1) * (1 + rtol)))
    fc = int(n[viol[0]]) if viol.size else None
    return RussellCheck(True, None, fc is None, fc, gap)


def recurrence_sequence(beta0, M0, n_terms: int) -> np.ndarray:
    """Sequences meeting the recurrence with equality: ``beta_{n+1}`` is the positive root of ``x^2 + M0 x - M0 beta_n``.

    ``beta0`` and ``M0`` may be arrays (one sequence per entry); the result has
    shape ``(n_terms + 1, ...)``.
    """
    beta0 = np.asarray(beta0, dtype=float)
    M0 = np.broadcast_to(np.asarray(M0, dtype=float), beta0.shape)
    out = np.empty((n_terms + 1, *beta0.shape))
    out[0] = beta0
    for k in range(n_terms):
        b = out[k]
        out[k + 1] = 2.0 * M0 * b / (M0 + np.sqrt(M0 * M0 + 4.0 * M0 * b))
    return out


# ---------------------------------------------------------------------------
# Prediction vs measurement
# ---------------------------------------------------------------------------


@dataclass
class Comparison:
    expected: str
    chosen: str
    consistent: bool
    reasons: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def predicted_vs_measured(verdict, fit: DecayFit) -> Comparison:
    """One-sided consistency of a measured decay fit with the geometric verdict.

    Uniform expects an exponential fit. Polynomial with exponent ``K`` expects a
    polynomial fit whose exponent is at least ``1/K`` (the bound is an upper
    bound on ``E``, so faster measured decay is consistent).
    """
    kind = verdict.kind if hasattr(verdict, "kind") else verdict["kind"]
    K = verdict.K if hasattr(verdict, "K") else verdict.get("K")
    reasons = [
        f"exponential residual {fit.exponential.residual:.3g}",
        f"polynomial residual {fit.polynomial.residual:.3g}",
    ]
    if kind == "Uniform":
        ok = fit.chosen == EXPONENTIAL
        if not ok:
            reasons.append("uniform verdict but the exponential model was not selected")
        return Comparison(EXPONENTIAL, fit.chosen, ok, reasons)
    if kind == "Polynomial":
        p = fit.polynomial.rate
        ok = fit.chosen == POLYNOMIAL_FIT and p >= 1.0 / K
        reasons.append(f"polynomial exponent {p:.4g} against 1/K = {1.0 / K:.4g}")
        if fit.chosen != POLYNOMIAL_FIT:
            reasons.append("polynomial verdict but the polynomial model was not selected")
        return Comparison(POLYNOMIAL_FIT, fit.chosen, ok, reasons)
    reasons.append("unbounded B-resistant rays: no rate is predicted")
    return Comparison(POLYNOMIAL_FIT, fit.chosen, fit.chosen != EXPONENTIAL, reasons)


def decay_report(scenario_id: str, verdict, fit: Optional[DecayFit], comparison: Optional[Comparison]) -> dict:
    from .resistant import SCHEMA_VERSION

    vd = verdict.to_dict() if hasattr(verdict, "to_dict") else verdict
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario_id": scenario_id,
        "verdict": None if vd is None else {k: vd.get(k) for k in ("kind", "K", "L", "certified") if k in vd},
        "fit_exponential": None if fit is None else fit.exponential.to_dict(),
        "fit_polynomial": None if fit is None else fit.polynomial.to_dict(),
        "chosen": None if fit is None else fit.chosen,
        "consistent": None if comparison is None else comparison.consistent,
        "reasons": [] if comparison is None else comparison.reasons,
    }

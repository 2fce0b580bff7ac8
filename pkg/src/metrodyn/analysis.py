"""Headway metrics, convergence classification and Markov-form checks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from metrodyn.dynamics import DepartureTrace, MarkovForm, uncontrolled_matrix
from metrodyn.line import ConfigError, DerivedBounds, InitialMarking, LineConfig
from metrodyn.maxplus import cycle_mean


class DominantTerm(enum.Enum):
    TRAVEL_SUM = "TRAVEL_SUM"
    BOTTLENECK = "BOTTLENECK"
    FREEFLOW = "FREEFLOW"


class Classification(enum.Enum):
    CONVERGED = "CONVERGED"
    PERIODIC = "PERIODIC"
    DIVERGED = "DIVERGED"
    UNDECIDED = "UNDECIDED"


@dataclass
class HeadwayReport:
    h_analytic: float | None = None
    dominant_term: DominantTerm | None = None
    terms: tuple[float, float, float] | None = None
    profile: dict[int, float] = field(default_factory=dict)
    h_empirical: float | None = None
    last_headways: np.ndarray | None = None
    spread: float | None = None
    variance: float | None = None

    @property
    def frequency(self) -> float | None:
        h = self.h_empirical if self.h_empirical is not None else self.h_analytic
        return None if h is None else 1.0 / h

    def lines(self) -> list[str]:
        out = []
        if self.h_analytic is not None:
            out.append(f"h_analytic: {self.h_analytic:.6f} s ({self.dominant_term.value})")
        if self.h_empirical is not None:
            out.append(f"h_empirical: {self.h_empirical:.6f} s")
            out.append(f"frequency: {self.frequency * 3600:.6f} trains/h")
        if self.last_headways is not None:
            out.append("last_headways: " + " ".join(f"{v:.6f}" for v in self.last_headways))
            out.append(f"spread: {self.spread:.6f} s")
            out.append(f"variance: {self.variance:.6f} s^2")
        return out


def _headway_terms(bounds: DerivedBounds, m: int) -> tuple[float, float, float]:
    n = bounds.n
    t = bounds.travel_const
    return (
        float(t.sum() / m),
        float((t + bounds.s_min).max()),
        float(bounds.s_min.sum() / (n - m)),
    )


def analytic_headway(cfg: LineConfig, bounds: DerivedBounds, m: int) -> HeadwayReport:
    """Asymptotic headway of the uncontrolled dynamics as a function of the train count."""
    n = cfg.n
    if not 0 < m < n:
        raise ConfigError(f"train count m={m} outside 1..{n - 1}")
    terms = _headway_terms(bounds, m)
    h = max(terms)
    tie = 1e-12 * max(1.0, abs(h))
    dominant = next(kind for kind, v in zip(DominantTerm, terms) if v >= h - tie)
    profile = {mm: max(_headway_terms(bounds, mm)) for mm in range(1, n)}
    return HeadwayReport(h_analytic=h, dominant_term=dominant, terms=terms, profile=profile)


def analytic_vs_maxplus_oracle(cfg: LineConfig, bounds: DerivedBounds, marking: InitialMarking) -> float:
    """``|cycle mean of the uncontrolled one-step matrix - analytic headway|``."""
    A = uncontrolled_matrix(cfg, marking, bounds)
    return abs(cycle_mean(A) - analytic_headway(cfg, bounds, marking.m).h_analytic)


def empirical_headway(trace: DepartureTrace, burn_in: int | None = None) -> HeadwayReport:
    K = trace.K
    burn_in = K // 2 if burn_in is None else burn_in
    if not 0 <= burn_in < K:
        raise ValueError("need 0 <= burn_in < K")
    d = trace.d
    rate = (d[K] - d[burn_in]) / (K - burn_in)
    last = d[K] - d[K - 1]
    return HeadwayReport(
        h_empirical=float(rate.mean()),
        last_headways=last,
        spread=float(last.max() - last.min()),
        variance=float(last.var()),
    )


@dataclass
class ConvergenceReport:
    classification: Classification
    residuals: np.ndarray
    period: int | None = None

    def __str__(self) -> str:
        if self.classification is Classification.PERIODIC:
            return f"PERIODIC({self.period})"
        return self.classification.value


def classify_convergence(
    trace: DepartureTrace,
    tol: float = 1e-6,
    window: int = 20,
    p_max: int | None = None,
) -> ConvergenceReport:
    """Classify the headway sequence as converged, periodic, diverging or undecided.

    ``residuals[i]`` is ``max_j |h[k] - h[k-1]|`` for ``k = i + 2``.
    """
    p_max = 4 * trace.n if p_max is None else p_max
    h = trace.d[1:] - trace.d[:-1]
    K = h.shape[0]
    if K < 2:
        return ConvergenceReport(Classification.UNDECIDED, np.zeros(0))
    with np.errstate(invalid="ignore"):
        residuals = np.abs(np.diff(h, axis=0)).max(axis=1)
    if not np.all(np.isfinite(h)):
        return ConvergenceReport(Classification.DIVERGED, residuals)
    if K < 2 * window:
        return ConvergenceReport(Classification.UNDECIDED, residuals)

    if np.all(residuals[-window:] < tol):
        return ConvergenceReport(Classification.CONVERGED, residuals)
    for p in range(2, p_max + 1):
        if K - window - p < 0:
            break
        tail = h[K - window :]
        lagged = h[K - window - p : K - p]
        if np.max(np.abs(tail - lagged)) < tol:
            return ConvergenceReport(Classification.PERIODIC, residuals, period=p)

    peak = h.max(axis=1)
    if peak.max() > 10.0 * peak[0] and K >= 3 * window:
        blocks = [peak[K - (i + 1) * window : K - i * window].max() for i in range(3)][::-1]
        if blocks[0] < blocks[1] < blocks[2]:
            return ConvergenceReport(Classification.DIVERGED, residuals)
    return ConvergenceReport(Classification.UNDECIDED, residuals)


@dataclass
class StochasticityReport:
    residual: float
    min_coefficient: float
    tol: float = 1e-12

    @property
    def ok(self) -> bool:
        return self.residual <= self.tol and self.min_coefficient >= 0.0


def stochasticity_check(mf: MarkovForm, tol: float = 1e-12) -> StochasticityReport:
    """Worst row-sum deviation from 1 and smallest coefficient over raw and triangularized rows."""
    residual = 0.0
    lowest = np.inf
    for rows in (mf.raw, mf.tri):
        for alts in rows:
            for alt in alts:
                residual = max(residual, abs(alt.total - 1.0))
                if alt.coefs:
                    lowest = min(lowest, min(alt.coefs.values()))
    return StochasticityReport(residual, float(lowest), tol)


def unit_rows(mf: MarkovForm) -> bool:
    """True when every triangularized alternative has a single coefficient equal to 1."""
    return all(
        len(a.coefs) == 1 and next(iter(a.coefs.values())) == 1.0 for alts in mf.tri for a in alts
    )

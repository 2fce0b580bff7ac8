"""
Static description of a discretized metro loop line.

Segments are indexed ``0..n-1`` in the direction of travel and the line is a
loop, so every neighbour lookup is taken modulo ``n``. Times are seconds and
passenger rates are passengers per second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

IDENTITY_TOL = 1e-9


class ConfigError(ValueError):
    """A line configuration violates a structural invariant."""


class InfeasibleDemandError(ConfigError):
    """Passenger demand saturates a platform (x_j >= 1)."""

    def __init__(self, segment: int, x: float):
        super().__init__(f"segment {segment}: demand parameter x={x:.6g} is not below 1")
        self.segment = segment
        self.x = x


@dataclass(frozen=True)
class SegmentSpec:
    """One segment of the line and the node (possibly a platform) at its downstream end."""

    index: int
    is_platform: bool
    r_min: float
    r_nom: float
    w_min: float
    g_min: float
    s_min: float
    lambda_in: float = 0.0
    lambda_out: float = 0.0
    alpha_in: float = 1.0
    alpha_out: float = 1.0

    def check(self) -> None:
        for name in ("r_min", "r_nom", "w_min", "g_min", "s_min"):
            if getattr(self, name) < 0:
                raise ConfigError(f"segment {self.index}: {name} must be >= 0")
        if self.r_nom < self.r_min:
            raise ConfigError(f"segment {self.index}: r_nom < r_min")
        for name in ("lambda_in", "lambda_out"):
            if getattr(self, name) < 0:
                raise ConfigError(f"segment {self.index}: {name} must be >= 0")
        if not self.is_platform and (self.lambda_in or self.lambda_out):
            raise ConfigError(f"segment {self.index}: passenger demand on a non-platform segment")
        if self.is_platform and (self.alpha_in <= 0 or self.alpha_out <= 0):
            raise ConfigError(f"segment {self.index}: alpha rates must be positive on a platform")
        if self.is_platform and (self.lambda_in >= self.alpha_in or self.lambda_out >= self.alpha_out):
            raise ConfigError(f"segment {self.index}: arrival rate must stay below the exchange rate")

    @property
    def demand(self) -> float:
        """x_j: fraction of the headway spent alighting and boarding."""
        if not self.is_platform:
            return 0.0
        return self.lambda_out / self.alpha_out + self.lambda_in / self.alpha_in


@dataclass(frozen=True)
class LineConfig:
    segments: tuple[SegmentSpec, ...]
    kappa: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.n < 2:
            raise ConfigError("a line needs at least two segments")
        if self.kappa <= 0:
            raise ConfigError("train capacity kappa must be positive")
        if not any(s.is_platform for s in self.segments):
            raise ConfigError("a line needs at least one platform")
        for j, seg in enumerate(self.segments):
            if seg.index != j:
                raise ConfigError(f"segment at position {j} carries index {seg.index}")
            seg.check()

    @property
    def n(self) -> int:
        return len(self.segments)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.segments], dtype=float)

    @property
    def platforms(self) -> np.ndarray:
        return np.array([s.is_platform for s in self.segments], dtype=bool)


@dataclass(frozen=True)
class InitialMarking:
    """Initial occupancy ``b`` (one train at most per segment) and departures ``d0``."""

    b: tuple[int, ...]
    d0: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "b", tuple(int(v) for v in self.b))
        object.__setattr__(self, "d0", tuple(float(v) for v in self.d0))
        if len(self.b) != len(self.d0):
            raise ConfigError("b and d0 must have the same length")
        if any(v not in (0, 1) for v in self.b):
            raise ConfigError("b entries must be 0 or 1")

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def m(self) -> int:
        return sum(self.b)

    @property
    def b_bar(self) -> tuple[int, ...]:
        return tuple(1 - v for v in self.b)

    def with_d0(self, d0: Sequence[float]) -> "InitialMarking":
        return InitialMarking(self.b, tuple(d0))


def spread_trains(n: int, m: int) -> tuple[int, ...]:
    """Place ``m`` trains as evenly as possible, lowest indices first."""
    if not 0 <= m <= n:
        raise ConfigError(f"cannot place {m} trains on {n} segments")
    b = [0] * n
    for i in range(m):
        b[(i * n) // m] = 1
    return tuple(b)


@dataclass(frozen=True)
class DerivedBounds:
    """Per-segment quantities derived from a :class:`LineConfig`; all arrays have length n."""

    x: np.ndarray
    X: np.ndarray
    h_max: np.ndarray
    w_max: np.ndarray
    g_max: np.ndarray
    h_min: np.ndarray
    t_min: np.ndarray
    s_min: np.ndarray
    r_min: np.ndarray
    r_nom: np.ndarray
    w_min: np.ndarray
    g_min: np.ndarray
    delta_r: np.ndarray
    delta_w: np.ndarray
    delta_g: np.ndarray

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def travel_const(self) -> np.ndarray:
        """``r_nom + X g_min``: the demand-adjusted travel time of the uncontrolled model."""
        return self.r_nom + self.X * self.g_min


def derive_bounds(cfg: LineConfig) -> DerivedBounds:
    x = np.array([s.demand for s in cfg.segments])
    for j, xj in enumerate(x):
        if xj >= 1.0:
            raise InfeasibleDemandError(j, float(xj))
    X = x / (1.0 - x)
    total_in = float(cfg.column("lambda_in").sum())
    h_max = np.full(cfg.n, np.inf if total_in == 0 else cfg.kappa / total_in)
    w_min = cfg.column("w_min")
    g_min = cfg.column("g_min")
    r_min = cfg.column("r_min")
    r_nom = cfg.column("r_nom")
    # x == 0 gives w_max == 0 even when h_max is unbounded
    with np.errstate(invalid="ignore"):
        w_max = np.where(x > 0, x * h_max, 0.0)
    g_max = h_max - w_min
    return DerivedBounds(
        x=x,
        X=X,
        h_max=h_max,
        w_max=w_max,
        g_max=g_max,
        h_min=g_min + w_min,
        t_min=r_min + w_min,
        s_min=cfg.column("s_min"),
        r_min=r_min,
        r_nom=r_nom,
        w_min=w_min,
        g_min=g_min,
        delta_r=r_nom - r_min,
        delta_w=w_max - w_min,
        delta_g=g_max - g_min,
    )


@dataclass
class Check:
    name: str
    passed: bool
    violations: list[int] = field(default_factory=list)
    detail: str = ""


@dataclass
class ConditionReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name or c.name.split()[0] == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            extra = f" segments={c.violations}" if c.violations else ""
            out.append(f"{c.name}: {status}{extra} {c.detail}".rstrip())
        return out


def initial_headways(bounds: DerivedBounds, marking: InitialMarking) -> np.ndarray:
    """First headways ``h^1 = d^1 - d^0`` from one uncontrolled step started at ``d0``."""
    # local import: dynamics depends on this module
    from metrodyn.dynamics import uncontrolled_step

    d0 = np.asarray(marking.d0, dtype=float)
    return uncontrolled_step(bounds, marking, d0) - d0


def validate_conditions(
    cfg: LineConfig,
    bounds: DerivedBounds,
    marking: InitialMarking,
    gamma_max: Sequence[float] | float = 0.0,
) -> ConditionReport:
    """Evaluate the initial-headway (C1), run-margin (C2) and train-count (C3) conditions."""
    n = cfg.n
    if bounds.n != n or marking.n != n:
        raise ConfigError("config, bounds and marking disagree on n")
    gmax = np.broadcast_to(np.asarray(gamma_max, dtype=float), (n,))
    if np.any(gmax < 0) or np.any(gmax > 1):
        raise ConfigError("gamma values must lie in [0, 1]")
    tol = IDENTITY_TOL
    checks = []

    m = marking.m
    c3 = Check("C3 train count 0 < m < n", 0 < m < n, detail=f"(m={m}, n={n})")
    if c3.passed:
        h1 = initial_headways(bounds, marking)
        bad_a = [j for j in range(n) if h1[j] > bounds.h_max[j] + tol]
        with np.errstate(divide="ignore"):
            h1_cap = bounds.g_max / (1.0 - bounds.x)
        bad_b = [j for j in range(n) if h1[j] > h1_cap[j] + tol]
        checks.append(Check("C1a initial headway h1 <= h_max", not bad_a, bad_a))
        checks.append(Check("C1b initial headway h1 <= g_max/(1-x)", not bad_b, bad_b))
    else:
        skip = "(not evaluated: no movement possible)"
        checks.append(Check("C1a initial headway h1 <= h_max", False, detail=skip))
        checks.append(Check("C1b initial headway h1 <= g_max/(1-x)", False, detail=skip))

    need = np.maximum(bounds.delta_w, bounds.X * bounds.delta_g)
    platforms = cfg.platforms
    bad = [j for j in range(n) if platforms[j] and bounds.delta_r[j] < need[j] - tol]
    checks.append(Check("C2 run margin dr >= max(dw, X dg)", not bad, bad))
    checks.append(c3)
    return ConditionReport(checks)


@dataclass
class IdentityReport:
    residuals: dict[str, float]
    tol: float = IDENTITY_TOL

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.residuals.values())


def step_identities(record, prev_departure=None, tol: float = IDENTITY_TOL) -> IdentityReport:
    """Check the per-step relations between d, a, w, r, g, h, s and t.

    ``record`` is anything with array-like (or scalar) attributes ``d, a, w, r,
    g, h, s, t``; ``d_prev`` is read from the record when present, else from
    ``prev_departure``. Missing quantities skip the identities that need them.
    """
    get = lambda name: None if getattr(record, name, None) is None else np.asarray(getattr(record, name), dtype=float)
    d, a, w, r, g, h, s, t = (get(k) for k in ("d", "a", "w", "r", "g", "h", "s", "t"))
    d_prev = get("d_prev")
    if d_prev is None and prev_departure is not None:
        d_prev = np.asarray(prev_departure, dtype=float)

    def worst(expr) -> float:
        return float(np.max(np.abs(expr))) if np.size(expr) else 0.0

    res: dict[str, float] = {}
    if d is not None and a is not None and w is not None:
        res["w = d - a"] = worst(w - (d - a))
    if d is not None and d_prev is not None and h is not None:
        res["h = d - d_prev"] = worst(h - (d - d_prev))
    if a is not None and d_prev is not None and g is not None:
        res["g = a - d_prev"] = worst(g - (a - d_prev))
    if h is not None and g is not None and w is not None:
        res["h = g + w"] = worst(h - (g + w))
    if t is not None and r is not None and w is not None:
        res["t = r + w"] = worst(t - (r + w))
    if h is not None and t is not None and s is not None:
        res["h = t + s"] = worst(h - (t + s))
    return IdentityReport(res, tol)

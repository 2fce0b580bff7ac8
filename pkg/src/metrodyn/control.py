"""
Dwell-time and run-time control laws.

Four dwell laws are supported:

* ``MAXPLUS_DEMAND``: ``w = min(x h, w_max)``, with the run-time compensation law.
* ``VARIANCE_MIN``: ``w = min((1 - gamma) x h, w_max)``, with the run-time compensation law.
* ``NAIVE_DEMAND``: ``w = max(w_min, x g)``, constant (nominal) run times.
* ``BOUNDED_RESPONSE``: ``w = max(w_min, w_max - delta0 g)``, constant (nominal) run times.

The first two depend on the headway ``h`` and need a fixed-point solve in the
explicit engine; the last two depend on the close-in time ``g`` only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from metrodyn.line import ConfigError, DerivedBounds


class PolicyKind(enum.Enum):
    MAXPLUS_DEMAND = "maxplus_demand"
    VARIANCE_MIN = "variance_min"
    NAIVE_DEMAND = "naive_demand"
    BOUNDED_RESPONSE = "bounded_response"

    @property
    def headway_driven(self) -> bool:
        """True for laws written in terms of the headway (run-time control active)."""
        return self in (PolicyKind.MAXPLUS_DEMAND, PolicyKind.VARIANCE_MIN)

    @property
    def uses_gamma(self) -> bool:
        return self is PolicyKind.VARIANCE_MIN


@dataclass(frozen=True)
class PolicyParams:
    """Extra per-segment parameters; only ``BOUNDED_RESPONSE`` needs ``delta0``."""

    delta0: tuple[float, ...] | None = None

    def check(self, kind: PolicyKind, n: int) -> None:
        if kind is not PolicyKind.BOUNDED_RESPONSE:
            return
        if self.delta0 is None:
            raise ConfigError("BOUNDED_RESPONSE needs delta0")
        if len(self.delta0) != n:
            raise ConfigError(f"delta0 has {len(self.delta0)} entries, expected {n}")
        if any(not 0.0 <= v <= 1.0 for v in self.delta0):
            raise ConfigError("delta0 entries must lie in [0, 1]")


class GammaMode(enum.Enum):
    STATIC = "static"
    LINEAR_FADE = "fade"
    TABLE = "table"


@dataclass(frozen=True)
class GammaSchedule:
    """Time profile of the dwell-shortening gain.

    ``values`` is a scalar or per-segment array for STATIC and LINEAR_FADE, and
    a ``(rows, n)`` table for TABLE (rows past the end repeat the last row).
    Non-platform segments always get gamma = 0.
    """

    mode: GammaMode
    values: np.ndarray
    horizon: int | None = None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        if np.any(arr < 0) or np.any(arr > 1):
            raise ConfigError("gamma values must lie in [0, 1]")
        if self.mode is GammaMode.LINEAR_FADE and (self.horizon is None or self.horizon <= 0):
            raise ConfigError("a linear fade needs a positive horizon K")
        if self.mode is GammaMode.TABLE and arr.ndim != 2:
            raise ConfigError("a gamma table must be two-dimensional (k, j)")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def static(cls, gamma: float | Sequence[float]) -> "GammaSchedule":
        return cls(GammaMode.STATIC, np.asarray(gamma, dtype=float))

    @classmethod
    def zero(cls) -> "GammaSchedule":
        return cls.static(0.0)

    @classmethod
    def linear_fade(cls, gamma0: float | Sequence[float], horizon: int) -> "GammaSchedule":
        return cls(GammaMode.LINEAR_FADE, np.asarray(gamma0, dtype=float), int(horizon))

    @classmethod
    def table(cls, rows: Sequence[Sequence[float]]) -> "GammaSchedule":
        return cls(GammaMode.TABLE, np.asarray(rows, dtype=float))

    @property
    def label(self) -> str:
        def fmt(v: np.ndarray) -> str:
            flat = np.unique(v)
            return f"{flat[0]:g}" if flat.size == 1 else "[" + ",".join(f"{x:g}" for x in v) + "]"

        if self.mode is GammaMode.STATIC:
            return fmt(self.values)
        if self.mode is GammaMode.LINEAR_FADE:
            return f"fade:{fmt(self.values)}"
        return "table"

    def at(self, k: int, platforms: np.ndarray) -> np.ndarray:
        """Gamma per segment for departure count ``k``."""
        n = len(platforms)
        if self.mode is GammaMode.STATIC:
            g = np.broadcast_to(self.values, (n,)).astype(float)
        elif self.mode is GammaMode.LINEAR_FADE:
            g0 = np.broadcast_to(self.values, (n,)).astype(float)
            g = np.maximum(g0 - (g0 / self.horizon) * k, 0.0)
        else:
            row = self.values[min(k, self.values.shape[0] - 1)]
            g = np.broadcast_to(row, (n,)).astype(float)
        return np.where(platforms, g, 0.0)

    def maximum(self, platforms: np.ndarray) -> np.ndarray:
        """Largest gamma any step can use, per segment."""
        if self.mode is GammaMode.TABLE:
            g = self.values.max(axis=0)
        else:
            g = self.values
        return np.where(platforms, np.broadcast_to(g, (len(platforms),)), 0.0)


def delta_coeff(gamma, x):
    """Weight of a segment's own previous departure in the controlled recursion."""
    gx = np.asarray(gamma) * np.asarray(x)
    out = gx / (1.0 + gx)
    return float(out) if np.ndim(out) == 0 else out


def x_gamma(gamma, x):
    """Slope of the unsaturated controlled dwell as a function of the close-in time."""
    y = (1.0 - np.asarray(gamma)) * np.asarray(x)
    out = y / (1.0 - y)
    return float(out) if np.ndim(out) == 0 else out


def run_time(j: int, h_k: float, bounds: DerivedBounds) -> float:
    """Run-time compensation: shorten the run when the headway (hence the dwell) grows."""
    return max(
        float(bounds.r_min[j]),
        float(bounds.r_nom[j] - bounds.x[j] * (h_k - bounds.h_min[j])),
    )


def dwell_time(
    kind: PolicyKind,
    j: int,
    h_k: float | None,
    g_k: float | None,
    gamma_k: float,
    bounds: DerivedBounds,
    params: PolicyParams | None = None,
) -> float:
    x = float(bounds.x[j])
    if kind is PolicyKind.MAXPLUS_DEMAND:
        return min(x * h_k, float(bounds.w_max[j]))
    if kind is PolicyKind.VARIANCE_MIN:
        return min((1.0 - gamma_k) * x * h_k, float(bounds.w_max[j]))
    if kind is PolicyKind.NAIVE_DEMAND:
        return max(float(bounds.w_min[j]), x * g_k)
    if kind is PolicyKind.BOUNDED_RESPONSE:
        if params is None or params.delta0 is None:
            raise ConfigError("BOUNDED_RESPONSE needs delta0")
        return max(float(bounds.w_min[j]), float(bounds.w_max[j]) - params.delta0[j] * g_k)
    raise ConfigError(f"unknown policy {kind!r}")


def effective_travel(j: int, g_k: float, gamma_k: float, bounds: DerivedBounds) -> float:
    """Controlled travel time ``r_nom + X g_min - gamma X g`` in close-in-time form."""
    X = float(bounds.X[j])
    return float(bounds.r_nom[j]) + X * float(bounds.g_min[j]) - gamma_k * X * g_k


@dataclass
class EffectiveCoefficients:
    """Per-segment coefficients of the controlled recursion at one departure count."""

    gamma: np.ndarray
    delta: np.ndarray
    t_eff: np.ndarray
    X_gamma: np.ndarray = field(repr=False)

    @classmethod
    def from_gamma(cls, gamma: np.ndarray, bounds: DerivedBounds) -> "EffectiveCoefficients":
        gamma = np.asarray(gamma, dtype=float)
        return cls(
            gamma=gamma,
            delta=np.asarray(delta_coeff(gamma, bounds.x), dtype=float).reshape(-1),
            t_eff=bounds.travel_const,
            X_gamma=np.asarray(x_gamma(gamma, bounds.x), dtype=float).reshape(-1),
        )


def parse_gamma_token(token: str, horizon: int) -> GammaSchedule:
    """``"0.1"`` is a static gain, ``"fade:0.5"`` a linear fade over ``horizon`` steps."""
    token = token.strip()
    try:
        if token.startswith("fade:"):
            body = token[len("fade:"):]
            if "/" in body:
                g0, k = body.split("/", 1)
                return GammaSchedule.linear_fade(float(g0), int(k))
            return GammaSchedule.linear_fade(float(body), horizon)
        return GammaSchedule.static(float(token))
    except ValueError as exc:
        raise ConfigError(f"bad gamma token {token!r}: {exc}") from None

"""
Train dynamics over departure counts ``k = 1..K``.

Two engines advance the departure matrix ``d[k, j]``:

* the explicit engine applies the dwell and run laws literally, solving the
  headway fixed point of the headway-driven laws in closed form;
* the recursive engine iterates the averaged recursion

      d[k, j] = max((1 - delta_j) d[k - b_j, j-1] + delta_j d[k-1, j] + (1 - delta_j) T_j,
                    d[k - (1 - b_{j+1}), j+1] + s_min_{j+1})

  with ``T_j = r_nom_j + X_j g_min_j``. At gamma = 0 this is max-plus linear.

Lag-0 references make the system implicit; for ``0 < m < n`` an update order
exists that makes every step explicit (see :func:`build_update_order`).
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from metrodyn.control import (
    EffectiveCoefficients,
    GammaSchedule,
    PolicyKind,
    PolicyParams,
    delta_coeff,
)
from metrodyn.line import ConfigError, DerivedBounds, InitialMarking, LineConfig, derive_bounds
from metrodyn.maxplus import BOTTOM, TropicalMatrix, cycle_mean

TRAVEL = 0
SAFETY = 1
ACTIVE_NAMES = {TRAVEL: "TRAVEL", SAFETY: "SAFETY"}

# saturation flags (bitmask)
RUN_MIN = 1
DWELL_MAX = 2
DWELL_MIN = 4
UNSTABLE = 8
FLAG_NAMES = ((RUN_MIN, "run_min"), (DWELL_MAX, "dwell_max"), (DWELL_MIN, "dwell_min"), (UNSTABLE, "unstable"))

PIECE_TOL = 1e-12


class DegenerateMarkingError(ConfigError):
    """m = 0 or m = n: every constraint is implicit and no train can move."""


def flag_names(flags: int) -> list[str]:
    return [name for bit, name in FLAG_NAMES if flags & bit]


# ---------------------------------------------------------------------------
# update order


def implicit_arcs(marking: InitialMarking) -> list[tuple[int, int]]:
    """Same-count dependencies ``(src, dst)``: ``d[k, dst]`` needs ``d[k, src]``."""
    n = marking.n
    b = marking.b
    arcs = []
    for j in range(n):
        if b[j] == 0:
            arcs.append(((j - 1) % n, j))
        if b[(j + 1) % n] == 1:
            arcs.append(((j + 1) % n, j))
    return arcs


def build_update_order(marking: InitialMarking) -> tuple[int, ...]:
    """Topological order of the same-count dependencies, lowest index first among ties."""
    n, m = marking.n, marking.m
    if m == 0 or m == n:
        raise DegenerateMarkingError(f"fully implicit system (m={m}, n={n}): no train movement is possible")
    preds: list[set[int]] = [set() for _ in range(n)]
    succs: list[set[int]] = [set() for _ in range(n)]
    for src, dst in implicit_arcs(marking):
        preds[dst].add(src)
        succs[src].add(dst)
    indeg = [len(p) for p in preds]
    ready = [j for j in range(n) if indeg[j] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        j = heapq.heappop(ready)
        order.append(j)
        for nxt in sorted(succs[j]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != n:
        raise DegenerateMarkingError("implicit dependencies contain a cycle")
    return tuple(order)


def _check_order(order: Sequence[int], marking: InitialMarking) -> None:
    pos = {j: i for i, j in enumerate(order)}
    if sorted(pos) != list(range(marking.n)):
        raise RuntimeError(f"update order {order} is not a permutation of 0..{marking.n - 1}")
    for src, dst in implicit_arcs(marking):
        if pos[src] >= pos[dst]:
            raise RuntimeError(f"update order {order} places {dst} before its dependency {src}")


# ---------------------------------------------------------------------------
# traces


@dataclass
class StepRecord:
    k: int
    j: int
    d: float
    d_prev: float
    a: float
    w: float
    r: float
    g: float
    h: float
    s: float
    t: float
    active: str
    saturated: list[str]


@dataclass
class DepartureTrace:
    """Departures ``d[k, j]`` for ``k = 0..K`` plus per-step quantities (row 0 is NaN)."""

    d: np.ndarray
    order: tuple[int, ...]
    gamma: np.ndarray
    active: np.ndarray
    a: np.ndarray | None = None
    w: np.ndarray | None = None
    r: np.ndarray | None = None
    g: np.ndarray | None = None
    s: np.ndarray | None = None
    t: np.ndarray | None = None
    flags: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, d0: Sequence[float], K: int, order: tuple[int, ...], with_records: bool) -> "DepartureTrace":
        n = len(d0)
        d = np.full((K + 1, n), np.nan)
        d[0] = d0
        rec = (lambda: np.full((K + 1, n), np.nan)) if with_records else (lambda: None)
        return cls(
            d=d,
            order=order,
            gamma=np.zeros((K + 1, n)),
            active=np.full((K + 1, n), -1, dtype=np.int8),
            a=rec(),
            w=rec(),
            r=rec(),
            g=rec(),
            s=rec(),
            t=rec(),
            flags=np.zeros((K + 1, n), dtype=np.int16) if with_records else None,
        )

    @property
    def K(self) -> int:
        return self.d.shape[0] - 1

    @property
    def n(self) -> int:
        return self.d.shape[1]

    @property
    def h(self) -> np.ndarray:
        """Headways with the same (k, j) indexing as ``d``; row 0 is NaN."""
        out = np.full_like(self.d, np.nan)
        out[1:] = np.diff(self.d, axis=0)
        return out

    @property
    def has_records(self) -> bool:
        return self.a is not None

    def record(self, k: int, j: int) -> StepRecord:
        if not self.has_records:
            raise ValueError("this trace carries departures only")
        if not 1 <= k <= self.K:
            raise IndexError(k)
        return StepRecord(
            k=k,
            j=j,
            d=float(self.d[k, j]),
            d_prev=float(self.d[k - 1, j]),
            a=float(self.a[k, j]),
            w=float(self.w[k, j]),
            r=float(self.r[k, j]),
            g=float(self.g[k, j]),
            h=float(self.d[k, j] - self.d[k - 1, j]),
            s=float(self.s[k, j]),
            t=float(self.t[k, j]),
            active=ACTIVE_NAMES[int(self.active[k, j])],
            saturated=flag_names(int(self.flags[k, j])),
        )

    def records(self):
        for k in range(1, self.K + 1):
            for j in self.order:
                yield self.record(k, j)

    def identity_view(self):
        """Arrays for rows ``1..K`` shaped for :func:`metrodyn.line.step_identities`."""
        return _IdentityView(self)


class _IdentityView:
    def __init__(self, tr: DepartureTrace):
        sl = slice(1, None)
        self.d = tr.d[sl]
        self.d_prev = tr.d[:-1]
        self.h = tr.h[sl]
        for name in ("a", "w", "r", "g", "s", "t"):
            arr = getattr(tr, name)
            setattr(self, name, None if arr is None else arr[sl])


def config_hash(cfg: LineConfig, marking: InitialMarking) -> str:
    payload = json.dumps(
        {
            "kappa": cfg.kappa,
            "segments": [vars(s) for s in cfg.segments],
            "b": marking.b,
            "d0": marking.d0,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# recursive engine


def step_recursive(
    d: np.ndarray,
    k: int,
    order: Sequence[int],
    coeffs: EffectiveCoefficients,
    marking: InitialMarking,
    s_min: np.ndarray,
    active: np.ndarray | None = None,
) -> None:
    """Fill row ``k`` of ``d`` in place with the averaged recursion."""
    n = marking.n
    b = marking.b
    delta = coeffs.delta
    t_eff = coeffs.t_eff
    row = d[k]
    prev = d[k - 1]
    for j in order:
        up = (j - 1) % n
        dn = (j + 1) % n
        dj = delta[j]
        travel = (1.0 - dj) * d[k - b[j], up] + dj * prev[j] + (1.0 - dj) * t_eff[j]
        safety = d[k - (1 - b[dn]), dn] + s_min[dn]
        if travel >= safety:
            row[j] = travel
            if active is not None:
                active[k, j] = TRAVEL
        else:
            row[j] = safety
            if active is not None:
                active[k, j] = SAFETY


def uncontrolled_step(bounds: DerivedBounds, marking: InitialMarking, d_prev: np.ndarray) -> np.ndarray:
    """One gamma = 0 step of the recursion from ``d_prev``."""
    order = build_update_order(marking)
    d = np.vstack([d_prev, np.full(marking.n, np.nan)])
    coeffs = EffectiveCoefficients.from_gamma(np.zeros(marking.n), bounds)
    step_recursive(d, 1, order, coeffs, marking, bounds.s_min)
    return d[1]


def simulate_recursive(
    cfg: LineConfig,
    marking: InitialMarking,
    schedule: GammaSchedule | None,
    K: int,
    bounds: DerivedBounds | None = None,
) -> DepartureTrace:
    """Iterate the averaged recursion (departures and active constraints only)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    bounds = derive_bounds(cfg) if bounds is None else bounds
    schedule = GammaSchedule.zero() if schedule is None else schedule
    order = build_update_order(marking)
    tr = DepartureTrace.empty(marking.d0, K, order, with_records=False)
    platforms = cfg.platforms
    cached = None
    for k in range(1, K + 1):
        gamma = schedule.at(k, platforms)
        tr.gamma[k] = gamma
        if cached is None or not np.array_equal(cached.gamma, gamma):
            cached = EffectiveCoefficients.from_gamma(gamma, bounds)
        step_recursive(tr.d, k, order, cached, marking, bounds.s_min, tr.active)
    tr.meta = {"engine": "recursive", "config": config_hash(cfg, marking), "schedule": schedule.label}
    return tr


# ---------------------------------------------------------------------------
# explicit engine


def _headway_pieces(j: int, gamma: float, bounds: DerivedBounds, kind: PolicyKind):
    """Breakpoints and piece formulas of ``F(h) = run(h) + dwell(h)``.

    Returns ``(breaks, piece)`` where ``piece(h)`` gives ``(alpha, beta, flags)``
    such that ``F = alpha + beta h`` on the piece containing ``h``.
    """
    x = float(bounds.x[j])
    keep = (1.0 - gamma) * x if kind is PolicyKind.VARIANCE_MIN else x
    r_nom, r_min, h_min = float(bounds.r_nom[j]), float(bounds.r_min[j]), float(bounds.h_min[j])
    w_max = float(bounds.w_max[j])
    breaks = []
    if x > 0:
        breaks.append(h_min + (r_nom - r_min) / x)
    if keep > 0 and np.isfinite(w_max):
        breaks.append(w_max / keep)
    breaks.sort()

    def piece(h: float):
        alpha = beta = 0.0
        flags = 0
        r_free = r_nom - x * (h - h_min)
        if r_free > r_min:
            alpha += r_nom + x * h_min
            beta -= x
        else:
            alpha += r_min
            flags |= RUN_MIN
        if keep * h < w_max:
            beta += keep
        else:
            alpha += w_max
            flags |= DWELL_MAX
        return alpha, beta, flags

    return breaks, piece


def solve_headway(c: float, breaks: list[float], piece) -> tuple[float, int]:
    """Solve ``h = c + F(h)`` for piecewise-linear ``F`` with slope magnitude below 1."""
    edges = [-np.inf] + breaks + [np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isfinite(lo) and np.isfinite(hi):
            probe = 0.5 * (lo + hi)
        elif np.isfinite(hi):
            probe = hi - 1.0
        elif np.isfinite(lo):
            probe = lo + 1.0
        else:
            probe = 0.0
        alpha, beta, flags = piece(probe)
        if beta >= 1.0:
            continue
        h = (c + alpha) / (1.0 - beta)
        scale = PIECE_TOL * max(1.0, abs(h))
        if lo - scale <= h <= hi + scale:
            return h, flags
    # no piece holds a root: extrapolate the unsaturated branch
    alpha, beta, flags = piece(breaks[0] - 1.0 if breaks else 0.0)
    h = (c + alpha) / (1.0 - beta) if beta < 1.0 else np.inf
    return h, flags | UNSTABLE


def step_explicit(
    tr: DepartureTrace,
    k: int,
    order: Sequence[int],
    kind: PolicyKind,
    gamma: np.ndarray,
    bounds: DerivedBounds,
    marking: InitialMarking,
    params: PolicyParams | None = None,
) -> None:
    """Fill row ``k`` of the trace with the control laws applied literally.

    The arrival follows the run law; when the safety constraint is the later
    one, the train is held at the platform and the dwell absorbs the wait.
    """
    n = marking.n
    b = marking.b
    d = tr.d
    for j in order:
        up = (j - 1) % n
        dn = (j + 1) % n
        upstream = d[k - b[j], up]
        prev = d[k - 1, j]
        flags = 0
        if kind.headway_driven:
            breaks, piece = _headway_pieces(j, float(gamma[j]), bounds, kind)
            h_travel, flags = solve_headway(upstream - prev, breaks, piece)
            r = max(float(bounds.r_min[j]), float(bounds.r_nom[j] - bounds.x[j] * (h_travel - bounds.h_min[j])))
            travel = prev + h_travel
        else:
            r = float(bounds.r_nom[j])
            arrival = upstream + r
            g = arrival - prev
            x = float(bounds.x[j])
            w_min = float(bounds.w_min[j])
            if kind is PolicyKind.NAIVE_DEMAND:
                w_law = x * g
            else:
                w_law = float(bounds.w_max[j]) - params.delta0[j] * g
            if w_law <= w_min:
                w_law = w_min
                flags |= DWELL_MIN
            travel = arrival + w_law
        safety = d[k - (1 - b[dn]), dn] + bounds.s_min[dn]
        if travel >= safety:
            dep = travel
            tr.active[k, j] = TRAVEL
        else:
            dep = safety
            tr.active[k, j] = SAFETY
        arrival = upstream + r
        d[k, j] = dep
        tr.r[k, j] = r
        tr.a[k, j] = arrival
        tr.w[k, j] = dep - arrival
        tr.g[k, j] = arrival - prev
        tr.t[k, j] = dep - upstream
        tr.s[k, j] = (arrival - prev) - r
        tr.flags[k, j] = flags


def simulate(
    cfg: LineConfig,
    marking: InitialMarking,
    policy: PolicyKind,
    schedule: GammaSchedule | None,
    K: int,
    params: PolicyParams | None = None,
    bounds: DerivedBounds | None = None,
) -> DepartureTrace:
    """Run the explicit engine for ``k = 1..K`` and keep every step record."""
    if K < 1:
        raise ValueError("K must be at least 1")
    bounds = derive_bounds(cfg) if bounds is None else bounds
    params = PolicyParams() if params is None else params
    params.check(policy, cfg.n)
    schedule = GammaSchedule.zero() if schedule is None or not policy.uses_gamma else schedule
    order = build_update_order(marking)
    _check_order(order, marking)
    tr = DepartureTrace.empty(marking.d0, K, order, with_records=True)
    platforms = cfg.platforms
    for k in range(1, K + 1):
        gamma = schedule.at(k, platforms)
        tr.gamma[k] = gamma
        step_explicit(tr, k, order, policy, gamma, bounds, marking, params)
    tr.meta = {
        "engine": "explicit",
        "config": config_hash(cfg, marking),
        "policy": policy.value,
        "schedule": schedule.label,
    }
    return tr


# ---------------------------------------------------------------------------
# dynamic-programming (Markov chain) form


@dataclass(frozen=True)
class Alternative:
    """One argument of the max: ``sum(coef * d[k - lag, seg]) + reward``.

    ``coefs`` maps ``(seg, lag)`` to a coefficient for raw rows and ``seg`` to a
    coefficient (all lag 1) for triangularized rows.
    """

    kind: str
    coefs: dict
    reward: float

    @property
    def total(self) -> float:
        return float(sum(self.coefs.values()))


@dataclass
class MarkovForm:
    raw: list[list[Alternative]]
    tri: list[list[Alternative]]
    order: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.raw)

    def step(self, d_prev: np.ndarray) -> np.ndarray:
        """Apply the triangularized dynamic-programming operator once."""
        out = np.empty(self.n)
        for j, alts in enumerate(self.tri):
            out[j] = max(sum(c * d_prev[i] for i, c in a.coefs.items()) + a.reward for a in alts)
        return out

    def maxplus_matrix(self) -> TropicalMatrix:
        """Max-plus matrix of a form whose triangularized rows are all unit rows."""
        arr = np.full((self.n, self.n), BOTTOM)
        for j, alts in enumerate(self.tri):
            for a in alts:
                if len(a.coefs) != 1 or next(iter(a.coefs.values())) != 1.0:
                    raise ValueError(f"row {j} is not boolean; the form is not max-plus linear")
                (i,) = a.coefs
                arr[j, i] = max(arr[j, i], a.reward)
        return TropicalMatrix(arr)


def _raw_rows(bounds: DerivedBounds, marking: InitialMarking, delta: np.ndarray) -> list[list[Alternative]]:
    n = marking.n
    b = marking.b
    t_eff = bounds.travel_const
    rows = []
    for j in range(n):
        up, dn = (j - 1) % n, (j + 1) % n
        dj = float(delta[j])
        coefs: dict = {}
        if 1.0 - dj != 0.0:
            coefs[(up, 1 if b[j] else 0)] = 1.0 - dj
        if dj != 0.0:
            coefs[(j, 1)] = coefs.get((j, 1), 0.0) + dj
        travel = Alternative("TRAVEL", coefs, (1.0 - dj) * float(t_eff[j]))
        safety = Alternative("SAFETY", {(dn, 0 if b[dn] else 1): 1.0}, float(bounds.s_min[dn]))
        rows.append([travel, safety])
    return rows


def _expand(alt: Alternative, tri: list[list[Alternative] | None]) -> list[Alternative]:
    partial = [({}, alt.reward)]
    for (seg, lag), c in alt.coefs.items():
        if lag == 1:
            for coefs, _ in partial:
                coefs[seg] = coefs.get(seg, 0.0) + c
            continue
        expanded = []
        for coefs, reward in partial:
            for sub in tri[seg]:
                merged = dict(coefs)
                for i, ci in sub.coefs.items():
                    merged[i] = merged.get(i, 0.0) + c * ci
                expanded.append((merged, reward + c * sub.reward))
        partial = expanded
    out, seen = [], set()
    for coefs, reward in partial:
        key = (tuple(sorted(coefs.items())), reward)
        if key not in seen:
            seen.add(key)
            out.append(Alternative(alt.kind, coefs, reward))
    return out


def to_markov_form(
    cfg: LineConfig,
    bounds: DerivedBounds,
    marking: InitialMarking,
    coeffs: EffectiveCoefficients | np.ndarray,
) -> MarkovForm:
    """Row-wise dynamic-programming form, raw and with lag-0 references substituted."""
    delta = coeffs.delta if isinstance(coeffs, EffectiveCoefficients) else np.asarray(coeffs, dtype=float)
    order = build_update_order(marking)
    raw = _raw_rows(bounds, marking, delta)
    tri: list[list[Alternative] | None] = [None] * cfg.n
    for j in order:
        tri[j] = [sub for alt in raw[j] for sub in _expand(alt, tri)]
    return MarkovForm(raw=raw, tri=tri, order=order)


def uncontrolled_matrix(cfg: LineConfig, marking: InitialMarking, bounds: DerivedBounds | None = None) -> TropicalMatrix:
    """One-step max-plus matrix ``A`` with ``d[k] = A ⊗ d[k-1]`` for gamma = 0."""
    bounds = derive_bounds(cfg) if bounds is None else bounds
    return to_markov_form(cfg, bounds, marking, np.zeros(cfg.n)).maxplus_matrix()


def stationary_departures(cfg: LineConfig, marking: InitialMarking, bounds: DerivedBounds | None = None) -> np.ndarray:
    """Initial departures from which the gamma = 0 dynamics advance by a constant headway.

    This is a max-plus eigenvector of the uncontrolled one-step matrix,
    shifted so that its smallest entry is 0.
    """
    A = uncontrolled_matrix(cfg, marking, bounds)
    lam = cycle_mean(A)
    shifted = A.entries - lam
    n = A.rows
    # Floyd-Warshall closure of the shifted graph (no positive cycles)
    plus = shifted.copy()
    for k in range(n):
        plus = np.maximum(plus, plus[:, k : k + 1] + plus[k : k + 1, :])
    critical = [c for c in range(n) if abs(plus[c, c]) <= 1e-9]
    v = plus[:, critical[0]].copy()
    v[critical[0]] = 0.0
    if not np.all(np.isfinite(v)):
        raise ConfigError("uncontrolled dynamics are not strongly connected")
    return v - v.min()


def uniform_marking(cfg: LineConfig, m: int, bounds: DerivedBounds | None = None) -> InitialMarking:
    from metrodyn.line import spread_trains

    b = spread_trains(cfg.n, m)
    placeholder = InitialMarking(b, (0.0,) * cfg.n)
    return placeholder.with_d0(stationary_departures(cfg, placeholder, bounds))


# ---------------------------------------------------------------------------
# value iteration


@dataclass
class ValueIterationResult:
    h: float
    per_segment: np.ndarray
    spread: float
    converged: bool
    K: int
    burn_in: int

    def __float__(self) -> float:
        return self.h


def value_iteration_headway(
    cfg: LineConfig,
    marking: InitialMarking,
    policy: PolicyKind = PolicyKind.MAXPLUS_DEMAND,
    schedule: GammaSchedule | None = None,
    K: int = 10_000,
    burn_in: int | None = None,
    params: PolicyParams | None = None,
    tol: float = 1e-6,
    engine: str = "auto",
) -> ValueIterationResult:
    """Average growth rate ``(d[K] - d[burn_in]) / (K - burn_in)``.

    Headway-driven policies iterate the averaged recursion by default; the
    g-driven policies have no such recursion and use the explicit engine.
    ``tol`` is relative to the estimate and applies to the spread over segments.
    """
    burn_in = K // 2 if burn_in is None else burn_in
    if not 0 <= burn_in < K:
        raise ValueError("need 0 <= burn_in < K")
    if engine == "auto":
        engine = "recursive" if policy.headway_driven else "explicit"
    if policy is PolicyKind.MAXPLUS_DEMAND:
        schedule = GammaSchedule.zero()
    if engine == "recursive":
        if not policy.headway_driven:
            raise ConfigError(f"{policy.value} has no averaged recursion")
        tr = simulate_recursive(cfg, marking, schedule, K)
    elif engine == "explicit":
        tr = simulate(cfg, marking, policy, schedule, K, params)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    per = (tr.d[K] - tr.d[burn_in]) / (K - burn_in)
    h = float(per.mean())
    spread = float(per.max() - per.min())
    return ValueIterationResult(h, per, spread, spread <= tol * max(1.0, abs(h)), K, burn_in)

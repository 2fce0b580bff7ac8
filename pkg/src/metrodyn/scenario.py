"""
Scenario files.

A scenario is a TOML document with the sections ``[line]``, ``[[segment]]``
(one table per segment, in line order), ``[marking]``, ``[control]`` and
``[simulation]``. Time fields take a number of seconds or a string with a
``s`` or ``min`` suffix (``"80 s"``, ``"1.5min"``). Unknown keys are rejected.
See the README for the full schema.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from metrodyn.control import GammaMode, GammaSchedule, PolicyKind, PolicyParams
from metrodyn.dynamics import build_update_order, stationary_departures
from metrodyn.line import ConfigError, InitialMarking, LineConfig, SegmentSpec

TIME_FIELDS = ("r_min", "r_nom", "w_min", "g_min", "s_min")
RATE_FIELDS = ("lambda_in", "lambda_out", "alpha_in", "alpha_out")
_TIME_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(s|min)\s*$")


class ScenarioError(ValueError):
    """Input error in a scenario file (parse failure or schema violation)."""


def parse_time(value, where: str) -> float:
    if isinstance(value, bool):
        raise ScenarioError(f"{where}: expected a time, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _TIME_RE.match(value)
        if match:
            number, unit = match.groups()
            return float(number) * (60.0 if unit == "min" else 1.0)
    raise ScenarioError(f"{where}: cannot read {value!r} as a time (use seconds, '<x> s' or '<x> min')")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _integer(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}: expected an integer, got {value!r}")
    return value


def _check_keys(table: dict, allowed: set[str], required: set[str], where: str) -> None:
    if not isinstance(table, dict):
        raise ScenarioError(f"{where}: expected a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(unknown)}")
    missing = sorted(required - set(table))
    if missing:
        raise ScenarioError(f"{where}: missing key(s) {', '.join(missing)}")


@dataclass
class Scenario:
    """Normalized scenario contents (all times in seconds)."""

    line: LineConfig
    b: tuple[int, ...]
    d0: tuple[float, ...] | None = None
    perturbation: tuple[tuple[int, float], ...] = ()
    policy: PolicyKind = PolicyKind.VARIANCE_MIN
    gamma_mode: GammaMode = GammaMode.STATIC
    gamma: tuple[float, ...] | float = 0.0
    gamma_horizon: int | None = None
    gamma_table: tuple[tuple[float, ...], ...] | None = None
    delta0: tuple[float, ...] | None = None
    K: int = 80
    burn_in: int | None = None

    @property
    def n(self) -> int:
        return self.line.n

    def schedule(self) -> GammaSchedule:
        if self.gamma_mode is GammaMode.TABLE:
            return GammaSchedule.table(self.gamma_table)
        if self.gamma_mode is GammaMode.LINEAR_FADE:
            return GammaSchedule.linear_fade(self.gamma, self.gamma_horizon or self.K)
        return GammaSchedule.static(self.gamma)

    def params(self) -> PolicyParams:
        return PolicyParams(self.delta0)

    def marking(self) -> InitialMarking:
        """Initial marking with ``d0`` resolved (uniform spacing when not given explicitly)."""
        if self.d0 is not None:
            d0 = np.array(self.d0, dtype=float)
        else:
            placeholder = InitialMarking(self.b, (0.0,) * self.n)
            try:
                build_update_order(placeholder)
            except ConfigError:
                # degenerate marking: nothing to space, conditions will report it
                d0 = np.zeros(self.n)
            else:
                d0 = stationary_departures(self.line, placeholder)
        for seg, delay in self.perturbation:
            d0[seg] += delay
        return InitialMarking(self.b, tuple(d0))

    def resolved_burn_in(self) -> int:
        return self.K // 2 if self.burn_in is None else self.burn_in


SEGMENT_KEYS = {"index", "platform", *TIME_FIELDS, *RATE_FIELDS}


def _parse_segment(raw: dict, j: int) -> SegmentSpec:
    where = f"segment[{j}]"
    _check_keys(raw, SEGMENT_KEYS, {"platform", *TIME_FIELDS}, where)
    if "index" in raw and _integer(raw["index"], f"{where}.index") != j:
        raise ScenarioError(f"{where}.index: expected {j}, got {raw['index']}")
    if not isinstance(raw["platform"], bool):
        raise ScenarioError(f"{where}.platform: expected true or false")
    kw = {name: parse_time(raw[name], f"{where}.{name}") for name in TIME_FIELDS}
    for name in RATE_FIELDS:
        if name in raw:
            kw[name] = _number(raw[name], f"{where}.{name}")
    return SegmentSpec(index=j, is_platform=raw["platform"], **kw)


def _float_list(value, n: int, where: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value),) * n
    if not isinstance(value, list) or len(value) != n:
        raise ScenarioError(f"{where}: expected a number or a list of {n} numbers")
    return tuple(_number(v, f"{where}[{i}]") for i, v in enumerate(value))


def scenario_from_dict(doc: dict) -> Scenario:
    _check_keys(doc, {"line", "segment", "marking", "control", "simulation"}, {"line", "segment", "marking"}, "scenario")

    line = doc["line"]
    _check_keys(line, {"n", "kappa"}, {"n", "kappa"}, "line")
    n = _integer(line["n"], "line.n")
    kappa = _number(line["kappa"], "line.kappa")
    segs = doc["segment"]
    if not isinstance(segs, list) or len(segs) != n:
        raise ScenarioError(f"segment: expected {n} [[segment]] tables, got {len(segs) if isinstance(segs, list) else 'none'}")
    try:
        cfg = LineConfig(tuple(_parse_segment(raw, j) for j, raw in enumerate(segs)), kappa)
    except ConfigError as exc:
        raise ScenarioError(f"line: {exc}") from None

    mark = doc["marking"]
    _check_keys(mark, {"b", "d0", "uniform", "perturb"}, {"b"}, "marking")
    b = mark["b"]
    if not isinstance(b, list) or len(b) != n or any(v not in (0, 1) or isinstance(v, bool) for v in b):
        raise ScenarioError(f"marking.b: expected a list of {n} zeros and ones")
    has_d0 = "d0" in mark
    uniform = mark.get("uniform", not has_d0)
    if not isinstance(uniform, bool):
        raise ScenarioError("marking.uniform: expected true or false")
    if has_d0 == uniform:
        raise ScenarioError("marking: give exactly one of d0 or uniform = true")
    d0 = None
    if has_d0:
        if not isinstance(mark["d0"], list) or len(mark["d0"]) != n:
            raise ScenarioError(f"marking.d0: expected a list of {n} times")
        d0 = tuple(parse_time(v, f"marking.d0[{i}]") for i, v in enumerate(mark["d0"]))
    perturbation = []
    for i, item in enumerate(mark.get("perturb", [])):
        where = f"marking.perturb[{i}]"
        _check_keys(item, {"segment", "delay"}, {"segment", "delay"}, where)
        seg = _integer(item["segment"], f"{where}.segment")
        if not 0 <= seg < n:
            raise ScenarioError(f"{where}.segment: {seg} outside 0..{n - 1}")
        perturbation.append((seg, parse_time(item["delay"], f"{where}.delay")))

    scen = Scenario(line=cfg, b=tuple(b), d0=d0, perturbation=tuple(perturbation))

    sim = doc.get("simulation", {})
    _check_keys(sim, {"K", "burn_in"}, set(), "simulation")
    if "K" in sim:
        scen.K = _integer(sim["K"], "simulation.K")
        if scen.K < 1:
            raise ScenarioError("simulation.K: must be at least 1")
    if "burn_in" in sim:
        scen.burn_in = _integer(sim["burn_in"], "simulation.burn_in")
        if not 0 <= scen.burn_in < scen.K:
            raise ScenarioError("simulation.burn_in: must satisfy 0 <= burn_in < K")

    ctl = doc.get("control", {})
    _check_keys(ctl, {"policy", "mode", "gamma", "horizon", "table", "delta0"}, set(), "control")
    if "policy" in ctl:
        try:
            scen.policy = PolicyKind(str(ctl["policy"]).lower())
        except ValueError:
            choices = ", ".join(p.value for p in PolicyKind)
            raise ScenarioError(f"control.policy: unknown policy {ctl['policy']!r} (choose from {choices})") from None
    if "mode" in ctl:
        try:
            scen.gamma_mode = GammaMode(ctl["mode"])
        except ValueError:
            raise ScenarioError(f"control.mode: unknown gamma mode {ctl['mode']!r} (static, fade, table)") from None
    if "gamma" in ctl:
        g = ctl["gamma"]
        scen.gamma = _number(g, "control.gamma") if not isinstance(g, list) else _float_list(g, n, "control.gamma")
    if "horizon" in ctl:
        scen.gamma_horizon = _integer(ctl["horizon"], "control.horizon")
    if scen.gamma_mode is GammaMode.TABLE:
        if "table" not in ctl or not isinstance(ctl["table"], list) or not ctl["table"]:
            raise ScenarioError("control.table: a table schedule needs a non-empty list of rows")
        scen.gamma_table = tuple(_float_list(row, n, f"control.table[{i}]") for i, row in enumerate(ctl["table"]))
    elif "table" in ctl:
        raise ScenarioError("control.table: only allowed with mode = \"table\"")
    if "delta0" in ctl:
        scen.delta0 = _float_list(ctl["delta0"], n, "control.delta0")
    try:
        scen.schedule()
        scen.params().check(scen.policy, n)
    except ConfigError as exc:
        raise ScenarioError(f"control: {exc}") from None
    return scen


def loads(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from None
    return scenario_from_dict(doc)


def load(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    raise TypeError(type(v))


def dumps(scen: Scenario) -> str:
    """Serialize to TOML with every time in seconds."""
    out = ["[line]", f"n = {scen.n}", f"kappa = {_fmt(float(scen.line.kappa))}", ""]
    for seg in scen.line.segments:
        out.append("[[segment]]")
        out.append(f"index = {seg.index}")
        out.append(f"platform = {_fmt(seg.is_platform)}")
        for name in (*TIME_FIELDS, *RATE_FIELDS):
            out.append(f"{name} = {_fmt(float(getattr(seg, name)))}")
        out.append("")
    out.append("[marking]")
    out.append(f"b = {_fmt(list(scen.b))}")
    if scen.d0 is not None:
        out.append(f"d0 = {_fmt([float(v) for v in scen.d0])}")
    else:
        out.append("uniform = true")
    if scen.perturbation:
        items = ", ".join(f"{{ segment = {s}, delay = {_fmt(float(dl))} }}" for s, dl in scen.perturbation)
        out.append(f"perturb = [{items}]")
    out.append("")
    out.append("[control]")
    out.append(f"policy = {_fmt(scen.policy.value)}")
    out.append(f"mode = {_fmt(scen.gamma_mode.value)}")
    g = scen.gamma
    out.append(f"gamma = {_fmt(list(g) if isinstance(g, tuple) else float(g))}")
    if scen.gamma_horizon is not None:
        out.append(f"horizon = {scen.gamma_horizon}")
    if scen.gamma_table is not None:
        out.append(f"table = {_fmt([list(r) for r in scen.gamma_table])}")
    if scen.delta0 is not None:
        out.append(f"delta0 = {_fmt(list(scen.delta0))}")
    out.append("")
    out.append("[simulation]")
    out.append(f"K = {scen.K}")
    if scen.burn_in is not None:
        out.append(f"burn_in = {scen.burn_in}")
    return "\n".join(out) + "\n"


def scenario_fields_equal(a: Scenario, b: Scenario) -> bool:
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(Scenario))

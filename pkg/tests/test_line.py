from types import SimpleNamespace

import numpy as np
import pytest

from conftest import toyline
from metrodyn.dynamics import uniform_marking
from metrodyn.line import (
    ConfigError,
    InfeasibleDemandError,
    InitialMarking,
    LineConfig,
    SegmentSpec,
    derive_bounds,
    initial_headways,
    spread_trains,
    step_identities,
    validate_conditions,
)


def test_derive_bounds_toyline(toy):
    bd = derive_bounds(toy)
    assert bd.x == pytest.approx([0.2] * 4)
    assert bd.X == pytest.approx([0.25] * 4)
    assert bd.h_max == pytest.approx([300.0] * 4)
    assert bd.w_max == pytest.approx([60.0] * 4)
    assert bd.g_max == pytest.approx([292.0] * 4)
    assert bd.h_min == pytest.approx([48.0] * 4)
    assert bd.t_min == pytest.approx([18.0] * 4)
    assert bd.delta_r == pytest.approx([70.0] * 4)
    assert bd.delta_w == pytest.approx([52.0] * 4)
    assert bd.delta_g == pytest.approx([252.0] * 4)
    assert bd.travel_const == pytest.approx([90.0] * 4)


def test_non_platform_segments_have_no_dwell_extension():
    segs = [
        SegmentSpec(0, True, 10, 80, 8, 40, 30, 0.5, 0.5, 5, 5),
        SegmentSpec(1, False, 10, 60, 0, 40, 30),
    ]
    bd = derive_bounds(LineConfig(tuple(segs), 600))
    assert bd.x[1] == 0 and bd.X[1] == 0 and bd.w_max[1] == 0
    assert bd.h_max[1] == pytest.approx(1200.0)


def test_no_boarding_gives_unbounded_headway():
    bd = derive_bounds(toyline(lam=0.0))
    assert np.all(np.isinf(bd.h_max))
    assert np.all(bd.w_max == 0)


def test_infeasible_demand():
    seg = SegmentSpec(0, True, 10, 80, 8, 40, 30, 2.5, 2.5, 5.0, 5.0)
    cfg = LineConfig((seg, SegmentSpec(1, False, 10, 80, 0, 40, 30)), 600)
    with pytest.raises(InfeasibleDemandError) as err:
        derive_bounds(cfg)
    assert err.value.segment == 0 and err.value.x == pytest.approx(1.0)


@pytest.mark.parametrize(
    "change, match",
    [
        (dict(r_nom=5.0), "r_nom"),
        (dict(g_min=-1.0), "g_min"),
        (dict(lambda_in=6.0), "exchange rate"),
    ],
)
def test_segment_invariants(change, match):
    base = dict(index=0, is_platform=True, r_min=10, r_nom=80, w_min=8, g_min=40, s_min=30,
                lambda_in=0.5, lambda_out=0.5, alpha_in=5, alpha_out=5)
    base.update(change)
    with pytest.raises(ConfigError, match=match):
        LineConfig((SegmentSpec(**base), SegmentSpec(1, False, 10, 80, 0, 40, 30)), 600)


def test_line_invariants():
    with pytest.raises(ConfigError):
        LineConfig((SegmentSpec(0, True, 10, 80, 8, 40, 30),), 600)
    with pytest.raises(ConfigError):
        LineConfig((SegmentSpec(0, False, 10, 80, 0, 40, 30), SegmentSpec(1, False, 10, 80, 0, 40, 30)), 600)
    with pytest.raises(ConfigError):
        LineConfig((SegmentSpec(1, True, 10, 80, 8, 40, 30), SegmentSpec(0, True, 10, 80, 8, 40, 30)), 600)
    with pytest.raises(ConfigError):
        toyline(kappa=0.0)


def test_marking_invariants():
    with pytest.raises(ConfigError):
        InitialMarking((1, 2), (0.0, 0.0))
    with pytest.raises(ConfigError):
        InitialMarking((1, 0), (0.0,))
    mk = InitialMarking((1, 0, 1, 0), (0, 0, 0, 0))
    assert mk.m == 2 and mk.b_bar == (0, 1, 0, 1)


def test_spread_trains():
    assert spread_trains(4, 2) == (1, 0, 1, 0)
    assert spread_trains(4, 1) == (1, 0, 0, 0)
    assert spread_trains(4, 3) == (1, 1, 1, 0)
    assert sum(spread_trains(7, 3)) == 3


def test_conditions_pass_on_uniform_toyline(toy):
    bd = derive_bounds(toy)
    # m = 1 needs 360 s per lap, above h_max
    for m in (2, 3):
        rep = validate_conditions(toy, bd, uniform_marking(toy, m, bd))
        assert rep.ok, rep.lines()


def test_uniform_initial_headways_equal_analytic(toy):
    bd = derive_bounds(toy)
    for m, h in ((1, 360.0), (2, 180.0), (3, 120.0)):
        assert initial_headways(bd, uniform_marking(toy, m, bd)) == pytest.approx([h] * 4)


def test_c1_fails_on_large_initial_headway(toy):
    bd = derive_bounds(toy)
    mk = InitialMarking((1, 0, 0, 0), (0.0, 0.0, 0.0, 0.0))
    rep = validate_conditions(toy, bd, mk)
    # one train needs 360 s per lap > h_max = 300 s
    assert not rep["C1a"].passed
    assert rep["C2"].passed and rep["C3"].passed


def test_c2_fails_without_run_margin():
    cfg = toyline(r_nom=40.0)
    bd = derive_bounds(cfg)
    rep = validate_conditions(cfg, bd, uniform_marking(cfg, 2, bd))
    assert not rep["C2"].passed
    assert rep["C2"].violations == [0, 1, 2, 3]


def test_c3_fails_on_degenerate_marking(toy):
    bd = derive_bounds(toy)
    for b in ((0, 0, 0, 0), (1, 1, 1, 1)):
        rep = validate_conditions(toy, bd, InitialMarking(b, (0.0,) * 4))
        assert not rep["C3"].passed and not rep.ok


def test_condition_lines_name_every_check(toy):
    bd = derive_bounds(toy)
    lines = validate_conditions(toy, bd, uniform_marking(toy, 2, bd)).lines()
    assert [ln.split()[0] for ln in lines] == ["C1a", "C1b", "C2", "C3"]
    assert all(": PASS" in ln for ln in lines)


def test_step_identities_synthetic():
    rec = SimpleNamespace(d=200.0, d_prev=100.0, a=180.0, w=20.0, r=50.0, g=80.0, h=100.0, s=30.0, t=70.0)
    assert step_identities(rec).ok
    bad = SimpleNamespace(**{**vars(rec), "w": 21.0})
    rep = step_identities(bad)
    assert not rep.ok
    assert rep.residuals["w = d - a"] == pytest.approx(1.0)
    assert rep.residuals["h = g + w"] == pytest.approx(1.0)

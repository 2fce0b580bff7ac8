from dataclasses import replace

import numpy as np
import pytest

from conftest import random_line, random_marking, toyline
from metrodyn.analysis import (
    Classification,
    DominantTerm,
    analytic_headway,
    analytic_vs_maxplus_oracle,
    classify_convergence,
    empirical_headway,
    stochasticity_check,
    unit_rows,
)
from metrodyn.control import EffectiveCoefficients
from metrodyn.dynamics import Alternative, DepartureTrace, MarkovForm, to_markov_form, uniform_marking
from metrodyn.line import ConfigError, LineConfig, derive_bounds


def trace_from_headways(h):
    h = np.asarray(h, dtype=float)
    d = np.vstack([np.zeros((1, h.shape[1])), np.cumsum(h, axis=0)])
    tr = DepartureTrace.empty(d[0], len(h), tuple(range(h.shape[1])), with_records=False)
    tr.d[:] = d
    return tr


def test_analytic_toyline(toy):
    bd = derive_bounds(toy)
    expected = {1: (360.0, DominantTerm.TRAVEL_SUM), 2: (180.0, DominantTerm.TRAVEL_SUM), 3: (120.0, DominantTerm.TRAVEL_SUM)}
    for m, (h, term) in expected.items():
        rep = analytic_headway(toy, bd, m)
        assert rep.h_analytic == pytest.approx(h)
        assert rep.dominant_term is term
    assert analytic_headway(toy, bd, 3).terms == pytest.approx((120.0, 120.0, 120.0))


def test_analytic_dominant_terms():
    cfg = toyline(n=6, s_min=50.0)
    bd = derive_bounds(cfg)
    # travel sum 540/m, bottleneck 140, free flow 300/(6-m)
    assert analytic_headway(cfg, bd, 2).dominant_term is DominantTerm.TRAVEL_SUM
    assert analytic_headway(cfg, bd, 5).dominant_term is DominantTerm.FREEFLOW
    assert analytic_headway(cfg, bd, 5).h_analytic == pytest.approx(300.0)
    # one slow segment: travel sum 570/m, bottleneck 330, free flow 120/(4-m)
    segs = list(toyline().segments)
    segs[0] = replace(segs[0], r_nom=290.0)
    slow = LineConfig(tuple(segs), 600.0)
    rep = analytic_headway(slow, derive_bounds(slow), 2)
    assert rep.dominant_term is DominantTerm.BOTTLENECK
    assert rep.h_analytic == pytest.approx(330.0)


def test_profile_is_u_shaped():
    cfg = toyline(n=8, s_min=40.0)
    bd = derive_bounds(cfg)
    prof = analytic_headway(cfg, bd, 1).profile
    vals = [prof[m] for m in sorted(prof)]
    lo = int(np.argmin(vals))
    assert all(a >= b for a, b in zip(vals[:lo], vals[1 : lo + 1]))
    assert all(a <= b for a, b in zip(vals[lo:], vals[lo + 1 :]))


def test_analytic_rejects_degenerate_counts(toy):
    bd = derive_bounds(toy)
    for m in (0, 4):
        with pytest.raises(ConfigError):
            analytic_headway(toy, bd, m)


def test_oracle_agreement_on_random_lines():
    rng = np.random.default_rng(21)
    for _ in range(30):
        cfg = random_line(rng)
        bd = derive_bounds(cfg)
        mk = random_marking(rng, cfg.n)
        h = analytic_headway(cfg, bd, mk.m).h_analytic
        assert analytic_vs_maxplus_oracle(cfg, bd, mk) <= 1e-9 * h


def test_empirical_headway_examples():
    tr = trace_from_headways([[100.0, 110.0]] * 10)
    rep = empirical_headway(tr, burn_in=4)
    assert rep.h_empirical == pytest.approx(105.0)
    assert rep.spread == pytest.approx(10.0)
    assert rep.variance == pytest.approx(25.0)
    with pytest.raises(ValueError):
        empirical_headway(tr, burn_in=10)


def test_classify_converged():
    rep = classify_convergence(trace_from_headways([[180.0, 180.0]] * 60))
    assert rep.classification is Classification.CONVERGED


def test_classify_periodic():
    rep = classify_convergence(trace_from_headways([[120.0, 240.0], [240.0, 120.0]] * 30))
    assert rep.classification is Classification.PERIODIC and rep.period == 2
    assert str(rep) == "PERIODIC(2)"


def test_classify_diverged():
    h = [[100.0 * 1.05**k, 100.0] for k in range(120)]
    assert classify_convergence(trace_from_headways(h)).classification is Classification.DIVERGED
    bad = [[100.0, 100.0]] * 10 + [[np.inf, 100.0]]
    assert classify_convergence(trace_from_headways(bad)).classification is Classification.DIVERGED


def test_classify_undecided():
    assert classify_convergence(trace_from_headways([[1.0, 2.0]] * 5)).classification is Classification.UNDECIDED
    slow = [[180.0 + 0.9**k, 180.0] for k in range(80)]
    assert classify_convergence(trace_from_headways(slow)).classification is Classification.UNDECIDED


def test_stochasticity_on_toyline(toy):
    bd = derive_bounds(toy)
    mk = uniform_marking(toy, 2)
    mf0 = to_markov_form(toy, bd, mk, np.zeros(4))
    assert stochasticity_check(mf0).ok and unit_rows(mf0)
    mf = to_markov_form(toy, bd, mk, EffectiveCoefficients.from_gamma(np.full(4, 0.5), bd))
    assert stochasticity_check(mf).ok
    assert not unit_rows(mf)


def test_stochasticity_detects_corrupted_row():
    good = Alternative("TRAVEL", {0: 0.6, 1: 0.4}, 10.0)
    bad = Alternative("TRAVEL", {0: 0.6, 1: 0.41}, 10.0)
    mf = MarkovForm(raw=[[good], [good]], tri=[[good], [bad]], order=(0, 1))
    rep = stochasticity_check(mf)
    assert rep.residual == pytest.approx(0.01)
    assert not rep.ok

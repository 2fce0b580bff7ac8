"""Shared line factories for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from metrodyn.line import InitialMarking, LineConfig, SegmentSpec, spread_trains


def toyline(
    n: int = 4,
    lam: float = 0.5,
    w_min: float = 8.0,
    r_min: float = 10.0,
    r_nom: float = 80.0,
    g_min: float = 40.0,
    s_min: float = 30.0,
    alpha: float = 5.0,
    kappa: float = 600.0,
) -> LineConfig:
    """Uniform all-platform loop; the defaults give x = 0.2, h_max = 300 s."""
    segs = [
        SegmentSpec(
            index=j,
            is_platform=True,
            r_min=r_min,
            r_nom=r_nom,
            w_min=w_min,
            g_min=g_min,
            s_min=s_min,
            lambda_in=lam,
            lambda_out=lam,
            alpha_in=alpha,
            alpha_out=alpha,
        )
        for j in range(n)
    ]
    return LineConfig(tuple(segs), kappa)


def random_line(rng: np.random.Generator, n: int | None = None) -> LineConfig:
    """Random structurally valid line with at least one platform and x <= 0.3."""
    n = int(rng.integers(2, 9)) if n is None else n
    platforms = rng.random(n) < 0.6
    if not platforms.any():
        platforms[rng.integers(n)] = True
    segs = []
    for j in range(n):
        r_min = float(rng.uniform(5, 30))
        r_nom = r_min + float(rng.uniform(0, 80))
        lam_in = lam_out = 0.0
        if platforms[j]:
            # x = lam_out/alpha + lam_in/alpha <= 0.3
            lam_in = float(rng.uniform(0.0, 0.15)) * 5.0
            lam_out = float(rng.uniform(0.0, 0.15)) * 5.0
        segs.append(
            SegmentSpec(
                index=j,
                is_platform=bool(platforms[j]),
                r_min=r_min,
                r_nom=r_nom,
                w_min=float(rng.uniform(0, 20)) if platforms[j] else 0.0,
                g_min=float(rng.uniform(10, 60)),
                s_min=float(rng.uniform(5, 60)),
                lambda_in=lam_in,
                lambda_out=lam_out,
                alpha_in=5.0,
                alpha_out=5.0,
            )
        )
    return LineConfig(tuple(segs), float(rng.uniform(200, 2000)))


def random_marking(rng: np.random.Generator, n: int, d0_scale: float = 0.0) -> InitialMarking:
    m = int(rng.integers(1, n))
    b = np.zeros(n, dtype=int)
    b[rng.choice(n, size=m, replace=False)] = 1
    return InitialMarking(tuple(b), tuple(rng.uniform(0, d0_scale, n) if d0_scale else np.zeros(n)))


@pytest.fixture
def toy() -> LineConfig:
    return toyline()


@pytest.fixture
def toy_b2() -> tuple[int, ...]:
    return spread_trains(4, 2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metrodyn.maxplus import (
    BOTTOM,
    NoCycleError,
    ShapeError,
    TropicalMatrix,
    critical_graph,
    cycle_mean,
    graph_cyclicity,
    mp_matmul,
    mp_power,
    oplus,
    otimes,
    simple_cycles_brute_force,
)


def test_matmul_example():
    a = TropicalMatrix.from_rows([[0, 3], [None, 1]])
    b = TropicalMatrix.from_rows([[2, None], [0, 4]])
    c = mp_matmul(a, b)
    assert c.entries.tolist() == [[3.0, 7.0], [1.0, 5.0]]
    assert a @ b == c


def test_bottom_absorbs():
    assert otimes(BOTTOM, 5.0) == BOTTOM
    assert oplus(BOTTOM, 5.0) == 5.0
    a = TropicalMatrix.from_rows([[None, None], [None, None]])
    b = TropicalMatrix.from_rows([[1, 2], [3, 4]])
    assert np.all(np.isneginf((a @ b).entries))


def test_identity_is_neutral():
    a = TropicalMatrix.from_rows([[1, None, 2], [0, 5, None], [None, -1, 3]])
    e = TropicalMatrix.identity(3)
    assert a @ e == a and e @ a == a


def test_shape_errors():
    a = TropicalMatrix(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        a @ a
    with pytest.raises(ShapeError):
        a.apply([0.0, 0.0])
    with pytest.raises(ValueError):
        TropicalMatrix(np.array([[np.inf]]))


def test_power_matches_repeated_product():
    a = TropicalMatrix.from_rows([[1, 4], [2, None]])
    p = TropicalMatrix.identity(2)
    for _ in range(5):
        p = p @ a
    assert mp_power(a, 5) == p


# integer weights keep max-plus sums exact
finite = st.integers(-50, 50).map(float)
entry = st.one_of(finite, st.just(BOTTOM))


def mats(n):
    return st.lists(st.lists(entry, min_size=n, max_size=n), min_size=n, max_size=n).map(
        lambda rows: TropicalMatrix(np.array(rows, dtype=float))
    )


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4).flatmap(lambda n: st.tuples(mats(n), mats(n), mats(n))))
def test_semiring_laws(abc):
    a, b, c = abc
    assert (a @ b) @ c == a @ (b @ c)
    assert a @ (b.oplus(c)) == (a @ b).oplus(a @ c)
    assert (a.oplus(b)) @ c == (a @ c).oplus(b @ c)
    assert a.oplus(b) == b.oplus(a)


def test_cycle_mean_examples():
    # 2-cycle of weight 3+5 and a self loop of 3.5
    a = TropicalMatrix.from_rows([[3.5, 3], [5, None]])
    assert cycle_mean(a) == pytest.approx(4.0)
    # acyclic
    with pytest.raises(NoCycleError):
        cycle_mean(TropicalMatrix.from_rows([[None, 1], [None, None]]))


def test_cycle_mean_uses_best_component():
    a = TropicalMatrix.from_rows(
        [
            [None, 2, None, None],
            [2, None, 100, None],
            [None, None, None, 7],
            [None, None, 9, None],
        ]
    )
    assert cycle_mean(a) == pytest.approx(8.0)


@pytest.mark.parametrize("seed", range(40))
def test_karp_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    arr = np.where(rng.random((n, n)) < 0.45, rng.uniform(-10, 30, (n, n)).round(2), BOTTOM)
    a = TropicalMatrix(arr)
    cycles = simple_cycles_brute_force(a)
    if not cycles:
        with pytest.raises(NoCycleError):
            cycle_mean(a)
        return
    best = max(mean for _, mean in cycles)
    assert cycle_mean(a) == pytest.approx(best, rel=1e-12, abs=1e-12)
    # every critical arc lies on some maximum-mean cycle
    on_best = set()
    for path, mean in cycles:
        if abs(mean - best) <= 1e-9:
            on_best.update(zip(path, path[1:] + path[:1]))
    assert set(critical_graph(a)) == on_best


def test_growth_rate_equals_cycle_mean():
    a = TropicalMatrix.from_rows([[2, 5, None], [None, 1, 3], [4, None, 2]])
    lam = cycle_mean(a)
    x = np.zeros(3)
    for _ in range(300):
        x = a.apply(x)
    assert x.max() / 300 == pytest.approx(lam, abs=0.05)


def _eventual_period(a: TropicalMatrix, x0, steps: int = 200) -> int:
    lam = cycle_mean(a)
    x = np.asarray(x0, dtype=float)
    seq = []
    for k in range(steps):
        x = a.apply(x)
        seq.append(x - (k + 1) * lam)
    tail = seq[steps // 2 :]
    for p in range(1, 30):
        if all(np.allclose(tail[i], tail[i + p], atol=1e-9) for i in range(len(tail) - p)):
            return p
    raise AssertionError("no period found")


def test_cyclicity_examples():
    loop = TropicalMatrix.from_rows([[1, None], [None, 0]])
    assert graph_cyclicity(loop) == 1
    two = TropicalMatrix.from_rows([[None, 1], [1, None]])
    assert graph_cyclicity(two) == 2
    assert _eventual_period(two, [0.0, 3.0]) == 2


def test_cyclicity_lcm_of_disjoint_components():
    arr = np.full((5, 5), BOTTOM)
    # 2-cycle 0 -> 1 -> 0 and 3-cycle 2 -> 3 -> 4 -> 2, all means 1
    for i, j in [(0, 1), (1, 0), (2, 3), (3, 4), (4, 2)]:
        arr[i, j] = 1.0
    a = TropicalMatrix(arr)
    assert graph_cyclicity(a) == 6
    x0 = np.array([0.0, 3.0, 0.0, 1.0, 5.0])
    x = x0.copy()
    seq = []
    for k in range(60):
        x = a.apply(x)
        seq.append(x - (k + 1))
    p = next(p for p in range(1, 20) if all(np.allclose(seq[i], seq[i + p]) for i in range(20, 40)))
    assert p == math.lcm(2, 3)

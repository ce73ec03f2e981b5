import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermopinn.ageing import (
    KELVIN,
    AgeingConfig,
    ageing_factor,
    ageing_field,
    integrate_ageing,
    loss_of_life,
    write_loss_of_life,
)
from thermopinn.reference import FieldGrid

temps_C = st.floats(min_value=20.0, max_value=160.0)


@pytest.mark.parametrize("celsius, expect", [(98.0, 1.0), (104.0, 2.0), (92.0, 0.5), (110.0, 4.0), (80.0, 0.125)])
def test_doubling_law_examples(celsius, expect):
    assert ageing_factor(celsius + KELVIN) == expect


def test_custom_law():
    ac = AgeingConfig(theta_base=110.0, doubling_interval=8.0)
    assert ageing_factor(118.0 + KELVIN, ac) == 2.0
    with pytest.raises(ValueError):
        AgeingConfig(doubling_interval=0.0)
    with pytest.raises(ValueError):
        ageing_factor([300.0, math.nan])


@given(temps_C, st.floats(min_value=-20.0, max_value=20.0))
def test_log_linear_in_temperature(c, shift):
    a, b = ageing_factor(c + KELVIN), ageing_factor(c + shift + KELVIN)
    assert math.log2(b) - math.log2(a) == pytest.approx(shift / 6.0, abs=1e-9)


@given(st.lists(temps_C, min_size=2, max_size=20))
def test_monotone_in_temperature(cs):
    cs = np.sort(np.asarray(cs)) + KELVIN
    assert np.all(np.diff(ageing_factor(cs)) >= 0)


def _grid(theta):
    theta = np.asarray(theta, float)
    nx, nt = theta.shape
    return FieldGrid(np.linspace(0, 1.5, nx), np.linspace(0, 86400.0, nt), theta)


def test_ageing_field_per_column_order():
    rng = np.random.default_rng(0)
    g = ageing_field(_grid(350 + 20 * rng.random((7, 9))))
    for j in range(9):
        order = np.argsort(g.theta[:, j])
        assert np.all(np.diff(g.ageing[order, j]) >= 0)
    assert g.std is None and np.array_equal(g.xs, np.linspace(0, 1.5, 7))


def test_constant_temperature_loss_of_life():
    g = ageing_field(_grid(np.full((3, 25), 104.0 + KELVIN)))
    np.testing.assert_allclose(loss_of_life(g), 48.0, rtol=1e-14)


def test_step_history_integrates_exactly():
    # 12 h at 98 C then 12 h at 104 C, step encoded by a repeated knot
    ts = np.array([0.0, 43200.0, 43200.0, 86400.0])
    V = ageing_factor(np.array([98.0, 98.0, 104.0, 104.0]) + KELVIN)
    assert integrate_ageing(ts, V)[0] == 36.0


@settings(max_examples=50)
@given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=10_000))
def test_additive_over_split_horizon(split, seed):
    rng = np.random.default_rng(seed)
    g = ageing_field(_grid(330 + 60 * rng.random((4, 32))))
    cut = g.ts[split]
    whole = loss_of_life(g)
    parts = loss_of_life(g, t1=cut) + loss_of_life(g, t0=cut)
    np.testing.assert_allclose(parts, whole, rtol=1e-12)


def test_restriction_commutes():
    rng = np.random.default_rng(3)
    g = _grid(340 + 30 * rng.random((5, 12)))
    sub = FieldGrid(g.xs[1:4], g.ts, g.theta[1:4])
    np.testing.assert_array_equal(ageing_field(sub).ageing, ageing_field(g).ageing[1:4])


def test_loss_of_life_errors():
    with pytest.raises(ValueError):
        loss_of_life(_grid(np.full((3, 3), 350.0)))
    g = ageing_field(_grid(np.full((3, 3), 350.0)))
    with pytest.raises(ValueError):
        loss_of_life(g, t0=1.0)
    with pytest.raises(ValueError):
        loss_of_life(g, t0=86400.0, t1=0.0)
    with pytest.raises(ValueError):
        integrate_ageing([0.0, 2.0, 1.0], [1.0, 1.0, 1.0])


def test_write_loss_of_life(tmp_path):
    path = tmp_path / "lol.csv"
    write_loss_of_life(path, [0.0, 0.75], [1.5, 2.25])
    assert path.read_text().splitlines() == ["x_m,equiv_hours", "0,1.5", "0.75,2.25"]


def test_uniform_reference_temperature_field():
    g = ageing_field(_grid(np.full((4, 5), 98.0 + KELVIN)))
    assert np.all(g.ageing == 1.0)


def test_hotspot_of_ageing_tracks_hotspot_of_temperature():
    rng = np.random.default_rng(1)
    g = ageing_field(_grid(330 + 40 * rng.random((9, 11))))
    assert np.array_equal(np.argmax(g.ageing, axis=0), np.argmax(g.theta, axis=0))
    column = ageing_field(_grid(np.linspace(330, 380, 6)[:, None] * np.ones((1, 3)))).ageing
    assert np.all(np.diff(column, axis=0) > 0)


@pytest.mark.parametrize(
    "ts_h, V, hours",
    [
        ([0.0, 24.0], [1.0, 1.0], 24.0),
        ([0.0, 12.0], [2.0, 2.0], 24.0),
        ([0.0, 12.0, 12.0, 24.0], [1.0, 1.0, 3.0, 3.0], 48.0),
    ],
)
def test_loss_of_life_examples(ts_h, V, hours):
    assert integrate_ageing(np.array(ts_h) * 3600.0, V)[0] == hours

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermopinn.autodiff import Tape
from thermopinn.nn import MlpParams, init_mlp, n_params
from thermopinn.pinn import PhysicsBatch, sample_collocation
from thermopinn.reference import solve_crank_nicolson
from thermopinn.thermal import (
    CollocationPoint,
    OperatingProfiles,
    ThermalConfig,
    boundary_values,
    heat_source,
    initial_condition,
    pde_residual,
    read_profiles,
    residual_from_field,
    scale,
    unscale,
    write_profiles,
)


def _profiles(K=0.5, ambient=300.0, top=330.0):
    t = np.array([0.0, 3600.0, 7200.0])
    return OperatingProfiles(t, [K] * 3, [ambient] * 3, [top] * 3)


def test_config_validation_and_alpha():
    cfg = ThermalConfig(k=0.2, rho=1000.0, cp=2000.0)
    assert cfg.alpha == 0.2 / (1000.0 * 2000.0)
    for bad in ({"k": 0.0}, {"H": -1.0}, {"t_end": 0.0}, {"h_eff": -1.0}, {"theta_scale": 0.0}):
        with pytest.raises(ValueError):
            ThermalConfig(**bad)


def test_heat_source_examples():
    cfg = ThermalConfig(P0=10.0, mu_rated=20.0, h_eff=0.0, t_end=7200.0)
    prof = _profiles(K=0.5)
    assert heat_source(0.3, 0.5, 311.0, prof, cfg) == pytest.approx(15.0, rel=1e-15)
    cfg2 = ThermalConfig(P0=10.0, mu_rated=20.0, h_eff=2.0, t_end=7200.0)
    assert heat_source(0.3, 0.5, 303.0, prof, cfg2) == pytest.approx(9.0, rel=1e-14)
    cfg3 = ThermalConfig(P0=10.0, h_eff=7.0, t_end=7200.0)
    assert heat_source(0.9, 0.1, 300.0, _profiles(K=0.0), cfg3) == pytest.approx(10.0, rel=1e-14)


def test_heat_source_is_affine_in_temperature(desk_profiles, desk_cfg):
    a = heat_source(0.5, 0.3, 310.0, desk_profiles, desk_cfg)
    b = heat_source(0.5, 0.3, 320.0, desk_profiles, desk_cfg)
    assert (b - a) / 10.0 == pytest.approx(-desk_cfg.h_eff, rel=1e-12)


def test_heat_source_out_of_range():
    cfg = ThermalConfig(t_end=7200.0)
    with pytest.raises(ValueError):
        heat_source(0.5, 1.5, 300.0, _profiles(), cfg)


def test_boundary_values_examples():
    t = np.array([0.0, 10.0, 20.0])
    prof = OperatingProfiles(t, [1.0, 1.0, 1.0], [290.0, 300.0, 296.0], [330.0, 340.0, 320.0])
    assert boundary_values(10.0, prof) == (300.0, 340.0)
    bottom, top = boundary_values(15.0, prof)
    assert bottom == pytest.approx(298.0) and top == pytest.approx(330.0)
    flat = _profiles()
    b, tp = boundary_values(np.linspace(0, 7200, 11), flat)
    assert np.all(b == 300.0) and np.all(tp == 330.0)
    with pytest.raises(ValueError):
        boundary_values(30.0, prof)


def test_boundary_values_continuous_at_knots(desk_profiles):
    knots = desk_profiles.times[1:-1]
    eps = 1e-6
    lo = np.array(boundary_values(knots - eps, desk_profiles))
    hi = np.array(boundary_values(knots + eps, desk_profiles))
    assert np.max(np.abs(hi - lo)) < 1e-6


def test_profile_validation():
    with pytest.raises(ValueError):
        OperatingProfiles([0.0], [1.0], [300.0], [310.0])
    with pytest.raises(ValueError):
        OperatingProfiles([0.0, 0.0], [1.0, 1.0], [300.0] * 2, [310.0] * 2)
    with pytest.raises(ValueError):
        OperatingProfiles([0.0, 1.0], [-1.0, 1.0], [300.0] * 2, [310.0] * 2)
    with pytest.warns(UserWarning, match="plausible"):
        OperatingProfiles([0.0, 1.0], [1.0, 1.0], [100.0] * 2, [310.0] * 2)


def test_profiles_are_read_only():
    prof = _profiles()
    with pytest.raises(ValueError):
        prof.K[0] = 3.0


def test_profiles_csv_round_trip(tmp_path, desk_profiles):
    path = tmp_path / "p.csv"
    write_profiles(path, desk_profiles)
    assert path.read_text().splitlines()[0] == "t_s,K_pu,theta_A_K,theta_TO_K"
    back = read_profiles(path)
    for name in ("times", "K", "theta_A", "theta_TO"):
        assert np.array_equal(getattr(back, name), getattr(desk_profiles, name))


def test_scale_examples():
    cfg = ThermalConfig()
    x, t, th = scale(cfg, cfg.H, cfg.t_end, cfg.theta_ref)
    assert (x, t, th) == (1.0, 1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 10), t=st.floats(0, 1e6), th=st.floats(200, 500))
def test_scale_round_trip(x, t, th):
    cfg = ThermalConfig()
    back = unscale(cfg, *scale(cfg, x, t, th))
    assert back[0] == pytest.approx(x, abs=1e-12) and back[1] == pytest.approx(t, rel=1e-12, abs=1e-12)
    assert back[2] == pytest.approx(th, rel=1e-12)


def test_initial_condition_is_linear():
    prof = _profiles(ambient=300.0, top=330.0)
    cfg = ThermalConfig(t_end=7200.0)
    np.testing.assert_allclose(initial_condition(np.array([0.0, 0.5, 1.0]), prof, cfg), [300.0, 315.0, 330.0])


def test_collocation_point_validation():
    with pytest.raises(ValueError):
        CollocationPoint(0.5, 0.5, "interior")
    with pytest.raises(ValueError):
        CollocationPoint(1.5, 0.5, "residual")


# residual -------------------------------------------------------------------


@pytest.fixture
def quiet_cfg():
    return ThermalConfig(P0=0.0, mu_rated=0.0, h_eff=0.0, t_end=7200.0)


def _residual_of(u_fn, cfg, x0=0.4, t0=0.3):
    tape = Tape()
    return residual_from_field(u_fn, tape.input("x", x0), tape.input("t", t0), _profiles(), cfg).value


def test_residual_of_constant_field_is_zero(quiet_cfg):
    zero = MlpParams.unflatten((2, 4, 1), np.zeros(n_params((2, 4, 1))))
    r = pde_residual(zero, CollocationPoint(0.2, 0.7, "residual"), _profiles(), quiet_cfg)
    assert r.value == 0.0


def test_residual_of_linear_steady_field_is_zero(quiet_cfg):
    assert _residual_of(lambda x, t: 0.3 + 0.8 * x, quiet_cfg) == pytest.approx(0.0, abs=1e-12)


def test_residual_of_quadratic_is_two(quiet_cfg):
    cfg = quiet_cfg

    def u(x, t):  # physical field theta = X^2 (X in metres), returned nondimensional
        return ((x * cfg.H).square() - cfg.theta_ref) / cfg.theta_scale

    assert _residual_of(u, cfg) == pytest.approx(2.0, rel=1e-12)


def test_residual_rejects_other_kinds(quiet_cfg):
    with pytest.raises(ValueError):
        pde_residual(init_mlp((2, 3, 1)), CollocationPoint(0.0, 0.5, "boundary_bottom"), _profiles(), quiet_cfg)


def test_residual_routes_agree(desk_profiles, desk_cfg):
    """Scalar graph and batched kernel give the same residual."""
    net = init_mlp((2, 6, 6, 1), seed=4)
    sets = sample_collocation((2, 2, 5), seed=1)
    batch = PhysicsBatch(sets, desk_profiles, desk_cfg)
    _, errs = batch.evaluate(net.flatten(), net.layer_sizes)
    for i, p in enumerate(sets.residual.points()):
        r = pde_residual(net, p, desk_profiles, desk_cfg)
        assert errs["residual"][i] == pytest.approx(r.value, rel=1e-10, abs=1e-10)


def test_reference_residual_shrinks_with_refinement():
    """Finite-difference residual of the oracle field falls ~4x per halving of the steps."""
    cfg = ThermalConfig(k=40.0)
    prof = OperatingProfiles([0.0, 86400.0], [0.8, 0.8], [300.0, 300.0], [320.0, 320.0])

    def max_residual(nx, nt):
        g = solve_crank_nicolson(cfg, prof, nx, nt)
        th = g.theta
        dx, dt = g.xs[1] - g.xs[0], g.ts[1] - g.ts[0]
        txx = (th[2:, 1:-1] - 2 * th[1:-1, 1:-1] + th[:-2, 1:-1]) / dx**2
        tt = (th[1:-1, 2:] - th[1:-1, :-2]) / (2 * dt)
        q = heat_source(0.5, g.ts[1:-1] / cfg.t_end, th[1:-1, 1:-1], prof, cfg)
        r = txx + q / cfg.k - tt / cfg.alpha
        late = g.ts[1:-1] >= cfg.t_end / 4
        return np.max(np.abs(r[:, late]))

    coarse, fine = max_residual(21, 49), max_residual(41, 97)
    assert 3.5 < coarse / fine < 5.0

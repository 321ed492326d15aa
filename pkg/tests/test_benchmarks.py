"""Benchmark definitions: closed forms, kinetics, presets, and datasets."""

import numpy as np
import pytest

from mfpinn import benchmarks as bm
from mfpinn import jets as jm
from mfpinn import pinn
from mfpinn import reliability as rel
from mfpinn import solvers
from mfpinn.errors import DomainError


# Closed forms

def test_decay_solution_values():
    assert bm.decay_lf_solution(2.0, 0.5) == np.exp(-1.0)
    assert bm.decay_lf_solution(0.0, 0.7) == 1.0
    arr = bm.decay_lf_solution(np.array([-1.0, 1.0]), 1.0)
    assert np.allclose(arr, [np.e, 1.0 / np.e])


def test_decay_hf_response_values():
    assert bm.decay_hf_response(-2.0, 1.0) == pytest.approx(
        69.85414302770538, abs=1e-12)
    assert bm.decay_hf_response(0.0, 1.0) == 16.0
    assert bm.decay_hf_response(-3.0, 0.0) == 1.0


def test_oscillator_rhs_hand_values():
    y = np.array([0.5, -1.0])
    p = np.array([0.2, 9.0])
    lf = bm.oscillator_lf_rhs(0.0, y, p)
    assert np.allclose(lf, [-1.0, 0.2 - 4.5], atol=1e-15)
    hf = bm.oscillator_hf_rhs(0.0, y, p)
    assert np.allclose(hf, [-1.0, 0.2 - 9.0 * np.sin(0.5)], atol=1e-15)


def test_cascade_rhs_hand_values():
    e = np.array(bm.CASCADE_IC, dtype=float)
    p = np.array(bm.CASCADE_MEANS)
    with_drive = bm.cascade_rhs(e, p, 0.5)
    assert np.allclose(with_drive, [0.25 / 1.2, -0.125, 0.25 / 1.2],
                       atol=1e-15)
    no_drive = bm.cascade_rhs(e, p, 0.0)
    assert np.allclose(no_drive, [0.0, -0.125, 0.25 / 1.2], atol=1e-15)


# Residual evaluators encode the same dynamics as the reference RHS

def state_jets(values, d1_t):
    coords = jm.JetCoords(active=[0], names={0: "t"})
    return [jm.Jet2(coords, v, (d,), ()) for v, d in zip(values, d1_t)]


def test_decay_residual_consistent_with_rhs():
    prob = bm.make_decay_problem()
    z = np.linspace(-4.0, 0.0, 7)
    t = np.linspace(0.1, 1.0, 7)
    u = bm.decay_lf_solution(z, t)
    jets = state_jets([u], [-z * u])
    res = prob.residual.evaluate(jets, [z], None, None)
    assert np.max(np.abs(res[0])) < 1e-14


def test_oscillator_residual_consistent_with_rhs():
    prob = bm.make_oscillator_problem()
    rng = np.random.default_rng(0)
    y = rng.standard_normal((10, 2))
    p = np.column_stack([rng.uniform(0.0, 0.4, 10),
                         rng.uniform(8.8, 9.2, 10)])
    dy = bm.oscillator_lf_rhs(0.0, y, p)
    jets = state_jets([y[:, 0], y[:, 1]], [dy[:, 0], dy[:, 1]])
    res = prob.residual.evaluate(jets, [p[:, 0], p[:, 1]], None, None)
    assert max(np.max(np.abs(r)) for r in res) < 1e-13


def test_cascade_residual_consistent_with_rhs():
    prob = bm.make_cascade_problem()
    rng = np.random.default_rng(1)
    e = rng.uniform(0.05, 0.95, (10, 3))
    p = np.array(bm.CASCADE_MEANS) * rng.uniform(0.9, 1.1, (10, 13))
    de = bm.cascade_rhs(e, p, 0.0)
    jets = state_jets([e[:, 0], e[:, 1], e[:, 2]],
                      [de[:, 0], de[:, 1], de[:, 2]])
    xi = [p[:, j] for j in range(13)]
    res = prob.residual.evaluate(jets, xi, None, None)
    assert max(np.max(np.abs(r)) for r in res) < 1e-13


def test_heat_residual_consistent_with_analytic_solution():
    prob = bm.make_burgers_problem(nu=0.05)
    x = np.linspace(-0.9, 0.9, 11)
    t = np.full_like(x, 0.7)
    u = np.exp(-0.05 * np.pi ** 2 * t) * np.sin(np.pi * x)
    u_t = -0.05 * np.pi ** 2 * u
    u_xx = -np.pi ** 2 * u
    coords = jm.JetCoords(active=[0, 1], second=[0],
                          names={0: "x", 1: "t"})
    jet = jm.Jet2(coords, u, (np.zeros_like(u), u_t), (u_xx,))
    res = prob.residual.evaluate([jet], [np.zeros_like(x)], None, None)
    assert np.max(np.abs(res[0])) < 1e-15


# Transition layer extraction

def test_transition_from_field_linear_profile():
    x = np.linspace(-1.0, 1.0, 201)
    z0 = 0.3173
    field = z0 - x
    assert abs(bm.transition_from_field(x, field) - z0) < 1e-12


def test_transition_from_field_batch():
    x = np.linspace(-1.0, 1.0, 401)
    z0 = np.array([-0.55, 0.0, 0.72])
    fields = z0[:, None] - x[None, :]
    out = bm.transition_from_field(x, fields)
    assert np.allclose(out, z0, atol=1e-12)


def test_transition_from_field_requires_crossing():
    x = np.linspace(-1.0, 1.0, 11)
    with pytest.raises(DomainError):
        bm.transition_from_field(x, np.full(11, -1.0))
    with pytest.raises(DomainError):
        bm.transition_from_field(x, np.full(11, 1.0))


def test_burgers_z_table_monotone_and_cached():
    dgrid, z = bm.burgers_z_table(0.05, 10.0, n_delta=5, nx=81)
    assert dgrid.shape == z.shape == (5,)
    assert np.all(np.diff(z) > 0.0)
    again = bm.burgers_z_table(0.05, 10.0, n_delta=5, nx=81)
    assert again[1] is z


# Presets

def test_benchmark_ids_and_unknown():
    assert set(bm.BENCHMARK_IDS) == {"decay_ode", "burgers", "oscillator",
                                     "cascade"}
    with pytest.raises(DomainError):
        bm.make_benchmark("pendulum")


def test_decay_preset_shape():
    b = bm.make_benchmark("decay_ode")
    assert b.arch.layer_widths == (2, 50, 50, 50, 50, 50, 1)
    assert b.collocation_n == 8000
    assert b.lf_budget.rmsprop_iterations == 15000
    assert b.transfer.l_t == 2
    assert b.limit.threshold == 18.0 and b.limit.t_t == 1.0
    assert b.mcs_n == 1000000
    assert b.hf_n_samples == 15
    assert np.array_equal(b.hf_times, [0.0, 1.0])


def test_burgers_preset_shape():
    b = bm.make_benchmark("burgers", nu=0.07)
    assert b.arch.layer_widths == (3,) + (50,) * 6 + (1,)
    assert b.collocation_n == 30000
    assert b.transfer.lbfgs_l_t == 1
    assert b.transfer.budget.learning_rate == 3e-3
    assert b.ensemble == 20
    assert b.constants["nu"] == 0.07
    assert b.limit.form == rel.THRESHOLD_MINUS_RESPONSE
    assert np.array_equal(b.hf_xi_grid[:, 0], np.linspace(0.0, 0.1, 5))
    assert np.array_equal(b.hf_times, np.linspace(1.0, 9.0, 8))


def test_oscillator_preset_shape():
    b = bm.make_benchmark("oscillator")
    assert b.arch.layer_widths == (3, 50, 50, 50, 50, 2)
    assert b.limit.transform is np.abs
    assert b.limit.threshold == 4.0 and b.limit.t_t == 5.0
    assert b.problem.dists[1].low == 8.8


def test_cascade_preset_shape():
    b = bm.make_benchmark("cascade", drive=0.4)
    assert b.arch.layer_widths == (14, 100, 100, 100, 100, 3)
    assert b.transfer.l_t == 1
    assert b.constants["drive"] == 0.4
    assert len(b.problem.dists) == 13
    assert b.problem.dists[-1].low == pytest.approx(1.8)


# Oracles and surrogate response closures

def test_decay_oracle_matches_closed_form():
    b = bm.make_benchmark("decay_ode")
    xi = np.array([[-2.0], [0.0]])
    out = b.oracle_response()(xi)
    assert np.allclose(out, bm.decay_hf_response(xi[:, 0], 1.0), atol=1e-14)


def test_oscillator_oracle_matches_direct_integration():
    b = bm.make_benchmark("oscillator")
    xi = np.array([[0.1, 9.0]])
    out = b.oracle_response(t_t=3.0)(xi)
    sys = solvers.OdeSystem(2, bm.oscillator_hf_rhs,
                            np.array([bm.OSCILLATOR_IC]), xi)
    ref = solvers.rk4_integrate(sys, (0.0, 3.0), 1e-3, [3.0])[0][:, 1]
    assert np.allclose(out, ref, atol=1e-14)


def test_surrogate_response_uses_network(tiny_trained_decay):
    b, params = tiny_trained_decay
    xi = np.array([[-1.5], [-0.5]])
    out = b.surrogate_response(params)(xi)
    ref = pinn.evaluate_surrogate(params, b.problem, xi,
                                  t=np.full(2, 1.0))[:, 0]
    assert np.array_equal(out, ref)


@pytest.fixture(scope="module")
def tiny_trained_decay():
    b = bm.make_benchmark("decay_ode")
    colloc = pinn.sample_collocation(b.problem, 50, seed=0)
    params, _ = pinn.train_low_fidelity(
        b.problem, b.arch, colloc, pinn.PhaseBudget(2, 1e-3, 0), seed=0)
    return b, params


# Dataset construction

def test_decay_dataset_grid_and_determinism():
    b = bm.make_benchmark("decay_ode")
    d1 = bm.build_hf_dataset(b, n_samples=4, seed=3)
    assert d1.xi.shape == (4, 1)
    assert d1.u.shape == (4, 1, 2, 1)
    assert d1.provenance != ""
    assert d1.seed == 3
    expected = bm.decay_hf_response(d1.xi[:, 0][:, None], d1.times[None, :])
    assert np.allclose(d1.u[:, 0, :, 0], expected, atol=1e-14)
    d2 = bm.build_hf_dataset(b, n_samples=4, seed=3)
    assert np.array_equal(d1.u, d2.u)
    d3 = bm.build_hf_dataset(b, n_samples=4, seed=4)
    assert not np.array_equal(d1.xi, d3.xi)


def test_oscillator_dataset_shape():
    b = bm.make_benchmark("oscillator")
    d = bm.build_hf_dataset(b, n_samples=2, times=np.array([1.0, 2.0]),
                            seed=0)
    assert d.u.shape == (2, 1, 2, 2)
    assert d.x_locs is None


def test_cascade_dataset_states_stay_in_unit_box():
    b = bm.make_benchmark("cascade")
    d = bm.build_hf_dataset(b, n_samples=2, times=np.array([3.0]), seed=1)
    assert d.u.shape == (2, 1, 1, 3)
    assert np.all((d.u >= 0.0) & (d.u <= 1.0))


def test_burgers_dataset_fixed_grid_and_sensors():
    b = bm.make_benchmark("burgers")
    d = bm.build_hf_dataset(b, times=np.array([1.0]))
    assert np.array_equal(d.xi[:, 0], np.linspace(0.0, 0.1, 5))
    assert d.u.shape == (5, 3, 1, 1)
    # wall sensors carry the exact boundary data
    assert np.allclose(d.u[:, 0, 0, 0], 1.0 + d.xi[:, 0], atol=1e-14)
    assert np.allclose(d.u[:, 2, 0, 0], -1.0, atol=1e-14)
    override = bm.build_hf_dataset(b, n_samples=3, times=np.array([1.0]),
                                   seed=5)
    assert override.xi.shape == (3, 1)


def test_dataset_time_domain_validation():
    b = bm.make_benchmark("decay_ode")
    with pytest.raises(DomainError):
        bm.build_hf_dataset(b, times=np.array([2.0]))
    with pytest.raises(DomainError):
        bm.build_hf_dataset(b, times=np.array([]))
    with pytest.raises(DomainError):
        bm.build_hf_dataset(b, n_samples=0)


def test_burgers_sensor_domain_validation():
    b = bm.make_benchmark("burgers")
    with pytest.raises(DomainError):
        bm.build_hf_dataset(b, times=np.array([1.0]),
                            x_locs=np.array([1.5]))

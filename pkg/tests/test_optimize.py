import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from knobforge import _forest_py
from knobforge._backend import BACKEND
from knobforge.knobspace import REAL, Configuration, ConfigurationSpace, Knob, normalize
from knobforge.metrics import compute_odp, compute_tes
from knobforge.optimize import TunerBudget, smac_run, vbo_run
from knobforge.optimize.acquisition import expected_improvement
from knobforge.optimize.forest import forest_fit
from knobforge.optimize.gp import gp_fit, gp_predict, gp_with_hyperparameters, log_marginal_likelihood
from knobforge.optimize.lhs import lhs_sample, lhs_unit
from knobforge.scenarios import planted_target
from knobforge.target import ImportantKnob, SimulatedTarget, SynthSurfaceSpec

# ---------------------------------------------------------------- EI


def oracle_ei(mu, var, best):
    """E[max(f - best, 0)] for f ~ N(mu, var) by quadrature."""
    sd = np.sqrt(var)
    val, _ = integrate.quad(lambda f: (f - best) * stats.norm.pdf(f, mu, sd), best, mu + 12 * sd)
    return val


@given(st.floats(-5, 5), st.floats(0.01, 4), st.floats(-5, 5))
def test_ei_matches_quadrature(mu, var, best):
    assert expected_improvement(mu, var, best) == pytest.approx(oracle_ei(mu, var, best), abs=1e-6)
    # minimization mirrors maximization
    assert expected_improvement(-mu, var, -best, maximize=False) == pytest.approx(expected_improvement(mu, var, best), abs=1e-12)


def test_ei_zero_variance_and_shape():
    assert expected_improvement(3.0, 0.0, 1.0) == 2.0
    assert expected_improvement(0.5, 0.0, 1.0) == 0.0
    out = expected_improvement(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 0.0)
    assert out.shape == (2,) and out[1] > out[0] > 0
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)


# ---------------------------------------------------------------- LHS


@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 1000))
def test_lhs_stratification(n, d, seed):
    U = lhs_unit(n, d, np.random.default_rng(seed))
    assert U.shape == (n, d) and U.min() >= 0 and U.max() < 1
    for col in U.T:
        assert sorted(np.floor(col * n).astype(int).tolist()) == list(range(n))


def test_lhs_sample_deterministic_and_legal(mixed_space):
    a = lhs_sample(mixed_space, 12, 4)
    assert a == lhs_sample(mixed_space, 12, 4)
    assert a != lhs_sample(mixed_space, 12, 5)
    for c in a:
        assert set(c) == set(mixed_space.names)
    with pytest.raises(ValueError):
        lhs_unit(0, 2, np.random.default_rng(0))


# ---------------------------------------------------------------- GP


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    X = rng.random((15, 3))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    y = (y - y.mean()) / y.std()
    theta = np.array([np.log(0.4), np.log(0.7), np.log(1.5), 0.2, np.log(1e-2)])
    _, grad = log_marginal_likelihood(theta, X, y)
    h = 1e-6
    fd = np.array(
        [
            (log_marginal_likelihood(theta + h * e, X, y, False) - log_marginal_likelihood(theta - h * e, X, y, False)) / (2 * h)
            for e in np.eye(len(theta))
        ]
    )
    np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-6)


def test_lml_oracle_direct_formula():
    rng = np.random.default_rng(2)
    X = rng.random((6, 2))
    y = rng.normal(size=6)
    ls, sf2, sn2 = np.array([0.3, 0.8]), 1.3, 0.05
    theta = np.concatenate([np.log(ls), [np.log(sf2), np.log(sn2)]])
    d2 = (((X[:, None, :] - X[None, :, :]) / ls) ** 2).sum(-1)
    K = sf2 * np.exp(-0.5 * d2) + sn2 * np.eye(6)
    expected = stats.multivariate_normal(np.zeros(6), K).logpdf(y)
    assert log_marginal_likelihood(theta, X, y, False) == pytest.approx(expected, rel=1e-10)


def test_gp_interpolates_and_reverts_to_prior():
    X = np.array([[0.1], [0.4], [0.7], [0.9]])
    y = np.array([1.0, 3.0, 2.0, 5.0])
    model = gp_with_hyperparameters(X, y, [0.2], 1.0, 1e-8)
    mean, var = gp_predict(model, X)
    np.testing.assert_allclose(mean, y, atol=1e-4)
    assert np.all(var < 1e-4)
    far_mean, far_var = gp_predict(model, [[50.0]])
    assert far_mean[0] == pytest.approx(y.mean(), abs=1e-9)
    assert far_var[0] == pytest.approx(model.signal_variance * model.y_std**2)


def test_gp_fit_recovers_quadratic():
    X = np.linspace(0, 1, 12)[:, None]
    f = lambda x: 100 * (1 - 4 * (x - 0.6) ** 2)  # noqa: E731
    model = gp_fit(X, f(X[:, 0]), seed=0)
    grid = np.linspace(0, 1, 101)[:, None]
    mean, _ = gp_predict(model, grid)
    truth = f(grid[:, 0])
    assert np.sqrt(np.mean((mean - truth) ** 2)) < 0.05 * np.ptp(truth)


def test_gp_fit_averages_duplicates_and_needs_two_points():
    X = np.array([[0.2], [0.2], [0.8]])
    model = gp_fit(X, [1.0, 3.0, 5.0])
    assert model.inputs.shape == (2, 1)
    with pytest.raises(ValueError):
        gp_fit([[0.1], [0.1]], [1.0, 2.0])


# ---------------------------------------------------------------- forest


def test_backends_build_identical_trees():
    rng = np.random.default_rng(0)
    X = rng.random((60, 5))
    y = 3 * X[:, 0] + np.where(X[:, 2] > 0.5, 2.0, 0.0) + rng.normal(0, 0.1, 60)
    ext = pytest.importorskip("knobforge._forest_ext")
    for seed in (1, 99, 2**40):
        a = _forest_py.build_tree(X, y, 3, 4, seed)
        b = ext.build_tree(X, y, 3, 4, seed)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        np.testing.assert_array_equal(_forest_py.predict_tree(*a[:5], X), ext.predict_tree(*b[:5], X))


def test_backend_selected():
    assert BACKEND in ("cython", "python")


@given(st.integers(1, 6), st.integers(0, 50))
def test_forest_min_leaf_respected(min_leaf, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((40, 3))
    y = rng.normal(size=40)
    model = forest_fit(X, y, trees_count=3, min_leaf=min_leaf, seed=seed)
    for tree in model.trees:
        assert tree.leaf_counts().min() >= min_leaf
        assert tree.count[0] == 40


def test_forest_fits_step_and_reports_spread():
    X = np.linspace(0, 1, 80)[:, None]
    y = np.where(X[:, 0] > 0.5, 10.0, 0.0)
    model = forest_fit(X, y, seed=0, feature_subsample=1.0)
    mean, var = model.predict([[0.1], [0.9]])
    assert mean[0] < 1 and mean[1] > 9
    assert np.all(var >= 0)
    assert forest_fit(X, y, seed=3).predict(X)[0].tolist() == forest_fit(X, y, seed=3).predict(X)[0].tolist()
    with pytest.raises(ValueError):
        forest_fit(X, y, min_leaf=0)


# ---------------------------------------------------------------- BO loops


def small_target(seed=0, kind="quadratic"):
    return planted_target(6, 2, seed=seed, shapes=(kind,))


@pytest.mark.parametrize("runner", [vbo_run, smac_run])
def test_bo_deterministic_and_indexed(runner):
    t1, t2 = small_target(1), small_target(1)
    h1 = runner(t1, t1.space, TunerBudget(16, 5, 3))
    h2 = runner(t2, t2.space, TunerBudget(16, 5, 3))
    assert [o.config for o in h1.observations] == [o.config for o in h2.observations]
    assert [o.iteration for o in h1.observations] == list(range(17))
    assert h1.observations[0].config == t1.space.default_configuration()
    curve = h1.best_so_far()
    assert all(a <= b for a, b in zip(curve, curve[1:]))


def test_pure_lhs_when_init_fills_budget():
    t = small_target(2)
    h = vbo_run(t, t.space, TunerBudget(8, 8, 5))
    expected = lhs_sample(t.space, 8, np.random.default_rng(5))
    assert [o.config for o in h.observations[1:]] == expected


@pytest.mark.parametrize("runner", [vbo_run, smac_run])
def test_seeding_with_optimum(runner):
    t = small_target(3)
    opt, value = t.optimum()
    h = runner(t, t.space, TunerBudget(12, 4, 0), seeds=[opt])
    assert compute_tes(h) == 1
    assert compute_odp(h) == pytest.approx(value)


def test_seeds_validated():
    t = small_target(4)
    with pytest.raises(ValueError):
        vbo_run(t, t.space, TunerBudget(5, 1), seeds=[t.space.default_configuration()] * 2)
    with pytest.raises(ValueError):
        TunerBudget(5, 6)
    with pytest.raises(ValueError):
        TunerBudget(5, 0)


def test_vbo_improves_on_one_dimensional_quadratic():
    space = ConfigurationSpace([Knob("x", REAL, 0.0, 0.0, 1.0)])
    t = SimulatedTarget(space, SynthSurfaceSpec((ImportantKnob("x", 100.0, 0.63),), base_objective=10.0))
    h = vbo_run(t, space, TunerBudget(15, 4, 0))
    assert compute_odp(h) > 0.99 * 110.0


def test_smac_interleaves_random_points():
    t = small_target(5)
    seen = []
    h = smac_run(t, t.space, TunerBudget(14, 2, 0), on_observation=seen.append)
    assert len(seen) == len(h.observations) == 15


def test_vbo_latency_minimizes():
    from knobforge.target import LATENCY

    space = ConfigurationSpace([Knob("x", REAL, 0.0, 0.0, 1.0), Knob("y", REAL, 0.0, 0.0, 1.0)])
    spec = SynthSurfaceSpec((ImportantKnob("x", 90.0, 0.5),), base_objective=10.0, objective_kind=LATENCY, latency_scale=1000.0)
    t = SimulatedTarget(space, spec)
    h = vbo_run(t, space, TunerBudget(20, 5, 1))
    assert compute_odp(h) < h.observations[0].objective
    assert compute_odp(h) < 1000.0 / 95.0


def test_normalized_configs_stay_in_cube():
    t = small_target(6)
    h = smac_run(t, t.space, TunerBudget(10, 3, 2))
    for o in h.observations:
        u = normalize(t.space, o.config)
        assert np.all((u >= 0) & (u <= 1))
        assert isinstance(o.config, Configuration)

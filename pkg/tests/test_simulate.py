import numpy as np
import pytest
from scipy import stats

from fcpqr import (AdmmConfig, SimScenario, default_test_gamma,
                   generate_dataset, run_estimation_experiment,
                   run_test_experiment)
from fcpqr.simulate import COMPONENT_NAMES, _draw_errors


def test_truth_record_values():
    sc = SimScenario(n=20, m=10, tau=0.5, error_family="gaussian", xi_effect=1.0,
                     seed=1)
    _, truth = generate_dataset(sc)
    b1, b2, b3, t1, t2 = truth.alpha_fns
    assert b1(np.array([0.5]))[0] == pytest.approx(1.0)
    assert b2(np.array([0.0]))[0] == pytest.approx(1.0)
    assert b3(np.array([0.0]))[0] == pytest.approx(1.0)
    assert t1(np.array([0.0]))[0] == pytest.approx(4.0)
    assert t2(np.array([0.0]))[0] == pytest.approx(3.0)
    assert np.array_equal(truth.gamma, [-1.0, 1.0])


def test_generate_is_pure_function_of_scenario():
    sc = SimScenario(n=30, m=6, tau=0.25, error_family="t3", seed=9)
    ds1, tr1 = generate_dataset(sc)
    ds2, tr2 = generate_dataset(sc)
    assert np.array_equal(ds1.y, ds2.y)
    assert np.array_equal(ds1.grid, ds2.grid)
    assert np.array_equal(tr1.labels, tr2.labels)


def test_xi_zero_removes_threshold_effect():
    base = dict(n=30, m=6, tau=0.5, error_family="gaussian", seed=11)
    ds0, truth0 = generate_dataset(SimScenario(xi_effect=0.0, **base))
    ds1, _ = generate_dataset(SimScenario(xi_effect=1.0, **base))
    # same draws, so the difference is exactly the labelled theta effect
    diff = ds1.y - ds0.y
    assert np.all(diff[truth0.labels == 0] == 0.0)
    assert np.all(np.abs(diff[truth0.labels == 1]).sum(axis=1) > 0)


def test_dataset_shapes_and_invariants():
    sc = SimScenario(n=25, m=7, tau=0.5, error_family="laplace", seed=3)
    ds, truth = generate_dataset(sc)
    assert ds.n == 25 and ds.m == 7 and ds.p == 3 and ds.d == 2 and ds.q == 2
    assert np.all(ds.x[:, 0] == 1.0)
    assert np.all(ds.z2[:, 0] == 1.0)
    assert np.all(np.diff(ds.grid) > 0)
    assert set(np.unique(truth.labels)) <= {0, 1}


def test_scenario_validation():
    with pytest.raises(ValueError):
        SimScenario(n=5)
    with pytest.raises(ValueError):
        SimScenario(error_family="cauchy")
    with pytest.raises(ValueError):
        SimScenario(xi_effect=-0.1)


def test_error_marginal_tau_quantile_is_zero():
    rng_grid = np.linspace(0.1, 0.9, 5)
    for family in ("gaussian", "t3", "laplace"):
        for tau in (0.25, 0.5, 0.75):
            sc = SimScenario(n=100_000, m=5, tau=tau, error_family=family, seed=13)
            rng = np.random.default_rng(sc.seed)
            e = _draw_errors(rng, sc, rng_grid)
            emp = np.quantile(e, tau, axis=0)
            assert np.max(np.abs(emp)) <= 0.02, (family, tau, emp)


def test_predictor_covariance():
    sc = SimScenario(n=100_000, m=2, tau=0.5, error_family="none", seed=17)
    ds, _ = generate_dataset(sc)
    cov = np.cov(ds.xtilde.T)
    assert np.allclose(cov, [[1.0, 0.5], [0.5, 1.0]], atol=0.02)
    assert abs(ds.z1.mean()) < 0.02
    assert abs(ds.z2[:, 1].mean() - 1.0) < 0.02


def test_error_family_moments():
    grid = np.linspace(0.05, 0.95, 4)
    n = 100_000
    sc_t = SimScenario(n=n, m=4, tau=0.5, error_family="t3", seed=19)
    e_t = _draw_errors(np.random.default_rng(5), sc_t, grid)
    # t(3) has variance 3 per point; heavy tails make the estimate noisy
    assert np.allclose(e_t.var(axis=0), 3.0, rtol=0.25)
    sc_l = SimScenario(n=n, m=4, tau=0.5, error_family="laplace", seed=19)
    e_l = _draw_errors(np.random.default_rng(6), sc_l, grid)
    cov = np.cov(e_l.T)
    truth = np.exp(-((grid[:, None] - grid[None, :]) ** 2) / 0.64)
    assert np.allclose(cov, truth, atol=0.05)
    assert np.all(stats.kurtosis(e_l, axis=0) > 0.5)


def test_default_test_gamma_split_fraction():
    gamma = default_test_gamma()
    sc = SimScenario(n=200_000, m=2, tau=0.5, error_family="none",
                     gamma0=tuple(gamma), seed=23)
    _, truth = generate_dataset(sc)
    assert truth.labels.mean() == pytest.approx(0.35, abs=0.01)


def test_estimation_experiment_determinism_and_table(tmp_path):
    cfg = AdmmConfig(tau=0.5, seed=0, max_iter=60)
    cells = [SimScenario(n=30, m=4, tau=0.5, error_family="gaussian", seed=29)]
    tilde = [3.0, 5.0]
    s1 = run_estimation_experiment(cells, cfg, reps=2, jobs=1, tilde_grid=tilde)
    s2 = run_estimation_experiment(cells, cfg, reps=2, jobs=2, tilde_grid=tilde)
    c1, c2 = s1.cells[0], s2.cells[0]
    for key in c1:
        assert c1[key] == c2[key], key
    assert c1["failed"] == 0 and not c1["partial"]
    for name in COMPONENT_NAMES:
        assert np.isfinite(c1[f"rmise_{name}_mean"])
    s1.to_delimited(tmp_path / "summary.csv")
    header = (tmp_path / "summary.csv").read_text().splitlines()[0]
    assert header.startswith("tau,n,m,dist,xi,reps,failed,partial")
    s3 = run_estimation_experiment(cells, cfg, reps=2, jobs=1, tilde_grid=tilde)
    s3.to_delimited(tmp_path / "summary2.csv")
    assert (tmp_path / "summary.csv").read_text() == (tmp_path / "summary2.csv").read_text()


def test_test_experiment_table_structure():
    cfg = AdmmConfig(tau=0.5, seed=0, max_iter=60)
    cells = [SimScenario(n=20, m=3, tau=0.5, error_family="gaussian",
                         xi_effect=xi, gamma0=tuple(default_test_gamma()), seed=31)
             for xi in (0.0, 1.0)]
    summary = run_test_experiment(cells, cfg, reps=3, b=8, alpha=0.05, jobs=2,
                                  lam_tilde=4.0)
    assert summary.kind == "power"
    assert [c["xi"] for c in summary.cells] == [0.0, 1.0]
    for cell in summary.cells:
        assert 0.0 <= cell["reject_rate"] <= 1.0
        assert np.isfinite(cell["mc_se"])
        assert cell["failed"] == 0


def test_estimation_experiment_records_failures(monkeypatch):
    import fcpqr.simulate as sim

    real_fit = sim.fit_changeplane
    calls = {"k": 0}

    def flaky(ds, cfg):
        calls["k"] += 1
        if calls["k"] % 2 == 1:
            raise RuntimeError("synthetic failure")
        return real_fit(ds, cfg)

    monkeypatch.setattr(sim, "fit_changeplane", flaky)
    cfg = AdmmConfig(tau=0.5, seed=0, max_iter=30)
    cells = [SimScenario(n=20, m=3, tau=0.5, error_family="gaussian", seed=3)]
    summary = run_estimation_experiment(cells, cfg, reps=2, jobs=1,
                                        tilde_grid=[4.0])
    cell = summary.cells[0]
    assert cell["failed"] >= 1
    assert cell["partial"] is True

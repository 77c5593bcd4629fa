import numpy as np
import pytest

from fsp import (
    Domain,
    FunctionModel,
    GaussianNoise,
    mce,
    mse,
    rate_slope_experiment,
    run_experiment,
    scenario_adversarial,
    scenario_classification,
    scenario_regression,
)
from fsp.core import rng_stream
from fsp.simulation import MemoizedNoiseModel, Scenario, fit_log_log_slope


def test_regression_truth_spot_values():
    f = scenario_regression().f_star
    assert f(np.array([[0.0, -0.3]]))[0] == 0.0
    assert f(np.array([[0.5, 0.2]]))[0] == pytest.approx(0.5 + 0.5**0.5, rel=1e-12)


def test_regression_truth_transcription():
    f = scenario_regression().f_star
    xs = scenario_regression().domain.uniform(1000, rng_stream(0, "t"))
    want = np.abs(xs[:, 0]) + np.abs(xs[:, 1] + 0.3) ** 0.5
    assert np.max(np.abs(f(xs) - want)) <= 1e-12


def test_regression_pretrained_source_covers_target():
    sc = scenario_regression()
    model = sc.make_pretrained(1000, 0)
    pts = model.points
    assert pts.min() >= -1.0 and pts.max() <= 1.0
    assert pts.min() < -0.5 and pts.max() > 0.5  # strictly wider than the target box
    assert model.bandwidth == pytest.approx(1000 ** (-0.25))


def test_classification_truth_spot_values():
    f = scenario_classification().f_star
    assert f(np.array([[0.0, 0.3]]))[0] == 0.0  # clamped at zero
    assert f(np.array([[0.8, 0.8]]))[0] == pytest.approx(0.9)  # clamped at 0.9
    xs = scenario_classification().domain.uniform(1000, rng_stream(1, "t"))
    vals = f(xs)
    want = np.clip(np.abs(xs[:, 0]) ** 0.6 + np.abs(xs[:, 1] - 0.3) ** 0.6 - 0.1, 0.0, 0.9)
    assert np.max(np.abs(vals - want)) <= 1e-12
    assert ((0.0 <= vals) & (vals <= 0.9)).all()
    assert (vals * (1 - vals)).max() <= 0.25 + 1e-12  # Bernoulli variance bound


def test_classification_pretrained_probabilities_clamped():
    sc = scenario_classification()
    model = sc.make_pretrained(500, 3)
    xs = sc.domain.uniform(200, rng_stream(2, "t"))
    preds = model.predict_batch(xs)
    assert ((preds >= 0.0) & (preds <= 1.0)).all()


def test_adversarial_model_memoizes():
    model = MemoizedNoiseModel(rng_stream(3, "noise"))
    x = np.array([[0.1, 0.2]])
    assert model.predict_batch(x)[0] == model.predict_batch(x)[0]
    a = model.predict_batch(np.array([[0.1, 0.2], [0.3, 0.4]]))
    b = model.predict_batch(np.array([[0.3, 0.4], [0.1, 0.2]]))
    assert a[0] == b[1] and a[1] == b[0]


def test_adversarial_model_moments_and_independence():
    sc = scenario_adversarial()
    model = sc.make_pretrained(1000, 4)
    xs = sc.domain.uniform(10_000, rng_stream(4, "t"))
    vals = model.predict_batch(xs)
    assert abs(vals.mean()) < 0.03
    assert 0.94 <= vals.var() <= 1.06
    truth = sc.f_star(xs)
    r = np.corrcoef(vals, truth)[0, 1]
    assert abs(r) < 0.05


def test_mse_basics_and_loop_oracle():
    f = scenario_regression().f_star
    xs = scenario_regression().domain.uniform(50, rng_stream(5, "t"))
    assert mse(lambda q: f(q), f, xs) == 0.0
    assert mse(lambda q: f(q) + 0.3, f, xs) == pytest.approx(0.09, rel=1e-12)
    rng = rng_stream(6, "t")
    preds = rng.normal(size=50)
    want = sum((float(a) - float(b)) ** 2 for a, b in zip(f(xs), preds)) / 50
    assert mse(lambda q: preds, f, xs) == pytest.approx(want, rel=1e-12)


def test_mce_threshold_convention():
    xs = np.zeros((4, 2))
    ones = np.ones(4)
    assert mce(lambda q: np.ones(len(q)), ones, xs) == 0.0
    assert mce(lambda q: np.full(len(q), 0.49), ones, xs) == 1.0
    assert mce(lambda q: np.full(len(q), 0.5), ones, xs) == 0.0  # >= 0.5 means class 1
    with pytest.raises(ValueError):
        mce(lambda q: np.ones(len(q)), np.array([0.5] * 4), xs)


def test_run_experiment_structure_and_determinism():
    sc = scenario_regression(n_test=40)
    res = run_experiment(sc, n=32, n_ptr=100, repetitions=1, seed=9)
    assert {r.method for r in res.rows} == {"single-task", "fsp", "pretrained"}
    assert len(res.rows) == 3
    assert all(np.isfinite(r.value) for r in res.rows)
    res2 = run_experiment(sc, n=32, n_ptr=100, repetitions=1, seed=9)
    assert res.rows == res2.rows  # bit-identical with a fixed seed
    with pytest.raises(ValueError):
        run_experiment(sc, methods=("nope",), repetitions=1)


def test_run_experiment_row_counts():
    sc = scenario_classification(n_test=30)
    res = run_experiment(sc, methods=("fsp",), n=32, n_ptr=80, repetitions=3, seed=2)
    assert len(res.rows) == 3
    assert res.summary()["fsp"]["reps"] == 3
    assert all(0.0 <= r.value <= 1.0 for r in res.rows)


def test_fit_log_log_slope_exact_power_law():
    ns = np.array([250, 500, 1000, 2000])
    errs = 3.7 * ns ** (-1.0 / 3.0)
    assert fit_log_log_slope(ns, errs) == pytest.approx(-1.0 / 3.0, abs=1e-10)


def test_rate_slope_degenerate_when_noiseless_and_model_is_truth():
    def f_star(xs):
        xs = np.atleast_2d(xs)
        return np.abs(xs[:, 0])

    sc = Scenario(
        name="noiseless",
        domain=Domain.cube(2),
        f_star=f_star,
        noise=GaussianNoise(0.0),
        metric="mse",
        pretrained_factory=lambda n_ptr, seed: FunctionModel(f_star),
        n_test=50,
    )
    out = rate_slope_experiment(sc, [16, 32, 64], repetitions=2, seed=0, method="fsp")
    assert out.degenerate
    assert np.isnan(out.slope)
    with pytest.raises(ValueError):
        rate_slope_experiment(sc, [16, 32], repetitions=1)


def test_rate_slope_single_task_is_negative():
    sc = scenario_regression(n_test=200)
    out = rate_slope_experiment(sc, [64, 128, 256], repetitions=4, seed=1)
    assert not out.degenerate
    assert out.slope < 0

import sys

import numpy as np
import pytest

from fsp import (
    BernoulliNoise,
    BudgetError,
    ConfigError,
    Domain,
    ExpressionModel,
    ExternalProcessModel,
    FunctionModel,
    GaussianNoise,
    KernelSmoothModel,
    PoolOracle,
    QueryError,
    SyntheticOracle,
    TableModel,
    blackbox_query,
    model_from_spec,
    rng_stream,
)

ECHO_SCRIPT = """\
import sys
sys.stdin.readline()  # DIM line
sys.stdout.write("OK\\n")
sys.stdout.flush()
for line in sys.stdin:
    if line.strip() == "":
        continue
    sys.stdout.write("1.5\\n")
    sys.stdout.flush()
"""

SUM_SCRIPT = """\
import sys
dim = int(sys.stdin.readline().split()[1])
sys.stdout.write("OK\\n")
sys.stdout.flush()
for line in sys.stdin:
    if line.strip() == "":
        continue
    vals = [float(t) for t in line.split(",")]
    sys.stdout.write(repr(sum(vals)) + "\\n")
    sys.stdout.flush()
"""


def test_constant_expression_model():
    m = ExpressionModel("0", dim=2)
    xs = rng_stream(0, "q").random((20, 2))
    assert np.array_equal(m.predict_batch(xs), np.zeros(20))


def test_expression_model_arithmetic():
    m = ExpressionModel("abs(x1) + sqrt(abs(x2 + 0.3))", dim=2)
    assert m.predict(np.array([-0.5, 0.2])) == pytest.approx(0.5 + 0.5**0.5)


def test_expression_model_rejects_unknown_names():
    with pytest.raises(ConfigError):
        ExpressionModel("__import__('os')", dim=1)
    with pytest.raises(ConfigError):
        ExpressionModel("open('x')", dim=1)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_expression_model_non_finite_raises():
    m = ExpressionModel("log(x1)", dim=1)
    with pytest.raises(QueryError):
        m.predict_batch(np.array([[0.0]]))


def test_table_model_exact_and_nearest():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    values = np.array([10.0, 20.0, 30.0])
    m = TableModel(points, values)
    assert m.predict([1.0, 0.0]) == 20.0  # stored point
    assert m.predict([0.9, 0.1]) == 20.0  # nearest neighbor
    # equidistant from all three points: lowest index wins
    assert m.predict([0.5, 0.5]) == 10.0


def test_predict_batch_matches_scalar_predict():
    xs = rng_stream(3, "pts").random((15, 2))
    models = [
        ExpressionModel("x1 * x2 - 0.5", 2),
        TableModel(xs[:5], np.arange(5.0)),
        KernelSmoothModel(xs[:10], np.arange(10.0), 0.4),
        FunctionModel(lambda a: a[:, 0] + a[:, 1] ** 2),
    ]
    for m in models:
        batch = m.predict_batch(xs)
        scalar = np.array([m.predict(x) for x in xs])
        assert np.array_equal(batch, scalar), type(m).__name__


def test_blackbox_query_domain_check():
    d = Domain.cube(2)
    m = ExpressionModel("x1", 2)
    out = blackbox_query(m, [[0.2, 0.2], [0.8, 0.1]], domain=d)
    assert out == pytest.approx([0.2, 0.8])
    with pytest.raises(Exception):
        blackbox_query(m, [[1.2, 0.0]], domain=d)


def test_kernel_smooth_model_window_mean():
    pts = np.array([[0.0], [0.1], [0.9]])
    vals = np.array([1.0, 3.0, 100.0])
    m = KernelSmoothModel(pts, vals, bandwidth=0.2)
    assert m.predict([0.05]) == pytest.approx(2.0)
    assert m.predict([0.5]) == 0.0  # empty window -> hard zero via the guard


def _external(tmp_path, script, dim):
    path = tmp_path / "stub.py"
    path.write_text(script, encoding="utf-8")
    return ExternalProcessModel([sys.executable, str(path)], dim=dim, timeout=10)


def test_external_echo_protocol(tmp_path):
    with _external(tmp_path, ECHO_SCRIPT, 2) as m:
        out = m.predict_batch(np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(out, [1.5, 1.5, 1.5])


def test_external_sum_round_trip(tmp_path):
    with _external(tmp_path, SUM_SCRIPT, 3) as m:
        xs = rng_stream(1, "ext").random((7, 3))
        out = m.predict_batch(xs)
        assert out == pytest.approx(xs.sum(axis=1))
        again = m.predict_batch(xs)
        assert np.array_equal(out, again)


def test_external_handshake_failure(tmp_path):
    bad = "import sys\nsys.stdin.readline()\nsys.stdout.write('NOPE\\n')\nsys.stdout.flush()\n"
    m = _external(tmp_path, bad, 1)
    with pytest.raises(QueryError, match="handshake"):
        m.start()
    m.close()


def test_external_malformed_reply(tmp_path):
    bad = ECHO_SCRIPT.replace("1.5", "not-a-number")
    with _external(tmp_path, bad, 1) as m:
        with pytest.raises(QueryError, match="not-a-number"):
            m.predict_batch(np.array([[0.0]]))


def test_model_spec_round_trip():
    m = TableModel([[0.0], [1.0]], [5.0, 6.0])
    m2 = model_from_spec(m.spec())
    assert m2.predict([0.9]) == 6.0
    e = ExpressionModel("x1 + 1", 1)
    assert model_from_spec(e.spec()).predict([1.0]) == 2.0


def test_gaussian_noise_law():
    noise = GaussianNoise(sigma="2*x1", dim=1)
    xs = np.full((20000, 1), 0.5)
    f = np.zeros(20000)
    y = noise.sample(f, xs, rng_stream(0, "noise"))
    assert y.std() == pytest.approx(1.0, abs=0.02)  # sigma(0.5) = 1
    assert abs(y.mean()) < 0.03


def test_bernoulli_noise_values_and_sigma():
    noise = BernoulliNoise()
    f = np.full(5000, 0.25)
    y = noise.sample(f, None, rng_stream(0, "b"))
    assert set(np.unique(y)) <= {0.0, 1.0}
    assert y.mean() == pytest.approx(0.25, abs=0.03)
    assert noise.sigma(f)[0] == pytest.approx(np.sqrt(0.25 * 0.75))
    with pytest.raises(ValueError):
        noise.sample(np.array([1.5]), None, rng_stream(0, "b"))


def test_synthetic_oracle_counts_and_domain():
    d = Domain.cube(1)
    oracle = SyntheticOracle(lambda xs: xs[:, 0], GaussianNoise(0.0), d)
    y = oracle.label(np.array([[0.25], [0.75]]), rng_stream(0, "o"))
    assert y == pytest.approx([0.25, 0.75])
    assert oracle.labels_issued == 2
    with pytest.raises(Exception):
        oracle.label(np.array([[2.0]]), rng_stream(0, "o"))


def test_pool_oracle_single_use():
    pool = PoolOracle(np.arange(6, dtype=float).reshape(3, 2), np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(pool.label_indices([0, 2]), [1.0, 3.0])
    assert pool.labels_issued == 2
    assert pool.remaining == 1
    with pytest.raises(BudgetError):
        pool.label_indices([2])
    with pytest.raises(BudgetError):
        pool.label_indices([1, 1])

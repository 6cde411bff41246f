import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from qsmih import QSMIHashing
from qsmih.benchmarks import three_blobs
from qsmih.evaluation import evaluate_codes


@pytest.fixture(scope="module")
def data():
    tr, q = three_blobs(seed=0)
    ytr = np.array([next(iter(s)) for s in tr.labels])
    yq = np.array([next(iter(s)) for s in q.labels])
    return tr.features, ytr, q.features, yq


def test_params_round_trip():
    m = QSMIHashing(n_bits=24, alpha=0.05)
    p = m.get_params()
    assert p["n_bits"] == 24 and p["alpha"] == 0.05
    c = clone(m)
    assert c.get_params() == p
    m.set_params(epochs=3)
    assert m.epochs == 3


def test_fit_transform_and_retrieval(data):
    X, y, Xq, yq = data
    m = QSMIHashing(epochs=30, random_state=0).fit(X, y)
    assert m.n_features_in_ == 2 and len(m.log_.epochs) == 30
    Y = m.transform(Xq)
    assert Y.shape == (len(Xq), 12)
    db = m.binary_codes(X, labels=y)
    qc = m.binary_codes(Xq, ids=np.arange(len(Xq)) + 10_000, labels=yq)
    rows = {r.metric: r.value for r in evaluate_codes(db, qc)}
    assert rows["mAP"] > 0.9


def test_deterministic_given_random_state(data):
    X, y, Xq, _ = data
    a = QSMIHashing(epochs=2, random_state=3).fit(X, y).transform(Xq)
    b = QSMIHashing(epochs=2, random_state=3).fit(X, y).transform(Xq)
    np.testing.assert_array_equal(a, b)


def test_not_fitted_and_shape_errors(data):
    X, y, _, _ = data
    with pytest.raises(NotFittedError):
        QSMIHashing().transform(X)
    m = QSMIHashing(epochs=1).fit(X, y)
    with pytest.raises(ValueError):
        m.transform(np.zeros((3, 5)))
    with pytest.raises(ValueError):
        QSMIHashing(epochs=1).fit(X, y[:-1])
    with pytest.raises(ValueError):
        QSMIHashing(epochs=1, measure="nope").fit(X, y)


def test_multilabel_fit():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 4))
    y = [{int(a), int(b)} for a, b in rng.integers(0, 3, (30, 2))]
    m = QSMIHashing(epochs=2, n_bits=8, batch_size=16, standardize=False).fit(X, y)
    assert m.standardizer_ is None and m.transform(X).shape == (30, 8)


def test_in_pipeline(data):
    X, y, Xq, _ = data
    pipe = make_pipeline(FunctionTransformer(), QSMIHashing(epochs=1))
    pipe.fit(X, y)
    assert pipe.transform(Xq).shape == (len(Xq), 12)

import numpy as np
import pytest

from qsmih.gradcheck import SUITES, numeric_grad, rel_error, run_gradcheck


@pytest.fixture(scope="module")
def report():
    return run_gradcheck(seed=0)


def test_all_suites_pass(report):
    assert report.passed, "\n".join(report.lines())
    assert len(report.suites) >= 4
    assert {s.name for s in report.suites} == set(SUITES)
    assert all(s.instances >= 20 for s in report.suites)


def test_tolerances(report):
    tol = {s.name: s.tolerance for s in report.suites}
    assert tol["through-network"] == 1e-4
    assert all(v == 1e-5 for k, v in tol.items() if k != "through-network")


@pytest.mark.parametrize("suite", SUITES)
def test_corruption_is_caught(suite):
    rep = run_gradcheck(seed=1, instances=2, corrupt=suite)
    failed = [s.name for s in rep.suites if not s.passed]
    assert failed == [suite]
    assert any(line.startswith(f"FAIL {suite}:") for line in rep.lines())


def test_unknown_corrupt_name():
    with pytest.raises(ValueError):
        run_gradcheck(corrupt="nope")


def test_numeric_grad_and_rel_error():
    x = np.array([1.0, -2.0, 0.5])
    g = numeric_grad(lambda: float(np.sum(x**3)), x)
    np.testing.assert_allclose(g, 3 * x**2, rtol=1e-9)
    np.testing.assert_array_equal(x, [1.0, -2.0, 0.5])
    assert rel_error(np.zeros(3), np.zeros(3)) == 0.0
    assert rel_error(np.array([1.0, 0.0]), np.array([1.0, 0.1])) == pytest.approx(0.1)

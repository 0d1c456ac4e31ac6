import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaymargin.rtds import (
    DelaySystem,
    QuasiPolynomial,
    characteristic_qp,
    qp_delay_derivatives,
    qp_eval,
)

EXAMPLE = DelaySystem([[-2.0, 0.0], [0.0, -0.9]], [[-1.0, 0.0], [-1.0, -1.0]])


def numeric_det(sys, s, tau):
    n = sys.n
    return np.linalg.det(s * np.eye(n) - sys.A0 - sys.A1 * np.exp(-s * tau))


def test_example_expansion():
    qp = characteristic_qp(EXAMPLE)
    np.testing.assert_allclose(qp.terms[0].coeffs, [1.8, 2.9, 1.0], atol=1e-12)
    np.testing.assert_allclose(qp.terms[1].coeffs, [2.9, 2.0], atol=1e-12)
    np.testing.assert_allclose(qp.terms[2].coeffs, [1.0], atol=1e-12)


def test_delay_free_scalar():
    qp = characteristic_qp(DelaySystem([[-3.0]], [[0.0]])).trimmed()
    assert qp.terms[0].coeffs == (3.0, 1.0)
    assert not qp.has_delay


def test_random_3x3_matches_numeric_det():
    rng = np.random.default_rng(10)
    sys = DelaySystem(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    qp = characteristic_qp(sys)
    for _ in range(20):
        s = complex(*rng.normal(size=2))
        tau = rng.uniform(0, 2)
        expect = numeric_det(sys, s, tau)
        assert abs(qp_eval(qp, s, tau) - expect) <= 1e-8 * max(1.0, abs(expect))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_term_count_and_degrees(n, seed):
    rng = np.random.default_rng(seed)
    sys = DelaySystem(rng.normal(size=(n, n)), rng.normal(size=(n, n)))
    qp = characteristic_qp(sys)
    assert len(qp.terms) == n + 1
    for k, p in enumerate(qp.terms):
        assert p.degree <= n - k
    s = complex(*rng.normal(size=2))
    tau = float(rng.uniform(0, 1))
    expect = numeric_det(sys, s, tau)
    assert abs(qp(s, tau) - expect) <= 1e-8 * max(1.0, abs(expect))


def test_dimension_errors():
    with pytest.raises(ValueError):
        DelaySystem(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        DelaySystem(np.zeros((2, 2)), np.zeros((3, 3)))


def test_order_guard():
    with pytest.raises(ValueError, match="expansion limit"):
        characteristic_qp(DelaySystem(np.eye(9), np.eye(9)))


def test_zero_p0_rejected():
    with pytest.raises(ValueError, match="retarded"):
        QuasiPolynomial([[0.0], [1.0]])


def test_eval_delay_free_root():
    qp = QuasiPolynomial([[1.0, 1.0]])
    for tau in (0.0, 1.0, 7.5):
        assert qp_eval(qp, -1.0, tau) == 0


def test_eval_at_example_crossing():
    qp = characteristic_qp(EXAMPLE)
    s = 0.4359j
    assert abs(qp_eval(qp, s, 6.1726)) < 1e-2 * abs(qp.terms[0](s))


def test_eval_zero_delay_is_polynomial_sum():
    rng = np.random.default_rng(11)
    qp = QuasiPolynomial([rng.normal(size=4), rng.normal(size=3), rng.normal(size=2)])
    s = complex(*rng.normal(size=2))
    assert qp_eval(qp, s, 0.0) == pytest.approx(sum(p(s) for p in qp.terms), rel=1e-12)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        qp_eval(QuasiPolynomial([[1.0, 1.0]]), 0.0, -1.0)


def test_partials_pure_polynomial():
    qp = QuasiPolynomial([[0.0, 0.0, 1.0]])
    s = 0.3 + 1.1j
    d_s, d_tau = qp_delay_derivatives(qp, s, 2.0)
    assert d_s == pytest.approx(2 * s)
    assert d_tau == 0


def test_partials_match_finite_differences():
    qp = characteristic_qp(EXAMPLE)
    s, tau = 0.43589j, 6.17258
    d_s, d_tau = qp_delay_derivatives(qp, s, tau)
    h = 1e-6
    fd_s = (qp_eval(qp, s + h, tau) - qp_eval(qp, s - h, tau)) / (2 * h)
    fd_tau = (qp_eval(qp, s, tau + h) - qp_eval(qp, s, tau - h)) / (2 * h)
    assert abs(d_s - fd_s) <= 1e-5 * abs(d_s)
    assert abs(d_tau - fd_tau) <= 1e-5 * abs(d_tau)


def test_partial_tau_at_zero_delay():
    rng = np.random.default_rng(12)
    qp = QuasiPolynomial([rng.normal(size=4), rng.normal(size=3), rng.normal(size=2)])
    s = complex(*rng.normal(size=2))
    _, d_tau = qp_delay_derivatives(qp, s, 0.0)
    assert d_tau == pytest.approx(-s * sum(k * p(s) for k, p in enumerate(qp.terms)), rel=1e-12)


def test_is_retarded():
    assert QuasiPolynomial([[1.0, 1.0], [2.0]]).is_retarded()
    assert not QuasiPolynomial([[1.0, 1.0], [2.0, 0.5]]).is_retarded()

import json
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistbad.dioph_quality import (
    BadnessCertificate,
    SystemMatrix,
    Weights,
    brute_force_minimum,
    dual_quality,
    homogeneous_quality,
    lower_estimate,
    theta_dual_apply,
    theta_row_apply,
    twisted_quality,
)
from twistbad.errors import DomainError, ValidationError
from twistbad.numeric_core import QuadraticScalar, parse_scalar


def phi():
    return (1 + mpmath.sqrt(5)) / 2


def close(a, b, tol=None):
    tol = mpmath.mpf(10) ** -40 if tol is None else tol
    return abs(mpmath.mpf(a) - mpmath.mpf(b)) < tol


def test_row_apply_examples():
    assert theta_row_apply(SystemMatrix.parse("1/2"), 0, (2,)) == 1
    th = SystemMatrix.parse("sqrt2;sqrt3")
    assert close(theta_row_apply(th, 0, (1,)).to_mpf(), mpmath.sqrt(2))
    assert theta_row_apply(SystemMatrix.parse("0.3,0.7"), 0, (2, -1)) == QuadraticScalar(Fraction(-1, 10))
    with pytest.raises(IndexError):
        theta_row_apply(th, 2, (1,))


def test_dual_apply_examples():
    th = SystemMatrix.parse("sqrt2;sqrt3")
    assert close(theta_dual_apply(th, 0, (1, 1)).to_mpf(), mpmath.sqrt(2) + mpmath.sqrt(3))
    assert theta_dual_apply(th, 0, (0, 0)) == 0
    assert theta_dual_apply(SystemMatrix.parse("0.3,0.7"), 1, (3,)) == QuadraticScalar(Fraction(21, 10))
    with pytest.raises(IndexError):
        theta_dual_apply(th, 1, (1, 1))


def test_homogeneous_examples(golden):
    th, k = golden
    assert close(homogeneous_quality(th, k, (1,)), (3 - mpmath.sqrt(5)) / 2)
    assert homogeneous_quality(SystemMatrix.parse("3/7"), k, (7,)) == 0
    th2 = SystemMatrix.parse("sqrt2;sqrt3")
    v = homogeneous_quality(th2, Weights.parse("1/2,1/2"), (1,))
    assert close(v, mpmath.sqrt(2) - 1)
    with pytest.raises(DomainError):
        homogeneous_quality(th, k, (0,))


def test_dual_examples(golden):
    th2 = SystemMatrix.parse("sqrt2;sqrt3")
    assert close(dual_quality(th2, Weights.parse("1/2,1/2"), (1, 0)), mpmath.sqrt(2) - 1)
    assert dual_quality(SystemMatrix.parse("1/2;1/3"), Weights.parse("1/2,1/2"), (2, 3)) == 0
    th, k = golden
    v = dual_quality(th, k, (2,))
    assert close(v, 2 * abs(2 * phi() - mpmath.nint(2 * phi())))
    assert mpmath.nstr(v, 8) == "0.47213595"
    with pytest.raises(DomainError):
        dual_quality(th, k, (0,))


def test_twisted_examples(golden):
    th, k = golden
    assert twisted_quality(th, k, [theta_row_apply(th, 0, (3,)) - 4], (3,)) == 0
    v1 = twisted_quality(th, k, ["0.5"], (1,))
    assert close(v1, phi() - mpmath.mpf("1.5"))
    assert mpmath.nstr(v1, 7) == "0.118034"
    v2 = twisted_quality(th, k, ["0.5"], (2,))
    assert close(v2, 2 * abs(2 * phi() - mpmath.mpf("0.5") - 3))
    assert mpmath.nstr(v2, 7) == "0.527864"


def test_lower_estimate_examples(golden):
    th, k = golden
    cert = lower_estimate("homogeneous", th, k, 10)
    assert cert.argmin_q == (1,)
    assert close(cert.gamma, (3 - mpmath.sqrt(5)) / 2)
    half = lower_estimate("homogeneous", SystemMatrix.parse("1/2"), k, 2)
    assert half.gamma == 0 and half.argmin_q == (2,)


def test_lower_estimate_root23_matches_doubled_precision():
    th, k = SystemMatrix.parse("sqrt2;sqrt3"), Weights.parse("1/2,1/2")
    cert = lower_estimate("homogeneous", th, k, 100)
    assert 0 < cert.gamma < 1
    fine = lower_estimate("homogeneous", th, k, 100, prec=100)
    assert fine.argmin_q == cert.argmin_q
    assert close(fine.gamma, cert.gamma, mpmath.mpf(10) ** -45)


def test_fibonacci_oracle(golden):
    th, k = golden
    fib = [1, 1]
    while len(fib) < 21:
        fib.append(fib[-1] + fib[-2])
    vals = [homogeneous_quality(th, k, (q,)) for q in fib[10:21]]
    assert mpmath.mpf("0.447") <= min(vals) <= mpmath.mpf("0.448")
    # the classical limit 1/sqrt(5)
    assert abs(vals[-1] - 1 / mpmath.sqrt(5)) < mpmath.mpf(10) ** -6


@pytest.mark.parametrize(
    "kind, theta, k, Q, x",
    [
        ("homogeneous", "phi", "1", 300, None),
        ("dual", "phi", "1", 300, None),
        ("twisted", "phi", "1", 200, ["0.5"]),
        ("homogeneous", "sqrt2;sqrt3", "2/3,1/3", 150, None),
        ("dual", "sqrt2;sqrt3", "2/3,1/3", 20, None),
        ("twisted", "sqrt2;sqrt3", "2/3,1/3", 100, ["sqrt5-2", "1/3"]),
        ("homogeneous", "sqrt2,sqrt3", "1", 12, None),
        ("twisted", "sqrt2,sqrt7", "1", 10, ["0.25"]),
    ],
)
def test_lower_estimate_equals_brute_force(kind, theta, k, Q, x):
    th = SystemMatrix.parse(theta)
    w = Weights.parse(k, th.m)
    cert = lower_estimate(kind, th, w, Q, x)
    best, best_q = brute_force_minimum(kind, th, w, Q, x)
    assert abs(cert.gamma - best) <= mpmath.mpf(10) ** -20
    assert cert.argmin_q == best_q


def test_lower_estimate_workers_bit_identical(golden):
    th, k = golden
    a = lower_estimate("twisted", th, k, 30000, ["sqrt2-1"], workers=1)
    b = lower_estimate("twisted", th, k, 30000, ["sqrt2-1"], workers=4)
    assert a == b
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)


def test_certificate_json_round_trip(golden):
    th, k = golden
    cert = lower_estimate("dual", th, k, 50)
    rec = json.loads(json.dumps(cert.to_json()))
    assert set(rec) == {"kind", "gamma", "Q", "argmin_q", "precision_digits"}
    assert BadnessCertificate.from_json(rec) == cert


def test_validation_errors(golden):
    th, k = golden
    with pytest.raises(ValidationError):
        Weights.parse("0.5,0.6")
    with pytest.raises(ValidationError):
        Weights.parse("1.5,-0.5")
    with pytest.raises(ValidationError):
        lower_estimate("twisted", th, k, 10)
    with pytest.raises(ValidationError):
        lower_estimate("homogeneous", th, k, 10, ["0.5"])
    with pytest.raises(ValidationError):
        lower_estimate("bogus", th, k, 10)
    with pytest.raises(ValidationError):
        lower_estimate("homogeneous", th, k, 0)
    with pytest.raises(ValidationError):
        lower_estimate("homogeneous", SystemMatrix.parse("sqrt2;sqrt3"), k, 10)
    with pytest.raises(ValidationError):
        SystemMatrix.parse("1,2;3")


# -- properties -----------------------------------------------------------------

quad = st.builds(
    lambda a, b, d, c: f"({a}+{b}*sqrt({d}))/{c}",
    st.integers(-9, 9),
    st.integers(1, 9),
    st.sampled_from([2, 3, 5, 7, 11]),
    st.integers(1, 9),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(quad, min_size=2, max_size=2), st.lists(st.integers(-500, 500), min_size=2, max_size=2))
def test_homogeneous_even_in_q(entries, q):
    if not any(q):
        q = [1, 0]
    th = SystemMatrix.parse(",".join(entries))
    k = Weights.parse("1", 2)
    assert homogeneous_quality(th, k, q) == homogeneous_quality(th, k, [-c for c in q])


@settings(max_examples=60, deadline=None)
@given(quad, st.integers(-10**5, 10**5).filter(bool))
def test_dual_matches_homogeneous_in_dimension_one(entry, q):
    th, k = SystemMatrix.parse(entry), Weights.parse("1")
    assert dual_quality(th, k, (q,)) == homogeneous_quality(th, k, (q,))


@settings(max_examples=40, deadline=None)
@given(quad, st.integers(1, 150), st.integers(1, 150))
def test_lower_estimate_antitone_in_Q(entry, Q1, Q2):
    th, k = SystemMatrix.parse(entry), Weights.parse("1")
    lo, hi = sorted((Q1, Q2))
    assert lower_estimate("homogeneous", th, k, hi).gamma <= lower_estimate("homogeneous", th, k, lo).gamma


@settings(max_examples=60, deadline=None)
@given(st.lists(quad, min_size=2, max_size=2), st.integers(-300, 300).filter(bool))
def test_twisted_at_zero_is_homogeneous(entries, q):
    th = SystemMatrix.parse(";".join(entries))
    k = Weights.parse("2/3,1/3")
    assert twisted_quality(th, k, [0, 0], (q,)) == homogeneous_quality(th, k, (q,))
    assert twisted_quality(th, k, ["0", "0"], (q,)) == homogeneous_quality(th, k, (q,))


@settings(max_examples=40, deadline=None)
@given(quad, st.integers(1, 40))
def test_twisted_vanishes_on_orbit(entry, q0):
    th, k = SystemMatrix.parse(entry), Weights.parse("1")
    x = theta_row_apply(th, 0, (q0,))
    assert twisted_quality(th, k, [x], (q0,)) == 0
    assert lower_estimate("twisted", th, k, q0, [x]).gamma == 0


def test_exact_rational_quality_is_exact():
    th = SystemMatrix.parse("1/3")
    k = Weights.parse("1")
    assert homogeneous_quality(th, k, (2,)) == 2 * mpmath.mpf(1) / 3
    assert parse_scalar("2/3") == QuadraticScalar(Fraction(2, 3))

import json
import random

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistbad.dioph_quality import Weights
from twistbad.errors import ValidationError
from twistbad.geometry import (
    CASE1,
    CASE2,
    AffineSubspace,
    LinearSubspace,
    SubspaceContext,
    angle_between,
    angle_line_to_subspace,
    compute_t,
    cos_ratio,
    lambda_ratio_target,
    lambda_scale_ratio,
    make_context,
    scale_ratio,
)


def close(a, b, tol=None):
    tol = mpmath.mpf(10) ** -40 if tol is None else tol
    return abs(mpmath.mpf(a) - mpmath.mpf(b)) < tol


def line(n, angle_from_axis0):
    """Unit vector in the (e_0, e_1) plane at the given angle from e_0."""
    v = [mpmath.mpf(0)] * n
    v[0], v[1] = mpmath.cos(angle_from_axis0), mpmath.sin(angle_from_axis0)
    return v


def test_compute_t_examples():
    assert compute_t(LinearSubspace.coordinate(3, [2])) == 0
    assert compute_t(LinearSubspace.coordinate(3, [0])) == 2
    assert compute_t(LinearSubspace.span([[0, 1, 1]])) == 1


def test_span_is_orthonormal():
    L = LinearSubspace.span([[1, 1, 0], [1, 0, 1], [2, 1, 1]])
    assert L.dim == 2
    for i, a in enumerate(L.basis):
        for j, b in enumerate(L.basis):
            assert close(mpmath.fsum(x * y for x, y in zip(a, b)), 1 if i == j else 0)
    with pytest.raises(ValidationError):
        LinearSubspace.span([[0, 0, 0]])


def test_angle_examples():
    L = LinearSubspace.span([[1, 1, 0]])
    assert close(angle_line_to_subspace([1, 1, 0], L), 0)
    assert close(angle_line_to_subspace([0, 0, 1], L), mpmath.pi / 2)
    assert close(angle_line_to_subspace([1, 0, 0], L), mpmath.pi / 4)
    assert close(angle_between([1, 0], [-1, 0]), 0)


def test_context_omega_pi_over_3():
    L = LinearSubspace.span([line(2, mpmath.pi / 3)])
    ctx = make_context(L)
    assert ctx.case == CASE2 and ctx.t == 1 and ctx.long_axis == 0
    assert close(ctx.omega, mpmath.pi / 3)
    assert close(ctx.sigma, mpmath.pi / 12)
    assert close(ctx.lam, 1 / (2 - mpmath.sqrt(3)))
    assert mpmath.nstr(ctx.lam, 8) == "3.7320508"
    target = lambda_ratio_target(ctx)
    assert close(target, 2 * mpmath.cos(mpmath.pi / 4) / mpmath.cos(5 * mpmath.pi / 12))
    assert mpmath.nstr(target, 5) == "5.4641"


def test_context_omega_pi_over_4_t4():
    L = LinearSubspace.span([[1, 1, 0, 0, 0]])
    ctx = make_context(L)
    assert ctx.t == 4 and ctx.case == CASE2
    assert close(ctx.omega, mpmath.pi / 4)
    assert close(ctx.sigma, mpmath.pi / 8)
    assert close(ctx.lam, 2 / (mpmath.sqrt(2) - 1))
    assert mpmath.nstr(ctx.lam, 8) == "4.8284271"


def test_case1_targets():
    ctx = make_context(LinearSubspace.coordinate(3, [1, 2]))
    assert ctx.case == CASE1 and ctx.t == 1
    assert lambda_ratio_target(ctx) == 2
    assert cos_ratio(ctx) == 1
    whole = make_context(LinearSubspace.coordinate(2, [0, 1]))
    assert whole.case == CASE1 and whole.t == 1


def test_t_zero_uses_unit_lambda():
    ctx = make_context(LinearSubspace.span([[1]]))
    assert ctx.t == 0 and ctx.lam == 1 and ctx.case == CASE1
    ctx3 = make_context(LinearSubspace.coordinate(3, [2]))
    assert ctx3.t == 0 and ctx3.lam == 1


def test_degenerate_omega_sentinel():
    # the long axis e_0 lies inside L but L is not Gamma_0
    L = LinearSubspace.span([[1, 0, 0], [0, 1, 1]])
    ctx = make_context(L)
    assert ctx.case == CASE2 and ctx.degenerate
    assert ctx.omega == 0
    assert close(ctx.sigma, mpmath.pi / 8)
    assert close(ctx.lam, mpmath.sqrt(2) / mpmath.tan(mpmath.pi / 8))
    # a vector within sigma of the axis can be at most sigma away from L
    assert close(cos_ratio(ctx), 1 / mpmath.cos(mpmath.pi / 8))


def test_scale_ratio_examples():
    ctx = SubspaceContext(2, 1, mpmath.pi / 3, mpmath.pi / 12, 1 / (2 - mpmath.sqrt(3)), CASE2)
    R = lambda_scale_ratio(ctx, mpmath.mpf("0.3"), Weights.parse("1/2,1/2"))
    manual = (2 * mpmath.sqrt(2) * ctx.lam / mpmath.mpf("0.3") * cos_ratio(ctx)) ** 2
    assert close(R, manual, mpmath.mpf(10) ** -35)
    assert abs(R - mpmath.mpf("9241.02")) < 0.01
    assert R > mpmath.mpf("0.3") ** -2 * ctx.lam**2
    assert close(scale_ratio(1, 2, "0.5", 1, 1), 8 * mpmath.sqrt(2))
    with pytest.raises(ValidationError):
        scale_ratio(1, 2, "1.5", 1, 1)
    with pytest.raises(ValidationError):
        lambda_scale_ratio(ctx, "0.3", Weights.parse("1/3,2/3"))


def test_context_and_subspace_json():
    L = LinearSubspace.span([[3, 2]])
    ctx = make_context(L)
    assert SubspaceContext.from_json(json.loads(json.dumps(ctx.to_json()))).case == ctx.case
    A = AffineSubspace.from_json({"ambient_dim": 2, "basis": [["3", "2"]], "offset": ["0.5", "sqrt2"]})
    assert A.direction.dim == 1
    assert close(A.offset[1], mpmath.sqrt(2))
    rec = A.to_json()
    assert rec["original"] == [["3", "2"]]
    with pytest.raises(ValidationError):
        AffineSubspace.from_json({"ambient_dim": 3, "basis": [[1, 0]]})


# -- properties -------------------------------------------------------------------


def _random_subspace(rng, n, d, zero_prefix):
    vecs = []
    for _ in range(d):
        v = [0] * zero_prefix + [rng.randint(-9, 9) for _ in range(n - zero_prefix)]
        if not any(v):
            v[-1] = 1
        vecs.append(v)
    vecs[0][zero_prefix] = rng.randint(1, 9)
    return vecs


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 5))
def test_t_invariant_under_rebasing(seed, n):
    rng = random.Random(seed)
    z = rng.randint(0, n - 1)
    d = rng.randint(1, n - z)
    vecs = _random_subspace(rng, n, d, z)
    L = LinearSubspace.span(vecs)
    # another basis: random integer combinations of the original vectors
    mixed = []
    for _ in range(L.dim * 2):
        coef = [rng.randint(-3, 3) for _ in vecs]
        mixed.append([sum(c * v[i] for c, v in zip(coef, vecs)) for i in range(n)])
    mixed = [v for v in mixed if any(v)]
    if not mixed:
        return
    L2 = LinearSubspace.span(mixed)
    if L2.dim != L.dim:
        return
    assert compute_t(L) == compute_t(L2) == n - 1 - z


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_min_angle_equivalence(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 4)
    d = rng.randint(1, n - 1)
    L = LinearSubspace.span([[rng.uniform(-1, 1) for _ in range(n)] for _ in range(d)])
    l = [rng.uniform(-1, 1) for _ in range(n)]
    exact = angle_line_to_subspace(l, L)
    with mpmath.workdps(20):
        best = mpmath.pi
        for _ in range(10_000 if d > 1 else 1):
            coef = [rng.gauss(0, 1) for _ in range(L.dim)]
            a = [sum(c * b[i] for c, b in zip(coef, L.basis)) for i in range(n)]
            best = min(best, angle_between(a, l))
    assert best >= exact - mpmath.mpf(10) ** -15
    assert best - exact < 1e-3 if d > 1 else abs(best - exact) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.01, max_value=1.55), st.integers(1, 4))
def test_sigma_and_lambda_ranges(omega, t):
    n = t + 1
    L = LinearSubspace.span([line(n, mpmath.mpf(omega))])
    ctx = make_context(L)
    assert ctx.t == t
    assert 0 < ctx.sigma < mpmath.pi / 4
    assert ctx.lam > 1
    assert lambda_ratio_target(ctx) >= 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_angle_sandwich(seed):
    rng = random.Random(seed)
    t = rng.randint(1, 3)
    n = t + 1 + rng.randint(0, 1)
    a = n - t - 1
    basis = [[rng.uniform(-1, 1) for _ in range(n)] for _ in range(rng.randint(1, t))]
    for v in basis:
        for i in range(a):
            v[i] = 0
    basis[0][a] = 1 + abs(basis[0][a])
    L = LinearSubspace.span(basis)
    ctx = make_context(L)
    if ctx.case != CASE2 or ctx.t != t:
        return
    axis = [0] * n
    axis[a] = 1
    for _ in range(50):
        # a vector in Gamma_a within sigma of the long axis
        tail = [rng.gauss(0, 1) for _ in range(t)]
        norm = mpmath.sqrt(sum(c * c for c in tail)) or 1
        theta = mpmath.mpf(rng.uniform(0, 1)) * ctx.sigma
        u = [0] * a + [mpmath.cos(theta)] + [mpmath.sin(theta) * c / norm for c in tail]
        assert angle_between(u, axis) <= ctx.sigma + mpmath.mpf(10) ** -30
        ang = angle_line_to_subspace(u, L)
        tol = mpmath.mpf(10) ** -30
        assert max(ctx.omega - ctx.sigma, 0) - tol <= ang <= ctx.omega + ctx.sigma + tol

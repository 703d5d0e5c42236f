"""Integer points in weighted parallelepipeds and the lacunary sequence built
from them.

``Pi_T(beta)`` is the set of ``(u, v)`` in ``R^n x R^m`` with
``|u_i| <= beta_i T^(m k_i)`` and ``|Theta*_j(u) - v_j| <= beta_{n+1} / T``.
Two boxes matter: the *big* box, which Minkowski's theorem forces to hold
a nonzero integer point, and the *small* box, which the dual badness
constant keeps empty.  They differ only in the long-axis slot, so the
selected vector is the big-box point with the smallest long coordinate.

Internally every routine works with weights sorted in descending order.
:func:`build_lambda` permutes inputs on the way in and back on the way out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .dioph_quality import BadnessCertificate, SystemMatrix, Weights, theta_dual_apply
from .errors import BudgetExceeded, GammaTooLarge, InvariantViolation, ValidationError
from .geometry import (
    AffineSubspace,
    LinearSubspace,
    SubspaceContext,
    angle_between,
    lambda_ratio_target,
    lambda_scale_ratio,
    make_context,
)
from .numeric_core import Precision, dist_nearest_int, fmt, resolve, to_mpf, tolerance

DEFAULT_BUDGET = 4 * 10**9
MAX_HALVINGS = 40
_EPS = 2.0**-52
_CHUNK = 1 << 20
_TWO64 = 1 << 64


@dataclass(frozen=True)
class ParallelepipedSpec:
    T: mpmath.mpf
    betas: tuple[mpmath.mpf, ...]
    theta: SystemMatrix
    k: Weights

    def __post_init__(self) -> None:
        object.__setattr__(self, "T", to_mpf(self.T))
        object.__setattr__(self, "betas", tuple(to_mpf(b) for b in self.betas))
        if not self.T >= 1:
            raise ValidationError(f"T must be >= 1, got {self.T}")
        if len(self.betas) != self.theta.n + 1:
            raise ValidationError(f"need n+1 = {self.theta.n + 1} betas, got {len(self.betas)}")
        if any(b <= 0 for b in self.betas):
            raise ValidationError("betas must be positive")

    def u_bounds(self) -> list[int]:
        return [
            int(mpmath.floor(b * self.T ** to_mpf(e)))
            for b, e in zip(self.betas, self.k.exponents)
        ]

    @property
    def radius(self) -> mpmath.mpf:
        return self.betas[-1] / self.T

    def volume(self) -> mpmath.mpf:
        vol = mpmath.mpf(1)
        for b, e in zip(self.betas, self.k.exponents):
            vol *= 2 * b * self.T ** to_mpf(e)
        return vol * (2 * self.radius) ** self.k.m

    def box_size(self) -> int:
        return math.prod(2 * b + 1 for b in self.u_bounds())


@dataclass(frozen=True, order=True)
class LatticePoint:
    u: tuple[int, ...]
    v: tuple[int, ...]

    def negate(self) -> "LatticePoint":
        return LatticePoint(tuple(-c for c in self.u), tuple(-c for c in self.v))

    @property
    def is_zero(self) -> bool:
        return not any(self.u) and not any(self.v)

    def to_json(self) -> dict:
        return {"u": list(self.u), "v": list(self.v)}


def big_box(T, theta, k, ctx: SubspaceContext, gamma) -> ParallelepipedSpec:
    """``Pi_T(1, .., 1, gamma^-m lambda^t, lambda^-1, .., lambda^-1, gamma)``."""
    a = ctx.long_axis
    g = to_mpf(gamma)
    betas = [mpmath.mpf(1)] * a + [g ** (-k.m) * ctx.lam**ctx.t] + [1 / ctx.lam] * ctx.t + [g]
    return ParallelepipedSpec(T, tuple(betas), theta, k)


def small_box(T, theta, k, ctx: SubspaceContext, gamma) -> ParallelepipedSpec:
    """``Pi_T(1, .., 1, lambda^-1, .., lambda^-1, gamma)``: kept empty by the badness constant."""
    a = ctx.long_axis
    betas = [mpmath.mpf(1)] * (a + 1) + [1 / ctx.lam] * ctx.t + [to_mpf(gamma)]
    return ParallelepipedSpec(T, tuple(betas), theta, k)


def _box_rows(bounds: Sequence[int], start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop`` (lexicographic) of the integer box ``prod [-b, b]``."""
    sides = [2 * b + 1 for b in bounds]
    idx = np.arange(start, stop, dtype=np.int64)
    cols = []
    for side, b in zip(reversed(sides), reversed(bounds)):
        cols.append(idx % side - b)
        idx //= side
    return np.stack(cols[::-1], axis=1) if cols else np.zeros((stop - start, 0), dtype=np.int64)


def _dual_values(theta: SystemMatrix, u: Sequence[int]) -> list[mpmath.mpf]:
    return [theta_dual_apply(theta, j, u).to_mpf() for j in range(theta.m)]


def _points_for_u(theta: SystemMatrix, u: tuple[int, ...], radius) -> list[LatticePoint]:
    """Every integer ``v`` with ``|Theta*_j(u) - v_j| <= radius`` (closed slab)."""
    choices = []
    for F in _dual_values(theta, u):
        lo, hi = int(mpmath.ceil(F - radius)), int(mpmath.floor(F + radius))
        choices.append([v for v in range(lo, hi + 1) if abs(F - v) <= radius])
        if not choices[-1]:
            return []
    out = [()]
    for ch in choices:
        out = [prev + (v,) for prev in out for v in ch]
    return [LatticePoint(u, v) for v in out]


def enumerate_pi(spec: ParallelepipedSpec, *, budget: int | None = DEFAULT_BUDGET, prec=None) -> list[LatticePoint]:
    """All nonzero integer points of ``Pi_T``, lexicographically sorted.

    A float pass with a rounding bound drops ``u`` whose slab cannot hold
    an integer; the rest are decided exactly.
    """
    p = resolve(prec)
    with p.context():
        bounds = spec.u_bounds()
        total = spec.box_size()
        if budget is not None and total > budget:
            raise BudgetExceeded(f"box has {total} integer u-vectors, budget is {budget}")
        radius = spec.radius
        tf = spec.theta.as_float()
        with mpmath.workdps(30):
            r_f = float(radius)
        out: list[LatticePoint] = []
        for start in range(0, total, _CHUNK):
            rows = _box_rows(bounds, start, min(total, start + _CHUNK))
            if r_f < 0.5:
                uf = rows.astype(np.float64)
                forms = uf @ tf
                mag = np.abs(uf) @ np.abs(tf)
                err = (mag + 1.0) * ((spec.theta.n + 4) * _EPS)
                d = np.abs(forms - np.rint(forms))
                rows = rows[np.all(d <= r_f * (1 + 1e-9) + err, axis=1)]
            for row in rows:
                u = tuple(int(c) for c in row)
                out.extend(pt for pt in _points_for_u(spec.theta, u, radius) if not pt.is_zero)
        out.sort()
        return out


# -- selection of w(T) ---------------------------------------------------------


@dataclass(frozen=True)
class Selection:
    point: LatticePoint
    psi: mpmath.mpf
    scanned: int = 0


def _psi(theta: SystemMatrix, u) -> mpmath.mpf:
    return max(dist_nearest_int(theta_dual_apply(theta, j, u)) for j in range(theta.m))


def _rank(sel_axis: int, theta: SystemMatrix):
    def key(pt: LatticePoint):
        return (abs(pt.u[sel_axis]), _psi(theta, pt.u), 0 if pt.u[sel_axis] > 0 else 1, pt.u, pt.v)

    return key


def _select_generic(T, theta, k, ctx, gamma, budget) -> Selection:
    a = ctx.long_axis
    spec = big_box(T, theta, k, ctx, gamma)
    pts = enumerate_pi(spec, budget=budget)
    limit = T ** to_mpf(k.exponents[a])
    for pt in pts:
        if abs(pt.u[a]) <= limit:
            raise GammaTooLarge(f"small box at T={T} holds {pt}", witness=pt)
    if not pts:
        raise InvariantViolation("Minkowski", f"big box at T={T} has no nonzero integer point")
    best = min(pts, key=_rank(a, theta))
    return Selection(best, _psi(theta, best.u), spec.box_size())


def _fixed_point(x: mpmath.mpf) -> int:
    return int(mpmath.nint((x - mpmath.floor(x)) * _TWO64)) % _TWO64


class _FastScan:
    """Meet-in-the-middle scan along the long axis.

    The other coordinates form a table of residues ``-sum u_i Theta_ij mod 1``
    held as 64-bit fixed point; for each long coordinate ``u_a`` a sorted
    lookup tells whether any table entry lies within the slab width.  The
    window is widened by the fixed-point rounding bound so no point is lost,
    and every flagged ``u_a`` is re-decided exactly.
    """

    def __init__(self, T, theta, k, ctx, gamma, budget):
        self.theta, self.k, self.ctx = theta, k, ctx
        self.a = a = ctx.long_axis
        spec = big_box(T, theta, k, ctx, gamma)
        bounds = spec.u_bounds()
        self.u_small = int(mpmath.floor(T ** to_mpf(k.exponents[a])))
        self.u_big = bounds[a]
        self.rest_bounds = bounds[:a] + bounds[a + 1 :]
        self.radius = spec.radius
        rest_size = math.prod(2 * b + 1 for b in self.rest_bounds)
        self.cost = rest_size + self.u_big + 1
        if budget is not None and self.cost > budget:
            raise BudgetExceeded(f"long-axis scan needs {self.cost} steps, budget is {budget}")
        self.rest = _box_rows(self.rest_bounds, 0, rest_size)
        m = theta.m
        self.A = [[_fixed_point(e.to_mpf()) for e in row] for row in theta.entries]
        rest_rows = [i for i in range(theta.n) if i != a]
        ru = self.rest.astype(np.uint64)
        self.tables = []
        for j in range(m):
            acc = np.zeros(rest_size, dtype=np.uint64)
            for col, i in enumerate(rest_rows):
                acc += ru[:, col] * np.uint64(self.A[i][j])
            self.tables.append(np.uint64(0) - acc)
        self.order = np.argsort(self.tables[0], kind="stable")
        self.sorted0 = self.tables[0][self.order]
        slack = 0.5 * (sum(self.rest_bounds) + self.u_big) + 4
        self.D = int(mpmath.ceil(self.radius * _TWO64 + slack))

    def flagged(self, lo: int, hi: int) -> np.ndarray:
        """Long coordinates in ``[lo, hi]`` that may carry a point."""
        ua = np.arange(lo, hi + 1, dtype=np.uint64)
        x = ua * np.uint64(self.A[self.a][0])
        D = np.uint64(self.D)
        y = x - D
        idx = np.searchsorted(self.sorted0, y)
        c = self.sorted0[idx % len(self.sorted0)]
        hit = (c - y) <= np.uint64(2 * self.D)
        return ua[hit].astype(np.int64)

    def exact_points(self, ua: int) -> list[LatticePoint]:
        D2 = np.uint64(2 * self.D)
        keep = np.ones(len(self.rest), dtype=bool)
        for j, table in enumerate(self.tables):
            x = (np.array([ua], dtype=np.uint64) * np.uint64(self.A[self.a][j]))[0]
            keep &= (x - table + np.uint64(self.D)) <= D2
        out = []
        for row in self.rest[keep]:
            u = tuple(int(c) for c in row[: self.a]) + (ua,) + tuple(int(c) for c in row[self.a :])
            out.extend(pt for pt in _points_for_u(self.theta, u, self.radius) if not pt.is_zero)
        return out

    def run(self) -> Selection:
        # the small box shares every slot but the long one: any hit here refutes gamma
        for lo in range(0, self.u_small + 1, _CHUNK):
            hi = min(self.u_small, lo + _CHUNK - 1)
            for ua in self.flagged(lo, hi):
                pts = self.exact_points(int(ua))
                if pts:
                    raise GammaTooLarge(f"small box holds {pts[0]}", witness=pts[0])
        for lo in range(self.u_small + 1, self.u_big + 1, _CHUNK):
            hi = min(self.u_big, lo + _CHUNK - 1)
            for ua in self.flagged(lo, hi):
                pts = self.exact_points(int(ua))
                if pts:
                    best = min(pts, key=_rank(self.a, self.theta))
                    return Selection(best, _psi(self.theta, best.u), int(ua) + len(self.rest))
        raise InvariantViolation("Minkowski", "big box has no nonzero integer point")


def select_w(
    T,
    theta: SystemMatrix,
    k: Weights,
    ctx: SubspaceContext,
    gamma,
    *,
    budget: int | None = DEFAULT_BUDGET,
    prec=None,
    method: str = "auto",
) -> Selection:
    """``w(T)``: the big-box point with the smallest long coordinate.

    Ties go to the smaller ``psi``, then to a positive long coordinate,
    then lexicographically.  ``k`` must be sorted descending.  Raises
    :class:`GammaTooLarge` when the small box is not empty.
    """
    if not k.sorted_descending:
        raise ValidationError("weights must be sorted in descending order")
    p = resolve(prec)
    with p.context():
        T, g = to_mpf(T), to_mpf(gamma)
        if not 0 < g < 1:
            raise ValidationError(f"gamma must lie in (0, 1), got {g}")
        if method not in ("auto", "fast", "generic"):
            raise ValidationError(f"unknown method {method!r}")
        use_fast = method == "fast" or (method == "auto" and g / T < mpmath.mpf(1) / 4)
        if use_fast and g / T >= mpmath.mpf(1) / 4:
            raise ValidationError("the fast scan needs gamma / T < 1/4")
        sel = _FastScan(T, theta, k, ctx, g, budget).run() if use_fast else _select_generic(T, theta, k, ctx, g, budget)
        _check_p2(sel, T, theta, k, ctx, g)
        return sel


def _check_p2(sel: Selection, T, theta, k, ctx, gamma) -> None:
    a = ctx.long_axis
    scale = max(
        mpmath.mpf(abs(c)) ** to_mpf(e) for c, e in zip(sel.point.u, k.dual_exponents) if c
    )
    if not sel.psi * scale >= gamma:
        raise GammaTooLarge(
            f"dual quality {sel.psi * scale} of the selected vector is below gamma={gamma}",
            witness=sel.point,
        )


# -- the sequence ----------------------------------------------------------------


@dataclass
class LambdaEntry:
    r: int
    T: mpmath.mpf
    point: LatticePoint  # original coordinate order
    psi: mpmath.mpf
    u_tilde: tuple[int, ...]  # last t+1 sorted coordinates
    u_tilde_norm: mpmath.mpf
    u_L_norm: mpmath.mpf
    slacks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "r": self.r,
            "T": fmt(self.T),
            "u": list(self.point.u),
            "v": list(self.point.v),
            "psi": fmt(self.psi),
            "u_tilde": list(self.u_tilde),
            "u_tilde_norm": fmt(self.u_tilde_norm),
            "u_L_norm": fmt(self.u_L_norm),
            "slacks": {key: fmt(v) for key, v in sorted(self.slacks.items())},
        }


@dataclass
class LambdaSequence:
    context: SubspaceContext
    gamma: mpmath.mpf
    R: mpmath.mpf
    k: Weights  # original order
    perm: tuple[int, ...]
    entries: list[LambdaEntry]
    precision_digits: int
    r_max_requested: int
    gamma_input: mpmath.mpf
    halvings: int = 0
    certificate_Q: int | None = None
    notes: list[str] = field(default_factory=list)
    sequence_slacks: dict = field(default_factory=dict)

    @property
    def r_max(self) -> int:
        return len(self.entries)

    @property
    def psi(self) -> list[mpmath.mpf]:
        return [e.psi for e in self.entries]

    @property
    def vectors(self) -> list[tuple[int, ...]]:
        return [e.point.u for e in self.entries]

    def to_json(self) -> dict:
        with mpmath.workdps(self.precision_digits):
            return {
                "context": self.context.to_json(),
                "gamma": fmt(self.gamma),
                "gamma_input": fmt(self.gamma_input),
                "gamma_halvings": self.halvings,
                "certificate_Q": self.certificate_Q,
                "R_lambda": fmt(self.R),
                "weights": self.k.to_json(),
                "perm": list(self.perm),
                "r_max_requested": self.r_max_requested,
                "r_max": self.r_max,
                "entries": [e.to_json() for e in self.entries],
                "sequence_slacks": {key: fmt(v) for key, v in sorted(self.sequence_slacks.items())},
                "notes": list(self.notes),
                "precision_digits": self.precision_digits,
            }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def gamma_from_certificate(cert: BadnessCertificate, margin="0.99") -> mpmath.mpf:
    """Strictly smaller than the certified dual minimum, and below 1."""
    if cert.kind != "dual":
        raise ValidationError("Lambda needs a dual certificate")
    if not cert.is_positive:
        raise ValidationError("dual certificate gamma is not positive")
    with mpmath.workdps(cert.precision_digits):
        return min(to_mpf(margin) * cert.gamma, to_mpf(margin))


def _require(tag: str, ok: bool, message: str, **details) -> None:
    if not ok:
        raise InvariantViolation(tag, message, **details)


def check_entry(u_sorted, psi, T, k_sorted: Weights, ctx: SubspaceContext, gamma) -> dict:
    """Every per-vector inequality, with slack ``rhs - lhs``.  Raises on failure."""
    a, t, lam, m = ctx.long_axis, ctx.t, ctx.lam, k_sorted.m
    ex = [to_mpf(e) for e in k_sorted.exponents]
    ka = to_mpf(k_sorted.k[a])
    g = to_mpf(gamma)
    ua = abs(u_sorted[a])
    sl: dict[str, mpmath.mpf] = {}
    for i in range(a):
        s = T ** ex[i] - abs(u_sorted[i])
        _require("head_coords", s >= 0, f"|u_{i}| = {abs(u_sorted[i])} exceeds T^(m k_{i})")
        sl[f"head_coords[{i}]"] = s
    s = lam**t * g ** (-m) * T ** ex[a] - ua
    _require("long_coord_upper", s >= 0, f"|u_a| = {ua} exceeds lambda^t gamma^-m T^(m k_a)")
    sl["long_coord_upper"] = s
    for i in range(a + 1, len(u_sorted)):
        s = T ** ex[i] / lam - abs(u_sorted[i])
        _require("tail_coords", s >= 0, f"|u_{i}| = {abs(u_sorted[i])} exceeds T^(m k_{i}) / lambda")
        sl[f"tail_coords[{i}]"] = s
    s = g / T - psi
    _require("dual_upper", s >= 0, f"psi = {psi} exceeds gamma / T")
    sl["dual_upper"] = s
    s = ua - T ** ex[a]
    _require("long_coord_lower", s > 0, f"|u_a| = {ua} is not above T^(m k_a)")
    sl["long_coord_lower"] = s
    powers = [mpmath.mpf(abs(c)) ** (1 / e) if c else mpmath.mpf(0) for c, e in zip(u_sorted, ex)]
    others = max((pw for i, pw in enumerate(powers) if i != a), default=mpmath.mpf(0))
    s = powers[a] - others
    _require("long_coord_dominates", s >= 0, "the long coordinate does not dominate max |u_i|^(1/(m k_i))")
    sl["long_coord_dominates"] = s
    top = max(powers)
    s1 = psi - g / top
    floor = lam ** (-t / (m * ka)) * g ** (1 + 1 / ka) / T
    s2 = g / top - floor
    _require("dual_lower", s1 >= 0 and s2 >= -tolerance() * floor, f"psi = {psi} below the lower bound chain")
    sl["dual_lower"] = s1
    sl["dual_lower_floor"] = s2
    # projection onto the last t+1 coordinates and its Euclidean size
    tail = [mpmath.mpf(c) for c in u_sorted[a:]]
    norm = mpmath.sqrt(mpmath.fsum(c * c for c in tail))
    s = norm - T ** ex[a]
    _require("tail_norm", s >= 0, f"|u~| = {norm} below T^(m k_a)")
    sl["tail_norm_low"] = s
    s = mpmath.sqrt(t + 1) * lam**t * g ** (-m) * T ** ex[a] - norm
    _require("tail_norm", s >= 0, f"|u~| = {norm} above sqrt(t+1) lambda^t gamma^-m T^(m k_a)")
    sl["tail_norm_high"] = s
    # (ou): inside the projected big box, outside the projected small box
    sl["outside_small_box"] = ua - T ** ex[a]
    _require("outside_small_box", sl["outside_small_box"] > 0, "projection lies in the small projected box")
    if t >= 1:
        axis = [1] + [0] * t
        ang = angle_between(tail, axis)
        s = ctx.sigma - ang
        _require("angle", s >= -tolerance(), f"angle {ang} to the long axis exceeds sigma = {ctx.sigma}")
        sl["angle"] = s
    return sl


def check_sequence(entries: list[LambdaEntry], ctx: SubspaceContext, R) -> dict:
    target = lambda_ratio_target(ctx)
    sl: dict[str, mpmath.mpf] = {}
    for prev, cur in zip(entries, entries[1:]):
        r = cur.r
        ratio = cur.u_tilde_norm / prev.u_tilde_norm
        _require("tail_growth", ratio >= target, f"|u~_{r}|/|u~_{r - 1}| = {ratio} below {target}")
        sl[f"tail_growth[{r}]"] = ratio - target
        ratio_L = cur.u_L_norm / prev.u_L_norm
        _require("projection_growth", ratio_L >= 2, f"|u^L_{r}|/|u^L_{r - 1}| = {ratio_L} below 2")
        sl[f"projection_growth[{r}]"] = ratio_L - 2
        _require("psi_decreasing", cur.psi < prev.psi, f"psi_{r} = {cur.psi} is not below psi_{r - 1}")
        q = prev.psi / cur.psi
        _require("psi_ratio", q <= R**2, f"psi_{r - 1}/psi_{r} = {q} exceeds R^2")
        sl[f"psi_ratio[{r}]"] = R**2 - q
    return sl


def _sort_perm(k: Weights) -> tuple[int, ...]:
    return tuple(sorted(range(k.n), key=lambda i: -k.k[i]))


def projected_cost(T, k_sorted: Weights, ctx: SubspaceContext, gamma) -> int:
    """Worst-case steps for one selection at scale ``T``."""
    a = ctx.long_axis
    g = to_mpf(gamma)
    big = g ** (-k_sorted.m) * ctx.lam**ctx.t * T ** to_mpf(k_sorted.exponents[a])
    rest = 1
    for i, e in enumerate(k_sorted.exponents):
        if i != a:
            beta = 1 if i < a else 1 / ctx.lam
            rest *= 2 * int(mpmath.floor(beta * T ** to_mpf(e))) + 1
    return int(big) + 1 + rest


def build_lambda(
    theta: SystemMatrix,
    k: Weights,
    A: AffineSubspace | LinearSubspace,
    gamma,
    r_max: int = 3,
    *,
    prec: Precision | int | None = None,
    budget: int | None = DEFAULT_BUDGET,
    certificate_Q: int | None = None,
    max_halvings: int = MAX_HALVINGS,
) -> LambdaSequence:
    """Vectors ``w_r = w(R^r)``, ``r = 1..r_max``, with every inequality checked.

    When a selection proves ``gamma`` too large the constant is halved and
    the whole sequence rebuilt.  If the last scales exceed ``budget`` the
    sequence is shortened and a note says so.
    """
    if r_max < 1:
        raise ValidationError("r_max must be >= 1")
    if theta.n != k.n or theta.m != k.m:
        raise ValidationError("Theta and weights disagree on dimensions")
    L = A.direction if isinstance(A, AffineSubspace) else A
    if L.ambient_dim != k.n:
        raise ValidationError("subspace dimension does not match n")
    p = resolve(prec)
    with p.context():
        g0 = g = to_mpf(gamma)
        if not 0 < g < 1:
            raise ValidationError(f"gamma must lie in (0, 1), got {g}")
        perm = _sort_perm(k)
        ks = k.permuted(perm)
        ths = theta.permuted_rows(perm)
        ctx = make_context(L.permuted(perm))
        notes: list[str] = []
        halvings = 0
        while True:
            R = lambda_scale_ratio(ctx, g, ks)
            r_eff = r_max
            if budget is not None:
                while r_eff >= 1 and projected_cost(R**r_eff, ks, ctx, g) > budget:
                    r_eff -= 1
                if r_eff < r_max:
                    notes.append(
                        f"r_max reduced from {r_max} to {r_eff}: worst-case cost at T_{r_eff + 1} exceeds budget {budget}"
                    )
                if r_eff < 1:
                    raise BudgetExceeded(f"even T_1 = {R} exceeds the enumeration budget")
            try:
                entries = _build_entries(ths, ks, ctx, g, R, r_eff, perm, L, budget)
                break
            except GammaTooLarge as exc:
                if halvings >= max_halvings:
                    raise
                halvings += 1
                notes.append(f"gamma {fmt(g)} refuted by {exc.witness}; halved")
                g = g / 2
        seq_slacks = check_sequence(entries, ctx, R)
        return LambdaSequence(
            ctx, g, R, k, perm, entries, p.digits, r_max, g0, halvings, certificate_Q, notes, seq_slacks
        )


def _build_entries(ths, ks, ctx, g, R, r_eff, perm, L, budget) -> list[LambdaEntry]:
    entries = []
    a = ctx.long_axis
    for r in range(1, r_eff + 1):
        T = R**r
        sel = select_w(T, ths, ks, ctx, g, budget=budget)
        u_s = sel.point.u
        slacks = check_entry(u_s, sel.psi, T, ks, ctx, g)
        u = [0] * len(u_s)
        for i, pi in enumerate(perm):
            u[pi] = u_s[i]
        tail = u_s[a:]
        entries.append(
            LambdaEntry(
                r,
                T,
                LatticePoint(tuple(u), sel.point.v),
                sel.psi,
                tuple(tail),
                mpmath.sqrt(mpmath.fsum(mpmath.mpf(c) ** 2 for c in tail)),
                L.projection_norm(u),
                slacks,
            )
        )
    return entries


def n_lambda_membership(x: Sequence, seq: LambdaSequence) -> tuple[mpmath.mpf, int]:
    """``min_r ||x . u_r||`` over the finite sequence and the first ``r`` attaining it."""
    if not seq.entries:
        raise ValidationError("empty sequence")
    with mpmath.workdps(seq.precision_digits):
        xs = [to_mpf(c) for c in x]
        best, arg = None, 0
        for e in seq.entries:
            val = dist_nearest_int(mpmath.fsum(xi * ui for xi, ui in zip(xs, e.point.u)))
            if best is None or val < best:
                best, arg = val, e.r
        return best, arg

"""Subspaces, the coordinate filtration and the angle constants of the
lacunary construction.

Coordinates are 0-based here.  ``Gamma_i`` is the subspace where the first
``i`` coordinates vanish and the distinguished coordinate line is
``e_{n-t-1}`` (the ``(n-t)``-th axis in 1-based terms).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import mpmath

from .errors import InvariantViolation, ValidationError
from .numeric_core import RealLike, fmt, parse_scalar, to_mpf, tolerance

CASE1 = "Case1"
CASE2 = "Case2"


def _dot(a, b):
    return mpmath.fsum(x * y for x, y in zip(a, b))


def _norm(a):
    return mpmath.sqrt(_dot(a, a))


@dataclass(frozen=True)
class LinearSubspace:
    """A ``d``-dimensional subspace of ``R^n`` stored with an orthonormal basis."""

    ambient_dim: int
    basis: tuple[tuple[mpmath.mpf, ...], ...]
    original: tuple[tuple[str, ...], ...] = ()

    @classmethod
    def span(cls, vectors: Sequence[Sequence[RealLike | str]]) -> "LinearSubspace":
        """Orthonormalise ``vectors`` (Gram-Schmidt, dependent vectors dropped)."""
        if not vectors:
            raise ValidationError("a subspace needs at least one spanning vector")
        n = len(vectors[0])
        if any(len(v) != n for v in vectors):
            raise ValidationError("spanning vectors have different lengths")
        tol = tolerance()
        basis: list[list[mpmath.mpf]] = []
        for v in vectors:
            w = [to_mpf(parse_scalar(c) if isinstance(c, str) else c) for c in v]
            for b in basis:
                c = _dot(w, b)
                w = [wi - c * bi for wi, bi in zip(w, b)]
            nw = _norm(w)
            if nw > tol:
                basis.append([wi / nw for wi in w])
        if not basis:
            raise ValidationError("spanning vectors are all zero")
        original = tuple(tuple(str(c) for c in v) for v in vectors)
        return cls(n, tuple(tuple(b) for b in basis), original)

    @classmethod
    def coordinate(cls, n: int, axes: Sequence[int]) -> "LinearSubspace":
        vecs = [[1 if i == a else 0 for i in range(n)] for a in axes]
        return cls.span(vecs)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def project(self, v: Sequence[RealLike]) -> list[mpmath.mpf]:
        v = [to_mpf(c) for c in v]
        out = [mpmath.mpf(0)] * self.ambient_dim
        for b in self.basis:
            c = _dot(v, b)
            out = [o + c * bi for o, bi in zip(out, b)]
        return out

    def projection_norm(self, v: Sequence[RealLike]) -> mpmath.mpf:
        v = [to_mpf(c) for c in v]
        return mpmath.sqrt(mpmath.fsum(_dot(v, b) ** 2 for b in self.basis))

    def permuted(self, perm: Sequence[int]) -> "LinearSubspace":
        """Same subspace with coordinates reordered as ``new[i] = old[perm[i]]``."""
        basis = tuple(tuple(b[p] for p in perm) for b in self.basis)
        return LinearSubspace(self.ambient_dim, basis, self.original)

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "basis": [[fmt(c) for c in b] for b in self.basis],
            "original": [list(v) for v in self.original],
        }


@dataclass(frozen=True)
class AffineSubspace:
    direction: LinearSubspace
    offset: tuple[mpmath.mpf, ...]

    @classmethod
    def from_json(cls, rec: dict) -> "AffineSubspace":
        """``{"ambient_dim", "basis", "offset"?}``; the basis need not be orthonormal."""
        basis = rec["basis"]
        n = int(rec.get("ambient_dim", len(basis[0])))
        if any(len(b) != n for b in basis):
            raise ValidationError("basis vectors do not match ambient_dim")
        L = LinearSubspace.span(basis)
        offset = rec.get("offset") or [0] * n
        if len(offset) != n:
            raise ValidationError("offset does not match ambient_dim")
        return cls(L, tuple(to_mpf(parse_scalar(c) if isinstance(c, str) else c) for c in offset))

    def to_json(self) -> dict:
        rec = self.direction.to_json()
        rec["offset"] = [fmt(c) for c in self.offset]
        return rec


@dataclass(frozen=True)
class SubspaceContext:
    """The integer ``t``, the angles ``omega``, ``sigma`` and the scale ``lambda``."""

    n: int
    t: int
    omega: mpmath.mpf
    sigma: mpmath.mpf
    lam: mpmath.mpf
    case: str
    degenerate: bool = False

    @property
    def long_axis(self) -> int:
        """0-based index of the coordinate line the construction stretches along."""
        return self.n - self.t - 1

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "t": self.t,
            "omega": fmt(self.omega),
            "sigma": fmt(self.sigma),
            "lambda": fmt(self.lam),
            "case": self.case,
            "degenerate_omega": self.degenerate,
        }

    @classmethod
    def from_json(cls, rec: dict) -> "SubspaceContext":
        return cls(
            int(rec["n"]),
            int(rec["t"]),
            mpmath.mpf(rec["omega"]),
            mpmath.mpf(rec["sigma"]),
            mpmath.mpf(rec["lambda"]),
            rec["case"],
            bool(rec.get("degenerate_omega", False)),
        )


def _first_active_coordinate(L: LinearSubspace) -> int:
    tol = tolerance()
    for j in range(L.ambient_dim):
        if any(abs(b[j]) > tol for b in L.basis):
            return j
    raise ValidationError("trivial subspace")


def compute_t(L: LinearSubspace) -> int:
    """Minimal ``t`` with ``L`` inside ``Gamma_{n-t-1}`` but not inside ``Gamma_{n-t}``."""
    return L.ambient_dim - 1 - _first_active_coordinate(L)


def angle_line_to_subspace(line: Sequence[RealLike], L: LinearSubspace) -> mpmath.mpf:
    """Smallest angle between the line through ``line`` and a nonzero vector of ``L``."""
    v = [to_mpf(c) for c in line]
    nv = _norm(v)
    if nv == 0:
        raise ValidationError("zero direction vector")
    c = L.projection_norm(v) / nv
    return mpmath.acos(min(c, mpmath.mpf(1)))


def angle_between(a: Sequence[RealLike], b: Sequence[RealLike]) -> mpmath.mpf:
    """Angle in ``[0, pi/2]`` between the lines spanned by ``a`` and ``b``."""
    a = [to_mpf(c) for c in a]
    b = [to_mpf(c) for c in b]
    c = abs(_dot(a, b)) / (_norm(a) * _norm(b))
    return mpmath.acos(min(c, mpmath.mpf(1)))


def sigma_from_omega(omega: mpmath.mpf) -> mpmath.mpf:
    return min(omega / 2, mpmath.pi / 4 - omega / 2)


def lambda_from_sigma(t: int, sigma: mpmath.mpf) -> mpmath.mpf:
    return mpmath.sqrt(t) / mpmath.tan(sigma)


def make_context(L: LinearSubspace) -> SubspaceContext:
    """Classify ``L`` and derive the constants used to shape the boxes.

    ``omega = 0`` (the long axis lies in ``L``, always so in Case 1) would
    give ``sigma = 0``; then ``sigma = pi/8`` is used, which keeps every
    downstream inequality intact.  For ``t = 0`` there are no short
    directions and ``lambda = 1``.
    """
    n = L.ambient_dim
    t = compute_t(L)
    a = n - t - 1
    axis = [1 if i == a else 0 for i in range(n)]
    case = CASE1 if L.dim == t + 1 else CASE2
    omega = mpmath.mpf(0) if case == CASE1 else angle_line_to_subspace(axis, L)
    degenerate = omega <= tolerance()
    if degenerate:
        omega = mpmath.mpf(0)
        sigma = mpmath.pi / 8
    else:
        sigma = sigma_from_omega(omega)
    if t == 0:
        lam = mpmath.mpf(1)
    else:
        lam = lambda_from_sigma(t, sigma)
        if not lam > 1:
            raise InvariantViolation("lambda_above_one", f"lambda = {lam} is not > 1")
    if not (0 < sigma < mpmath.pi / 4):
        raise InvariantViolation("sigma", f"sigma = {sigma} outside (0, pi/4)")
    return SubspaceContext(n, t, omega, sigma, lam, case, degenerate)


def cos_ratio(ctx: SubspaceContext) -> mpmath.mpf:
    """``cos(omega - sigma) / cos(omega + sigma)``, or 1 in Case 1.

    A vector within ``sigma`` of the long axis makes an angle with ``L`` in
    ``[max(omega - sigma, 0), omega + sigma]``; the lower end is clamped at 0
    so the degenerate ``omega = 0`` case gets ``1 / cos(sigma)``.
    """
    if ctx.case == CASE1:
        return mpmath.mpf(1)
    low = max(ctx.omega - ctx.sigma, mpmath.mpf(0))
    return mpmath.cos(low) / mpmath.cos(ctx.omega + ctx.sigma)


def lambda_ratio_target(ctx: SubspaceContext) -> mpmath.mpf:
    """Growth factor needed for consecutive ``|u~_r|`` so that projections onto
    ``L`` grow by at least 2."""
    return 2 * cos_ratio(ctx)


def scale_ratio(
    t: int, lam: RealLike, gamma: RealLike, m: int, k_long: RealLike, ratio: RealLike = 1
) -> mpmath.mpf:
    """``(2 sqrt(t+1) lam^t gamma^-m ratio)^(1/(m k_long))``, checked against
    the floor ``gamma^(-1/k_long) lam^(t/(m k_long))``."""
    lam, gamma, ka, ratio = (to_mpf(v) for v in (lam, gamma, k_long, ratio))
    if not 0 < gamma < 1:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    base = 2 * mpmath.sqrt(t + 1) * lam**t * gamma ** (-m) * ratio
    R = base ** (1 / (m * ka))
    floor = gamma ** (-1 / ka) * lam ** (t / (m * ka))
    if not R > floor:
        raise InvariantViolation("scale_ratio_floor", f"R = {R} does not exceed {floor}")
    return R


def lambda_scale_ratio(ctx: SubspaceContext, gamma: RealLike, k) -> mpmath.mpf:
    """Scale ratio ``R`` with ``T_r = R^r``.

    ``k`` must be sorted descending; its entry on the long axis sets the
    exponent.
    """
    if not k.sorted_descending:
        raise ValidationError("weights must be sorted in descending order")
    return scale_ratio(ctx.t, ctx.lam, gamma, k.m, k.k[ctx.long_axis], cos_ratio(ctx))

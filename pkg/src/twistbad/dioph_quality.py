"""Weighted approximation quality of a linear-form system and its infima.

For ``Theta`` an ``n x m`` matrix, weights ``k`` and a nonzero integer
vector ``q`` the three functionals are

* homogeneous: ``max_i |q|^(m k_i) ||Theta_i(q)||``
* dual:        ``max_i |q_i|^(1/(m k_i)) * max_j ||Theta*_j(q)||``
* twisted:     ``max_i |q|^(m k_i) ||Theta_i(q) - x_i||``

:func:`lower_estimate` minimises one of them over the full box
``0 < |q| <= Q``.  The search is exhaustive: a float64 pass with a
rigorous per-point rounding bound discards every ``q`` that provably
cannot be the minimum, and only the survivors are re-evaluated at the
working precision.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .errors import DomainError, ValidationError
from .numeric_core import (
    Precision,
    QuadraticScalar,
    RealLike,
    dist_nearest_int,
    fmt,
    parse_scalar,
    resolve,
    sup_norm,
    to_fraction,
    to_mpf,
    weighted_power,
)

KINDS = ("homogeneous", "dual", "twisted")

_EPS = 2.0**-52
# points per vectorised block
_CHUNK = 1 << 20


@dataclass(frozen=True)
class Weights:
    """Weights ``k_1..k_n`` (positive, summing to one) and the column count ``m``."""

    k: tuple[Fraction, ...]
    m: int = 1

    def __post_init__(self) -> None:
        k = tuple(to_fraction(v) for v in self.k)
        object.__setattr__(self, "k", k)
        if not k:
            raise ValidationError("weights need n >= 1")
        if int(self.m) != self.m or self.m < 1:
            raise ValidationError(f"m must be a positive integer, got {self.m}")
        if any(v <= 0 for v in k):
            raise ValidationError(f"weights must be positive: {[str(v) for v in k]}")
        if abs(sum(k) - 1) > Fraction(1, 10**25):
            raise ValidationError(f"weights must sum to 1, got {sum(k)}")

    @classmethod
    def parse(cls, text: str | Sequence, m: int = 1) -> "Weights":
        if isinstance(text, str):
            text = [t for t in text.replace(";", ",").split(",") if t.strip()]
        try:
            return cls(tuple(to_fraction(t) for t in text), m)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse weights {text!r}: {exc}") from exc

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def exponents(self) -> tuple[Fraction, ...]:
        """``m * k_i``."""
        return tuple(self.m * v for v in self.k)

    @property
    def dual_exponents(self) -> tuple[Fraction, ...]:
        """``1 / (m * k_i)``."""
        return tuple(1 / (self.m * v) for v in self.k)

    @property
    def sorted_descending(self) -> bool:
        return all(a >= b for a, b in zip(self.k, self.k[1:]))

    def permuted(self, perm: Sequence[int]) -> "Weights":
        return Weights(tuple(self.k[p] for p in perm), self.m)

    def to_json(self) -> dict:
        return {"k": [str(v) for v in self.k], "m": self.m}


@dataclass(frozen=True)
class SystemMatrix:
    """The ``n x m`` matrix ``Theta`` with exact quadratic-irrational entries."""

    entries: tuple[tuple[QuadraticScalar, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(parse_scalar(e) for e in row) for row in self.entries)
        if not rows or not rows[0]:
            raise ValidationError("Theta must be at least 1x1")
        if any(len(r) != len(rows[0]) for r in rows):
            raise ValidationError("Theta rows have different lengths")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def parse(cls, spec) -> "SystemMatrix":
        """Rows separated by ``;``, columns by ``,``; or a nested list."""
        if isinstance(spec, str):
            spec = [[c for c in row.split(",") if c.strip()] for row in spec.split(";") if row.strip()]
        try:
            return cls(tuple(tuple(row) for row in spec))
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def m(self) -> int:
        return len(self.entries[0])

    @property
    def is_rational(self) -> bool:
        return all(e.is_rational for row in self.entries for e in row)

    def permuted_rows(self, perm: Sequence[int]) -> "SystemMatrix":
        return SystemMatrix(tuple(self.entries[p] for p in perm))

    def as_float(self) -> np.ndarray:
        return np.array([[float(e) for e in row] for row in self.entries], dtype=np.float64)

    def as_mpf(self) -> list[list[mpmath.mpf]]:
        return [[e.to_mpf() for e in row] for row in self.entries]

    def to_json(self) -> list[list[str]]:
        return [[str(e) for e in row] for row in self.entries]


@dataclass(frozen=True)
class BadnessCertificate:
    """Minimum of a quality functional over the finite box ``0 < |q| <= Q``.

    This is an empirical bound.  It says nothing about ``|q| > Q`` and every
    consumer carries ``Q`` along with ``gamma``.
    """

    kind: str
    gamma: mpmath.mpf
    q_range: int
    argmin_q: tuple[int, ...]
    precision_digits: int
    candidates_checked: int = field(default=0, compare=False)

    @property
    def is_positive(self) -> bool:
        return self.gamma > 0

    def to_json(self) -> dict:
        with mpmath.workdps(self.precision_digits):
            return {
                "kind": self.kind,
                "gamma": fmt(self.gamma),
                "Q": self.q_range,
                "argmin_q": list(self.argmin_q),
                "precision_digits": self.precision_digits,
            }

    @classmethod
    def from_json(cls, rec: dict) -> "BadnessCertificate":
        with mpmath.workdps(int(rec["precision_digits"])):
            return cls(
                rec["kind"],
                mpmath.mpf(rec["gamma"]),
                int(rec["Q"]),
                tuple(int(v) for v in rec["argmin_q"]),
                int(rec["precision_digits"]),
            )


def _ints(q: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(c) for c in q)


def theta_row_apply(theta: SystemMatrix, i: int, q: Sequence[int]) -> QuadraticScalar:
    """``Theta_i(q) = sum_j q_j Theta_ij`` (0-based row index ``i``), exactly."""
    if not 0 <= i < theta.n:
        raise IndexError(f"row index {i} outside 0..{theta.n - 1}")
    q = _ints(q)
    if len(q) != theta.m:
        raise DomainError(f"q has length {len(q)}, expected m={theta.m}")
    acc = QuadraticScalar(0)
    for qj, e in zip(q, theta.entries[i]):
        if qj:
            acc = acc + e * qj
    return acc


def theta_dual_apply(theta: SystemMatrix, j: int, q: Sequence[int]) -> QuadraticScalar:
    """``Theta*_j(q) = sum_i q_i Theta_ij`` (0-based column index ``j``), exactly."""
    if not 0 <= j < theta.m:
        raise IndexError(f"column index {j} outside 0..{theta.m - 1}")
    q = _ints(q)
    if len(q) != theta.n:
        raise DomainError(f"q has length {len(q)}, expected n={theta.n}")
    acc = QuadraticScalar(0)
    for qi, row in zip(q, theta.entries):
        if qi:
            acc = acc + row[j] * qi
    return acc


def _check_shapes(theta: SystemMatrix, k: Weights) -> None:
    if k.n != theta.n or k.m != theta.m:
        raise ValidationError(f"weights are for {k.n}x{k.m} but Theta is {theta.n}x{theta.m}")


def _nonzero(q: Sequence[int]) -> tuple[int, ...]:
    q = _ints(q)
    if not any(q):
        raise DomainError("q must be nonzero")
    return q


def _sub(a: QuadraticScalar, x: RealLike | str):
    if isinstance(x, str):
        x = parse_scalar(x)
    if isinstance(x, (int, Fraction, QuadraticScalar)):
        return a - x
    return a.to_mpf() - to_mpf(x)


def homogeneous_quality(theta: SystemMatrix, k: Weights, q: Sequence[int]) -> mpmath.mpf:
    _check_shapes(theta, k)
    q = _nonzero(q)
    norm = sup_norm(q)
    return max(
        weighted_power(norm, e) * dist_nearest_int(theta_row_apply(theta, i, q))
        for i, e in enumerate(k.exponents)
    )


def dual_quality(theta: SystemMatrix, k: Weights, q: Sequence[int]) -> mpmath.mpf:
    _check_shapes(theta, k)
    q = _nonzero(q)
    # 0 ** (1/(m k_i)) counts as 0 so zero coordinates never dominate
    scale = max(weighted_power(abs(qi), e) if qi else mpmath.mpf(0) for qi, e in zip(q, k.dual_exponents))
    return scale * max(dist_nearest_int(theta_dual_apply(theta, j, q)) for j in range(theta.m))


def twisted_quality(
    theta: SystemMatrix, k: Weights, x: Sequence[RealLike | str], q: Sequence[int]
) -> mpmath.mpf:
    _check_shapes(theta, k)
    q = _nonzero(q)
    if len(x) != theta.n:
        raise DomainError(f"x has length {len(x)}, expected n={theta.n}")
    norm = sup_norm(q)
    return max(
        weighted_power(norm, e) * dist_nearest_int(_sub(theta_row_apply(theta, i, q), xi))
        for i, (e, xi) in enumerate(zip(k.exponents, x))
    )


# -- exhaustive search -------------------------------------------------------


def box_chunks(Q: int, dim: int, *, half: bool = False, q_min: int = 0, chunk: int = _CHUNK) -> Iterator[np.ndarray]:
    """Integer vectors ``q`` with ``q_min < |q| <= Q`` in lexicographic order.

    ``half`` keeps one representative of each pair ``+-q``: the one whose
    first nonzero coordinate is positive.
    """
    if Q < 1 or q_min >= Q:
        return
    side = 2 * Q + 1
    inner = side ** (dim - 1)
    rows_per = max(1, chunk // max(inner, 1))
    first_vals = np.arange(0 if half else -Q, Q + 1, dtype=np.int64)
    tail = None
    if dim > 1:
        tail = np.indices((side,) * (dim - 1), dtype=np.int64).reshape(dim - 1, -1).T - Q
    for start in range(0, len(first_vals), rows_per):
        heads = first_vals[start : start + rows_per]
        if dim == 1:
            block = heads[:, None]
        else:
            block = np.concatenate(
                [np.repeat(heads, len(tail))[:, None], np.tile(tail, (len(heads), 1))], axis=1
            )
        absb = np.abs(block)
        keep = absb.max(axis=1) > q_min
        if half:
            nz = block != 0
            first = np.argmax(nz, axis=1)
            lead = block[np.arange(len(block)), first]
            keep &= lead > 0
        block = block[keep]
        if len(block):
            yield block


@dataclass
class _Problem:
    kind: str
    theta_f: np.ndarray  # n x m
    abs_theta: np.ndarray
    expo: np.ndarray  # weight exponents per coordinate (float)
    x_f: np.ndarray | None
    abs_x: np.ndarray | None

    def evaluate(self, qs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Float quality and an upper bound on its absolute error, per row."""
        qf = qs.astype(np.float64)
        aq = np.abs(qf)
        if self.kind == "dual":
            forms = qf @ self.theta_f  # N x m
            mag = aq @ self.abs_theta
            terms = self.theta_f.shape[0]
        else:
            forms = qf @ self.theta_f.T  # N x n
            mag = aq @ self.abs_theta.T
            terms = self.theta_f.shape[1]
            if self.x_f is not None:
                forms = forms - self.x_f
                mag = mag + self.abs_x
        d = np.abs(forms - np.rint(forms))
        err_d = (mag + 1.0) * ((terms + 4) * _EPS)
        with np.errstate(divide="ignore"):
            if self.kind == "dual":
                w = np.where(aq > 0, aq ** self.expo, 0.0)  # N x n
                scale = w.max(axis=1)
                dd = d.max(axis=1)
                ed = err_d.max(axis=1)
                val = scale * dd
                err = scale * (ed + dd * 256 * _EPS) * 1.01
            else:
                norm = aq.max(axis=1)
                w = norm[:, None] ** self.expo  # N x n
                vals = w * d
                val = vals.max(axis=1)
                err = (w * (err_d + d * 256 * _EPS)).max(axis=1) * 1.01
        return val, err + 1e-300


def _exact_quality(kind, theta, k, x, q) -> mpmath.mpf:
    if kind == "homogeneous":
        return homogeneous_quality(theta, k, q)
    if kind == "dual":
        return dual_quality(theta, k, q)
    return twisted_quality(theta, k, x, q)


def _scan_chunk(problem: _Problem, block: np.ndarray):
    val, err = problem.evaluate(block)
    upper = float(np.min(val + err))
    lower = val - err
    return upper, block, lower


def lower_estimate(
    kind: str,
    theta: SystemMatrix,
    k: Weights,
    Q: int,
    x: Sequence[RealLike | str] | None = None,
    *,
    prec: Precision | int | None = None,
    workers: int = 1,
    q_min: int = 0,
) -> BadnessCertificate:
    """Exhaustive minimum of a quality functional over ``q_min < |q| <= Q``.

    Enumeration is lexicographic over ``[-Q, Q]^dim``.  For the even
    functionals (homogeneous and dual) only ``q`` with positive first nonzero
    coordinate are visited.  Ties go to the first ``q`` in that order.
    """
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    if int(Q) != Q or Q < 1:
        raise ValidationError(f"Q must be a positive integer, got {Q}")
    if (kind == "twisted") != (x is not None):
        raise ValidationError("x is required for kind='twisted' and only then")
    _check_shapes(theta, k)
    p = resolve(prec)
    with p.context():
        if x is not None:
            x = [parse_scalar(v) if isinstance(v, str) else v for v in x]
            if len(x) != theta.n:
                raise DomainError(f"x has length {len(x)}, expected n={theta.n}")
        tf = theta.as_float()
        if kind == "dual":
            expo = np.array([float(e) for e in k.dual_exponents])
            dim = theta.n
        else:
            expo = np.array([float(e) for e in k.exponents])
            dim = theta.m
        x_f = abs_x = None
        if x is not None:
            with mpmath.workdps(30):
                x_f = np.array([float(to_mpf(v)) for v in x])
            abs_x = np.abs(x_f)
        problem = _Problem(kind, tf, np.abs(tf), expo, x_f, abs_x)

        blocks = list(box_chunks(int(Q), dim, half=(kind != "twisted"), q_min=q_min))
        if not blocks:
            raise ValidationError(f"empty search range q_min={q_min}, Q={Q}")
        if workers > 1 and len(blocks) > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda b: _scan_chunk(problem, b), blocks))
        else:
            results = [_scan_chunk(problem, b) for b in blocks]

        upper = min(r[0] for r in results)
        candidates = np.concatenate([b[lo <= upper] for _, b, lo in results])

        best = None
        best_q: tuple[int, ...] = ()
        for row in candidates:
            q = tuple(int(c) for c in row)
            v = _exact_quality(kind, theta, k, x, q)
            if best is None or v < best:
                best, best_q = v, q
        return BadnessCertificate(kind, best, int(Q), best_q, p.digits, len(candidates))


def brute_force_minimum(kind, theta, k, Q, x=None, *, prec=None):
    """Plain exact loop over the same box; slow, used to cross-check."""
    p = resolve(prec)
    with p.context():
        dim = theta.n if kind == "dual" else theta.m
        best, best_q = None, ()
        for block in box_chunks(int(Q), dim, half=(kind != "twisted")):
            for row in block:
                q = tuple(int(c) for c in row)
                v = _exact_quality(kind, theta, k, x, q)
                if best is None or v < best:
                    best, best_q = v, q
        return best, best_q


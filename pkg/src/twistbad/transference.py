"""From ``c(x) = min_r ||u_r . x|| > 0`` to a twisted lower bound ``kappa``.

For each ``q`` the index ``r`` is picked with
``psi_{r-1} >= c / (2 m |q|) > psi_r``; the identity

    u_r . x = sum_j q_j Theta*_j(u_r) - sum_i (Theta_i(q) - x_i) u_{r,i}

and the triangle inequality then force some coordinate ``i`` to satisfy
``||Theta_i(q) - x_i|| |q|^(m k_i) >= kappa``.  A finite sequence only
reaches ``|q| < c / (2 m psi_last)``; that bound is reported as the
admissible range.  Smaller ``q`` whose threshold lies above the first
``psi`` are checked directly.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from typing import Sequence

import mpmath

from .dioph_quality import SystemMatrix, Weights, box_chunks, lower_estimate, theta_dual_apply, theta_row_apply
from .errors import DomainError, InvariantViolation, RangeExhausted, ValidationError
from .geometry import SubspaceContext
from .lattice_lambda import LambdaSequence, n_lambda_membership
from .numeric_core import QuadraticScalar, dist_nearest_int, fmt, parse_scalar, resolve, sup_norm, to_mpf

DEFAULT_CAP = 10**6


def psi_checks(psi: Sequence, R) -> dict:
    """``psi`` strictly decreasing and ``psi_{r-1} / psi_r <= R^2``; returns slacks ``R^2 / ratio``."""
    if len(psi) < 2:
        raise ValidationError("need at least two psi values")
    R2 = to_mpf(R) ** 2
    out = {}
    for r in range(1, len(psi)):
        prev, cur = to_mpf(psi[r - 1]), to_mpf(psi[r])
        if not cur < prev:
            raise InvariantViolation("psi_decreasing", f"psi[{r}] = {cur} is not below psi[{r - 1}] = {prev}", r=r)
        ratio = prev / cur
        if ratio > R2:
            raise InvariantViolation("psi_ratio", f"psi[{r - 1}]/psi[{r}] = {ratio} exceeds R^2 = {R2}", r=r)
        out[r] = R2 / ratio
    return out


def _threshold(c_x, q_norm: int, m: int):
    return to_mpf(c_x) / (2 * m * q_norm)


def choose_r(c_x, q_norm: int, psi: Sequence, m: int = 1) -> int:
    """Index ``r`` (into ``psi``) with ``psi[r-1] >= c/(2 m |q|) > psi[r]``."""
    thr = _threshold(c_x, q_norm, m)
    if thr > psi[0]:
        raise ValidationError(f"threshold {thr} lies above psi[0]; check this q directly")
    for r in range(1, len(psi)):
        if psi[r - 1] >= thr > psi[r]:
            return r
    raise RangeExhausted(
        f"|q| = {q_norm} is beyond the sequence (threshold {thr} <= last psi)",
        max_admissible_q(c_x, psi, m),
    )


def choose_r_bisect(c_x, q_norm: int, psi: Sequence, m: int = 1) -> int:
    """Same as :func:`choose_r` by binary search on the decreasing list."""
    thr = _threshold(c_x, q_norm, m)
    if thr > psi[0]:
        raise ValidationError(f"threshold {thr} lies above psi[0]; check this q directly")
    # first index with psi[r] < thr
    r = bisect.bisect_right([-v for v in psi], -thr)
    if r >= len(psi):
        raise RangeExhausted(
            f"|q| = {q_norm} is beyond the sequence (threshold {thr} <= last psi)",
            max_admissible_q(c_x, psi, m),
        )
    return r


def max_admissible_q(c_x, psi: Sequence, m: int = 1) -> int:
    """Largest ``|q|`` with ``c/(2 m |q|) > psi_last``; 0 when fewer than two ``psi``."""
    if len(psi) < 2:
        return 0
    bound = to_mpf(c_x) / (2 * m * to_mpf(psi[-1]))
    q = int(mpmath.ceil(bound)) - 1
    return max(q, 0)


def min_direct_q(c_x, psi: Sequence, m: int = 1) -> int:
    """Smallest ``|q|`` covered by the chain (threshold not above ``psi[0]``)."""
    return max(1, int(mpmath.ceil(to_mpf(c_x) / (2 * m * to_mpf(psi[0])))))


def kappa_bound(c_x, ctx: SubspaceContext, gamma, R, k: Weights) -> mpmath.mpf:
    """``(c/(2n)) min_i lambda^-t gamma^(-m(k_i - 1)) (c/(2 m R^2))^(m k_i)``."""
    c = to_mpf(c_x)
    if not c > 0:
        raise DomainError(f"c(x) must be positive, got {c}")
    g, R, m, n = to_mpf(gamma), to_mpf(R), k.m, k.n
    terms = [
        ctx.lam ** (-ctx.t) * g ** (-m * (to_mpf(ki) - 1)) * (c / (2 * m * R**2)) ** (m * to_mpf(ki))
        for ki in k.k
    ]
    return c / (2 * n) * min(terms)


def transference_identity(x: Sequence, u: Sequence[int], q: Sequence[int], theta: SystemMatrix):
    """Both sides of the identity; exact when ``x`` and ``Theta`` are exact.

    Real inputs are evaluated with guard digits covering the size of
    ``u . q``, so the gap reflects the inputs rather than cancellation.
    """
    if all(isinstance(v, QuadraticScalar) for v in x):
        return _identity_sides(x, u, q, theta, exact=True)
    scale = max(map(abs, u), default=0) * max(map(abs, q), default=0) + 1
    with mpmath.workdps(mpmath.mp.dps + len(str(scale)) + 10):
        xs = [to_mpf(v) for v in x]
        lhs, rhs = _identity_sides(xs, u, q, theta, exact=False)
    return lhs, rhs


def _identity_sides(x, u, q, theta, *, exact):
    lhs = sum((xi * ui for xi, ui in zip(x, u)), QuadraticScalar(0) if exact else mpmath.mpf(0))
    rhs = QuadraticScalar(0) if exact else mpmath.mpf(0)
    for j, qj in enumerate(q):
        d = theta_dual_apply(theta, j, u) * qj
        rhs = rhs + (d if exact else d.to_mpf())
    for i, ui in enumerate(u):
        f = theta_row_apply(theta, i, q)
        diff = (f - x[i]) if exact else (f.to_mpf() - x[i])
        rhs = rhs - diff * ui
    return lhs, rhs


@dataclass
class TransferenceReport:
    c_x: mpmath.mpf
    c_x_r: int
    kappa_transfer: mpmath.mpf
    Q_checked: int
    Q_admissible: int
    chain_range: tuple[int, int]
    worst_q: tuple[int, ...]
    worst_value: mpmath.mpf | None
    per_q_r_choices: list[dict] = field(default_factory=list)
    counterexamples: list[dict] = field(default_factory=list)
    identity_max_error: mpmath.mpf = mpmath.mpf(0)
    q_total: int = 0
    beyond_admissible: bool = False
    precision_digits: int = 50
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.counterexamples and self.kappa_transfer > 0

    def to_json(self) -> dict:
        with mpmath.workdps(self.precision_digits):
            return {
                "c_x": fmt(self.c_x),
                "c_x_argmin_r": self.c_x_r,
                "kappa_transfer": fmt(self.kappa_transfer),
                "kappa_note": "derived constant: chain bound combined with the coordinate bound on u_r",
                "Q_checked": self.Q_checked,
                "Q_admissible": self.Q_admissible,
                "chain_range": list(self.chain_range),
                "beyond_admissible": self.beyond_admissible,
                "q_total": self.q_total,
                "worst_q": list(self.worst_q),
                "worst_value": fmt(self.worst_value) if self.worst_value is not None else None,
                "identity_max_error": fmt(self.identity_max_error),
                "per_q_r_choices": self.per_q_r_choices,
                "counterexamples": self.counterexamples,
                "passed": self.passed,
                "warnings": self.warnings,
                "precision_digits": self.precision_digits,
            }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _twisted_terms(theta, k, x, q):
    norm = sup_norm(q)
    dists = [dist_nearest_int(theta_row_apply(theta, i, q).to_mpf() - x[i]) for i in range(theta.n)]
    return dists, [d * mpmath.mpf(norm) ** to_mpf(e) for d, e in zip(dists, k.exponents)]


def verify_fact_a(
    x: Sequence,
    seq: LambdaSequence,
    theta: SystemMatrix,
    k: Weights,
    Q: int | None = None,
    *,
    prec=None,
    cap: int = DEFAULT_CAP,
    allow_beyond: bool = False,
    record_limit: int = 200,
) -> TransferenceReport:
    """Check the identity, the triangle chain and the final bound for ``0 < |q| <= Q``.

    ``Q`` defaults to the admissible range.  A larger ``Q`` needs
    ``allow_beyond``; the chain is then only checked where it applies and
    the final bound everywhere, which is how negative controls are run.
    """
    p = resolve(prec)
    if theta.n != k.n or theta.m != k.m or seq.k.n != k.n:
        raise ValidationError("Theta, weights and sequence disagree on dimensions")
    with p.context():
        xs = [parse_scalar(v) if isinstance(v, str) else v for v in x]
        x_mp = [to_mpf(v) for v in xs]
        c_x, c_r = n_lambda_membership(x_mp, seq)
        psi = seq.psi
        m, n = k.m, k.n
        kappa = kappa_bound(c_x, seq.context, seq.gamma, seq.R, k) if c_x > 0 else mpmath.mpf(0)
        q_adm = max_admissible_q(c_x, psi, m) if c_x > 0 else 0
        q_lo = min_direct_q(c_x, psi, m) if c_x > 0 else 1
        report = TransferenceReport(
            c_x, c_r, kappa, 0, q_adm, (q_lo, q_adm), (), None, precision_digits=p.digits
        )
        if not c_x > 0:
            report.counterexamples.append({"check": "c_x", "detail": "c(x) is zero on the sequence"})
            return report
        if q_adm < 1:
            report.warnings.append("empty admissible range: the chain needs at least two psi values")
        Q = q_adm if Q is None else int(Q)
        if Q > q_adm and not allow_beyond:
            raise ValidationError(f"Q = {Q} exceeds the admissible range {q_adm}")
        report.beyond_admissible = Q > q_adm
        report.Q_checked = Q
        if Q < 1:
            return report
        if (2 * Q + 1) ** m > cap:
            raise ValidationError(f"box of size {(2 * Q + 1) ** m} exceeds cap {cap}")

        # (c) over the whole box, via the exhaustive twisted minimum
        cert = lower_estimate("twisted", theta, k, Q, xs, prec=p)
        report.worst_q, report.worst_value = cert.argmin_q, cert.gamma
        if not cert.gamma >= kappa:
            report.counterexamples.append(
                {"check": "c", "q": list(cert.argmin_q), "value": fmt(cert.gamma), "kappa": fmt(kappa)}
            )

        # (a) and (b) per q, identity at doubled precision
        fine = p.doubled()
        ident_tol = mpmath.mpf(10) ** (-(p.digits - 10))
        for block in box_chunks(Q, m):
            for row in block:
                q = tuple(int(c) for c in row)
                report.q_total += 1
                qn = sup_norm(q)
                thr = _threshold(c_x, qn, m)
                if thr > psi[0] or qn > q_adm:
                    continue
                r_idx = choose_r(c_x, qn, psi, m)
                entry = seq.entries[r_idx]
                u = entry.point.u
                with fine.context():
                    lhs, rhs = transference_identity([to_mpf(v) for v in xs], u, q, theta)
                    err = abs(lhs - rhs)
                report.identity_max_error = max(report.identity_max_error, +err)
                if err > ident_tol:
                    report.counterexamples.append({"check": "a", "q": list(q), "error": fmt(err)})
                dists, _ = _twisted_terms(theta, k, x_mp, q)
                rhs_b = m * entry.psi * qn + n * max(d * abs(ui) for d, ui in zip(dists, u))
                if not c_x <= rhs_b * (1 + ident_tol):
                    report.counterexamples.append(
                        {"check": "b", "q": list(q), "r": entry.r, "c_x": fmt(c_x), "bound": fmt(rhs_b)}
                    )
                if len(report.per_q_r_choices) < record_limit:
                    report.per_q_r_choices.append(
                        {"q": list(q), "r": entry.r, "psi_prev": fmt(psi[r_idx - 1]), "psi_r": fmt(psi[r_idx])}
                    )
        return report

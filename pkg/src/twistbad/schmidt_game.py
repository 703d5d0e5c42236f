"""Alice's 1/4-winning strategy in the Schmidt game on a planar projection of
a curve, with runtime checks of both structural facts the strategy relies on.

The game lives on ``f_1(I)``.  Stage ``s`` handles the pairs ``(p, q)`` with
``R^(s-1) < |q| <= R^s``; Alice's interval ``A_s`` must avoid every
dangerous interval ``Delta(p, q)`` from that stage.  Because the game is
finite here, every guarantee is conditional on the homogeneous certificate
that supplies ``c`` and on the range it was computed over.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import mpmath
import numpy as np

from .dioph_quality import (
    BadnessCertificate,
    SystemMatrix,
    Weights,
    box_chunks,
    lower_estimate,
    theta_row_apply,
)
from .errors import (
    BudgetExceeded,
    CurveSpecError,
    Fact1Violation,
    Fact2Violation,
    InvariantViolation,
    ValidationError,
)
from .numeric_core import Precision, fmt, resolve, sup_norm, to_fraction, to_mpf, tolerance

ALPHA = Fraction(1, 4)
BOB_STRATEGIES = ("adversary", "center", "seeded_random")
DEFAULT_BUDGET = 10**8
_EPS = 2.0**-52
_KAPPA_GRID = 10_000
_BISECT_STEPS = 200
# relative resolution of the hull search for Delta
_HULL_DEPTH = 34
_AVOID_DEPTH = 80
_AVOID_REL = mpmath.mpf(10) ** -9


@dataclass(frozen=True)
class Interval:
    lo: mpmath.mpf
    hi: mpmath.mpf

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", to_mpf(self.lo))
        object.__setattr__(self, "hi", to_mpf(self.hi))
        if self.lo > self.hi:
            raise ValidationError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> mpmath.mpf:
        return self.hi - self.lo

    @property
    def center(self) -> mpmath.mpf:
        return (self.lo + self.hi) / 2

    def contains(self, other: "Interval", tol=0) -> bool:
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def meets_open(self, other: "Interval") -> bool:
        """Does this closed interval meet the open interval ``other``?"""
        return other.lo < self.hi and other.hi > self.lo

    def to_json(self) -> list[str]:
        return [fmt(self.lo), fmt(self.hi)]


# -- curves ------------------------------------------------------------------


def _poly(coeffs: Sequence[Fraction], x):
    acc = mpmath.mpf(0)
    for c in reversed(coeffs):
        acc = acc * x + to_mpf(c)
    return acc


def _dpoly(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    return tuple(i * c for i, c in enumerate(coeffs))[1:] or (Fraction(0),)


@dataclass(frozen=True)
class CurveSpec:
    """Polynomial curve ``x -> (f_1(x), ..., f_n(x))`` on ``[a, b]``.

    Each component is a tuple of coefficients in ascending powers.
    ``kappa`` bounds ``|f_i(x) - f_i(x')| / |f_1(x) - f_1(x')|``; when not
    given it is estimated on a grid and inflated by 10%.
    """

    name: str
    components: tuple[tuple[Fraction, ...], ...]
    interval: tuple[Fraction, Fraction] = (Fraction(0), Fraction(1))
    kappa: mpmath.mpf | None = None

    def __post_init__(self) -> None:
        comps = tuple(tuple(to_fraction(c) for c in comp) for comp in self.components)
        if not comps:
            raise CurveSpecError("a curve needs at least one component")
        object.__setattr__(self, "components", comps)
        a, b = (to_fraction(v) for v in self.interval)
        if not a < b:
            raise CurveSpecError(f"interval [{a}, {b}] is degenerate")
        object.__setattr__(self, "interval", (a, b))
        self._check_monotone()
        kappa = self.estimate_kappa() if self.kappa is None else to_mpf(self.kappa)
        if kappa < 1:
            raise CurveSpecError(f"kappa must be >= 1, got {kappa}")
        object.__setattr__(self, "kappa", kappa)

    # construction

    @classmethod
    def builtin(cls, name: str, kappa=None) -> "CurveSpec":
        if name == "identity":
            comps = ((0, 1),)
        elif name == "parabola":
            comps = ((0, 1), (0, 0, 1))
        elif name == "cubic":
            comps = ((0, 1), (0, 0, 1), (0, 0, 0, 1))
        else:
            raise CurveSpecError(f"unknown built-in curve {name!r}")
        return cls(name, comps, kappa=kappa)

    @classmethod
    def from_json(cls, rec: dict | str) -> "CurveSpec":
        """``"parabola"`` or ``{"name", "components": [[c0, c1, ...], ...],
        "interval"?: [a, b], "kappa"?}``."""
        if isinstance(rec, str):
            return cls.builtin(rec)
        if "components" not in rec:
            return cls.builtin(rec["name"], rec.get("kappa"))
        kappa = rec.get("kappa")
        return cls(
            rec.get("name", "custom"),
            tuple(tuple(comp) for comp in rec["components"]),
            tuple(rec.get("interval", (0, 1))),
            mpmath.mpf(kappa) if kappa is not None else None,
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "components": [[str(c) for c in comp] for comp in self.components],
            "interval": [str(v) for v in self.interval],
            "kappa": fmt(self.kappa),
        }

    # geometry

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def f1_is_identity(self) -> bool:
        return self.components[0] in ((0, 1), (Fraction(0), Fraction(1)))

    def _grid(self):
        a, b = (float(v) for v in self.interval)
        xs = np.linspace(a, b, _KAPPA_GRID + 1)
        vals = [np.polyval([float(c) for c in reversed(comp)], xs) for comp in self.components]
        ders = [np.polyval([float(c) for c in reversed(_dpoly(comp))], xs) for comp in self.components]
        return xs, vals, ders

    def _check_monotone(self) -> None:
        _, vals, _ = self._grid()
        steps = np.diff(vals[0])
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise CurveSpecError("f_1 is not strictly monotone on the interval")
        object.__setattr__(self, "_increasing", bool(steps[0] > 0))

    def estimate_kappa(self) -> mpmath.mpf:
        _, _, ders = self._grid()
        d1 = np.abs(ders[0])
        if np.any(d1 == 0):
            raise CurveSpecError("f_1' vanishes on the grid; the curve is degenerate there")
        ratio = max(float(np.max(np.abs(d) / d1)) for d in ders)
        return max(mpmath.mpf(1), mpmath.mpf(ratio) * mpmath.mpf("1.1"))

    def f(self, x) -> list[mpmath.mpf]:
        x = to_mpf(x)
        return [_poly(comp, x) for comp in self.components]

    def f1(self, x) -> mpmath.mpf:
        return _poly(self.components[0], to_mpf(x))

    @property
    def image(self) -> Interval:
        a, b = (self.f1(v) for v in self.interval)
        return Interval(min(a, b), max(a, b))

    def f1_inverse(self, y) -> mpmath.mpf:
        """Bisection for ``f_1(x) = y``; at most 200 halvings."""
        y = to_mpf(y)
        if self.f1_is_identity:
            return y
        img = self.image
        tol = tolerance()
        if not img.lo - tol <= y <= img.hi + tol:
            raise CurveSpecError(f"{y} lies outside f_1(I)")
        lo, hi = (to_mpf(v) for v in self.interval)
        sign = 1 if self._increasing else -1
        for _ in range(_BISECT_STEPS):
            mid = (lo + hi) / 2
            if sign * (self.f1(mid) - y) < 0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * tol:
                break
        x = (lo + hi) / 2
        if abs(self.f1(x) - y) > tol:
            raise CurveSpecError(f"inversion of f_1 did not converge at y={y}")
        return x

    def point(self, y) -> list[mpmath.mpf]:
        """Curve point whose first coordinate is ``y``."""
        return self.f(self.f1_inverse(y))


# -- configuration -----------------------------------------------------------


def game_ratio(beta, k: Weights) -> mpmath.mpf:
    """``R = (4 / beta)^(1 / (m k_1))``."""
    return (4 / to_mpf(beta)) ** (1 / (k.m * to_mpf(k.k[0])))


@dataclass(frozen=True)
class GameConfig:
    beta: mpmath.mpf
    B0: Interval
    c_hom: mpmath.mpf
    epsilon: mpmath.mpf
    R_game: mpmath.mpf
    certificate_Q: int = 0
    alpha: Fraction = ALPHA

    @classmethod
    def build(
        cls,
        curve: CurveSpec,
        k: Weights,
        beta,
        c_hom,
        *,
        certificate_Q: int = 0,
        b0_center=None,
        b0_fraction="0.9",
        eps_fraction="0.9",
        prec: Precision | int | None = None,
    ) -> "GameConfig":
        """Largest admissible ``B_0`` and ``epsilon`` scaled by the given fractions."""
        with resolve(prec).context():
            return cls._build(curve, k, beta, c_hom, certificate_Q, b0_center, b0_fraction, eps_fraction)

    @classmethod
    def _build(cls, curve, k, beta, c_hom, certificate_Q, b0_center, b0_fraction, eps_fraction):
        beta, c = to_mpf(beta), to_mpf(c_hom)
        if not 0 < beta < 1:
            raise ValidationError(f"beta must lie in (0, 1), got {beta}")
        f_b, f_e = to_mpf(b0_fraction), to_mpf(eps_fraction)
        if not (0 < f_b < 1 and 0 < f_e < 1):
            raise ValidationError("b0_fraction and eps_fraction must lie in (0, 1)")
        img = curve.image
        width = min(f_b * c / (2 * curve.kappa), img.length)
        center = img.center if b0_center is None else to_mpf(b0_center)
        lo = min(max(center - width / 2, img.lo), img.hi - width)
        B0 = Interval(lo, lo + width)
        R = game_ratio(beta, k)
        eps = f_e * B0.length / (4 * R ** (k.m * to_mpf(k.k[0])))
        cfg = cls(beta, B0, c, eps, R, certificate_Q)
        cfg.validate(curve, k)
        return cfg

    @classmethod
    def from_certificate(
        cls, curve: CurveSpec, k: Weights, beta, cert: BadnessCertificate, *, margin="0.99", **kw
    ) -> "GameConfig":
        """Use ``c = margin * gamma`` (capped below 1) from a homogeneous certificate."""
        if cert.kind != "homogeneous":
            raise ValidationError("the game needs a homogeneous certificate")
        if not cert.is_positive:
            raise ValidationError(f"certificate gamma {cert.gamma} is not positive")
        with mpmath.workdps(cert.precision_digits):
            c = min(to_mpf(margin) * cert.gamma, to_mpf(margin))
        kw.setdefault("prec", cert.precision_digits)
        return cls.build(curve, k, beta, c, certificate_Q=cert.q_range, **kw)

    def validate(self, curve: CurveSpec, k: Weights) -> None:
        if k.n != curve.n:
            raise ValidationError(f"curve has n={curve.n} but weights have n={k.n}")
        if k.k[0] != max(k.k):
            raise ValidationError("k_1 must be the largest weight (reorder the coordinates)")
        if not 0 < self.beta < 1:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.c_hom < 1:
            raise ValidationError(f"c must lie in (0, 1), got {self.c_hom}")
        if not curve.image.contains(self.B0):
            raise ValidationError("B_0 is not inside f_1(I)")
        if not self.B0.length < self.c_hom / (2 * curve.kappa):
            raise ValidationError("|B_0| must be below c / (2 kappa)")
        R = game_ratio(self.beta, k)
        if abs(R - self.R_game) > mpmath.mpf(10) ** -12 * R:
            raise ValidationError(f"R_game {self.R_game} disagrees with (4/beta)^(1/(m k_1)) = {R}")
        if not 0 < self.epsilon < self.B0.length / (4 * R ** (k.m * to_mpf(k.k[0]))):
            raise ValidationError("epsilon must lie in (0, |B_0| / (4 R^(m k_1)))")

    def to_json(self) -> dict:
        return {
            "alpha": str(self.alpha),
            "beta": fmt(self.beta),
            "B0": self.B0.to_json(),
            "c_hom": fmt(self.c_hom),
            "epsilon": fmt(self.epsilon),
            "R_game": fmt(self.R_game),
            "certificate_Q": self.certificate_Q,
        }


def stage_bounds(s: int, R) -> tuple[int, int]:
    """``(q_min, q_max)`` with ``P_s = {q_min < |q| <= q_max}``."""
    if s == 0:
        return 0, 1
    R = to_mpf(R)
    return int(mpmath.floor(R ** (s - 1))), int(mpmath.floor(R**s))


def stage_cost(s: int, R, m: int) -> int:
    q_min, q_max = stage_bounds(s, R)
    return (2 * q_max + 1) ** m if q_max > q_min else 0


# -- dangerous intervals -----------------------------------------------------


@dataclass(frozen=True)
class Danger:
    p: tuple[int, ...]
    q: tuple[int, ...]
    delta: Interval

    def to_json(self) -> dict:
        return {"p": list(self.p), "q": list(self.q), "delta": self.delta.to_json(), "length": fmt(self.delta.length)}


def _slab_radii(k: Weights, epsilon, q) -> list[mpmath.mpf]:
    norm = sup_norm(q)
    return [epsilon / mpmath.mpf(norm) ** to_mpf(e) for e in k.exponents]


def delta_interval(
    curve: CurveSpec, theta: SystemMatrix, k: Weights, epsilon, p: Sequence[int], q: Sequence[int]
) -> Interval | None:
    """Interval hull of ``Delta(p, q)``, to be read as an open interval.

    The first slab is solved in closed form.  The remaining components are
    handled by a Lipschitz branch and bound that finds the leftmost and
    rightmost parameter cells that cannot be excluded, so the result is
    always a superset of the true hull.
    """
    if not any(q):
        raise ValidationError("q must be nonzero")
    epsilon = to_mpf(epsilon)
    radii = _slab_radii(k, epsilon, q)
    centers = [theta_row_apply(theta, i, q).to_mpf() - p[i] for i in range(theta.n)]
    img = curve.image
    lo = max(centers[0] - radii[0], img.lo)
    hi = min(centers[0] + radii[0], img.hi)
    if not lo < hi:
        return None
    if curve.n == 1:
        return Interval(lo, hi)
    kappa = curve.kappa

    def status(a, b) -> int:
        """-1 excluded, 1 entirely inside, 0 undecided."""
        mid, half = (a + b) / 2, (b - a) / 2
        vals = curve.point(mid)
        inside = True
        for i in range(1, curve.n):
            g = abs(centers[i] - vals[i])
            if g - kappa * half >= radii[i]:
                return -1
            if g + kappa * half >= radii[i]:
                inside = False
        return 1 if inside else 0

    min_width = (hi - lo) * mpmath.mpf(2) ** -_HULL_DEPTH

    def search(a, b, leftmost: bool):
        st = status(a, b)
        if st < 0:
            return None
        if st > 0 or b - a <= min_width:
            return a if leftmost else b
        mid = (a + b) / 2
        halves = [(a, mid), (mid, b)] if leftmost else [(mid, b), (a, mid)]
        for u, v in halves:
            r = search(u, v, leftmost)
            if r is not None:
                return r
        return None

    left = search(lo, hi, True)
    if left is None:
        return None
    right = search(left, hi, False)
    return Interval(left, right)


def _prefilter(theta_f, abs_theta, expo, fx, slack, eps_f, block):
    """Rows of ``block`` whose slabs may reach the region (sound float test)."""
    qf = block.astype(np.float64)
    aq = np.abs(qf)
    norm = aq.max(axis=1)
    forms = qf @ theta_f.T - fx
    mag = aq @ abs_theta.T + np.abs(fx)
    d = np.abs(forms - np.rint(forms))
    err = (mag + 1.0) * ((theta_f.shape[1] + 4) * _EPS)
    r = eps_f * norm[:, None] ** (-expo) * (1 + 1e-9)
    keep = np.all(d <= r + slack + err, axis=1)
    return block[keep]


class _Scanner:
    """Shared state for stage scans: float copies, counters and the budget."""

    def __init__(self, curve, theta, k, cfg, budget):
        self.curve, self.theta, self.k, self.cfg = curve, theta, k, cfg
        self.theta_f = theta.as_float()
        self.abs_theta = np.abs(self.theta_f)
        self.expo = np.array([float(e) for e in k.exponents])
        self.budget = budget
        self.used = 0

    def charge(self, amount: int) -> None:
        self.used += amount
        if self.budget is not None and self.used > self.budget:
            raise BudgetExceeded(f"enumeration budget {self.budget} exhausted")

    def hits(self, s: int, region: Interval) -> list[Danger]:
        """All ``(p, q)`` in ``P_s`` whose dangerous interval meets ``region``."""
        curve, theta, k, cfg = self.curve, self.theta, self.k, self.cfg
        q_min, q_max = stage_bounds(s, cfg.R_game)
        if q_max <= q_min:
            return []
        self.charge(stage_cost(s, cfg.R_game, theta.m))
        yc = region.center
        half = region.length / 2
        fxc = curve.point(yc)
        kap = [mpmath.mpf(1)] + [curve.kappa] * (curve.n - 1)
        slack_mp = [kv * half for kv in kap]
        with mpmath.workdps(30):
            fx = np.array([float(v) for v in fxc])
            slack = np.array([float(v) for v in slack_mp]) * (1 + 1e-9) + 1e-300
            eps_f = float(cfg.epsilon)
        found: list[Danger] = []
        for block in box_chunks(q_max, theta.m, q_min=q_min):
            for row in _prefilter(self.theta_f, self.abs_theta, self.expo, fx, slack, eps_f, block):
                q = tuple(int(c) for c in row)
                radii = _slab_radii(k, cfg.epsilon, q)
                ranges = []
                for i in range(theta.n):
                    v = theta_row_apply(theta, i, q).to_mpf() - fxc[i]
                    w = radii[i] + slack_mp[i]
                    ranges.append(range(int(mpmath.ceil(v - w)), int(mpmath.floor(v + w)) + 1))
                for p in _product(ranges):
                    self.charge(1)
                    d = delta_interval(curve, theta, k, cfg.epsilon, p, q)
                    if d is not None and region.meets_open(d):
                        found.append(Danger(p, q, d))
        return found


def _product(ranges) -> Iterator[tuple[int, ...]]:
    if not ranges:
        yield ()
        return
    for head in ranges[0]:
        for tail in _product(ranges[1:]):
            yield (head,) + tail


def _check_fact1(d: Danger, k: Weights, cfg: GameConfig, B: Interval) -> None:
    bound = 2 * cfg.epsilon / mpmath.mpf(sup_norm(d.q)) ** to_mpf(k.exponents[0])
    tol = tolerance()
    if d.delta.length > bound * (1 + tol) or not d.delta.length < B.length / 2:
        raise Fact1Violation(
            f"|Delta| = {d.delta.length} exceeds min(2 eps/|q|^(m k_1) = {bound}, |B_s|/2 = {B.length / 2})",
            p=d.p,
            q=d.q,
        )


def find_dangerous(
    s: int,
    B: Interval,
    curve: CurveSpec,
    theta: SystemMatrix,
    k: Weights,
    cfg: GameConfig,
    *,
    budget: int | None = None,
    _scanner: _Scanner | None = None,
) -> Danger | None:
    """The unique ``(p, q)`` of stage ``s`` whose dangerous interval meets ``B``."""
    scanner = _scanner or _Scanner(curve, theta, k, cfg, budget)
    found = scanner.hits(s, B)
    for d in found:
        _check_fact1(d, k, cfg, B)
    if len(found) > 1:
        raise Fact2Violation(
            f"stage {s}: {len(found)} dangerous intervals meet B_s",
            stage=s,
            hits=[(d.p, d.q) for d in found],
        )
    return found[0] if found else None


def alice_move(B: Interval, dangerous: Interval | None) -> Interval:
    """Leftmost quarter of ``B`` avoiding ``dangerous`` (an open interval).

    Without danger the leftmost quarter is taken.  Otherwise Alice plays the
    leftmost quarter of the larger of the two gaps, the left one on ties.
    """
    quarter = B.length / 4
    if dangerous is None or not B.meets_open(dangerous):
        return Interval(B.lo, B.lo + quarter)
    # at exactly |B|/2 a gap of |B|/4 still exists; only longer intervals block Alice
    if dangerous.length > B.length / 2:
        raise Fact1Violation(f"dangerous interval of length {dangerous.length} exceeds |B|/2")
    left = min(max(dangerous.lo, B.lo), B.hi) - B.lo
    right_lo = max(min(dangerous.hi, B.hi), B.lo)
    right = B.hi - right_lo
    if left >= right:
        return Interval(B.lo, B.lo + quarter)
    return Interval(right_lo, right_lo + quarter)


def bob_move(
    strategy: str,
    A: Interval,
    beta,
    *,
    rng: random.Random | None = None,
    target=None,
) -> Interval:
    """Bob's reply of length ``beta |A|`` inside ``A``.

    ``adversary`` centres on ``target`` (clamped into ``A``) and falls back
    to the centre when there is no target.
    """
    size = to_mpf(beta) * A.length
    room = A.length - size
    if strategy == "center" or (strategy == "adversary" and target is None):
        lo = A.lo + room / 2
    elif strategy == "adversary":
        lo = min(max(to_mpf(target) - size / 2, A.lo), A.hi - size)
    elif strategy == "seeded_random":
        if rng is None:
            raise ValidationError("seeded_random needs an rng")
        lo = A.lo + mpmath.mpf(rng.random()) * room
    else:
        raise ValidationError(f"unknown Bob strategy {strategy!r}")
    return Interval(lo, lo + size)


# -- the game ----------------------------------------------------------------


@dataclass
class StageRecord:
    s: int
    B: Interval
    dangerous: Danger | None
    A: Interval
    B_next: Interval | None
    candidates: int

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "B": self.B.to_json(),
            "B_length": fmt(self.B.length),
            "dangerous": self.dangerous.to_json() if self.dangerous else None,
            "A": self.A.to_json(),
            "B_next": self.B_next.to_json() if self.B_next else None,
            "candidates": self.candidates,
        }


@dataclass
class GameTranscript:
    config: GameConfig
    curve: CurveSpec
    bob: str
    seed: int
    depth: int
    precision_digits: int
    stages: list[StageRecord] = field(default_factory=list)
    completed: bool = False
    stop_reason: str = ""
    witness_y: mpmath.mpf | None = None
    witness_point: list[mpmath.mpf] = field(default_factory=list)
    post_check: dict = field(default_factory=dict)
    guaranteed: dict = field(default_factory=dict)
    avoidance: dict = field(default_factory=dict)
    budget_used: int = 0

    @property
    def depth_reached(self) -> int:
        return len(self.stages)

    @property
    def certificate_Q(self) -> int:
        return self.config.certificate_Q

    def summary(self) -> dict:
        with mpmath.workdps(self.precision_digits):
            return {
                "type": "result",
                "completed": self.completed,
                "stop_reason": self.stop_reason,
                "depth_requested": self.depth,
                "depth_reached": self.depth_reached,
                "certificate_Q": self.certificate_Q,
                "witness_y": fmt(self.witness_y) if self.witness_y is not None else None,
                "witness_point": [fmt(v) for v in self.witness_point],
                "witness_error": fmt(self.final_interval.length / 2),
                "post_check": self.post_check,
                "guaranteed": self.guaranteed,
                "avoidance": self.avoidance,
                "budget_used": self.budget_used,
            }

    @property
    def final_interval(self) -> Interval:
        if not self.stages:
            return self.config.B0
        last = self.stages[-1]
        return last.B_next or last.A

    def to_jsonl(self) -> str:
        with mpmath.workdps(self.precision_digits):
            header = {
                "type": "header",
                "config": self.config.to_json(),
                "curve": self.curve.to_json(),
                "bob": self.bob,
                "seed": self.seed,
                "precision_digits": self.precision_digits,
            }
            lines = [header] + [dict(type="stage", **st.to_json()) for st in self.stages] + [self.summary()]
            return "\n".join(json.dumps(rec, sort_keys=True) for rec in lines) + "\n"


def _check_stage_geometry(s: int, B: Interval, A: Interval, cfg: GameConfig, k: Weights) -> None:
    tol = tolerance()
    expected = cfg.B0.length * cfg.R_game ** (-s * k.m * to_mpf(k.k[0]))
    if abs(B.length - expected) > tol * expected:
        raise InvariantViolation("stage_length", f"|B_{s}| = {B.length}, expected {expected}")
    if abs(A.length - B.length / 4) > tol * B.length:
        raise InvariantViolation("alice_length", f"|A_{s}| = {A.length} is not |B_{s}|/4")
    if not B.contains(A, tol * B.length):
        raise InvariantViolation("nesting", f"A_{s} is not inside B_{s}")


def run_game(
    curve: CurveSpec,
    theta: SystemMatrix,
    k: Weights,
    cfg: GameConfig,
    bob: str,
    depth: int,
    *,
    seed: int = 0,
    prec: Precision | int | None = None,
    budget: int | None = DEFAULT_BUDGET,
    post_Q: int | None = None,
    verify: bool = True,
    workers: int = 1,
) -> GameTranscript:
    """Play ``depth`` stages and certify the resulting witness.

    The witness is the centre of the last Bob interval.  It is checked twice:
    the twisted minimum over ``|q| <= R^(S-1)`` must be at least ``epsilon``
    (this is what the strategy guarantees) and the minimum over
    ``|q| <= post_Q`` (default ``R^S``) must be positive.
    """
    if bob not in BOB_STRATEGIES:
        raise ValidationError(f"bob must be one of {BOB_STRATEGIES}")
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    if theta.n != curve.n or theta.m != k.m or k.n != curve.n:
        raise ValidationError("curve, Theta and weights disagree on dimensions")
    p = resolve(prec)
    with p.context():
        cfg = dataclasses.replace(cfg, R_game=game_ratio(cfg.beta, k))
        cfg.validate(curve, k)
        tr = GameTranscript(cfg, curve, bob, seed, depth, p.digits)
        scanner = _Scanner(curve, theta, k, cfg, budget)
        rng = random.Random(seed)
        B = cfg.B0
        try:
            for s in range(depth):
                before = scanner.used
                danger = find_dangerous(s, B, curve, theta, k, cfg, _scanner=scanner)
                A = alice_move(B, danger.delta if danger else None)
                if danger is not None and A.meets_open(danger.delta):
                    raise InvariantViolation("avoidance", f"A_{s} meets Delta{danger.p, danger.q}")
                _check_stage_geometry(s, B, A, cfg, k)
                target = None
                if bob == "adversary":
                    ahead = scanner.hits(s + 1, A)
                    if ahead:
                        c = A.center
                        target = min((d.delta.center for d in ahead), key=lambda y: abs(y - c))
                B_next = bob_move(bob, A, cfg.beta, rng=rng, target=target)
                tr.stages.append(StageRecord(s, B, danger, A, B_next, scanner.used - before))
                B = B_next
            tr.completed = True
        except BudgetExceeded as exc:
            tr.stop_reason = str(exc)
        tr.budget_used = scanner.used

        tr.witness_y = tr.final_interval.center
        tr.witness_point = curve.point(tr.witness_y)
        S = tr.depth_reached
        if verify and S >= 1:
            tr.avoidance = verify_avoidance(tr, theta, k)
        _post_checks(tr, theta, k, cfg, S, post_Q, p, workers)
        return tr


def _post_checks(tr, theta, k, cfg, S, post_Q, p, workers) -> None:
    x = tr.witness_point
    Q_g = stage_bounds(S - 1, cfg.R_game)[1] if S >= 1 else 0
    if Q_g >= 1:
        cert = lower_estimate("twisted", theta, k, Q_g, x, prec=p, workers=workers)
        ok = cert.gamma >= cfg.epsilon * (1 - _AVOID_REL)
        tr.guaranteed = {"Q": Q_g, "gamma": fmt(cert.gamma), "epsilon": fmt(cfg.epsilon), "argmin_q": list(cert.argmin_q), "holds": bool(ok)}
        if not ok:
            raise InvariantViolation("witness", f"twisted minimum {cert.gamma} over |q| <= {Q_g} is below epsilon")
    Q = post_Q if post_Q is not None else max(1, stage_bounds(S, cfg.R_game)[1])
    cert = lower_estimate("twisted", theta, k, Q, x, prec=p, workers=workers)
    tr.post_check = {"Q": Q, "gamma": fmt(cert.gamma), "argmin_q": list(cert.argmin_q), "positive": bool(cert.gamma > 0)}
    if tr.completed and not cert.gamma > 0:
        raise InvariantViolation("witness", f"twisted minimum over |q| <= {Q} is zero at {cert.argmin_q}")


def _twisted_lower(curve, theta_rows, expo_mp, kap, epsilon, q_norm, y_lo, y_hi):
    c = (y_lo + y_hi) / 2
    h = (y_hi - y_lo) / 2
    fx = curve.point(c)
    best = None
    value = None
    for i, row_val in enumerate(theta_rows):
        w = mpmath.mpf(q_norm) ** expo_mp[i]
        d = abs(row_val - fx[i])
        d = abs(d - mpmath.nint(d))
        term = w * d
        lo_term = w * (d - kap[i] * h)
        value = term if value is None else max(value, term)
        best = lo_term if best is None else max(best, lo_term)
    return best, value


def verify_avoidance(tr: GameTranscript, theta: SystemMatrix, k: Weights) -> dict:
    """Check, independently of the Delta machinery, that every ``A_s`` keeps
    the twisted quality at least ``epsilon`` for all ``0 < |q| <= R^s``.

    A float pass bounds the quality over ``A_s`` from its centre via the
    Lipschitz constants; undecided ``q`` are re-checked by bisection of
    ``A_s`` at the working precision.
    """
    curve, cfg = tr.curve, tr.config
    eps = cfg.epsilon
    kap = [mpmath.mpf(1)] + [curve.kappa] * (curve.n - 1)
    expo_mp = [to_mpf(e) for e in k.exponents]
    theta_f = theta.as_float()
    abs_theta = np.abs(theta_f)
    expo = np.array([float(e) for e in k.exponents])
    checked = refined = 0
    worst = None
    for st in tr.stages:
        A = st.A
        q_max = stage_bounds(st.s, cfg.R_game)[1]
        fxc = curve.point(A.center)
        with mpmath.workdps(30):
            fx = np.array([float(v) for v in fxc])
            slack = np.array([float(kv * A.length / 2) for kv in kap])
            eps_f = float(eps)
        for block in box_chunks(q_max, theta.m):
            qf = block.astype(np.float64)
            aq = np.abs(qf)
            norm = aq.max(axis=1)
            forms = qf @ theta_f.T - fx
            mag = aq @ abs_theta.T + np.abs(fx)
            d = np.abs(forms - np.rint(forms))
            err = (mag + 1.0) * ((theta_f.shape[1] + 4) * _EPS)
            w = norm[:, None] ** expo
            low = (w * (d - err - slack)).max(axis=1) * (1 - 1e-9)
            checked += len(block)
            for row in block[low < eps_f]:
                q = tuple(int(c) for c in row)
                refined += 1
                rows = [theta_row_apply(theta, i, q).to_mpf() for i in range(theta.n)]
                m_low = _certify(curve, rows, expo_mp, kap, eps, sup_norm(q), A.lo, A.hi, 0)
                if m_low is None:
                    raise InvariantViolation(
                        "k", f"A_{st.s} contains a point with twisted quality below epsilon", q=q, stage=st.s
                    )
                worst = m_low if worst is None else min(worst, m_low)
    out = {"q_checked": checked, "refined": refined, "holds": True}
    if worst is not None:
        out["min_certified_refined"] = fmt(worst)
    return out


def _certify(curve, rows, expo_mp, kap, eps, q_norm, a, b, depth):
    """Smallest certified lower bound over ``[a, b]`` (``None`` on failure)."""
    target = eps * (1 - _AVOID_REL)
    low, value = _twisted_lower(curve, rows, expo_mp, kap, eps, q_norm, a, b)
    if low >= target:
        return low
    if value < target or depth >= _AVOID_DEPTH:
        return None
    mid = (a + b) / 2
    left = _certify(curve, rows, expo_mp, kap, eps, q_norm, a, mid, depth + 1)
    if left is None:
        return None
    right = _certify(curve, rows, expo_mp, kap, eps, q_norm, mid, b, depth + 1)
    if right is None:
        return None
    return min(left, right)


def projected_cost(cfg: GameConfig, depth: int, m: int, bob: str = "center") -> int:
    """Box points the stage scans will visit (adversary looks one stage ahead)."""
    total = sum(stage_cost(s, cfg.R_game, m) for s in range(depth))
    if bob == "adversary":
        total += sum(stage_cost(s + 1, cfg.R_game, m) for s in range(depth))
    return total


def default_certificate_Q(beta, k: Weights, depth: int) -> int:
    """Range the homogeneous certificate must cover: differences of two
    ``q`` from the last stage have norm up to ``2 R^S``."""
    return max(1, math.ceil(2 * game_ratio(beta, k) ** depth))

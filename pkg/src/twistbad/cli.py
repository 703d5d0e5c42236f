"""Command-line experiment runner.

Every subcommand reads an optional JSON config (``--config``), lets flags
override its fields, validates the merged record and echoes it into each
artifact.  Artifacts are canonical JSON (sorted keys) plus a CSV summary;
nothing time-dependent is written to them, so reruns are byte-identical.

Exit codes: 0 pass, 2 validation, 3 budget, 4 invariant violation or failed
verification, 5 completed with an empty admissible range.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path
from typing import Any, Callable

import mpmath

from . import lattice_lambda, schmidt_game, transference
from .dioph_quality import KINDS, SystemMatrix, Weights, lower_estimate, theta_row_apply
from .errors import TwistbadError, ValidationError
from .geometry import AffineSubspace, LinearSubspace
from .numeric_core import Precision, QuadraticScalar, fmt

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4
EXIT_WARNING = 5

COMMON_DEFAULTS: dict[str, Any] = {"precision": 50, "threads": 1, "seed": 0, "out": None}

DEFAULTS: dict[str, dict[str, Any]] = {
    "quality": {"theta": "phi", "k": "1", "m": 1, "Q": 1000, "kinds": "homogeneous", "x": None},
    "game": {
        "theta": "phi",
        "k": "1",
        "m": 1,
        "curve": "identity",
        "beta": "1/2",
        "depth": 5,
        "bob": "center",
        "cert_Q": None,
        "post_Q": None,
        "budget": int(schmidt_game.DEFAULT_BUDGET),
    },
    "lambda": {
        "theta": "phi",
        "k": "1",
        "m": 1,
        "L": "1",
        "gamma": None,
        "dual_Q": 1000,
        "r_max": 6,
        "budget": int(lattice_lambda.DEFAULT_BUDGET),
    },
    "transfer": {
        "theta": "phi",
        "k": "1",
        "m": 1,
        "L": "1",
        "gamma": None,
        "dual_Q": 1000,
        "r_max": 6,
        "budget": int(lattice_lambda.DEFAULT_BUDGET),
        "x": "sqrt2-1",
        "Q": None,
    },
    "pipeline": {
        "theta": "phi",
        "k": "1",
        "m": 1,
        "curve": "identity",
        "beta": "1/2",
        "depth": 5,
        "bob": "center",
        "cert_Q": None,
        "post_Q": None,
        "game_budget": int(schmidt_game.DEFAULT_BUDGET),
        "L": "1",
        "dual_Q": 1000,
        "r_max": 6,
        "lambda_budget": int(lattice_lambda.DEFAULT_BUDGET),
        "negative_q0": 7,
    },
}


# config handling


def _load_config(path: str | None, command: str) -> dict:
    if not path:
        return {}
    try:
        rec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(rec, dict):
        raise ValidationError("config must be a JSON object")
    # either a flat record or one keyed by command name
    if command in rec and isinstance(rec[command], dict):
        flat = {k: v for k, v in rec.items() if k not in DEFAULTS}
        flat.update(rec[command])
        rec = flat
    known = set(DEFAULTS[command]) | set(COMMON_DEFAULTS)
    unknown = sorted(set(rec) - known)
    if unknown:
        raise ValidationError(f"unknown config fields for {command}: {unknown}")
    return rec


def resolve_config(command: str, file_fields: dict, flags: dict) -> dict:
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[command])
    cfg.update(file_fields)
    cfg.update({k: v for k, v in flags.items() if v is not None and k in cfg})
    for key in ("precision", "threads", "seed"):
        try:
            cfg[key] = int(cfg[key])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{key} must be an integer") from exc
    if cfg["threads"] < 1:
        raise ValidationError("threads must be >= 1")
    try:
        Precision(cfg["precision"])
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    return cfg


def _weights(cfg: dict) -> Weights:
    return Weights.parse(cfg["k"], int(cfg["m"]))


def _theta(cfg: dict) -> SystemMatrix:
    return SystemMatrix.parse(cfg["theta"])


def _subspace(spec) -> LinearSubspace:
    """``"1,0;0,1"`` (spanning rows) or ``{"basis": [...], "offset"?: [...]}``."""
    if isinstance(spec, dict):
        return AffineSubspace.from_json(spec).direction
    if isinstance(spec, list):
        return LinearSubspace.span(spec)
    rows = [[c for c in row.split(",") if c.strip()] for row in str(spec).split(";") if row.strip()]
    try:
        return LinearSubspace.span(rows)
    except ValueError as exc:
        raise ValidationError(f"cannot parse subspace {spec!r}: {exc}") from exc


def _xvec(spec, n: int) -> list:
    vals = spec if isinstance(spec, list) else [c for c in str(spec).split(",") if c.strip()]
    if len(vals) != n:
        raise ValidationError(f"x needs {n} coordinates, got {len(vals)}")
    return [str(v) for v in vals]


def _echo(cfg: dict) -> dict:
    """Resolved config as echoed into artifacts; the output location is not part of the experiment."""
    return {k: v for k, v in cfg.items() if k != "out"}


def _opt_int(v) -> int | None:
    return None if v is None else int(v)


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


# artifact writing


def dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, indent=1) + "\n"


def _csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    fields = sorted({k for r in rows for k in r})
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def _write(cfg: dict, name: str, text: str) -> None:
    if cfg.get("out"):
        d = Path(cfg["out"])
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)


# commands


def cmd_quality(cfg: dict) -> tuple[dict, int]:
    theta, k = _theta(cfg), _weights(cfg)
    kinds = [s.strip() for s in str(cfg["kinds"]).split(",") if s.strip()]
    for kind in kinds:
        if kind not in KINDS:
            raise ValidationError(f"unknown kind {kind!r}; choose from {KINDS}")
    Q = int(cfg["Q"])
    x = _xvec(cfg["x"], theta.n) if "twisted" in kinds else None
    if "twisted" in kinds and cfg["x"] is None:
        raise ValidationError("kind twisted needs --x")
    certs, rows = {}, []
    for kind in kinds:
        cert = lower_estimate(
            kind, theta, k, Q, x if kind == "twisted" else None, prec=cfg["precision"], workers=cfg["threads"]
        )
        certs[kind] = cert.to_json()
        rows.append({"kind": kind, "Q": Q, "gamma": certs[kind]["gamma"], "argmin_q": " ".join(map(str, cert.argmin_q))})
        _note(f"{kind}: gamma = {mpmath.nstr(cert.gamma, 12)} at q = {cert.argmin_q}")
    out = {"command": "quality", "config": _echo(cfg), "theta": theta.to_json(), "weights": k.to_json(), "certificates": certs}
    _write(cfg, "quality.json", dumps(out))
    _write(cfg, "quality.csv", _csv(rows))
    return out, EXIT_OK


def _run_game_stage(cfg: dict, theta, k, *, budget_key: str) -> tuple[dict, Any]:
    curve = schmidt_game.CurveSpec.from_json(cfg["curve"])
    depth = int(cfg["depth"])
    cert_Q = _opt_int(cfg["cert_Q"]) or schmidt_game.default_certificate_Q(cfg["beta"], k, depth)
    cert = lower_estimate("homogeneous", theta, k, cert_Q, prec=cfg["precision"], workers=cfg["threads"])
    gcfg = schmidt_game.GameConfig.from_certificate(curve, k, cfg["beta"], cert, prec=cfg["precision"])
    cost = schmidt_game.projected_cost(gcfg, depth, k.m, cfg["bob"])
    _note(f"game: projected scan cost {cost} box points (budget {cfg[budget_key]})")
    tr = schmidt_game.run_game(
        curve,
        theta,
        k,
        gcfg,
        cfg["bob"],
        depth,
        seed=cfg["seed"],
        prec=cfg["precision"],
        budget=int(cfg[budget_key]),
        post_Q=_opt_int(cfg["post_Q"]),
        workers=cfg["threads"],
    )
    with mpmath.workdps(cfg["precision"]):
        rec = {"certificate": cert.to_json(), "game_config": gcfg.to_json(), "result": tr.summary()}
    return rec, tr


def _game_status(tr) -> int:
    if not tr.completed:
        return EXIT_BUDGET
    post = tr.post_check.get("positive", True) if tr.post_check else True
    return EXIT_OK if post else EXIT_INVARIANT


def cmd_game(cfg: dict) -> tuple[dict, int]:
    theta, k = _theta(cfg), _weights(cfg)
    if cfg["bob"] not in schmidt_game.BOB_STRATEGIES:
        raise ValidationError(f"bob must be one of {schmidt_game.BOB_STRATEGIES}")
    rec, tr = _run_game_stage(cfg, theta, k, budget_key="budget")
    out = {"command": "game", "config": _echo(cfg), **rec}
    _write(cfg, "transcript.jsonl", tr.to_jsonl())
    _write(cfg, "witness.json", dumps(out))
    _write(
        cfg,
        "game.csv",
        _csv([{"s": st.s, "B_lo": fmt(st.B.lo), "B_hi": fmt(st.B.hi), "dangerous": st.dangerous is not None} for st in tr.stages]),
    )
    return out, _game_status(tr)


def _build_lambda_stage(cfg: dict, theta, k, *, budget_key: str):
    L = _subspace(cfg["L"])
    dual = None
    if cfg.get("gamma") is not None:
        gamma = mpmath.mpf(str(cfg["gamma"]))
    else:
        dual = lower_estimate("dual", theta, k, int(cfg["dual_Q"]), prec=cfg["precision"], workers=cfg["threads"])
        with mpmath.workdps(cfg["precision"]):
            gamma = lattice_lambda.gamma_from_certificate(dual)
    budget = int(cfg[budget_key])
    seq = lattice_lambda.build_lambda(
        theta,
        k,
        L,
        gamma,
        int(cfg["r_max"]),
        prec=cfg["precision"],
        budget=budget,
        certificate_Q=dual.q_range if dual else None,
    )
    for note in seq.notes:
        _note(f"lambda: {note}")
    rec = {"lambda": seq.to_json()}
    if dual is not None:
        rec["dual_certificate"] = dual.to_json()
    return rec, seq


def cmd_lambda(cfg: dict) -> tuple[dict, int]:
    theta, k = _theta(cfg), _weights(cfg)
    rec, seq = _build_lambda_stage(cfg, theta, k, budget_key="budget")
    out = {"command": "lambda", "config": _echo(cfg), **rec}
    _write(cfg, "lambda.json", dumps(out))
    _write(cfg, "lambda.csv", _csv([{"r": e.r, "u": " ".join(map(str, e.point.u)), "psi": fmt(e.psi)} for e in seq.entries]))
    return out, EXIT_OK


def _transfer_status(rep) -> int:
    if rep.counterexamples:
        return EXIT_INVARIANT
    if rep.Q_admissible < 1 or rep.Q_checked < 1:
        return EXIT_WARNING
    return EXIT_OK


def cmd_transfer(cfg: dict) -> tuple[dict, int]:
    theta, k = _theta(cfg), _weights(cfg)
    rec, seq = _build_lambda_stage(cfg, theta, k, budget_key="budget")
    x = _xvec(cfg["x"], theta.n)
    if seq.r_max >= 2:
        transference.psi_checks(seq.psi, seq.R)
    rep = transference.verify_fact_a(x, seq, theta, k, _opt_int(cfg["Q"]), prec=cfg["precision"])
    out = {"command": "transfer", "config": _echo(cfg), **rec, "transference": rep.to_json()}
    _write(cfg, "transfer.json", dumps(out))
    _write(cfg, "transfer.csv", _csv(rep.per_q_r_choices))
    return out, _transfer_status(rep)


def negative_control_target(theta: SystemMatrix, q0: int) -> list[QuadraticScalar]:
    """``x = Theta(q0) mod 1`` with ``q0 = (q0, 0, ..., 0)``; exact."""
    q = [int(q0)] + [0] * (theta.m - 1)
    out = []
    for i in range(theta.n):
        v = theta_row_apply(theta, i, q)
        out.append(v - int(mpmath.floor(v.to_mpf())))
    return out


def cmd_pipeline(cfg: dict) -> tuple[dict, int]:
    theta, k = _theta(cfg), _weights(cfg)
    if cfg["bob"] not in schmidt_game.BOB_STRATEGIES:
        raise ValidationError(f"bob must be one of {schmidt_game.BOB_STRATEGIES}")
    stages: dict[str, Any] = {}
    stage = "game"
    try:
        game_rec, tr = _run_game_stage(cfg, theta, k, budget_key="game_budget")
        stages["game"] = game_rec
        status = _game_status(tr)
        if status != EXIT_OK:
            raise ValidationError(f"game stopped: {tr.stop_reason or 'post check failed'}")
        stage = "lambda"
        lam_rec, seq = _build_lambda_stage(cfg, theta, k, budget_key="lambda_budget")
        stages["lambda"] = lam_rec
        stage = "transference"
        if seq.r_max >= 2:
            stages["psi_slacks"] = {str(r): fmt(v) for r, v in transference.psi_checks(seq.psi, seq.R).items()}
        rep = transference.verify_fact_a(tr.witness_point, seq, theta, k, prec=cfg["precision"])
        stages["transference"] = rep.to_json()
        status = _transfer_status(rep)
        q0 = cfg.get("negative_q0")
        if q0:
            stage = "negative_control"
            x0 = negative_control_target(theta, int(q0))
            neg = transference.verify_fact_a(x0, seq, theta, k, int(q0), prec=cfg["precision"], allow_beyond=True)
            hit = any(c.get("check") in ("c", "c_x") for c in neg.counterexamples)
            stages["negative_control"] = {
                "q0": int(q0),
                "x": [str(v) for v in x0],
                "failed_as_predicted": hit,
                "report": neg.to_json(),
            }
            if not hit:
                status = EXIT_INVARIANT
    except TwistbadError as exc:
        exc.stage = stage  # type: ignore[attr-defined]
        raise
    out = {"command": "pipeline", "config": _echo(cfg), "stages": stages, "status": status}
    _write(cfg, "pipeline.json", dumps(out))
    tf = stages["transference"]
    _write(
        cfg,
        "pipeline.csv",
        _csv(
            [
                {
                    "c_x": tf["c_x"],
                    "kappa_transfer": tf["kappa_transfer"],
                    "Q_admissible": tf["Q_admissible"],
                    "counterexamples": len(tf["counterexamples"]),
                    "worst_value": tf["worst_value"],
                    "negative_control_failed": stages.get("negative_control", {}).get("failed_as_predicted"),
                }
            ]
        ),
    )
    return out, status


COMMANDS: dict[str, Callable[[dict], tuple[dict, int]]] = {
    "quality": cmd_quality,
    "game": cmd_game,
    "lambda": cmd_lambda,
    "transfer": cmd_transfer,
    "pipeline": cmd_pipeline,
}

_FLAG_HELP = {
    "theta": "matrix rows separated by ';', entries by ','; e.g. 'sqrt2;sqrt3'",
    "k": "weights, comma separated, summing to 1",
    "m": "number of columns of Theta",
    "Q": "search range",
    "kinds": "comma separated subset of homogeneous,dual,twisted",
    "x": "target vector, comma separated",
    "curve": "identity, parabola, cubic or a JSON curve record",
    "beta": "Bob's ratio in (0, 1)",
    "depth": "number of game stages",
    "bob": "adversary, center or seeded_random",
    "cert_Q": "range of the homogeneous certificate (default 2 R^S)",
    "post_Q": "range of the witness positivity check (default R^S)",
    "L": "subspace: spanning rows separated by ';'",
    "gamma": "dual constant (default from a dual certificate)",
    "dual_Q": "range of the dual certificate",
    "r_max": "number of scales in the sequence",
    "negative_q0": "q0 of the negative control x = Theta(q0) mod 1 (0 disables)",
    "budget": "cap on enumerated points; larger jobs stop with exit code 3",
}


_INT_FIELDS = {"m", "Q", "depth", "cert_Q", "post_Q", "budget", "dual_Q", "r_max", "game_budget", "lambda_budget", "negative_q0"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--precision", type=int, help="working precision in digits (default 50)")
    common.add_argument("--threads", type=int, help="worker cap for exhaustive scans")
    common.add_argument("--seed", type=int, help="seed for randomised strategies")
    common.add_argument("--out", help="directory for JSON and CSV artifacts")
    common.add_argument("--quiet", action="store_true", help="do not print the result JSON")
    parser = argparse.ArgumentParser(prog="twistbad", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name, parents=[common])
        for key in defaults:
            flag = "--" + key.replace("_", "-")
            kind = int if key in _INT_FIELDS else str
            sp.add_argument(flag, dest=key, type=kind, help=_FLAG_HELP.get(key.replace("game_", "").replace("lambda_", "")))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    flags = vars(args)
    command = flags.pop("command")
    quiet = flags.pop("quiet")
    started = time.perf_counter()
    try:
        cfg = resolve_config(command, _load_config(flags.pop("config"), command), flags)
        with mpmath.workdps(cfg["precision"]):
            out, code = COMMANDS[command](cfg)
    except TwistbadError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        for attr in ("tag", "stage", "max_admissible_q"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        print(json.dumps(err, sort_keys=True, default=str))
        return exc.exit_code
    except ValueError as exc:
        print(json.dumps({"error": "ValidationError", "message": str(exc), "exit_code": EXIT_VALIDATION}, sort_keys=True))
        return EXIT_VALIDATION
    if not quiet:
        sys.stdout.write(dumps(out))
    _note(f"{command}: exit {code} after {time.perf_counter() - started:.2f}s")
    return code


if __name__ == "__main__":
    sys.exit(main())

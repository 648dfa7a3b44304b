"""Command-line entry point: ``weakbellman <command> [options]``.

Exit status: 0 on success, 1 when a verification finds violations or a
witness does not replay, 2 on usage, configuration or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import closed_form as cf
from .dyadic import as_rational, format_rational
from .envelope import TreeWitness, dp_sub, replay_witness, tree_search_pm
from .errors import BudgetExceeded, DomainError, WitnessMismatch
from .report import canonical_json, csv_text, make_report, write_json
from .transform import (
    TransformWitness,
    bellman_point,
    characteristic,
    level_set_measure,
    three_node_triple,
    replay_transform_witness,
    subordination_audit,
    weak_type_ratio,
)
from .weighted import (
    concavity_spot_check,
    diagnostics_hx3,
    diagnostics_main1,
    dp_weighted_iter,
    elementary_inequality_check,
    find_a,
    gamma_op,
    main1_samples,
    beta,
    r_statistic,
)

THREADS_ENV = "WEAKBELLMAN_THREADS"

DEFAULTS = {
    "exact eval": {"x1": "0", "x2": "-2", "x3": "1"},
    "exact verify": {"samples": 100000, "out": None},
    "exact triple": {"x1": "0", "x3": "1/2", "x4": "2"},
    "dp-unweighted": {"grid": 129, "iters": 12, "x3max": 4.0, "base": "boundary", "out": None, "report": None},
    "pm-search": {"x1": "0", "x3": "1/2", "depth": 8, "quant": "0,1/2,1,2", "x3_step": "1/4", "cap": 8,
                  "witness": None},
    "dp-weighted": {"Q": 4.0, "grid": "65x65x33", "iters": 2, "seeded": True, "x3max": 2.0, "out": None,
                    "report": None},
    "lower-bound": {"Q": "2,4,8", "grid": "65x65x33", "iters": 2, "seeded": True, "x3max": 2.0, "out": None},
    "diagnostics beta": {"Q": "8", "grid": "65x65x33", "iters": 6, "seeded": True, "x3max": 2.0,
                         "steps": 4096, "out": None},
    "replay": {"witness": None},
}


class UsageError(Exception):
    pass


def _grid3(text):
    try:
        parts = tuple(int(p) for p in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"grid must look like N1xN3xN4, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 2:
        raise UsageError(f"grid must look like N1xN3xN4, got {text!r}")
    return parts


def _qlist(text):
    try:
        qs = [float(q) for q in str(text).split(",") if q.strip()]
    except ValueError:
        raise UsageError(f"bad Q list {text!r}") from None
    if not qs or min(qs) < 1:
        raise UsageError("Q values must be at least 1")
    return qs


def _rational(text):
    try:
        return as_rational(str(text))
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a rational number: {text!r}") from None


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(line, to_stderr=False):
    print(line, file=sys.stderr if to_stderr else sys.stdout)


# --- commands ------------------------------------------------------------------

def cmd_exact_eval(cfg, ctx):
    x1, x2, x3 = (_rational(cfg[k]) for k in ("x1", "x2", "x3"))
    try:
        full = cf.b_full(x1, x2, x3)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    bnd = cf.b_boundary(x1, x2)
    y = cf.to_y(x1, x2, x3)
    my = cf.m_y(*y)
    print(f"B_full({x1}, {x2}, {x3}) = {float(full)!r} ({format_rational(full)})")
    print(f"B_boundary({x1}, {x2}) = {float(bnd)!r} ({format_rational(bnd)})")
    print(f"M_y({', '.join(map(str, y))}) = {float(my)!r} ({format_rational(my)})")
    return 0


def _exact_checks(n, seed):
    rng = np.random.default_rng(seed)
    checks = {}
    violations = []
    x3 = rng.uniform(0, 4, n)
    x1 = rng.uniform(-1, 1, n) * x3
    x2 = rng.uniform(-8, 4, n)
    b = cf.b_full_array(x1, x2, x3)
    checks["range"] = bool(np.all((b >= 0) & (b <= 1)))
    checks["symmetry"] = bool(np.array_equal(b, cf.b_full_array(-x1, x2, x3)))
    k = min(n, 2000)
    checks["boundary_identity"] = all(
        cf.b_full(Fraction(p), Fraction(q), abs(Fraction(p))) == cf.b_boundary(Fraction(p), Fraction(q))
        for p, q in zip(rng.integers(-64, 65, k) / 16, rng.integers(-128, 65, k) / 16))
    xp, xm = cf.sample_pairs(rng, n)
    res = cf.main_inequality_residuals(xp, xm)
    checks["main_inequality"] = bool(res.min() >= -1e-9)
    if not checks["main_inequality"]:
        violations.append({"kind": "main_inequality", "min_residual": float(res.min())})
    cert = cf.supersolution_verify(cf.b_full_array, seed=seed, n_pairs=min(n, 20000))
    checks["supersolution"] = cert.passed
    violations.extend(cert.violations)
    for name, ok in checks.items():
        if not ok and name not in ("main_inequality", "supersolution"):
            violations.append({"kind": name})
    return {"checks": checks, "samples": int(len(res)), "min_residual": float(min(res.min(), cert.min_residual)),
            "violations": violations}


def cmd_exact_verify(cfg, ctx):
    result = _exact_checks(int(cfg["samples"]), ctx["seed"])
    text = canonical_json(result, indent=2) + "\n"
    if cfg["out"]:
        write_json(cfg["out"], make_report("exact verify", ctx["config"], result, result["violations"]))
        _summary(f"exact verify: {sum(result['checks'].values())}/{len(result['checks'])} checks passed")
    else:
        sys.stdout.write(text)
    return 1 if result["violations"] else 0


def cmd_exact_triple(cfg, ctx):
    x1, x3, x4 = (_rational(cfg[k]) for k in ("x1", "x3", "x4"))
    try:
        t = three_node_triple(x1, x3, x4)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    point = bellman_point(t.phi, t.psi, t.w)
    result = {
        "point": [format_rational(v) for v in point.as_tuple()],
        "measure": format_rational(level_set_measure(t.psi, 0, t.w)),
        "characteristic": format_rational(characteristic(t.w)),
        "subordinate": subordination_audit(t.phi_expansion, t.eps),
        "ratio": format_rational(weak_type_ratio(t.phi_expansion, t.eps, -1, t.w, 1)),
        "phi": t.phi.to_json(), "psi": t.psi.to_json(), "w": t.w.w.to_json(),
    }
    sys.stdout.write(canonical_json(result, indent=2) + "\n")
    return 0


def cmd_dp_unweighted(cfg, ctx):
    grid, iters, x3max = int(cfg["grid"]), int(cfg["iters"]), float(cfg["x3max"])
    if grid < 2 or iters < 0 or x3max <= 0:
        raise UsageError("need grid >= 2, iters >= 0, x3max > 0")
    V = dp_sub(grid, iters, x3max, base=cfg["base"], workers=ctx["threads"])
    X1, X3 = V.mesh()
    act = X1 <= X3
    vals = V.values[act]
    closed = cf.b_full_array(X1[act], -1.0, X3[act])
    rows = [(a, b, v, c, c - v) for a, b, v, c in zip(X1[act], X3[act], vals, closed)]
    violations = [{"x1": float(r[0]), "x3": float(r[1]), "excess": float(-r[4])} for r in rows if r[4] < -1e-9]
    text = csv_text(["x1", "x3", "value", "closed_form", "gap"], rows)
    _emit(text, cfg["out"])
    at = float(V(0.0, 0.5))
    if cfg["report"]:
        write_json(cfg["report"], make_report("dp-unweighted", ctx["config"],
                                              {"value_at_0_half": at, "max_gap": float(max(r[4] for r in rows))},
                                              violations))
    _summary(f"dp-unweighted: {len(rows)} nodes, V(0, 1/2) = {at!r}, violations {len(violations)}",
             to_stderr=not cfg["out"])
    return 1 if violations else 0


def cmd_pm_search(cfg, ctx):
    quant = [q for q in str(cfg["quant"]).split(",") if q.strip()]
    for q in quant:
        _rational(q)
    try:
        bound, wit = tree_search_pm(_rational(cfg["x1"]), _rational(cfg["x3"]), int(cfg["depth"]), quant,
                                    _rational(cfg["x3_step"]), _rational(cfg["cap"]))
    except BudgetExceeded as exc:
        _summary(f"pm-search: {exc}; best bound so far {exc.best!r}")
        return 1
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    replay_witness(wit)
    if cfg["witness"]:
        write_json(cfg["witness"], wit.to_json())
    print(f"pm-search: bound {format_rational(wit.measure)} = {bound!r} at "
          f"({format_rational(wit.x1)}, -1, {format_rational(wit.x3)})")
    return 0


def _weighted_runs(cfg, ctx, Q):
    return list(dp_weighted_iter(Q, _grid3(cfg["grid"]), int(cfg["iters"]), bool(cfg["seeded"]),
                                 x3max=float(cfg["x3max"]), workers=ctx["threads"]))


def cmd_dp_weighted(cfg, ctx):
    Q = float(cfg["Q"])
    if Q < 1:
        raise UsageError("Q must be at least 1")
    runs = _weighted_runs(cfg, ctx, Q)
    V = runs[-1]
    X1, X3, X4 = V.mesh()
    act = X1 <= X3
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(X3 > 0, V.values / np.where(X3 > 0, X3, 1.0), 0.0)
    rows = list(zip(X1[act], X3[act], X4[act], V.values[act], ratio[act]))
    _emit(csv_text(["x1", "x3", "x4", "value", "ratio"], rows), cfg["out"])
    R, arg = r_statistic(V)
    face = act[:, :, 0]
    excess = float((V.values[:, :, 0][face] - cf.b_full_array(X1[:, :, 0][face], -1.0, X3[:, :, 0][face])).max())
    violations = [{"kind": "face_exceeds_closed_form", "excess": excess}] if excess > 1e-9 else []
    if cfg["report"]:
        write_json(cfg["report"], make_report("dp-weighted", ctx["config"],
                                              {"Q": Q, "R": R, "argmax": arg, "R_by_iteration":
                                               [r_statistic(v)[0] for v in runs]}, violations))
    _summary(f"dp-weighted: Q = {Q!r}, R = {R!r}, floor (2Q-1)/2 = {(2 * Q - 1) / 2!r}",
             to_stderr=not cfg["out"])
    return 1 if violations else 0


NOTE = ("The certified values are finite-depth lower bounds; they grow linearly in Q. "
        "The Q (log Q)^(1/3) growth of the exact constant concerns the supremum over unbounded depth "
        "and is not reproduced numerically.")


def cmd_lower_bound(cfg, ctx):
    rows = []
    violations = []
    for Q in _qlist(cfg["Q"]):
        runs = _weighted_runs(cfg, ctx, Q)
        R, arg = r_statistic(runs[-1])
        floor = (2 * Q - 1) / 2
        rows.append((Q, R, floor, arg.x3))
        if cfg["seeded"] and int(cfg["iters"]) >= 2 and R < floor:
            violations.append({"Q": Q, "R": R, "floor": floor})
    text = csv_text(["Q", "R", "floor_2Q_minus_1_over_2", "argmax_x3"], rows)
    if cfg["out"]:
        write_json(cfg["out"], make_report("lower-bound", ctx["config"],
                                           {"table": [dict(zip(("Q", "R", "floor", "argmax_x3"), r)) for r in rows],
                                            "note": NOTE}, violations))
    sys.stdout.write(text)
    return 1 if violations else 0


def diagnostics_report(Q, V, steps=4096):
    R, arg = r_statistic(V)
    x4s = [x for x in (2.0, 4.0, 8.0, 16.0, 32.0, 64.0) if x <= Q] or [float(Q)]
    roots = [find_a(V, x4, steps=steps) if x4 >= 2 else None for x4 in x4s]
    roots = [r for r in roots if r is not None]
    betas = [{"x1": 0.0, "x3": 1.0, "x4": x4, "beta": beta(V, (0.0, 1.0, x4), steps), "quarter_x4": x4 / 4}
             for x4 in x4s if x4 >= 2]
    F = lambda a, b, c: beta(V, (a, b, c), steps)
    gammas = [{"x1": 0.0, "x3": x3, "x4": x4, "gamma": gamma_op(F, (0.0, x3, x4), 0.05)}
              for x4 in x4s if x4 >= 4 for x3 in (0.5, 1.0)]
    out = {"Q": Q, "R": R, "argmax": arg, "a_root": [r.to_json() for r in roots], "beta": betas,
           "gamma": gammas, "concavity": concavity_spot_check(V, Q)}
    if Q >= 4:
        out["main1"] = diagnostics_main1(V, main1_samples(Q), R, steps=steps)
        out["hx3"] = diagnostics_hx3(V, R, Q, roots, steps=steps)
    return out


def cmd_diagnostics_beta(cfg, ctx):
    per_q = []
    for Q in _qlist(cfg["Q"]):
        if Q < 2:
            raise UsageError("diagnostics need Q >= 2")
        V = _weighted_runs(cfg, ctx, Q)[-1]
        per_q.append(diagnostics_report(Q, V, int(cfg["steps"])))
    results = {"per_Q": per_q, "elementary": elementary_inequality_check()}
    report = make_report("diagnostics beta", ctx["config"], results, [])
    if cfg["out"]:
        write_json(cfg["out"], report)
        _summary(f"diagnostics: {len(per_q)} Q values, elementary inequality "
                 f"{'holds' if results['elementary']['passed'] else 'FAILS'}")
    else:
        sys.stdout.write(canonical_json(report, indent=2) + "\n")
    return 0 if results["elementary"]["passed"] else 1


def cmd_replay(cfg, ctx):
    path = cfg["witness"]
    if not path:
        raise UsageError("replay needs --witness")
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        print(canonical_json({"ok": False, "problems": [f"malformed witness: {exc}"]}, indent=2))
        return 1
    try:
        if "tree" in data:
            report = replay_witness(TreeWitness.from_json(data))
        else:
            report = replay_transform_witness(TransformWitness.from_json(data))
    except WitnessMismatch as exc:
        print(canonical_json(exc.report, indent=2))
        return 1
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        print(canonical_json({"ok": False, "problems": [f"malformed witness: {exc!r}"]}, indent=2))
        return 1
    print(canonical_json(report, indent=2))
    return 0


COMMANDS = {
    "exact eval": cmd_exact_eval,
    "exact verify": cmd_exact_verify,
    "exact triple": cmd_exact_triple,
    "dp-unweighted": cmd_dp_unweighted,
    "pm-search": cmd_pm_search,
    "dp-weighted": cmd_dp_weighted,
    "lower-bound": cmd_lower_bound,
    "diagnostics beta": cmd_diagnostics_beta,
    "replay": cmd_replay,
}


# --- parser --------------------------------------------------------------------

def _bool_flag(p, name, help_):
    p.add_argument(f"--{name}", dest=name, action="store_const", const=True, default=None, help=help_)
    p.add_argument(f"--no-{name}", dest=name, action="store_const", const=False)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand's missing option from hiding one given before it
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file with one section per command")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help=f"worker threads (env {THREADS_ENV})")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for sampled checks (default 0)")

    p = argparse.ArgumentParser(prog="weakbellman", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("exact", help="closed-form evaluation and verification")
    exs = ex.add_subparsers(dest="action", required=True)
    ev = exs.add_parser("eval", parents=[common], help="print B_full, B_boundary and M_y")
    for k in ("x1", "x2", "x3"):
        ev.add_argument(f"--{k}", type=str)
    vf = exs.add_parser("verify", parents=[common], help="sampled identity and inequality checks (JSON)")
    vf.add_argument("--samples", type=int)
    vf.add_argument("--out")
    pp = exs.add_parser("triple", parents=[common], help="exact three-node weighted triple")
    for k in ("x1", "x3", "x4"):
        pp.add_argument(f"--{k}", type=str)

    du = sub.add_parser("dp-unweighted", parents=[common], help="grid value iteration on the slice x2 = -1")
    du.add_argument("--grid", type=int)
    du.add_argument("--iters", type=int)
    du.add_argument("--x3max", type=float)
    du.add_argument("--base", choices=("boundary", "obstacle"))
    du.add_argument("--out")
    du.add_argument("--report")

    pm = sub.add_parser("pm-search", parents=[common], help="exact lattice search over +-1 trees")
    pm.add_argument("--x1", type=str)
    pm.add_argument("--x3", type=str)
    pm.add_argument("--depth", type=int)
    pm.add_argument("--quant", type=str, help="comma-separated increment magnitudes, e.g. 0,1/2,1,2")
    pm.add_argument("--x3-step", dest="x3_step", type=str)
    pm.add_argument("--cap", type=str)
    pm.add_argument("--witness")

    for name in ("dp-weighted", "lower-bound"):
        w = sub.add_parser(name, parents=[common], help="weighted slice value iteration")
        w.add_argument("--Q", type=str)
        w.add_argument("--grid", type=str, help="N1xN3xN4")
        w.add_argument("--iters", type=int)
        w.add_argument("--x3max", type=float)
        _bool_flag(w, "seeded", "include the explicit three-node moves")
        w.add_argument("--out")
        if name == "dp-weighted":
            w.add_argument("--report")

    dg = sub.add_parser("diagnostics", help="averaged-function diagnostics")
    dgs = dg.add_subparsers(dest="action", required=True)
    db = dgs.add_parser("beta", parents=[common], help="beta, gamma, a(x4), main1 and Hx3 report")
    db.add_argument("--Q", type=str)
    db.add_argument("--grid", type=str)
    db.add_argument("--iters", type=int)
    db.add_argument("--x3max", type=float)
    db.add_argument("--steps", type=int)
    _bool_flag(db, "seeded", "include the explicit three-node moves")
    db.add_argument("--out")

    rp = sub.add_parser("replay", parents=[common], help="replay a witness file exactly")
    rp.add_argument("--witness")
    return p


def _threads(flag):
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer") from None
    return os.cpu_count() or 1


def resolve(args):
    key = args.command + (f" {args.action}" if getattr(args, "action", None) else "")
    section = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {config_path}: {exc}") from None
        section = file_cfg.get(key, {})
        unknown = set(section) - set(DEFAULTS[key])
        if unknown:
            raise UsageError(f"unknown keys in config section {key!r}: {sorted(unknown)}")
    cfg = dict(DEFAULTS[key])
    cfg.update(section)
    for k in DEFAULTS[key]:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    seed = getattr(args, "seed", 0)
    # the hashed config records inputs that determine the results
    hashed = {k: v for k, v in cfg.items() if k not in ("out", "report", "witness")}
    hashed["seed"] = seed
    return key, cfg, {"seed": seed, "threads": _threads(getattr(args, "threads", None)), "config": hashed}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        key, cfg, ctx = resolve(args)
        return COMMANDS[key](cfg, ctx)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

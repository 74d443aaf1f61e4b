"""Command-line entry point: one subcommand per experiment, JSON reports on stdout or to a file."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import warnings
from fractions import Fraction
from typing import Any

import numpy as np

from . import __version__
from .arith import ResourceError, primes_up_to
from .classic import SieveParams, gpy_factor, lemma1_report, lemma2_report
from .diagonal import (
    WeightTable,
    bound_chain_slack,
    completed_square,
    g_asymptotic_report,
    g_recursion_check,
    g_sum,
    optimal_xi,
    quad_form_diagonal,
    quad_form_direct,
    t1_decomposed,
    t1_sum,
    t_integral,
    u_residual,
)
from .semigroup import IntervalScheme, PrimeBuckets, delta, enumerate_elements
from .smoothed import SmoothParams, build_setup, lemma3_report, lemma4_main_report, rho_rows
from .tuples import AdmissibleTuple, is_admissible, omega_residues, singular_series, w_product

SCHEMA = "gpysieve.report/1"
SUITE_ELEMENT_CAP = 5000

DEFAULTS: dict[str, Any] = {
    "N": 100_000,
    "R": None,
    "k": None,
    "l": 1,
    "theta": 0.5,
    "omega": 0.5,
    "tau": 2.0,
    "R0": 20.0,
    "R1": 2.0,
    "w": None,
    "z": None,
    "tuple": "0,2",
    "h": None,
    "A": None,
    "B": None,
    "mode": "desk",
    "jobs": 1,
    "out": None,
    "format": "json",
    "seed": 0,
    "cutoff": 1_000_000,
    "which": None,
    "k_max": 10,
    "thetas": None,
    "draws": 50,
    "perturb": False,
    "timing": False,
    "ledger": None,
}

# per-subcommand defaults that differ from the global ones
COMMAND_DEFAULTS = {
    "diag": {"R": 10_000.0, "z": 320.0},
    "gfun": {"z": 320.0},
    "bilinear": {"R": 10_000.0, "w": 320.0},
}


class UsageError(Exception):
    pass


def _parse_tuple(text: str) -> AdmissibleTuple:
    try:
        hs = [int(x) for x in str(text).replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise UsageError(f"malformed tuple {text!r}") from None
    if not hs:
        raise UsageError("the tuple must have at least one element")
    try:
        return AdmissibleTuple.of(hs)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return data


def _effective(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(args.command, {}))
    cfg.update(_load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    tup = _parse_tuple(cfg["tuple"])
    if cfg["k"] is not None and int(cfg["k"]) != tup.k:
        raise UsageError(f"--k {cfg['k']} disagrees with the tuple size {tup.k}")
    cfg["k"] = tup.k
    cfg["tuple"] = ",".join(str(h) for h in tup.elements)
    if cfg["R"] is None:
        cfg["R"] = float(cfg["N"]) ** 0.25
    if cfg["mode"] not in ("desk", "strict"):
        raise UsageError("mode must be desk or strict")
    return cfg


def _sieve_params(cfg) -> SieveParams:
    try:
        p = SieveParams(int(cfg["N"]), float(cfg["R"]), int(cfg["k"]), int(cfg["l"]), float(cfg["theta"]))
    except ValueError as e:
        raise UsageError(str(e)) from None
    if cfg["mode"] == "strict" and p.R > p.N:
        raise UsageError("strict mode requires R <= N")
    return p


def _smooth(cfg) -> SmoothParams:
    return SmoothParams(float(cfg["omega"]), float(cfg["tau"]), cfg["w"], cfg["mode"] == "strict")


def _scheme(cfg) -> IntervalScheme:
    try:
        return IntervalScheme.of(float(cfg["R0"]), float(cfg["R1"]))
    except ValueError as e:
        raise UsageError(str(e)) from None


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return {"num": x.numerator, "den": x.denominator, "float": float(x)}
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _check(name: str, lhs: float, rhs: float, tol: float) -> dict[str, Any]:
    scale = max(abs(lhs), abs(rhs), 1e-300)
    rel = abs(lhs - rhs) / scale
    return {"identity": name, "lhs": lhs, "rhs": rhs, "relative_error": rel, "tolerance": tol, "passed": rel <= tol}


# ---------------------------------------------------------------- commands


def cmd_tuples(cfg) -> tuple[dict, bool]:
    tup = _parse_tuple(cfg["tuple"])
    lim = max(2 * tup.bound_H, tup.k, 2) + 1
    table = [{"p": int(p), "residues": list(omega_residues(tup, int(p))), "nu": tup.nu(int(p))} for p in primes_up_to(lim)]
    adm = is_admissible(tup)
    cutoff = max(int(cfg["cutoff"]), 2 * tup.bound_H)
    s = singular_series(tup, cutoff)
    result = {
        "tuple": list(tup.elements),
        "k": tup.k,
        "admissible": adm,
        "omega_table": table,
        "singular_series": {"value": s.value, "cutoff": s.cutoff, "tail_bound": s.tail_bound},
        "W_R0": w_product(tup, float(cfg["R0"])).value,
    }
    return result, True


def cmd_lemma(cfg) -> tuple[dict, bool]:
    which = cfg["which"]
    if which not in (1, 2, 3, 4):
        raise UsageError("--which must be 1, 2, 3 or 4")
    tup = _parse_tuple(cfg["tuple"])
    params = _sieve_params(cfg)
    h = cfg["h"]
    if which in (2, 4):
        if h is None:
            raise UsageError(f"lemma {which} needs --h")
        if int(h) not in tup.elements:
            raise UsageError(f"h={h} is not in the tuple")
    if which == 4 and tup.k < 2:
        raise UsageError("lemma 4 needs k >= 2")
    jobs = int(cfg["jobs"])
    if which == 1:
        rep = lemma1_report(tup, params, jobs, int(cfg["cutoff"]))
    elif which == 2:
        rep = lemma2_report(tup, params, int(h), jobs, int(cfg["cutoff"]))
    else:
        setup = build_setup(params, _smooth(cfg), tup, _scheme(cfg), int(cfg["cutoff"]))
        rep = lemma3_report(setup, jobs) if which == 3 else lemma4_main_report(setup, int(h), jobs)
    out = rep.as_dict()
    if which in (3, 4):
        out["rows"] = rho_rows(setup.rho)
    out["route"] = "range_weights" if which in (1, 2) else "smoothed_range"
    return out, True


def _random_table(rng, elems) -> WeightTable:
    return WeightTable({D: float(rng.standard_normal()) for D in elems}, 0.0)


def diag_suite(cfg, rng) -> list[dict[str, Any]]:
    tup = _parse_tuple(cfg["tuple"])
    sc = _scheme(cfg)
    R, z = float(cfg["R"]), float(cfg["z"])
    b = PrimeBuckets(sc, tup, z)
    elems = list(enumerate_elements(sc, z, R, cap=SUITE_ELEMENT_CAP))
    checks = []

    # a single-element table: the member pair sum factors interval by interval
    for D in elems:
        lhs = quad_form_direct(WeightTable({D: 1.0}, R), tup, b)
        rhs = delta(D, tup, b) ** 2 * math.prod((1.0 + b.phi1(j) for j in D), start=1.0)
        checks.append(_check(f"pair_factorization{list(D)}", lhs, rhs, 1e-9))

    draws = int(cfg["draws"])
    worst = 0.0
    for _ in range(draws):
        xi = _random_table(rng, elems)
        c = _check("direct_vs_diagonal", quad_form_direct(xi, tup, b), quad_form_diagonal(xi, tup, b), 1e-9)
        worst = max(worst, c["relative_error"])
    checks.append({"identity": "direct_vs_diagonal", "draws": draws, "worst_relative_error": worst,
                   "tolerance": 1e-9, "passed": worst <= 1e-9})

    xi = optimal_xi(R, z, tup, b)
    if cfg["perturb"]:
        # self-test: a visible error must be caught
        key = elems[-1]
        xi = WeightTable(dict(xi.entries), xi.level, xi.scheme)
        xi.entries[key] = xi.entries[key] + 0.1
    G = g_sum(R, z, (), tup, b).value
    checks.append(_check("optimal_value", quad_form_direct(xi, tup, b), xi.xi_empty**2 / G, 1e-9))
    worst_xi = max(abs(v) for v in xi.entries.values())
    checks.append({"identity": "xi_bound", "max_abs_xi": worst_xi, "xi_empty": abs(xi.xi_empty),
                   "passed": worst_xi <= abs(xi.xi_empty) * (1 + 1e-12)})
    slack = bound_chain_slack(R, z, tup, b)
    checks.append({"identity": "bound_chain", "min_slack": slack, "passed": slack >= -1e-12})
    J = quad_form_diagonal(xi, tup, b)
    gap = abs(J - xi.xi_empty**2 / G - completed_square(xi, R, z, tup, b))
    checks.append({"identity": "completed_square", "absolute_gap": gap, "tolerance": 1e-9 * J, "passed": gap <= 1e-9 * J})

    # perturbations that keep xi(emptyset) fixed cannot lower the form
    J0 = quad_form_direct(xi, tup, b)
    low = math.inf
    for _ in range(draws):
        d = _random_table(rng, elems)
        d.entries[()] = 0.0
        low = min(low, (quad_form_direct(xi.plus(d.scaled(0.01)), tup, b) - J0) / J0)
    checks.append({"identity": "minimality", "draws": draws, "min_relative_gain": low, "passed": low >= -1e-9})

    gens = sc.generators(z)
    worst2 = worst5 = worst4 = 0.0
    for _ in range(draws):
        y = float(math.exp(rng.uniform(0, math.log(R))))
        Q = tuple(j for j in gens if rng.random() < 0.3)
        lhs = g_sum(y, z, Q, tup, b).value * math.log(y)
        rhs = t_integral(y, z, Q, tup, b) + t1_sum(y, z, Q, tup, b)
        worst2 = max(worst2, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        t1 = t1_sum(y, z, Q, tup, b)
        worst4 = max(worst4, abs(t1 - t1_decomposed(y, z, Q, tup, b)) / max(abs(t1), 1.0))
        free = [j for j in gens if j not in Q]
        if free:
            P = free[int(rng.integers(len(free)))]
            res = g_recursion_check(y, z, Q, P, tup, b)
            worst5 = max(worst5, abs(res) / g_sum(y, z, Q, tup, b).value)
    checks.append({"identity": "G_log_split", "worst_relative_error": worst2, "tolerance": 1e-9, "passed": worst2 <= 1e-9})
    checks.append({"identity": "T1_decomposition", "worst_relative_error": worst4, "tolerance": 1e-9, "passed": worst4 <= 1e-9})
    checks.append({"identity": "G_recursion", "worst_relative_error": worst5, "tolerance": 1e-9, "passed": worst5 <= 1e-9})
    return checks


def cmd_diag(cfg) -> tuple[dict, bool]:
    rng = np.random.default_rng(int(cfg["seed"]))
    checks = diag_suite(cfg, rng)
    ok = all(c["passed"] for c in checks)
    return {"checks": checks, "all_passed": ok, "route": "direct+diagonal"}, ok


def cmd_gfun(cfg) -> tuple[dict, bool]:
    tup = _parse_tuple(cfg["tuple"])
    sc = _scheme(cfg)
    z = float(cfg["z"])
    zs = [z, 4 * z]
    b = PrimeBuckets(sc, tup, max(zs))
    rows = []
    for zz in zs:
        gens = sc.generators(zz)
        Qs = [(), tuple(gens[:1]), tuple(gens[-1:]), tuple(gens[::2])]
        reps = [g_asymptotic_report(zz, Q, tup, b, int(cfg["cutoff"])) for Q in Qs]
        ratios = [r.ratio for r in reps]
        U = u_residual(zz, zz, (), tup, b)
        rows.append(
            {
                "z": zz,
                "G": reps[0].empirical,
                "main_term": reps[0].main_term,
                "ratio": ratios[0],
                "error_scale": reps[0].notes["error_scale"],
                "Q_spread": max(ratios) - min(ratios),
                "Q_ratios": {str(list(Q)): r for Q, r in zip(Qs, ratios)},
                "U_over_G_log_R0": U["ratio"],
            }
        )
    closer = abs(rows[1]["ratio"] - 1) < abs(rows[0]["ratio"] - 1)
    return {"rows": rows, "closer_at_larger_z": closer}, True


def cmd_bilinear(cfg) -> tuple[dict, bool]:
    from .bilinear import (
        RemainderOracle,
        ab_budget,
        decomposition_check,
        error_sum_bilinear,
        error_sum_direct,
        remainder_scaling_diagnostic,
    )

    tup = _parse_tuple(cfg["tuple"])
    if tup.k < 2:
        raise UsageError("the remainder needs k >= 2")
    h = int(cfg["h"]) if cfg["h"] is not None else tup.elements[0]
    if h not in tup.elements:
        raise UsageError(f"h={h} is not in the tuple")
    params = _sieve_params(cfg)
    setup = build_setup(params, _smooth(cfg), tup, _scheme(cfg), int(cfg["cutoff"]))
    budget = ab_budget(setup)
    A = float(cfg["A"]) if cfg["A"] is not None else float(cfg["R"])
    if A < 1:
        raise UsageError("A must be at least 1")
    if cfg["B"] is not None and abs(float(A) * float(cfg["B"]) - budget) > 1e-9 * budget:
        raise UsageError(f"A*B must equal R0^(2 tau) R^2 w = {budget:.6g}")
    oracle = RemainderOracle(params.N, tup, h)
    direct = error_sum_direct(setup, h, oracle)
    rows = [] if cfg["ledger"] else None
    value, ledger = error_sum_bilinear(setup, h, A, oracle, rows.append if rows is not None else None)
    if rows is not None:
        with open(cfg["ledger"], "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=["a", "b", "alpha", "beta", "contribution"])
            wr.writeheader()
            wr.writerows(rows)
    eq = _check("bilinear_vs_direct", value, direct, 1e-9)
    ok = eq["passed"] and ledger.support_ok and ledger.coefficients_ok
    return {
        "direct": direct,
        "bilinear": value,
        "equality": eq,
        "ledger": ledger.as_dict(),
        "budget_AB": budget,
        "decomposition": decomposition_check(setup, h, direct, int(cfg["jobs"])),
        "diagnostic": remainder_scaling_diagnostic([setup], [[h]]),
        "route": "direct+bilinear",
        "all_passed": ok,
    }, ok


def cmd_optimize(cfg) -> tuple[dict, bool]:
    k_max = int(cfg["k_max"])
    thetas = cfg["thetas"] if cfg["thetas"] is not None else [str(cfg["theta"])]
    if isinstance(thetas, str):
        thetas = [t for t in thetas.split(",") if t]
    if k_max < 1 or not thetas:
        raise UsageError("the (k, l, theta) grid is empty")
    rows = []
    best = {}
    for t in thetas:
        th = Fraction(str(t))
        for k in range(1, k_max + 1):
            for ell in range(1, k + 1):
                f = gpy_factor(k, ell, th)
                rows.append({"theta": str(th), "k": k, "l": ell, "factor": str(f), "factor_float": float(f)})
                cur = best.get(str(th))
                if cur is None or f > Fraction(cur["factor"]):
                    best[str(th)] = {"k": k, "l": ell, "factor": str(f), "factor_float": float(f)}
    return {"rows": rows, "best": best}, True


COMMANDS = {
    "tuples": cmd_tuples,
    "lemma": cmd_lemma,
    "diag": cmd_diag,
    "gfun": cmd_gfun,
    "bilinear": cmd_bilinear,
    "optimize": cmd_optimize,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values; flags override it")
    common.add_argument("--N", type=int)
    common.add_argument("--R", type=float)
    common.add_argument("--k", type=int)
    common.add_argument("--l", type=int)
    common.add_argument("--theta", type=float)
    common.add_argument("--omega", type=float)
    common.add_argument("--tau", type=float)
    common.add_argument("--R0", type=float)
    common.add_argument("--R1", type=float)
    common.add_argument("--w", type=float)
    common.add_argument("--z", type=float)
    common.add_argument("--tuple", help='offsets, e.g. "0,2,6"')
    common.add_argument("--h", type=int)
    common.add_argument("--A", type=float)
    common.add_argument("--B", type=float)
    common.add_argument("--mode", choices=["desk", "strict"])
    common.add_argument("--jobs", type=int)
    common.add_argument("--out")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--seed", type=int)
    common.add_argument("--cutoff", type=int)
    common.add_argument("--timing", action="store_true", help="include wall time (breaks byte-identical output)")

    parser = argparse.ArgumentParser(prog="gpysieve", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("tuples", parents=[common], help="admissibility, class table and singular series")
    p = sub.add_parser("lemma", parents=[common], help="empirical sums against their main terms")
    p.add_argument("--which", type=int, choices=[1, 2, 3, 4])
    p = sub.add_parser("diag", parents=[common], help="diagonalization and G-sum identity suite")
    p.add_argument("--draws", type=int)
    p.add_argument("--perturb", action="store_true", help="corrupt the optimal weights (self-test)")
    sub.add_parser("gfun", parents=[common], help="G-sum asymptotics at z and 4z")
    p = sub.add_parser("bilinear", parents=[common], help="remainder: direct against bilinear regrouping")
    p.add_argument("--ledger", help="write the ledger rows as CSV to this path")
    p = sub.add_parser("optimize", parents=[common], help="positivity factor over a (k, l, theta) grid")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--thetas", help="comma-separated list, e.g. 1/2,1")
    return parser


def _to_csv(result: dict) -> str:
    buf = io.StringIO()
    rows = result.get("rows") or result.get("checks")
    if isinstance(rows, list) and rows and isinstance(rows[0], dict):
        keys = sorted({k for r in rows for k in r})
        wr = csv.DictWriter(buf, fieldnames=keys)
        wr.writeheader()
        for r in rows:
            wr.writerow({k: json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v for k, v in r.items()})
        return buf.getvalue()
    wr = csv.writer(buf)
    wr.writerow(["key", "value"])

    def walk(prefix, x):
        if isinstance(x, dict):
            for k in sorted(x):
                walk(f"{prefix}.{k}" if prefix else str(k), x[k])
        elif isinstance(x, list):
            wr.writerow([prefix, json.dumps(x, sort_keys=True)])
        else:
            wr.writerow([prefix, x])

    walk("", result)
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective(args)
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result, ok = COMMANDS[args.command](cfg)
        report = {
            "schema": SCHEMA,
            "experiment": args.command,
            "version": __version__,
            "mode": cfg["mode"],
            "config": cfg,
            "result": result,
            "warnings": sorted({str(w.message) for w in caught}),
            "passed": ok,
        }
        if cfg["timing"]:
            report["wall_time_s"] = time.perf_counter() - start
    except UsageError as e:
        parser.error(str(e))
    except ResourceError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    report = _clean(report)
    text = _to_csv(report["result"]) if cfg["format"] == "csv" else json.dumps(report, sort_keys=True, indent=2) + "\n"
    if cfg["out"]:
        with open(cfg["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())

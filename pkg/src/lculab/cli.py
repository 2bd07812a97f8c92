"""Command-line harness: coefficient tables, scans, Monte Carlo campaigns and cost plans.

Every subcommand is deterministic given ``--seed``.  Data goes to CSV (or JSON
for plans) at ``--out``; a ``<out>.meta.json`` sidecar records the fully
materialized arguments, plus a timestamp unless ``--reproducible`` is given.
The exit status is 0 only if every embedded check passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import nbinom

from . import costmodel
from .errors import LculabError
from .exactcoeff import (KAPPA_INF, MpfSpec, build_mpf_spec, choose_gamma, critical_gamma,
                         kappa_lower_bound, verify_order_conditions)
from .exactcoeff import kappa as kappa_of
from .lcu import ProtocolConfig, max_pairwise_distance, run_campaign, write_trials_csv
from .numerics import (assemble_mpf_matrix, exact_evolution, fit_loglog_slope, mpf_integrators,
                       random_state, random_term_list, spectral_norm)
from .optimality import (general_circuit_success, optimal_protocol, random_feasible_protocol,
                         success_upper_bound)

CLI_SNAP_TOL = 1e-3


def fmt(x) -> str:
    if isinstance(x, Fraction):
        return format(float(x), ".17g")
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def rational(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def kappa_str(kap) -> str:
    return "inf" if kap is KAPPA_INF else fmt(kap)


class Checks:
    """Collects embedded assertions; failures are reported with bound and measured value."""

    def __init__(self):
        self.failures: list[str] = []

    def expect(self, ok: bool, what: str, measured, bound) -> None:
        if not ok:
            self.failures.append(f"{what}: measured {measured}, bound {bound}")

    def report(self, out) -> int:
        for f in self.failures:
            print(f"CHECK FAILED  {f}", file=out)
        if not self.failures:
            print("all checks passed", file=out)
        return 1 if self.failures else 0


def write_rows(path: str | None, header: list[str], rows: list[list]) -> None:
    if path is None:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_meta(args: argparse.Namespace, extra: dict | None = None) -> None:
    if not args.out:
        return
    meta = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    if extra:
        meta.update(extra)
    if not args.reproducible:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat()
    Path(args.out + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def spec_from_args(args) -> MpfSpec:
    """Resolve --ells / --gamma / --delta into a spec; --delta uses choose_gamma."""
    chi = args.chi
    if getattr(args, "ells", None):
        return MpfSpec.from_ells([int(x) for x in args.ells.split(",")], chi=chi)
    k = args.k
    if k is None or k < 1:
        raise LculabError(f"--k must be >= 1, got {k}")
    if args.gamma is not None:
        return build_mpf_spec(k, chi, args.gamma, snap_tol=CLI_SNAP_TOL)
    if args.delta is not None:
        return build_mpf_spec(k, chi, choose_gamma(k, args.delta))
    return build_mpf_spec(k, chi, math.log(k + 1) / (k + 1))


# --- subcommands -----------------------------------------------------------------


def cmd_coeffs(args, out) -> int:
    checks = Checks()
    spec = spec_from_args(args)
    print(f"k={spec.k} chi={spec.chi} gamma={fmt(spec.gamma)}", file=out)
    print(f"{'q':>3} {'ell':>8}  {'C_q (exact)':>28}  {'C_q':>24}", file=out)
    rows = []
    for q, (ell, c) in enumerate(zip(spec.ells, spec.coeffs), start=1):
        print(f"{q:>3} {ell:>8}  {rational(c):>28}  {fmt(c):>24}", file=out)
        rows.append([q, ell, rational(c), fmt(c)])
    kap = spec.kappa
    ok = verify_order_conditions(spec)
    print(f"kappa = {kappa_str(kap)}" + ("" if kap is KAPPA_INF else f" ({rational(kap)})"), file=out)
    print(f"order conditions: {'satisfied' if ok else 'VIOLATED'}", file=out)
    checks.expect(ok, "order conditions", "violated", "exact")
    if args.delta is not None and not getattr(args, "ells", None):
        lb = kappa_lower_bound(spec.k, choose_gamma(spec.k, args.delta))
        print(f"kappa lower bound = {fmt(lb)}", file=out)
        checks.expect(kap >= lb, "kappa vs lower bound", kappa_str(kap), fmt(lb))
    write_rows(args.out, ["q", "ell", "coeff_rational", "coeff"], rows)
    write_meta(args, {"spec": spec.to_dict()})
    return checks.report(out)


def kappa_scan_rows(k_min: int, k_max: int, offsets: list[float], chi: int = 1) -> list[list]:
    gc = critical_gamma()
    rows = []
    for off in offsets:
        for k in range(k_min, k_max + 1):
            spec = build_mpf_spec(k, chi, gc + off)
            kap = spec.kappa
            rows.append([k, off, spec.gamma, spec.ells[-1], float(kap), kap])
    return rows


def cmd_kappa_scan(args, out) -> int:
    offsets = [float(x) for x in args.offsets.split(",")]
    if args.k_min < 1 or args.k_max < args.k_min:
        raise LculabError("need 1 <= k-min <= k-max")
    rows = kappa_scan_rows(args.k_min, args.k_max, offsets, args.chi)
    print(f"gamma_c = {fmt(critical_gamma())}", file=out)
    for off in offsets:
        ks = [r[0] for r in rows if r[1] == off]
        kaps = [r[4] for r in rows if r[1] == off]
        print(f"offset {off:+.3f}: kappa(k={ks[0]}) = {kaps[0]:.6g}, kappa(k={ks[-1]}) = {kaps[-1]:.6g}", file=out)
    write_rows(args.out, ["k", "gamma_offset", "gamma", "ell_last", "kappa", "kappa_rational"],
               [r[:5] + [rational(r[5])] for r in rows])
    write_meta(args)
    return 0


def cmd_order_scan(args, out) -> int:
    checks = Checks()
    spec = spec_from_args(args)
    terms = random_term_list(2, args.m, args.h, args.seed)
    lo, hi, n = args.lambdas.split(",")
    lams = np.logspace(math.log10(float(lo)), math.log10(float(hi)), int(n))
    rows, errs, defects = [], [], []
    for lam in lams:
        M = assemble_mpf_matrix(spec, terms, lam)
        err = spectral_norm(M - exact_evolution(terms, lam))
        defect = spectral_norm(M.conj().T @ M - np.eye(terms.dim))
        bound = None
        if spec.chi == spec.k and costmodel.mpf_error_bound_valid(spec.k, terms.m, args.h, lam):
            bound = costmodel.mpf_error_bound(spec.k, terms.m, args.h, lam)
            checks.expect(err <= bound, f"error bound at lambda={lam:.6g}", fmt(err), fmt(bound))
        rows.append([lam, err, defect, bound])
        errs.append(err)
        defects.append(defect)
    target = 2 * (spec.k + spec.chi) + 1
    for name, ys in (("error", errs), ("unitarity defect", defects)):
        try:
            slope, used = fit_loglog_slope(lams, ys)
            print(f"{name} slope = {slope:.4f} over {used} points (error order target {target})", file=out)
        except LculabError as e:
            print(f"{name} slope unavailable: {e}", file=out)
    write_rows(args.out, ["lambda", "error", "unitarity_defect", "error_bound"], rows)
    write_meta(args, {"spec": spec.to_dict()})
    return checks.report(out)


def exhaustion_probability(r: int, budget: int, p_fail: float) -> float:
    """P(budget runs out) when each attempt fails independently with p_fail.

    A success costs one unit and a failure two (attempt plus correction), so
    the run completes iff the failures before the r-th success number at most
    floor((budget - r) / 2).
    """
    if p_fail <= 0:
        return 0.0
    allowed = (budget - r) // 2
    return float(1 - nbinom.cdf(allowed, r, 1 - p_fail))


def _trial_setup(cfg: dict):
    terms = random_term_list(cfg.get("n_qubits", 2), cfg.get("m", 2), cfg.get("h", 1.0), cfg.get("terms_seed", 7))
    s = cfg["spec"]
    chi = int(s.get("chi", 1))
    if "ells" in s:
        coeffs = [Fraction(c) for c in s["coeffs"]] if "coeffs" in s else None
        spec = MpfSpec.from_ells(s["ells"], chi=chi, coeffs=coeffs)
    elif "delta" in s:
        spec = build_mpf_spec(int(s["k"]), chi, choose_gamma(int(s["k"]), float(s["delta"])))
    else:
        spec = build_mpf_spec(int(s["k"]), chi, float(s["gamma"]), snap_tol=CLI_SNAP_TOL)
    config = ProtocolConfig(spec=spec, r=int(cfg["r"]), budget=cfg.get("budget"),
                            abort_on_addition_failure=bool(cfg.get("abort_on_addition_failure", True)))
    return terms, float(cfg.get("t", 1.0)), config


def cmd_trials(args, out) -> int:
    checks = Checks()
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise LculabError(f"cannot read config {args.config}: {e}") from e
    if not isinstance(cfg, dict) or "spec" not in cfg or "r" not in cfg:
        raise LculabError("config must be a JSON object with at least 'spec' and 'r'")
    terms, t, config = _trial_setup(cfg)
    records = run_campaign(terms, t, config, args.trials, args.seed)

    n = len(records)
    succ = sum(r.succeeded for r in records)
    attempts = sum(r.subtraction_attempts for r in records)
    sub_fail = sum(r.corrections_applied for r in records)
    add_fail = sum(r.addition_failures for r in records)
    exhausted = sum(r.failure_reason == "budget" for r in records)
    print(f"trials={n} success_rate={succ / n:.6g} mean_attempts={attempts / n:.6g} "
          f"max_exponentials={max(r.exponentials_consumed for r in records)}", file=out)

    spec = config.spec
    lam = t / config.r
    if attempts:
        kap = spec.kappa
        rate = sub_fail / attempts
        bound = 0.0 if kap is KAPPA_INF else min(1.0, 4 / float(kap))
        sigma = math.sqrt(max(bound * (1 - bound), 1 / attempts) / attempts)
        print(f"subtraction failure rate {rate:.6g} (bound 4/kappa = {bound:.6g})", file=out)
        checks.expect(rate <= bound + 3 * sigma, "subtraction failure rate", fmt(rate), fmt(bound + 3 * sigma))

        delta = max_pairwise_distance(mpf_integrators(spec, terms, lam))
        add_bound = min(1.0, spec.k * delta ** 2 / 4)
        add_rate = add_fail / attempts
        sigma = math.sqrt(max(add_bound * (1 - add_bound), 1 / attempts) / attempts)
        print(f"addition failure rate {add_rate:.6g} (bound k Delta^2/4 = {add_bound:.6g})", file=out)
        checks.expect(add_rate <= add_bound + 3 * sigma, "addition failure rate", fmt(add_rate),
                      fmt(add_bound + 3 * sigma))

        predicted = exhaustion_probability(config.r, config.budget, rate)
        print(f"budget exhaustion {exhausted / n:.6g} (independent-attempt model {predicted:.6g})", file=out)
        if rate <= 0.5 and config.budget >= 5 * config.r:
            chern = math.exp(-config.r / 13)
            sigma = math.sqrt(max(chern * (1 - chern), 1 / n) / n)
            checks.expect(exhausted / n <= chern + 3 * sigma, "budget exhaustion", fmt(exhausted / n),
                          fmt(chern + 3 * sigma))

    for rec in records:
        checks.expect(rec.subtraction_attempts + rec.corrections_applied <= config.budget,
                      f"budget (seed {rec.rng_seed})", rec.subtraction_attempts + rec.corrections_applied,
                      config.budget)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_trials_csv(records, fh)
    write_meta(args, {"config": cfg, "spec": spec.to_dict(), "budget": config.budget})
    return checks.report(out)


def cmd_cost(args, out) -> int:
    checks = Checks()
    plan = costmodel.build_plan(args.m, args.h, args.t, args.eps, args.beta)
    for problem in plan.check():
        checks.expect(False, "plan invariant", problem, "consistent")
    text = plan.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text, file=out)
    log_ratio = math.log(args.m * args.h * args.t / plan.eps_tilde)
    print(f"k_opt coefficient = {costmodel.k_opt_coefficient():.4f}", file=out)
    print(f"log(mht/eps_tilde) = {log_ratio:.6g}  k_opt = {plan.k}", file=out)
    rate = costmodel.dominant_rate()
    print(f"{'k':>3} {'this rate':>10} {'BACS07':>8} {'WBHS10':>8} {'log factor':>12} "
          f"{'log BACS07':>12} {'log WBHS10':>12}", file=out)
    for k in range(1, max(6, 2 * plan.k) + 1):
        mine = costmodel.dominant_factor_log(k, log_ratio)
        a = costmodel.prior_factor_log("BACS07", k, log_ratio)
        b = costmodel.prior_factor_log("WBHS10", k, log_ratio)
        print(f"{k:>3} {rate * k:>10.4f} {3.22 * k:>8.2f} {2.13 * k:>8.2f} {mine:>12.4f} {a:>12.4f} {b:>12.4f}",
              file=out)
    checks.expect(rate < costmodel.PRIOR_EXPONENTS["BACS07"], "per-k rate vs 3.22", fmt(rate), 3.22)
    write_meta(args)
    return checks.report(out)


def _parse_coeffs(text: str) -> list[Fraction]:
    return [Fraction(x.strip()) for x in text.split(",") if x.strip()]


def cmd_optimal(args, out) -> int:
    checks = Checks()
    coeffs = _parse_coeffs(args.coeffs) if args.coeffs else list(spec_from_args(args).coeffs)
    if not any(coeffs):
        raise LculabError("coefficients are all zero")
    bound = success_upper_bound(coeffs)
    rng = np.random.default_rng(args.seed)
    dim = 4
    X = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    U, _ = np.linalg.qr(X)
    same = [U] * len(coeffs)
    best_opt, best_rand, rows = 0.0, 0.0, []
    for i in range(args.trials):
        psi = random_state(dim, rng)
        s_opt = general_circuit_success(optimal_protocol(coeffs, same), psi)
        s_rand = general_circuit_success(random_feasible_protocol(coeffs, same, rng), psi)
        best_opt, best_rand = max(best_opt, s_opt), max(best_rand, s_rand)
        rows.append([i, s_opt, s_rand, bound])
        checks.expect(s_opt <= bound + 1e-12, f"optimal protocol, state {i}", fmt(s_opt), fmt(bound))
        checks.expect(s_rand <= bound + 1e-12, f"random protocol, state {i}", fmt(s_rand), fmt(bound))
    kap = kappa_of(coeffs)
    print(f"kappa = {kappa_str(kap)}", file=out)
    print(f"success upper bound = {bound:.12g}", file=out)
    print(f"optimal protocol max success = {best_opt:.12g} (gap {bound - best_opt:.3g})", file=out)
    print(f"random feasible protocols max success = {best_rand:.12g}", file=out)
    write_rows(args.out, ["state", "optimal_success", "random_success", "bound"], rows)
    write_meta(args, {"coeffs_resolved": [rational(c) for c in coeffs]})
    return checks.report(out)


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=7, help="RNG seed (default 7)")
    common.add_argument("--out", help="write data to this path (CSV, or JSON for cost)")
    common.add_argument("--reproducible", action="store_true", help="omit the timestamp from metadata")

    spec_opts = argparse.ArgumentParser(add_help=False)
    spec_opts.add_argument("--k", type=int, default=1)
    spec_opts.add_argument("--chi", type=int, default=1)
    g = spec_opts.add_mutually_exclusive_group()
    g.add_argument("--gamma", type=float, help="growth parameter for the last repetition number")
    g.add_argument("--delta", type=float, help="target subtraction failure probability")
    g.add_argument("--ells", help="explicit comma-separated repetition numbers")

    p = argparse.ArgumentParser(prog="lculab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("coeffs", parents=[common, spec_opts], help="exact coefficients and kappa")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("kappa-scan", parents=[common], help="exact kappa over k near gamma_c")
    s.add_argument("--k-min", type=int, default=2)
    s.add_argument("--k-max", type=int, default=16)
    s.add_argument("--chi", type=int, default=1)
    s.add_argument("--offsets", default="-0.05,0,0.05", help="gamma - gamma_c offsets")
    s.set_defaults(func=cmd_kappa_scan)

    s = sub.add_parser("order-scan", parents=[common, spec_opts], help="error and unitarity vs lambda")
    s.add_argument("--m", type=int, default=2)
    s.add_argument("--h", type=float, default=1.0)
    s.add_argument("--lambdas", default="1e-3,2,120", help="lo,hi,count of a log-spaced grid")
    s.set_defaults(func=cmd_order_scan)

    s = sub.add_parser("trials", parents=[common], help="Monte Carlo campaign from a JSON config")
    s.add_argument("config", help="JSON file: spec, r, and optional budget, t, m, h, n_qubits, terms_seed, abort_on_addition_failure")
    s.add_argument("--trials", type=int, default=1000)
    s.set_defaults(func=cmd_trials)

    s = sub.add_parser("cost", parents=[common], help="cost plan and scaling comparison")
    s.add_argument("--m", type=int, default=1)
    s.add_argument("--h", type=float, default=1.0)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--beta", type=float, default=0.1)
    s.set_defaults(func=cmd_cost)

    s = sub.add_parser("optimal", parents=[common, spec_opts], help="success ceiling vs prepare/measure protocols")
    s.add_argument("--coeffs", help="comma-separated coefficients, e.g. -1/3,4/3")
    s.add_argument("--trials", type=int, default=100)
    s.set_defaults(func=cmd_optimal)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except LculabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

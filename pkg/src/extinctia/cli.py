"""Command-line driver: analysis, oracles, simulation, verification, and
figure data.

Exit codes: 0 success, 1 validation or usage error, 2 cross-check
disagreement from `verify` (including the intentional failure of
--negative-control).
"""
import argparse
import json
import math
import sys
import time
from dataclasses import dataclass

import numpy as np

from .feller_path import (
    FellerModel,
    closed_form_exponent,
    most_likely_path_cont,
    printed_exponent,
    riccati_exponent_oracle,
    variational_oracle,
)
from .gw_path import (
    DpOracleConfig,
    dp_oracle,
    extinction_exponent_discrete,
    legendre,
    most_likely_extinction_path,
    path_rate,
)
from .mc_sim import FellerSimConfig, GwSimConfig, feller_extinction_mc, gw_extinction_mc
from .offspring import OffspringDistribution, pgf_iterates
from .reportio import (
    FELLER_KIND,
    GW_KIND,
    ExponentEntry,
    RateReport,
    SpecError,
    _csv_text,
    apply_overrides,
    build_feller_report,
    build_gw_report,
    emit_csv,
    parse_model_spec,
    report_to_json,
)

SUBCOMMANDS = (
    "analyze-gw",
    "analyze-feller",
    "oracle-dp",
    "oracle-variational",
    "oracle-riccati",
    "simulate-gw",
    "simulate-feller",
    "verify",
    "figure",
)


@dataclass(frozen=True)
class CliInvocation:
    """One parsed command line."""

    subcommand: str
    spec_path: str = None
    output_path: str = None
    seed: int = None
    reps: int = None
    grid: int = None
    scheme: str = None
    quiet: bool = False
    negative_control: bool = False


def build_parser():
    parser = argparse.ArgumentParser(
        prog="extinctia",
        description="Extinction-path analysis for branching processes: "
        "closed forms, independent oracles, and Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "analyze-gw": "full discrete-model report: path, exponents, oracles, MC",
        "analyze-feller": "full continuous-model report with the printed-constant adjudication",
        "oracle-dp": "grid dynamic-programming oracle only",
        "oracle-variational": "tridiagonal variational oracle only",
        "oracle-riccati": "linear-ODE exponent oracle only",
        "simulate-gw": "Monte Carlo extinction run, discrete model",
        "simulate-feller": "Monte Carlo extinction run, continuous model",
        "verify": "cross-check every route against every other; exit 2 on disagreement",
        "figure": "likely-path CSV for binary splitting, p in {0.2, 0.5, 0.8}, N=8",
    }
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("--spec", dest="spec_path", metavar="PATH", help="model spec JSON")
        sp.add_argument("--out", dest="output_path", metavar="PATH",
                        help="output file; .csv extension selects CSV, else JSON")
        sp.add_argument("--seed", type=int, help="override the spec's RNG seed")
        sp.add_argument("--reps", type=int, help="override the spec's Monte Carlo replicas")
        sp.add_argument("--grid", type=int,
                        help="override grid_points (discrete) or n_steps (continuous)")
        sp.add_argument("--scheme", choices=["exact", "euler"],
                        help="override the continuous simulation scheme")
        sp.add_argument("--quiet", action="store_true", help="suppress progress lines")
        if name == "verify":
            sp.add_argument("--negative-control", action="store_true",
                            help="perturb the reference exponent by 1%%; must exit 2")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; 2 is reserved for verify
        # disagreement here, so usage problems map to 1
        return 0 if e.code in (0, None) else 1
    inv = CliInvocation(
        subcommand=ns.subcommand,
        spec_path=ns.spec_path,
        output_path=ns.output_path,
        seed=ns.seed,
        reps=ns.reps,
        grid=ns.grid,
        scheme=ns.scheme,
        quiet=ns.quiet,
        negative_control=getattr(ns, "negative_control", False),
    )
    return run(inv)


def run(invocation):
    """Execute one invocation, returning the process exit code."""
    try:
        return _dispatch(invocation)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def _dispatch(inv):
    if inv.subcommand == "figure":
        return _cmd_figure(inv)
    if inv.spec_path is None:
        raise SpecError("--spec", "required for every subcommand except figure")
    try:
        with open(inv.spec_path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise SpecError("--spec", f"cannot read {inv.spec_path!r}: {e}")
    spec = parse_model_spec(text)
    spec = apply_overrides(spec, seed=inv.seed, reps=inv.reps, grid=inv.grid,
                           scheme=inv.scheme)
    handler = {
        "analyze-gw": _cmd_analyze_gw,
        "analyze-feller": _cmd_analyze_feller,
        "oracle-dp": _cmd_oracle_dp,
        "oracle-variational": _cmd_oracle_variational,
        "oracle-riccati": _cmd_oracle_riccati,
        "simulate-gw": _cmd_simulate_gw,
        "simulate-feller": _cmd_simulate_feller,
        "verify": _cmd_verify,
    }[inv.subcommand]
    return handler(inv, spec)


def _require_kind(spec, kind):
    if spec.kind != kind:
        raise SpecError("kind", f"this subcommand needs kind {kind!r}, got {spec.kind!r}")


def _write_report(inv, report, csv_which):
    if inv.output_path is None:
        sys.stdout.write(report_to_json(report))
        return
    if inv.output_path.endswith(".csv"):
        text = emit_csv(report, csv_which)
    else:
        text = report_to_json(report)
    with open(inv.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    if not inv.quiet:
        print(f"wrote {inv.output_path}", file=sys.stderr)


def _summarize(inv, report):
    if inv.quiet:
        return
    print(f"rate_value = {report.rate_value:.9g}", file=sys.stderr)
    for e in report.exponents:
        se = f" (se {e.std_error:.3g})" if e.std_error is not None else ""
        print(f"exponent[{e.provenance}] = {e.value:.9g}{se}", file=sys.stderr)
    for name, flag in report.discrepancy_flags.items():
        print(f"discrepancy[{name}] = {flag}", file=sys.stderr)
    if report.mc is not None:
        print(
            f"mc frequency = {report.mc['frequency']:.6g} "
            f"(n_extinct {report.mc['n_extinct']}, "
            f"wilson [{report.mc['wilson_low']:.6g}, {report.mc['wilson_high']:.6g}])",
            file=sys.stderr,
        )


def _cmd_analyze_gw(inv, spec):
    _require_kind(spec, GW_KIND)
    report = build_gw_report(spec)
    _write_report(inv, report, "path")
    _summarize(inv, report)
    return 0


def _cmd_analyze_feller(inv, spec):
    _require_kind(spec, FELLER_KIND)
    report = build_feller_report(spec)
    _write_report(inv, report, "path")
    _summarize(inv, report)
    return 0


def _cmd_oracle_dp(inv, spec):
    _require_kind(spec, GW_KIND)
    cfg = DpOracleConfig(grid_max=spec.grid_max, grid_points=spec.grid_points,
                         horizon=spec.N)
    t0 = time.perf_counter()
    dp_path, value = dp_oracle(spec.offspring, cfg)
    report = RateReport(
        kind=spec.kind,
        model={"kind": spec.kind, "offspring_probs": list(spec.offspring.probs),
               "N": spec.N, "grid_points": spec.grid_points, "grid_max": spec.grid_max},
        path_table={"n": tuple(range(spec.N + 1)), "u_dp": dp_path.u},
        rate_value=value,
        exponents=(ExponentEntry("dp_oracle", -value),),
        discrepancy_flags={},
        timings={"dp_oracle": time.perf_counter() - t0},
    )
    _write_report(inv, report, "path")
    _summarize(inv, report)
    return 0


def _cmd_oracle_variational(inv, spec):
    _require_kind(spec, FELLER_KIND)
    model = FellerModel(alpha=spec.alpha, sigma2=spec.sigma2, T=spec.T, K=spec.K)
    t0 = time.perf_counter()
    path, value = variational_oracle(model, spec.n_steps)
    ts = np.linspace(0.0, model.T, spec.n_steps + 1)
    report = RateReport(
        kind=spec.kind,
        model={"kind": spec.kind, "alpha": model.alpha, "sigma2": model.sigma2,
               "T": model.T, "K": model.K, "n_steps": spec.n_steps},
        path_table={"t": tuple(float(t) for t in ts), "u_oracle": path.u},
        rate_value=value,
        exponents=(ExponentEntry("variational_oracle", -value),),
        discrepancy_flags={},
        timings={"variational_oracle": time.perf_counter() - t0},
    )
    _write_report(inv, report, "path")
    _summarize(inv, report)
    return 0


def _cmd_oracle_riccati(inv, spec):
    _require_kind(spec, FELLER_KIND)
    model = FellerModel(alpha=spec.alpha, sigma2=spec.sigma2, T=spec.T, K=spec.K)
    t0 = time.perf_counter()
    value = riccati_exponent_oracle(model, 1e9, max(1000, spec.n_steps))
    report = RateReport(
        kind=spec.kind,
        model={"kind": spec.kind, "alpha": model.alpha, "sigma2": model.sigma2,
               "T": model.T, "K": model.K},
        path_table={},
        rate_value=value,
        exponents=(ExponentEntry("riccati_oracle", -value),),
        discrepancy_flags={},
        timings={"riccati_oracle": time.perf_counter() - t0},
    )
    _write_report(inv, report, "exponents")
    _summarize(inv, report)
    return 0


def _require_reps(spec):
    if spec.reps < 1:
        raise SpecError("reps", "simulation needs reps >= 1 (set in the spec or --reps)")


def _cmd_simulate_gw(inv, spec):
    _require_kind(spec, GW_KIND)
    _require_reps(spec)
    report = build_gw_report(spec, include_dp=False)
    _write_report(inv, report, "mc")
    _summarize(inv, report)
    return 0


def _cmd_simulate_feller(inv, spec):
    _require_kind(spec, FELLER_KIND)
    _require_reps(spec)
    report = build_feller_report(spec)
    _write_report(inv, report, "mc")
    _summarize(inv, report)
    return 0


def _simpson(f, a, b, n):
    # n even subintervals
    h = (b - a) / n
    acc = f(a) + f(b)
    for i in range(1, n):
        acc += f(a + i * h) * (4.0 if i % 2 else 2.0)
    return acc * h / 3.0


def _verify_gw(spec, perturb):
    dist = spec.offspring
    N = spec.N
    checks = []
    q = pgf_iterates(dist, N).q
    target = math.log(q[-1]) * perturb  # reference exponent, perturbed under control
    u_star = most_likely_extinction_path(dist, N)
    rate = path_rate(dist, u_star)

    err = abs(rate - (-target))
    checks.append(("exponent_identity", err <= 1e-8,
                   f"|path_rate(u*) + log q_N| = {err:.3g}, tol 1e-8"))

    # analytic value functions: B_n(x) = -x log q_{N-n+1}
    worst = 0.0
    for n in range(1, N + 1):
        lhs = -u_star.u[n - 1] * math.log(q[N - n + 1])
        if u_star.u[n] == 0.0:
            step = -u_star.u[n - 1] * math.log(dist.probs[0])
            rhs = step
        else:
            rhs = legendre(dist, u_star.u[n], u_star.u[n - 1])[0] - u_star.u[n] * math.log(
                q[N - n]
            )
        worst = max(worst, abs(lhs - rhs))
    checks.append(("bellman_consistency", worst <= 1e-8,
                   f"max residual {worst:.3g}, tol 1e-8"))

    cfg = DpOracleConfig(grid_max=spec.grid_max, grid_points=spec.grid_points, horizon=N)
    dp_path, dp_value = dp_oracle(dist, cfg)
    err = abs(dp_value - (-target))
    checks.append(("dp_value", err <= 1e-3, f"|dp - closed form| = {err:.3g}, tol 1e-3"))
    step = spec.grid_max / spec.grid_points
    sup = max(abs(a - b) for a, b in zip(dp_path.u, u_star.u))
    checks.append(("dp_path", sup <= 2 * step,
                   f"sup|u_dp - u*| = {sup:.3g}, tol 2 grid steps = {2 * step:.3g}"))

    if spec.reps > 0:
        sim = GwSimConfig(dist=dist, K=int(spec.K), N=N, reps=spec.reps, seed=spec.seed)
        res = gw_extinction_mc(sim)
        prob = math.exp(spec.K * target)
        err = abs(res.frequency - prob)
        tol = 4.0 * res.std_error
        checks.append(("monte_carlo", err <= tol or err == 0.0,
                       f"|freq - exact| = {err:.3g}, 4 SE = {tol:.3g}"))
    return checks


def _verify_feller(spec, perturb):
    model = FellerModel(alpha=spec.alpha, sigma2=spec.sigma2, T=spec.T, K=spec.K)
    checks = []
    cf = closed_form_exponent(model) * perturb
    _, var_value = variational_oracle(model, spec.n_steps)
    ric = riccati_exponent_oracle(model, 1e9, max(1000, spec.n_steps))

    pairs = {"variational_vs_closed": (var_value, cf),
             "riccati_vs_closed": (ric, cf),
             "variational_vs_riccati": (var_value, ric)}
    for name, (a, b) in pairs.items():
        rel = abs(a - b) / max(abs(a), abs(b))
        checks.append((name, rel <= 1e-3, f"rel diff {rel:.3g}, tol 1e-3"))

    rel = abs(ric - cf) / abs(cf)
    checks.append(("riccati_refined", rel <= 1e-5, f"rel diff {rel:.3g}, tol 1e-5"))

    a = model.alpha
    if abs(a) >= 1e-10:
        mirror = FellerModel(alpha=-a, sigma2=model.sigma2, T=model.T, K=model.K)
        sup = max(
            abs(most_likely_path_cont(model, t) - most_likely_path_cont(mirror, t))
            for t in np.linspace(0.0, model.T, 101)
        )
        checks.append(("path_symmetry", sup < 1e-12, f"sup diff {sup:.3g}, tol 1e-12"))
        c_star = -2.0 * a / (-math.expm1(-a * model.T))
    else:
        checks.append(("path_symmetry", True, "alpha = 0, symmetric by definition"))
        c_star = -2.0 / model.T
    integral = _simpson(lambda t: 0.5 * c_star * math.exp(-a * t), 0.0, model.T, 2000)
    err = abs(integral + 1.0)
    checks.append(("multiplier_normalization", err <= 1e-8,
                   f"|integral + 1| = {err:.3g}, tol 1e-8"))

    pp = printed_exponent(model)
    flagged = abs(pp - closed_form_exponent(model)) > 1e-6 * abs(closed_form_exponent(model))
    checks.append(("printed_constant_flagged", flagged,
                   f"printed {pp:.6g} vs derivation {closed_form_exponent(model):.6g}"))

    if spec.reps > 0:
        sim = FellerSimConfig(model=model, scheme=spec.scheme, n_steps=spec.n_steps,
                              reps=spec.reps, seed=spec.seed)
        res = feller_extinction_mc(sim)
        prob = math.exp(-model.K * cf)
        err = abs(res.frequency - prob)
        tol = 4.0 * res.std_error
        checks.append(("monte_carlo", err <= tol and res.std_error > 0.0,
                       f"|freq - exp(-K cf)| = {err:.3g}, 4 SE = {tol:.3g}"))
    return checks


def _cmd_verify(inv, spec):
    perturb = 1.01 if inv.negative_control else 1.0
    if spec.kind == GW_KIND:
        checks = _verify_gw(spec, perturb)
    else:
        checks = _verify_feller(spec, perturb)
    n_pass = sum(1 for _, ok, _ in checks if ok)
    if not inv.quiet:
        for name, ok, detail in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        print(f"verify: {n_pass}/{len(checks)} checks passed")
    if inv.output_path is not None:
        doc = {"passed": n_pass == len(checks),
               "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in checks]}
        with open(inv.output_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0 if n_pass == len(checks) else 2


def _cmd_figure(inv):
    # likely paths for binary splitting (1-p, 0, p) across regimes
    N = 8
    cols = {"n": tuple(range(N + 1))}
    for p in (0.2, 0.5, 0.8):
        dist = OffspringDistribution((1.0 - p, 0.0, p))
        cols[f"u_star_p{p}"] = most_likely_extinction_path(dist, N).u
    text = _csv_text(list(cols), zip(*cols.values()))
    if inv.output_path is None:
        sys.stdout.write(text)
    else:
        with open(inv.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        if not inv.quiet:
            print(f"wrote {inv.output_path}", file=sys.stderr)
    return 0

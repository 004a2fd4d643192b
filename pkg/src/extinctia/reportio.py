"""Model-spec parsing, report assembly, and serialization.

Input is a small JSON spec naming the model kind and its parameters; output is
a report object serialized to canonical JSON (sorted keys, round-trip-exact
floats) or to RFC 4180 CSV views. Every exponent in a report carries a
provenance label; an unlabeled exponent is a validation error, because which
route produced which number is the point of the artifact.
"""
import csv
import io
import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .feller_path import (
    FellerModel,
    closed_form_exponent,
    most_likely_grid,
    printed_exponent,
    riccati_exponent_oracle,
    variational_oracle,
)
from .gw_path import (
    DpOracleConfig,
    dp_oracle,
    extinction_exponent_discrete,
    most_likely_extinction_path,
    path_rate,
)
from .mc_sim import (
    SCHEME_EXACT,
    SCHEME_EULER,
    FellerSimConfig,
    GwSimConfig,
    feller_extinction_mc,
    gw_extinction_mc,
)
from .offspring import OffspringDistribution

GW_KIND = "galton_watson"
FELLER_KIND = "feller"

PROVENANCE_LABELS = frozenset(
    {
        "closed_form",
        "paper_printed",
        "dp_oracle",
        "variational_oracle",
        "riccati_oracle",
        "monte_carlo",
    }
)


class SpecError(ValueError):
    """Spec validation failure, carrying the offending field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ModelSpec:
    """Validated model description with every default filled in.

    reps = 0 means no Monte Carlo requested.
    """

    kind: str
    K: float
    offspring: OffspringDistribution = None
    alpha: float = None
    sigma2: float = None
    T: float = None
    N: int = None
    grid_points: int = 4096
    grid_max: float = 3.0
    n_steps: int = 1024
    reps: int = 0
    seed: int = 0
    scheme: str = SCHEME_EXACT


_COMMON_KEYS = {"kind", "K", "reps", "seed"}
_GW_KEYS = _COMMON_KEYS | {"offspring", "N", "grid_points", "grid_max"}
_FELLER_KEYS = _COMMON_KEYS | {"alpha", "sigma2", "T", "n_steps", "scheme"}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _get_number(data, field, required=False):
    if field not in data:
        if required:
            raise SpecError(field, "required field is missing")
        return None
    v = data[field]
    if not _is_number(v):
        raise SpecError(field, f"expected a finite number, got {v!r}")
    return float(v)


def _get_int(data, field, minimum, default=None, required=False):
    if field not in data:
        if required:
            raise SpecError(field, "required field is missing")
        return default
    v = data[field]
    if not isinstance(v, int) or isinstance(v, bool):
        raise SpecError(field, f"expected an integer, got {v!r}")
    if v < minimum:
        raise SpecError(field, f"must be at least {minimum}, got {v}")
    return v


def parse_model_spec(text):
    """Parse and validate a UTF-8 JSON model spec.

    Raises SpecError naming the offending field path on any violation,
    including unknown keys (typos should fail loudly, not be ignored).
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise SpecError("$", f"invalid JSON: {e}")
    if not isinstance(data, dict):
        raise SpecError("$", "top level must be a JSON object")

    kind = data.get("kind")
    if kind is None:
        raise SpecError("kind", "required field is missing")
    if kind not in (GW_KIND, FELLER_KIND):
        raise SpecError("kind", f"expected {GW_KIND!r} or {FELLER_KIND!r}, got {kind!r}")

    allowed = _GW_KEYS if kind == GW_KIND else _FELLER_KEYS
    for key in sorted(set(data) - allowed):
        raise SpecError(key, f"unknown field for kind {kind!r}")

    reps = _get_int(data, "reps", 0, default=0)
    seed = _get_int(data, "seed", 0, default=0)
    if seed >= 2**64:
        raise SpecError("seed", "must fit in 64 unsigned bits")

    if kind == GW_KIND:
        off = data.get("offspring")
        if off is None:
            raise SpecError("offspring", "required field is missing")
        if not isinstance(off, dict) or "probs" not in off:
            raise SpecError("offspring.probs", "required field is missing")
        probs = off["probs"]
        for key in sorted(set(off) - {"probs"}):
            raise SpecError(f"offspring.{key}", "unknown field")
        if not isinstance(probs, list) or not all(_is_number(p) for p in probs):
            raise SpecError("offspring.probs", "expected a list of finite numbers")
        try:
            dist = OffspringDistribution(tuple(probs))
        except ValueError as e:
            raise SpecError("offspring.probs", str(e))
        K = _get_int(data, "K", 1, required=True)
        N = _get_int(data, "N", 1, required=True)
        grid_points = _get_int(data, "grid_points", 64, default=4096)
        grid_max = data.get("grid_max", 3.0)
        if not _is_number(grid_max) or not grid_max > 1.0:
            raise SpecError("grid_max", f"expected a number above 1, got {grid_max!r}")
        return ModelSpec(
            kind=kind,
            K=K,
            offspring=dist,
            N=N,
            grid_points=grid_points,
            grid_max=float(grid_max),
            reps=reps,
            seed=seed,
        )

    alpha = _get_number(data, "alpha", required=True)
    sigma2 = _get_number(data, "sigma2", required=True)
    T = _get_number(data, "T", required=True)
    K = _get_number(data, "K", required=True)
    if not sigma2 > 0.0:
        raise SpecError("sigma2", f"must be positive, got {sigma2}")
    if not T > 0.0:
        raise SpecError("T", f"must be positive, got {T}")
    if not K > 0.0:
        raise SpecError("K", f"must be positive, got {K}")
    n_steps = _get_int(data, "n_steps", 1, default=1024)
    scheme = data.get("scheme", SCHEME_EXACT)
    if scheme not in (SCHEME_EXACT, SCHEME_EULER):
        raise SpecError(
            "scheme", f"expected {SCHEME_EXACT!r} or {SCHEME_EULER!r}, got {scheme!r}"
        )
    return ModelSpec(
        kind=kind,
        K=K,
        alpha=alpha,
        sigma2=sigma2,
        T=T,
        n_steps=n_steps,
        reps=reps,
        seed=seed,
        scheme=scheme,
    )


@dataclass(frozen=True)
class ExponentEntry:
    """One extinction-exponent estimate with its provenance label; Monte
    Carlo entries carry a standard error."""

    provenance: str
    value: float
    std_error: float = None

    def __post_init__(self):
        if self.provenance not in PROVENANCE_LABELS:
            raise ValueError(
                f"unlabeled exponent: provenance {self.provenance!r} not in "
                f"{sorted(PROVENANCE_LABELS)}"
            )
        if not math.isfinite(self.value):
            raise ValueError(f"exponent value must be finite, got {self.value!r}")


@dataclass(frozen=True)
class RateReport:
    """Assembled analysis results for one model.

    path_table maps column name to a tuple of samples; its first column is
    the grid index (n for discrete, t for continuous). timings are volatile
    and excluded from the canonical serialization so that identical runs
    produce identical bytes.
    """

    kind: str
    model: dict
    path_table: dict
    rate_value: float
    exponents: tuple
    discrepancy_flags: dict
    timings: dict
    mc: dict = None


def validate_report(report):
    """Reject structurally broken reports: unlabeled or non-finite exponents,
    ragged path tables, missing rate value."""
    if not report.exponents:
        raise ValueError("report has no exponent entries")
    for e in report.exponents:
        if not isinstance(e, ExponentEntry):
            raise ValueError(f"exponent entry {e!r} lacks a provenance label")
    if not math.isfinite(report.rate_value):
        raise ValueError(f"rate_value must be finite, got {report.rate_value!r}")
    lengths = {len(col) for col in report.path_table.values()}
    if len(lengths) > 1:
        raise ValueError(f"path_table columns have unequal lengths {sorted(lengths)}")


def report_to_json(report, include_timings=False):
    """Canonical JSON for a report: sorted keys, round-trip-exact floats.

    Timings are excluded by default, keeping report files byte-identical
    across identical seeded runs.
    """
    validate_report(report)
    exponents = []
    for e in report.exponents:
        d = {"provenance": e.provenance, "value": e.value}
        if e.std_error is not None:
            d["std_error"] = e.std_error
        exponents.append(d)
    doc = {
        "kind": report.kind,
        "model": report.model,
        "path_table": {k: list(v) for k, v in report.path_table.items()},
        "rate_value": report.rate_value,
        "exponents": exponents,
        "discrepancy_flags": dict(report.discrepancy_flags),
    }
    if report.mc is not None:
        doc["mc"] = report.mc
    if include_timings:
        doc["timings"] = dict(report.timings)
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _csv_text(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else _fmt(v) for v in row))
    return "\r\n".join(lines) + "\r\n"


def emit_csv(report, which):
    """Render one CSV view of a report.

    which = "path": the path table, one row per grid point.
    which = "exponents": provenance, value, std_error.
    which = "mc": grid index, conditional mean path, per-entry SE.
    RFC 4180 framing: comma separated, CRLF line endings, header row,
    17-significant-digit floats.
    """
    validate_report(report)
    if which == "path":
        if not report.path_table:
            raise ValueError("report has no path table")
        cols = list(report.path_table)
        rows = zip(*(report.path_table[c] for c in cols))
        return _csv_text(cols, rows)
    if which == "exponents":
        rows = [(e.provenance, e.value, e.std_error) for e in report.exponents]
        return _csv_text(["provenance", "value", "std_error"], rows)
    if which == "mc":
        if report.mc is None:
            raise ValueError("report has no Monte Carlo section")
        mean = report.mc.get("conditional_mean_path")
        se = report.mc.get("conditional_se_path")
        if mean is None:
            raise ValueError("no conditioned replicas: conditional mean path undefined")
        index_col = next(iter(report.path_table))
        index = report.path_table[index_col]
        rows = zip(index, mean, se)
        return _csv_text([index_col, "conditional_mean", "conditional_se"], rows)
    raise ValueError(f"unknown CSV view {which!r}")


def parse_csv(text):
    """Parse an emitted CSV back into {column: list}; empty cells become
    None, numeric cells floats. Round-trips emit_csv exactly."""
    reader = csv.reader(io.StringIO(text))
    rows = [row for row in reader if row]
    header = rows[0]
    columns = {name: [] for name in header}
    for row in rows[1:]:
        for name, cell in zip(header, row):
            if cell == "":
                columns[name].append(None)
            else:
                try:
                    columns[name].append(float(cell))
                except ValueError:
                    columns[name].append(cell)
    return columns


def _mc_dict(res):
    d = {
        "frequency": res.frequency,
        "std_error": res.std_error,
        "n_extinct": res.n_extinct,
        "wilson_low": res.wilson_low,
        "wilson_high": res.wilson_high,
        "n_conditioned": res.n_conditioned,
    }
    if res.conditional_mean_path is not None:
        d["conditional_mean_path"] = list(res.conditional_mean_path)
        d["conditional_se_path"] = list(res.conditional_se_path)
    return d


def _mc_exponent(res, K):
    # delta method on log(f)/K; None when nothing went extinct
    if res.n_extinct == 0:
        return None
    se = None
    if 0.0 < res.frequency < 1.0:
        se = res.std_error / (res.frequency * K)
    return ExponentEntry("monte_carlo", math.log(res.frequency) / K, std_error=se)


def build_gw_report(spec, *, include_dp=True, backend=None):
    """Assemble the discrete-model report: closed-form path and exponent,
    DP oracle cross-check, and Monte Carlo when reps > 0."""
    if spec.kind != GW_KIND:
        raise SpecError("kind", f"expected {GW_KIND!r}, got {spec.kind!r}")
    dist = spec.offspring
    timings = {}

    t0 = time.perf_counter()
    u_star = most_likely_extinction_path(dist, spec.N)
    rate = path_rate(dist, u_star)
    timings["closed_form"] = time.perf_counter() - t0

    exponents = [ExponentEntry("closed_form", extinction_exponent_discrete(dist, spec.N))]
    path_table = {"n": tuple(range(spec.N + 1)), "u_star": u_star.u}

    if include_dp:
        cfg = DpOracleConfig(
            grid_max=spec.grid_max, grid_points=spec.grid_points, horizon=spec.N
        )
        t0 = time.perf_counter()
        dp_path, dp_value = dp_oracle(dist, cfg, backend=backend)
        timings["dp_oracle"] = time.perf_counter() - t0
        exponents.append(ExponentEntry("dp_oracle", -dp_value))
        path_table["u_dp"] = dp_path.u

    mc = None
    if spec.reps > 0:
        sim = GwSimConfig(dist=dist, K=int(spec.K), N=spec.N, reps=spec.reps, seed=spec.seed)
        t0 = time.perf_counter()
        res = gw_extinction_mc(sim, backend=backend)
        timings["monte_carlo"] = time.perf_counter() - t0
        mc = _mc_dict(res)
        entry = _mc_exponent(res, spec.K)
        if entry is not None:
            exponents.append(entry)
        if res.conditional_mean_path is not None:
            path_table["conditional_mean"] = res.conditional_mean_path

    model = {
        "kind": spec.kind,
        "offspring_probs": list(dist.probs),
        "K": int(spec.K),
        "N": spec.N,
        "grid_points": spec.grid_points,
        "grid_max": spec.grid_max,
        "reps": spec.reps,
        "seed": spec.seed,
    }
    return RateReport(
        kind=spec.kind,
        model=model,
        path_table=path_table,
        rate_value=rate,
        exponents=tuple(exponents),
        discrepancy_flags={},
        timings=timings,
        mc=mc,
    )


def build_feller_report(spec, *, backend=None):
    """Assemble the continuous-model report: optimal path, all exponent
    routes, the printed-constant adjudication flags, and Monte Carlo when
    reps > 0."""
    if spec.kind != FELLER_KIND:
        raise SpecError("kind", f"expected {FELLER_KIND!r}, got {spec.kind!r}")
    model = FellerModel(alpha=spec.alpha, sigma2=spec.sigma2, T=spec.T, K=spec.K)
    timings = {}

    t0 = time.perf_counter()
    oracle_path, var_value = variational_oracle(model, spec.n_steps)
    timings["variational_oracle"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ric = riccati_exponent_oracle(model, 1e9, max(1000, spec.n_steps))
    timings["riccati_oracle"] = time.perf_counter() - t0

    cf = closed_form_exponent(model)
    pp = printed_exponent(model)
    star = most_likely_grid(model, spec.n_steps)

    ts = np.linspace(0.0, model.T, spec.n_steps + 1)
    path_table = {
        "t": tuple(float(t) for t in ts),
        "u_star": star.u,
        "u_oracle": oracle_path.u,
    }
    exponents = [
        ExponentEntry("closed_form", -cf),
        ExponentEntry("paper_printed", -pp),
        ExponentEntry("variational_oracle", -var_value),
        ExponentEntry("riccati_oracle", -ric),
    ]
    flags = {
        "printed_exponent_constant": abs(pp - cf) > 1e-6 * abs(cf),
        "printed_path_prefactor": abs(model.alpha) >= 1e-10,
    }

    mc = None
    if spec.reps > 0:
        sim = FellerSimConfig(
            model=model,
            scheme=spec.scheme,
            n_steps=spec.n_steps,
            reps=spec.reps,
            seed=spec.seed,
        )
        t0 = time.perf_counter()
        res = feller_extinction_mc(sim, backend=backend)
        timings["monte_carlo"] = time.perf_counter() - t0
        mc = _mc_dict(res)
        entry = _mc_exponent(res, model.K)
        if entry is not None:
            exponents.append(entry)
        if res.conditional_mean_path is not None:
            path_table["conditional_mean"] = res.conditional_mean_path

    model_echo = {
        "kind": spec.kind,
        "alpha": model.alpha,
        "sigma2": model.sigma2,
        "T": model.T,
        "K": model.K,
        "n_steps": spec.n_steps,
        "scheme": spec.scheme,
        "reps": spec.reps,
        "seed": spec.seed,
    }
    return RateReport(
        kind=spec.kind,
        model=model_echo,
        path_table=path_table,
        rate_value=cf,
        exponents=tuple(exponents),
        discrepancy_flags=flags,
        timings=timings,
        mc=mc,
    )


def apply_overrides(spec, seed=None, reps=None, grid=None, scheme=None):
    """Field overrides from the command line; grid maps to grid_points for
    the discrete kind and n_steps for the continuous one."""
    changes = {}
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise SpecError("seed", "must fit in 64 unsigned bits")
        changes["seed"] = seed
    if reps is not None:
        if reps < 0:
            raise SpecError("reps", f"must be nonnegative, got {reps}")
        changes["reps"] = reps
    if grid is not None:
        if spec.kind == GW_KIND:
            if grid < 64:
                raise SpecError("grid_points", f"must be at least 64, got {grid}")
            changes["grid_points"] = grid
        else:
            if grid < 1:
                raise SpecError("n_steps", f"must be at least 1, got {grid}")
            changes["n_steps"] = grid
    if scheme is not None:
        if spec.kind != FELLER_KIND:
            raise SpecError("scheme", "only the continuous kind has schemes")
        changes["scheme"] = {"exact": SCHEME_EXACT, "euler": SCHEME_EULER}[scheme]
    return replace(spec, **changes) if changes else spec

"""Command line interface for runs, sweeps, spectra, and the check suite.

Manifests are JSON.  Every output file embeds the fully resolved manifest,
so a run is reproducible from its own artifacts: CSV time series carry it
as a leading comment line, JSON reports as a ``manifest`` field.  All
randomness flows through a single NumPy PCG64 generator seeded from the
manifest, and floats are serialized with 17 significant digits, which makes
outputs byte-identical across repeated runs of the same build.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from .dual import ConstraintSpace
from .errors import ConfigError, NumericalError
from .flow import (
    CSV_HEADER,
    FlowConfig,
    FlowResult,
    fit_decay,
    project_admissible,
    run_flow,
    run_linear_flow,
)
from .grid import GridFunction, Polynomial, poly_to_grid, quadrature
from .heat import assemble_operator, spectrum
from .moments import random_polynomial
from .suite import identity_suite

KINDS = ("identity_suite", "linear_flow", "nonlinear_flow", "spectrum",
         "decay_sweep")
Y_KINDS = ("zero_zero", "zero_free", "line", "full")

_DEFAULTS = {
    "seed": 0,
    "n_points": 513,
    "dt": 1e-3,
    "t_final": 5.0,
    "prox_tol": 1e-9,
    "eps_reg": 1e-8,
    "eta": 1.0,
    "scheme": "implicit_euler",
    "k_eigs": 8,
    "samples": 200,
    "max_degree": 6,
}


_RELEVANT_KEYS = {
    "identity_suite": {"kind", "seed", "samples", "max_degree"},
    "spectrum": {"kind", "seed", "n", "y", "n_points", "k_eigs"},
    "linear_flow": {"kind", "seed", "n", "y", "n_points", "dt", "t_final",
                    "eta", "scheme", "initial"},
    "nonlinear_flow": {"kind", "seed", "n", "y", "n_points", "dt", "t_final",
                       "prox_tol", "eps_reg", "p", "initial"},
    "decay_sweep": {"kind", "seed", "n", "y", "n_points", "dt", "t_final",
                    "prox_tol", "eps_reg", "p_values", "initial"},
}


def _fail(field: str, message: str):
    raise ConfigError(f"field '{field}': {message}")


def _expect_number(manifest, field, lo=None, lo_strict=None):
    value = manifest[field]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        _fail(field, "must be a number")
    value = float(value)
    if lo is not None and value < lo:
        _fail(field, f"must be at least {lo}")
    if lo_strict is not None and value <= lo_strict:
        _fail(field, f"must exceed {lo_strict}")
    return value


def _prune(manifest: dict) -> dict:
    keep = _RELEVANT_KEYS[manifest["kind"]]
    return {k: v for k, v in manifest.items() if k in keep}


def resolve_manifest(raw: dict) -> dict:
    """Validate a raw manifest, fill defaults relevant to its kind, and
    drop the rest; raises ConfigError naming the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("manifest must be a JSON object")
    manifest = dict(raw)
    kind = manifest.get("kind")
    if kind not in KINDS:
        _fail("kind", f"must be one of {', '.join(KINDS)}")

    for key, default in _DEFAULTS.items():
        manifest.setdefault(key, default)
    if not isinstance(manifest["seed"], int) or isinstance(manifest["seed"], bool):
        _fail("seed", "must be an integer")

    if kind == "identity_suite":
        manifest["samples"] = int(_expect_number(manifest, "samples", lo=1))
        manifest["max_degree"] = int(_expect_number(manifest, "max_degree", lo=1))
        return _prune(manifest)

    if "n" not in manifest:
        _fail("n", "is required")
    n = manifest["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        _fail("n", "must be a positive integer")

    y = manifest.setdefault("y", {"kind": "zero_zero"})
    if not isinstance(y, dict) or y.get("kind") not in Y_KINDS:
        _fail("y.kind", f"must be one of {', '.join(Y_KINDS)}")
    if y["kind"] == "line":
        if "slope" not in y:
            _fail("y.slope", "is required for line constraints")
        if not isinstance(y["slope"], (int, float)) or isinstance(y["slope"], bool):
            _fail("y.slope", "must be a number")
    elif "slope" in y:
        _fail("y.slope", "only applies to line constraints")

    manifest["n_points"] = int(_expect_number(manifest, "n_points", lo=17))

    if kind == "spectrum":
        manifest["k_eigs"] = int(_expect_number(manifest, "k_eigs", lo=1))
        available = manifest["n_points"] - {"zero_zero": 2, "zero_free": 1,
                                            "line": 1, "full": 0}[y["kind"]]
        if manifest["k_eigs"] > available:
            _fail("k_eigs", f"at most {available} modes exist on this grid")
        return _prune(manifest)

    manifest["dt"] = _expect_number(manifest, "dt", lo_strict=0.0)
    manifest["t_final"] = _expect_number(manifest, "t_final", lo_strict=0.0)
    manifest["prox_tol"] = _expect_number(manifest, "prox_tol", lo_strict=0.0)
    manifest["eps_reg"] = _expect_number(manifest, "eps_reg", lo=0.0)

    initial = manifest.setdefault("initial", {"preset": "random", "degree": 6})
    if not isinstance(initial, dict) or "preset" not in initial:
        _fail("initial.preset", "is required")
    if initial["preset"] == "poly":
        coeffs = initial.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs or not all(
                isinstance(c, (int, float)) and not isinstance(c, bool)
                for c in coeffs):
            _fail("initial.coeffs", "must be a nonempty list of numbers")
    elif initial["preset"] == "random":
        degree = initial.setdefault("degree", 6)
        if not isinstance(degree, int) or isinstance(degree, bool) or degree < 0:
            _fail("initial.degree", "must be a nonnegative integer")
    else:
        _fail("initial.preset", "must be 'poly' or 'random'")
    initial.setdefault("normalize", True)

    if kind == "linear_flow":
        manifest["eta"] = _expect_number(manifest, "eta")
        if manifest["scheme"] not in ("implicit_euler", "exponential"):
            _fail("scheme", "must be 'implicit_euler' or 'exponential'")
        return _prune(manifest)

    if kind == "nonlinear_flow":
        if "p" not in manifest:
            _fail("p", "is required")
        manifest["p"] = _expect_number(manifest, "p")
        if manifest["p"] <= 1.0:
            _fail("p", "exponents at or below 1 are outside the supported range")
        return _prune(manifest)

    # decay_sweep
    p_values = manifest.get("p_values")
    if not isinstance(p_values, list) or not p_values:
        _fail("p_values", "must be a nonempty list for decay sweeps")
    for p in p_values:
        if not isinstance(p, (int, float)) or isinstance(p, bool) or p <= 1.0:
            _fail("p_values", "every exponent must be a number above 1")
    manifest["p_values"] = [float(p) for p in p_values]
    return _prune(manifest)


def load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return resolve_manifest(raw)


def _constraint_space(manifest) -> ConstraintSpace:
    y = manifest["y"]
    if y["kind"] == "line":
        return ConstraintSpace.line(float(y["slope"]))
    return ConstraintSpace(y["kind"])


def _flow_config(manifest, p: float) -> FlowConfig:
    return FlowConfig(
        p=p,
        n=manifest["n"],
        space=_constraint_space(manifest),
        n_points=manifest["n_points"],
        dt=manifest["dt"],
        t_final=manifest["t_final"],
        prox_tol=manifest.get("prox_tol", _DEFAULTS["prox_tol"]),
        eps_reg=manifest.get("eps_reg", _DEFAULTS["eps_reg"]),
    )


def initial_state(manifest, cfg: FlowConfig) -> GridFunction:
    """Materialize the configured initial preset on the run grid."""
    initial = manifest["initial"]
    if initial["preset"] == "poly":
        poly = Polynomial(tuple(Fraction(c) for c in initial["coeffs"]))
    else:
        rng = np.random.default_rng(manifest["seed"])
        poly = random_polynomial(rng, initial["degree"])
    state = project_admissible(poly_to_grid(poly, cfg.n_points), cfg.n, cfg.space)
    if initial.get("normalize", True):
        scale = quadrature(GridFunction(state.values ** 2)) ** 0.5
        if scale > 0:
            state = GridFunction(state.values / scale)
    return state


def _format(value: float) -> str:
    return f"{value:.17g}"


def write_flow_csv(path: Path, manifest: dict, result: FlowResult) -> None:
    lines = ["# manifest: " + json.dumps(manifest, sort_keys=True)]
    lines.append(CSV_HEADER)
    for record in result.records:
        lines.append(",".join(_format(v) for v in record.as_row()))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _suite_table(report: dict) -> str:
    lines = []
    for check in report["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        lines.append(f"{status}  {check['name']:<42} cases={check['cases']:>5} "
                     f"max_residual={_format(check['max_residual'])}")
    lines.append("overall: " + ("pass" if report["passed"] else "FAIL"))
    return "\n".join(lines)


def execute(manifest: dict, out_dir: Path, parallel: int = 1) -> int:
    """Run a resolved manifest; returns the process exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = manifest["kind"]
    if kind == "identity_suite":
        report = identity_suite(seed=manifest["seed"],
                                samples=manifest["samples"],
                                max_degree=manifest["max_degree"])
        payload = {"manifest": manifest, **report}
        _write_json(out_dir / "identity_suite.json", payload)
        click.echo(_suite_table(report))
        return 0 if report["passed"] else 1

    if kind == "spectrum":
        asm = assemble_operator(manifest["n"], _constraint_space(manifest),
                                manifest["n_points"])
        values = spectrum(asm, manifest["k_eigs"])
        payload = {"manifest": manifest,
                   "eigenvalues": [float(v) for v in values]}
        _write_json(out_dir / "spectrum.json", payload)
        click.echo(json.dumps(payload, sort_keys=True, indent=2))
        return 0

    if kind in ("linear_flow", "nonlinear_flow"):
        p = manifest["p"] if kind == "nonlinear_flow" else 2.0
        cfg = _flow_config(manifest, p)
        u0 = initial_state(manifest, cfg)
        if kind == "linear_flow":
            result = run_linear_flow(u0, cfg, scheme=manifest["scheme"],
                                     eta=manifest["eta"])
        else:
            result = run_flow(u0, cfg)
        write_flow_csv(out_dir / f"{kind}.csv", manifest, result)
        click.echo(f"wrote {out_dir / (kind + '.csv')} "
                   f"({len(result.records)} records)")
        return 0

    # decay sweep: independent runs, each owning its output file
    def one_run(p: float):
        cfg = _flow_config(manifest, p)
        u0 = initial_state(manifest, cfg)
        result = run_flow(u0, cfg)
        run_manifest = {**manifest, "kind": "nonlinear_flow", "p": p}
        run_manifest.pop("p_values", None)
        name = f"flow_p{p:g}.csv"
        write_flow_csv(out_dir / name, run_manifest, result)
        fits = {}
        for model in ("polynomial", "exponential"):
            try:
                fit = fit_decay(result.records, model)
                fits[model] = {"rate": fit.rate, "r_squared": fit.r_squared,
                               "n_used": fit.n_used}
            except ValueError as exc:
                fits[model] = {"error": str(exc)}
        return p, name, fits

    workers = max(1, parallel)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(one_run, manifest["p_values"]))
    summary = {
        "manifest": manifest,
        "runs": [{"p": p, "csv": name, "fits": fits}
                 for p, name, fits in sorted(outcomes)],
    }
    _write_json(out_dir / "decay_sweep.json", summary)
    click.echo(f"wrote {out_dir / 'decay_sweep.json'}")
    return 0


@click.group()
def main():
    """Moment-constrained diffusion flows on the unit interval."""


@main.command("run")
@click.argument("config", type=click.Path(exists=False))
@click.option("--out", "out_dir", type=click.Path(), default=".",
              help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override manifest seed.")
@click.option("--parallel", type=int, default=1,
              help="Concurrent runs for sweeps.")
def run_command(config, out_dir, seed, parallel):
    """Execute the experiment described by a JSON manifest."""
    try:
        manifest = load_config(config)
        if seed is not None:
            manifest["seed"] = seed
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    try:
        code = execute(manifest, Path(out_dir), parallel=parallel)
    except (NumericalError, ValueError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(1)
    sys.exit(code)


@main.command("check")
@click.option("--seed", type=int, default=0, help="Suite seed.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Also write the JSON report here.")
def check_command(seed, out_path):
    """Run the full identity suite with default settings."""
    report = identity_suite(seed=seed)
    manifest = resolve_manifest({"kind": "identity_suite", "seed": seed})
    if out_path is not None:
        _write_json(Path(out_path), {"manifest": manifest, **report})
    click.echo(_suite_table(report))
    sys.exit(0 if report["passed"] else 1)


@main.command("spectrum")
@click.option("--n", "n", type=int, required=True, help="Moment index.")
@click.option("--y", "y_kind", type=click.Choice(Y_KINDS), required=True,
              help="Constraint kind.")
@click.option("--points", type=int, default=513, help="Grid points.")
@click.option("--slope", type=float, default=None,
              help="Slope for line constraints.")
@click.option("--k", "k_eigs", type=int, default=8,
              help="How many eigenvalues.")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Also write the JSON report here.")
def spectrum_command(n, y_kind, points, slope, k_eigs, out_path):
    """Smallest eigenvalues of the constrained operator."""
    raw = {"kind": "spectrum", "n": n, "n_points": points, "k_eigs": k_eigs,
           "y": {"kind": y_kind}}
    if slope is not None:
        raw["y"]["slope"] = slope
    try:
        manifest = resolve_manifest(raw)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(2)
    try:
        asm = assemble_operator(manifest["n"], _constraint_space(manifest),
                                manifest["n_points"])
        values = spectrum(asm, manifest["k_eigs"])
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(1)
    payload = {"manifest": manifest, "eigenvalues": [float(v) for v in values]}
    if out_path is not None:
        _write_json(Path(out_path), payload)
    click.echo(json.dumps(payload, sort_keys=True, indent=2))
    sys.exit(0)


if __name__ == "__main__":
    main()

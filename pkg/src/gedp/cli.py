"""Command-line front end: seeded release runs, reconstruction, evaluation,
bias simulations, and budget arithmetic.

Subcommands: ``validate-nf``, ``synth``, ``run``, ``postprocess``,
``evaluate``, ``bias-sim``, ``compose``.  Success exits 0; failures print a
single JSON object ``{"error": <class>, "detail": <message>}`` to stderr and
exit 3 for validation/input problems or 4 for runtime failures (bad command
usage exits 2).  Given the same config and seed, every output file is
byte-identical across runs.
"""

from __future__ import annotations

import csv
import functools
import json
import re
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from . import dataset as ds
from . import mechanisms, microdata, neighbor, syngen
from .accountant import BudgetLedger, compose
from .biassim import AblationConfig, ablation_run
from .errors import (
    BudgetError,
    GedpError,
    InputError,
    InvalidFunctionError,
    MalformedFunctionError,
)
from .neighbor import DistanceParams, LogShift, NeighborFunction, SqrtShift
from .numerics import RngStream

EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

_VALIDATION_ERRORS = (InputError, BudgetError, MalformedFunctionError, InvalidFunctionError)


def _fail(exc: BaseException, code: int) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), err=True)
    sys.exit(code)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _VALIDATION_ERRORS as exc:
            _fail(exc, EXIT_VALIDATION)
        except (GedpError, OSError) as exc:
            _fail(exc, EXIT_RUNTIME)

    return wrapper


@click.group()
def main():
    """Confidentiality-preserving tabulations for establishment microdata."""


# ---------------------------------------------------------------------------
# Run configuration


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", label)


@dataclass(frozen=True)
class _Release:
    """One (query, attribute) release from the workload."""

    label: str
    query: ds.GroupBySumQuery
    mechanism: str
    mu: float
    delta: float
    sensitivity: Optional[float] = None

    @property
    def filename(self) -> str:
        return f"{_safe_name(self.label)}.csv"


@dataclass(frozen=True)
class _RunSpec:
    dataset_path: Path
    seed: int
    mu_total: float
    gamma: float
    f: NeighborFunction
    deltas: Dict[str, float]
    releases: Tuple[_Release, ...]
    pnc_attributes: Tuple[str, ...]


def _config_error(message: str) -> InputError:
    return InputError(f"run config: {message}")


def _release_mu(entry: dict, attr: str, index: int) -> float:
    mu = entry.get("mu")
    if isinstance(mu, dict):
        if attr not in mu:
            raise _config_error(f"workload[{index}] gives no mu for target {attr!r}")
        mu = mu[attr]
    if mu is None:
        raise _config_error(f"workload[{index}] is missing 'mu'")
    return float(mu)


def _parse_run_config(path: Path) -> _RunSpec:
    """Parse and cross-validate a run config (grammar in the README).

    Checks the two structural invariants here, before anything executes:
    the workload's composed budget fits mu_total, and every clipped-sum
    release is preceded by an identity neighbor release on the same
    attribute (its bounds come from those answers).
    """
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise _config_error(f"{path} is not valid JSON: {exc}") from exc
    for key in ("dataset", "seed", "mu_total", "neighbor_function", "deltas", "workload"):
        if key not in cfg:
            raise _config_error(f"missing required key {key!r}")
    f = neighbor.from_config(cfg["neighbor_function"])
    deltas = {}
    for attr, value in cfg["deltas"].items():
        if attr not in ds.CONFIDENTIAL_ATTRS:
            raise _config_error(f"delta given for unknown attribute {attr!r}")
        if float(value) <= 0:
            raise _config_error(f"delta for {attr!r} must be positive")
        deltas[attr] = float(value)
    gamma = float(cfg.get("gamma", 0.05))
    if not (0.0 < gamma < 1.0):
        raise _config_error(f"gamma must be in (0, 1), got {gamma}")

    releases: List[_Release] = []
    seen_identity: set = set()
    pnc_attrs: set = set()
    for i, entry in enumerate(cfg["workload"]):
        mechanism = entry.get("mechanism", "neighbor")
        if mechanism not in ("neighbor", "pnc", "gaussian"):
            raise _config_error(f"workload[{i}] has unknown mechanism {mechanism!r}")
        targets = entry.get("targets") or ([entry["target"]] if "target" in entry else None)
        if not targets:
            raise _config_error(f"workload[{i}] needs 'targets' (or a single 'target')")
        base_label = entry.get("label", f"q{i + 1}")
        for attr in targets:
            query = ds.GroupBySumQuery(
                grouper=entry.get("grouper", "identity"),
                target=attr,
                k=int(entry.get("k", 0)),
            )
            if attr not in deltas and mechanism != "gaussian":
                raise _config_error(f"workload[{i}] targets {attr!r} but no delta is set")
            sensitivity = entry.get("sensitivity")
            if mechanism == "gaussian" and sensitivity is None:
                raise _config_error(f"workload[{i}] uses gaussian and needs 'sensitivity'")
            if mechanism == "pnc":
                if attr not in seen_identity:
                    raise _config_error(
                        f"workload[{i}] answers {attr!r} with the clipped-sum mechanism "
                        "but no earlier identity neighbor release covers that attribute"
                    )
                pnc_attrs.add(attr)
            if mechanism == "neighbor" and query.grouper == "identity":
                seen_identity.add(attr)
            releases.append(
                _Release(
                    label=f"{base_label}_{query.label()}",
                    query=query,
                    mechanism=mechanism,
                    mu=_release_mu(entry, attr, i),
                    delta=deltas.get(attr, 0.0),
                    sensitivity=None if sensitivity is None else float(sensitivity),
                )
            )
    if not releases:
        raise _config_error("workload is empty")
    filenames = [r.filename for r in releases]
    if len(set(filenames)) != len(filenames):
        raise _config_error("release labels collide; give colliding workload entries a 'label'")

    dataset_path = Path(path).parent / cfg["dataset"]
    return _RunSpec(
        dataset_path=dataset_path,
        seed=int(cfg["seed"]),
        mu_total=float(cfg["mu_total"]),
        gamma=gamma,
        f=f,
        deltas=deltas,
        releases=tuple(releases),
        pnc_attributes=tuple(sorted(pnc_attrs)),
    )


def _detransform(
    answers: Sequence[mechanisms.NoisyAnswer], f: NeighborFunction, delta: float, mu: float
) -> List[mechanisms.NoisyAnswer]:
    if isinstance(f, SqrtShift):
        estimator, shift = mechanisms.estimate_sqrt, f.a
    elif isinstance(f, LogShift):
        estimator, shift = mechanisms.estimate_log, f.a
    else:
        raise InputError(
            f"no de-transformation estimator exists for {f.describe()}; "
            "pass --release-transformed to write transformed-space answers instead"
        )
    out = []
    for a in answers:
        x, v = estimator(a.value, delta, mu, shift=shift)
        out.append(mechanisms.NoisyAnswer(a.group_key, x, v, "estimated", "neighbor", "raw"))
    return out


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "outdir", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option(
    "--release-transformed",
    is_flag=True,
    help="Write raw transformed-space neighbor answers instead of de-transformed estimates.",
)
@_guard
def cmd_run(config_path: Path, outdir: Path, seed: Optional[int], release_transformed: bool):
    """Execute a release workload: one answers CSV per release plus ledger.json.

    Only noisy values ever reach the output directory; identity releases
    also feed the clipping bounds of later clipped-sum releases on the same
    attribute.
    """
    spec = _parse_run_config(config_path)
    if seed is not None:
        spec = replace(spec, seed=seed)
    data = ds.load_csv(spec.dataset_path)
    outdir.mkdir(parents=True, exist_ok=True)

    ledger = BudgetLedger(spec.mu_total)
    for rel in spec.releases:
        ledger.register(
            rel.label,
            rel.mu,
            neighbor_function="" if rel.mechanism == "gaussian" else spec.f.describe(),
            distances=DistanceParams({rel.query.target: rel.delta}) if rel.delta else None,
        )

    rng = RngStream(spec.seed)
    n_bounded = len(spec.pnc_attributes)
    identity_transformed: Dict[str, Tuple[List[mechanisms.NoisyAnswer], float]] = {}
    bounds_cache: Dict[str, mechanisms.PncBounds] = {}
    written = []
    for index, rel in enumerate(spec.releases):
        sub = rng.substream(index)
        attr = rel.query.target
        if rel.mechanism == "neighbor":
            transformed = mechanisms.neighbor_mech(data, rel.query, spec.f, rel.delta, rel.mu, sub)
            if rel.query.grouper == "identity":
                identity_transformed[attr] = (transformed, rel.mu)
                bounds_cache.pop(attr, None)
            rows = (
                transformed
                if release_transformed
                else _detransform(transformed, spec.f, rel.delta, rel.mu)
            )
        elif rel.mechanism == "pnc":
            if attr not in bounds_cache:
                id_answers, id_mu = identity_transformed[attr]
                bounds_cache[attr] = mechanisms.pnc_bounds(
                    id_answers, spec.f, rel.delta, id_mu, spec.gamma, attr, n_attributes=n_bounded
                )
            rows = mechanisms.pnc_mech(
                data, rel.query, bounds_cache[attr], spec.f, rel.delta, rel.mu, sub
            )
        else:
            exact = ds.answer_exact(data, rel.query)
            rows = mechanisms.estab_gaussian(exact, rel.sensitivity, rel.mu, sub)
        out_path = outdir / rel.filename
        mechanisms.write_answers_csv(rows, out_path)
        written.append(out_path.name)

    ledger.save(outdir / "ledger.json")
    click.echo(
        json.dumps(
            {
                "releases": len(spec.releases),
                "mu_composed": ledger.composed(),
                "mu_total": spec.mu_total,
                "files": written + ["ledger.json"],
                "output": str(outdir),
            },
            indent=2,
        )
    )


@main.command("postprocess")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--answers", "answers_dir", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--report", "report_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@click.option("--nonneg", is_flag=True, help="Constrain reconstructed values to be nonnegative.")
@_guard
def cmd_postprocess(config_path, answers_dir, output_path, report_path, nonneg):
    """Reconstruct record-level microdata from a run's noisy answers.

    Uses the run config for the query definitions and the dataset's public
    attributes (group membership is public); writes one record per input
    establishment with confidential columns replaced by the weighted
    least-squares estimates and synthetic=1.
    """
    spec = _parse_run_config(config_path)
    data = ds.load_csv(spec.dataset_path)
    per_attr: Dict[str, List[microdata.Measurement]] = {}
    for rel in spec.releases:
        path = answers_dir / rel.filename
        if not path.exists():
            raise InputError(f"missing answers file {path}; run `gedp run` first")
        membership = ds.group_membership(data, rel.query)
        for a in mechanisms.read_answers_csv(path):
            members = membership.get(a.group_key)
            if not members:
                warnings.warn(
                    f"{path.name}: group {a.group_key!r} has no members in the dataset; skipped"
                )
                continue
            per_attr.setdefault(rel.query.target, []).append(
                microdata.Measurement(a, rel.query.target, tuple(members))
            )

    values: Dict[str, Dict[str, float]] = {}
    report: Dict[str, dict] = {}
    for attr, measurements in sorted(per_attr.items()):
        problem = microdata.build_problem(
            measurements, attr, record_universe=data.primary_keys, nonneg=nonneg
        )
        solution = microdata.solve(problem)
        values[attr] = solution.values
        report[attr] = {
            "measurements": len(measurements),
            "iterations": solution.iterations,
            "objective": solution.objective,
            "underdetermined": list(solution.underdetermined),
            "fits": [
                {
                    "group_key": fit.group_key,
                    "answer": fit.answer,
                    "fitted": fit.fitted,
                    "residual": fit.residual,
                    "weight": fit.weight,
                }
                for fit in solution.fits
            ],
        }
    unmeasured = [attr for attr in ds.CONFIDENTIAL_ATTRS if attr not in values]
    if unmeasured:
        warnings.warn(f"no measurements for {unmeasured}; those columns are written as 0.0")
    microdata.write_microdata_csv(data, values, output_path)
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    click.echo(
        json.dumps(
            {
                "records": len(data),
                "attributes": sorted(values),
                "unmeasured": unmeasured,
                "output": str(output_path),
            },
            indent=2,
        )
    )


# ---------------------------------------------------------------------------
# Evaluation


class _EvalRow:
    """Minimal record for evaluation sums: reconstructed microdata may hold
    negative estimates, which the strict loader rightly rejects."""

    __slots__ = ds.PUBLIC_ATTRS + ("primary_key", "_confidential")

    def __init__(self, publics: dict, primary_key: str, confidential: dict):
        for attr, value in publics.items():
            setattr(self, attr, value)
        self.primary_key = primary_key
        self._confidential = confidential

    def confidential(self, attr: str) -> float:
        return self._confidential[attr]


def _load_eval_rows(path) -> List[_EvalRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ds.CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise InputError(f"{path}: missing required columns {missing}")
        for line_no, raw in enumerate(reader, start=2):
            try:
                publics = {attr: raw[attr].strip() for attr in ds.PUBLIC_ATTRS}
                confidential = {attr: float(raw[attr]) for attr in ds.CONFIDENTIAL_ATTRS}
            except ValueError as exc:
                raise InputError(f"{path}: bad row {line_no}: {exc}") from exc
            rows.append(_EvalRow(publics, raw["primary_key"].strip(), confidential))
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def _eval_sums(rows: Sequence[_EvalRow], query: ds.GroupBySumQuery) -> Dict[str, float]:
    sums: Dict[str, float] = {}
    for row in rows:
        key = query.group_key(row)
        sums[key] = sums.get(key, 0.0) + row.confidential(query.target)
    return sums


def _parse_eval_queries(path) -> List[Tuple[str, ds.GroupBySumQuery]]:
    with open(path, encoding="utf-8") as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{path}: expected a nonempty JSON list of queries")
    queries = []
    for i, entry in enumerate(entries):
        if "target" not in entry:
            raise InputError(f"{path}: query {i} is missing 'target'")
        extra = set(entry) - {"grouper", "target", "k", "label"}
        if extra:
            raise InputError(f"{path}: query {i} has unexpected keys {sorted(extra)}")
        query = ds.GroupBySumQuery(
            grouper=entry.get("grouper", "total"),
            target=entry["target"],
            k=int(entry.get("k", 0)),
        )
        queries.append((entry.get("label", query.label()), query))
    return queries


@main.command("evaluate")
@click.option("--truth", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--synthetic", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "outdir", required=True, type=click.Path(file_okay=False, path_type=Path))
@_guard
def cmd_evaluate(truth, synthetic, queries_path, outdir):
    """Compare group-by answers between a truth file and a synthetic file.

    Per query: quartiles and mean of signed differences (synthetic - true;
    linear-interpolation quantiles), mean absolute error, mean relative
    absolute difference |x - x~|/(x + 1), plus a (true, synthetic) scatter
    CSV per group.  Groups present on only one side are listed, not fatal.
    """
    truth_rows = _load_eval_rows(truth)
    synth_rows = _load_eval_rows(synthetic)
    queries = _parse_eval_queries(queries_path)
    outdir.mkdir(parents=True, exist_ok=True)

    results = []
    for label, query in queries:
        t = _eval_sums(truth_rows, query)
        s = _eval_sums(synth_rows, query)
        common = sorted(set(t) & set(s))
        entry = {
            "label": label,
            "grouper": query.grouper,
            "k": query.k,
            "target": query.target,
            "groups": len(common),
            "missing_in_synthetic": sorted(set(t) - set(s)),
            "extra_in_synthetic": sorted(set(s) - set(t)),
        }
        if common:
            true_vals = np.array([t[k] for k in common])
            synth_vals = np.array([s[k] for k in common])
            signed = synth_vals - true_vals
            q1, med, q3 = np.percentile(signed, [25.0, 50.0, 75.0])
            entry.update(
                {
                    "signed_quartiles": [float(q1), float(med), float(q3)],
                    "signed_mean": float(signed.mean()),
                    "abs_mean": float(np.abs(signed).mean()),
                    "rel_abs_mean": float((np.abs(signed) / (true_vals + 1.0)).mean()),
                    "rel_abs_max": float((np.abs(signed) / (true_vals + 1.0)).max()),
                }
            )
            scatter = outdir / f"scatter_{_safe_name(label)}.csv"
            with open(scatter, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["group_key", "true", "synthetic"])
                for key, tv, sv in zip(common, true_vals, synth_vals):
                    writer.writerow([key, repr(float(tv)), repr(float(sv))])
        results.append(entry)
        mism = len(entry["missing_in_synthetic"]) + len(entry["extra_in_synthetic"])
        line = f"{label}: {entry['groups']} groups"
        if common:
            line += (
                f", signed quartiles [{entry['signed_quartiles'][0]:.4g}, "
                f"{entry['signed_quartiles'][1]:.4g}, {entry['signed_quartiles'][2]:.4g}]"
                f", mean abs {entry['abs_mean']:.4g}, mean rel {entry['rel_abs_mean']:.4g}"
            )
        if mism:
            line += f", {mism} mismatched groups"
        click.echo(line)
    with open(outdir / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump({"queries": results}, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Remaining subcommands


@main.command("validate-nf")
@click.argument("spec")
@click.option("--x-min", type=float, default=1e-9, show_default=True)
@click.option("--x-max", type=float, default=1e6, show_default=True)
@click.option("--points", type=int, default=1024, show_default=True)
@_guard
def cmd_validate_nf(spec: str, x_min: float, x_max: float, points: int):
    """Check a neighbor-function config (JSON file path, or inline JSON).

    Prints the validity report as JSON; an invalid function exits 3 with the
    first violated condition and a witness point.
    """
    try:
        if spec.lstrip().startswith("{"):
            cfg = json.loads(spec)
        else:
            with open(spec, encoding="utf-8") as fh:
                cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"function spec is not valid JSON: {exc}") from exc
    if "neighbor_function" in cfg:
        cfg = cfg["neighbor_function"]
    f = neighbor.from_config(cfg)
    report = neighbor.validate(f, x_min=x_min, x_max=x_max, points=points)
    payload = {
        "function": f.describe(),
        "passed": report.passed,
        "condition": report.condition,
        "witness": [float(w) for w in report.witness],
        "message": report.message,
    }
    if not report.passed:
        click.echo(json.dumps({"error": "InvalidFunctionError", "detail": payload}), err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(json.dumps(payload))


@main.command("synth")
@click.option("--cells", "cells_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--seed", type=int, required=True)
@click.option("--alpha", type=float, default=10.0, show_default=True, help="Concentration shape.")
@click.option("--theta", type=float, default=200.0, show_default=True, help="Concentration scale.")
@click.option("--eta", type=float, default=0.5, show_default=True, help="Month-2 noise parameter.")
@_guard
def cmd_synth(cells_path, output_path, seed, alpha, theta, eta):
    """Generate establishment microdata from county x NAICS-6 aggregate cells."""
    cells = syngen.load_cells_csv(cells_path)
    data = syngen.generate_establishments(RngStream(seed), cells, alpha, theta, eta)
    ds.write_csv(data, output_path)
    click.echo(
        json.dumps({"cells": len(cells), "records": len(data), "output": str(output_path)})
    )


@main.command("bias-sim")
@click.option("--kind", type=click.Choice(["sqrt", "log", "identity"]), required=True)
@click.option("--delta", type=float, required=True)
@click.option("--mu", type=float, default=1.0, show_default=True)
@click.option("--trials", type=int, default=100_000, show_default=True)
@click.option("--counties", type=int, default=100, show_default=True)
@click.option("--per-county", type=int, default=2, show_default=True)
@click.option("--true-value", type=float, default=10.0, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option(
    "--mode",
    "modes",
    multiple=True,
    type=click.Choice(["Est", "Act", "Hybrid"]),
    help="Weighting mode(s); default all three.",
)
@click.option("--output", "output_path", type=click.Path(dir_okay=False, path_type=Path), default=None)
@_guard
def cmd_bias_sim(kind, delta, mu, trials, counties, per_county, true_value, seed, modes, output_path):
    """Reconstruction ablation: MSE per query class under three weighting modes."""
    modes = modes or ("Est", "Act", "Hybrid")
    rows = []
    for stream_id, mode in enumerate(modes):
        config = AblationConfig(
            kind=kind,
            delta=delta,
            mode=mode,
            counties=counties,
            per_county=per_county,
            true_value=true_value,
            mu=mu,
            trials=trials,
        )
        result = ablation_run(config, RngStream(seed, stream_id=stream_id))
        for query_class in ("id", "county", "total"):
            rows.append(
                {
                    "kind": kind,
                    "delta": delta,
                    "mu": mu,
                    "mode": mode,
                    "query_class": query_class,
                    "mse": result.mse[query_class],
                    "se": result.se[query_class],
                    "bias": result.bias[query_class],
                    "floor_hit_rate": result.floor_hit_rate,
                    "trials": trials,
                }
            )
        click.echo(
            f"{kind} delta={delta} {mode}: "
            + ", ".join(
                f"{cls} {result.mse[cls]:.4g} (se {result.se[cls]:.2g})"
                for cls in ("id", "county", "total")
            )
            + (f", floor rate {result.floor_hit_rate:.3g}" if result.floor_hit_rate else "")
        )
    if output_path is not None:
        with open(output_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


@main.command("compose")
@click.argument("mus", nargs=-1, required=True, type=float)
@click.option(
    "--repeat",
    type=int,
    default=1,
    show_default=True,
    help="Apply the whole list this many times (e.g. once per attribute).",
)
@click.option("--check-total", type=float, default=None, help="Fail (exit 3) if composed exceeds this.")
@_guard
def cmd_compose(mus, repeat, check_total):
    """Compose per-release budgets: sqrt of the sum of squares."""
    if repeat < 1:
        raise InputError(f"--repeat must be >= 1, got {repeat}")
    entries = list(mus) * repeat
    total = compose(entries)
    payload = {"entries": len(entries), "mu_composed": total}
    if check_total is not None:
        payload["mu_total"] = check_total
        if total > check_total * (1 + 1e-12):
            raise BudgetError(
                f"composed budget {total:.6g} exceeds the declared total {check_total}"
            )
        payload["within_budget"] = True
    click.echo(json.dumps(payload))


if __name__ == "__main__":
    main()

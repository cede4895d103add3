"""Command-line interface: simulate | fit | estimate | study | report."""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import estimators, longitudinal, science, simulate, study, survival
from .mcmc import McmcConfig


def _mcmc_config(doc: dict, seed: int) -> McmcConfig:
    return McmcConfig(
        chains=int(doc.get("chains", 4)),
        warmup=int(doc.get("warmup", 1000)),
        samples=int(doc.get("samples", 1000)),
        seed=seed,
        target_accept=doc.get("target_accept"),
        rhat_threshold=float(doc.get("rhat_threshold", 1.05)),
        min_ess=float(doc.get("min_ess", 400.0)),
    )


@click.group()
def main() -> None:
    """Treatment effects for longitudinal outcomes truncated by death."""


@main.command()
@click.option("--scenario", required=True, help="Scenario name from the built-in library, or a JSON file of scenario parameters.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("--n", type=int, default=None, help="Override the scenario sample size.")
def simulate_cmd(scenario: str, seed: int, out: str, n: int | None) -> None:
    """Generate a science table and its observed dataset."""
    if Path(scenario).exists():
        lib = simulate.load_scenarios(scenario)
        params = next(iter(lib.values())) if len(lib) == 1 else lib[Path(scenario).stem]
    else:
        params = simulate.get_scenario(scenario)
    if n is not None:
        params = params.with_updates(n=n)
    table = simulate.simulate_science_table(params, simulate.child_seed(seed, params.name, "sim"))
    data = simulate.observe(table)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    science.dump_json(science.science_to_json(table), out_dir / "science.json")
    science.dump_json(science.observed_to_json(data), out_dir / "observed.json")
    with open(out_dir / "truths.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time", "sace", "pc", "sim", "rmst",
             "death_frac_control", "death_frac_treated", "n_ll"]
        )
        for t in params.visit_times:
            tr = simulate.true_estimands(table, t)
            writer.writerow(
                [t, _cell(tr.sace), _cell(tr.pc), _cell(tr.sim), _cell(tr.rmst),
                 _cell(tr.death_frac_control), _cell(tr.death_frac_treated), tr.n_ll]
            )
    click.echo(f"wrote science.json, observed.json, truths.csv to {out_dir}")


def _cell(v) -> str:
    if v is None:
        return "-"
    f = float(v)
    if math.isnan(f):
        return "-"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return f"{f:.6g}"


main.add_command(simulate_cmd, name="simulate")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="Output JSON for the fitted posteriors.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON with optional mcmc / survival_priors / long_priors / grid_cutpoints.")
@click.option("--seed", type=int, default=0, show_default=True)
def fit(data_path: str, out: str, config_path: str | None, seed: int) -> None:
    """Fit the survival model and the per-visit longitudinal models."""
    doc = json.loads(Path(config_path).read_text()) if config_path else {}
    data = science.observed_from_json(science.load_json(data_path))
    if not data.visit_times:
        raise click.ClickException("dataset must carry visit_times")
    grid = (
        survival.HazardGrid(cutpoints=tuple(doc["grid_cutpoints"]))
        if "grid_cutpoints" in doc
        else survival.default_grid(data.follow_up, data.visit_times)
    )
    spriors = survival.SurvivalPriors(**doc.get("survival_priors", {}))
    lpriors = longitudinal.LongPriors(**doc.get("long_priors", {}))
    scfg = _mcmc_config(doc.get("mcmc", {}), seed)
    spost = survival.fit_survival(data, grid, spriors, scfg)
    if not spost.converged:
        click.echo("warning: survival fit flagged by convergence diagnostics", err=True)
    fits = {"survival": spost.to_json(), "longitudinal": {}}
    for ti, t in enumerate(data.visit_times):
        s_mean = spost.s_mis_matrix(data, t).mean(axis=0)
        weights = np.array(
            [s if (p.alive_at(t) and t in p.y_obs) else 0.0
             for p, s in zip(data.patients, s_mean)]
        )
        lcfg = _mcmc_config(doc.get("mcmc", {}), seed + 1 + ti)
        lpost = longitudinal.fit_longitudinal(data, t, weights, lpriors, lcfg)
        if not lpost.converged:
            click.echo(f"warning: longitudinal fit at t={t} flagged by diagnostics", err=True)
        fits["longitudinal"][science._fmt_month(t)] = lpost.to_json()
    science.dump_json(fits, out)
    click.echo(f"wrote posteriors to {out}")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--fits", "fits_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory for estimate CSVs.")
@click.option("--draws", type=int, default=100, show_default=True, help="Paired posterior draws per estimand.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--label", default="dataset", show_default=True, help="Scenario label for the CSV rows.")
def estimate(data_path: str, fits_path: str, out: str, draws: int, seed: int, label: str) -> None:
    """Compute per-draw estimand values and their posterior summaries."""
    data = science.observed_from_json(science.load_json(data_path))
    fits = science.load_json(fits_path)
    spost = survival.SurvivalPosterior.from_json(fits["survival"])
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    est_rows = []
    summary_rows = []
    for key, ldoc in fits["longitudinal"].items():
        t = float(key)
        lpost = longitudinal.LongitudinalPosterior.from_json(ldoc)
        rng = np.random.default_rng(simulate.child_seed(seed, "estimate", key))
        result = estimators.estimand_draws(spost, lpost, data, t, draws, rng)
        for name in ("sace", "pc", "sim", "rmst"):
            values = result.values(name)
            for k, v in enumerate(values):
                est_rows.append(
                    {
                        "scenario": label,
                        "replicate": 0,
                        "time": t,
                        "estimand": name,
                        "draw_index": k,
                        "value": _cell(v),
                        "is_infinite": int(math.isinf(v)),
                    }
                )
            summ = estimators.summarize(values)
            summary_rows.append(
                {
                    "estimand": name,
                    "time": t,
                    "median": _cell(summ.median),
                    "lo95": _cell(summ.lo95),
                    "hi95": _cell(summ.hi95),
                    "frac_undefined": f"{summ.frac_undefined:.4f}",
                }
            )
        summary_rows.append(
            {
                "estimand": "naive_reference_biased",
                "time": t,
                "median": _cell(result.naive),
                "lo95": "-",
                "hi95": "-",
                "frac_undefined": "-",
            }
        )
        summary_rows.append(
            {
                "estimand": "wmw_reference",
                "time": t,
                "median": _cell(result.wmw),
                "lo95": "-",
                "hi95": "-",
                "frac_undefined": "-",
            }
        )
    _write_rows(out_dir / "estimates.csv", est_rows)
    _write_rows(out_dir / "summary.csv", summary_rows)
    click.echo(f"wrote estimates.csv and summary.csv to {out_dir}")


def _write_rows(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


@main.command(name="study")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Study JSON; defaults to all four library scenarios at desk scale.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the master seed.")
@click.option("--workers", type=int, default=None, help="Worker processes (default: TBD_WORKERS or 1).")
def study_cmd(config_path: str | None, out: str, seed: int | None, workers: int | None) -> None:
    """Run the scenario x replicate study and write report CSVs."""
    doc = json.loads(Path(config_path).read_text()) if config_path else {}
    cfg = study.build_config(doc)
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    results = study.run_study(cfg, out, workers=workers)
    study.emit_report(results, out)
    n_failed = results.n_failed
    click.echo(
        f"study complete: {len(results.cells)} cells, {n_failed} failures; reports in {out}"
    )
    if n_failed:
        sys.exit(1)


@main.command()
@click.option("--results", "results_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def report(results_dir: str, out: str) -> None:
    """Regenerate report CSVs from a study output directory."""
    cells_dir = Path(results_dir) / "cells"
    cells = []
    for path in sorted(cells_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        cells.append(study.CellResult.from_doc(doc["cell"]))
    if not cells:
        raise click.ClickException(f"no cells found under {cells_dir}")
    results = study.StudyResults(config_hash="-", cells=cells)
    written = study.emit_report(results, out)
    click.echo("wrote " + ", ".join(str(p) for p in written))


if __name__ == "__main__":
    main()

"""Command line front end: simulation grids, enumeration reports, calibration.

Subcommands
-----------
``simulate``   run a scenario grid from a JSON config and write the three
               result tables (estimator bias, variance-estimator bias,
               coverage) plus a JSON run manifest.
``oracle``     enumerate a small design and write its condition report.
``conditions`` alias of ``oracle``.
``calibrate``  fit rejective working probabilities to target inclusion
               probabilities read from a file.

Exit codes: 0 success, 2 usage or input validation, 3 runtime failure.
The result tables are byte-identical for a fixed config and seed; the
manifest additionally records wall-clock timings and is not.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import designs as dsg
from . import montecarlo as mc
from . import oracle as orc
from . import population as pop
from .errors import ParameterError, SvycdfError

_FMT = "%.6g"


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, ParameterError) else 3)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "nan"
    return _FMT % x


@click.group()
def main():
    """Survey-sampling inference toolkit."""


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _law_from_config(raw: dict) -> pop.SuperPopulationLaw:
    kind = raw.get("kind")
    if kind == "exponential":
        return pop.SuperPopulationLaw.exponential(rate=float(raw.get("rate", 1.0)))
    if kind == "uniform01":
        return pop.SuperPopulationLaw.uniform01()
    if kind == "discrete":
        return pop.SuperPopulationLaw.discrete(raw["points"], raw["masses"])
    raise ParameterError(f"unknown law kind {kind!r} in config")


def _load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from exc


def _cell_header(cell: dict) -> str:
    return f"N={cell['N']} n={cell['n']}"


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="JSON scenario grid.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for tables and manifest.")
@click.option("--paper-scale", is_flag=True,
              help="Raise replication to 1000 populations x 1000 samples.")
@click.option("--workers", default=1, show_default=True, help="Parallel workers.")
@click.option("--seed", default=None, type=int, help="Override the config seed.")
def simulate(config_path, out_dir, paper_scale, workers, seed):
    """Run the configured scenario grid and write the result tables."""
    written: list[Path] = []
    try:
        cfg = _load_config(config_path)
        try:
            law = _law_from_config(cfg.get("law", {"kind": "exponential", "rate": 1.0}))
            designs = list(cfg.get("designs", ["SI", "BE", "PO"]))
            cells = [{"N": int(c["N"]), "n": int(c["n"])} for c in cfg.get("cells", [])]
            n_pops = int(cfg.get("n_populations", 200))
            n_samp = int(cfg.get("n_samples", 200))
            if paper_scale:
                n_pops = n_samp = 1000
            run_seed = int(cfg["seed"] if seed is None else seed)
            alpha = float(cfg.get("alpha", 0.5))
            beta = float(cfg.get("beta", 0.6))
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"bad config field: {exc!r}") from exc
        except ValueError as exc:
            if isinstance(exc, ParameterError):
                raise
            raise ParameterError(f"bad config field: {exc}") from exc
        if not cells:
            raise ParameterError("config must list at least one (N, n) cell")

        reports: dict[tuple[str, int], mc.MonteCarloReport] = {}
        for design in designs:
            for ci, cell in enumerate(cells):
                sc = mc.Scenario(N=cell["N"], n=cell["n"], design=design,
                                 law=law, alpha=alpha, beta=beta,
                                 n_populations=n_pops, n_samples=n_samp,
                                 seed=run_seed)
                reports[(design, ci)] = mc.run_scenario(sc, workers=workers)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cell_cols = [_cell_header(c) for c in cells]

        rb_rows, cov_rows, av_rows = [], [], []
        for design in designs:
            for estimator in mc.ESTIMATORS:
                for center in mc.CENTERS:
                    key = (estimator, center)
                    rb_rows.append([design, estimator, center] + [
                        _fmt(reports[(design, ci)].rb_phi[key]) for ci in range(len(cells))])
                    cov_rows.append([design, estimator, center] + [
                        _fmt(reports[(design, ci)].coverage[key]) for ci in range(len(cells))])
                av_rows.append([design, estimator] + [
                    _fmt(reports[(design, ci)].rb_av[estimator]) for ci in range(len(cells))])

        paths = {
            "rb_estimators": out / "rb_estimators.csv",
            "rb_variance": out / "rb_variance.csv",
            "coverage": out / "coverage.csv",
        }
        written.extend(paths.values())
        _write_csv(paths["rb_estimators"], ["design", "estimator", "center"] + cell_cols, rb_rows)
        _write_csv(paths["rb_variance"], ["design", "estimator"] + cell_cols, av_rows)
        _write_csv(paths["coverage"], ["design", "estimator", "center"] + cell_cols, cov_rows)

        manifest = {
            "seed": run_seed,
            "alpha": alpha,
            "beta": beta,
            "designs": designs,
            "cells": cells,
            "n_populations": n_pops,
            "n_samples": n_samp,
            "versions": {"svycdf": __version__, "numpy": np.__version__,
                         "python": sys.version.split()[0]},
            "timings_seconds": {f"{d}|{_cell_header(cells[ci])}": round(r.timing_seconds, 3)
                                for (d, ci), r in reports.items()},
            "failures": {f"{d}|{_cell_header(cells[ci])}": r.n_failures
                         for (d, ci), r in reports.items()},
        }
        manifest_path = out / "manifest.json"
        written.append(manifest_path)
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
        click.echo(f"wrote {len(written)} files to {out}")
    except SvycdfError as exc:
        for path in written:
            Path(path).unlink(missing_ok=True)
        _fail(exc)


# ---------------------------------------------------------------------------
# oracle / conditions
# ---------------------------------------------------------------------------

def _design_from_spec(raw: str) -> dsg.Design:
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"design spec is not valid JSON: {exc}") from exc
    kind = spec.get("kind")
    if kind == "srswor":
        return dsg.srswor(int(spec["N"]), int(spec["n"]))
    if kind == "bernoulli":
        return dsg.bernoulli(int(spec["N"]), float(spec["p"]))
    if kind == "poisson":
        return dsg.poisson(spec["pi"])
    if kind == "rejective":
        return dsg.rejective(spec["p"], int(spec["n"]))
    raise ParameterError(f"unknown design kind {kind!r}")


def _oracle_impl(design_spec, out_dir, rejective_reference):
    try:
        design = _design_from_spec(design_spec)
        enumerated = orc.enumerate_design(design)
        report = orc.check_conditions(enumerated)
        rows = [[name, _fmt(e.statistic), e.bound_form, _fmt(e.implied_constant)]
                for name, e in report.entries.items()]
        if rejective_reference is not None:
            ref = _design_from_spec(rejective_reference)
            if ref.kind != "rejective":
                raise ParameterError("the reference design must be rejective")
            div = orc.divergence_from_rejective(enumerated, orc.enumerate_design(ref))
            rows.append(["divergence_from_reference", _fmt(div),
                         "sum P log(P/R)", _fmt(div)])
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "conditions.csv",
                   ["condition", "statistic", "bound_form", "implied_constant"], rows)
        click.echo(f"wrote {out / 'conditions.csv'}")
    except SvycdfError as exc:
        _fail(exc)


@main.command(name="oracle")
@click.option("--design", "design_spec", required=True,
              help='Design JSON, e.g. {"kind":"srswor","N":6,"n":3}.')
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--rejective-reference", default=None,
              help='Optional rejective design JSON for a divergence row.')
def oracle_cmd(design_spec, out_dir, rejective_reference):
    """Enumerate a small design and write its condition report."""
    _oracle_impl(design_spec, out_dir, rejective_reference)


@main.command(name="conditions")
@click.option("--design", "design_spec", required=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--rejective-reference", default=None)
def conditions_cmd(design_spec, out_dir, rejective_reference):
    """Alias of ``oracle``."""
    _oracle_impl(design_spec, out_dir, rejective_reference)


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

@main.command()
@click.option("--pi", "pi_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Text file of target inclusion probabilities, one per line.")
@click.option("--n", "size", required=True, type=int, help="Fixed sample size.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--tol", default=1e-10, show_default=True)
@click.option("--max-iter", default=1000, show_default=True)
def calibrate(pi_path, size, out_path, tol, max_iter):
    """Calibrate rejective working probabilities to target inclusion
    probabilities; writes JSON with the p vector and achieved residual."""
    try:
        text = Path(pi_path).read_text(encoding="utf-8")
        try:
            target = np.array([float(tok) for tok in text.replace(",", " ").split()])
        except ValueError as exc:
            raise ParameterError(f"could not parse probabilities: {exc}") from exc
        p = dsg.calibrate_rejective_p(target, size, tol=tol, max_iter=max_iter)
        achieved = dsg.first_order_pi(dsg.rejective(p, size))
        residual = float(np.max(np.abs(achieved - target)))
        payload = {"p": [float(x) for x in p], "n": size, "max_residual": residual}
        Path(out_path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path} (max residual {residual:.3e})")
    except SvycdfError as exc:
        _fail(exc)

"""Command-line front end: ``mesoscatter <subcommand> --config <path> [--out-dir <path>]``.

Exit status is 0 on success, 2 for configuration errors (the message names the
offending field), 3 when a solver fails to converge (a residual history file is
written next to the other outputs) and 1 for any other library error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from mesoscatter import analysis, foldy_lax
from mesoscatter.cluster import cluster_from_json, counting_exponent_fit
from mesoscatter.config import ExperimentConfig, dumps_report, load_config, require
from mesoscatter.effective import compute_C_tensors, compute_K0, effective_parameters
from mesoscatter.errors import ConfigError, ConvergenceError, MesoscatterError
from mesoscatter.farfield import directions_from_json
from mesoscatter.ls_solver import effective_far_field, ls_solve, regularity_diagnostic

SUBCOMMANDS = ("foldy-lax", "ls-solve", "effective", "k0", "counting", "compare", "sweep")
RESIDUAL_HISTORY_FILE = "residual_history.json"

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class Run:
    """Shared state of one invocation: the parsed config and the output directory."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.out_dir = out_dir

    def path(self, key: str):
        name = self.cfg.outputs.get(key)
        return None if not name else self.out_dir / name

    def write_report(self, doc: dict) -> None:
        path = self.path("report_json")
        if path is not None:
            path.write_text(dumps_report(doc))

    def write_far_field(self, samples) -> None:
        path = self.path("far_field_csv")
        if path is not None:
            samples.to_csv(path)

    @property
    def timing(self) -> bool:
        return bool(self.cfg.outputs.get("include_timing", False))


def _c_r(cfg: ExperimentConfig) -> float:
    require(cfg, "cluster")
    require(cfg, "cluster.c_r")
    return float(cfg.cluster["c_r"])


def cmd_foldy_lax(run: Run) -> dict:
    cfg = run.cfg
    require(cfg, "cluster")
    require(cfg, "shape")
    cluster = cluster_from_json(cfg.cluster)
    s = cfg.solver
    sol = foldy_lax.solve(cluster, cfg.pol, cfg.wave, method=s.method, tol=s.tol,
                          restart=s.restart, max_iter=s.max_iter)
    ff = foldy_lax.discrete_far_field(sol, cluster, cfg.pol, cfg.wave.k,
                                      directions_from_json(cfg.directions, cfg.seed))
    run.write_far_field(ff)
    bounds = foldy_lax.apriori_bounds(sol, cluster, cfg.pol, cfg.wave)
    print(f"foldy-lax: M={cluster.M} method={sol.method} iterations={sol.solver_iterations} "
          f"residual={sol.residual_norm:.3e} bounds_hold={bounds['holds']}")
    return {
        "M": cluster.M,
        "c_r": cluster.c_r,
        "a": cluster.a,
        "method": sol.method,
        "iterations": sol.solver_iterations,
        "residual_norm": sol.residual_norm,
        "invertibility_margin": foldy_lax.invertibility_margin(cluster, cfg.pol, cfg.wave.k),
        "apriori_bounds": bounds,
        "transversality": ff.transversality(),
        "far_field_remainder": foldy_lax.far_field_remainder_metadata(cfg.wave.k, cluster.c_r),
    }


def cmd_ls_solve(run: Run) -> dict:
    cfg = run.cfg
    require(cfg, "shape")
    c_r = _c_r(cfg)
    ops = compute_C_tensors(cfg.pol, c_r, convention=cfg.convention)
    diag = regularity_diagnostic(cfg.wave.k, c_r, cfg.pol.c_inf,
                                 cfg.holder_alpha if cfg.holder_alpha is not None else 0.5)
    field = ls_solve(cfg.ls.N, ops, cfg.wave, tol=cfg.ls.tol, restart=cfg.solver.restart,
                     max_iter=cfg.solver.max_iter)
    ff = effective_far_field(field, ops, cfg.wave.k, directions_from_json(cfg.directions, cfg.seed))
    run.write_far_field(ff)
    vol_path = run.path("volume_json")
    if vol_path is not None:
        vol_path.write_text(dumps_report(field.to_json()))
    print(f"ls-solve: N={cfg.ls.N} iterations={field.iterations} "
          f"residual={field.residual_norm:.3e} g*c_r^-3*c_inf={diag['product']:.3e} (c_reg=1)")
    out = {
        "N": cfg.ls.N,
        "c_r": c_r,
        "iterations": field.iterations,
        "residual_norm": field.residual_norm,
        "regularity_diagnostic": diag,
        "transversality": ff.transversality(),
    }
    if cfg.holder_alpha is not None:
        out["holder_estimate"] = {"alpha": cfg.holder_alpha, "is_estimate": True,
                                  "value": analysis.holder_estimate(field, cfg.holder_alpha)}
    return out


def cmd_effective(run: Run) -> dict:
    cfg = run.cfg
    require(cfg, "shape")
    c_r = _c_r(cfg)
    ops = compute_C_tensors(cfg.pol, c_r, convention=cfg.convention)
    corrected = effective_parameters(ops, "corrected")
    leading = effective_parameters(ops, "leading")
    print(f"effective: c_r={c_r:g} spectral_radius={ops.spectral_radius:.3e} "
          f"eps_ring[0,0]={corrected.eps_ring[0, 0]:.10g} mu_ring[0,0]={corrected.mu_ring[0, 0]:.10g}")
    out = ops.to_json()
    out.update({
        "eps_ring": corrected.eps_ring,
        "mu_ring": corrected.mu_ring,
        "eps_ring_leading": leading.eps_ring,
        "mu_ring_leading": leading.mu_ring,
        "condition_a_residual": ops.condition_a_residual(),
    })
    return out


def cmd_k0(run: Run) -> dict:
    K0 = compute_K0()
    dev = float(np.linalg.norm(K0 + np.eye(3) / 3.0))
    with np.printoptions(precision=15, suppress=False):
        print(K0)
    print(f"k0: Frobenius deviation from -I/3 = {dev:.3e}")
    return {"K0": K0, "deviation_from_minus_third": dev}


def cmd_counting(run: Run) -> dict:
    spec = run.cfg.counting
    n_values = spec.get("n_values", [4, 6, 8, 12, 16])
    exponents = spec.get("exponents", [2, 4])
    fits = []
    for p in exponents:
        slope, deltas, maxima = counting_exponent_fit(n_values, p)
        fits.append({"exponent": p, "fitted_slope": slope, "deltas": deltas, "max_sums": maxima})
        print(f"counting: exponent {p}: fitted slope vs delta = {slope:.4f}")
    return {"n_values": list(n_values), "fits": fits}


def cmd_compare(run: Run) -> dict:
    res = analysis.run_pipeline(run.cfg, _c_r(run.cfg))
    run.write_far_field(res.E_disc)
    eff_path = run.path("effective_far_field_csv")
    if eff_path is not None:
        res.E_eff.to_csv(eff_path)
    p = res.point
    print(f"compare: c_r={p.c_r:g} abs_err={p.abs_err:.3e} rel_err={p.rel_err:.3e} "
          f"l2_eps={p.l2_eps:.3e} l2_mu={p.l2_mu:.3e}")
    return {"point": p.to_json(run.timing), "config_echo": run.cfg.echo()}


def cmd_sweep(run: Run) -> dict:
    report = analysis.convergence_study(run.cfg)
    for c, r in zip(report.c_r_sweep, report.errors_rel):
        print(f"sweep: c_r={c:g} rel_err={r:.3e}")
    print(f"sweep: fitted slope = {report.fitted_slope:.4f}")
    if run.timing:
        return report.to_json(include_timing=True)
    sidecar = run.path("report_json")
    if sidecar is not None:
        timing = {"runtime_s": report.runtime_s,
                  "per_point": [p.runtime_s for p in report.points]}
        sidecar.with_suffix(".timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    return report.to_json(include_timing=False)


COMMANDS = {
    "foldy-lax": cmd_foldy_lax,
    "ls-solve": cmd_ls_solve,
    "effective": cmd_effective,
    "k0": cmd_k0,
    "counting": cmd_counting,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mesoscatter", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out-dir", default=".", help="directory for output artifacts")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    return parser


def run(subcommand: str, config_path, out_dir=".") -> int:
    out_dir = Path(out_dir)
    try:
        cfg = load_config(config_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = COMMANDS[subcommand](Run(cfg, out_dir))
        Run(cfg, out_dir).write_report(report)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        history = out_dir / RESIDUAL_HISTORY_FILE
        history.write_text(json.dumps({"message": str(exc),
                                       "residual_history": exc.residual_history}) + "\n")
        print(f"solver failure: {exc} (history in {history})", file=sys.stderr)
        return EXIT_SOLVER
    except MesoscatterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.out_dir)


if __name__ == "__main__":
    sys.exit(main())

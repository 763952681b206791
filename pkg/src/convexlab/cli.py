"""Scenario runner and command-line entry point.

Pipelines: ``simple``/``general`` run the mixture model through the squared
VIX comparison for each maturity; ``slv`` calibrates the two-point mixing
model and checks the preserved ordering at its start time; ``term_structure``
does both, seeding the particle cloud with exact mixture samples at the
model horizon.  All outputs are deterministic functions of (config, seed),
independent of the worker thread count.

Exit codes: 0 success, 1 numerical failure, 2 invalid config, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import engine, local_vol, slv, vix
from .config import (ConfigError, ScenarioConfig, build_mixing, build_model,
                     parse_config, slv_defaults)
from .models import VIX_WINDOW
from .rng import RngSpec

THREADS_ENV = "CONVEXLAB_THREADS"

# substream tags per pipeline phase
_TAG_PSI = 101
_TAG_GYONGY = 102
_TAG_SLV = 103
_TAG_T2_SAMPLES = 104


@dataclass(frozen=True)
class MaturityResult:
    maturity: float
    vix2_constant: float
    forward_variance_limit: float
    curve: vix.ForwardVarianceCurve
    distribution: vix.Vix2Distribution
    futures: vix.VixFuturesComparison
    report: vix.ConvexOrderReport


@dataclass(frozen=True)
class SlvResult:
    spec: slv.BernoulliSpec
    sigma0: float
    start_time: float
    s_eval: float
    surface: slv.LeverageSurface
    flatness: slv.FlatnessReport
    vix2: slv.SlvVix2Result
    report: vix.ConvexOrderReport
    mean_identity: float
    mean_identity_se: float


@dataclass(frozen=True)
class ReportBundle:
    """Everything a scenario run produced, ready for emission."""

    config: ScenarioConfig
    maturity_results: tuple = ()
    slv_result: SlvResult | None = None
    surface: object = None
    verdicts: dict = field(default_factory=dict)


def run_scenario(config: ScenarioConfig) -> ReportBundle:
    """Execute the configured pipeline deterministically from its seed."""
    rng = RngSpec(config.seed)
    threads = config.threads or 1
    num = config.numerics

    maturity_results = []
    surface = None
    verdicts = {}
    model = None
    if config.kind in ("simple", "general", "term_structure") \
            and config.model is not None and num.maturities:
        model = build_model(config)
        surface = (local_vol.ExactLocalVol(model) if config.exact_locvol
                   else local_vol.surface_grid(model))
        for i, T in enumerate(sorted(num.maturities)):
            v2 = vix.vix2_stoch_constant(model, T)
            limit = vix.forward_variance_limit(model, T)
            dist_loc, curve = vix.vix2_loc_distribution(
                surface, T, num.n_quad_nodes, num.inner_paths, num.n_steps,
                rng.substream(_TAG_PSI, i), threads=threads)
            dist_stoch = vix.Vix2Distribution.point_mass(v2)
            futures = vix.vix_futures(dist_stoch, dist_loc)
            report = vix.convex_order_report(dist_stoch, dist_loc,
                                             num.n_strikes)
            maturity_results.append(MaturityResult(
                maturity=T, vix2_constant=v2, forward_variance_limit=limit,
                curve=curve, distribution=dist_loc, futures=futures,
                report=report))
            verdicts[f"T={T!r}"] = report.verdict
    elif config.kind in ("simple", "general", "term_structure") \
            and config.model is not None:
        model = build_model(config)

    slv_result = None
    if config.kind in ("slv", "term_structure"):
        spec = build_mixing(config)
        tau = model.tau if model is not None else VIX_WINDOW
        scfg = slv_defaults(config, tau)
        if config.kind == "term_structure":
            start = model.t2
            s_start = engine.sample_stoch_terminal(
                model, model.t2, scfg.n_particles,
                rng.substream(_TAG_T2_SAMPLES))
        else:
            start = scfg.start_time
            s_start = scfg.s_start
        horizon = (config.slv.horizon if config.slv.horizon is not None
                   else start + 1.25 * tau)
        calib = slv.run_calibration(start, horizon, scfg.dt,
                                    scfg.n_particles, spec, scfg.sigma0,
                                    s_start, rng.substream(_TAG_SLV), tau=tau)
        flat = slv.flatness_report(calib.particles, calib.surface,
                                   scfg.sigma0)
        s_eval = (float(np.median(np.asarray(s_start)))
                  if np.ndim(s_start) else float(s_start))
        vres = slv.slv_vix2(calib.surface, s_eval, spec, scfg.sigma0, start,
                            tau, scfg.inner_paths, scfg.n_steps,
                            rng.substream(_TAG_SLV, 1))
        prep = slv.preserved_order_report(vres.distribution, scfg.sigma0,
                                          config.numerics.n_strikes)
        mean_id = float(np.dot(vres.distribution.weights,
                               [vres.factor_minus * spec.y_minus**2,
                                vres.factor_plus * spec.y_plus**2]))
        mean_id_se = float(np.hypot(
            vres.distribution.weights[0] * spec.y_minus**2 * vres.se_minus,
            vres.distribution.weights[1] * spec.y_plus**2 * vres.se_plus))
        slv_result = SlvResult(spec=spec, sigma0=scfg.sigma0,
                               start_time=start, s_eval=s_eval,
                               surface=calib.surface, flatness=flat,
                               vix2=vres, report=prep,
                               mean_identity=mean_id,
                               mean_identity_se=mean_id_se)
        verdicts[f"T={start!r} (mixing)"] = prep.verdict

    export_surface = surface if isinstance(surface,
                                           local_vol.LocalVolSurface) else None
    return ReportBundle(config=config, maturity_results=tuple(maturity_results),
                        slv_result=slv_result, surface=export_surface,
                        verdicts=verdicts)


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def emit_outputs(bundle: ReportBundle, out_dir: str) -> list:
    """Write the bundle's CSV/JSON artifacts; returns the file manifest.

    Rerunning the same config and seed reproduces every file byte for byte.
    Single-maturity runs use plain file names; with several maturities the
    per-maturity files carry an ``_m<i>`` suffix.
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest = []

    def reg(name):
        manifest.append(name)
        return os.path.join(out_dir, name)

    many = len(bundle.maturity_results) > 1
    for i, res in enumerate(bundle.maturity_results, start=1):
        sfx = f"_m{i}" if many else ""
        _write_csv(reg(f"psi_curve{sfx}.csv"), ("x", "psi", "se"),
                   zip(res.curve.x_nodes, res.curve.estimates,
                       res.curve.std_errors))
        _write_csv(reg(f"vix2_atoms{sfx}.csv"), ("value", "weight"),
                   zip(res.distribution.values, res.distribution.weights))
        _write_csv(reg(f"convex_report{sfx}.csv"),
                   ("strike", "gap", "ci_lo", "ci_hi"),
                   zip(res.report.strikes, res.report.gaps,
                       res.report.ci_lo, res.report.ci_hi))
    if bundle.surface is not None:
        bundle.surface.write_csv(reg("locvol_surface.csv"))
    if bundle.slv_result is not None:
        sres = bundle.slv_result
        surf = sres.surface
        rows = ((t, float(x), float(v))
                for k, t in enumerate(surf.times)
                for x, v in zip(np.exp(surf.x_grid), surf.values[k]))
        _write_csv(reg("leverage_surface.csv"), ("t", "x", "F_hat"), rows)
        _write_csv(reg("slv_vix2_atoms.csv"), ("value", "weight"),
                   zip(sres.vix2.distribution.values,
                       sres.vix2.distribution.weights))
        _write_csv(reg("slv_convex_report.csv"),
                   ("strike", "gap", "ci_lo", "ci_hi"),
                   zip(sres.report.strikes, sres.report.gaps,
                       sres.report.ci_lo, sres.report.ci_hi))

    cfg_name = "scenario_config.cfg"
    with open(os.path.join(out_dir, cfg_name), "w", newline="\n") as fh:
        fh.write(bundle.config.to_text())
    manifest.append(cfg_name)

    summary = _summary_dict(bundle, manifest)
    with open(os.path.join(out_dir, "summary.json"), "w", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest.append("summary.json")
    return manifest


def _summary_dict(bundle, manifest):
    cfg = bundle.config
    out = {
        "scenario": cfg.kind,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "exact_locvol": cfg.exact_locvol,
        "verdicts": bundle.verdicts,
        "maturities": [],
        "manifest": sorted(manifest + ["summary.json"]),
    }
    for res in bundle.maturity_results:
        out["maturities"].append({
            "T": res.maturity,
            "vix2_constant": res.vix2_constant,
            "forward_variance_limit": res.forward_variance_limit,
            "vix2_loc_mean": res.distribution.mean(),
            "vix2_loc_mean_se": res.distribution.mean_se(),
            "vix_future_stoch": res.futures.future_stoch,
            "vix_future_loc": res.futures.future_loc,
            "futures_gap": res.futures.gap,
            "futures_gap_se": res.futures.gap_se,
            "futures_gap_ci99": list(res.futures.ci99),
            "verdict": res.report.verdict,
            "notes": list(res.report.notes),
        })
    if bundle.maturity_results:
        first = bundle.maturity_results[0]
        out["headline"] = {
            "vix2_constant": first.vix2_constant,
            "forward_variance_limit": first.forward_variance_limit,
            "futures_gap": first.futures.gap,
        }
    if bundle.slv_result is not None:
        sres = bundle.slv_result
        out["slv"] = {
            "y_minus": sres.spec.y_minus,
            "y_plus": sres.spec.y_plus,
            "q_minus": sres.spec.q_minus,
            "sigma0": sres.sigma0,
            "start_time": sres.start_time,
            "s_eval": sres.s_eval,
            "factor_minus": sres.vix2.factor_minus,
            "factor_plus": sres.vix2.factor_plus,
            "factor_se_minus": sres.vix2.se_minus,
            "factor_se_plus": sres.vix2.se_plus,
            "vix2_atoms": [list(a) for a in
                           zip(sres.vix2.distribution.values.tolist(),
                               sres.vix2.distribution.weights.tolist())],
            "mean_identity": sres.mean_identity,
            "mean_identity_se": sres.mean_identity_se,
            "flatness_max_rel_dev": sres.flatness.max_abs_rel_dev,
            "leverage_min": float(sres.surface.values.min()),
            "leverage_max": float(sres.surface.values.max()),
            "verdict": sres.report.verdict,
        }
        out.setdefault("headline", {})["slv_flatness_max_rel_dev"] = \
            sres.flatness.max_abs_rel_dev
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convexlab",
        description="Run a convex-ordering scenario from a config file.")
    parser.add_argument("--config", required=True,
                        help="path to the scenario config file")
    parser.add_argument("--out-dir", default=None,
                        help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default: config, then "
                             f"${THREADS_ENV}, then 1)")
    parser.add_argument("--exact-locvol", action="store_true",
                        help="evaluate the local variance exactly instead of "
                             "on the interpolation grid")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}",
              file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2

    threads = args.threads
    if threads is None and os.environ.get(THREADS_ENV):
        try:
            threads = int(os.environ[THREADS_ENV])
        except ValueError:
            print(f"config error: ${THREADS_ENV} must be an integer",
                  file=sys.stderr)
            return 2
    cfg = cfg.with_overrides(seed=args.seed, out_dir=args.out_dir,
                             threads=threads,
                             exact_locvol=args.exact_locvol)

    try:
        bundle = run_scenario(cfg)
    except (ValueError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    try:
        manifest = emit_outputs(bundle, cfg.out_dir)
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3

    for v, verdict in bundle.verdicts.items():
        print(f"{v}: {verdict}")
    print(f"wrote {len(manifest)} files to {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: synthesize or load seeds, run simulation
campaigns, weight outcomes, fit and apply the selection-bias transform,
validate, assess glance-cutting interventions, and emit reports.

Every command validates its inputs, writes a manifest with input/output
digests, and is deterministic for identical inputs (worker count
included). Exit codes: 0 success, 2 validation, 3 model-undefined,
4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bias, report
from .distributions import cut_glances, load_decels, load_glances
from .engine import (
    MODEL_CBM,
    CampaignConfig,
    CampaignResult,
    load_matrices,
    run_campaign,
    save_matrices,
)
from .errors import (
    FitError,
    ModelUndefinedError,
    ParseError,
    RearsimError,
    ValidationError,
)
from .manifest import write_manifest
from .outcome import (
    DEFAULT_BIN_WIDTH_KMH,
    DeltaVDistribution,
    build_histogram,
    delta_v,
    load_histogram,
    mix_no_response,
    prevalence_weights,
    save_histogram,
    weighted_crash_samples,
)
from .scenario import SynthesisConfig, load_seed_dir, save_seed, synthesize_seeds
from .validation import (
    PercentileReport,
    compare,
    crash_avoidance_rate,
    injury_risk,
    load_injury_curve,
    percentile_histogram,
    seed_percentile,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_MODEL_UNDEFINED = 3
EXIT_FIT_FAILURE = 4

SOURCE_CELL = "cell"
SOURCE_NO_RESPONSE = "no_response"

SEEDS_SUMMARY_HEADER = [
    "seed_id", "eligible", "lead_behavior", "anchor_time_s", "anchor_absent",
    "follower_mass_kg", "lead_mass_kg", "seed_delta_v_kmh",
    "no_resp_crashed", "no_resp_v1", "no_resp_v2", "no_resp_dv_kmh",
    "n_crash_cells", "q_raw", "kernel_calls", "theoretical_cells",
    "fallback_rows",
]


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> Path:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def _reference_histogram(path: str, bin_width: float) -> DeltaVDistribution:
    """Reference delta-v histogram: a histogram CSV, or built from the
    recorded delta-v of a seed directory."""
    p = Path(path)
    if p.is_dir():
        seeds = load_seed_dir(p)
        dvs = [s.seed_delta_v_kmh for s in seeds if s.seed_delta_v_kmh is not None]
        if not dvs:
            raise ValidationError(f"{p}: seeds carry no reference delta-v")
        return build_histogram([(dv, 1.0) for dv in dvs], bin_width)
    return load_histogram(p)


# ------------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    cfg = SynthesisConfig.from_json(args.config)
    rng_seed = args.seed if args.seed is not None else 0
    seeds = synthesize_seeds(cfg, rng_seed)
    seeds_dir = out / "seeds"
    seeds_dir.mkdir(exist_ok=True)
    outputs = []
    for seed in seeds:
        csv_path = seeds_dir / f"{seed.id}.csv"
        save_seed(seed, csv_path)
        outputs += [csv_path, csv_path.with_suffix(".json")]
    summary = _write_json(out / "summary.json", {
        "n_seeds": len(seeds),
        "rng_seed": rng_seed,
        "seed_ids": [s.id for s in seeds],
    })
    write_manifest(out, "synth", {"config": args.config},
                   outputs + [summary], {"rng_seed": rng_seed})
    print(f"synth: wrote {len(seeds)} seeds to {seeds_dir}")
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _write_seeds_summary(result: CampaignResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SEEDS_SUMMARY_HEADER)
        for r in result.results:
            nr = r.no_response
            nr_dv = None
            if nr.crashed:
                nr_dv = delta_v(nr.v1, nr.v2, r.follower_mass, r.lead_mass)
            m = r.matrix
            writer.writerow([
                r.seed_id, int(not r.excluded), r.lead_behavior,
                _fmt(r.anchor), int(r.anchor_absent),
                _fmt(r.follower_mass), _fmt(r.lead_mass),
                _fmt(r.seed_delta_v_kmh), int(nr.crashed),
                _fmt(nr.v1), _fmt(nr.v2), _fmt(nr_dv),
                int(m.crashed.sum()) if m is not None else 0,
                _fmt(m.crash_mass) if m is not None else "",
                m.kernel_calls if m is not None else 0,
                r.theoretical_cells,
                m.fallback_rows if m is not None else 0,
            ])


def _load_seeds_summary(path: Path) -> dict[str, dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SEEDS_SUMMARY_HEADER:
            raise ValidationError(f"{path}: unexpected seeds summary header")
        return {row["seed_id"]: row for row in reader}


def _run_configured_campaign(seeds, cfg: CampaignConfig, workers: int) -> CampaignResult:
    glance = None
    if cfg.model == MODEL_CBM:
        if not cfg.glance_file:
            raise ValidationError("campaign config needs glance_file for the cbm model")
        glance = load_glances(cfg.glance_file)
        if cfg.glance_cut_at is not None:
            glance = cut_glances(glance, float(cfg.glance_cut_at))
    if not cfg.decel_file:
        raise ValidationError("campaign config needs decel_file")
    decels = load_decels(cfg.decel_file)
    return run_campaign(seeds, cfg, glance=glance, decels=decels, workers=workers)


def cmd_simulate(args) -> int:
    out = _out_dir(args.out)
    cfg = CampaignConfig.from_json(args.config)
    if args.seed is not None:
        cfg.rng_seed = args.seed
    seeds = load_seed_dir(args.seeds)
    if not seeds:
        raise ValidationError(f"no seeds found in {args.seeds}")
    result = _run_configured_campaign(seeds, cfg, args.workers)

    matrices_path = out / "matrices.csv"
    save_matrices(result.matrices, matrices_path)
    seeds_summary = out / "seeds_summary.csv"
    _write_seeds_summary(result, seeds_summary)
    summary = _write_json(out / "summary.json", {
        "model": result.model,
        "n_seeds": len(result.results),
        "n_excluded": len(result.excluded_ids),
        "excluded_ids": result.excluded_ids,
        "theoretical_cells": result.theoretical_cells,
        "kernel_calls": result.kernel_calls,
        "crash_cells": result.crash_cells,
        "no_response_fraction": (cfg.cbm.no_response_fraction
                                 if cfg.model == MODEL_CBM else 0.0),
        "rng_seed": cfg.rng_seed,
        "glance_cut_at": cfg.glance_cut_at,
    })
    inputs = {"seeds": args.seeds, "config": args.config}
    if cfg.glance_file:
        inputs["glances"] = cfg.glance_file
    if cfg.decel_file:
        inputs["decels"] = cfg.decel_file
    write_manifest(out, "simulate", inputs,
                   [matrices_path, seeds_summary, summary],
                   {"rng_seed": cfg.rng_seed, "model": cfg.model,
                    "workers_independent": True})
    if result.excluded_ids:
        print(f"simulate: warning: {len(result.excluded_ids)} seeds excluded "
              f"(lead not braking or standing still)", file=sys.stderr)
    print(f"simulate: {result.model} on {len(result.results)} seeds, "
          f"{result.theoretical_cells} theoretical cells, "
          f"{result.kernel_calls} kernel calls, "
          f"{result.crash_cells} crash cells")
    return EXIT_OK


# ------------------------------------------------------------------ weight

def _weight_pipeline(matrices, summary_rows: dict[str, dict], fraction: float,
                     bin_width: float):
    """Prevalence weighting + no-response mixing; returns (samples rows,
    final histogram, weights, diagnostics)."""
    weights, zero_crash = prevalence_weights(matrices)
    masses = {sid: (float(row["follower_mass_kg"]), float(row["lead_mass_kg"]))
              for sid, row in summary_rows.items()}
    cells = weighted_crash_samples(matrices, masses, weights)

    nr_rows = [(sid, float(row["no_resp_dv_kmh"]))
               for sid, row in sorted(summary_rows.items())
               if row["no_resp_crashed"] == "1" and row["eligible"] == "1"]
    base = build_histogram([(dv, w) for _, dv, w in cells], bin_width)
    if fraction > 0:
        if not nr_rows:
            raise ValidationError("no no-response crashes to mix in")
        final = mix_no_response(base, [dv for _, dv in nr_rows], fraction)
    else:
        final = base

    samples = [(sid, dv, (1.0 - fraction) * w, SOURCE_CELL)
               for sid, dv, w in cells]
    if fraction > 0:
        nr_w = fraction / len(nr_rows)
        samples += [(sid, dv, nr_w, SOURCE_NO_RESPONSE) for sid, dv in nr_rows]

    w_unt = np.array([w.w_untrimmed for w in weights])
    w_trim = np.array([w.w for w in weights])
    diagnostics = {
        "zero_crash_seeds": zero_crash,
        "n_weighted_seeds": len(weights),
        "n_no_response": len(nr_rows),
        "weight_span_untrimmed": float(w_unt.max() / w_unt.min()),
        "weight_span_trimmed": float(w_trim.max() / w_trim.min()),
        "no_response_fraction": fraction,
    }
    return samples, final, weights, diagnostics


def cmd_weight(args) -> int:
    out = _out_dir(args.out)
    sim_dir = Path(args.simulate_out)
    with open(sim_dir / "summary.json") as fh:
        sim_summary = json.load(fh)
    fraction = float(sim_summary.get("no_response_fraction", 0.0))
    matrices = load_matrices(sim_dir / "matrices.csv")
    summary_rows = _load_seeds_summary(sim_dir / "seeds_summary.csv")
    samples, final, weights, diagnostics = _weight_pipeline(
        matrices, summary_rows, fraction, args.bin_width)

    samples_path = out / "samples.csv"
    with open(samples_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_id", "delta_v_kmh", "weight", "source"])
        for sid, dv, w, source in samples:
            writer.writerow([sid, repr(float(dv)), repr(float(w)), source])
    weights_path = out / "weights.csv"
    contributions = {}
    for sid, _, w, source in samples:
        if source == SOURCE_CELL:
            contributions[sid] = contributions.get(sid, 0.0) + w
    with open(weights_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed_id", "q_raw", "q_norm", "w_untrimmed",
                         "w_trimmed", "contribution"])
        for w in weights:
            writer.writerow([w.seed_id, repr(w.q_raw), repr(w.q_norm),
                             repr(w.w_untrimmed), repr(w.w),
                             repr(contributions.get(w.seed_id, 0.0))])
    hist_path = out / "hist.csv"
    save_histogram(final, hist_path)
    summary = _write_json(out / "summary.json", {
        "mean_kmh": final.mean,
        "count": final.count,
        "n_samples": len(samples),
        **diagnostics,
    })
    write_manifest(out, "weight", {"simulate_out": str(sim_dir)},
                   [samples_path, weights_path, hist_path, summary],
                   {"bin_width": args.bin_width})
    print(f"weight: mean delta-v {final.mean:.2f} km/h over "
          f"{diagnostics['n_weighted_seeds']} seeds "
          f"({len(diagnostics['zero_crash_seeds'])} without crashes)")
    return EXIT_OK


# ---------------------------------------------------------------- fit-bias

def cmd_fit_bias(args) -> int:
    out = _out_dir(args.out)
    records = bias.load_occupants(args.occupants)
    injury = _reference_histogram(args.injury_hist, args.bin_width)
    model, pdo_hist, diagnostics = bias.build_pdo(
        records, args.p_pdo, args.n_fill_bins, args.bin_width)
    reference = bias.augment_reference(injury, model, args.p_pdo)
    tf, fit_diag = bias.fit_transfer(reference, injury)

    pdo_path = out / "pdo.json"
    bias.save_model_json(model, pdo_path, {"diagnostics": diagnostics})
    tf_path = out / "transfer.json"
    bias.save_model_json(tf, tf_path, {"cost": fit_diag["cost"],
                                       "saturated": fit_diag["saturated"]})
    ref_path = out / "augmented_reference.csv"
    save_histogram(reference, ref_path)
    pdo_hist_path = out / "pdo_hist.csv"
    save_histogram(pdo_hist, pdo_hist_path)
    residual_path = out / "residual_curve.csv"
    with open(residual_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c1", "min_cost_over_c2"])
        for c1, cost in zip(bias.C1_GRID, fit_diag["cost_by_c1"]):
            writer.writerow([repr(float(c1)), repr(float(cost))])
    write_manifest(out, "fit-bias",
                   {"occupants": args.occupants, "injury_hist": args.injury_hist},
                   [pdo_path, tf_path, ref_path, pdo_hist_path, residual_path],
                   {"p_pdo": args.p_pdo, "n_fill_bins": args.n_fill_bins})
    print(f"fit-bias: PDO shape B1={model.B1:.4g} B2={model.B2:.4g}; "
          f"transfer C1={tf.C1:.3f} C2={tf.C2:.4f} "
          f"(midpoint {tf.midpoint:.1f} km/h, cost {fit_diag['cost']:.4g})")
    if fit_diag["saturated"]:
        print("fit-bias: warning: transfer saturated at the C1 grid edge "
              "(inputs may already share a selection process)", file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------- apply-bias

def cmd_apply_bias(args) -> int:
    out = _out_dir(args.out)
    dist = load_histogram(args.hist)
    tf = bias.load_transfer(args.transfer)
    transformed = bias.apply_transfer(dist, tf)
    out_path = out / "transformed.csv"
    save_histogram(transformed, out_path)
    summary = _write_json(out / "summary.json", {
        "mean_kmh": transformed.mean,
        "input_mean_kmh": dist.mean,
        "C1": tf.C1, "C2": tf.C2,
    })
    write_manifest(out, "apply-bias",
                   {"hist": args.hist, "transfer": args.transfer},
                   [out_path, summary], {})
    print(f"apply-bias: mean {dist.mean:.2f} -> {transformed.mean:.2f} km/h")
    return EXIT_OK


# ---------------------------------------------------------------- validate

def _load_samples(path: Path) -> dict[str, dict[str, list]]:
    per_seed: dict[str, dict[str, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entry = per_seed.setdefault(
                row["seed_id"], {SOURCE_CELL: [], SOURCE_NO_RESPONSE: []})
            entry[row["source"]].append(
                (float(row["delta_v_kmh"]), float(row["weight"])))
    return per_seed


def _per_seed_percentiles(per_seed_samples, summary_rows, fraction: float):
    """Percentile of each seed's own delta-v inside its generated crashes,
    with the no-response share mixed in per seed."""
    out = {}
    for sid, row in sorted(summary_rows.items()):
        if row["eligible"] != "1" or not row["seed_delta_v_kmh"]:
            continue
        entry = per_seed_samples.get(sid)
        if entry is None:
            continue
        cells = entry[SOURCE_CELL]
        nr = entry[SOURCE_NO_RESPONSE]
        dvs = [dv for dv, _ in cells]
        cell_mass = sum(w for _, w in cells)
        f = fraction if nr else 0.0
        weights = [(1.0 - f) * w / cell_mass for _, w in cells] if cell_mass else []
        if nr and cell_mass:
            dvs += [dv for dv, _ in nr]
            weights += [f / len(nr)] * len(nr)
        elif nr:
            dvs = [dv for dv, _ in nr]
            weights = [1.0 / len(nr)] * len(nr)
        if not dvs:
            continue
        out[sid] = seed_percentile(float(row["seed_delta_v_kmh"]), dvs, weights)
    return out


def cmd_validate(args) -> int:
    out = _out_dir(args.out)
    model_hist = load_histogram(args.model_hist)
    reference = _reference_histogram(args.reference, model_hist.bin_width)
    stats = compare(model_hist, reference)
    outputs = []
    comparison = _write_json(out / "comparison.json", {
        "model_mean_kmh": model_hist.mean,
        "reference_mean_kmh": reference.mean,
        **vars(stats),
    })
    outputs.append(comparison)

    inputs = {"model_hist": args.model_hist, "reference": args.reference}
    if args.samples:
        if not args.seeds_summary:
            raise ValidationError("--samples requires --seeds-summary")
        per_seed = _load_samples(Path(args.samples))
        summary_rows = _load_seeds_summary(Path(args.seeds_summary))
        percentiles = _per_seed_percentiles(per_seed, summary_rows,
                                            args.no_response_fraction)
        rep = percentile_histogram(percentiles.values(), args.n_bins)
        pct_path = out / "percentiles.csv"
        with open(pct_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed_id", "percentile"])
            for sid, value in sorted(percentiles.items()):
                writer.writerow([sid, value if isinstance(value, str)
                                 else repr(float(value))])
        rep_path = _write_json(out / "percentile_report.json", {
            "n_bins": rep.n_bins,
            "counts": rep.counts.tolist(),
            "below_min": rep.below_min,
            "above_max": rep.above_max,
            "chi2": rep.chi2,
            "p_value": rep.p_value,
        })
        outputs += [pct_path, rep_path]
        inputs["samples"] = args.samples
        inputs["seeds_summary"] = args.seeds_summary

    if args.curves:
        risks = {}
        for curve_path in args.curves:
            curve = load_injury_curve(curve_path)
            risks[curve.level] = {
                "model": injury_risk(model_hist, curve),
                "reference": injury_risk(reference, curve),
            }
            inputs[f"curve_{curve.level}"] = curve_path
        risk_path = _write_json(out / "injury_risk.json", risks)
        outputs.append(risk_path)

    write_manifest(out, "validate", inputs, outputs,
                   {"n_bins": args.n_bins})
    print(f"validate: TV {stats.tv_distance:.3f}, KS {stats.ks_distance:.3f}, "
          f"KL {stats.kl_divergence:.3f}, "
          f"mean diff {stats.abs_mean_diff:.2f} km/h")
    return EXIT_OK


# --------------------------------------------------------------- assess-dms

def cmd_assess_dms(args) -> int:
    out = _out_dir(args.out)
    cfg = CampaignConfig.from_json(args.config)
    if cfg.model != MODEL_CBM:
        raise ValidationError("glance cutting only applies to the cbm model")
    seeds = load_seed_dir(args.seeds)

    baseline_dir = Path(args.baseline)
    baseline_matrices = load_matrices(baseline_dir / "matrices.csv")
    summary_rows = _load_seeds_summary(baseline_dir / "seeds_summary.csv")
    with open(baseline_dir / "summary.json") as fh:
        fraction = float(json.load(fh).get("no_response_fraction", 0.0))
    _, base_hist, _, _ = _weight_pipeline(
        baseline_matrices, summary_rows, fraction, args.bin_width)

    curves = [load_injury_curve(p) for p in (args.curves or [])]
    base_risks = {c.level: injury_risk(base_hist, c) for c in curves}

    rows = []
    outputs = []
    for cut in args.cuts:
        cut_cfg = CampaignConfig.from_json(args.config)
        cut_cfg.rng_seed = cfg.rng_seed
        cut_cfg.glance_cut_at = None if math.isinf(cut) else cut
        result = _run_configured_campaign(seeds, cut_cfg, args.workers)
        rate, per_seed = crash_avoidance_rate(baseline_matrices, result.matrices)
        zero_crash = [m.seed_id for m in result.matrices if m.crash_mass <= 0]
        _, cut_hist, _, _ = _weight_pipeline(
            result.matrices, summary_rows, fraction, args.bin_width)
        label = "inf" if math.isinf(cut) else f"{cut:g}"
        hist_path = out / f"hist_cut_{label}.csv"
        save_histogram(cut_hist, hist_path)
        outputs.append(hist_path)
        row = {
            "cut_at_s": None if math.isinf(cut) else cut,
            "avoidance_rate": rate,
            "mean_dv_kmh": cut_hist.mean,
            "mean_dv_delta_kmh": cut_hist.mean - base_hist.mean,
            "seeds_without_crashes": len(zero_crash),
            "min_per_seed_avoidance": min(per_seed.values()),
        }
        if curves:
            row["injury_risk"] = {
                c.level: {"value": injury_risk(cut_hist, c),
                          "delta": injury_risk(cut_hist, c) - base_risks[c.level]}
                for c in curves}
        rows.append(row)

    assess = _write_json(out / "assess.json", {
        "baseline_mean_dv_kmh": base_hist.mean,
        "baseline_injury_risk": base_risks,
        "cuts": rows,
    })
    write_manifest(out, "assess-dms",
                   {"seeds": args.seeds, "config": args.config,
                    "baseline": args.baseline},
                   outputs + [assess],
                   {"cuts": [None if math.isinf(c) else c for c in args.cuts]})
    for row in rows:
        cut = row["cut_at_s"]
        print(f"assess-dms: cut {'none' if cut is None else cut}: "
              f"avoidance {row['avoidance_rate']:.1%}, mean delta-v "
              f"{row['mean_dv_kmh']:.2f} km/h "
              f"({row['mean_dv_delta_kmh']:+.2f})")
    return EXIT_OK


# ------------------------------------------------------------------ report

def _labeled(pairs: list[str]) -> list[tuple[str, str]]:
    out = []
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"expected label=path, got {pair!r}")
        label, path = pair.split("=", 1)
        out.append((label, path))
    return out


def cmd_report(args) -> int:
    out = _out_dir(args.out)
    outputs = []
    inputs: dict[str, str] = {}

    if args.hist:
        series = []
        for label, path in _labeled(args.hist):
            series.append((label, load_histogram(path)))
            inputs[f"hist_{label}"] = path
        svg = out / "delta_v.svg"
        report.histogram_svg(series, "Delta-v distributions", svg)
        outputs.append(svg)
        if len(series) > 1:
            stats_path = out / "stats.csv"
            ref_label, ref = series[0]
            with open(stats_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["pair", "abs_mean_diff", "mean_abs_diff",
                                 "weighted_mean_abs_diff", "max_abs_diff",
                                 "tv_distance", "kl_divergence", "ks_distance"])
                for label, dist in series[1:]:
                    s = compare(dist, ref)
                    writer.writerow([f"{ref_label} vs {label}"] + [
                        repr(float(v)) for v in vars(s).values()])
            outputs.append(stats_path)

    if args.percentiles:
        reps = []
        for label, path in _labeled(args.percentiles):
            with open(path) as fh:
                raw = json.load(fh)
            reps.append((label, PercentileReport(
                raw["n_bins"], np.array(raw["counts"]), raw["below_min"],
                raw["above_max"], raw["chi2"], raw["p_value"])))
            inputs[f"percentiles_{label}"] = path
        svg = out / "percentiles.svg"
        report.percentile_svg(reps, "Seed percentile uniformity", svg)
        outputs.append(svg)

    if args.assess:
        with open(args.assess) as fh:
            assess = json.load(fh)
        labels = [f"cut {row['cut_at_s'] or 'none'}s" for row in assess["cuts"]]
        values = [row["avoidance_rate"] for row in assess["cuts"]]
        svg = out / "avoidance.svg"
        report.bar_svg(labels, values, "Crash avoidance rate",
                       "avoidance rate", svg)
        outputs.append(svg)
        inputs["assess"] = args.assess

    if not outputs:
        raise ValidationError("report: nothing to do (pass --hist/--percentiles/--assess)")
    write_manifest(out, "report", inputs, outputs, {})
    print(f"report: wrote {len(outputs)} artifacts to {out}")
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rearsim",
        description="counterfactual rear-end crash generation and validation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize seed crashes")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="run a simulation campaign")
    p.add_argument("--seeds", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("weight", help="prevalence-weight campaign outcomes")
    p.add_argument("--simulate-out", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH_KMH)
    p.set_defaults(func=cmd_weight)

    p = sub.add_parser("fit-bias", help="fit the PDO shape and transfer function")
    p.add_argument("--occupants", required=True)
    p.add_argument("--injury-hist", required=True,
                   help="histogram CSV or a seeds directory")
    p.add_argument("--out", required=True)
    p.add_argument("--p-pdo", type=float, default=bias.DEFAULT_P_PDO)
    p.add_argument("--n-fill-bins", type=int, default=bias.DEFAULT_N_FILL_BINS)
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH_KMH)
    p.set_defaults(func=cmd_fit_bias)

    p = sub.add_parser("apply-bias", help="apply a fitted transfer function")
    p.add_argument("--hist", required=True)
    p.add_argument("--transfer", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_bias)

    p = sub.add_parser("validate", help="compare model output to a reference")
    p.add_argument("--model-hist", required=True)
    p.add_argument("--reference", required=True,
                   help="histogram CSV or a seeds directory")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", default=None,
                   help="weighted samples CSV for percentile analysis")
    p.add_argument("--seeds-summary", default=None)
    p.add_argument("--no-response-fraction", type=float, default=0.10)
    p.add_argument("--curves", nargs="*", default=None)
    p.add_argument("--n-bins", type=int, default=10)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("assess-dms", help="assess glance-cutting interventions")
    p.add_argument("--seeds", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--baseline", required=True,
                   help="simulate output directory for the uncut baseline")
    p.add_argument("--cuts", type=float, nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH_KMH)
    p.add_argument("--curves", nargs="*", default=None)
    p.set_defaults(func=cmd_assess_dms)

    p = sub.add_parser("report", help="emit SVG charts and stats tables")
    p.add_argument("--hist", nargs="*", default=None, metavar="LABEL=PATH")
    p.add_argument("--percentiles", nargs="*", default=None, metavar="LABEL=PATH")
    p.add_argument("--assess", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ParseError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ModelUndefinedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL_UNDEFINED
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT_FAILURE
    except RearsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

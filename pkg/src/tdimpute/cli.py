"""Command-line entry point: config-driven, reproducible runs.

    tdimpute <command> --config run.toml [--seed N] [--out DIR]

Commands: impute, mask-eval, ffill-eval, predict, synth, stats.
Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
Inputs are validated before anything is written, and every output is a
deterministic function of the config plus seed.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import backend
from .config import RunConfig, derive_seed, load_config
from .errors import ConfigError, DataError, NumericalError, TdimputeError
from .imputers import ImputerSpec, impute_dataset
from .ingest import (
    apply_standardizer,
    build_panel,
    fit_standardizer,
    invert_standardizer,
    load_labels_csv,
    load_ranges_csv,
    load_statics_csv,
    parse_long_csv,
    write_long_csv,
)
from .masking import (
    ImputerFailed,
    missing_rate_after_ffill,
    run_ffill_subset_benchmark,
    run_masking_benchmark,
)
from .panel import PROVENANCE_LABELS, PanelDataset, build_mask
from .predict import cross_validate
from .synth import generate_synthetic
from .tdi import compute_frequencies, multiple_impute, tdi_impute


def _load_panel(cfg: RunConfig):
    """Shared ingestion path: parse, clean, bin, optionally subsample."""
    data_path = cfg.input_path("data")
    ranges_path = cfg.optional_input("ranges")
    ranges = load_ranges_csv(ranges_path) if ranges_path else None
    records = parse_long_csv(data_path)
    panel, n_dropped = build_panel(records, cfg.grid_hours, ranges=ranges)
    n_sub = cfg.subsample_patients
    if n_sub is not None and n_sub < panel.n_patients:
        rng = np.random.default_rng(derive_seed(cfg.seed, "subsample"))
        keep = sorted(rng.choice(panel.n_patients, size=n_sub, replace=False))
        panel = PanelDataset(
            tuple(panel.patients[i] for i in keep), panel.variables
        )
    return panel, n_dropped


def _select_engine(cfg: RunConfig):
    """Engine for single-panel commands: [impute].engine, default tdi."""
    engine = cfg.doc.get("impute", {}).get("engine", "tdi")
    if engine == "tdi":
        return cfg.tdi_spec()
    for spec in cfg.imputer_specs():
        if spec.kind == engine:
            return spec
    return ImputerSpec.from_dict({"kind": engine})


def _result_rows(result, panel):
    names = panel.variable_names
    for i, p in enumerate(result.values.patients):
        codes = result.provenance[i]
        weights = result.weights[i] if result.weights is not None else None
        for r in range(p.n_rows):
            for c in range(panel.n_variables):
                w = float(weights[r, c]) if weights is not None else float("nan")
                yield (
                    p.id,
                    float(p.timestamps[r]),
                    names[c],
                    float(p.values[r, c]),
                    PROVENANCE_LABELS[codes[r, c]],
                    w,
                )


def cmd_impute(cfg: RunConfig, out: Path) -> int:
    panel, _ = _load_panel(cfg)
    params = None
    if cfg.standardize:
        params = fit_standardizer(panel)
        panel = apply_standardizer(panel, params)
    mask = build_mask(panel)
    spec = _select_engine(cfg)
    m = cfg.m
    is_tdi = not isinstance(spec, ImputerSpec)
    if m >= 2:
        if not is_tdi:
            raise ConfigError("multiple imputation (m >= 2) needs engine = 'tdi'")
        multi = multiple_impute(panel, mask, spec, m)
        for seed, result in zip(multi.seeds, multi.results):
            completed = result.values
            if params is not None:
                completed = invert_standardizer(completed, params)
            write_long_csv(completed, out / f"imputed_seed{seed}.csv")
        with open(out / "imputed_variance.csv", "w", encoding="utf-8") as fh:
            fh.write("patient_id,time,variable,mean,variance\n")
            for i, p in enumerate(multi.mean.patients):
                var = multi.variance[i]
                for r in range(p.n_rows):
                    t = float(p.timestamps[r])
                    for c in range(panel.n_variables):
                        fh.write(
                            f"{p.id},{t!r},{panel.variable_names[c]},"
                            f"{float(p.values[r, c])!r},{float(var[r, c])!r}\n"
                        )
        print(f"wrote {m} imputed panels + variance summary to {out}")
        return 0

    if is_tdi:
        result = tdi_impute(panel, mask, spec)
    else:
        result = impute_dataset(panel, mask, spec)
    completed = result.values
    if params is not None:
        completed = invert_standardizer(completed, params)
    write_long_csv(completed, out / "imputed.csv")
    with open(out / "provenance.csv", "w", encoding="utf-8") as fh:
        fh.write("patient_id,time,variable,value,source,weight\n")
        for pid, t, var, val, source, w in _result_rows(result, panel):
            w_s = "" if np.isnan(w) else repr(float(w))
            fh.write(f"{pid},{t!r},{var},{val!r},{source},{w_s}\n")
    print(f"wrote imputed panel + provenance to {out}")
    return 0


def _mask_eval(cfg: RunConfig, out: Path, ffill_subset: bool) -> int:
    panel, _ = _load_panel(cfg)
    params = None
    if cfg.standardize:
        params = fit_standardizer(panel)
        panel = apply_standardizer(panel, params)
    specs = list(cfg.imputer_specs())
    if "tdi" in cfg.doc:
        specs.append(cfg.tdi_spec())
    if not specs:
        raise ConfigError("no imputers configured: add [[imputers]] or [tdi]")
    runner = run_ffill_subset_benchmark if ffill_subset else run_masking_benchmark
    report = runner(
        panel, specs, cfg.masking_p, derive_seed(cfg.seed, "masking"), params
    )
    stem = "ffill_report" if ffill_subset else "masking_report"
    (out / f"{stem}.csv").write_text(report.to_csv_text(), encoding="utf-8")
    (out / f"{stem}.json").write_text(report.to_json_text(), encoding="utf-8")
    (out / f"{stem}_figure.csv").write_text(
        report.figure_csv_text(), encoding="utf-8"
    )
    print(f"wrote {stem}.csv/.json + per-variable NRMSE table to {out}")
    return 0


def cmd_mask_eval(cfg: RunConfig, out: Path) -> int:
    return _mask_eval(cfg, out, ffill_subset=False)


def cmd_ffill_eval(cfg: RunConfig, out: Path) -> int:
    return _mask_eval(cfg, out, ffill_subset=True)


def cmd_predict(cfg: RunConfig, out: Path) -> int:
    panel, _ = _load_panel(cfg)
    labels = load_labels_csv(cfg.input_path("labels"))
    statics_path = cfg.optional_input("statics")
    statics = load_statics_csv(statics_path) if statics_path else None
    spec = _select_engine(cfg)
    result = cross_validate(
        panel, labels, spec, cfg.cv_config(), cfg.task_config(), statics
    )
    with open(out / "prediction_folds.csv", "w", encoding="utf-8") as fh:
        fh.write("fold,auroc,aupr,n_train,n_test\n")
        for fr in result.folds:
            fh.write(
                f"{fr.fold},{fr.auroc!r},{fr.aupr!r},{fr.n_train},{fr.n_test}\n"
            )
    with open(out / "prediction_summary.csv", "w", encoding="utf-8") as fh:
        fh.write("metric,mean,median,sd\n")
        fh.write(
            f"auroc,{result.auroc_mean!r},{result.auroc_median!r},"
            f"{result.auroc_sd!r}\n"
        )
        fh.write(
            f"aupr,{result.aupr_mean!r},{result.aupr_median!r},"
            f"{result.aupr_sd!r}\n"
        )
    print(
        f"AUROC mean {result.auroc_mean:.3f}, AUPR mean {result.aupr_mean:.3f}; "
        f"details in {out}"
    )
    return 0


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    truth, observed, _mask = generate_synthetic(cfg.synthetic_config())
    write_long_csv(observed, out / "synthetic.csv")
    write_long_csv(truth, out / "synthetic_truth.csv")
    print(
        f"wrote synthetic panel ({observed.n_patients} patients, "
        f"{observed.n_variables} variables) to {out}"
    )
    return 0


def cmd_stats(cfg: RunConfig, out: Path) -> int:
    panel, _ = _load_panel(cfg)
    mask = build_mask(panel)
    freq = compute_frequencies(panel, mask)
    after_ffill = missing_rate_after_ffill(panel, mask)
    total_rows = sum(p.n_rows for p in panel.patients)
    stacked = np.vstack([p.values for p in panel.patients])
    with open(out / "variable_stats.csv", "w", encoding="utf-8") as fh:
        fh.write(
            "variable,n_observed,mean,sd,missing_rate,frequency,"
            "missing_rate_after_ffill\n"
        )
        for j, name in enumerate(panel.variable_names):
            col = stacked[:, j]
            col = col[np.isfinite(col)]
            n_obs = col.size
            mean = float(col.mean()) if n_obs else float("nan")
            sd = float(col.std()) if n_obs else float("nan")
            missing = 1.0 - n_obs / total_rows
            fh.write(
                f"{name},{n_obs},{mean!r},{sd!r},{missing!r},"
                f"{float(freq[j])!r},{float(after_ffill[j])!r}\n"
            )
    print(f"wrote per-variable statistics to {out}")
    return 0


COMMANDS = {
    "impute": cmd_impute,
    "mask-eval": cmd_mask_eval,
    "ffill-eval": cmd_ffill_eval,
    "predict": cmd_predict,
    "synth": cmd_synth,
    "stats": cmd_stats,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tdimpute",
        description="Time-dependent imputation and evaluation for panel data "
        f"(kernel backend: {backend.BACKEND})",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's top-level seed")
    parser.add_argument("--out", default=None,
                        help="output directory (default: [output].dir or cwd)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        cfg = RunConfig(doc, seed_override=args.seed)
        out = Path(
            args.out
            if args.out is not None
            else doc.get("output", {}).get("dir", ".")
        )
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ImputerFailed as exc:
        cause = exc.__cause__
        kind = 3 if isinstance(cause, (NumericalError, np.linalg.LinAlgError)) else 2
        print(f"{exc} ({cause})", file=sys.stderr)
        return kind
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except TdimputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())

"""Report artifacts for experiment runs: repetitions.csv, mif.csv,
mean_coefficients.csv and report.json."""

from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .data import _format_number
from .pipeline import ExperimentReport, RepetitionResult


def _fmt(value) -> str:
    return "NA" if value is None else _format_number(value)


def write_repetitions_csv(path, results: list[RepetitionResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("repetition,seed,model,subgroup,selected_lambda,cindex\n")
        for res in results:
            for rec in res.records:
                fh.write(
                    f"{res.index},{res.seed},{rec.model},{rec.subgroup},"
                    f"{_format_number(rec.selected_lambda)},{_fmt(rec.cindex)}\n"
                )


def write_mif_csv(path, report: ExperimentReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,subgroup,feature,mif\n")
        for m in report.models:
            for s in report.subgroup_labels:
                for j, name in enumerate(report.feature_names):
                    fh.write(f"{m},{s},{name},{_format_number(report.mif[m][s][j])}\n")


def write_mean_coefficients_csv(path, report: ExperimentReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,subgroup,feature,mean_coefficient\n")
        for m in report.models:
            for s in report.subgroup_labels:
                for j, name in enumerate(report.feature_names):
                    fh.write(
                        f"{m},{s},{name},"
                        f"{_format_number(report.mean_coefficients[m][s][j])}\n"
                    )


def report_json_payload(report: ExperimentReport, config_echo: dict) -> dict:
    return {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": config_echo,
        "repetitions": report.repetitions,
        "successes": report.successes,
        "failures": [list(f) for f in report.failures],
        "cindex_mean": report.cindex_mean,
        "cindex_overall": report.cindex_overall,
        "cindex_undefined": report.cindex_undefined,
        "classifier_auc": report.classifier_auc,
    }


def write_report_dir(
    out_dir,
    report: ExperimentReport,
    results: list[RepetitionResult],
    config_echo: dict,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_repetitions_csv(out / "repetitions.csv", results)
    write_mif_csv(out / "mif.csv", report)
    write_mean_coefficients_csv(out / "mean_coefficients.csv", report)
    payload = report_json_payload(report, config_echo)
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out

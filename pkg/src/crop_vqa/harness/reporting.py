"""Per-question result records, aggregation, and report emission.

Two streams leave a run: ``records.jsonl`` (deterministic per-question
results, byte-identical across reruns of the same config) and
``timings.jsonl`` (wall-clock stage timings, inherently noisy, kept apart so
determinism checks stay honest). Aggregates are always recomputable from the
per-question stream; ``reaggregate`` is that round trip.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..metrics import mean_accuracy

RECORDS_FILENAME = "records.jsonl"
TIMINGS_FILENAME = "timings.jsonl"
REPORT_FILENAME = "report.json"
CONFIG_FILENAME = "run_config.json"

SIZE_GROUP_ORDER = ("S<0.005", "0.005<=S<0.05", "S>=0.05")


class ReportError(ValueError):
    """The report inputs are unusable (empty, mismatched, or missing files)."""


@dataclass(frozen=True)
class QuestionResult:
    """Deterministic outcome for one question.

    ``error`` is None on success; otherwise a short ``kind: detail`` string
    and the accuracy/answer fields stay None. Wall-clock numbers live in
    :class:`TimingRecord`, never here.
    """

    question_id: str
    question_type: str
    size_group: Optional[str]
    crop_rect: Optional[tuple[int, int, int, int]]
    crop_score: Optional[float]
    answer: Optional[str]
    answer_score: Optional[float]
    accuracy: Optional[float]
    error: Optional[str] = None

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "question_id": self.question_id,
                "question_type": self.question_type,
                "size_group": self.size_group,
                "crop_rect": list(self.crop_rect) if self.crop_rect else None,
                "crop_score": self.crop_score,
                "answer": self.answer,
                "answer_score": self.answer_score,
                "accuracy": self.accuracy,
                "error": self.error,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "QuestionResult":
        data = json.loads(line)
        rect = data.get("crop_rect")
        return cls(
            question_id=data["question_id"],
            question_type=data["question_type"],
            size_group=data.get("size_group"),
            crop_rect=tuple(rect) if rect else None,
            crop_score=data.get("crop_score"),
            answer=data.get("answer"),
            answer_score=data.get("answer_score"),
            accuracy=data.get("accuracy"),
            error=data.get("error"),
        )


@dataclass(frozen=True)
class TimingRecord:
    question_id: str
    crop_s: float
    answer_s: float

    def to_json_line(self) -> str:
        return json.dumps(
            {"question_id": self.question_id, "crop_s": self.crop_s, "answer_s": self.answer_s},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "TimingRecord":
        data = json.loads(line)
        return cls(
            question_id=data["question_id"],
            crop_s=data["crop_s"],
            answer_s=data["answer_s"],
        )


@dataclass
class RunReport:
    config: dict
    records: list[QuestionResult]
    timings: list[TimingRecord]
    aggregates: dict

    @property
    def n_errored(self) -> int:
        return self.aggregates["errors"]["n_errored"]


def aggregate_run(
    records: Sequence[QuestionResult], timings: Sequence[TimingRecord]
) -> dict:
    """Recompute every aggregate table from the per-question stream."""
    records = sorted(records, key=lambda r: r.question_id)
    evaluated = [r for r in records if r.error is None]
    errored = [r for r in records if r.error is not None]

    by_type: dict[str, list[float]] = {}
    by_group: dict[str, list[float]] = {}
    for r in evaluated:
        by_type.setdefault(r.question_type, []).append(r.accuracy)
        if r.size_group is not None:
            by_group.setdefault(r.size_group, []).append(r.accuracy)

    error_kinds: dict[str, int] = {}
    for r in errored:
        kind = (r.error or "").split(":", 1)[0]
        error_kinds[kind] = error_kinds.get(kind, 0) + 1

    timing_by_id = {t.question_id: t for t in timings}
    crop_times = [timing_by_id[r.question_id].crop_s for r in evaluated if r.question_id in timing_by_id]
    answer_times = [
        timing_by_id[r.question_id].answer_s for r in evaluated if r.question_id in timing_by_id
    ]

    return {
        "overall": {
            "n_evaluated": len(evaluated),
            "mean_accuracy": mean_accuracy(r.accuracy for r in evaluated),
        },
        "by_size_group": {
            group: {"n": len(vals), "mean_accuracy": mean_accuracy(vals)}
            for group, vals in sorted(by_group.items())
        },
        "by_question_type": {
            qtype: {"n": len(vals), "mean_accuracy": mean_accuracy(vals)}
            for qtype, vals in sorted(by_type.items())
        },
        "timing": {
            "mean_crop_s": mean_accuracy(crop_times) if crop_times else None,
            "mean_answer_s": mean_accuracy(answer_times) if answer_times else None,
            "n_timed": len(crop_times),
        },
        "errors": {"n_errored": len(errored), "by_kind": error_kinds},
    }


def read_question_results(path: str | Path) -> list[QuestionResult]:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(QuestionResult.from_json_line(line))
    return out


def read_timings(path: str | Path) -> list[TimingRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(TimingRecord.from_json_line(line))
    return out


def reaggregate(records_path: str | Path, timings_path: Optional[str | Path] = None) -> dict:
    """Round trip: rebuild the aggregate tables from emitted per-question files."""
    records = read_question_results(records_path)
    if not records:
        raise ReportError(f"{records_path} holds no records; nothing to aggregate")
    timings: list[TimingRecord] = []
    if timings_path is not None and Path(timings_path).exists():
        timings = read_timings(timings_path)
    return aggregate_run(records, timings)


def markdown_table(headers: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join(" --- " for _ in headers) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(str(cell) for cell in row) + " |")
    return "\n".join(lines) + "\n"


def _csv_string(headers: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _fmt(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def render_run_tables(report: RunReport) -> dict[str, str]:
    """Aggregate tables for one run, as named CSV strings."""
    agg = report.aggregates
    method = report.config.get("strategy", {}).get("kind", "?")
    dataset = report.config.get("dataset", {}).get("path", "?")

    accuracy_csv = _csv_string(
        ["method", "dataset", "n", "mean_accuracy"],
        [[method, dataset, agg["overall"]["n_evaluated"], agg["overall"]["mean_accuracy"]]],
    )
    group_rows = [
        [method, group, agg["by_size_group"][group]["n"], agg["by_size_group"][group]["mean_accuracy"]]
        for group in SIZE_GROUP_ORDER
        if group in agg["by_size_group"]
    ]
    size_csv = _csv_string(["method", "size_group", "n", "mean_accuracy"], group_rows)
    type_rows = [
        [method, qtype, entry["n"], entry["mean_accuracy"]]
        for qtype, entry in agg["by_question_type"].items()
    ]
    type_csv = _csv_string(["method", "question_type", "n", "mean_accuracy"], type_rows)
    timing_csv = _csv_string(
        ["method", "mean_crop_s", "mean_answer_s", "n_timed"],
        [[method, agg["timing"]["mean_crop_s"], agg["timing"]["mean_answer_s"], agg["timing"]["n_timed"]]],
    )
    return {
        "accuracy": accuracy_csv,
        "accuracy_by_size_group": size_csv,
        "accuracy_by_question_type": type_csv,
        "timing": timing_csv,
    }


def render_run_markdown(report: RunReport) -> str:
    agg = report.aggregates
    method = report.config.get("strategy", {}).get("kind", "?")
    dataset = report.config.get("dataset", {}).get("path", "?")
    parts = [
        "# Run report",
        "",
        f"- method: `{method}`",
        f"- dataset: `{dataset}`",
        f"- metric: `{report.config.get('metric_variant', 'simple')}`",
        f"- evaluated: {agg['overall']['n_evaluated']}, errored: {agg['errors']['n_errored']}",
        "",
        "## Accuracy",
        "",
        markdown_table(
            ["Method", dataset],
            [[method, _fmt(agg["overall"]["mean_accuracy"])]],
        ),
        "## Accuracy by answer-box size",
        "",
        markdown_table(
            ["Method"] + [g for g in SIZE_GROUP_ORDER if g in agg["by_size_group"]],
            [
                [method]
                + [
                    _fmt(agg["by_size_group"][g]["mean_accuracy"])
                    for g in SIZE_GROUP_ORDER
                    if g in agg["by_size_group"]
                ]
            ],
        ),
        "## Accuracy by question type",
        "",
        markdown_table(
            ["Method"] + list(agg["by_question_type"].keys()),
            [[method] + [_fmt(v["mean_accuracy"]) for v in agg["by_question_type"].values()]],
        ),
        "## Crop-stage latency (seconds)",
        "",
        markdown_table(["Method", "mean crop s"], [[method, _fmt(agg["timing"]["mean_crop_s"])]]),
        "",
        "## Resolved configuration",
        "",
        "```json",
        json.dumps(report.config, indent=2, sort_keys=True),
        "```",
    ]
    return "\n".join(parts) + "\n"


def write_run_outputs(out_dir: str | Path, report: RunReport) -> dict[str, str]:
    """Write report.json, report.md, and the aggregate CSVs; returns paths."""
    if not report.records:
        raise ReportError("empty report: no per-question records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}

    report_json = {
        "config": report.config,
        "aggregates": report.aggregates,
        "n_records": len(report.records),
    }
    path = out_dir / REPORT_FILENAME
    path.write_text(json.dumps(report_json, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written["report_json"] = str(path)

    path = out_dir / "report.md"
    path.write_text(render_run_markdown(report), encoding="utf-8")
    written["report_md"] = str(path)

    for name, content in render_run_tables(report).items():
        path = out_dir / f"{name}.csv"
        path.write_text(content, encoding="utf-8")
        written[name] = str(path)
    return written


def load_run_dir(run_dir: str | Path) -> RunReport:
    """Rehydrate a report from a finished run directory.

    A path to the ``records.jsonl`` file itself also works; siblings are
    discovered next to it.
    """
    run_dir = Path(run_dir)
    if run_dir.is_file():
        run_dir = run_dir.parent
    records_path = run_dir / RECORDS_FILENAME
    if not records_path.exists():
        raise ReportError(f"{run_dir} has no {RECORDS_FILENAME}")
    records = read_question_results(records_path)
    timings_path = run_dir / TIMINGS_FILENAME
    timings = read_timings(timings_path) if timings_path.exists() else []
    config = {}
    config_path = run_dir / CONFIG_FILENAME
    if config_path.exists():
        config = json.loads(config_path.read_text(encoding="utf-8"))
    return RunReport(
        config=config,
        records=records,
        timings=timings,
        aggregates=aggregate_run(records, timings),
    )


def combine_method_runs(
    run_dirs: Sequence[str | Path], baseline_dir: Optional[str | Path] = None
) -> dict:
    """Cross-method tables: one row per run, plus per-type gains vs a baseline."""
    if not run_dirs:
        raise ReportError("no run directories given")
    reports = [load_run_dir(d) for d in run_dirs]
    rows = []
    for report in reports:
        agg = report.aggregates
        rows.append(
            {
                "method": report.config.get("strategy", {}).get("kind", "?"),
                "dataset": report.config.get("dataset", {}).get("path", "?"),
                "n": agg["overall"]["n_evaluated"],
                "mean_accuracy": agg["overall"]["mean_accuracy"],
                "mean_crop_s": agg["timing"]["mean_crop_s"],
                "by_size_group": agg["by_size_group"],
            }
        )
    combined: dict = {"methods": rows}

    if baseline_dir is not None:
        baseline = load_run_dir(baseline_dir)
        base_acc = {
            r.question_id: r.accuracy for r in baseline.records if r.error is None
        }
        gains = []
        for report in reports:
            method = report.config.get("strategy", {}).get("kind", "?")
            per_type: dict[str, tuple[list[float], list[float]]] = {}
            for r in report.records:
                if r.error is not None or r.question_id not in base_acc:
                    continue
                base_list, treat_list = per_type.setdefault(r.question_type, ([], []))
                base_list.append(base_acc[r.question_id])
                treat_list.append(r.accuracy)
            gains.append(
                {
                    "method": method,
                    "gain_by_type": {
                        qtype: mean_accuracy(treat) - mean_accuracy(base)
                        for qtype, (base, treat) in sorted(per_type.items())
                    },
                }
            )
        combined["gains_vs_baseline"] = gains
    return combined


def render_combined_markdown(combined: dict) -> str:
    rows = combined["methods"]
    parts = [
        "# Method comparison",
        "",
        markdown_table(
            ["Method", "Dataset", "n", "Mean accuracy", "Mean crop s"],
            [
                [r["method"], r["dataset"], r["n"], _fmt(r["mean_accuracy"]), _fmt(r["mean_crop_s"])]
                for r in rows
            ],
        ),
    ]
    groups = [g for g in SIZE_GROUP_ORDER if any(g in r["by_size_group"] for r in rows)]
    if groups:
        parts += [
            "## Accuracy by answer-box size",
            "",
            markdown_table(
                ["Method"] + groups,
                [
                    [r["method"]]
                    + [
                        _fmt(r["by_size_group"].get(g, {}).get("mean_accuracy"))
                        for g in groups
                    ]
                    for r in rows
                ],
            ),
        ]
    if "gains_vs_baseline" in combined:
        types = sorted(
            {t for entry in combined["gains_vs_baseline"] for t in entry["gain_by_type"]}
        )
        parts += [
            "## Accuracy gain vs baseline, by question type",
            "",
            markdown_table(
                ["Method"] + types,
                [
                    [entry["method"]]
                    + [_fmt(entry["gain_by_type"].get(t)) for t in types]
                    for entry in combined["gains_vs_baseline"]
                ],
            ),
        ]
    return "\n".join(parts) + "\n"


def render_combined_csvs(combined: dict) -> dict[str, str]:
    out = {
        "methods": _csv_string(
            ["method", "dataset", "n", "mean_accuracy", "mean_crop_s"],
            [
                [r["method"], r["dataset"], r["n"], r["mean_accuracy"], r["mean_crop_s"]]
                for r in combined["methods"]
            ],
        )
    }
    if "gains_vs_baseline" in combined:
        types = sorted(
            {t for entry in combined["gains_vs_baseline"] for t in entry["gain_by_type"]}
        )
        out["gains_by_question_type"] = _csv_string(
            ["method"] + types,
            [
                [entry["method"]] + [entry["gain_by_type"].get(t, "") for t in types]
                for entry in combined["gains_vs_baseline"]
            ],
        )
    return out

import csv
import logging
import os
from pathlib import Path

from visrec.core.codec.binary import canonical_json
from visrec.core.codec.jsonl import iter_jsonl
from visrec.core.plot.recall_plot import plot_recall_curves
from visrec.domain.evaluation.constant import ACCURACY_CSV, RATINGS_CSV, RECALL_CSV, RECALL_SVG, REPORT_JSON
from visrec.domain.evaluation.entity import EvalReport, GroundTruthQuery, RatingSummary
from visrec.domain.evaluation.exception import InvalidGroundTruthError, ReportWriteError

logger = logging.getLogger(__name__)


def read_ground_truth(path: str | Path) -> list[GroundTruthQuery]:
    queries = []
    for line_no, row in iter_jsonl(path):
        try:
            queries.append(GroundTruthQuery.from_row(row))
        except InvalidGroundTruthError as e:
            raise InvalidGroundTruthError(f"{path}:{line_no}: {e.detail}")
    return queries


def read_ratings(path: str | Path) -> RatingSummary:
    return RatingSummary.from_labels([str(row.get("rating")) for _, row in iter_jsonl(path)])


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.4f}"


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Writes the JSON, CSV and SVG renderings of one report; same report, same bytes."""
    try:
        return _write_report(report, Path(out_dir))
    except OSError as e:
        raise ReportWriteError(str(out_dir), e.strerror or str(e))


def _write_report(report: EvalReport, out: Path) -> list[Path]:
    os.makedirs(out, exist_ok=True)
    written = []

    report_path = out / REPORT_JSON
    report_path.write_bytes(canonical_json(report.to_dict()) + b"\n")
    written.append(report_path)

    accuracy_rows = [
        [
            method,
            _fmt(result.in_class),
            _fmt(result.out_of_class),
            _fmt(result.total),
            str(result.in_class_count),
            str(result.out_of_class_count),
        ]
        for method, result in sorted(report.accuracy.items())
    ]
    _write_csv(
        out / ACCURACY_CSV,
        ["method", "in_class", "out_of_class", "total", "in_class_count", "out_of_class_count"],
        accuracy_rows,
    )
    written.append(out / ACCURACY_CSV)

    curves = sorted(report.recall, key=lambda c: (c.method, c.category))
    recall_rows = [
        [curve.method, curve.category, str(k), _fmt(value), str(curve.queries)]
        for curve in curves
        for k, value in zip(curve.ks, curve.recall)
    ]
    _write_csv(out / RECALL_CSV, ["method", "category", "k", "recall", "queries"], recall_rows)
    written.append(out / RECALL_CSV)

    if report.ratings is not None:
        total = report.ratings.total
        rating_rows = [
            [label, str(count), _fmt(100.0 * count / total if total else None)]
            for label, count in report.ratings.counts.items()
        ]
        _write_csv(out / RATINGS_CSV, ["rating", "count", "percent"], rating_rows)
        written.append(out / RATINGS_CSV)

    plot_recall_curves(out / RECALL_SVG, [(curve.label(), curve.ks, curve.recall) for curve in curves])
    written.append(out / RECALL_SVG)

    logger.info(f"Wrote report to {out}: {len(report.accuracy)} accuracy row(s), {len(curves)} recall curve(s)")
    return written

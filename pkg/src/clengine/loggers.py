"""Metric sinks: CSV, JSON-lines and human-readable text.

File loggers can reopen an existing file at a recorded byte offset, which
is how a resumed run continues its metric files without duplicating or
losing rows.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import TextIO

from .metrics import MetricValue

CSV_FIELDS = ("name", "phase", "stream", "task", "experience", "granularity", "x_axis", "value")


def format_float(v: float) -> str:
    return format(float(v), ".17g")


class Logger:
    """No-op base; subclasses override what they need."""

    name = "logger"

    def log_metric(self, value: MetricValue) -> None:
        pass

    def on_training_exp_end(self, summary: dict) -> None:
        pass

    def on_eval_end(self, summary: dict) -> None:
        pass

    def tell(self) -> int | None:
        return None

    def close(self) -> None:
        pass


class _FileLogger(Logger):
    def __init__(self, path, offset: int | None = None):
        self.path = Path(path)
        try:
            if offset is None:
                self._f = open(self.path, "w", encoding="utf-8", newline="")
                self._start()
            else:
                size = self.path.stat().st_size
                if size < offset:
                    raise OSError(f"{self.path} is shorter ({size} B) than the resume offset {offset}")
                self._f = open(self.path, "r+", encoding="utf-8", newline="")
                self._f.truncate(offset)
                self._f.seek(offset)
        except OSError as e:
            raise OSError(f"cannot open log file {self.path}: {e}") from e

    def _start(self) -> None:
        pass

    def tell(self) -> int:
        self._f.flush()
        return self._f.tell()

    def on_training_exp_end(self, summary):
        self._f.flush()

    def on_eval_end(self, summary):
        self._f.flush()

    def close(self) -> None:
        if not self._f.closed:
            self._f.flush()
            self._f.close()


class CSVLogger(_FileLogger):
    name = "csv"

    def _start(self):
        self._writer().writerow(CSV_FIELDS)

    def _writer(self):
        return csv.writer(self._f, lineterminator="\r\n")

    def log_metric(self, value: MetricValue) -> None:
        rec = value.as_record()
        rec["experience"] = "" if rec["experience"] is None else rec["experience"]
        rec["value"] = format_float(rec["value"])
        self._writer().writerow([rec[k] for k in CSV_FIELDS])


class JSONLLogger(_FileLogger):
    name = "jsonl"

    def log_metric(self, value: MetricValue) -> None:
        self._f.write(json.dumps(value.as_record()) + "\n")


class TextLogger(Logger):
    """One readable line per experience- or stream-level emission."""

    name = "text"

    def __init__(self, sink: TextIO | str | Path, offset: int | None = None):
        self._owned = not hasattr(sink, "write")
        if self._owned:
            self._file_logger = _FileLogger(sink, offset)
            self._f = self._file_logger._f
        else:
            self._f = sink

    def log_metric(self, value: MetricValue) -> None:
        if value.granularity in ("experience", "stream"):
            self._f.write(f"{value.name} = {value.value:.4f}\n")

    def on_training_exp_end(self, summary: dict) -> None:
        self._f.write(f"-- end of training on experience {summary.get('experience')} --\n")
        self._f.flush()

    def on_eval_end(self, summary: dict) -> None:
        self._f.write(f"-- end of evaluation on {summary.get('stream')} stream --\n")
        self._f.flush()

    def tell(self) -> int | None:
        if not self._owned:
            return None
        self._f.flush()
        return self._f.tell()

    def close(self) -> None:
        if self._owned:
            self._file_logger.close()
        else:
            self._f.flush()


def csv_logger(path, offset=None) -> CSVLogger:
    return CSVLogger(path, offset)


def jsonl_logger(path, offset=None) -> JSONLLogger:
    return JSONLLogger(path, offset)


def text_logger(sink, offset=None) -> TextLogger:
    return TextLogger(sink, offset)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["task"] = int(r["task"])
        r["experience"] = None if r["experience"] == "" else int(r["experience"])
        r["x_axis"] = int(r["x_axis"])
        r["value"] = float(r["value"])
    return rows


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def csv_text(values) -> str:
    """Render metric values exactly as :class:`CSVLogger` would write them."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(CSV_FIELDS)
    for v in values:
        rec = v.as_record()
        rec["experience"] = "" if rec["experience"] is None else rec["experience"]
        rec["value"] = format_float(rec["value"])
        w.writerow([rec[k] for k in CSV_FIELDS])
    return buf.getvalue()

"""Line-oriented JSON run reports.

A report is a sequence of JSON objects, one per line, each tagged by its
``record`` field:

``header``      schema name and version (always first)
``config``      the solver configuration and input description
``component``   one per computed component, in order of convergence
``warning``     solver events (fallback expansions, duplicates, caps, ...)
``validation``  optional dense-oracle comparison
``summary``     totals and timing (always last)

Non-finite floats are written as ``Infinity``/``NaN`` (Python json dialect).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

SCHEMA = "cpfjdgsvd.report"
VERSION = 1
TIMING_FIELDS = ("wall_time",)


@dataclass
class RunReport:
    config: dict
    components: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    validation: dict | None = None

    @property
    def converged(self):
        return bool(self.summary.get("converged", False))

    def to_lines(self):
        out = [{"record": "header", "schema": SCHEMA, "version": VERSION}]
        out.append({"record": "config", **self.config})
        out += [{"record": "component", **c} for c in self.components]
        out += [{"record": "warning", **w} for w in self.warnings]
        if self.validation is not None:
            out.append({"record": "validation", **self.validation})
        out.append({"record": "summary", **self.summary})
        return [json.dumps(rec) for rec in out]

    def dumps(self):
        return "\n".join(self.to_lines()) + "\n"

    @classmethod
    def loads(cls, text):
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not records or records[0].get("record") != "header":
            raise ValueError("report does not start with a header record")
        head = records[0]
        if head.get("schema") != SCHEMA or head.get("version") != VERSION:
            raise ValueError(f"unsupported report schema {head.get('schema')!r} v{head.get('version')}")
        report = cls(config={})
        for rec in records[1:]:
            kind = rec.pop("record")
            if kind == "config":
                report.config = rec
            elif kind == "component":
                report.components.append(rec)
            elif kind == "warning":
                report.warnings.append(rec)
            elif kind == "validation":
                report.validation = rec
            elif kind == "summary":
                report.summary = rec
            else:
                raise ValueError(f"unknown record type {kind!r}")
        return report

    def without_timing(self):
        summary = {k: v for k, v in self.summary.items() if k not in TIMING_FIELDS}
        return RunReport(self.config, self.components, self.warnings, summary, self.validation)


def emit_report(report: RunReport, path):
    """Write ``report`` to ``path``; I/O failures are re-raised naming the path."""
    try:
        with open(path, "w") as fh:
            fh.write(report.dumps())
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror or exc}") from exc


def load_report(path) -> RunReport:
    with open(path) as fh:
        return RunReport.loads(fh.read())

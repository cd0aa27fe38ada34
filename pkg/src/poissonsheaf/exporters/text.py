from __future__ import annotations

from pathlib import Path

from poissonsheaf.definitions import Finding
from poissonsheaf.definitions import ReportDocument
from poissonsheaf.definitions import Status


class TextReportExporter:
    """Line-oriented report: one `CHECK` line per finding and a closing `SUMMARY`."""

    def line(self, finding: Finding) -> str:
        parts = ("CHECK", finding.check, finding.status, finding.subject, finding.detail)
        return " ".join(part for part in parts if part)

    def summary(self, document: ReportDocument) -> str:
        counts = document.counts()
        return (
            f"SUMMARY {document.command} {document.status} "
            f"pass={counts[Status.PASS]} fail={counts[Status.FAIL]} warn={counts[Status.WARN]}"
        )

    def render(self, document: ReportDocument) -> str:
        lines = [self.line(finding) for finding in document.findings]
        lines.append(self.summary(document))
        return "\n".join(lines) + "\n"

    def export(self, document: ReportDocument, output_path: Path) -> None:
        output_path.write_text(self.render(document), encoding="utf-8")

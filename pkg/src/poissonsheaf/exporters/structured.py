from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from poissonsheaf.definitions import ReportDocument


class JSONReportExporter:
    """Machine-readable report; keys sorted so identical runs give identical bytes."""

    def __init__(self, indent: int = 2) -> None:
        self.indent = indent

    def _payload(self, document: ReportDocument) -> dict[str, Any]:
        return {
            "command": document.command,
            "status": str(document.status),
            "counts": {str(status): count for status, count in document.counts().items()},
            "findings": [
                {
                    "check": finding.check,
                    "subject": finding.subject,
                    "status": str(finding.status),
                    "detail": finding.detail,
                }
                for finding in document.findings
            ],
        }

    def render(self, document: ReportDocument) -> str:
        return json.dumps(self._payload(document), indent=self.indent, sort_keys=True) + "\n"

    def export(self, document: ReportDocument, output_path: Path) -> None:
        output_path.write_text(self.render(document), encoding="utf-8")

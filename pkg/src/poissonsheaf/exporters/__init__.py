from __future__ import annotations

from poissonsheaf.definitions import ReportExporter
from poissonsheaf.exporters.structured import JSONReportExporter
from poissonsheaf.exporters.text import TextReportExporter


def exporter_for(format_name: str) -> ReportExporter:
    """Report exporter registered under `format_name` (`text` or `json`)."""
    match format_name:
        case "json":
            return JSONReportExporter()
        case "text":
            return TextReportExporter()
    raise ValueError(f"unsupported report format {format_name!r}")

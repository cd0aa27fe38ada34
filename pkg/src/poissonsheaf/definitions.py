from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from dataclasses import field
from enum import StrEnum
from pathlib import Path
from typing import Protocol

from poissonsheaf.constants import BOUNDARY_MARGIN
from poissonsheaf.constants import DEFAULT_SAMPLE_COUNT
from poissonsheaf.constants import DEFAULT_SEED
from poissonsheaf.constants import DEFAULT_TOLERANCE


class PoissonSheafError(Exception):
    """Base class for every error raised by poissonsheaf."""


class Verdict(StrEnum):
    """Outcome of comparing two smooth functions."""

    PROVEN_EQUAL = "proven-equal"
    PROVEN_UNEQUAL = "proven-unequal"
    SAMPLED_EQUAL = "sampled-equal"
    SAMPLED_UNEQUAL = "sampled-unequal"

    @property
    def holds(self) -> bool:
        """Whether the verdict counts as equality."""
        return self in (Verdict.PROVEN_EQUAL, Verdict.SAMPLED_EQUAL)


class JacobiVerdict(StrEnum):
    """Outcome of the Jacobi battery."""

    PROVEN_ZERO = "proven-zero"
    SAMPLED_ZERO = "sampled-zero"
    FAILED = "failed"


class Status(StrEnum):
    """Status of a single report finding."""

    PASS = "PASS"
    FAIL = "FAIL"
    WARN = "WARN"


@dataclass(slots=True, frozen=True)
class VerificationSettings:
    """Sampling and tolerance configuration shared by all checks."""

    seed: int = DEFAULT_SEED
    tolerance: float = DEFAULT_TOLERANCE
    sample_count: int = DEFAULT_SAMPLE_COUNT
    margin: float = BOUNDARY_MARGIN


DEFAULT_SETTINGS = VerificationSettings()


@dataclass(slots=True, frozen=True)
class Finding:
    """One line of a verification report."""

    check: str
    subject: str
    status: Status
    detail: str = ""

    @classmethod
    def verdict(cls, check: str, subject: str, ok: bool, detail: str = "") -> Finding:
        """Create a PASS/FAIL finding from a boolean outcome."""
        return cls(check, subject, Status.PASS if ok else Status.FAIL, detail)

    @property
    def failed(self) -> bool:
        return self.status is Status.FAIL


@dataclass(slots=True, frozen=True)
class ReportDocument:
    """Ordered findings produced by one CLI command."""

    command: str
    findings: tuple[Finding, ...] = field(default_factory=tuple)

    @property
    def status(self) -> Status:
        """Overall status: FAIL iff any finding failed."""
        if any(finding.failed for finding in self.findings):
            return Status.FAIL
        return Status.PASS

    def counts(self) -> dict[Status, int]:
        """Number of findings per status, in PASS/FAIL/WARN order."""
        tally = Counter(finding.status for finding in self.findings)
        return {status: tally.get(status, 0) for status in Status}


class ReportExporter(Protocol):
    """Protocol for report renderers."""

    def render(self, document: ReportDocument) -> str:
        """Render a report to its textual form."""
        ...

    def export(self, document: ReportDocument, output_path: Path) -> None:
        """Write the rendered report to `output_path`."""
        ...

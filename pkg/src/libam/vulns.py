"""Associate detected reuse with known vulnerabilities.

CVEs whose patch touches named functions are matched against the function
names inside reported reuse areas (high confidence); patchless CVEs can
only be associated at the TPL level (low confidence). An optional version
identification step, ranking versions by string overlap, further narrows
the candidate set.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .areas import DetectionReport

CONFIDENCE_HIGH = "high"
CONFIDENCE_LOW = "low"

CVE_COLUMNS = ("cve_id", "tpl_id", "versions", "fn_names", "cwe")

_DECORATION = re.compile(r"(\.isra\.\d+|\.part\.\d+|\.constprop\.\d+)+$")


class CveMapError(ValueError):
    pass


@dataclass(frozen=True)
class CveEntry:
    cve_id: str
    tpl_id: str
    affected_versions: Optional[frozenset[str]]  # None = all versions
    vulnerable_fn_names: frozenset[str]  # empty = patchless
    cwe: Optional[str] = None

    @property
    def patchless(self) -> bool:
        return not self.vulnerable_fn_names


@dataclass(frozen=True)
class VersionRanking:
    ranked: tuple[tuple[str, float], ...]
    unknown: bool

    def best(self) -> Optional[str]:
        return self.ranked[0][0] if self.ranked else None


@dataclass(frozen=True)
class Association:
    target: str
    tpl: str
    cve: str
    confidence: str
    matched_fn: Optional[str] = None
    version: Optional[str] = None
    cwe: Optional[str] = None

    def to_dict(self) -> dict:
        row = {"target": self.target, "tpl": self.tpl, "cve": self.cve, "confidence": self.confidence}
        if self.matched_fn is not None:
            row["matched_fn"] = self.matched_fn
        if self.version is not None:
            row["version"] = self.version
        if self.cwe is not None:
            row["cwe"] = self.cwe
        return row


def normalize_name(name: str) -> str:
    """Strip mechanical compiler decorations only; never fuzzy-match."""
    return _DECORATION.sub("", name.lstrip("_"))


def load_cve_map(source) -> list[CveEntry]:
    """Parse the CVE table (CSV: cve_id, tpl_id, versions, fn_names, cwe).

    ``versions`` and ``fn_names`` are semicolon lists; ``*`` means all
    versions and an empty fn_names column marks a patchless entry.
    """
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise CveMapError("empty CVE map")
    header = [h.strip() for h in rows[0]]
    if tuple(header) != CVE_COLUMNS:
        raise CveMapError(f"line 1: header must be {','.join(CVE_COLUMNS)}")
    entries: list[CveEntry] = []
    seen: set[tuple[str, str]] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CVE_COLUMNS):
            raise CveMapError(f"line {lineno}: expected {len(CVE_COLUMNS)} columns, got {len(row)}")
        cve_id, tpl_id, versions, fn_names, cwe = (cell.strip() for cell in row)
        if not cve_id or not tpl_id:
            raise CveMapError(f"line {lineno}: cve_id and tpl_id are required")
        key = (cve_id, tpl_id)
        if key in seen:
            raise CveMapError(f"line {lineno}: duplicate entry {key}")
        seen.add(key)
        affected = None
        if versions and versions != "*":
            affected = frozenset(v.strip() for v in versions.split(";") if v.strip())
        names = frozenset(normalize_name(n.strip()) for n in fn_names.split(";") if n.strip())
        entries.append(
            CveEntry(
                cve_id=cve_id,
                tpl_id=tpl_id,
                affected_versions=affected,
                vulnerable_fn_names=names,
                cwe=cwe or None,
            )
        )
    return entries


def identify_version(
    target_strings: Iterable[str],
    version_strings: Mapping[str, Iterable[str]],
) -> VersionRanking:
    """Rank candidate versions by the fraction of their strings found in
    the target; ties are all reported, ordered by version id."""
    target = set(target_strings)
    scored = []
    for version in sorted(version_strings):
        strings = set(version_strings[version])
        if not strings:
            continue
        overlap = len(target & strings) / len(strings)
        if overlap > 0.0:
            scored.append((version, overlap))
    scored.sort(key=lambda vs: (-vs[1], vs[0]))
    return VersionRanking(ranked=tuple(scored), unknown=not scored)


def reused_names_by_tpl(report: DetectionReport) -> dict[str, set[str]]:
    names: dict[str, set[str]] = {}
    for area in report.reuse_areas:
        bucket = names.setdefault(area.tpl, set())
        bucket.update(normalize_name(n) for _, n in area.name_map)
    return names


def associate(
    report: DetectionReport,
    cves: Sequence[CveEntry],
    versions: Optional[Mapping[str, VersionRanking]] = None,
) -> list[Association]:
    """Potential-vulnerability rows for one detection report.

    Patch-aware entries associate only when a vulnerable function name
    appears in the reuse area, filtering the false positives partial
    reuse would otherwise cause; patchless entries stay TPL-level.
    """
    detected = {r.tpl for r in report.reused_tpls}
    names = reused_names_by_tpl(report)
    out: list[Association] = []
    for entry in sorted(cves, key=lambda e: (e.tpl_id, e.cve_id)):
        if entry.tpl_id not in detected:
            continue
        version = None
        if versions is not None and entry.tpl_id in versions:
            ranking = versions[entry.tpl_id]
            version = ranking.best()
            if entry.affected_versions is not None and version is not None:
                if version not in entry.affected_versions:
                    continue
        if entry.patchless:
            out.append(
                Association(
                    target=report.target,
                    tpl=entry.tpl_id,
                    cve=entry.cve_id,
                    confidence=CONFIDENCE_LOW,
                    version=version,
                    cwe=entry.cwe,
                )
            )
            continue
        matched = sorted(entry.vulnerable_fn_names & names.get(entry.tpl_id, set()))
        if matched:
            out.append(
                Association(
                    target=report.target,
                    tpl=entry.tpl_id,
                    cve=entry.cve_id,
                    confidence=CONFIDENCE_HIGH,
                    matched_fn=matched[0],
                    version=version,
                    cwe=entry.cwe,
                )
            )
    return out

"""Core-set label selection.

Four a-priori criteria decide whether a label is robust enough for model
training: (i) its annotation frequency exceeds the corpus-level
small-effect threshold, (ii) presence agreement beats the chance-level UAR
threshold, (iii) intensity agreement exceeds the small-effect correlation
bound, and (iv) it holds a consistent correlation with at least one
appraisal dimension. The cross-corpus core set is the intersection of the
per-corpus candidate sets.

Criteria can be evaluated from a raw corpus (via
:mod:`affectlab.agreement`) or from a pre-tabulated statistics CSV; the
package bundles the young-adults reference statistics and the
older-adults core set as data files.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .agreement import LabelStats
from .corpus import LABELS, parse_label
from .errors import MissingLabelStats

DEFAULT_FREQ_THR = 526.0
DEFAULT_UAR_THR = 0.53
DEFAULT_PCC_THR = 0.024


@dataclass(frozen=True)
class CoreSetThresholds:
    freq_thr: float = DEFAULT_FREQ_THR
    uar_thr: float = DEFAULT_UAR_THR
    pcc_thr: float = DEFAULT_PCC_THR
    min_dim_links: int = 1


@dataclass(frozen=True)
class CriteriaReport:
    label: str
    freq_ok: bool
    presence_ok: bool
    intensity_ok: bool
    dimcorr_ok: bool
    frequency: float
    presence_uar: float
    intensity_pcc: float
    n_dim_links: int

    @property
    def selected(self) -> bool:
        return (self.freq_ok and self.presence_ok and self.intensity_ok
                and self.dimcorr_ok)


@dataclass(frozen=True)
class LabelCriteriaInput:
    """Minimal per-label inputs the four criteria need."""

    label: str
    frequency: float
    presence_uar: float
    intensity_pcc: float
    n_dim_links: int

    @staticmethod
    def from_stats(stats: LabelStats) -> "LabelCriteriaInput":
        return LabelCriteriaInput(label=stats.label, frequency=stats.freq_ge1,
                                  presence_uar=stats.presence_uar,
                                  intensity_pcc=stats.intensity_pcc,
                                  n_dim_links=stats.n_dim_links)


def _as_inputs(stats) -> dict:
    rows = {}
    for entry in stats:
        if isinstance(entry, LabelStats):
            entry = LabelCriteriaInput.from_stats(entry)
        rows[entry.label] = entry
    missing = set(LABELS) - set(rows)
    if missing:
        raise MissingLabelStats(f"missing stats for {sorted(missing)}")
    return rows


def evaluate_criteria(stats, thresholds: CoreSetThresholds | None = None):
    """Apply the four selection criteria to all 23 labels.

    NaN statistics never satisfy a criterion.
    """
    thr = thresholds or CoreSetThresholds()
    rows = _as_inputs(stats)
    reports = []
    for label in LABELS:
        row = rows[label]
        reports.append(CriteriaReport(
            label=label,
            freq_ok=bool(row.frequency > thr.freq_thr),
            presence_ok=bool(row.presence_uar > thr.uar_thr),
            intensity_ok=bool(row.intensity_pcc > thr.pcc_thr),
            dimcorr_ok=bool(row.n_dim_links >= thr.min_dim_links),
            frequency=float(row.frequency),
            presence_uar=float(row.presence_uar),
            intensity_pcc=float(row.intensity_pcc),
            n_dim_links=int(row.n_dim_links),
        ))
    return reports


def candidate_set(reports) -> tuple:
    """Labels passing all four criteria, in canonical label order."""
    selected = {r.label for r in reports if r.selected}
    return tuple(lab for lab in LABELS if lab in selected)


def intersect_core_sets(a, b) -> tuple:
    """Set intersection in canonical label order; warns when empty."""
    common = {parse_label(x) for x in a} & {parse_label(x) for x in b}
    if not common:
        warnings.warn("core-set intersection is empty")
    return tuple(lab for lab in LABELS if lab in common)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def load_label_stats_csv(path) -> list:
    """Read a pre-tabulated label statistics CSV.

    Expected columns: label, frequency, presence_uar, intensity_pcc,
    n_dim_links (a trailing dim_links column is tolerated and ignored).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"label", "frequency", "presence_uar", "intensity_pcc",
                  "n_dim_links"}
        if not needed <= set(reader.fieldnames or ()):
            raise MissingLabelStats(
                f"{path}: expected columns {sorted(needed)}, "
                f"found {reader.fieldnames}")
        for rec in reader:
            rows.append(LabelCriteriaInput(
                label=parse_label(rec["label"]),
                frequency=float(rec["frequency"]),
                presence_uar=float(rec["presence_uar"]),
                intensity_pcc=float(rec["intensity_pcc"]),
                n_dim_links=int(rec["n_dim_links"])))
    return rows


def load_coreset_file(path) -> tuple:
    """Read a core-set file: one label per line, '#' comments allowed."""
    labels = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            labels.append(parse_label(line))
    return tuple(labels)


def export_criteria_csv(reports, final_set, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label", "frequency", "presence_uar", "intensity_pcc",
                    "n_dim_links", "freq_ok", "presence_ok", "intensity_ok",
                    "dimcorr_ok", "selected", "in_final_set"))
        for r in sorted(reports, key=lambda r: -r.frequency):
            w.writerow((r.label, f"{r.frequency:g}", f"{r.presence_uar:.4f}",
                        f"{r.intensity_pcc:.4f}", r.n_dim_links,
                        int(r.freq_ok), int(r.presence_ok),
                        int(r.intensity_ok), int(r.dimcorr_ok),
                        int(r.selected), int(r.label in final_set)))


def _data_path(name: str):
    return resources.files("affectlab").joinpath("data", name)


def young_reference_stats() -> list:
    """Bundled label statistics of the young-adults corpus."""
    with resources.as_file(_data_path("young_label_stats.csv")) as p:
        return load_label_stats_csv(p)


def older_reference_coreset() -> tuple:
    """Bundled core set established on the older-adults corpus."""
    with resources.as_file(_data_path("older_coreset.txt")) as p:
        return load_coreset_file(p)

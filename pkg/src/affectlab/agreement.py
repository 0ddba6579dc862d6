"""Corpus agreement analyses over labels and appraisal dimensions.

Reproduces the descriptive statistics a corpus release reports: label
annotation frequencies, inter-annotator agreement on label presence (UAR)
and intensity (PCC), dimension agreement at sequence/session granularity
for both continuous and summary annotations, and the label-dimension
consistent-correlation map.

Aggregation is pairwise over annotators throughout. Degenerate pairs
(zero variance, single-class reference) are skipped, never zero-filled,
and the number of skips is reported where it matters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import DIMENSIONS, LABELS, Corpus
from .errors import NoValidPairs
from .gold import align_traces
from .metrics import bonferroni, pcc, uar_binary


@dataclass(frozen=True)
class LabelStats:
    label: str
    freq_ge1: int
    freq_ge2: int
    freq_ge3: int
    presence_uar: float
    intensity_pcc: float
    dim_links: frozenset = field(default_factory=frozenset)  # {(dimension, sign)}

    @property
    def n_dim_links(self) -> int:
        return len(self.dim_links)


@dataclass(frozen=True)
class DimAgreement:
    dimension: str
    granularity: str      # "sequence" | "session"
    form: str             # "continuous" | "summary"
    mean_pcc: float
    sd_pcc: float
    n_units: int
    n_skipped: int


@dataclass(frozen=True)
class LabelDimCorrMap:
    """Mean consistent correlation per (label, dimension), or None.

    An entry is kept when at least two annotators had a Bonferroni
    significant correlation of the same sign; a correlation present for a
    single annotator is treated as null.
    """

    entries: dict


def _presence_matrix(c: Corpus, label: str) -> np.ndarray:
    return np.array([[s.annotations.label_intensity[(a, label)] > 0.0
                      for a in c.annotator_ids] for s in c.sequences])


def _intensity_matrix(c: Corpus, label: str) -> np.ndarray:
    return np.array([s.annotations.intensities(label) for s in c.sequences])


def label_frequencies(c: Corpus) -> dict:
    """Per label: number of sequences marked by >= 1, 2, 3 annotators."""
    out = {}
    for label in LABELS:
        present = _presence_matrix(c, label)
        marks = present.sum(axis=1)
        out[label] = (int(np.sum(marks >= 1)), int(np.sum(marks >= 2)),
                      int(np.sum(marks >= 3)))
    return out


def presence_agreement(c: Corpus, label: str) -> float:
    """Mean pairwise UAR of label presence over all ordered annotator pairs.

    A pair is skipped when its reference annotator marked only one class.
    """
    present = _presence_matrix(c, label)
    K = present.shape[1]
    vals = []
    for b in range(K):
        ref = present[:, b]
        if ref.all() or not ref.any():
            continue
        for a in range(K):
            if a == b:
                continue
            vals.append(uar_binary(present[:, a], ref))
    if not vals:
        raise NoValidPairs(f"no scorable annotator pair for label {label!r}")
    return float(np.mean(vals))


def intensity_agreement(c: Corpus, label: str, method: str = "pairwise") -> float:
    """Mean inter-annotator PCC of label intensity across sequences.

    ``method="pairwise"`` averages over unordered annotator pairs;
    ``method="vs_rest"`` correlates each annotator with the mean of the
    others. Degenerate correlations are skipped.
    """
    mat = _intensity_matrix(c, label)
    K = mat.shape[1]
    vals = []
    if method == "pairwise":
        for a in range(K):
            for b in range(a + 1, K):
                r = pcc(mat[:, a], mat[:, b])
                if r.defined:
                    vals.append(r.r)
    elif method == "vs_rest":
        total = mat.sum(axis=1)
        for a in range(K):
            rest = (total - mat[:, a]) / (K - 1)
            r = pcc(mat[:, a], rest)
            if r.defined:
                vals.append(r.r)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not vals:
        raise NoValidPairs(f"no defined intensity pair for label {label!r}")
    return float(np.mean(vals))


def _pair_mean_pcc(vectors) -> tuple:
    """Mean PCC over unordered pairs of equal-length vectors.

    Returns (mean or nan, n_skipped).
    """
    K = len(vectors)
    vals, skipped = [], 0
    for a in range(K):
        for b in range(a + 1, K):
            r = pcc(vectors[a], vectors[b])
            if r.defined:
                vals.append(r.r)
            else:
                skipped += 1
    if not vals:
        return float("nan"), skipped
    return float(np.mean(vals)), skipped


def dimension_agreement(c: Corpus, dimension: str, granularity: str,
                        form: str) -> DimAgreement:
    """Inter-annotator PCC agreement for one appraisal dimension.

    Units over which mean/sd are reported:

    * continuous/sequence -- one unit per sequence (pair-mean PCC over the
      trace samples of that sequence);
    * continuous/session -- one unit per session (traces concatenated over
      the session's sequences before correlating);
    * summary/sequence -- one unit per session: annotator pairs are
      correlated across the sequences of that session (summaries are one
      number per sequence, so a single sequence cannot carry a PCC);
    * summary/session -- pair PCCs across per-session mean summaries; the
      units are the annotator pairs.
    """
    if granularity not in ("sequence", "session"):
        raise ValueError(f"unknown granularity {granularity!r}")
    if form not in ("continuous", "summary"):
        raise ValueError(f"unknown form {form!r}")
    units = []
    skipped = 0

    if form == "continuous":
        groups: dict = {}
        if granularity == "sequence":
            for s in c.sequences:
                groups[s.sequence_id] = [s]
        else:
            for s in c.sequences:
                groups.setdefault(s.session_id, []).append(s)
        for _, seqs in sorted(groups.items()):
            vectors = []
            for a in c.annotator_ids:
                parts = []
                for s in seqs:
                    tr = align_traces([s.annotations.dim_trace[(a, dimension)]],
                                      c.trace_rate_hz)[0]
                    parts.append(tr.values)
                vectors.append(np.concatenate(parts))
            mean, n_skip = _pair_mean_pcc(vectors)
            skipped += n_skip
            if np.isfinite(mean):
                units.append(mean)
    else:
        sessions: dict = {}
        for s in c.sequences:
            sessions.setdefault(s.session_id, []).append(s)
        if granularity == "sequence":
            for _, seqs in sorted(sessions.items()):
                if len(seqs) < 2:
                    skipped += 1
                    continue
                vectors = [np.array([s.annotations.dim_summary[(a, dimension)]
                                     for s in seqs]) for a in c.annotator_ids]
                mean, n_skip = _pair_mean_pcc(vectors)
                skipped += n_skip
                if np.isfinite(mean):
                    units.append(mean)
        else:
            session_ids = sorted(sessions)
            if len(session_ids) < 2:
                raise NoValidPairs("session-level summaries need >= 2 sessions")
            vectors = []
            for a in c.annotator_ids:
                means = [np.mean([s.annotations.dim_summary[(a, dimension)]
                                  for s in sessions[sid]])
                         for sid in session_ids]
                vectors.append(np.array(means))
            K = len(vectors)
            for i in range(K):
                for j in range(i + 1, K):
                    r = pcc(vectors[i], vectors[j])
                    if r.defined:
                        units.append(r.r)
                    else:
                        skipped += 1

    if not units:
        raise NoValidPairs(
            f"no valid agreement unit for {dimension}/{form}/{granularity}")
    arr = np.asarray(units)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return DimAgreement(dimension=dimension, granularity=granularity,
                        form=form, mean_pcc=float(arr.mean()), sd_pcc=sd,
                        n_units=int(arr.size), n_skipped=skipped)


def label_dimension_correlations(c: Corpus, alpha: float = 0.05) -> LabelDimCorrMap:
    """Consistent label-dimension correlation map.

    Per annotator, the intensity of each label is correlated with each
    dimension summary over the sequences where that annotator marked the
    label present; p-values are Bonferroni corrected per annotator across
    all (label, dimension) tests. An entry survives when at least two
    annotators are significant with the same sign; its value is the mean
    correlation over exactly those annotators.
    """
    K = len(c.annotator_ids)
    pairs = [(lab, dim) for lab in LABELS for dim in DIMENSIONS]
    r_by_annotator = np.full((K, len(pairs)), np.nan)
    p_by_annotator = np.full((K, len(pairs)), np.nan)
    for ai, ann in enumerate(c.annotator_ids):
        intens = {lab: np.array([s.annotations.label_intensity[(ann, lab)]
                                 for s in c.sequences]) for lab in LABELS}
        summ = {dim: np.array([s.annotations.dim_summary[(ann, dim)]
                               for s in c.sequences]) for dim in DIMENSIONS}
        for pi, (lab, dim) in enumerate(pairs):
            mask = intens[lab] > 0.0
            if mask.sum() < 3:
                continue
            res = pcc(intens[lab][mask], summ[dim][mask])
            if res.defined:
                r_by_annotator[ai, pi] = res.r
                p_by_annotator[ai, pi] = res.p_two_sided
    entries = {}
    sig = np.zeros_like(p_by_annotator, dtype=bool)
    for ai in range(K):
        sig[ai] = bonferroni(p_by_annotator[ai], alpha)
    for pi, (lab, dim) in enumerate(pairs):
        rs = r_by_annotator[:, pi][sig[:, pi]]
        pos = rs[rs > 0]
        neg = rs[rs < 0]
        chosen = None
        if pos.size >= 2 and pos.size > neg.size:
            chosen = pos
        elif neg.size >= 2 and neg.size > pos.size:
            chosen = neg
        elif pos.size >= 2 and pos.size == neg.size:
            chosen = None  # ambiguous direction, treated as null
        entries[(lab, dim)] = float(chosen.mean()) if chosen is not None else None
    return LabelDimCorrMap(entries=entries)


def label_stats_table(c: Corpus, alpha: float = 0.05,
                      intensity_method: str = "pairwise") -> list:
    """Assemble the per-label statistics table from a raw corpus."""
    freqs = label_frequencies(c)
    corr_map = label_dimension_correlations(c, alpha=alpha)
    stats = []
    for label in LABELS:
        try:
            uar = presence_agreement(c, label)
        except NoValidPairs:
            uar = float("nan")
        try:
            r = intensity_agreement(c, label, method=intensity_method)
        except NoValidPairs:
            r = float("nan")
        links = frozenset(
            (dim, "+" if corr_map.entries[(label, dim)] > 0 else "-")
            for dim in DIMENSIONS
            if corr_map.entries[(label, dim)] is not None)
        ge1, ge2, ge3 = freqs[label]
        stats.append(LabelStats(label=label, freq_ge1=ge1, freq_ge2=ge2,
                                freq_ge3=ge3, presence_uar=uar,
                                intensity_pcc=r, dim_links=links))
    return stats


# ---------------------------------------------------------------------------
# CSV exports
# ---------------------------------------------------------------------------

def export_label_frequencies(freqs: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label", "freq_ge1", "freq_ge2", "freq_ge3"))
        for label in LABELS:
            w.writerow((label,) + tuple(freqs[label]))


def export_dimension_agreement(rows, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dimension", "form", "granularity", "mean_pcc", "sd_pcc",
                    "n_units", "n_skipped"))
        for r in rows:
            w.writerow((r.dimension, r.form, r.granularity,
                        f"{r.mean_pcc:.6f}", f"{r.sd_pcc:.6f}",
                        r.n_units, r.n_skipped))


def export_label_stats(stats, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label", "frequency", "presence_uar", "intensity_pcc",
                    "n_dim_links", "dim_links"))
        for s in stats:
            links = ";".join(f"{d}{sign}" for d, sign in sorted(s.dim_links))
            w.writerow((s.label, s.freq_ge1, f"{s.presence_uar:.6f}",
                        f"{s.intensity_pcc:.6f}", s.n_dim_links, links))


def export_label_dim_corr(corr_map: LabelDimCorrMap, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("label",) + DIMENSIONS)
        for label in LABELS:
            row = [label]
            for dim in DIMENSIONS:
                v = corr_map.entries[(label, dim)]
                row.append("" if v is None else f"{v:.6f}")
            w.writerow(row)

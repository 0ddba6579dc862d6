"""Canonical corpus data model, on-disk formats, and fold splitting.

A corpus is a set of annotated sequences belonging to subjects. Each
sequence carries per-modality feature matrices and a six-annotator
annotation bundle: label intensities in [0, 1], per-dimension summary
values in [-1, 1], and time-continuous dimension traces in [-1, 1].

On-disk layout (all paths relative to the manifest):

* ``manifest.json`` -- corpus id, age group, trace rate, annotators,
  subjects, and one entry per sequence referencing its feature files.
* ``labels.csv`` -- ``sequence_id,annotator_id,label,intensity``. Missing
  rows are read as intensity 0 (label absent).
* ``dim_summaries.csv`` -- ``sequence_id,annotator_id,dimension,value``.
  Full coverage is required.
* ``dim_traces.csv`` -- ``sequence_id,annotator_id,dimension,t_index,value``
  sampled at the corpus trace rate. Full coverage is required.
* one feature CSV per (sequence, modality, kind) with a header comment
  carrying ``T``, ``D`` and ``frame_rate_hz``.

Everything is immutable after load and safe to share across workers.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateId,
    MissingFile,
    RangeViolation,
    SchemaViolation,
    TooFewSubjects,
)

LABELS = (
    "angry", "annoyed", "anxious", "ashamed", "confident", "contemptuous",
    "curious", "desperate", "disappointed", "embarrassed", "excited",
    "frustrated", "interested", "guilty", "happy", "hopeful", "impatient",
    "proud", "relaxed", "sad", "satisfied", "surprised", "upset",
)

DIMENSIONS = (
    "novelty", "intrinsic_pleasantness", "goal_conduciveness", "coping",
    "arousal",
)

MODALITIES = ("text", "audio", "video")
FEATURE_KINDS = ("expert", "deep")
AGE_GROUPS = ("young", "older")

_LABEL_SET = frozenset(LABELS)
_DIMENSION_SET = frozenset(DIMENSIONS)


def parse_label(name: str) -> str:
    """Canonical (lowercase) label id; raises on anything outside the 23."""
    canon = name.strip().lower()
    if canon not in _LABEL_SET:
        raise SchemaViolation(f"unknown label {name!r}")
    return canon


def parse_dimension(name: str) -> str:
    canon = name.strip().lower().replace(" ", "_")
    if canon not in _DIMENSION_SET:
        raise SchemaViolation(f"unknown dimension {name!r}")
    return canon


def fmt(x: float) -> str:
    """Shortest exact decimal form of a float; round-trips bit-exactly."""
    return repr(float(x))


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled trace with values in [-1, 1]."""

    sample_rate_hz: float
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.sample_rate_hz <= 0:
            raise SchemaViolation("sample_rate_hz must be > 0")
        if self.values.ndim != 1 or self.values.size < 2:
            raise SchemaViolation("trace needs at least 2 samples")
        if not np.all(np.isfinite(self.values)):
            raise RangeViolation("trace contains non-finite values")
        if np.any(np.abs(self.values) > 1.0):
            raise RangeViolation("trace values outside [-1, 1]")

    @property
    def duration_s(self) -> float:
        return (self.values.size - 1) / self.sample_rate_hz

    def equals(self, other: "TimeSeries") -> bool:
        return (self.sample_rate_hz == other.sample_rate_hz
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class FeatureMatrix:
    """T x D frame matrix for one (modality, kind).

    ``frame_rate_hz == 0`` marks a single pooled vector (T == 1), used for
    sequence-level text features.
    """

    modality: str
    kind: str
    frame_rate_hz: float
    frames: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "frames",
                           np.atleast_2d(np.asarray(self.frames, dtype=float)))
        if self.modality not in MODALITIES:
            raise SchemaViolation(f"unknown modality {self.modality!r}")
        if self.kind not in FEATURE_KINDS:
            raise SchemaViolation(f"unknown feature kind {self.kind!r}")
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise SchemaViolation("feature matrix must be T x D with T,D >= 1")
        if self.frame_rate_hz < 0:
            raise SchemaViolation("frame_rate_hz must be >= 0")
        if self.frame_rate_hz == 0 and self.frames.shape[0] != 1:
            raise SchemaViolation("frame_rate_hz 0 requires a single frame")
        if not np.all(np.isfinite(self.frames)):
            raise RangeViolation(
                f"non-finite entries in {self.modality}/{self.kind} features")

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def equals(self, other: "FeatureMatrix") -> bool:
        return (self.modality == other.modality and self.kind == other.kind
                and self.frame_rate_hz == other.frame_rate_hz
                and np.array_equal(self.frames, other.frames))


@dataclass(frozen=True)
class AnnotationBundle:
    """All six annotators' labels, summaries, and traces for one sequence."""

    annotator_ids: tuple
    label_intensity: dict    # (annotator_id, label) -> float in [0, 1]
    dim_summary: dict        # (annotator_id, dimension) -> float in [-1, 1]
    dim_trace: dict          # (annotator_id, dimension) -> TimeSeries

    def intensities(self, label: str) -> np.ndarray:
        """Per-annotator intensity vector for one label, annotator order."""
        return np.array([self.label_intensity[(a, label)]
                         for a in self.annotator_ids])

    def summaries(self, dimension: str) -> np.ndarray:
        return np.array([self.dim_summary[(a, dimension)]
                         for a in self.annotator_ids])

    def traces(self, dimension: str) -> list:
        return [self.dim_trace[(a, dimension)] for a in self.annotator_ids]

    def equals(self, other: "AnnotationBundle") -> bool:
        if self.annotator_ids != other.annotator_ids:
            return False
        if self.label_intensity != other.label_intensity:
            return False
        if self.dim_summary != other.dim_summary:
            return False
        if set(self.dim_trace) != set(other.dim_trace):
            return False
        return all(self.dim_trace[k].equals(other.dim_trace[k])
                   for k in self.dim_trace)


@dataclass(frozen=True)
class Sequence:
    sequence_id: str
    subject_id: str
    session_id: str
    duration_s: float
    features: dict           # (modality, kind) -> FeatureMatrix
    annotations: AnnotationBundle

    def __post_init__(self):
        if self.duration_s <= 0:
            raise SchemaViolation(
                f"sequence {self.sequence_id}: duration_s must be > 0")

    def equals(self, other: "Sequence") -> bool:
        if (self.sequence_id, self.subject_id, self.session_id,
                self.duration_s) != (other.sequence_id, other.subject_id,
                                     other.session_id, other.duration_s):
            return False
        if set(self.features) != set(other.features):
            return False
        if not all(self.features[k].equals(other.features[k])
                   for k in self.features):
            return False
        return self.annotations.equals(other.annotations)


@dataclass(frozen=True)
class Corpus:
    corpus_id: str
    age_group: str
    trace_rate_hz: float
    subjects: tuple
    sequences: tuple
    annotator_ids: tuple
    generator_meta: dict | None = field(default=None, compare=False)

    def sequences_of_subject(self, subject_id: str):
        return [s for s in self.sequences if s.subject_id == subject_id]

    def sequence_by_id(self, sequence_id: str) -> Sequence:
        for s in self.sequences:
            if s.sequence_id == sequence_id:
                return s
        raise KeyError(sequence_id)

    def sessions(self):
        """Ordered unique session ids."""
        seen = {}
        for s in self.sequences:
            seen.setdefault(s.session_id, None)
        return list(seen)

    def equals(self, other: "Corpus") -> bool:
        if (self.corpus_id, self.age_group, self.trace_rate_hz,
                self.subjects, self.annotator_ids) != (
                other.corpus_id, other.age_group, other.trace_rate_hz,
                other.subjects, other.annotator_ids):
            return False
        if len(self.sequences) != len(other.sequences):
            return False
        return all(a.equals(b) for a, b in zip(self.sequences, other.sequences))


@dataclass(frozen=True)
class StatsSummary:
    n_sequences: int
    mean_duration_s: float
    sd_duration_s: float
    total_duration_s: float


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of_subject: dict
    seed: int

    def subjects_of_fold(self, fold: int):
        return sorted(s for s, f in self.fold_of_subject.items() if f == fold)


def validate_corpus(c: Corpus) -> Corpus:
    """Enforce every structural invariant; returns the corpus unchanged."""
    if len(c.subjects) < 1:
        raise SchemaViolation("corpus needs at least 1 subject")
    if len(set(c.subjects)) != len(c.subjects):
        raise DuplicateId("duplicate subject id")
    if c.age_group not in AGE_GROUPS:
        raise SchemaViolation(f"age_group must be one of {AGE_GROUPS}")
    if c.trace_rate_hz <= 0:
        raise SchemaViolation("trace_rate_hz must be > 0")
    seen = set()
    subject_set = set(c.subjects)
    feat_dims = {}
    for s in c.sequences:
        if s.sequence_id in seen:
            raise DuplicateId(f"duplicate sequence_id {s.sequence_id!r}")
        seen.add(s.sequence_id)
        if s.subject_id not in subject_set:
            raise SchemaViolation(
                f"sequence {s.sequence_id}: subject {s.subject_id!r} not in manifest")
        b = s.annotations
        if b.annotator_ids != c.annotator_ids:
            raise SchemaViolation(
                f"sequence {s.sequence_id}: annotator set mismatch")
        for a in c.annotator_ids:
            for lab in LABELS:
                v = b.label_intensity.get((a, lab))
                if v is None:
                    raise SchemaViolation(
                        f"sequence {s.sequence_id}: missing intensity for "
                        f"annotator {a}, label {lab}")
                if not np.isfinite(v) or v < 0.0 or v > 1.0:
                    raise RangeViolation(
                        f"sequence {s.sequence_id}: intensity {v} for label "
                        f"{lab!r} (annotator {a}) outside [0, 1]")
            for dim in DIMENSIONS:
                v = b.dim_summary.get((a, dim))
                if v is None:
                    raise SchemaViolation(
                        f"sequence {s.sequence_id}: missing summary for "
                        f"annotator {a}, dimension {dim}")
                if not np.isfinite(v) or abs(v) > 1.0:
                    raise RangeViolation(
                        f"sequence {s.sequence_id}: summary {v} for dimension "
                        f"{dim!r} (annotator {a}) outside [-1, 1]")
                tr = b.dim_trace.get((a, dim))
                if tr is None:
                    raise SchemaViolation(
                        f"sequence {s.sequence_id}: missing trace for "
                        f"annotator {a}, dimension {dim}")
                # trace must span the sequence (within half a sample period)
                if tr.duration_s + 0.5 / tr.sample_rate_hz < s.duration_s:
                    raise SchemaViolation(
                        f"sequence {s.sequence_id}: trace for {dim} "
                        f"(annotator {a}) covers {tr.duration_s:.3f}s "
                        f"< duration {s.duration_s:.3f}s")
        for key, fm in s.features.items():
            if key != (fm.modality, fm.kind):
                raise SchemaViolation(
                    f"sequence {s.sequence_id}: feature key {key} mismatches "
                    f"matrix ({fm.modality}, {fm.kind})")
            prev = feat_dims.setdefault(key, fm.dim)
            if fm.dim != prev:
                raise SchemaViolation(
                    f"sequence {s.sequence_id}: {key} feature dim {fm.dim} "
                    f"differs from corpus dim {prev}")
    return c


def corpus_stats(c: Corpus) -> StatsSummary:
    """Sequence-duration summary: mean, sample sd, and total."""
    durations = np.array([s.duration_s for s in c.sequences], dtype=float)
    if durations.size == 0:
        return StatsSummary(0, float("nan"), float("nan"), 0.0)
    sd = float(durations.std(ddof=1)) if durations.size > 1 else 0.0
    return StatsSummary(
        n_sequences=int(durations.size),
        mean_duration_s=float(durations.mean()),
        sd_duration_s=sd,
        total_duration_s=float(durations.sum()),
    )


def greedy_subject_folds(subjects, k: int, seed: int) -> dict:
    """Shuffle subjects by seed, assign each to the currently smallest fold."""
    subjects = sorted(subjects)
    if k > len(subjects):
        raise TooFewSubjects(f"k={k} folds but only {len(subjects)} subjects")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    sizes = [0] * k
    assignment = {}
    for idx in order:
        fold = min(range(k), key=lambda f: (sizes[f], f))
        assignment[subjects[idx]] = fold
        sizes[fold] += 1
    return assignment


def split_folds(c: Corpus, k: int = 5, seed: int = 0) -> FoldAssignment:
    """Balanced subject-level partition into k folds, deterministic per seed.

    Fold sizes differ by at most one subject and no subject ever appears in
    two folds.
    """
    return FoldAssignment(k=k, seed=seed,
                          fold_of_subject=greedy_subject_folds(c.subjects, k, seed))


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingFile(str(path))
    return path


def read_feature_csv(path: Path) -> FeatureMatrix:
    path = _require(Path(path))
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise SchemaViolation(f"{path}: missing feature header line")
        meta = {}
        for tok in header.lstrip("#").split():
            key, _, val = tok.partition("=")
            meta[key] = val
        try:
            T = int(meta["T"])
            D = int(meta["D"])
            rate = float(meta["frame_rate_hz"])
            modality = meta["modality"]
            kind = meta["kind"]
        except KeyError as e:
            raise SchemaViolation(f"{path}: feature header missing {e}") from e
        frames = np.loadtxt(fh, delimiter=",", ndmin=2)
    if frames.shape != (T, D):
        raise SchemaViolation(
            f"{path}: expected {T}x{D} frames, found {frames.shape}")
    return FeatureMatrix(modality=modality, kind=kind, frame_rate_hz=rate,
                         frames=frames)


def write_feature_csv(path: Path, fm: FeatureMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(f"# modality={fm.modality} kind={fm.kind} "
                 f"T={fm.n_frames} D={fm.dim} frame_rate_hz={fmt(fm.frame_rate_hz)}\n")
        for row in fm.frames:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _read_csv_rows(path: Path, expected_header):
    path = _require(Path(path))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(expected_header):
            raise SchemaViolation(
                f"{path}: header {header} != expected {list(expected_header)}")
        for i, row in enumerate(reader, start=2):
            if len(row) != len(expected_header):
                raise SchemaViolation(f"{path}:{i}: wrong column count")
            yield i, row


def load_corpus(manifest_path) -> Corpus:
    """Load and fully validate a corpus from its manifest."""
    manifest_path = _require(Path(manifest_path))
    root = manifest_path.parent
    with open(manifest_path) as fh:
        try:
            man = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaViolation(f"{manifest_path}: invalid JSON ({e})") from e
    for key in ("corpus_id", "age_group", "trace_rate_hz", "annotator_ids",
                "subjects", "sequences", "label_annotations", "dim_summaries",
                "dim_traces"):
        if key not in man:
            raise SchemaViolation(f"{manifest_path}: missing key {key!r}")
    annotators = tuple(man["annotator_ids"])
    trace_rate = float(man["trace_rate_hz"])

    # label intensities; unlisted (annotator, label) pairs default to 0
    intensities = {}
    for lineno, row in _read_csv_rows(root / man["label_annotations"],
                                      ("sequence_id", "annotator_id", "label",
                                       "intensity")):
        seq_id, ann, label, val = row
        label = parse_label(label)
        try:
            v = float(val)
        except ValueError:
            raise SchemaViolation(
                f"{man['label_annotations']}:{lineno}: bad intensity {val!r}")
        if not np.isfinite(v) or v < 0.0 or v > 1.0:
            raise RangeViolation(
                f"{man['label_annotations']}:{lineno}: sequence {seq_id}, "
                f"label {label}: intensity {v} outside [0, 1]")
        intensities[(seq_id, ann, label)] = v

    summaries = {}
    for lineno, row in _read_csv_rows(root / man["dim_summaries"],
                                      ("sequence_id", "annotator_id",
                                       "dimension", "value")):
        seq_id, ann, dim, val = row
        dim = parse_dimension(dim)
        v = float(val)
        if not np.isfinite(v) or abs(v) > 1.0:
            raise RangeViolation(
                f"{man['dim_summaries']}:{lineno}: sequence {seq_id}, "
                f"dimension {dim}: value {v} outside [-1, 1]")
        summaries[(seq_id, ann, dim)] = v

    trace_samples = {}
    for lineno, row in _read_csv_rows(root / man["dim_traces"],
                                      ("sequence_id", "annotator_id",
                                       "dimension", "t_index", "value")):
        seq_id, ann, dim, t_index, val = row
        dim = parse_dimension(dim)
        v = float(val)
        if not np.isfinite(v) or abs(v) > 1.0:
            raise RangeViolation(
                f"{man['dim_traces']}:{lineno}: sequence {seq_id}, dimension "
                f"{dim}: value {v} outside [-1, 1]")
        trace_samples.setdefault((seq_id, ann, dim), []).append((int(t_index), v))

    sequences = []
    for entry in man["sequences"]:
        seq_id = entry["sequence_id"]
        features = {}
        for modality, kinds in entry.get("features", {}).items():
            for kind, rel in kinds.items():
                fm = read_feature_csv(root / rel)
                if (fm.modality, fm.kind) != (modality, kind):
                    raise SchemaViolation(
                        f"{rel}: header ({fm.modality}, {fm.kind}) mismatches "
                        f"manifest entry ({modality}, {kind})")
                features[(modality, kind)] = fm
        label_intensity = {}
        for ann in annotators:
            for lab in LABELS:
                label_intensity[(ann, lab)] = intensities.get(
                    (seq_id, ann, lab), 0.0)
        dim_summary = {}
        dim_trace = {}
        for ann in annotators:
            for dim in DIMENSIONS:
                if (seq_id, ann, dim) not in summaries:
                    raise SchemaViolation(
                        f"sequence {seq_id}: missing dimension summary for "
                        f"annotator {ann}, dimension {dim}")
                dim_summary[(ann, dim)] = summaries[(seq_id, ann, dim)]
                samples = trace_samples.get((seq_id, ann, dim))
                if not samples:
                    raise SchemaViolation(
                        f"sequence {seq_id}: missing trace for annotator "
                        f"{ann}, dimension {dim}")
                samples.sort()
                idx = [t for t, _ in samples]
                if idx != list(range(len(idx))):
                    raise SchemaViolation(
                        f"sequence {seq_id}: trace t_index for {ann}/{dim} "
                        f"is not contiguous from 0")
                raw = TimeSeries(sample_rate_hz=trace_rate,
                                 values=np.array([v for _, v in samples]))
                dim_trace[(ann, dim)] = raw
        bundle = AnnotationBundle(annotator_ids=annotators,
                                  label_intensity=label_intensity,
                                  dim_summary=dim_summary,
                                  dim_trace=dim_trace)
        sequences.append(Sequence(
            sequence_id=seq_id,
            subject_id=entry["subject_id"],
            session_id=entry["session_id"],
            duration_s=float(entry["duration_s"]),
            features=features,
            annotations=bundle,
        ))

    corpus = Corpus(
        corpus_id=man["corpus_id"],
        age_group=man["age_group"],
        trace_rate_hz=trace_rate,
        subjects=tuple(man["subjects"]),
        sequences=tuple(sequences),
        annotator_ids=annotators,
        generator_meta=man.get("generator"),
    )
    return validate_corpus(corpus)


def write_corpus(c: Corpus, out_dir) -> Path:
    """Write a corpus in the canonical on-disk format; returns manifest path.

    Output bytes are a pure function of the corpus content, so re-writing
    the same corpus is byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feat_dir = out_dir / "features"
    entries = []
    label_rows = []
    summary_rows = []
    trace_rows = []
    for s in c.sequences:
        feats = {}
        for (modality, kind) in sorted(s.features):
            rel = f"features/{s.sequence_id}_{modality}_{kind}.csv"
            write_feature_csv(out_dir / rel, s.features[(modality, kind)])
            feats.setdefault(modality, {})[kind] = rel
        entries.append({
            "sequence_id": s.sequence_id,
            "subject_id": s.subject_id,
            "session_id": s.session_id,
            "duration_s": s.duration_s,
            "features": feats,
        })
        b = s.annotations
        for ann in c.annotator_ids:
            for lab in LABELS:
                v = b.label_intensity[(ann, lab)]
                if v != 0.0:
                    label_rows.append((s.sequence_id, ann, lab, fmt(v)))
            for dim in DIMENSIONS:
                summary_rows.append((s.sequence_id, ann, dim,
                                     fmt(b.dim_summary[(ann, dim)])))
                for t, v in enumerate(b.dim_trace[(ann, dim)].values):
                    trace_rows.append((s.sequence_id, ann, dim, str(t), fmt(v)))
    feat_dir.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    dump("labels.csv", ("sequence_id", "annotator_id", "label", "intensity"),
         label_rows)
    dump("dim_summaries.csv", ("sequence_id", "annotator_id", "dimension",
                               "value"), summary_rows)
    dump("dim_traces.csv", ("sequence_id", "annotator_id", "dimension",
                            "t_index", "value"), trace_rows)

    man = {
        "corpus_id": c.corpus_id,
        "age_group": c.age_group,
        "trace_rate_hz": c.trace_rate_hz,
        "annotator_ids": list(c.annotator_ids),
        "subjects": list(c.subjects),
        "label_annotations": "labels.csv",
        "dim_summaries": "dim_summaries.csv",
        "dim_traces": "dim_traces.csv",
        "sequences": entries,
    }
    if c.generator_meta is not None:
        man["generator"] = c.generator_meta
    manifest = out_dir / "manifest.json"
    with open(manifest, "w") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest

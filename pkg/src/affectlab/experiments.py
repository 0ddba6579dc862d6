"""Experiment harness: within-, cross-, and mixed-corpus CCC evaluation.

For every (target, modality) cell the harness trains subject-independent
models, predicts every held-out sequence exactly once, and scores one CCC
over the concatenation of all test predictions (never a fold average).
Multimodal cells fuse the unimodal predictions at decision level; fusion
weights are fitted on validation-fold predictions only, so no test-fold
target ever reaches a parameter.

Strategies:

* within -- k-fold CV inside one corpus; one of the training folds is
  held out for early stopping.
* cross  -- train on the full source corpus (with an internal 20% subject
  validation split), test on every sequence of the other corpus.
* mixed  -- pool both corpora, k-fold CV over the pooled subjects, report
  CCC separately per test corpus.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corpus import DIMENSIONS, LABELS, Corpus, greedy_subject_folds
from .errors import AffectLabError, ConfigInvalid
from .fusion import apply_fusion, fit_continuous_fusion, fit_static_fusion
from .gold import gold_for_trace, mean_gold
from .metrics import ccc
from .nets import (
    TrainConfig,
    gru_config_for,
    mlp_config_for,
    mlp_forward,
    pool_frames,
    predict_traces,
    train_gru,
    train_mlp,
)

REPRESENTATIONS = ("labels", "dim_summary", "dim_continuous")
STRATEGIES = ("within", "cross", "mixed")
MODALITIES = ("text", "audio", "video")
MULTIMODAL = "multimodal"


@dataclass(frozen=True)
class ExperimentSpec:
    representation: str
    targets: tuple
    strategy: str
    source_corpora: tuple        # one id (within/cross) or two (mixed)
    test_corpora: tuple          # equals source (within), other (cross), both (mixed)
    modalities: tuple = MODALITIES
    include_multimodal: bool = True
    feature_kind: str = "deep"
    k: int = 5
    seed: int = 0
    train_overrides: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentSpec":
        if self.representation not in REPRESENTATIONS:
            raise ConfigInvalid(f"unknown representation {self.representation!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigInvalid(f"unknown strategy {self.strategy!r}")
        if not self.targets:
            raise ConfigInvalid("no targets requested")
        universe = LABELS if self.representation == "labels" else DIMENSIONS
        for t in self.targets:
            if t not in universe:
                raise ConfigInvalid(f"target {t!r} invalid for "
                                    f"{self.representation}")
        for m in self.modalities:
            if m not in MODALITIES:
                raise ConfigInvalid(f"unknown modality {m!r}")
        if self.feature_kind not in ("expert", "deep"):
            raise ConfigInvalid(f"unknown feature kind {self.feature_kind!r}")
        if self.strategy == "within":
            if (len(self.source_corpora) != 1
                    or self.source_corpora != self.test_corpora):
                raise ConfigInvalid("within requires source == test corpus")
        elif self.strategy == "cross":
            if (len(self.source_corpora) != 1 or len(self.test_corpora) != 1
                    or self.source_corpora == self.test_corpora):
                raise ConfigInvalid("cross requires source != test corpus")
        else:
            if len(self.source_corpora) != 2:
                raise ConfigInvalid("mixed requires two source corpora")
        return self

    def to_json(self) -> dict:
        doc = {k: (list(v) if isinstance(v, tuple) else v)
               for k, v in vars(self).items()}
        return doc

    @staticmethod
    def from_json(doc: dict) -> "ExperimentSpec":
        kw = dict(doc)
        for key in ("targets", "source_corpora", "test_corpora", "modalities"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return ExperimentSpec(**kw).validate()


@dataclass
class CellResult:
    representation: str
    feature_kind: str
    target: str
    modality: str
    strategy: str
    test_corpus: str
    ccc: float | None            # None marks an undefined (NA) or failed cell
    error: str | None = None


@dataclass
class ExperimentResult:
    cells: list
    meta: dict

    def get(self, target, modality, strategy, test_corpus) -> CellResult:
        for c in self.cells:
            if (c.target, c.modality, c.strategy, c.test_corpus) == \
                    (target, modality, strategy, test_corpus):
                return c
        raise KeyError((target, modality, strategy, test_corpus))

    def merge(self, other: "ExperimentResult") -> "ExperimentResult":
        meta = dict(self.meta)
        meta["merged"] = True
        return ExperimentResult(cells=self.cells + other.cells, meta=meta)

    def to_json(self) -> dict:
        return {
            "meta": self.meta,
            "cells": [
                {"representation": c.representation,
                 "feature_kind": c.feature_kind, "target": c.target,
                 "modality": c.modality, "strategy": c.strategy,
                 "test_corpus": c.test_corpus, "ccc": c.ccc, "error": c.error}
                for c in self.cells],
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @staticmethod
    def from_json(doc: dict) -> "ExperimentResult":
        cells = [CellResult(**c) for c in doc["cells"]]
        return ExperimentResult(cells=cells, meta=doc.get("meta", {}))

    @staticmethod
    def load(path) -> "ExperimentResult":
        with open(path) as fh:
            return ExperimentResult.from_json(json.load(fh))


def derive_seed(base: int, *parts) -> int:
    """Stable per-cell seed from the run seed and cell coordinates."""
    tag = "|".join(str(p) for p in parts)
    return (int(base) * 1000003 + zlib.crc32(tag.encode())) % (2 ** 31)


def _train_config(spec: ExperimentSpec, seed: int) -> TrainConfig:
    base = (TrainConfig.continuous(seed=seed)
            if spec.representation == "dim_continuous"
            else TrainConfig.static(seed=seed))
    if spec.train_overrides:
        base = replace(base, **spec.train_overrides)
    return base


# ---------------------------------------------------------------------------
# per-corpus datasets
# ---------------------------------------------------------------------------

@dataclass
class _StaticItem:
    x: np.ndarray          # pooled feature vector
    y: np.ndarray          # per-annotator targets (K,)
    gold: float            # fused target


@dataclass
class _ContItem:
    frames: np.ndarray     # (T_f, D) at the frame rate
    frame_rate: float
    gold: np.ndarray       # EWE trace at the corpus trace rate
    trace_rate: float
    gold_on_frames: np.ndarray   # gold resampled onto the frame timeline


class _CellNotComputable(AffectLabError):
    pass


def _static_dataset(corpus: Corpus, spec: ExperimentSpec, target: str,
                    modality: str) -> dict:
    key = (modality, spec.feature_kind)
    data = {}
    for s in corpus.sequences:
        if key not in s.features:
            raise _CellNotComputable(
                f"{corpus.corpus_id}/{s.sequence_id}: no {key} features")
        x = pool_frames(s.features[key].frames)
        if spec.representation == "labels":
            y = s.annotations.intensities(target)
        else:
            y = s.annotations.summaries(target)
        data[s.sequence_id] = _StaticItem(x=x, y=y, gold=mean_gold(y))
    return data


def _continuous_dataset(corpus: Corpus, spec: ExperimentSpec, target: str,
                        modality: str, gold_cache: dict) -> dict:
    key = (modality, spec.feature_kind)
    data = {}
    for s in corpus.sequences:
        if key not in s.features:
            raise _CellNotComputable(
                f"{corpus.corpus_id}/{s.sequence_id}: no {key} features")
        fm = s.features[key]
        if fm.n_frames < 2 or fm.frame_rate_hz <= 0:
            raise _CellNotComputable(
                f"{corpus.corpus_id}: {key} features are sequence-level; "
                "no frame timeline for continuous prediction")
        cache_key = (corpus.corpus_id, s.sequence_id, target)
        if cache_key not in gold_cache:
            gold_cache[cache_key] = gold_for_trace(
                s.annotations, target, corpus.trace_rate_hz).fused
        gold_tr = gold_cache[cache_key]
        t_frames = np.arange(fm.n_frames) / fm.frame_rate_hz
        t_gold = np.arange(gold_tr.values.size) / gold_tr.sample_rate_hz
        gold_on_frames = np.interp(t_frames, t_gold, gold_tr.values)
        data[s.sequence_id] = _ContItem(
            frames=fm.frames, frame_rate=fm.frame_rate_hz,
            gold=gold_tr.values, trace_rate=gold_tr.sample_rate_hz,
            gold_on_frames=gold_on_frames)
    return data


@dataclass
class _Predictions:
    """Per-sequence predictions from one trained model, tagged by role."""

    role: str                    # "val" | "test"
    static: dict | None = None   # seq_id -> scalar
    traces: dict | None = None   # seq_id -> trace at the gold trace rate


# ---------------------------------------------------------------------------
# per-fold training
# ---------------------------------------------------------------------------

def _fit_predict_static(data_by_corpus, train_ids, val_ids, test_sets,
                        spec, seed):
    """Train one MLP; return val predictions and per-test-set predictions.

    ``data_by_corpus`` maps corpus_id -> static dataset;
    ``train_ids``/``val_ids`` are (corpus_id, seq_id) pairs;
    ``test_sets`` maps a name -> list of (corpus_id, seq_id).
    """
    d0 = next(iter(data_by_corpus.values()))
    input_dim = next(iter(d0.values())).x.size
    n_outputs = next(iter(d0.values())).y.size
    cfg = mlp_config_for(input_dim, n_outputs)
    tcfg = _train_config(spec, seed)
    X_tr = np.stack([data_by_corpus[c][s].x for c, s in train_ids])
    Y_tr = np.stack([data_by_corpus[c][s].y for c, s in train_ids])
    X_val = np.stack([data_by_corpus[c][s].x for c, s in val_ids])
    gold_val = np.array([data_by_corpus[c][s].gold for c, s in val_ids])
    ck = train_mlp(cfg, tcfg, X_tr, Y_tr, X_val, gold_val)

    def predict(ids):
        X = np.stack([data_by_corpus[c][s].x for c, s in ids])
        out = mlp_forward(cfg, ck.params, X).mean(axis=1)
        return {cs: float(v) for cs, v in zip(ids, out)}

    val_pred = _Predictions(role="val", static=predict(val_ids))
    test_pred = {name: _Predictions(role="test", static=predict(ids))
                 for name, ids in test_sets.items() if ids}
    return val_pred, test_pred


def _fit_predict_continuous(data_by_corpus, train_ids, val_ids, test_sets,
                            spec, seed):
    d0 = next(iter(data_by_corpus.values()))
    input_dim = next(iter(d0.values())).frames.shape[1]
    cfg = gru_config_for(input_dim, spec.feature_kind)
    tcfg = _train_config(spec, seed)

    def pairs(ids):
        return [(data_by_corpus[c][s].frames,
                 data_by_corpus[c][s].gold_on_frames) for c, s in ids]

    ck = train_gru(cfg, tcfg, pairs(train_ids), pairs(val_ids))

    def predict(ids):
        frames = [data_by_corpus[c][s].frames for c, s in ids]
        raw = predict_traces(cfg, ck.params, frames)
        out = {}
        for cs, values in zip(ids, raw):
            item = data_by_corpus[cs[0]][cs[1]]
            t_frames = np.arange(values.size) / item.frame_rate
            t_gold = np.arange(item.gold.size) / item.trace_rate
            out[cs] = np.interp(t_gold, t_frames, values)
        return out

    val_pred = _Predictions(role="val", traces=predict(val_ids))
    test_pred = {name: _Predictions(role="test", traces=predict(ids))
                 for name, ids in test_sets.items() if ids}
    return val_pred, test_pred


# ---------------------------------------------------------------------------
# fold plumbing shared by the three strategies
# ---------------------------------------------------------------------------

def _sequence_ids_by_fold(corpora, fold_of_subject):
    """fold -> ordered list of (corpus_id, sequence_id)."""
    out: dict = {}
    for corpus in corpora:
        for s in corpus.sequences:
            fold = fold_of_subject[f"{corpus.corpus_id}:{s.subject_id}"]
            out.setdefault(fold, []).append((corpus.corpus_id, s.sequence_id))
    return out


def _ccc_of_static(preds: dict, data_by_corpus) -> float:
    ids = sorted(preds)
    x = np.array([preds[i] for i in ids])
    y = np.array([data_by_corpus[c][s].gold for c, s in ids])
    return ccc(x, y)


def _ccc_of_traces(preds: dict, data_by_corpus) -> float:
    ids = sorted(preds)
    x = np.concatenate([preds[i] for i in ids])
    y = np.concatenate([data_by_corpus[c][s].gold for c, s in ids])
    return ccc(x, y)


def _run_cell_grid(spec, corpora_by_id, fold_of_subject, train_plan):
    """Run every (target, modality[, multimodal]) cell of one strategy.

    ``train_plan`` is a list of fold descriptors
    ``(train_ids, val_ids, {test_name: ids})`` where test_name is the
    corpus id whose cell the predictions belong to.
    """
    continuous = spec.representation == "dim_continuous"
    cells = []
    gold_cache: dict = {}
    for target in spec.targets:
        datasets = {}
        usable = {}
        for modality in spec.modalities:
            try:
                if continuous:
                    datasets[modality] = {
                        cid: _continuous_dataset(c, spec, target, modality,
                                                 gold_cache)
                        for cid, c in corpora_by_id.items()}
                else:
                    datasets[modality] = {
                        cid: _static_dataset(c, spec, target, modality)
                        for cid, c in corpora_by_id.items()}
                usable[modality] = None
            except _CellNotComputable as e:
                usable[modality] = str(e)

        # accumulated test predictions per (modality, test corpus)
        test_acc: dict = {m: {} for m in spec.modalities}
        fused_acc: dict = {}
        fusion_errors = []
        for fold_idx, (train_ids, val_ids, test_sets) in enumerate(train_plan):
            fold_preds = {}
            for modality in spec.modalities:
                if usable[modality] is not None:
                    continue
                seed = derive_seed(spec.seed, spec.representation, target,
                                   modality, spec.strategy, fold_idx)
                try:
                    val_pred, test_pred = (
                        _fit_predict_continuous if continuous
                        else _fit_predict_static)(
                            datasets[modality], train_ids, val_ids,
                            test_sets, spec, seed)
                except AffectLabError as e:
                    usable[modality] = f"training failed: {e}"
                    continue
                fold_preds[modality] = (val_pred, test_pred)
                for name, pred in test_pred.items():
                    bucket = test_acc[modality].setdefault(name, {})
                    bucket.update(pred.static if not continuous else pred.traces)
            # decision fusion for this fold
            if spec.include_multimodal:
                live = [m for m in spec.modalities if m in fold_preds]
                if len(live) != len(spec.modalities) or len(live) < 2:
                    missing = [m for m in spec.modalities if m not in fold_preds]
                    fusion_errors.append(
                        f"fold {fold_idx}: missing unimodal predictions "
                        f"for {missing}")
                    continue
                seed = derive_seed(spec.seed, spec.representation, target,
                                   MULTIMODAL, spec.strategy, fold_idx)
                try:
                    fused = _fuse_fold(fold_preds, live, val_ids, test_sets,
                                       datasets[live[0]], spec, seed,
                                       continuous)
                except AffectLabError as e:
                    fusion_errors.append(f"fold {fold_idx}: {e}")
                    continue
                for name, preds in fused.items():
                    fused_acc.setdefault(name, {}).update(preds)

        score = _ccc_of_traces if continuous else _ccc_of_static
        for modality in spec.modalities:
            for test_name in spec.test_corpora:
                if usable[modality] is not None:
                    cells.append(_na_cell(spec, target, modality, test_name,
                                          usable[modality]))
                    continue
                preds = test_acc[modality].get(test_name, {})
                value = score(preds, datasets[modality]) if preds else float("nan")
                cells.append(_value_cell(spec, target, modality, test_name,
                                         value))
        if spec.include_multimodal:
            ref_modality = next((m for m in spec.modalities
                                 if usable[m] is None), None)
            for test_name in spec.test_corpora:
                if fusion_errors or ref_modality is None:
                    cells.append(_na_cell(spec, target, MULTIMODAL, test_name,
                                          "; ".join(fusion_errors) or
                                          "no usable modality"))
                    continue
                preds = fused_acc.get(test_name, {})
                value = score(preds, datasets[ref_modality]) if preds else float("nan")
                cells.append(_value_cell(spec, target, MULTIMODAL, test_name,
                                         value))
    return cells


def _fuse_fold(fold_preds, modalities, val_ids, test_sets, ref_data, spec,
               seed, continuous):
    """Fit fusion on validation predictions, apply to test predictions."""
    if not continuous:
        val_X = np.column_stack([
            [fold_preds[m][0].static[i] for i in val_ids] for m in modalities])
        val_gold = np.array([ref_data[c][s].gold for c, s in val_ids])
        model = fit_static_fusion(val_X, val_gold)
        out = {}
        for name, ids in test_sets.items():
            if not ids:
                continue
            test_X = np.column_stack([
                [fold_preds[m][1][name].static[i] for i in ids]
                for m in modalities])
            fused = apply_fusion(model, test_X)
            out[name] = {i: float(v) for i, v in zip(ids, fused)}
        return out
    fit_seqs = []
    for i in val_ids:
        stack = np.column_stack([fold_preds[m][0].traces[i]
                                 for m in modalities])
        fit_seqs.append((stack, ref_data[i[0]][i[1]].gold))
    tcfg = _train_config(spec, seed)
    model = fit_continuous_fusion(fit_seqs, tcfg=tcfg)
    out = {}
    for name, ids in test_sets.items():
        if not ids:
            continue
        stacks = [np.column_stack([fold_preds[m][1][name].traces[i]
                                   for m in modalities]) for i in ids]
        fused = apply_fusion(model, stacks)
        out[name] = {i: v for i, v in zip(ids, fused)}
    return out


def _value_cell(spec, target, modality, test_corpus, value) -> CellResult:
    return CellResult(representation=spec.representation,
                      feature_kind=spec.feature_kind, target=target,
                      modality=modality, strategy=spec.strategy,
                      test_corpus=test_corpus,
                      ccc=None if not np.isfinite(value) else float(value),
                      error=None if np.isfinite(value) else "undefined CCC")


def _na_cell(spec, target, modality, test_corpus, message) -> CellResult:
    return CellResult(representation=spec.representation,
                      feature_kind=spec.feature_kind, target=target,
                      modality=modality, strategy=spec.strategy,
                      test_corpus=test_corpus, ccc=None, error=message)


# ---------------------------------------------------------------------------
# strategies
# ---------------------------------------------------------------------------

def run_within(corpus: Corpus, spec: ExperimentSpec) -> ExperimentResult:
    """k-fold subject-independent CV inside one corpus."""
    spec.validate()
    if spec.strategy != "within" or spec.source_corpora != (corpus.corpus_id,):
        raise ConfigInvalid("spec does not describe a within run on this corpus")
    fold_of_subject = {f"{corpus.corpus_id}:{s}": f
                       for s, f in greedy_subject_folds(
                           corpus.subjects, spec.k, spec.seed).items()}
    by_fold = _sequence_ids_by_fold([corpus], fold_of_subject)
    plan = []
    for f in range(spec.k):
        val = (f + 1) % spec.k
        train_ids = [i for g in range(spec.k) if g not in (f, val)
                     for i in by_fold.get(g, [])]
        plan.append((train_ids, by_fold.get(val, []),
                     {corpus.corpus_id: by_fold.get(f, [])}))
    cells = _run_cell_grid(spec, {corpus.corpus_id: corpus},
                           fold_of_subject, plan)
    return ExperimentResult(cells=cells, meta=_meta(spec))


def run_cross(source: Corpus, test: Corpus, spec: ExperimentSpec) -> ExperimentResult:
    """Train on the full source corpus, evaluate on the other corpus."""
    spec.validate()
    if spec.strategy != "cross" or spec.source_corpora != (source.corpus_id,) \
            or spec.test_corpora != (test.corpus_id,):
        raise ConfigInvalid("spec does not describe this cross run")
    rng = np.random.default_rng(spec.seed)
    subjects = sorted(source.subjects)
    n_val = max(1, int(round(0.2 * len(subjects))))
    val_subjects = set(np.array(subjects)[
        rng.permutation(len(subjects))[:n_val]])
    fold_of_subject = {f"{source.corpus_id}:{s}": (0 if s in val_subjects else 1)
                       for s in subjects}
    fold_of_subject.update({f"{test.corpus_id}:{s}": 2 for s in test.subjects})
    by_fold = _sequence_ids_by_fold([source, test], fold_of_subject)
    plan = [(by_fold.get(1, []), by_fold.get(0, []),
             {test.corpus_id: by_fold.get(2, [])})]
    cells = _run_cell_grid(spec, {source.corpus_id: source,
                                  test.corpus_id: test},
                           fold_of_subject, plan)
    return ExperimentResult(cells=cells, meta=_meta(spec))


def run_mixed(corpus_a: Corpus, corpus_b: Corpus,
              spec: ExperimentSpec) -> ExperimentResult:
    """Pool both corpora, CV over pooled subjects, score per test corpus."""
    spec.validate()
    ids = (corpus_a.corpus_id, corpus_b.corpus_id)
    if spec.strategy != "mixed" or tuple(spec.source_corpora) != ids:
        raise ConfigInvalid("spec does not describe this mixed run")
    pooled = [f"{c.corpus_id}:{s}" for c in (corpus_a, corpus_b)
              for s in c.subjects]
    fold_of_subject = greedy_subject_folds(pooled, spec.k, spec.seed)
    by_fold = _sequence_ids_by_fold([corpus_a, corpus_b], fold_of_subject)
    plan = []
    for f in range(spec.k):
        val = (f + 1) % spec.k
        train_ids = [i for g in range(spec.k) if g not in (f, val)
                     for i in by_fold.get(g, [])]
        test_ids = by_fold.get(f, [])
        test_sets = {cid: [i for i in test_ids if i[0] == cid] for cid in ids}
        plan.append((train_ids, by_fold.get(val, []), test_sets))
    cells = _run_cell_grid(spec, {corpus_a.corpus_id: corpus_a,
                                  corpus_b.corpus_id: corpus_b},
                           fold_of_subject, plan)
    return ExperimentResult(cells=cells, meta=_meta(spec))


def run_experiment(spec: ExperimentSpec, corpora: dict) -> ExperimentResult:
    """Dispatch a spec to its strategy given ``corpus_id -> Corpus``."""
    spec.validate()
    if spec.strategy == "within":
        return run_within(corpora[spec.source_corpora[0]], spec)
    if spec.strategy == "cross":
        return run_cross(corpora[spec.source_corpora[0]],
                         corpora[spec.test_corpora[0]], spec)
    return run_mixed(corpora[spec.source_corpora[0]],
                     corpora[spec.source_corpora[1]], spec)


def _meta(spec: ExperimentSpec) -> dict:
    doc = spec.to_json()
    payload = json.dumps(doc, sort_keys=True).encode()
    return {"spec": doc, "seed": spec.seed,
            "config_hash": f"{zlib.crc32(payload):08x}"}


# ---------------------------------------------------------------------------
# table export
# ---------------------------------------------------------------------------

def _fmt_ccc(v) -> str:
    if v is None:
        return "NA"
    s = f"{v:.3f}"
    return s.replace("0.", ".", 1) if abs(v) < 1 else s


def result_tables(result: ExperimentResult):
    """Group cells into per-(representation, strategy, test corpus) tables.

    Each table maps (target, feature_kind) rows to modality columns and
    appends an Average row per feature kind; the average is NA when any of
    its cells is NA.
    """
    groups: dict = {}
    for c in result.cells:
        groups.setdefault((c.representation, c.strategy, c.test_corpus),
                          []).append(c)
    tables = {}
    for key, cells in sorted(groups.items()):
        targets = sorted({c.target for c in cells},
                         key=lambda t: (LABELS + DIMENSIONS).index(t))
        kinds = sorted({c.feature_kind for c in cells})
        modalities = [m for m in MODALITIES + (MULTIMODAL,)
                      if any(c.modality == m for c in cells)]
        by_cell = {(c.target, c.feature_kind, c.modality): c.ccc for c in cells}
        rows = []
        for target in targets:
            for kind in kinds:
                rows.append((target, kind,
                             [by_cell.get((target, kind, m)) for m in modalities]))
        for kind in kinds:
            col_vals = []
            for mi, m in enumerate(modalities):
                vals = [by_cell.get((t, kind, m)) for t in targets]
                col_vals.append(None if any(v is None for v in vals)
                                else float(np.mean(vals)))
            rows.append(("Average", kind, col_vals))
        tables[key] = {"modalities": modalities, "rows": rows}
    return tables


def export_results(result: ExperimentResult, out_dir) -> list:
    """Write results JSON plus one CSV and one Markdown table per group."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    result.save(out_dir / "results.json")
    written.append(out_dir / "results.json")
    for (rep, strategy, test_corpus), table in result_tables(result).items():
        stem = f"table_{rep}_{strategy}_{test_corpus}"
        mods = table["modalities"]
        csv_path = out_dir / f"{stem}.csv"
        with open(csv_path, "w") as fh:
            fh.write("target,feature_kind," + ",".join(mods) + "\n")
            for target, kind, vals in table["rows"]:
                fh.write(f"{target},{kind},"
                         + ",".join(_fmt_ccc(v) for v in vals) + "\n")
        written.append(csv_path)
        md_path = out_dir / f"{stem}.md"
        with open(md_path, "w") as fh:
            fh.write(f"### {rep} / {strategy} / tested on {test_corpus}\n\n")
            fh.write("| Target | Features | " + " | ".join(
                m.capitalize() for m in mods) + " |\n")
            fh.write("|---" * (len(mods) + 2) + "|\n")
            for target, kind, vals in table["rows"]:
                fh.write(f"| {target} | {kind} | "
                         + " | ".join(_fmt_ccc(v) for v in vals) + " |\n")
        written.append(md_path)
    return written

import json

import numpy as np
import pytest

from affectlab.corpus import DIMENSIONS
from affectlab.errors import ConfigInvalid
from affectlab.experiments import (
    ExperimentResult,
    ExperimentSpec,
    derive_seed,
    export_results,
    result_tables,
    run_cross,
    run_experiment,
    run_mixed,
    run_within,
)
from affectlab.synth import SynthConfig, generate_pair

FAST_TRAIN = {"max_epochs": 8, "patience": 3, "lr": 1e-2, "batch_size": 16}
DIMS_SMALL = {("text", "deep"): 4, ("audio", "deep"): 4,
              ("text", "expert"): 4}


def small_pair(**kw):
    base = dict(seed=42, n_subjects=6, n_sequences_per_subject=3,
                duration_mean_s=3.0, trace_rate_hz=4.0,
                annotator_noise_sd=0.2,
                modality_signal={"text": 0.9, "audio": 0.5, "video": 0.0},
                feature_dims=dict(DIMS_SMALL))
    base.update(kw)
    return generate_pair(SynthConfig(**base))


def spec_within(corpus_id, representation="labels", targets=("happy",),
                modalities=("text", "audio"), **kw):
    return ExperimentSpec(
        representation=representation, targets=targets, strategy="within",
        source_corpora=(corpus_id,), test_corpora=(corpus_id,),
        modalities=modalities, k=3, seed=7, train_overrides=dict(FAST_TRAIN),
        **kw)


class TestSpecValidation:
    def test_within_requires_same_corpus(self):
        with pytest.raises(ConfigInvalid):
            ExperimentSpec(representation="labels", targets=("happy",),
                           strategy="within", source_corpora=("a",),
                           test_corpora=("b",)).validate()

    def test_cross_requires_different_corpora(self):
        with pytest.raises(ConfigInvalid):
            ExperimentSpec(representation="labels", targets=("happy",),
                           strategy="cross", source_corpora=("a",),
                           test_corpora=("a",)).validate()

    def test_bad_target_for_representation(self):
        with pytest.raises(ConfigInvalid):
            ExperimentSpec(representation="dim_summary", targets=("happy",),
                           strategy="within", source_corpora=("a",),
                           test_corpora=("a",)).validate()

    def test_roundtrip_json(self):
        spec = spec_within("c")
        back = ExperimentSpec.from_json(spec.to_json())
        assert back == spec

    def test_derive_seed_stable(self):
        assert derive_seed(7, "labels", "happy", "text", "within", 0) == \
            derive_seed(7, "labels", "happy", "text", "within", 0)
        assert derive_seed(7, "a") != derive_seed(7, "b")


class TestWithin:
    def test_cells_present_and_signal_ordering(self):
        young, _ = small_pair()
        spec = spec_within(young.corpus_id, representation="dim_summary",
                           targets=("arousal", "coping"))
        result = run_within(young, spec)
        mods = {c.modality for c in result.cells}
        assert mods == {"text", "audio", "multimodal"}
        for target in spec.targets:
            txt = result.get(target, "text", "within", young.corpus_id).ccc
            aud = result.get(target, "audio", "within", young.corpus_id).ccc
            assert txt is not None and aud is not None
            assert txt > aud  # signal 0.9 vs 0.5

    def test_rerun_identical(self):
        young, _ = small_pair()
        spec = spec_within(young.corpus_id)
        a = run_within(young, spec)
        b = run_within(young, spec)
        assert json.dumps(a.to_json(), sort_keys=True) == \
            json.dumps(b.to_json(), sort_keys=True)

    def test_zero_signal_near_chance(self):
        young, _ = small_pair(
            modality_signal={"text": 0.0, "audio": 0.0, "video": 0.0},
            n_subjects=8, n_sequences_per_subject=4)
        spec = spec_within(young.corpus_id, targets=("happy",),
                           modalities=("text",), include_multimodal=False)
        result = run_within(young, spec)
        cell = result.get("happy", "text", "within", young.corpus_id)
        assert cell.ccc is None or abs(cell.ccc) < 0.35

    def test_continuous_expert_text_is_na(self):
        young, _ = small_pair()
        spec = ExperimentSpec(
            representation="dim_continuous", targets=("arousal",),
            strategy="within", source_corpora=(young.corpus_id,),
            test_corpora=(young.corpus_id,), modalities=("text",),
            feature_kind="expert", k=3, seed=1,
            train_overrides=dict(FAST_TRAIN))
        result = run_within(young, spec)
        cell = result.get("arousal", "text", "within", young.corpus_id)
        assert cell.ccc is None
        assert "sequence-level" in cell.error
        fused = result.get("arousal", "multimodal", "within", young.corpus_id)
        assert fused.ccc is None

    def test_continuous_deep_runs(self):
        young, _ = small_pair()
        spec = ExperimentSpec(
            representation="dim_continuous", targets=("arousal",),
            strategy="within", source_corpora=(young.corpus_id,),
            test_corpora=(young.corpus_id,), modalities=("text", "audio"),
            feature_kind="deep", k=3, seed=1,
            train_overrides={"max_epochs": 4, "patience": 2, "lr": 3e-3,
                             "batch_size": 8})
        result = run_within(young, spec)
        cell = result.get("arousal", "text", "within", young.corpus_id)
        assert cell.ccc is not None


class TestCrossAndMixed:
    def test_cross_both_directions(self):
        young, older = small_pair(label_map_shift=0.0)
        for src, dst in ((young, older), (older, young)):
            spec = ExperimentSpec(
                representation="labels", targets=("happy",),
                strategy="cross", source_corpora=(src.corpus_id,),
                test_corpora=(dst.corpus_id,), modalities=("text",),
                include_multimodal=False, seed=3,
                train_overrides=dict(FAST_TRAIN))
            result = run_cross(src, dst, spec)
            cell = result.get("happy", "text", "cross", dst.corpus_id)
            assert cell.ccc is not None

    def test_mixed_reports_both_corpora(self):
        young, older = small_pair()
        spec = ExperimentSpec(
            representation="labels", targets=("happy",), strategy="mixed",
            source_corpora=(young.corpus_id, older.corpus_id),
            test_corpora=(young.corpus_id, older.corpus_id),
            modalities=("text",), include_multimodal=False, k=3, seed=5,
            train_overrides=dict(FAST_TRAIN))
        result = run_mixed(young, older, spec)
        for cid in (young.corpus_id, older.corpus_id):
            assert result.get("happy", "text", "mixed", cid).ccc is not None

    def test_dispatch(self):
        young, older = small_pair()
        corpora = {young.corpus_id: young, older.corpus_id: older}
        spec = spec_within(young.corpus_id)
        result = run_experiment(spec, corpora)
        assert result.meta["spec"]["strategy"] == "within"


class TestExport:
    def _result(self):
        cells = []
        from affectlab.experiments import CellResult
        for target in ("arousal", "coping"):
            for kind in ("expert", "deep"):
                for mod, v in (("text", 0.252), ("audio", 0.1),
                               ("video", None), ("multimodal", 0.3)):
                    cells.append(CellResult(
                        representation="dim_summary", feature_kind=kind,
                        target=target, modality=mod, strategy="within",
                        test_corpus="young", ccc=v,
                        error=None if v is not None else "undefined CCC"))
        return ExperimentResult(cells=cells, meta={"seed": 0})

    def test_average_row_and_na(self, tmp_path):
        result = self._result()
        tables = result_tables(result)
        table = tables[("dim_summary", "within", "young")]
        avg_rows = [r for r in table["rows"] if r[0] == "Average"]
        assert len(avg_rows) == 2
        mods = table["modalities"]
        deep_avg = next(r for r in avg_rows if r[1] == "deep")
        assert deep_avg[2][mods.index("text")] == pytest.approx(0.252)
        assert deep_avg[2][mods.index("video")] is None

    def test_files_rendered(self, tmp_path):
        result = self._result()
        files = export_results(result, tmp_path)
        csv_text = (tmp_path / "table_dim_summary_within_young.csv").read_text()
        assert ".252" in csv_text
        assert "NA" in csv_text
        md_text = (tmp_path / "table_dim_summary_within_young.md").read_text()
        assert "| Average |" in md_text
        assert (tmp_path / "results.json").exists()

    def test_roundtrip_json(self, tmp_path):
        result = self._result()
        result.save(tmp_path / "r.json")
        back = ExperimentResult.load(tmp_path / "r.json")
        assert len(back.cells) == len(result.cells)
        assert back.get("arousal", "text", "within", "young").ccc == \
            pytest.approx(0.252)

    def test_export_deterministic(self, tmp_path):
        result = self._result()
        export_results(result, tmp_path / "a")
        export_results(result, tmp_path / "b")
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

import numpy as np
import pytest

from affectlab.agreement import (
    DimAgreement,
    dimension_agreement,
    intensity_agreement,
    label_dimension_correlations,
    label_frequencies,
    label_stats_table,
    presence_agreement,
)
from affectlab.corpus import (
    DIMENSIONS,
    LABELS,
    AnnotationBundle,
    Corpus,
    Sequence,
    TimeSeries,
    validate_corpus,
)
from affectlab.errors import NoValidPairs
from affectlab.synth import SynthConfig, generate_pair

ANNS = tuple(f"a{i}" for i in range(6))
RATE = 5.0


def build_corpus(intensity_fn, summary_fn=None, trace_fn=None, n_seq=40,
                 trace_len=6, n_annotators=6):
    """Assemble an in-memory corpus from per-(seq, annotator) callbacks.

    ``intensity_fn(seq_idx, ann_idx, label) -> [0,1]``;
    ``summary_fn(seq_idx, ann_idx, dim) -> [-1,1]``;
    ``trace_fn(seq_idx, ann_idx, dim) -> array``.
    """
    anns = ANNS[:n_annotators]
    summary_fn = summary_fn or (lambda s, a, d: 0.1 * ((s + a) % 5 - 2) / 2)
    trace_fn = trace_fn or (lambda s, a, d: np.linspace(-0.5, 0.5, trace_len)
                            + 0.01 * a)
    sequences = []
    for si in range(n_seq):
        label_intensity = {}
        dim_summary = {}
        dim_trace = {}
        for ai, ann in enumerate(anns):
            for lab in LABELS:
                label_intensity[(ann, lab)] = float(intensity_fn(si, ai, lab))
            for dim in DIMENSIONS:
                dim_summary[(ann, dim)] = float(summary_fn(si, ai, dim))
                dim_trace[(ann, dim)] = TimeSeries(
                    sample_rate_hz=RATE,
                    values=np.clip(np.asarray(trace_fn(si, ai, dim)), -1, 1))
        subj = f"subj{si % 4}"
        sequences.append(Sequence(
            sequence_id=f"seq{si:03d}", subject_id=subj,
            session_id=f"{subj}-sess{si % 2}",
            duration_s=(trace_len - 1) / RATE,
            features={},
            annotations=AnnotationBundle(annotator_ids=anns,
                                         label_intensity=label_intensity,
                                         dim_summary=dim_summary,
                                         dim_trace=dim_trace)))
    return validate_corpus(Corpus(
        corpus_id="fixture", age_group="young", trace_rate_hz=RATE,
        subjects=tuple(sorted({s.subject_id for s in sequences})),
        sequences=tuple(sequences), annotator_ids=anns))


class TestLabelFrequencies:
    def test_three_of_six_counts_to_ge3(self):
        corpus = build_corpus(
            lambda s, a, lab: 0.5 if lab == "happy" and a < 3 else 0.0,
            n_seq=10)
        freqs = label_frequencies(corpus)
        assert freqs["happy"] == (10, 10, 10)

    def test_never_marked_label_is_zero(self):
        corpus = build_corpus(lambda s, a, lab: 0.0, n_seq=8)
        assert label_frequencies(corpus)["sad"] == (0, 0, 0)

    def test_matches_bruteforce_recount(self):
        rng = np.random.default_rng(4)
        marks = rng.random((30, 6, len(LABELS))) < 0.3
        corpus = build_corpus(
            lambda s, a, lab: 0.7 if marks[s, a, LABELS.index(lab)] else 0.0,
            n_seq=30)
        freqs = label_frequencies(corpus)
        for li, lab in enumerate(LABELS):
            for k in (1, 2, 3):
                expected = sum(int(marks[s, :, li].sum() >= k)
                               for s in range(30))
                assert freqs[lab][k - 1] == expected

    def test_monotone_ge_counts(self):
        rng = np.random.default_rng(9)
        vals = rng.random((25, 6, len(LABELS)))
        corpus = build_corpus(
            lambda s, a, lab: max(0.0, vals[s, a, LABELS.index(lab)] - 0.5) * 2,
            n_seq=25)
        for ge1, ge2, ge3 in label_frequencies(corpus).values():
            assert ge1 >= ge2 >= ge3


class TestPresenceAgreement:
    def test_full_agreement(self):
        corpus = build_corpus(
            lambda s, a, lab: 0.8 if (lab == "happy" and s % 2 == 0) else 0.0,
            n_seq=20)
        assert presence_agreement(corpus, "happy") == pytest.approx(1.0)

    def test_independent_coinflips_near_chance(self):
        rng = np.random.default_rng(77)
        flips = rng.random((1000, 6)) < 0.5
        corpus = build_corpus(
            lambda s, a, lab: 0.6 if (lab == "angry" and flips[s, a]) else 0.0,
            n_seq=1000)
        assert presence_agreement(corpus, "angry") == pytest.approx(0.5, abs=0.05)

    def test_never_present_raises(self):
        corpus = build_corpus(lambda s, a, lab: 0.0, n_seq=10)
        with pytest.raises(NoValidPairs):
            presence_agreement(corpus, "sad")

    def test_annotator_relabeling_symmetry(self):
        rng = np.random.default_rng(12)
        flips = rng.random((60, 6)) < 0.4
        perm = [3, 0, 5, 1, 4, 2]
        c1 = build_corpus(
            lambda s, a, lab: 0.5 if (lab == "proud" and flips[s, a]) else 0.0,
            n_seq=60)
        c2 = build_corpus(
            lambda s, a, lab: 0.5 if (lab == "proud" and flips[s, perm[a]])
            else 0.0, n_seq=60)
        assert presence_agreement(c1, "proud") == pytest.approx(
            presence_agreement(c2, "proud"), abs=1e-12)


class TestIntensityAgreement:
    def test_identical_annotators(self):
        rng = np.random.default_rng(5)
        vals = rng.random(50)
        corpus = build_corpus(
            lambda s, a, lab: vals[s] if lab == "happy" else 0.0, n_seq=50)
        assert intensity_agreement(corpus, "happy") == pytest.approx(1.0)

    def test_constant_offset_pair_contributes_one(self):
        rng = np.random.default_rng(6)
        vals = rng.uniform(0.1, 0.6, size=40)
        corpus = build_corpus(
            lambda s, a, lab: (vals[s] + 0.1 * (a == 1)) if lab == "happy"
            else 0.0, n_seq=40, n_annotators=2)
        assert intensity_agreement(corpus, "happy") == pytest.approx(1.0)

    def test_independent_uniform_near_zero(self):
        rng = np.random.default_rng(8)
        vals = rng.random((1000, 6))
        corpus = build_corpus(
            lambda s, a, lab: vals[s, a] if lab == "curious" else 0.0,
            n_seq=1000)
        assert intensity_agreement(corpus, "curious") == pytest.approx(0.0, abs=0.05)

    def test_vs_rest_method(self):
        rng = np.random.default_rng(15)
        vals = rng.random(30)
        corpus = build_corpus(
            lambda s, a, lab: vals[s] if lab == "happy" else 0.0, n_seq=30)
        assert intensity_agreement(corpus, "happy", method="vs_rest") == \
            pytest.approx(1.0)


class TestDimensionAgreement:
    def test_identical_traces(self):
        base = np.sin(np.linspace(0, 3, 10)) * 0.5
        corpus = build_corpus(lambda s, a, lab: 0.0,
                              trace_fn=lambda s, a, d: base + 0.001 * s % 0.01,
                              n_seq=12, trace_len=10)
        got = dimension_agreement(corpus, "arousal", "sequence", "continuous")
        assert got.mean_pcc == pytest.approx(1.0)
        assert got.sd_pcc == pytest.approx(0.0, abs=1e-12)

    def test_snr_calibrated_to_half(self):
        # common signal + independent noise with var ratio 1:1 -> pair PCC 0.5
        rng = np.random.default_rng(3)
        T = 400
        signal = {s: rng.normal(size=T) * 0.2 for s in range(30)}
        noise = {(s, a): rng.normal(size=T) * 0.2
                 for s in range(30) for a in range(6)}
        corpus = build_corpus(
            lambda s, a, lab: 0.0,
            trace_fn=lambda s, a, d: signal[s] + noise[(s, a)],
            n_seq=30, trace_len=T)
        got = dimension_agreement(corpus, "coping", "sequence", "continuous")
        assert got.mean_pcc == pytest.approx(0.5, abs=0.05)

    def test_tuned_generator_reproduces_target_agreement(self):
        # generator calibrated so pairwise trace PCC ~ 0.566:
        # signal var (trace_scale*q)^2 vs noise var sigma^2 with
        # sigma = trace_scale*q*sqrt((1-p)/p), p = 0.566
        p_target = 0.566
        trace_scale, q = 0.4, 0.9
        sigma = trace_scale * q * np.sqrt((1 - p_target) / p_target)
        cfg = SynthConfig(seed=31, n_subjects=8, n_sequences_per_subject=6,
                          duration_mean_s=30.0, trace_rate_hz=10.0,
                          annotator_noise_sd=sigma, dim_signal=q,
                          feature_dims={("text", "deep"): 3})
        young, _ = generate_pair(cfg)
        got = dimension_agreement(young, "goal_conduciveness", "sequence",
                                  "continuous")
        assert got.mean_pcc == pytest.approx(p_target, abs=0.05)

    def test_session_granularity_concatenates(self):
        rng = np.random.default_rng(44)
        T = 50
        sig = {s: rng.normal(size=T) * 0.3 for s in range(20)}
        corpus = build_corpus(
            lambda s, a, lab: 0.0,
            trace_fn=lambda s, a, d: sig[s] + rng.normal(size=T) * 0.1,
            n_seq=20, trace_len=T)
        seq_level = dimension_agreement(corpus, "novelty", "sequence",
                                        "continuous")
        ses_level = dimension_agreement(corpus, "novelty", "session",
                                        "continuous")
        assert ses_level.n_units == len(corpus.sessions())
        assert seq_level.n_units == len(corpus.sequences)

    def test_summary_forms(self):
        rng = np.random.default_rng(21)
        base = rng.normal(size=(100, len(DIMENSIONS))) * 0.3
        corpus = build_corpus(
            lambda s, a, lab: 0.0,
            summary_fn=lambda s, a, d: float(np.clip(
                base[s, DIMENSIONS.index(d)] + rng.normal() * 0.1, -1, 1)),
            n_seq=100)
        seq = dimension_agreement(corpus, "arousal", "sequence", "summary")
        ses = dimension_agreement(corpus, "arousal", "session", "summary")
        assert 0.5 < seq.mean_pcc <= 1.0
        assert seq.n_units == len(corpus.sessions())
        assert ses.n_units == 15  # C(6,2) annotator pairs


class TestLabelDimCorrelations:
    def test_affine_coupling_detected_with_correct_sign(self):
        rng = np.random.default_rng(2)
        intens = rng.uniform(0.05, 1.0, size=(120, 6))
        corpus = build_corpus(
            lambda s, a, lab: intens[s, a] if lab == "surprised" else 0.0,
            summary_fn=lambda s, a, d: float(np.clip(
                0.9 * intens[s, a] - 0.4 if d == "novelty"
                else rng.normal() * 0.2, -1, 1)),
            n_seq=120)
        corr = label_dimension_correlations(corpus, alpha=0.05)
        assert corr.entries[("surprised", "novelty")] is not None
        assert corr.entries[("surprised", "novelty")] > 0.5

    def test_single_annotator_correlation_is_null(self):
        rng = np.random.default_rng(14)
        intens = rng.uniform(0.05, 1.0, size=(150, 6))

        def summary(s, a, d):
            if d == "coping" and a == 0:
                return float(np.clip(0.9 * intens[s, 0] - 0.4, -1, 1))
            return float(np.clip(rng.normal() * 0.15, -1, 1))

        corpus = build_corpus(
            lambda s, a, lab: intens[s, a] if lab == "guilty" else 0.0,
            summary_fn=summary, n_seq=150)
        corr = label_dimension_correlations(corpus, alpha=0.05)
        assert corr.entries[("guilty", "coping")] is None

    def test_generator_surprise_novelty_coupling(self):
        cfg = SynthConfig(seed=17, n_subjects=12, n_sequences_per_subject=10,
                          duration_mean_s=6.0, trace_rate_hz=5.0,
                          annotator_noise_sd=0.15, label_signal=0.85,
                          feature_dims={("text", "deep"): 3})
        young, _ = generate_pair(cfg)
        corr = label_dimension_correlations(young, alpha=0.05)
        got = corr.entries[("surprised", "novelty")]
        assert got is not None and got > 0

    def test_invariant_to_positive_affine_summary_rescale(self):
        rng = np.random.default_rng(19)
        intens = rng.uniform(0.05, 1.0, size=(80, 6))
        summ = rng.normal(size=(80, 6, len(DIMENSIONS))) * 0.3
        summ[:, :, 1] = 0.8 * intens - 0.3

        def mk(scale, shift):
            return build_corpus(
                lambda s, a, lab: intens[s, a] if lab == "happy" else 0.0,
                summary_fn=lambda s, a, d: float(np.clip(
                    scale * summ[s, a, DIMENSIONS.index(d)] + shift, -1, 1)),
                n_seq=80)

        c1 = label_dimension_correlations(mk(1.0, 0.0)).entries
        c2 = label_dimension_correlations(mk(0.5, 0.1)).entries
        for key in c1:
            if c1[key] is None:
                assert c2[key] is None
            else:
                assert c2[key] == pytest.approx(c1[key], abs=1e-9)


def test_label_stats_table_shape():
    rng = np.random.default_rng(25)
    vals = rng.random((60, 6, len(LABELS)))
    corpus = build_corpus(
        lambda s, a, lab: max(0.0, vals[s, a, LABELS.index(lab)] - 0.4),
        n_seq=60)
    stats = label_stats_table(corpus)
    assert len(stats) == 23
    by_label = {s.label: s for s in stats}
    for s in stats:
        assert s.freq_ge1 >= s.freq_ge2 >= s.freq_ge3
    assert set(by_label) == set(LABELS)

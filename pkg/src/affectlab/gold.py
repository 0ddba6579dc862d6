"""Gold standards: fuse multi-annotator annotations into training targets.

Scalar targets (label intensities, dimension summaries) are fused by the
plain mean of the annotator values. Time-continuous dimension traces are
fused with an evaluator-weighted estimate: each annotator is weighted by
the correlation of their trace with the mean of the remaining annotators,
negative correlations clipped to zero, weights normalized to sum to one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import TimeSeries
from .errors import EmptyOverlap
from .metrics import pcc


@dataclass(frozen=True)
class GoldStandard:
    """Fused target plus the ingredients it was computed from."""

    task: tuple                 # ("label_intensity", label) etc.
    per_annotator: tuple        # K floats or K TimeSeries
    fused: object               # float or TimeSeries
    ewe_weights: np.ndarray | None = None


def mean_gold(values) -> float:
    """Arithmetic mean of per-annotator scalar targets."""
    values = np.asarray(values, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one annotator value")
    return float(values.mean())


def align_traces(traces, target_rate_hz: float) -> list:
    """Resample traces to a shared rate/length by linear interpolation.

    The common span is the intersection of the traces' spans (all start at
    t=0, so it is [0, min duration]). Resampled values are clipped to
    [-1, 1]. Raises :class:`EmptyOverlap` when the common span holds fewer
    than two samples at the target rate.
    """
    if target_rate_hz <= 0:
        raise ValueError("target_rate_hz must be > 0")
    traces = list(traces)
    span = min(tr.duration_s for tr in traces)
    n_out = int(np.floor(span * target_rate_hz + 1e-9)) + 1
    if n_out < 2:
        raise EmptyOverlap(
            f"common span {span:.4f}s holds < 2 samples at {target_rate_hz} Hz")
    t_out = np.arange(n_out) / target_rate_hz
    out = []
    for tr in traces:
        if tr.sample_rate_hz == target_rate_hz and tr.values.size == n_out:
            out.append(tr)
            continue
        t_in = np.arange(tr.values.size) / tr.sample_rate_hz
        vals = np.interp(t_out, t_in, tr.values)
        out.append(TimeSeries(sample_rate_hz=target_rate_hz,
                              values=np.clip(vals, -1.0, 1.0)))
    return out


def ewe_weights(traces) -> np.ndarray:
    """Reliability weights: correlation of each trace with the others' mean.

    Negative or undefined correlations are clipped to 0. If every
    correlation clips (no annotator agrees with anyone), falls back to
    uniform weights with a warning. Traces must already be aligned.
    """
    mat = np.stack([np.asarray(tr.values if isinstance(tr, TimeSeries) else tr,
                               dtype=float) for tr in traces])
    K = mat.shape[0]
    if K < 2:
        raise ValueError("EWE needs at least 2 annotators")
    if len({row.size for row in mat}) != 1:
        raise ValueError("traces must share a common length; align first")
    r = np.zeros(K)
    total = mat.sum(axis=0)
    for k in range(K):
        rest_mean = (total - mat[k]) / (K - 1)
        res = pcc(mat[k], rest_mean)
        r[k] = res.r if res.defined else 0.0
    r = np.clip(r, 0.0, None)
    if r.sum() == 0.0:
        warnings.warn("all annotator correlations clipped; uniform EWE weights")
        return np.full(K, 1.0 / K)
    return r / r.sum()


def ewe_gold(traces) -> TimeSeries:
    """Pointwise weighted fusion of aligned traces with EWE weights."""
    traces = list(traces)
    w = ewe_weights(traces)
    mat = np.stack([tr.values for tr in traces])
    fused = w @ mat
    return TimeSeries(sample_rate_hz=traces[0].sample_rate_hz,
                      values=np.clip(fused, -1.0, 1.0))


def gold_for_labels(bundle, label: str) -> GoldStandard:
    vals = bundle.intensities(label)
    return GoldStandard(task=("label_intensity", label),
                        per_annotator=tuple(float(v) for v in vals),
                        fused=mean_gold(vals))


def gold_for_summary(bundle, dimension: str) -> GoldStandard:
    vals = bundle.summaries(dimension)
    return GoldStandard(task=("dim_summary", dimension),
                        per_annotator=tuple(float(v) for v in vals),
                        fused=mean_gold(vals))


def gold_for_trace(bundle, dimension: str, target_rate_hz: float) -> GoldStandard:
    aligned = align_traces(bundle.traces(dimension), target_rate_hz)
    w = ewe_weights(aligned)
    mat = np.stack([tr.values for tr in aligned])
    fused = TimeSeries(sample_rate_hz=target_rate_hz,
                       values=np.clip(w @ mat, -1.0, 1.0))
    return GoldStandard(task=("dim_continuous", dimension),
                        per_annotator=tuple(aligned),
                        fused=fused, ewe_weights=w)

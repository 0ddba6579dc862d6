"""Decision-level multimodal fusion of unimodal predictions.

Static targets (label intensities, dimension summaries) are fused with an
ordinary least squares regression (with intercept) over the per-sequence
unimodal predictions. Time-continuous targets are fused with a small
single-layer GRU acting as a temporal weighting of the per-frame unimodal
prediction traces.

Fusion models are always fitted on training-fold predictions; the fit
functions never see test-fold targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .metrics import OlsFit, ols_fit
from .nets import Checkpoint, GruConfig, TrainConfig, predict_traces, train_gru

FUSION_FORMAT = "affectlab-fusion-v1"
DEFAULT_CONTINUOUS_HIDDEN = 3


@dataclass
class FusionModel:
    kind: str                      # "static" | "continuous"
    n_inputs: int
    ols: OlsFit | None = None
    checkpoint: Checkpoint | None = None

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {"format_tag": FUSION_FORMAT, "kind": self.kind,
               "n_inputs": self.n_inputs}
        if self.kind == "static":
            doc["coef"] = self.ols.coef.tolist()
            doc["intercept"] = self.ols.intercept
            doc["ill_conditioned"] = self.ols.ill_conditioned
        else:
            doc["checkpoint"] = self.checkpoint.to_json()
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")

    @staticmethod
    def load(path) -> "FusionModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_tag") != FUSION_FORMAT:
            raise ValueError(f"unsupported fusion format {doc.get('format_tag')!r}")
        if doc["kind"] == "static":
            fit = OlsFit(coef=np.array(doc["coef"], dtype=float),
                         intercept=doc["intercept"],
                         ill_conditioned=doc["ill_conditioned"])
            return FusionModel(kind="static", n_inputs=doc["n_inputs"], ols=fit)
        ck = Checkpoint(
            model_type="gru", config=doc["checkpoint"]["config"],
            params={k: np.array(v, dtype=float)
                    for k, v in doc["checkpoint"]["params"].items()},
            train_log=doc["checkpoint"]["train_log"],
            best_epoch=doc["checkpoint"]["best_epoch"],
            seed=doc["checkpoint"]["seed"])
        return FusionModel(kind="continuous", n_inputs=doc["n_inputs"],
                           checkpoint=ck)


def fit_static_fusion(preds: np.ndarray, targets: np.ndarray) -> FusionModel:
    """OLS weights (plus intercept) over per-sequence unimodal predictions.

    ``preds`` is (N, M) with one column per modality; rank deficiency (for
    example all-constant predictions) engages the ridge fallback and is
    flagged on the returned model.
    """
    preds = np.atleast_2d(np.asarray(preds, dtype=float))
    targets = np.asarray(targets, dtype=float)
    fit = ols_fit(preds, targets, fit_intercept=True)
    return FusionModel(kind="static", n_inputs=preds.shape[1], ols=fit)


def fit_continuous_fusion(fit_seqs, stop_seqs=None,
                          tcfg: TrainConfig | None = None,
                          hidden_dim: int = DEFAULT_CONTINUOUS_HIDDEN) -> FusionModel:
    """Train the GRU weighting layer on (prediction-traces, target) pairs.

    ``fit_seqs`` holds ``(traces (T, M), target (T,))`` pairs from training
    folds; ``stop_seqs`` (same shape) drives early stopping and defaults to
    ``fit_seqs`` when not provided.
    """
    fit_seqs = [(np.atleast_2d(np.asarray(x, dtype=float)),
                 np.asarray(y, dtype=float)) for x, y in fit_seqs]
    n_inputs = fit_seqs[0][0].shape[1]
    cfg = GruConfig(input_dim=n_inputs, hidden_dim=hidden_dim, n_layers=1)
    tcfg = tcfg or TrainConfig.continuous()
    stop = fit_seqs if stop_seqs is None else [
        (np.atleast_2d(np.asarray(x, dtype=float)),
         np.asarray(y, dtype=float)) for x, y in stop_seqs]
    ck = train_gru(cfg, tcfg, fit_seqs, stop)
    return FusionModel(kind="continuous", n_inputs=n_inputs, checkpoint=ck)


def apply_fusion(model: FusionModel, preds):
    """Apply a fitted fusion model to unimodal predictions.

    Static: ``preds`` (N, M) -> (N,). Continuous: a list of (T_i, M)
    prediction-trace stacks -> list of (T_i,) fused traces.
    """
    if model.kind == "static":
        preds = np.atleast_2d(np.asarray(preds, dtype=float))
        if preds.shape[1] != model.n_inputs:
            raise ShapeMismatch(f"expected {model.n_inputs} prediction columns, "
                                f"got {preds.shape[1]}")
        return model.ols.predict(preds)
    traces = [np.atleast_2d(np.asarray(p, dtype=float)) for p in preds]
    for tr in traces:
        if tr.shape[1] != model.n_inputs:
            raise ShapeMismatch(f"expected {model.n_inputs} prediction columns, "
                                f"got {tr.shape[1]}")
    cfg = model.checkpoint.gru_config()
    return predict_traces(cfg, model.checkpoint.params, traces)

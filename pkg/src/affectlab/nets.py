"""From-scratch differentiable regressors and their training loop.

Two model families, both in plain numpy (float64 throughout):

* an MLP with one rectified hidden layer of half the input size, used for
  static targets (label intensities, dimension summaries), predicting all
  annotators at once;
* a stacked GRU with a per-frame linear head, used for time-continuous
  dimension targets.

Gradients are hand-derived reverse mode and verified against central
finite differences in the test suite. Training uses Adam with MSE loss,
gradient accumulation over a configurable number of samples per step,
and early stopping on validation CCC. A run is a pure function of
(data, config, seed): repeated runs are bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import Divergence, NonFiniteLoss, ShapeMismatch
from .metrics import ccc

CHECKPOINT_FORMAT = "affectlab-checkpoint-v1"


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dim: int
    output_dim: int

    def __post_init__(self):
        if self.hidden_dim < 1 or self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("all MLP dims must be >= 1")


def mlp_config_for(input_dim: int, n_outputs: int = 6) -> MlpConfig:
    """Hidden layer is half the input size (at least one unit)."""
    return MlpConfig(input_dim=input_dim,
                     hidden_dim=max(1, input_dim // 2),
                     output_dim=n_outputs)


@dataclass(frozen=True)
class GruConfig:
    input_dim: int
    hidden_dim: int
    n_layers: int = 3
    output_dim: int = 1

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.n_layers,
               self.output_dim) < 1:
            raise ValueError("all GRU dims must be >= 1")


def gru_config_for(input_dim: int, kind: str) -> GruConfig:
    """Hidden size mirrors the input for deep features, 256 for expert."""
    hidden = input_dim if kind == "deep" else 256
    return GruConfig(input_dim=input_dim, hidden_dim=hidden, n_layers=3)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 10          # samples accumulated per Adam step
    max_epochs: int = 50
    patience: int = 5
    min_delta: float = 1e-3       # validation CCC gain that counts as progress
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not self.patience < self.max_epochs:
            raise ValueError("patience must be < max_epochs")

    @staticmethod
    def static(seed: int = 0, **kw) -> "TrainConfig":
        return TrainConfig(lr=kw.pop("lr", 1e-3),
                           batch_size=kw.pop("batch_size", 10), seed=seed, **kw)

    @staticmethod
    def continuous(seed: int = 0, **kw) -> "TrainConfig":
        return TrainConfig(lr=kw.pop("lr", 1e-4),
                           batch_size=kw.pop("batch_size", 1), seed=seed, **kw)


# ---------------------------------------------------------------------------
# parameter initialization
# ---------------------------------------------------------------------------

def _uniform(rng, shape, fan_in):
    a = np.sqrt(1.0 / fan_in)
    return rng.uniform(-a, a, size=shape)


def init_mlp(cfg: MlpConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "W1": _uniform(rng, (cfg.hidden_dim, cfg.input_dim), cfg.input_dim),
        "b1": np.zeros(cfg.hidden_dim),
        "W2": _uniform(rng, (cfg.output_dim, cfg.hidden_dim), cfg.hidden_dim),
        "b2": np.zeros(cfg.output_dim),
    }


def init_gru(cfg: GruConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    params = {}
    d_in = cfg.input_dim
    for layer in range(cfg.n_layers):
        for gate in ("z", "r", "h"):
            params[f"W_{gate}{layer}"] = _uniform(
                rng, (cfg.hidden_dim, d_in), d_in)
            params[f"U_{gate}{layer}"] = _uniform(
                rng, (cfg.hidden_dim, cfg.hidden_dim), cfg.hidden_dim)
            params[f"b_{gate}{layer}"] = np.zeros(cfg.hidden_dim)
        d_in = cfg.hidden_dim
    params["W_out"] = _uniform(rng, (cfg.output_dim, cfg.hidden_dim),
                               cfg.hidden_dim)
    params["b_out"] = np.zeros(cfg.output_dim)
    return params


# ---------------------------------------------------------------------------
# MLP forward / backward
# ---------------------------------------------------------------------------

def mlp_forward(cfg: MlpConfig, params: dict, x: np.ndarray) -> np.ndarray:
    """``W2 @ relu(W1 @ x + b1) + b2`` for one vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != cfg.input_dim:
        raise ShapeMismatch(f"expected input dim {cfg.input_dim}, got {X.shape[1]}")
    hidden = np.maximum(X @ params["W1"].T + params["b1"], 0.0)
    out = hidden @ params["W2"].T + params["b2"]
    return out[0] if single else out


def mlp_loss_and_grad(cfg: MlpConfig, params: dict, X: np.ndarray,
                      Y: np.ndarray):
    """MSE (mean over samples and outputs) and its exact gradients."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape != (X.shape[0], cfg.output_dim):
        raise ShapeMismatch(f"target shape {Y.shape} does not match "
                            f"({X.shape[0]}, {cfg.output_dim})")
    act = X @ params["W1"].T + params["b1"]
    hidden = np.maximum(act, 0.0)
    pred = hidden @ params["W2"].T + params["b2"]
    diff = pred - Y
    loss = float(np.mean(diff ** 2))
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    d_pred = 2.0 * diff / diff.size
    d_hidden = d_pred @ params["W2"]
    d_act = d_hidden * (act > 0)
    grads = {
        "W2": d_pred.T @ hidden,
        "b2": d_pred.sum(axis=0),
        "W1": d_act.T @ X,
        "b1": d_act.sum(axis=0),
    }
    return loss, grads


# ---------------------------------------------------------------------------
# GRU forward / backward (batched over sequences, masked for ragged lengths)
# ---------------------------------------------------------------------------

def _gru_layer_forward(params, layer, X):
    """Run one GRU layer over X (B, T, D_in); returns hidden states and cache.

    Gate equations per time step (h_0 = 0):
      z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
      r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
      hcand_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
      h_t = (1 - z_t) * h_{t-1} + z_t * hcand_t
    """
    W_z, U_z, b_z = (params[f"W_z{layer}"], params[f"U_z{layer}"],
                     params[f"b_z{layer}"])
    W_r, U_r, b_r = (params[f"W_r{layer}"], params[f"U_r{layer}"],
                     params[f"b_r{layer}"])
    W_h, U_h, b_h = (params[f"W_h{layer}"], params[f"U_h{layer}"],
                     params[f"b_h{layer}"])
    B, T, _ = X.shape
    H = b_z.size
    h = np.zeros((B, H))
    Hs = np.empty((B, T, H))
    Zs = np.empty((B, T, H))
    Rs = np.empty((B, T, H))
    Cs = np.empty((B, T, H))
    # precompute the input contributions for all timesteps at once
    in_z = X @ W_z.T + b_z
    in_r = X @ W_r.T + b_r
    in_h = X @ W_h.T + b_h
    for t in range(T):
        z = _sigmoid(in_z[:, t] + h @ U_z.T)
        r = _sigmoid(in_r[:, t] + h @ U_r.T)
        c = np.tanh(in_h[:, t] + (r * h) @ U_h.T)
        h = (1.0 - z) * h + z * c
        Zs[:, t], Rs[:, t], Cs[:, t], Hs[:, t] = z, r, c, h
    return Hs, (X, Zs, Rs, Cs, Hs)


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def _gru_layer_backward(params, layer, cache, dHs):
    """Backprop one layer; returns (dX, grads-for-this-layer)."""
    X, Zs, Rs, Cs, Hs = cache
    U_z = params[f"U_z{layer}"]
    U_r = params[f"U_r{layer}"]
    U_h = params[f"U_h{layer}"]
    W_z = params[f"W_z{layer}"]
    W_r = params[f"W_r{layer}"]
    W_h = params[f"W_h{layer}"]
    B, T, H = Hs.shape
    dX = np.empty_like(X)
    dAz = np.empty((B, T, H))
    dAr = np.empty((B, T, H))
    dAc = np.empty((B, T, H))
    carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh = dHs[:, t] + carry
        z, r, c = Zs[:, t], Rs[:, t], Cs[:, t]
        h_prev = Hs[:, t - 1] if t > 0 else np.zeros((B, H))
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)
        dac = dc * (1.0 - c * c)
        drh = dac @ U_h
        dr = drh * h_prev
        dh_prev += drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dh_prev += daz @ U_z + dar @ U_r
        dAz[:, t], dAr[:, t], dAc[:, t] = daz, dar, dac
        dX[:, t] = daz @ W_z + dar @ W_r + dac @ W_h
        carry = dh_prev
    # parameter grads, accumulated over batch and time in one shot
    Hprev = np.concatenate([np.zeros((B, 1, H)), Hs[:, :-1]], axis=1)
    flat = lambda a: a.reshape(-1, a.shape[-1])
    grads = {
        f"W_z{layer}": flat(dAz).T @ flat(X),
        f"U_z{layer}": flat(dAz).T @ flat(Hprev),
        f"b_z{layer}": flat(dAz).sum(axis=0),
        f"W_r{layer}": flat(dAr).T @ flat(X),
        f"U_r{layer}": flat(dAr).T @ flat(Hprev),
        f"b_r{layer}": flat(dAr).sum(axis=0),
        f"W_h{layer}": flat(dAc).T @ flat(X),
        f"U_h{layer}": flat(dAc).T @ flat(Rs * Hprev),
        f"b_h{layer}": flat(dAc).sum(axis=0),
    }
    return dX, grads


def _gru_forward_batch(cfg: GruConfig, params: dict, X: np.ndarray):
    caches = []
    out = X
    for layer in range(cfg.n_layers):
        out, cache = _gru_layer_forward(params, layer, out)
        caches.append(cache)
    Y = out @ params["W_out"].T + params["b_out"]
    return Y, out, caches


def gru_forward(cfg: GruConfig, params: dict, frames: np.ndarray) -> np.ndarray:
    """Per-frame outputs for a single (T, D) sequence."""
    frames = np.atleast_2d(np.asarray(frames, dtype=float))
    if frames.shape[1] != cfg.input_dim:
        raise ShapeMismatch(
            f"expected input dim {cfg.input_dim}, got {frames.shape[1]}")
    Y, _, _ = _gru_forward_batch(cfg, params, frames[None])
    return Y[0, :, 0] if cfg.output_dim == 1 else Y[0]


def gru_loss_and_grad(cfg: GruConfig, params: dict, X: np.ndarray,
                      targets: np.ndarray, lengths=None):
    """Masked MSE over a padded batch and exact gradients.

    ``X`` is (B, T_max, D) zero-padded, ``targets`` (B, T_max) likewise,
    ``lengths`` the valid frame count per sequence. Each sequence
    contributes its frame-mean squared error; the batch loss is the mean
    of the per-sequence losses, exactly what accumulating single-sequence
    gradients would produce.
    """
    B, T, _ = X.shape
    if lengths is None:
        lengths = np.full(B, T, dtype=int)
    lengths = np.asarray(lengths, dtype=int)
    Y, top, caches = _gru_forward_batch(cfg, params, X)
    pred = Y[:, :, 0]
    mask = np.arange(T)[None, :] < lengths[:, None]
    diff = np.where(mask, pred - targets, 0.0)
    per_seq = (diff ** 2).sum(axis=1) / lengths
    loss = float(per_seq.mean())
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss = {loss}")
    d_pred = 2.0 * diff / lengths[:, None] / B
    dY = d_pred[:, :, None]
    flat = lambda a: a.reshape(-1, a.shape[-1])
    grads = {
        "W_out": flat(dY).T @ flat(top),
        "b_out": flat(dY).sum(axis=0),
    }
    dH = dY @ params["W_out"]
    for layer in range(cfg.n_layers - 1, -1, -1):
        dH, layer_grads = _gru_layer_backward(params, layer, caches[layer], dH)
        grads.update(layer_grads)
    return loss, grads


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    model_type: str               # "mlp" | "gru"
    config: dict
    params: dict
    train_log: list = field(default_factory=list)
    best_epoch: int = -1
    seed: int = 0
    format_tag: str = CHECKPOINT_FORMAT

    def mlp_config(self) -> MlpConfig:
        return MlpConfig(**self.config)

    def gru_config(self) -> GruConfig:
        return GruConfig(**self.config)

    def to_json(self) -> dict:
        return {
            "format_tag": self.format_tag,
            "model_type": self.model_type,
            "config": self.config,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "train_log": self.train_log,
            "params": {k: v.tolist() for k, v in sorted(self.params.items())},
        }

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @staticmethod
    def load(path) -> "Checkpoint":
        with open(path) as fh:
            raw = json.load(fh)
        if raw.get("format_tag") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format: "
                             f"{raw.get('format_tag')!r}")
        return Checkpoint(
            model_type=raw["model_type"],
            config=raw["config"],
            params={k: np.array(v, dtype=float)
                    for k, v in raw["params"].items()},
            train_log=raw["train_log"],
            best_epoch=raw["best_epoch"],
            seed=raw["seed"],
        )


# ---------------------------------------------------------------------------
# training loops
# ---------------------------------------------------------------------------

def train_mlp(cfg: MlpConfig, tcfg: TrainConfig, X_train, Y_train,
              X_val, val_gold) -> Checkpoint:
    """Train an MLP on static targets, early-stopped on validation CCC.

    ``Y_train`` holds per-annotator targets (N, K); validation predictions
    are averaged over the K outputs and scored with CCC against the fused
    ``val_gold`` scalars.
    """
    X_train = np.atleast_2d(np.asarray(X_train, dtype=float))
    Y_train = np.atleast_2d(np.asarray(Y_train, dtype=float))
    X_val = np.atleast_2d(np.asarray(X_val, dtype=float))
    val_gold = np.asarray(val_gold, dtype=float)
    params = init_mlp(cfg, tcfg.seed)
    opt = Adam(params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
    rng = np.random.default_rng(tcfg.seed + 1)
    n = X_train.shape[0]
    log = []
    best_score, best_epoch, stale = -np.inf, -1, 0
    best_params = {k: v.copy() for k, v in params.items()}
    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            try:
                loss, grads = mlp_loss_and_grad(cfg, params,
                                                X_train[idx], Y_train[idx])
            except NonFiniteLoss as e:
                raise Divergence(str(e), log=log) from e
            opt.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        val_pred = mlp_forward(cfg, params, X_val).mean(axis=1)
        val_ccc = ccc(val_pred, val_gold) if val_gold.size >= 2 else float("nan")
        log.append({"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1),
                    "val_ccc": val_ccc})
        if np.isfinite(val_ccc) and val_ccc > best_score + tcfg.min_delta:
            best_score, best_epoch, stale = val_ccc, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= tcfg.patience:
                break
    return Checkpoint(model_type="mlp", config=vars(cfg) | {},
                      params=best_params, train_log=log,
                      best_epoch=best_epoch, seed=tcfg.seed)


def _pad_batch(seqs):
    """Stack ragged (T_i, D) frame arrays into (B, T_max, D) plus lengths."""
    lengths = np.array([s.shape[0] for s in seqs], dtype=int)
    T = int(lengths.max())
    D = seqs[0].shape[1]
    X = np.zeros((len(seqs), T, D))
    for i, s in enumerate(seqs):
        X[i, :s.shape[0]] = s
    return X, lengths


def _pad_targets(targets, T):
    out = np.zeros((len(targets), T))
    for i, t in enumerate(targets):
        out[i, :t.size] = t
    return out


def train_gru(cfg: GruConfig, tcfg: TrainConfig, train_seqs, val_seqs) -> Checkpoint:
    """Train a GRU on (frames, target_trace) pairs.

    ``train_seqs``/``val_seqs`` are lists of ``(frames (T,D), trace (T,))``
    with frames already aligned to the trace timeline. Validation CCC is
    computed over the concatenation of all validation frames.
    """
    for frames, trace in list(train_seqs) + list(val_seqs):
        if frames.shape[0] != trace.size:
            raise ShapeMismatch("frames and target trace disagree in length")
    params = init_gru(cfg, tcfg.seed)
    opt = Adam(params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
    rng = np.random.default_rng(tcfg.seed + 1)
    n = len(train_seqs)
    log = []
    best_score, best_epoch, stale = -np.inf, -1, 0
    best_params = {k: v.copy() for k, v in params.items()}
    val_frames = [f for f, _ in val_seqs]
    val_concat_gold = np.concatenate([t for _, t in val_seqs]) if val_seqs else None
    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            X, lengths = _pad_batch([train_seqs[i][0] for i in idx])
            T = X.shape[1]
            tgt = _pad_targets([train_seqs[i][1] for i in idx], T)
            try:
                loss, grads = gru_loss_and_grad(cfg, params, X, tgt, lengths)
            except NonFiniteLoss as e:
                raise Divergence(str(e), log=log) from e
            opt.step(params, grads)
            epoch_loss += loss
            n_batches += 1
        if val_seqs:
            preds = predict_traces(cfg, params, val_frames)
            val_ccc = ccc(np.concatenate(preds), val_concat_gold)
        else:
            val_ccc = float("nan")
        log.append({"epoch": epoch, "train_loss": epoch_loss / max(n_batches, 1),
                    "val_ccc": val_ccc})
        if np.isfinite(val_ccc) and val_ccc > best_score + tcfg.min_delta:
            best_score, best_epoch, stale = val_ccc, epoch, 0
            best_params = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= tcfg.patience:
                break
    return Checkpoint(model_type="gru", config=vars(cfg) | {},
                      params=best_params, train_log=log,
                      best_epoch=best_epoch, seed=tcfg.seed)


def predict_traces(cfg: GruConfig, params: dict, frame_list) -> list:
    """Per-frame predictions for a list of (T_i, D) arrays, batched."""
    X, lengths = _pad_batch(list(frame_list))
    Y, _, _ = _gru_forward_batch(cfg, params, X)
    return [Y[i, :lengths[i], 0] for i in range(len(frame_list))]


def pool_frames(frames: np.ndarray) -> np.ndarray:
    """Static-task input: temporal mean of the frame features."""
    return np.asarray(frames, dtype=float).mean(axis=0)


def resample_trace(values: np.ndarray, src_rate: float, dst_rate: float,
                   n_out: int) -> np.ndarray:
    """Linear resample of per-frame outputs onto a target timeline."""
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return np.full(n_out, values[0])
    if src_rate <= 0:
        raise ValueError("src_rate must be > 0 for multi-frame outputs")
    t_src = np.arange(values.size) / src_rate
    t_dst = np.arange(n_out) / dst_rate
    return np.interp(t_dst, t_src, values)

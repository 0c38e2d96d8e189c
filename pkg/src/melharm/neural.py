"""Two-layer bidirectional LSTM harmonizer and its multitask variant.

Everything is plain numpy in float64 with hand-written backpropagation.
Sequences in a batch are right-padded; the backward-direction LSTM runs over
each sequence reversed within its own length, so padding never leaks into
valid positions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import FUNCTION_OF, NO_CHORD, NUM_CHORDS, ChordFunction, LeadSheet, melody_pcp_matrix

N_FUNCTIONS = 3
INPUT_DIM = 12
MAX_SLOTS = 64


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class NeuralConfig:
    hidden_size: int = 64
    layers: int = 2
    dropout: float = 0.2
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 10
    gamma: float = 1.5
    alpha_others: float = 1.8
    multitask: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.layers != 2:
            raise ValueError("the harmonizer uses exactly two recurrent layers")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.hidden_size < 1 or self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("hidden_size and batch_size must be positive, max_epochs >= 0")


# -- parameters ------------------------------------------------------------------

def param_shapes(hidden: int, multitask: bool) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for layer in range(2):
        in_dim = INPUT_DIM if layer == 0 else 2 * hidden
        for direction in ("fwd", "bwd"):
            shapes[f"l{layer}_{direction}_W"] = (in_dim + hidden, 4 * hidden)
            shapes[f"l{layer}_{direction}_b"] = (4 * hidden,)
    shapes["chord_W"] = (2 * hidden, NUM_CHORDS)
    shapes["chord_b"] = (NUM_CHORDS,)
    if multitask:
        shapes["func_W"] = (2 * hidden, N_FUNCTIONS)
        shapes["func_b"] = (N_FUNCTIONS,)
    return shapes


def init_params(config: NeuralConfig, rng: np.random.Generator, zero: bool = False) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan)) init; recurrent forget-gate bias starts at 1."""
    H = config.hidden_size
    params = {}
    for name, shape in param_shapes(H, config.multitask).items():
        if zero:
            params[name] = np.zeros(shape)
            continue
        bound = 1.0 / math.sqrt(H if name.startswith("l") else 2 * H)
        params[name] = rng.uniform(-bound, bound, size=shape)
        if name.startswith("l") and name.endswith("_b"):
            params[name][H:2 * H] = 1.0
    return params


# -- LSTM --------------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(X: np.ndarray, W: np.ndarray, b: np.ndarray):
    B, T, D = X.shape
    H = W.shape[1] // 4
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = []
    for t in range(T):
        xh = np.concatenate([X[:, t], h], axis=1)
        z = xh @ W + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h = o * tc
        cache.append((xh, i, f, g, o, c, tc))
        c = c_new
        hs[:, t] = h
    return hs, cache


def lstm_backward(dhs: np.ndarray, cache, W: np.ndarray):
    B, T, H = dhs.shape
    D = W.shape[0] - H
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[1])
    dX = np.empty((B, T, D))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        xh, i, f, g, o, c_prev, tc = cache[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dc_next = dc * f
        dW += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ W.T
        dX[:, t] = dxh[:, :D]
        dh_next = dxh[:, D:]
    return dX, dW, db


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """Per-row permutation reversing the first ``len`` steps (self-inverse)."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def _gather_time(X: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(X, idx[:, :, None], axis=1)


# -- model ----------------------------------------------------------------------------

def forward(params: dict, X: np.ndarray, lengths: np.ndarray, dropout_mask: np.ndarray | None = None):
    """Logits for a padded batch ``X`` of shape (B, T, 12).

    Returns ``(chord_logits, func_logits_or_None, cache)``. ``dropout_mask``
    (B, T, 2H), already scaled by 1/(1-p), is applied to the second layer's
    output; pass None in eval mode.
    """
    B, T, _ = X.shape
    ridx = reverse_index(lengths, T)
    layer_in = X
    caches = []
    for layer in range(2):
        hf, cf = lstm_forward(layer_in, params[f"l{layer}_fwd_W"], params[f"l{layer}_fwd_b"])
        hb_rev, cb = lstm_forward(_gather_time(layer_in, ridx), params[f"l{layer}_bwd_W"], params[f"l{layer}_bwd_b"])
        hb = _gather_time(hb_rev, ridx)
        caches.append((cf, cb))
        layer_in = np.concatenate([hf, hb], axis=2)
    top = layer_in if dropout_mask is None else layer_in * dropout_mask
    chord_logits = top @ params["chord_W"] + params["chord_b"]
    func_logits = top @ params["func_W"] + params["func_b"] if "func_W" in params else None
    return chord_logits, func_logits, (X, ridx, caches, layer_in, top, dropout_mask)


def log_softmax(z: np.ndarray) -> np.ndarray:
    mx = z.max(axis=-1, keepdims=True)
    return z - mx - np.log(np.exp(z - mx).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def sequence_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    return np.arange(T)[None, :] < np.asarray(lengths)[:, None]


def loss_and_grads(params: dict, X: np.ndarray, lengths: np.ndarray, chord_targets: np.ndarray,
                   gamma: float = 0.0, dropout_mask: np.ndarray | None = None, need_grads: bool = True):
    """Masked mean chord cross-entropy (+ gamma * mean function cross-entropy)."""
    B, T, _ = X.shape
    mask = sequence_mask(lengths, T)
    n_valid = mask.sum()
    chord_logits, func_logits, cache = forward(params, X, lengths, dropout_mask)
    tgt = np.where(mask, chord_targets, 0)
    logp_c = log_softmax(chord_logits)
    ce_c = -np.take_along_axis(logp_c, tgt[:, :, None], axis=2)[:, :, 0]
    loss = (ce_c * mask).sum() / n_valid
    multitask = func_logits is not None
    if multitask:
        ftgt = FUNCTION_OF[tgt]
        logp_f = log_softmax(func_logits)
        ce_f = -np.take_along_axis(logp_f, ftgt[:, :, None], axis=2)[:, :, 0]
        loss = loss + gamma * (ce_f * mask).sum() / n_valid
    if not need_grads:
        return float(loss), None

    grads = {}
    w = mask[:, :, None] / n_valid
    d_chord = (np.exp(logp_c) - np.eye(NUM_CHORDS)[tgt]) * w
    _, ridx, caches, layer_out, top, dmask = cache
    top2 = top.reshape(-1, top.shape[2])
    grads["chord_W"] = top2.T @ d_chord.reshape(-1, NUM_CHORDS)
    grads["chord_b"] = d_chord.sum(axis=(0, 1))
    d_top = d_chord @ params["chord_W"].T
    if multitask:
        d_func = (np.exp(logp_f) - np.eye(N_FUNCTIONS)[ftgt]) * w * gamma
        grads["func_W"] = top2.T @ d_func.reshape(-1, N_FUNCTIONS)
        grads["func_b"] = d_func.sum(axis=(0, 1))
        d_top = d_top + d_func @ params["func_W"].T
    d_layer = d_top if dmask is None else d_top * dmask
    for layer in (1, 0):
        cf, cb = caches[layer]
        H = params[f"l{layer}_fwd_W"].shape[1] // 4
        dxf, grads[f"l{layer}_fwd_W"], grads[f"l{layer}_fwd_b"] = lstm_backward(d_layer[:, :, :H], cf, params[f"l{layer}_fwd_W"])
        dxb_rev, grads[f"l{layer}_bwd_W"], grads[f"l{layer}_bwd_b"] = lstm_backward(
            _gather_time(d_layer[:, :, H:], ridx), cb, params[f"l{layer}_bwd_W"])
        d_layer = dxf + _gather_time(dxb_rev, ridx)
    return float(loss), grads


# -- decoding ----------------------------------------------------------------------------

def alpha_vector(alpha_others: float) -> np.ndarray:
    """Per-label decode boost: ``alpha_others`` for Others-function triads, 1 elsewhere (N.C. unboosted)."""
    alpha = np.where(FUNCTION_OF == int(ChordFunction.OTHERS), alpha_others, 1.0)
    alpha[NO_CHORD] = 1.0
    return alpha


def combined_scores(p_chord: np.ndarray, p_func: np.ndarray, alpha_others: float) -> np.ndarray:
    """``log p_chord(c) + log(alpha_c * p_func(function(c)))`` for every label, per slot."""
    p_chord = np.atleast_2d(p_chord)
    p_func = np.atleast_2d(p_func)
    with np.errstate(divide="ignore"):
        return np.log(p_chord) + np.log(alpha_vector(alpha_others)[None, :] * p_func[:, FUNCTION_OF])


def decode_probs(p_chord: np.ndarray, p_func: np.ndarray | None = None, alpha_others: float = 1.8) -> np.ndarray:
    """Per-slot argmax (first index wins ties)."""
    if p_func is None:
        return np.argmax(np.atleast_2d(p_chord), axis=1)
    return np.argmax(combined_scores(p_chord, p_func, alpha_others), axis=1)


def pad_batch(seqs: Sequence[np.ndarray], targets: Sequence[np.ndarray] | None = None):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    T = int(lengths.max())
    X = np.zeros((len(seqs), T, INPUT_DIM))
    Y = np.zeros((len(seqs), T), dtype=np.int64)
    for k, s in enumerate(seqs):
        X[k, : len(s)] = s
        if targets is not None:
            Y[k, : len(s)] = targets[k]
    return X, lengths, Y


@dataclass
class NeuralModel:
    params: dict
    config: NeuralConfig

    @property
    def is_multitask(self) -> bool:
        return "func_W" in self.params

    @property
    def name(self) -> str:
        return "mtharmonizer" if self.is_multitask else "bilstm"

    def predict_proba(self, pcps: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        pcps = np.asarray(pcps, dtype=float)
        if len(pcps) > MAX_SLOTS:
            raise ValueError(f"sequence of {len(pcps)} slots exceeds {MAX_SLOTS}")
        chord_logits, func_logits, _ = forward(self.params, pcps[None], np.array([len(pcps)]))
        p_func = None if func_logits is None else softmax(func_logits[0])
        return softmax(chord_logits[0]), p_func

    def decode_pcps(self, pcps: np.ndarray) -> np.ndarray:
        p_chord, p_func = self.predict_proba(pcps)
        return decode_probs(p_chord, p_func, self.config.alpha_others)

    def harmonize(self, sheet: LeadSheet, rng=None) -> np.ndarray:
        return self.decode_pcps(melody_pcp_matrix(sheet))

    def to_dict(self) -> dict:
        return {
            "type": self.name,
            "config": asdict(self.config),
            "shapes": {k: list(v.shape) for k, v in self.params.items()},
            "params": {k: v.ravel().tolist() for k, v in self.params.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralModel":
        if d.get("type") not in ("bilstm", "mtharmonizer"):
            raise ValueError(f"not a neural checkpoint: type={d.get('type')!r}")
        params = {k: np.asarray(v, dtype=float).reshape(d["shapes"][k]) for k, v in d["params"].items()}
        config = NeuralConfig(**d["config"])
        expected = param_shapes(config.hidden_size, config.multitask)
        if {k: tuple(v.shape) for k, v in params.items()} != expected:
            raise ValueError("checkpoint parameter shapes do not match its config")
        return cls(params, config)


# -- training -------------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def adam_update(params: dict, grads: dict, state: AdamState, config: NeuralConfig) -> None:
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / corr1
        v_hat = state.v[name] / corr2
        params[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = -1


def _accuracy(model: NeuralModel, pcps: Sequence[np.ndarray], targets: Sequence[np.ndarray]) -> float:
    correct = total = 0
    for x, y in zip(pcps, targets):
        pred = model.decode_pcps(x)
        correct += int((pred == y).sum())
        total += len(y)
    return correct / total if total else 0.0


def train(train_sheets: Sequence[LeadSheet], val_sheets: Sequence[LeadSheet], config: NeuralConfig,
          ) -> tuple[NeuralModel, TrainHistory]:
    """Adam minibatch training; returns the epoch with the best validation chord accuracy."""
    if not train_sheets or not val_sheets:
        raise ValueError("training and validation sets must be nonempty")
    tr_x = [melody_pcp_matrix(s) for s in train_sheets]
    tr_y = [s.chord_array() for s in train_sheets]
    va_x = [melody_pcp_matrix(s) for s in val_sheets]
    va_y = [s.chord_array() for s in val_sheets]
    return train_arrays(tr_x, tr_y, va_x, va_y, config)


def train_arrays(tr_x, tr_y, va_x, va_y, config: NeuralConfig) -> tuple[NeuralModel, TrainHistory]:
    rng = np.random.default_rng(config.seed)
    params = init_params(config, rng)
    state = AdamState({k: np.zeros_like(v) for k, v in params.items()},
                      {k: np.zeros_like(v) for k, v in params.items()})
    gamma = config.gamma if config.multitask else 0.0
    keep = 1.0 - config.dropout
    H2 = 2 * config.hidden_size
    history = TrainHistory()
    best_acc, best_params = -1.0, None
    n = len(tr_x)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            X, lengths, Y = pad_batch([tr_x[i] for i in idx], [tr_y[i] for i in idx])
            dmask = None
            if config.dropout > 0:
                dmask = (rng.random((X.shape[0], X.shape[1], H2)) < keep) / keep
            loss, grads = loss_and_grads(params, X, lengths, Y, gamma, dmask)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss} at epoch {epoch}, batch starting {start}")
            adam_update(params, grads, state, config)
            losses.append(loss)
        history.train_loss.append(float(np.mean(losses)))
        acc = _accuracy(NeuralModel(params, config), va_x, va_y)
        history.val_accuracy.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_params = {k: v.copy() for k, v in params.items()}
            history.best_epoch = epoch
    if best_params is None:
        best_params = {k: v.copy() for k, v in params.items()}
    return NeuralModel(best_params, config), history

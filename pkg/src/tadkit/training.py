"""Supervised training: cross-entropy loss, exact BPTT gradients, Adam.

Gradients are derived by hand for all four network kinds, including the
learned initial states and the LSTM peephole vectors; a finite-difference
checker covers every tensor and is the load-bearing test of this module.

Regularization follows the usual split: inverted dropout on FNN hidden
activations, additive Gaussian "synaptic noise" on the weight matrices of
recurrent networks (applied only for the forward/backward of one batch and
never accumulated into the stored weights).
"""

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import confusion, mcc, roc_auc
from .nets import (fnn_forward, network_probs, param_shapes, init_params,
                   recurrent_forward)


@dataclass
class TrainConfig:
    batch_size: int = 128
    sequence_length: int = 20
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 50
    dropout_rate: float = 0.2
    synaptic_noise_std: float = 0.05
    seed: int = 0
    patience: int = 10
    optimizer: str = "adam"  # or "sgd"
    grad_clip_norm: float = 5.0
    max_batches_per_epoch: int = 0  # 0 = no cap

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.synaptic_noise_std < 0:
            raise ValueError("synaptic_noise_std must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


class GradientError(RuntimeError):
    """Raised when a non-finite gradient is produced."""


def ace_loss(probs, labels):
    """Mean negative log-likelihood of the correct class over a batch."""
    probs = np.atleast_2d(np.asarray(probs, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def _loss_and_dlogits(probs, labels):
    bsz = len(labels)
    loss = ace_loss(probs, labels)
    dlogits = probs.copy()
    dlogits[np.arange(bsz), labels] -= 1.0
    return loss, dlogits / bsz


def _fnn_backward(spec, params, cache, dlogits):
    hs, masks = cache["hs"], cache["masks"]
    grads = {"Wy": hs[-1].T @ dlogits, "by": dlogits.sum(axis=0)}
    dh = dlogits @ params["Wy"].T
    for l in range(spec.layers - 1, -1, -1):
        if masks is not None:
            dh = dh * masks[l]
        da = dh * (1.0 - hs[l + 1] ** 2)
        grads[f"W{l}"] = hs[l].T @ da
        grads[f"b{l}"] = da.sum(axis=0)
        dh = da @ params[f"W{l}"].T
    return grads


def _rnn_layer_backward(wx, wh, cache, dh_seq, learned_init):
    inp, h = cache["inp"], cache["h"]
    m = h.shape[1]
    g = {"wx": np.zeros_like(wx), "wh": np.zeros_like(wh),
         "b": np.zeros(wx.shape[1])}
    dx = np.empty_like(inp)
    carry = np.zeros_like(h[:, 0])
    for t in range(m - 1, -1, -1):
        dh = dh_seq[:, t] + carry
        da = dh * (1.0 - h[:, t] ** 2)
        h_prev = h[:, t - 1] if t > 0 else cache["h0"]
        g["wx"] += inp[:, t].T @ da
        g["wh"] += h_prev.T @ da
        g["b"] += da.sum(axis=0)
        dx[:, t] = da @ wx.T
        carry = da @ wh.T
    g["h0"] = carry.sum(axis=0) if learned_init else None
    return g, dx


def _lstm_layer_backward(wx, wh, pi, pf, po, cache, dh_seq, learned_init):
    inp, h, c = cache["inp"], cache["h"], cache["c"]
    i, f, gg, o = cache["i"], cache["f"], cache["g"], cache["o"]
    m = h.shape[1]
    n = h.shape[2]
    g = {"wx": np.zeros_like(wx), "wh": np.zeros_like(wh),
         "b": np.zeros(wx.shape[1]), "pi": np.zeros(n), "pf": np.zeros(n),
         "po": np.zeros(n)}
    dx = np.empty_like(inp)
    carry_h = np.zeros_like(h[:, 0])
    carry_c = np.zeros_like(h[:, 0])
    for t in range(m - 1, -1, -1):
        c_prev = c[:, t - 1] if t > 0 else cache["c0"]
        h_prev = h[:, t - 1] if t > 0 else cache["h0"]
        tanh_c = np.tanh(c[:, t])
        dh = dh_seq[:, t] + carry_h
        do = dh * tanh_c
        dc = dh * o[:, t] * (1.0 - tanh_c ** 2) + carry_c
        do_pre = do * o[:, t] * (1.0 - o[:, t])
        dc = dc + do_pre * po
        di = dc * gg[:, t]
        df = dc * c_prev
        dg = dc * i[:, t]
        di_pre = di * i[:, t] * (1.0 - i[:, t])
        df_pre = df * f[:, t] * (1.0 - f[:, t])
        dg_pre = dg * (1.0 - gg[:, t] ** 2)
        g["po"] += (do_pre * c[:, t]).sum(axis=0)
        g["pi"] += (di_pre * c_prev).sum(axis=0)
        g["pf"] += (df_pre * c_prev).sum(axis=0)
        dz = np.concatenate([di_pre, df_pre, dg_pre, do_pre], axis=1)
        g["wx"] += inp[:, t].T @ dz
        g["wh"] += h_prev.T @ dz
        g["b"] += dz.sum(axis=0)
        dx[:, t] = dz @ wx.T
        carry_h = dz @ wh.T
        carry_c = dc * f[:, t] + di_pre * pi + df_pre * pf
    if learned_init:
        g["h0"] = carry_h.sum(axis=0)
        g["c0"] = carry_c.sum(axis=0)
    return g, dx


def _gru_layer_backward(wx, wh, cache, dh_seq, learned_init):
    inp, h = cache["inp"], cache["h"]
    z, r, cand = cache["z"], cache["r"], cache["cand"]
    m = h.shape[1]
    n = h.shape[2]
    g = {"wx": np.zeros_like(wx), "wh": np.zeros_like(wh),
         "b": np.zeros(wx.shape[1])}
    dx = np.empty_like(inp)
    carry = np.zeros_like(h[:, 0])
    for t in range(m - 1, -1, -1):
        h_prev = h[:, t - 1] if t > 0 else cache["h0"]
        dh = dh_seq[:, t] + carry
        dz = dh * (cand[:, t] - h_prev)
        dn = dh * z[:, t]
        dh_prev = dh * (1.0 - z[:, t])
        dn_pre = dn * (1.0 - cand[:, t] ** 2)
        drh = dn_pre @ wh[:, 2 * n:].T
        g["wh"][:, 2 * n:] += (r[:, t] * h_prev).T @ dn_pre
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r[:, t]
        dz_pre = dz * z[:, t] * (1.0 - z[:, t])
        dr_pre = dr * r[:, t] * (1.0 - r[:, t])
        dzr = np.concatenate([dz_pre, dr_pre], axis=1)
        dh_prev = dh_prev + dzr @ wh[:, :2 * n].T
        g["wh"][:, :2 * n] += h_prev.T @ dzr
        dax = np.concatenate([dz_pre, dr_pre, dn_pre], axis=1)
        g["wx"] += inp[:, t].T @ dax
        g["b"] += dax.sum(axis=0)
        dx[:, t] = dax @ wx.T
        carry = dh_prev
    g["h0"] = carry.sum(axis=0) if learned_init else None
    return g, dx


def backward(spec, params, cache, dlogits):
    """Exact gradients of the batch-mean loss for every parameter tensor."""
    if not spec.recurrent:
        grads = _fnn_backward(spec, params, cache, dlogits)
    else:
        layers = cache["layers"]
        m = layers[0]["h"].shape[1]
        grads = {"Wy": layers[-1]["h"][:, -1].T @ dlogits,
                 "by": dlogits.sum(axis=0)}
        dh_seq = np.zeros_like(layers[-1]["h"])
        dh_seq[:, m - 1] = dlogits @ params["Wy"].T
        for l in range(spec.layers - 1, -1, -1):
            lc = layers[l]
            if spec.kind == "rnn":
                g, dx = _rnn_layer_backward(params[f"Wx{l}"], params[f"Wh{l}"],
                                            lc, dh_seq, spec.learned_init)
            elif spec.kind == "lstm":
                g, dx = _lstm_layer_backward(
                    params[f"Wx{l}"], params[f"Wh{l}"], params[f"pi{l}"],
                    params[f"pf{l}"], params[f"po{l}"], lc, dh_seq,
                    spec.learned_init)
                grads[f"pi{l}"] = g["pi"]
                grads[f"pf{l}"] = g["pf"]
                grads[f"po{l}"] = g["po"]
            else:
                g, dx = _gru_layer_backward(params[f"Wx{l}"], params[f"Wh{l}"],
                                            lc, dh_seq, spec.learned_init)
            grads[f"Wx{l}"] = g["wx"]
            grads[f"Wh{l}"] = g["wh"]
            grads[f"b{l}"] = g["b"]
            if spec.learned_init:
                grads[f"h0_{l}"] = g["h0"]
                if spec.kind == "lstm":
                    grads[f"c0_{l}"] = g["c0"]
            dh_seq = dx
    for name, arr in grads.items():
        if not np.all(np.isfinite(arr)):
            raise GradientError(f"non-finite gradient in tensor {name}")
    return grads


def compute_gradients(spec, params, x, y, dropout_rate=0.0, rng=None):
    """Forward + backward for one batch; returns (loss, grads)."""
    y = np.asarray(y)
    if spec.recurrent:
        probs, cache = recurrent_forward(spec, params, x)
    else:
        masks = None
        if dropout_rate > 0.0 and rng is not None:
            keep = 1.0 - dropout_rate
            masks = [(rng.random((len(x), spec.neurons)) < keep) / keep
                     for _ in range(spec.layers)]
        probs, cache = fnn_forward(spec, params, x, dropout_masks=masks)
    loss, dlogits = _loss_and_dlogits(probs, y)
    return loss, backward(spec, params, cache, dlogits)


# --------------------------------------------------------------------------
# finite-difference oracle
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_tensor: str
    per_tensor: dict

    @property
    def passed(self):
        return self.max_rel_error < 1e-4


def _batch_loss(spec, params, x, y):
    if spec.recurrent:
        probs, _ = recurrent_forward(spec, params, x)
    else:
        probs, _ = fnn_forward(spec, params, x)
    return ace_loss(probs, y)


def grad_check(spec, seed=0, batch=4, seq_len=5, eps=1e-5, grads=None):
    """Compare analytic gradients against central finite differences.

    Every coordinate of every tensor is perturbed; the per-tensor relative
    error is ||g_a - g_n|| / (||g_a|| + ||g_n|| + floor).  The floor absorbs
    the finite-difference roundoff noise (about 1e-11 per coordinate at this
    eps), which would otherwise dominate the ratio for near-zero gradients.
    """
    rng = np.random.default_rng(seed)
    params = init_params(spec, seed)
    for name in params:  # break exact zeros so nothing hides behind symmetry
        params[name] = params[name] + 0.1 * rng.standard_normal(params[name].shape)
    if spec.recurrent:
        x = rng.standard_normal((batch, seq_len, spec.input_dim))
    else:
        x = rng.standard_normal((batch, spec.input_dim))
    y = rng.integers(0, spec.output_dim, size=batch)
    if grads is None:
        _, grads = compute_gradients(spec, params, x, y)
    report = {}
    for name, shape in param_shapes(spec):
        numeric = np.zeros(shape)
        flat = params[name].reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            lp = _batch_loss(spec, params, x, y)
            flat[j] = orig - eps
            lm = _batch_loss(spec, params, x, y)
            flat[j] = orig
            num_flat[j] = (lp - lm) / (2.0 * eps)
        ga = grads[name]
        err = np.linalg.norm(ga - numeric) / \
            (np.linalg.norm(ga) + np.linalg.norm(numeric) + 1e-6)
        report[name] = float(err)
    worst = max(report, key=report.get)
    return GradCheckReport(report[worst], worst, report)


# --------------------------------------------------------------------------
# optimizers and regularization
# --------------------------------------------------------------------------

def adam_init(params):
    return {"t": 0,
            "m": {k: np.zeros_like(v) for k, v in params.items()},
            "v": {k: np.zeros_like(v) for k, v in params.items()}}


def adam_update(params, grads, state, cfg):
    """Standard bias-corrected Adam step, in place on params and state."""
    state["t"] += 1
    t = state["t"]
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for k, g in grads.items():
        state["m"][k] = b1 * state["m"][k] + (1 - b1) * g
        state["v"][k] = b2 * state["v"][k] + (1 - b2) * g * g
        mhat = state["m"][k] / (1 - b1 ** t)
        vhat = state["v"][k] / (1 - b2 ** t)
        params[k] = params[k] - cfg.learning_rate * mhat / \
            (np.sqrt(vhat) + cfg.adam_eps)
    return params, state


def sgd_update(params, grads, cfg):
    for k, g in grads.items():
        params[k] = params[k] - cfg.learning_rate * g
    return params


def apply_dropout(activations, rate, rng):
    """Inverted dropout: kept units are rescaled so the mean is preserved."""
    if rate <= 0.0:
        return np.asarray(activations, dtype=float).copy()
    keep = 1.0 - rate
    mask = rng.random(np.shape(activations)) < keep
    return np.asarray(activations) * mask / keep


def apply_synaptic_noise(params, std, rng):
    """Additive zero-mean Gaussian noise on the weight matrices only.

    Returns a perturbed copy; the caller's weights stay clean.
    """
    noisy = {k: v.copy() for k, v in params.items()}
    if std > 0.0:
        for k in noisy:
            if k[0] == "W":
                noisy[k] += std * rng.standard_normal(noisy[k].shape)
    return noisy


def clip_gradients(grads, max_norm):
    if max_norm <= 0:
        return grads
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads


# --------------------------------------------------------------------------
# training loop
# --------------------------------------------------------------------------

@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_mcc: float
    val_auc: float
    wall_ms: float


@dataclass
class TrainResult:
    params: dict
    log: list = field(default_factory=list)
    best_val_mcc: float = -1.0
    diverged: bool = False


def _validate(spec, params, x_val, y_val):
    probs = network_probs(spec, params, x_val)
    preds = np.argmax(probs, axis=-1)
    counts = confusion(y_val, preds)
    _, auc = roc_auc(y_val, probs[:, 1])
    return mcc(counts), auc


def train(spec, x_train, y_train, x_val, y_val, cfg=TrainConfig()):
    """Epoch loop with per-epoch validation MCC, early stopping and best-model
    tracking.  Fully deterministic for a fixed (seed, config, data)."""
    x_train = np.asarray(x_train, dtype=float)
    y_train = np.asarray(y_train)
    rng_init = np.random.default_rng([cfg.seed, 0])
    params = init_params(spec, rng_init.integers(2 ** 31))
    opt = adam_init(params) if cfg.optimizer == "adam" else None
    best = copy.deepcopy(params)
    result = TrainResult(params=best)
    stale = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng([cfg.seed, 1, epoch])
        order = rng.permutation(len(x_train))
        if cfg.max_batches_per_epoch:
            order = order[:cfg.max_batches_per_epoch * cfg.batch_size]
        losses = []
        diverged = False
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            if spec.recurrent:
                noisy = apply_synaptic_noise(params, cfg.synaptic_noise_std, rng)
                loss, grads = compute_gradients(spec, noisy, xb, yb)
                grads = clip_gradients(grads, cfg.grad_clip_norm)
            else:
                loss, grads = compute_gradients(spec, params, xb, yb,
                                                dropout_rate=cfg.dropout_rate,
                                                rng=rng)
            if not np.isfinite(loss):
                diverged = True
                break
            losses.append(loss)
            if cfg.optimizer == "adam":
                adam_update(params, grads, opt, cfg)
            else:
                sgd_update(params, grads, cfg)
        val_mcc, val_auc = _validate(spec, params, x_val, y_val)
        wall = (time.perf_counter() - t0) * 1000.0
        result.log.append(EpochLog(epoch, float(np.mean(losses)) if losses
                                   else float("nan"), val_mcc, val_auc, wall))
        if diverged:
            result.diverged = True
            break
        if val_mcc > result.best_val_mcc:
            result.best_val_mcc = val_mcc
            result.params = copy.deepcopy(params)
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return result


def measure_times(spec, params, x_train, y_train, x_test, cfg=TrainConfig(),
                  repeats=3):
    """Wall-clock time of one training epoch and of one full test inference."""
    epoch_times, test_times = [], []
    for rep in range(repeats):
        work = {k: v.copy() for k, v in params.items()}
        opt = adam_init(work)
        t0 = time.perf_counter()
        for s in range(0, len(x_train), cfg.batch_size):
            xb, yb = x_train[s:s + cfg.batch_size], y_train[s:s + cfg.batch_size]
            _, grads = compute_gradients(spec, work, xb, yb)
            adam_update(work, grads, opt, cfg)
        epoch_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        network_probs(spec, params, x_test)
        test_times.append(time.perf_counter() - t0)
    return {"train_s": float(np.mean(epoch_times)),
            "train_s_std": float(np.std(epoch_times)),
            "test_s": float(np.mean(test_times)),
            "test_s_std": float(np.std(test_times))}

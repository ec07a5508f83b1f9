"""Small FNN/RNN/LSTM/GRU classifiers with exact parameter accounting.

All math is plain numpy in double precision.  Recurrent kinds carry learned
initial hidden states (and the LSTM additionally learned initial cell states
and peephole vectors); this accounting is what makes the parameter counts of
the reference complexity table come out exactly.

Parameter sets are plain dicts of named arrays.  Gate blocks are fused
column-wise: LSTM gate order (i, f, g, o), GRU gate order (z, r, n).

Model files (TADM): little-endian, magic "TADM", version u16, the spec
fields, then every tensor in canonical order as float64.
"""

import struct
from dataclasses import dataclass

import numpy as np

KINDS = ("fnn", "rnn", "lstm", "gru")

TADM_MAGIC = b"TADM"
TADM_VERSION = 1
_TADM_HEADER = struct.Struct("<4sHBHHHHBB")


@dataclass
class NetworkSpec:
    kind: str
    layers: int
    neurons: int
    input_dim: int = 8
    output_dim: int = 2
    learned_init: bool = None
    peepholes: bool = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown network kind {self.kind!r}")
        if self.layers < 1 or self.neurons < 1:
            raise ValueError("layers and neurons must be positive")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dims must be positive")
        if self.learned_init is None:
            self.learned_init = self.kind != "fnn"
        if self.kind == "fnn" and self.learned_init:
            raise ValueError("FNN has no initial state to learn")
        if self.peepholes is None:
            self.peepholes = self.kind == "lstm"
        if self.peepholes and self.kind != "lstm":
            raise ValueError("peepholes only apply to LSTMs")

    @property
    def recurrent(self):
        return self.kind != "fnn"


def _layer_in(spec, layer):
    return spec.input_dim if layer == 0 else spec.neurons


def _gate_count(kind):
    return {"fnn": 1, "rnn": 1, "lstm": 4, "gru": 3}[kind]


def param_shapes(spec):
    """Canonical (name, shape) list; serialization and counting both use it."""
    n = spec.neurons
    g = _gate_count(spec.kind)
    shapes = []
    for l in range(spec.layers):
        din = _layer_in(spec, l)
        if spec.kind == "fnn":
            shapes += [(f"W{l}", (din, n)), (f"b{l}", (n,))]
            continue
        shapes += [(f"Wx{l}", (din, g * n)), (f"Wh{l}", (n, g * n)),
                   (f"b{l}", (g * n,))]
        if spec.peepholes:
            shapes += [(f"pi{l}", (n,)), (f"pf{l}", (n,)), (f"po{l}", (n,))]
        if spec.learned_init:
            shapes.append((f"h0_{l}", (n,)))
            if spec.kind == "lstm":
                shapes.append((f"c0_{l}", (n,)))
    shapes += [("Wy", (n, spec.output_dim)), ("by", (spec.output_dim,))]
    return shapes


def count_params(spec):
    """Total number of trainable scalars for a spec."""
    return sum(int(np.prod(shape)) for _, shape in param_shapes(spec))


def init_params(spec, seed=0):
    """Glorot-uniform weights, zero biases (LSTM forget-gate bias 1), zero inits."""
    rng = np.random.default_rng(seed)
    params = {}
    n = spec.neurons
    for name, shape in param_shapes(spec):
        if name[0] == "W" and len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape)
    if spec.kind == "lstm":
        for l in range(spec.layers):
            params[f"b{l}"][n:2 * n] = 1.0  # forget gate slice of (i, f, g, o)
    return params


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# --------------------------------------------------------------------------
# single-step primitives
# --------------------------------------------------------------------------

def fnn_layer(x, w, b):
    """h = tanh(W x + b) for a batch (rows) of inputs."""
    return np.tanh(np.asarray(x) @ w + b)


def rnn_step(x, h_prev, wx, wh, b):
    return np.tanh(np.asarray(x) @ wx + np.asarray(h_prev) @ wh + b)


def lstm_step(x, h_prev, c_prev, wx, wh, b, pi, pf, po):
    """One peephole LSTM step; gate columns fused in order (i, f, g, o)."""
    n = h_prev.shape[-1]
    z = np.asarray(x) @ wx + np.asarray(h_prev) @ wh + b
    i = _sigmoid(z[..., :n] + pi * c_prev)
    f = _sigmoid(z[..., n:2 * n] + pf * c_prev)
    g = np.tanh(z[..., 2 * n:3 * n])
    c = f * c_prev + i * g
    o = _sigmoid(z[..., 3 * n:] + po * c)
    h = o * np.tanh(c)
    return h, c


def gru_step(x, h_prev, wx, wh, b):
    """One GRU step with gate columns fused in order (z, r, n).

    h_t = (1 - z) * h_prev + z * candidate, so a closed update gate (z = 0)
    copies the previous state.
    """
    n = h_prev.shape[-1]
    ax = np.asarray(x) @ wx + b
    ah = np.asarray(h_prev) @ wh[:, :2 * n]
    z = _sigmoid(ax[..., :n] + ah[..., :n])
    r = _sigmoid(ax[..., n:2 * n] + ah[..., n:])
    cand = np.tanh(ax[..., 2 * n:] + (r * h_prev) @ wh[:, 2 * n:])
    return (1.0 - z) * h_prev + z * cand


def softmax_output(h_last, wy, by):
    """Numerically stabilized softmax over the output layer logits."""
    logits = np.asarray(h_last) @ wy + by
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# full forward passes (with caches for backprop)
# --------------------------------------------------------------------------

def fnn_forward(spec, params, x, dropout_masks=None):
    """MLP forward on a frame batch (B, input_dim); returns (probs, cache)."""
    h = np.asarray(x, dtype=float)
    hs = [h]
    for l in range(spec.layers):
        h = fnn_layer(h, params[f"W{l}"], params[f"b{l}"])
        if dropout_masks is not None:
            h = h * dropout_masks[l]
        hs.append(h)
    probs = softmax_output(h, params["Wy"], params["by"])
    return probs, {"hs": hs, "masks": dropout_masks}


def recurrent_forward(spec, params, x):
    """Stacked recurrent forward on (B, M, input_dim); only the final step
    feeds the softmax.  Returns (probs, cache) with everything BPTT needs."""
    x = np.asarray(x, dtype=float)
    bsz, m, _ = x.shape
    n = spec.neurons
    layers = []
    inp = x
    for l in range(spec.layers):
        wx, wh, b = params[f"Wx{l}"], params[f"Wh{l}"], params[f"b{l}"]
        h0 = np.broadcast_to(params[f"h0_{l}"], (bsz, n)) if spec.learned_init \
            else np.zeros((bsz, n))
        cache = {"inp": inp, "h": np.empty((bsz, m, n)), "h0": h0}
        h = h0
        if spec.kind == "rnn":
            for t in range(m):
                h = rnn_step(inp[:, t], h, wx, wh, b)
                cache["h"][:, t] = h
        elif spec.kind == "lstm":
            pi, pf, po = params[f"pi{l}"], params[f"pf{l}"], params[f"po{l}"]
            c = np.broadcast_to(params[f"c0_{l}"], (bsz, n)) if spec.learned_init \
                else np.zeros((bsz, n))
            cache["c0"] = c
            for key in ("c", "i", "f", "g", "o"):
                cache[key] = np.empty((bsz, m, n))
            for t in range(m):
                z = inp[:, t] @ wx + h @ wh + b
                i = _sigmoid(z[:, :n] + pi * c)
                f = _sigmoid(z[:, n:2 * n] + pf * c)
                g = np.tanh(z[:, 2 * n:3 * n])
                c = f * c + i * g
                o = _sigmoid(z[:, 3 * n:] + po * c)
                h = o * np.tanh(c)
                for key, val in (("h", h), ("c", c), ("i", i), ("f", f),
                                 ("g", g), ("o", o)):
                    cache[key][:, t] = val
        else:  # gru
            for key in ("z", "r", "cand"):
                cache[key] = np.empty((bsz, m, n))
            for t in range(m):
                ax = inp[:, t] @ wx + b
                ah = h @ wh[:, :2 * n]
                zg = _sigmoid(ax[:, :n] + ah[:, :n])
                rg = _sigmoid(ax[:, n:2 * n] + ah[:, n:])
                cand = np.tanh(ax[:, 2 * n:] + (rg * h) @ wh[:, 2 * n:])
                h = (1.0 - zg) * h + zg * cand
                for key, val in (("h", h), ("z", zg), ("r", rg), ("cand", cand)):
                    cache[key][:, t] = val
        layers.append(cache)
        inp = cache["h"]
    h_last = layers[-1]["h"][:, -1]
    probs = softmax_output(h_last, params["Wy"], params["by"])
    return probs, {"layers": layers, "x": x}


def forward_sequence(spec, params, x):
    """Map a sequence batch (B, M, in) to the final-step class probabilities.

    An FNN is memoryless: it is applied to the last frame only (per-frame
    outputs for earlier frames carry no information into the result).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if spec.recurrent:
        probs, cache = recurrent_forward(spec, params, x)
    else:
        probs, cache = fnn_forward(spec, params, x[:, -1])
    return (probs[0] if single else probs), cache


def network_probs(spec, params, x, batch=4096):
    """Inference-mode positive-class scores and probabilities for any input."""
    x = np.asarray(x, dtype=float)
    outs = []
    for s in range(0, len(x), batch):
        xb = x[s:s + batch]
        if spec.recurrent:
            probs, _ = recurrent_forward(spec, params, xb)
        else:
            probs, _ = fnn_forward(spec, params, xb)
        outs.append(probs)
    return np.concatenate(outs) if outs else np.zeros((0, spec.output_dim))


def predict(spec, params, x):
    """Hard labels (argmax, ties to the lower index) and positive-class scores."""
    probs = network_probs(spec, params, x)
    labels = np.argmax(probs, axis=-1)
    return labels, probs[:, 1]


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def save_model(path, spec, params):
    kind_code = KINDS.index(spec.kind)
    with open(path, "wb") as fh:
        fh.write(_TADM_HEADER.pack(TADM_MAGIC, TADM_VERSION, kind_code,
                                   spec.layers, spec.neurons, spec.input_dim,
                                   spec.output_dim, int(spec.learned_init),
                                   int(spec.peepholes)))
        for name, shape in param_shapes(spec):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            if arr.shape != shape:
                raise ValueError(f"tensor {name} has shape {arr.shape}, "
                                 f"expected {shape}")
            fh.write(arr.tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        head = fh.read(_TADM_HEADER.size)
        magic, version, kind_code, layers, neurons, din, dout, li, pe = \
            _TADM_HEADER.unpack(head)
        if magic != TADM_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {TADM_MAGIC!r}")
        if version != TADM_VERSION:
            raise ValueError(f"unsupported TADM version {version}")
        spec = NetworkSpec(KINDS[kind_code], layers, neurons, din, dout,
                           bool(li), bool(pe))
        params = {}
        for name, shape in param_shapes(spec):
            count = int(np.prod(shape))
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ValueError(f"model file truncated at tensor {name}")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return spec, params

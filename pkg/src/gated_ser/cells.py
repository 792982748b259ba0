"""Recurrent units: vanilla RNN, peephole LSTM, and GRU.

Each cell is a pure function of (params, state, input). The forward
recurrences are:

  rnn:   s      = tanh(w_rec s_prev + w_in x + b_hidden)
  lstm:  i      = sigma(w_xi x + w_hi h_prev + p_i * c_prev + b_i)
         f      = sigma(w_xf x + w_hf h_prev + p_f * c_prev + b_f)
         cand   = tanh (w_xc x + w_hc h_prev + b_c)
         c      = f * c_prev + i * cand
         o      = sigma(w_xo x + w_ho h_prev + p_o * c + b_o)
         h      = o * tanh(c)
  gru:   z      = sigma(w_xz x + w_hz h_prev + b_z)
         r      = sigma(w_xr x + w_hr h_prev + b_r)
         cand   = tanh (w_xh x + w_hh (r * h_prev) + b_h)
         h      = (1 - z) * h_prev + z * cand

Peepholes (p_i, p_f, p_o) are stored as length-p vectors acting as diagonal
matrices; they can be disabled to get the clean 3:4 GRU/LSTM parameter
ratio. A linear readout (w_out, b_out) maps the final state (or the mean
state) to class logits; `bptt_backward` differentiates the cross-entropy of
the softmaxed logits with respect to every stored tensor by reverse-mode
accumulation over all timesteps, and `grad_check` verifies that against
central finite differences.

Params are treated as immutable during forward/backward; the trainer is the
single owner of in-place updates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .nncore import sigmoid, softmax, softmax_xent_with_grad

KINDS = ("rnn", "lstm", "gru")
READOUTS = ("last", "mean")


def _as_f64(a):
    return np.asarray(a, dtype=np.float64)


@dataclass
class RnnParams:
    w_in: np.ndarray      # (p, d) input map
    w_rec: np.ndarray     # (p, p) recurrent map
    w_out: np.ndarray     # (k, p) readout
    b_hidden: np.ndarray | None = None
    b_out: np.ndarray | None = None

    kind = "rnn"

    @property
    def hidden_size(self):
        return self.w_rec.shape[0]

    @property
    def input_size(self):
        return self.w_in.shape[1]

    @property
    def output_size(self):
        return self.w_out.shape[0]

    def tensors(self):
        out = [("w_in", self.w_in), ("w_rec", self.w_rec), ("w_out", self.w_out)]
        if self.b_hidden is not None:
            out.append(("b_hidden", self.b_hidden))
        if self.b_out is not None:
            out.append(("b_out", self.b_out))
        return out


@dataclass
class LstmParams:
    # input maps (p, d)
    w_xi: np.ndarray
    w_xf: np.ndarray
    w_xo: np.ndarray
    w_xc: np.ndarray
    # recurrent maps (p, p)
    w_hi: np.ndarray
    w_hf: np.ndarray
    w_ho: np.ndarray
    w_hc: np.ndarray
    # readout (k, p)
    w_out: np.ndarray
    # diagonal peepholes (p,), None when disabled
    p_i: np.ndarray | None = None
    p_f: np.ndarray | None = None
    p_o: np.ndarray | None = None
    # biases (p,) / (k,), None when disabled
    b_i: np.ndarray | None = None
    b_f: np.ndarray | None = None
    b_o: np.ndarray | None = None
    b_c: np.ndarray | None = None
    b_out: np.ndarray | None = None

    kind = "lstm"

    @property
    def hidden_size(self):
        return self.w_hi.shape[0]

    @property
    def input_size(self):
        return self.w_xi.shape[1]

    @property
    def output_size(self):
        return self.w_out.shape[0]

    def tensors(self):
        out = [
            ("w_xi", self.w_xi), ("w_xf", self.w_xf),
            ("w_xo", self.w_xo), ("w_xc", self.w_xc),
            ("w_hi", self.w_hi), ("w_hf", self.w_hf),
            ("w_ho", self.w_ho), ("w_hc", self.w_hc),
            ("w_out", self.w_out),
        ]
        for name in ("p_i", "p_f", "p_o", "b_i", "b_f", "b_o", "b_c", "b_out"):
            t = getattr(self, name)
            if t is not None:
                out.append((name, t))
        return out


@dataclass
class GruParams:
    # input maps (p, d)
    w_xz: np.ndarray
    w_xr: np.ndarray
    w_xh: np.ndarray
    # recurrent maps (p, p)
    w_hz: np.ndarray
    w_hr: np.ndarray
    w_hh: np.ndarray
    # readout (k, p)
    w_out: np.ndarray
    # biases, None when disabled
    b_z: np.ndarray | None = None
    b_r: np.ndarray | None = None
    b_h: np.ndarray | None = None
    b_out: np.ndarray | None = None

    kind = "gru"

    @property
    def hidden_size(self):
        return self.w_hz.shape[0]

    @property
    def input_size(self):
        return self.w_xz.shape[1]

    @property
    def output_size(self):
        return self.w_out.shape[0]

    def tensors(self):
        out = [
            ("w_xz", self.w_xz), ("w_xr", self.w_xr), ("w_xh", self.w_xh),
            ("w_hz", self.w_hz), ("w_hr", self.w_hr), ("w_hh", self.w_hh),
            ("w_out", self.w_out),
        ]
        for name in ("b_z", "b_r", "b_h", "b_out"):
            t = getattr(self, name)
            if t is not None:
                out.append((name, t))
        return out


class CellGradients:
    """Gradient tensors keyed like the owning params' tensors()."""

    def __init__(self, tensors: dict):
        self.tensors = tensors

    def global_norm(self) -> float:
        total = 0.0
        for g in self.tensors.values():
            total += float(np.sum(g * g))
        return float(np.sqrt(total))

    def scale_(self, factor: float):
        for g in self.tensors.values():
            g *= factor

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.tensors.values())


def init_params(kind, d, p, n_out, use_bias=False, peepholes=True, seed=0):
    """Seeded uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)] per tensor.

    Biases start at zero. Tensor draw order is fixed, so a seed pins every
    weight bit-exactly.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    if d < 1 or p < 1 or n_out < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)

    def draw(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    def draw_vec(n, fan_in=1):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=n)

    zeros = lambda n: np.zeros(n, dtype=np.float64)

    if kind == "rnn":
        return RnnParams(
            w_in=draw(p, d), w_rec=draw(p, p), w_out=draw(n_out, p),
            b_hidden=zeros(p) if use_bias else None,
            b_out=zeros(n_out) if use_bias else None,
        )
    if kind == "lstm":
        return LstmParams(
            w_xi=draw(p, d), w_xf=draw(p, d), w_xo=draw(p, d), w_xc=draw(p, d),
            w_hi=draw(p, p), w_hf=draw(p, p), w_ho=draw(p, p), w_hc=draw(p, p),
            w_out=draw(n_out, p),
            p_i=draw_vec(p) if peepholes else None,
            p_f=draw_vec(p) if peepholes else None,
            p_o=draw_vec(p) if peepholes else None,
            b_i=zeros(p) if use_bias else None,
            b_f=zeros(p) if use_bias else None,
            b_o=zeros(p) if use_bias else None,
            b_c=zeros(p) if use_bias else None,
            b_out=zeros(n_out) if use_bias else None,
        )
    return GruParams(
        w_xz=draw(p, d), w_xr=draw(p, d), w_xh=draw(p, d),
        w_hz=draw(p, p), w_hr=draw(p, p), w_hh=draw(p, p),
        w_out=draw(n_out, p),
        b_z=zeros(p) if use_bias else None,
        b_r=zeros(p) if use_bias else None,
        b_h=zeros(p) if use_bias else None,
        b_out=zeros(n_out) if use_bias else None,
    )


def _check_vec(v, n, what):
    v = _as_f64(v)
    if v.ndim != 1 or v.shape[0] != n:
        raise ShapeError(f"{what} must be a length-{n} vector, got shape {v.shape}")
    return v


# ---------------------------------------------------------------------------
# single steps

def rnn_step(params, s_prev, x):
    s_prev = _check_vec(s_prev, params.hidden_size, "state")
    x = _check_vec(x, params.input_size, "input")
    a = params.w_rec @ s_prev + params.w_in @ x
    if params.b_hidden is not None:
        a = a + params.b_hidden
    return np.tanh(a)


def lstm_step(params, h_prev, c_prev, x):
    p = params.hidden_size
    h_prev = _check_vec(h_prev, p, "hidden state")
    c_prev = _check_vec(c_prev, p, "cell state")
    x = _check_vec(x, params.input_size, "input")
    h, c, _ = _lstm_step_cached(params, h_prev, c_prev, x)
    return h, c


def gru_step(params, h_prev, x):
    h_prev = _check_vec(h_prev, params.hidden_size, "state")
    x = _check_vec(x, params.input_size, "input")
    h, _ = _gru_step_cached(params, h_prev, x)
    return h


def _lstm_step_cached(params, h_prev, c_prev, x):
    a_i = params.w_xi @ x + params.w_hi @ h_prev
    a_f = params.w_xf @ x + params.w_hf @ h_prev
    if params.p_i is not None:
        a_i = a_i + params.p_i * c_prev
        a_f = a_f + params.p_f * c_prev
    if params.b_i is not None:
        a_i = a_i + params.b_i
        a_f = a_f + params.b_f
    i = sigmoid(a_i)
    f = sigmoid(a_f)
    a_c = params.w_xc @ x + params.w_hc @ h_prev
    if params.b_c is not None:
        a_c = a_c + params.b_c
    cand = np.tanh(a_c)
    c = f * c_prev + i * cand
    a_o = params.w_xo @ x + params.w_ho @ h_prev
    if params.p_o is not None:
        a_o = a_o + params.p_o * c
    if params.b_o is not None:
        a_o = a_o + params.b_o
    o = sigmoid(a_o)
    tc = np.tanh(c)
    h = o * tc
    cache = (i, f, o, cand, c, tc, h_prev, c_prev, x)
    return h, c, cache


def _gru_step_cached(params, h_prev, x):
    a_z = params.w_xz @ x + params.w_hz @ h_prev
    a_r = params.w_xr @ x + params.w_hr @ h_prev
    if params.b_z is not None:
        a_z = a_z + params.b_z
        a_r = a_r + params.b_r
    z = sigmoid(a_z)
    r = sigmoid(a_r)
    rh = r * h_prev
    a_h = params.w_xh @ x + params.w_hh @ rh
    if params.b_h is not None:
        a_h = a_h + params.b_h
    cand = np.tanh(a_h)
    h = (1.0 - z) * h_prev + z * cand
    cache = (z, r, rh, cand, h_prev, x)
    return h, cache


# ---------------------------------------------------------------------------
# sequence forward / backward

def _validate_sequence(params, features):
    frames = _as_f64(getattr(features, "frames", features))
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ShapeError("feature sequence must be a nonempty T x d matrix")
    if frames.shape[1] != params.input_size:
        raise ShapeError(
            f"feature width {frames.shape[1]} != cell input size {params.input_size}")
    return frames


def _forward_states(kind, params, frames):
    """Run the recurrence over all frames, returning states and caches."""
    p = params.hidden_size
    state = np.zeros(p)
    caches = []
    states = np.empty((frames.shape[0], p))
    if kind == "rnn":
        for t, x in enumerate(frames):
            a = params.w_rec @ state + params.w_in @ x
            if params.b_hidden is not None:
                a = a + params.b_hidden
            s_prev = state
            state = np.tanh(a)
            states[t] = state
            caches.append((state, s_prev, x))
    elif kind == "lstm":
        c = np.zeros(p)
        for t, x in enumerate(frames):
            state, c, cache = _lstm_step_cached(params, state, c, x)
            states[t] = state
            caches.append(cache)
    else:
        for t, x in enumerate(frames):
            state, cache = _gru_step_cached(params, state, x)
            states[t] = state
            caches.append(cache)
    return states, caches


def _readout_logits(params, states, readout):
    if readout not in READOUTS:
        raise ValueError(f"unknown readout {readout!r}")
    pooled = states[-1] if readout == "last" else states.mean(axis=0)
    logits = params.w_out @ pooled
    if params.b_out is not None:
        logits = logits + params.b_out
    return logits, pooled


def unroll_forward(kind, params, features, readout="last"):
    """Forward pass over one sequence from zero initial state.

    Returns (states, logits, probs) where states is T x p.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    frames = _validate_sequence(params, features)
    states, _ = _forward_states(kind, params, frames)
    logits, _ = _readout_logits(params, states, readout)
    return states, logits, softmax(logits)


def sequence_loss(kind, params, features, label, readout="last"):
    """Cross-entropy of the softmaxed readout for one labeled sequence."""
    frames = _validate_sequence(params, features)
    states, _ = _forward_states(kind, params, frames)
    logits, _ = _readout_logits(params, states, readout)
    loss, _, _ = softmax_xent_with_grad(logits, label)
    return loss


def bptt_backward(kind, params, features, label, readout="last", probe=None):
    """Loss and exact reverse-mode gradients for one labeled sequence.

    `probe`, when given a list, receives the l2 norm of dloss/dstate at each
    timestep (index 0 = first frame).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    frames = _validate_sequence(params, features)
    T = frames.shape[0]
    states, caches = _forward_states(kind, params, frames)
    logits, pooled = _readout_logits(params, states, readout)
    loss, _, dlogits = softmax_xent_with_grad(logits, label)

    grads = {name: np.zeros_like(t) for name, t in params.tensors()}
    grads["w_out"] += np.outer(dlogits, pooled)
    if params.b_out is not None:
        grads["b_out"] += dlogits

    dh_readout = params.w_out.T @ dlogits
    # dloss/dh_t has a direct readout term (all t for mean pooling, only t=T
    # for last) plus whatever flows back through later steps.
    if readout == "last":
        direct = [np.zeros_like(dh_readout)] * (T - 1) + [dh_readout]
    else:
        direct = [dh_readout / T] * T

    probe_norms = [0.0] * T if probe is not None else None

    if kind == "rnn":
        dh_next = np.zeros(params.hidden_size)
        for t in range(T - 1, -1, -1):
            s, s_prev, x = caches[t]
            dh = dh_next + direct[t]
            if probe_norms is not None:
                probe_norms[t] = float(np.linalg.norm(dh))
            da = dh * (1.0 - s * s)
            grads["w_in"] += np.outer(da, x)
            grads["w_rec"] += np.outer(da, s_prev)
            if params.b_hidden is not None:
                grads["b_hidden"] += da
            dh_next = params.w_rec.T @ da
    elif kind == "lstm":
        dh_next = np.zeros(params.hidden_size)
        dc_next = np.zeros(params.hidden_size)
        peep = params.p_i is not None
        for t in range(T - 1, -1, -1):
            i, f, o, cand, c, tc, h_prev, c_prev, x = caches[t]
            dh = dh_next + direct[t]
            if probe_norms is not None:
                probe_norms[t] = float(np.linalg.norm(dh))
            do = dh * tc
            da_o = do * o * (1.0 - o)
            # c feeds h through tanh, the next step's carry, and (with
            # peepholes) this step's output gate preactivation.
            dc = dh * o * (1.0 - tc * tc) + dc_next
            if peep:
                dc = dc + params.p_o * da_o
            di = dc * cand
            df = dc * c_prev
            dcand = dc * i
            da_i = di * i * (1.0 - i)
            da_f = df * f * (1.0 - f)
            da_c = dcand * (1.0 - cand * cand)
            grads["w_xi"] += np.outer(da_i, x)
            grads["w_xf"] += np.outer(da_f, x)
            grads["w_xo"] += np.outer(da_o, x)
            grads["w_xc"] += np.outer(da_c, x)
            grads["w_hi"] += np.outer(da_i, h_prev)
            grads["w_hf"] += np.outer(da_f, h_prev)
            grads["w_ho"] += np.outer(da_o, h_prev)
            grads["w_hc"] += np.outer(da_c, h_prev)
            if peep:
                grads["p_i"] += da_i * c_prev
                grads["p_f"] += da_f * c_prev
                grads["p_o"] += da_o * c
            if params.b_i is not None:
                grads["b_i"] += da_i
                grads["b_f"] += da_f
                grads["b_o"] += da_o
                grads["b_c"] += da_c
            dh_next = (params.w_hi.T @ da_i + params.w_hf.T @ da_f
                       + params.w_ho.T @ da_o + params.w_hc.T @ da_c)
            dc_next = dc * f
            if peep:
                dc_next = dc_next + params.p_i * da_i + params.p_f * da_f
    else:
        dh_next = np.zeros(params.hidden_size)
        for t in range(T - 1, -1, -1):
            z, r, rh, cand, h_prev, x = caches[t]
            dh = dh_next + direct[t]
            if probe_norms is not None:
                probe_norms[t] = float(np.linalg.norm(dh))
            dz = dh * (cand - h_prev)
            dcand = dh * z
            da_z = dz * z * (1.0 - z)
            da_h = dcand * (1.0 - cand * cand)
            drh = params.w_hh.T @ da_h
            dr = drh * h_prev
            da_r = dr * r * (1.0 - r)
            grads["w_xz"] += np.outer(da_z, x)
            grads["w_xr"] += np.outer(da_r, x)
            grads["w_xh"] += np.outer(da_h, x)
            grads["w_hz"] += np.outer(da_z, h_prev)
            grads["w_hr"] += np.outer(da_r, h_prev)
            grads["w_hh"] += np.outer(da_h, rh)
            if params.b_z is not None:
                grads["b_z"] += da_z
                grads["b_r"] += da_r
                grads["b_h"] += da_h
            dh_next = (dh * (1.0 - z) + params.w_hz.T @ da_z
                       + params.w_hr.T @ da_r + drh * r)

    if probe is not None:
        probe.extend(probe_norms)
    return loss, CellGradients(grads)


def grad_check(kind, params, features, label, eps=1e-5, readout="last"):
    """Max relative error of BPTT against central finite differences."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    _, grads = bptt_backward(kind, params, features, label, readout=readout)
    worst = 0.0
    for name, tensor in params.tensors():
        analytic = grads.tensors[name]
        flat = tensor.reshape(-1)
        aflat = analytic.reshape(-1)
        for idx in range(flat.shape[0]):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = sequence_loss(kind, params, features, label, readout=readout)
            flat[idx] = orig - eps
            lm = sequence_loss(kind, params, features, label, readout=readout)
            flat[idx] = orig
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(aflat[idx]), abs(numeric), 1e-12)
            worst = max(worst, abs(aflat[idx] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# bookkeeping

def param_count(kind, d, p, use_bias=False, peepholes=True):
    """Scalar count of the recurrent unit's tensors (readout excluded)."""
    if kind not in KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    if d < 1 or p < 1:
        raise ValueError("dimensions must be positive")
    per_gate = p * d + p * p
    if kind == "rnn":
        return per_gate + (p if use_bias else 0)
    if kind == "lstm":
        n = 4 * per_gate
        if peepholes:
            n += 3 * p
        if use_bias:
            n += 4 * p
        return n
    n = 3 * per_gate
    if use_bias:
        n += 3 * p
    return n


def readout_param_count(p, n_out, use_bias=False):
    return n_out * p + (n_out if use_bias else 0)


# ---------------------------------------------------------------------------
# serialization: versioned text dump, hex floats for exact round-trips

_FORMAT_TAG = "gated-ser-params v1"

_PARAM_CLASSES = {"rnn": RnnParams, "lstm": LstmParams, "gru": GruParams}


def save_params(params, path):
    lines = [_FORMAT_TAG, f"kind {params.kind}"]
    for name, tensor in params.tensors():
        shape = " ".join(str(s) for s in tensor.shape)
        lines.append(f"tensor {name} {shape}")
        lines.append(" ".join(float(v).hex() for v in tensor.reshape(-1)))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    """Read a dump written by save_params; returns (kind, params)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"{path}: not a {_FORMAT_TAG} file")
    kind = lines[1].split()[1]
    if kind not in KINDS:
        raise ValueError(f"{path}: unknown cell kind {kind!r}")
    tensors = {}
    i = 2
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        head = lines[i].split()
        if head[0] != "tensor":
            raise ValueError(f"{path}: unexpected line {lines[i]!r}")
        name = head[1]
        shape = tuple(int(s) for s in head[2:])
        values = np.array([float.fromhex(tok) for tok in lines[i + 1].split()])
        tensors[name] = values.reshape(shape)
        i += 2
    cls = _PARAM_CLASSES[kind]
    return kind, cls(**tensors)

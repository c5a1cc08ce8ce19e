"""Frame classifiers: a tanh MLP and a stacked LSTM, both with softmax outputs.

Parameters live in an ordered ``dict`` of float64 arrays so that the
optimiser, the gradient checker and the serializer can treat both
architectures uniformly. Output index 0 is the whisper class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio_io import Label
from ..errors import DimMismatch
from ..features.extract import Normalizer

WHISPER = 0
NORMAL = 1
PROB_CLAMP = 1e-12


def label_index(label):
    return WHISPER if Label(label) is Label.WHISPER else NORMAL


@dataclass
class PosteriorTrajectory:
    p_whisper: np.ndarray
    utterance_id: str = ""
    label: Label | None = None

    def __post_init__(self):
        self.p_whisper = np.asarray(self.p_whisper, dtype=np.float64)

    def __len__(self):
        return len(self.p_whisper)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def glorot(rng, fan_in, fan_out, shape=None):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape or (fan_in, fan_out))


def f32_exact(a):
    """Round to the nearest float32 but keep float64 storage."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def cross_entropy_loss(posteriors, label=None, mask=None):
    """Mean of ``-ln p_correct`` over (masked) frames.

    *posteriors* is either a :class:`PosteriorTrajectory` (whisper-class
    probabilities, scored against *label* or the trajectory's own label) or
    an array already holding the correct-class probability when no label
    is available. Probabilities are clamped to [1e-12, 1-1e-12].
    """
    label = label if label is not None else getattr(posteriors, "label", None)
    p = np.asarray(getattr(posteriors, "p_whisper", posteriors), dtype=np.float64)
    if label is not None and Label(label) is Label.NORMAL:
        p = 1.0 - p
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    nll = -np.log(p)
    if mask is None:
        return float(nll.mean())
    return float((nll * mask).sum() / mask.sum())


def _output_grad(probs, targets, weights):
    """d(weighted nll)/d(logits); frames whose p is clamped contribute nothing."""
    n = probs.shape[:-1]
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    p_c = np.take_along_axis(probs, targets[..., None], axis=-1)[..., 0]
    live = (p_c > PROB_CLAMP) & (p_c < 1.0 - PROB_CLAMP)
    w = (weights * live).reshape(n + (1,))
    return (probs - onehot) * w


class Model:
    kind = None

    def __init__(self, params, normalizer=None):
        self.params = params
        self.normalizer = normalizer

    @property
    def input_dim(self):
        raise NotImplementedError

    @property
    def num_params(self):
        return sum(p.size for p in self.params.values())

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def prepare(self, values):
        x = np.asarray(values, dtype=np.float64)
        if x.shape[-1] != self.input_dim:
            raise DimMismatch(f"input dim {x.shape[-1]} != model input dim {self.input_dim}")
        if not np.isfinite(x).all():
            raise DimMismatch("input contains NaN or Inf")
        return self.normalizer(x) if self.normalizer is not None else x

    def posteriors(self, fm):
        """Whisper-class posterior trajectory for a feature matrix."""
        probs = self.forward(self.prepare(fm.values))
        return PosteriorTrajectory(probs[..., WHISPER], fm.utterance_id, fm.label)


# -- MLP -------------------------------------------------------------------------

class MLP(Model):
    """Per-frame tanh MLP; ``layer_dims = (input, h1, h2, h3, 2)``."""

    kind = "mlp"

    def __init__(self, layer_dims, params=None, normalizer=None, seed=0):
        self.layer_dims = tuple(int(d) for d in layer_dims)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for i, (a, b) in enumerate(zip(self.layer_dims[:-1], self.layer_dims[1:])):
                params[f"W{i}"] = f32_exact(glorot(rng, a, b))
                params[f"b{i}"] = np.zeros(b)
        super().__init__(params, normalizer)

    @classmethod
    def create(cls, input_dim, hidden=(128, 128, 64), seed=0):
        if len(hidden) != 3:
            raise ValueError("the MLP has exactly three hidden layers")
        return cls((input_dim, *hidden, 2), seed=seed)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def num_layers(self):
        return len(self.layer_dims) - 1

    def _forward(self, x):
        acts = [x]
        h = x
        for i in range(self.num_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            h = np.tanh(z) if i < self.num_layers - 1 else softmax(z)
            acts.append(h)
        return acts

    def forward(self, x):
        return self._forward(x)[-1]

    def loss_and_grads(self, x, targets, weights=None):
        """Mean frame cross-entropy of ``x [N, D]`` against class indices."""
        targets = np.asarray(targets)
        if weights is None:
            weights = np.full(len(x), 1.0 / len(x))
        acts = self._forward(x)
        probs = acts[-1]
        p_c = np.take_along_axis(probs, targets[:, None], axis=-1)[:, 0]
        loss = float((-np.log(np.clip(p_c, PROB_CLAMP, 1 - PROB_CLAMP)) * weights).sum())
        grads = {}
        dz = _output_grad(probs, targets, weights)
        for i in reversed(range(self.num_layers)):
            grads[f"W{i}"] = acts[i].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            if i:
                dz = (dz @ self.params[f"W{i}"].T) * (1.0 - acts[i] ** 2)
        return loss, {k: grads[k] for k in self.params}


def mlp_forward(model, x):
    """Class probabilities (whisper, normal) for one or more frames."""
    return model.forward(model.prepare(x))


# -- LSTM ------------------------------------------------------------------------

class LSTM(Model):
    """Stacked unidirectional LSTM with an affine softmax read-out per frame.

    Gate blocks along the last weight axis are ordered input, forget,
    output, candidate.
    """

    kind = "lstm"

    def __init__(self, input_dim, hidden=64, num_layers=2, params=None, normalizer=None,
                 seed=0, forget_bias=1.0):
        self._input_dim = int(input_dim)
        self.hidden = int(hidden)
        self.num_layers = int(num_layers)
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            H = self.hidden
            for layer in range(self.num_layers):
                d = self._input_dim if layer == 0 else H
                params[f"Wx{layer}"] = f32_exact(glorot(rng, d, H, (d, 4 * H)))
                params[f"Wh{layer}"] = f32_exact(glorot(rng, H, H, (H, 4 * H)))
                b = np.zeros(4 * H)
                b[H:2 * H] = forget_bias
                params[f"b{layer}"] = b
            params["Wy"] = f32_exact(glorot(rng, H, 2))
            params["by"] = np.zeros(2)
        super().__init__(params, normalizer)

    @property
    def input_dim(self):
        return self._input_dim

    @property
    def dims(self):
        return (self._input_dim, self.hidden, self.num_layers, 2)

    def zero_state(self, batch):
        z = np.zeros((batch, self.hidden))
        return [(z.copy(), z.copy()) for _ in range(self.num_layers)]

    def _layer_forward(self, layer, x, h, c):
        H = self.hidden
        Wh = self.params[f"Wh{layer}"]
        xw = x @ self.params[f"Wx{layer}"] + self.params[f"b{layer}"]
        B, T = x.shape[:2]
        gates = np.empty((B, T, 4 * H))
        cells = np.empty((B, T, H))
        hs = np.empty((B, T, H))
        h_prev = np.empty((B, T, H))
        c_prev = np.empty((B, T, H))
        for t in range(T):
            h_prev[:, t] = h
            c_prev[:, t] = c
            z = xw[:, t] + h @ Wh
            g = np.empty_like(z)
            g[:, :3 * H] = sigmoid(z[:, :3 * H])
            g[:, 3 * H:] = np.tanh(z[:, 3 * H:])
            c = g[:, H:2 * H] * c + g[:, :H] * g[:, 3 * H:]
            h = g[:, 2 * H:3 * H] * np.tanh(c)
            gates[:, t] = g
            cells[:, t] = c
            hs[:, t] = h
        cache = (x, gates, cells, h_prev, c_prev)
        return hs, (h, c), cache

    def _layer_backward(self, layer, dhs, cache):
        H = self.hidden
        x, gates, cells, h_prev, c_prev = cache
        Wh = self.params[f"Wh{layer}"]
        B, T = dhs.shape[:2]
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            g = gates[:, t]
            i, f, o, cand = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
            tc = np.tanh(cells[:, t])
            dh = dhs[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t]
            dz[:, :H] = dc * cand * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev[:, t] * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
            dz[:, 3 * H:] = dc * i * (1.0 - cand * cand)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        flat_dz = dz_all.reshape(-1, 4 * H)
        grads = {
            f"Wx{layer}": x.reshape(-1, x.shape[-1]).T @ flat_dz,
            f"Wh{layer}": h_prev.reshape(-1, H).T @ flat_dz,
            f"b{layer}": flat_dz.sum(axis=0),
        }
        dx = dz_all @ self.params[f"Wx{layer}"].T
        return dx, grads

    def run(self, x, state=None):
        """Forward ``x [B, T, D]``; returns (probs [B, T, 2], final state, caches)."""
        if state is None:
            state = self.zero_state(x.shape[0])
        caches = []
        new_state = []
        h = x
        for layer in range(self.num_layers):
            h, st, cache = self._layer_forward(layer, h, *state[layer])
            new_state.append(st)
            caches.append(cache)
        probs = softmax(h @ self.params["Wy"] + self.params["by"])
        return probs, new_state, (caches, h)

    def forward(self, x):
        single = x.ndim == 2
        xb = x[None] if single else x
        probs = self.run(xb)[0]
        return probs[0] if single else probs

    def loss_and_grads(self, x, targets, weights=None, state=None):
        """Loss and gradients for ``x [B, T, D]`` (or ``[T, D]``).

        *targets* holds one class index per sequence (propagated to every
        frame); *weights* ``[B, T]`` scales each frame's loss and defaults to
        a plain mean. *state* is the carried (h, c) per layer, treated as a
        constant. Returns ``(loss, grads, final_state)``.
        """
        if x.ndim == 2:
            x = x[None]
        B, T = x.shape[:2]
        targets = np.broadcast_to(np.asarray(targets).reshape(-1, 1), (B, T))
        if weights is None:
            weights = np.full((B, T), 1.0 / (B * T))
        probs, new_state, (caches, top) = self.run(x, state)
        p_c = np.take_along_axis(probs, targets[..., None], axis=-1)[..., 0]
        loss = float((-np.log(np.clip(p_c, PROB_CLAMP, 1 - PROB_CLAMP)) * weights).sum())
        dlogits = _output_grad(probs, targets, weights)
        grads = {
            "Wy": top.reshape(-1, self.hidden).T @ dlogits.reshape(-1, 2),
            "by": dlogits.reshape(-1, 2).sum(axis=0),
        }
        dh = dlogits @ self.params["Wy"].T
        for layer in reversed(range(self.num_layers)):
            dh, g = self._layer_backward(layer, dh, caches[layer])
            grads.update(g)
        return loss, {k: grads[k] for k in self.params}, new_state


def lstm_forward(model, x_seq):
    """Per-frame whisper posteriors for one ``[T, D]`` sequence (zero initial state)."""
    x = model.prepare(x_seq)
    if x.shape[0] == 0:
        raise DimMismatch("empty sequence")
    return model.forward(x)[:, WHISPER]


def build_model(kind, input_dim, seed=0, mlp_hidden=(128, 128, 64), lstm_hidden=64,
                lstm_layers=2):
    if kind == "mlp":
        return MLP.create(input_dim, mlp_hidden, seed=seed)
    if kind == "lstm":
        return LSTM(input_dim, lstm_hidden, lstm_layers, seed=seed)
    raise ValueError(f"unknown model kind {kind!r}")


def with_normalizer(model, normalizer):
    m = model.copy()
    m.normalizer = normalizer if normalizer is not None else Normalizer.identity(model.input_dim)
    return m

"""Fixed-topology dense networks with explicit backprop and Adam.

Everything is float64 and batched: inputs are ``(batch, features)`` arrays,
a single vector is treated as a batch of one. ``backward`` sums parameter
gradients over the batch rows, so a mean loss must put its ``1/batch`` into
the upstream gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")


class ShapeError(ValueError):
    pass


class GradientError(FloatingPointError):
    """Non-finite gradient reached the optimizer."""


@dataclass(frozen=True)
class LayerSpec:
    widths: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        acts = tuple(self.activations)
        if len(widths) < 2:
            raise ShapeError("a network needs an input and an output width")
        if any(w < 1 for w in widths):
            raise ShapeError(f"zero-width layer in {widths}")
        if len(acts) != len(widths) - 1:
            raise ShapeError(f"{len(widths) - 1} layers but {len(acts)} activations")
        bad = [a for a in acts if a not in ACTIVATIONS]
        if bad:
            raise ShapeError(f"unknown activation(s) {bad}")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", acts)

    @classmethod
    def mlp(cls, n_in: int, hidden: Sequence[int], n_out: int, activation: str) -> "LayerSpec":
        """Hidden layers share ``activation``; the output layer is linear."""
        widths = (n_in, *hidden, n_out)
        return cls(widths, (activation,) * len(hidden) + ("identity",))


@dataclass
class MlpParams:
    spec: LayerSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.spec.widths[i + 1], self.spec.widths[i])
            if w.shape != shape or b.shape != (shape[0],):
                raise ShapeError(f"layer {i}: expected W{shape}, b({shape[0]},)")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ShapeError(f"layer {i} has non-finite parameters")

    @property
    def n_in(self) -> int:
        return self.spec.widths[0]

    @property
    def n_out(self) -> int:
        return self.spec.widths[-1]

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_json(self) -> dict:
        return {
            "widths": list(self.spec.widths),
            "activations": list(self.spec.activations),
            "layers": [
                {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "MlpParams":
        spec = LayerSpec(tuple(d["widths"]), tuple(d["activations"]))
        ws, bs = [], []
        for layer in d["layers"]:
            ws.append(np.array(layer["weight"], dtype=np.float64).reshape(layer["shape"]))
            bs.append(np.array(layer["bias"], dtype=np.float64))
        return cls(spec, ws, bs)


def init_params(spec: LayerSpec, rng: np.random.Generator, scale: float = 1.0) -> MlpParams:
    """Weights ~ U[-s/sqrt(fan_in), s/sqrt(fan_in)], zero biases."""
    ws, bs = [], []
    for n_in, n_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = scale / np.sqrt(n_in)
        ws.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
        bs.append(np.zeros(n_out))
    return MlpParams(spec, ws, bs)


def _act(name: str, h: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(h)
    if name == "relu":
        return np.maximum(h, 0.0)
    return h


def _act_grad(name: str, h: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (h > 0).astype(h.dtype)
    return np.ones_like(h)


class Tape:
    """Inputs and pre-activations of every layer from one forward pass."""

    def __init__(self, params: MlpParams, inputs: list[np.ndarray], pre: list[np.ndarray],
                 post: list[np.ndarray]):
        self.params_id = id(params)
        self.inputs = inputs
        self.pre = pre
        self.post = post
        self.consumed = False


def _as_batch(x, width: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"expected input width {width}, got shape {np.shape(x)}")
    return x, single


def forward(params: MlpParams, x, record: bool = False):
    """Evaluate the network; with ``record`` also return a Tape."""
    a, single = _as_batch(x, params.n_in)
    inputs, pre, post = [], [], []
    for w, b, act in zip(params.weights, params.biases, params.spec.activations):
        inputs.append(a)
        h = a @ w.T + b
        a = _act(act, h)
        pre.append(h)
        post.append(a)
    y = a[0] if single else a
    if record:
        return y, Tape(params, inputs, pre, post)
    return y


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def backward(params: MlpParams, tape: Tape | None, upstream) -> tuple[Grads, np.ndarray]:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and input."""
    if tape is None or tape.consumed:
        raise RuntimeError("backward needs a fresh tape from forward(record=True)")
    if tape.params_id != id(params):
        raise RuntimeError("tape was recorded with different parameters")
    tape.consumed = True
    g, single = _as_batch(upstream, params.n_out)
    if g.shape[0] != tape.inputs[0].shape[0]:
        raise ShapeError("upstream gradient batch size does not match the tape")
    n = len(params.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        act = params.spec.activations[i]
        g = g * _act_grad(act, tape.pre[i], tape.post[i])
        gw[i] = g.T @ tape.inputs[i]
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i]
    return Grads(gw, gb), (g[0] if single else g)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray], lr: float = 1e-4) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr=lr)

    def copy(self) -> "AdamState":
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.step, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient at optimizer step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)

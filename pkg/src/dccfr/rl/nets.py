"""Flat-parameter MLPs with exact backprop and an Adam optimizer.

Parameters live in one contiguous float64 vector so the forward/backward
kernels, gradient clipping, and Adam all operate on plain arrays; layer
shapes are described by offset tables computed once per net.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import NonFinite, ShapeMismatch

HIDDEN_SIZES = (128, 64, 16)


@dataclass
class MlpParams:
    """One network: sizes, flat parameters, and cached layout tables."""

    sizes: np.ndarray
    theta: np.ndarray
    w_off: np.ndarray = field(repr=False, default=None)
    b_off: np.ndarray = field(repr=False, default=None)
    h_off: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        w_off, b_off, h_off, total = kernels.layer_offsets(self.sizes)
        if self.theta.shape != (total,):
            raise ShapeMismatch(f"theta has {self.theta.shape}, layout needs ({total},)")
        self.w_off, self.b_off, self.h_off = w_off, b_off, h_off

    @property
    def n_params(self) -> int:
        return int(self.theta.size)

    def weight(self, layer: int) -> np.ndarray:
        nin, nout = int(self.sizes[layer]), int(self.sizes[layer + 1])
        start = int(self.w_off[layer])
        return self.theta[start:start + nin * nout].reshape(nin, nout)

    def bias(self, layer: int) -> np.ndarray:
        nout = int(self.sizes[layer + 1])
        start = int(self.b_off[layer])
        return self.theta[start:start + nout]

    def to_json_obj(self) -> dict:
        return {
            "layer_sizes": [int(s) for s in self.sizes],
            "weights": [self.weight(l).tolist() for l in range(len(self.sizes) - 1)],
            "biases": [self.bias(l).tolist() for l in range(len(self.sizes) - 1)],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "MlpParams":
        sizes = np.asarray(obj["layer_sizes"], dtype=np.int64)
        net = init_mlp(sizes, rng=np.random.default_rng(0))
        for layer in range(len(sizes) - 1):
            net.weight(layer)[:] = np.asarray(obj["weights"][layer], dtype=np.float64)
            net.bias(layer)[:] = np.asarray(obj["biases"][layer], dtype=np.float64)
        return net


def init_mlp(sizes, rng: np.random.Generator, out_scale: float = 1.0) -> MlpParams:
    """Orthogonal hidden layers, small-scaled output layer, zero biases."""
    sizes = np.asarray(sizes, dtype=np.int64)
    _, _, _, total = kernels.layer_offsets(sizes)
    net = MlpParams(sizes=sizes, theta=np.zeros(total))
    n_layers = len(sizes) - 1
    for layer in range(n_layers):
        gain = out_scale if layer == n_layers - 1 else np.sqrt(2.0)
        net.weight(layer)[:] = _orthogonal(rng, int(sizes[layer]),
                                           int(sizes[layer + 1])) * gain
    return net


def _orthogonal(rng, nin, nout):
    a = rng.standard_normal((nin, nout))
    q, r = np.linalg.qr(a if nin >= nout else a.T)
    q = q * np.sign(np.diag(r))
    if nin < nout:
        q = q.T
    return q[:nin, :nout]


def forward(net: MlpParams, x: np.ndarray) -> np.ndarray:
    """Single-input forward pass; returns the output vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != net.sizes[0]:
        raise ShapeMismatch(f"input size {x.shape} vs expected ({net.sizes[0]},)")
    if not np.all(np.isfinite(x)):
        raise NonFinite("non-finite network input")
    y, _ = kernels.mlp_forward(net.theta, net.sizes, net.w_off, net.b_off,
                               net.h_off, x.reshape(1, -1))
    return y[0]


def forward_batch(net: MlpParams, x: np.ndarray):
    """Batched forward pass; returns (outputs, activation cache)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.sizes[0]:
        raise ShapeMismatch(f"batch shape {x.shape} vs input size {net.sizes[0]}")
    return kernels.mlp_forward(net.theta, net.sizes, net.w_off, net.b_off,
                               net.h_off, x)


def backward_batch(net: MlpParams, x: np.ndarray, h: np.ndarray,
                   dy: np.ndarray) -> np.ndarray:
    """Gradient of sum(loss) w.r.t. theta given dL/dy from the caller."""
    return kernels.mlp_backward(net.theta, net.sizes, net.w_off, net.b_off,
                                net.h_off, np.ascontiguousarray(x, dtype=np.float64),
                                h, np.ascontiguousarray(dy, dtype=np.float64))


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm and norm > 0.0:
        return grad * (max_norm / norm)
    return grad


@dataclass
class Adam:
    """Adaptive-moment optimizer over a flat parameter vector."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.v / (1.0 - self.beta2 ** self.step_count)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

"""
Layers of the denoiser with hand-derived reverse-mode gradients.

Every layer works on a batch. `forward` returns the output plus a cache that
`backward` consumes; `backward` returns gradients keyed like `parameters()`.
Weights follow the (out_features, in_features) convention, so a layer
computes x @ W.T + b.
"""
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from utils.error_handler import DimensionMismatch

Params = Dict[str, np.ndarray]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform in +-sqrt(6 / (fan_in + fan_out))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv1dLayer:
    """
    Stride-one valid convolution with a rectifier:

        out[b, i, l] = relu(bias[l] + sum_a weight[l, a] * x[b, i + a])
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, use_bias: bool = True):
        self.weight = np.array(weight, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)
        self.use_bias = use_bias
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionMismatch("Conv weight must be (filters, taps) with one bias per filter",
                                    details={"weight": list(self.weight.shape), "bias": list(self.bias.shape)})

    @classmethod
    def initialize(cls, filters: int, taps: int, rng: np.random.Generator, use_bias: bool = True) -> "Conv1dLayer":
        weight = glorot_uniform(rng, (filters, taps), fan_in=taps, fan_out=filters)
        return cls(weight, np.zeros(filters), use_bias)

    @property
    def filters(self) -> int:
        return int(self.weight.shape[0])

    @property
    def taps(self) -> int:
        return int(self.weight.shape[1])

    def parameters(self) -> Params:
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, dict]:
        if x.ndim != 2 or x.shape[1] < self.taps:
            raise DimensionMismatch("Conv input must be (batch, N) with N >= taps",
                                    details={"input": list(x.shape), "taps": self.taps})
        windows = np.lib.stride_tricks.sliding_window_view(x, self.taps, axis=1)
        pre = windows @ self.weight.T
        if self.use_bias:
            pre = pre + self.bias
        return relu(pre), {"windows": windows, "pre": pre}

    def backward(self, grad_out: np.ndarray, cache: dict) -> Params:
        grad_pre = np.where(cache["pre"] > 0.0, grad_out, 0.0)
        grad_weight = np.einsum("bil,bia->la", grad_pre, cache["windows"])
        if self.use_bias:
            grad_bias = grad_pre.sum(axis=(0, 1))
        else:
            grad_bias = np.zeros_like(self.bias)
        return {"weight": grad_weight, "bias": grad_bias}


GRU_WEIGHTS = ("W_iz", "W_ir", "W_in", "W_hz", "W_hr", "W_hn")
GRU_BIASES = ("b_iz", "b_hz", "b_ir", "b_hr", "b_in", "b_hn")


class GruLayer:
    """
    Gated recurrent layer, sigmoid recurrent activation, tanh candidate:

        z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
        r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
        n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
        h_t = (1 - z_t) * n_t + z_t * h_{t-1}
    """

    def __init__(self, weights: Params, biases: Params):
        self.weights = {k: np.array(weights[k], dtype=np.float64) for k in GRU_WEIGHTS}
        self.biases = {k: np.array(biases[k], dtype=np.float64) for k in GRU_BIASES}
        hidden = self.weights["W_hz"].shape[0]
        inputs = self.weights["W_iz"].shape[1]
        for k in ("W_iz", "W_ir", "W_in"):
            if self.weights[k].shape != (hidden, inputs):
                raise DimensionMismatch(f"{k} must be ({hidden}, {inputs})", details={k: list(self.weights[k].shape)})
        for k in ("W_hz", "W_hr", "W_hn"):
            if self.weights[k].shape != (hidden, hidden):
                raise DimensionMismatch(f"{k} must be ({hidden}, {hidden})", details={k: list(self.weights[k].shape)})
        for k in GRU_BIASES:
            if self.biases[k].shape != (hidden,):
                raise DimensionMismatch(f"{k} must have {hidden} entries", details={k: list(self.biases[k].shape)})

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "GruLayer":
        weights = {}
        for k in GRU_WEIGHTS:
            fan_in = input_size if k.startswith("W_i") else hidden_size
            weights[k] = glorot_uniform(rng, (hidden_size, fan_in), fan_in=fan_in, fan_out=hidden_size)
        biases = {k: np.zeros(hidden_size) for k in GRU_BIASES}
        return cls(weights, biases)

    @property
    def hidden_size(self) -> int:
        return int(self.weights["W_hz"].shape[0])

    @property
    def input_size(self) -> int:
        return int(self.weights["W_iz"].shape[1])

    def parameters(self) -> Params:
        return {**self.weights, **self.biases}

    def forward(self, seq: np.ndarray, h0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, dict]:
        if seq.ndim != 3 or seq.shape[2] != self.input_size:
            raise DimensionMismatch("GRU input must be (batch, steps, input_size)",
                                    details={"input": list(seq.shape), "input_size": self.input_size})
        batch, steps, _ = seq.shape
        hidden = self.hidden_size
        w, b = self.weights, self.biases

        # input projections for every step at once
        xz = seq @ w["W_iz"].T + b["b_iz"]
        xr = seq @ w["W_ir"].T + b["b_ir"]
        xn = seq @ w["W_in"].T + b["b_in"]

        h = np.zeros((batch, steps + 1, hidden))
        if h0 is not None:
            h[:, 0] = h0
        z = np.empty((batch, steps, hidden))
        r = np.empty_like(z)
        n = np.empty_like(z)
        hn = np.empty_like(z)
        for t in range(steps):
            h_prev = h[:, t]
            z[:, t] = expit(xz[:, t] + h_prev @ w["W_hz"].T + b["b_hz"])
            r[:, t] = expit(xr[:, t] + h_prev @ w["W_hr"].T + b["b_hr"])
            hn[:, t] = h_prev @ w["W_hn"].T + b["b_hn"]
            n[:, t] = np.tanh(xn[:, t] + r[:, t] * hn[:, t])
            h[:, t + 1] = (1.0 - z[:, t]) * n[:, t] + z[:, t] * h_prev

        cache = {"seq": seq, "h": h, "z": z, "r": r, "n": n, "hn": hn}
        return h[:, 1:], cache

    def backward(self, grad_h: np.ndarray, cache: dict) -> Tuple[Params, np.ndarray]:
        """Backpropagation through time; returns parameter grads and d(loss)/d(seq)"""
        seq, h, z, r, n, hn = (cache[k] for k in ("seq", "h", "z", "r", "n", "hn"))
        w = self.weights
        steps = seq.shape[1]

        grads = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        grad_seq = np.zeros_like(seq)
        carry = np.zeros_like(h[:, 0])

        for t in reversed(range(steps)):
            h_prev = h[:, t]
            dh = grad_h[:, t] + carry

            dn = dh * (1.0 - z[:, t])
            dz = dh * (h_prev - n[:, t])
            dh_prev = dh * z[:, t]

            da_n = dn * (1.0 - n[:, t] ** 2)
            dr = da_n * hn[:, t]
            dhn = da_n * r[:, t]
            da_z = dz * z[:, t] * (1.0 - z[:, t])
            da_r = dr * r[:, t] * (1.0 - r[:, t])

            x_t = seq[:, t]
            grads["W_in"] += da_n.T @ x_t
            grads["b_in"] += da_n.sum(axis=0)
            grads["W_hn"] += dhn.T @ h_prev
            grads["b_hn"] += dhn.sum(axis=0)
            grads["W_iz"] += da_z.T @ x_t
            grads["b_iz"] += da_z.sum(axis=0)
            grads["W_hz"] += da_z.T @ h_prev
            grads["b_hz"] += da_z.sum(axis=0)
            grads["W_ir"] += da_r.T @ x_t
            grads["b_ir"] += da_r.sum(axis=0)
            grads["W_hr"] += da_r.T @ h_prev
            grads["b_hr"] += da_r.sum(axis=0)

            grad_seq[:, t] = da_n @ w["W_in"] + da_z @ w["W_iz"] + da_r @ w["W_ir"]
            carry = dh_prev + dhn @ w["W_hn"] + da_z @ w["W_hz"] + da_r @ w["W_hr"]

        return grads, grad_seq


class DenseStack:
    """Rectified hidden layer followed by one linear output neuron"""

    def __init__(self, hidden_weight, hidden_bias, output_weight, output_bias):
        self.hidden_weight = np.array(hidden_weight, dtype=np.float64)
        self.hidden_bias = np.array(hidden_bias, dtype=np.float64)
        self.output_weight = np.array(output_weight, dtype=np.float64)
        self.output_bias = np.array(output_bias, dtype=np.float64)
        units = self.hidden_weight.shape[0]
        if (self.hidden_bias.shape != (units,) or self.output_weight.shape != (1, units)
                or self.output_bias.shape != (1,)):
            raise DimensionMismatch("Dense stack shapes are inconsistent", details={
                "hidden_weight": list(self.hidden_weight.shape),
                "hidden_bias": list(self.hidden_bias.shape),
                "output_weight": list(self.output_weight.shape),
                "output_bias": list(self.output_bias.shape),
            })

    @classmethod
    def initialize(cls, in_features: int, units: int, rng: np.random.Generator) -> "DenseStack":
        return cls(
            glorot_uniform(rng, (units, in_features), fan_in=in_features, fan_out=units),
            np.zeros(units),
            glorot_uniform(rng, (1, units), fan_in=units, fan_out=1),
            np.zeros(1),
        )

    @property
    def in_features(self) -> int:
        return int(self.hidden_weight.shape[1])

    @property
    def units(self) -> int:
        return int(self.hidden_weight.shape[0])

    def parameters(self) -> Params:
        return {
            "hidden_weight": self.hidden_weight,
            "hidden_bias": self.hidden_bias,
            "output_weight": self.output_weight,
            "output_bias": self.output_bias,
        }

    def forward(self, flat: np.ndarray) -> Tuple[np.ndarray, dict]:
        if flat.ndim != 2 or flat.shape[1] != self.in_features:
            raise DimensionMismatch("Dense input width mismatch",
                                    details={"input": list(flat.shape), "in_features": self.in_features})
        pre = flat @ self.hidden_weight.T + self.hidden_bias
        hidden = relu(pre)
        out = hidden @ self.output_weight.T + self.output_bias
        return out[:, 0], {"flat": flat, "pre": pre, "hidden": hidden}

    def backward(self, grad_out: np.ndarray, cache: dict) -> Tuple[Params, np.ndarray]:
        g = grad_out.reshape(-1, 1)
        grads = {
            "output_weight": g.T @ cache["hidden"],
            "output_bias": g.sum(axis=0),
        }
        grad_pre = np.where(cache["pre"] > 0.0, g @ self.output_weight, 0.0)
        grads["hidden_weight"] = grad_pre.T @ cache["flat"]
        grads["hidden_bias"] = grad_pre.sum(axis=0)
        return grads, grad_pre @ self.hidden_weight

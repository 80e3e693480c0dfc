"""
The denoiser: Conv1D -> GRU -> flatten -> dense(relu) -> linear output.

Flatten order is time-major: feature (t, l) of the GRU output lands at
column t * filters + l of the dense input.
"""
import logging
from collections import OrderedDict
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_utils.windowing import ALIGNMENTS, SegmentExample
from neural.layers import Conv1dLayer, DenseStack, GruLayer, GRU_BIASES, GRU_WEIGHTS
from utils.error_handler import DimensionMismatch, EmptyBatch, NonFiniteActivation, ShapeMismatch
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

PARAM_ORDER = (
    "conv.weight",
    "conv.bias",
    *(f"gru.{k}" for k in GRU_WEIGHTS),
    *(f"gru.{k}" for k in GRU_BIASES),
    "dense.hidden_weight",
    "dense.hidden_bias",
    "dense.output_weight",
    "dense.output_bias",
)


class ModelArch(BaseModel):
    """Architecture metadata; defaults are the full-size network"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    window: int = Field(default=50, ge=1, description="N, samples per input segment")
    taps: int = Field(default=20, ge=1, description="m, taps per conv filter")
    filters: int = Field(default=300, ge=1, description="L, conv filters and GRU units")
    hidden: int = Field(default=100, ge=1, description="units of the dense hidden layer")
    conv_bias: bool = True
    conv_activation: str = "relu"
    recurrent_activation: str = "sigmoid"
    candidate_activation: str = "tanh"
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    flatten_order: str = "time-major"
    label_alignment: str = "causal"
    format_version: int = FORMAT_VERSION

    @model_validator(mode='after')
    def check_taps(self):
        if self.taps > self.window:
            raise ValueError(f"taps ({self.taps}) must not exceed window ({self.window})")
        if self.label_alignment not in ALIGNMENTS:
            raise ValueError(f"label_alignment must be one of {ALIGNMENTS}")
        return self

    @property
    def steps(self) -> int:
        return self.window - self.taps + 1

    @property
    def flat_width(self) -> int:
        return self.steps * self.filters

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        L = self.filters
        shapes = {"conv.weight": (L, self.taps), "conv.bias": (L,)}
        shapes.update({f"gru.{k}": (L, L) for k in GRU_WEIGHTS})
        shapes.update({f"gru.{k}": (L,) for k in GRU_BIASES})
        shapes.update({
            "dense.hidden_weight": (self.hidden, self.flat_width),
            "dense.hidden_bias": (self.hidden,),
            "dense.output_weight": (1, self.hidden),
            "dense.output_bias": (1,),
        })
        return shapes


class DenoiserModel:
    """All trainable parameters plus the architecture they were built for"""

    def __init__(self, arch: ModelArch, conv: Conv1dLayer, gru: GruLayer, dense: DenseStack):
        self.arch = arch
        self.conv = conv
        self.gru = gru
        self.dense = dense
        self._check_shapes()

    @classmethod
    def initialize(cls, arch: ModelArch, seed: int) -> "DenoiserModel":
        rng = make_rng(seed)
        conv = Conv1dLayer.initialize(arch.filters, arch.taps, rng, use_bias=arch.conv_bias)
        gru = GruLayer.initialize(arch.filters, arch.filters, rng)
        dense = DenseStack.initialize(arch.flat_width, arch.hidden, rng)
        return cls(arch, conv, gru, dense)

    @classmethod
    def from_parameters(cls, arch: ModelArch, params: Dict[str, np.ndarray]) -> "DenoiserModel":
        model = cls.initialize(arch, seed=0)
        model.set_parameters(params)
        return model

    def _check_shapes(self) -> None:
        expected = self.arch.param_shapes()
        for name, value in self.parameters().items():
            if value.shape != expected[name]:
                raise DimensionMismatch(
                    f"{name} has shape {value.shape}, architecture expects {expected[name]}",
                    details={"parameter": name}
                )

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        """Live parameter arrays in PARAM_ORDER; in-place edits update the model"""
        flat = {}
        flat.update({f"conv.{k}": v for k, v in self.conv.parameters().items()})
        flat.update({f"gru.{k}": v for k, v in self.gru.parameters().items()})
        flat.update({f"dense.{k}": v for k, v in self.dense.parameters().items()})
        return OrderedDict((name, flat[name]) for name in PARAM_ORDER)

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        current = self.parameters()
        if set(params) != set(current):
            raise ShapeMismatch("Parameter names differ from the model's",
                                details={"missing": sorted(set(current) - set(params)),
                                         "unexpected": sorted(set(params) - set(current))})
        for name, target in current.items():
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ShapeMismatch(f"{name}: expected {target.shape}, got {value.shape}")
            np.copyto(target, value)

    def copy(self) -> "DenoiserModel":
        return DenoiserModel.from_parameters(self.arch, {k: v.copy() for k, v in self.parameters().items()})

    def forward(self, segments: np.ndarray) -> Tuple[np.ndarray, dict]:
        """Batched forward pass; segments is (batch, N)"""
        x = np.asarray(segments, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.window:
            raise DimensionMismatch(
                f"Segments must be (batch, {self.arch.window})", details={"input": list(x.shape)}
            )
        batch = x.shape[0]
        steps, filters = self.arch.steps, self.arch.filters

        conv_out, conv_cache = self.conv.forward(x)
        _check_stage("conv", conv_out, (batch, steps, filters))
        gru_out, gru_cache = self.gru.forward(conv_out)
        _check_stage("gru", gru_out, (batch, steps, filters))
        flat = gru_out.reshape(batch, steps * filters)
        pred, dense_cache = self.dense.forward(flat)
        _check_stage("output", pred, (batch,))
        return pred, {"conv": conv_cache, "gru": gru_cache, "dense": dense_cache}

    def predict(self, segments: np.ndarray) -> np.ndarray:
        return self.forward(segments)[0]


def _check_stage(stage: str, values: np.ndarray, shape: Tuple[int, ...]) -> None:
    if values.shape != shape:
        raise DimensionMismatch(f"{stage} output shape {values.shape}, expected {shape}")
    if not np.all(np.isfinite(values)):
        raise NonFiniteActivation(details={"stage": stage})


def conv1d_forward(x: np.ndarray, layer: Conv1dLayer) -> np.ndarray:
    """(N-m+1, L) feature map of one N-vector"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("conv1d_forward expects a single segment vector")
    return layer.forward(x[None, :])[0][0]


def gru_forward(seq: np.ndarray, layer: GruLayer, h0: Optional[np.ndarray] = None) -> np.ndarray:
    """(T, L) hidden states for one (T, L) feature sequence; h0 defaults to zeros"""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2:
        raise DimensionMismatch("gru_forward expects a (steps, features) sequence")
    init = None if h0 is None else np.asarray(h0, dtype=np.float64)[None, :]
    return layer.forward(seq[None, :, :], init)[0][0]


def model_forward(segment: np.ndarray, model: DenoiserModel) -> float:
    """Scalar ECG prediction for one N-sample MCG segment"""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 1:
        raise DimensionMismatch("model_forward expects a single segment vector")
    return float(model.predict(segment[None, :])[0])


def mse_loss(pred, label) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    label = np.asarray(label, dtype=np.float64).reshape(-1)
    if pred.size == 0:
        raise EmptyBatch()
    if pred.shape != label.shape:
        raise DimensionMismatch("Prediction and label batches differ in length",
                                details={"pred": pred.size, "label": label.size})
    diff = pred - label
    return float(np.mean(diff * diff))


def backward_arrays(model: DenoiserModel, segments: np.ndarray, labels: np.ndarray
                    ) -> Tuple[float, "OrderedDict[str, np.ndarray]"]:
    """MSE loss and its exact gradient for every parameter, in PARAM_ORDER"""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if labels.size == 0:
        raise EmptyBatch()
    pred, cache = model.forward(segments)
    loss = mse_loss(pred, labels)

    grad_pred = 2.0 * (pred - labels) / labels.size
    dense_grads, grad_flat = model.dense.backward(grad_pred, cache["dense"])
    grad_gru_out = grad_flat.reshape(labels.size, model.arch.steps, model.arch.filters)
    gru_grads, grad_conv_out = model.gru.backward(grad_gru_out, cache["gru"])
    conv_grads = model.conv.backward(grad_conv_out, cache["conv"])

    flat = {}
    flat.update({f"conv.{k}": v for k, v in conv_grads.items()})
    flat.update({f"gru.{k}": v for k, v in gru_grads.items()})
    flat.update({f"dense.{k}": v for k, v in dense_grads.items()})
    return loss, OrderedDict((name, flat[name]) for name in PARAM_ORDER)


def backward(model: DenoiserModel, batch: Sequence[SegmentExample]) -> "OrderedDict[str, np.ndarray]":
    """Gradients of the batch MSE with respect to every parameter"""
    if len(batch) == 0:
        raise EmptyBatch()
    segments = np.stack([ex.segment for ex in batch])
    labels = np.array([ex.label for ex in batch], dtype=np.float64)
    return backward_arrays(model, segments, labels)[1]

"""
Training loop, dataset evaluation and cycle-level prediction.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import settings
from data_utils.windowing import SegmentDataset, segment_matrix
from dsp.signal_core import McgCycle, SampledSignal
from neural.model import DenoiserModel, backward_arrays, mse_loss
from neural.optimizer import AdamConfig, AdamOptimizer
from utils.error_handler import DivergenceDetected, EmptyBatch, NonFiniteActivation
from utils.logger import PerfLogger
from utils.performance_monitor import monitor_performance
from utils.seeding import make_rng

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimization settings for one training run"""
    model_config = ConfigDict(frozen=True, extra='forbid')

    lr: float = Field(default=1e-3, gt=0)
    batch_size: int = Field(default=64, ge=1)
    epochs: int = Field(default=30, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    grad_clip: Optional[float] = Field(default=None, gt=0, description="Global-norm clip threshold")
    examples_per_epoch: Optional[int] = Field(default=None, ge=1)
    eval_examples: Optional[int] = Field(default=None, ge=1)
    loss: str = "mse"
    optimizer: str = "adam"

    @field_validator('grad_clip', 'examples_per_epoch', 'eval_examples', mode='before')
    @classmethod
    def parse_none(cls, v):
        if isinstance(v, str) and v.strip().lower() in ("none", "off", ""):
            return None
        return v

    @field_validator('loss')
    @classmethod
    def validate_loss(cls, v: str) -> str:
        if v != "mse":
            raise ValueError("Only the mse loss is supported")
        return v

    @field_validator('optimizer')
    @classmethod
    def validate_optimizer(cls, v: str) -> str:
        if v != "adam":
            raise ValueError("Only the adam optimizer is supported")
        return v

    def adam(self) -> AdamConfig:
        return AdamConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: Optional[float]


@dataclass
class TrainResult:
    model: DenoiserModel
    history: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_mse: Optional[float] = None
    initial_train_mse: Optional[float] = None


def _subsample(size: int, cap: Optional[int], rng: np.random.Generator) -> np.ndarray:
    """Sorted random subset of at most `cap` indices, or all of them"""
    if cap is None or cap >= size:
        return np.arange(size)
    return np.sort(rng.choice(size, size=cap, replace=False))


def _clip(grads, threshold: Optional[float]):
    if threshold is None:
        return grads
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if norm <= threshold or norm == 0.0:
        return grads
    scale = threshold / norm
    return {k: g * scale for k, g in grads.items()}


def evaluate(
    model: DenoiserModel,
    dataset: SegmentDataset,
    batch_size: Optional[int] = None,
    indices: Optional[np.ndarray] = None,
) -> float:
    """MSE of the model over a dataset (or the given subset), in fixed batch order"""
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise EmptyBatch("Cannot evaluate on an empty dataset")
    chunk = int(batch_size or settings.MCG_PREDICT_CHUNK)
    total = 0.0
    for start in range(0, idx.size, chunk):
        segments, labels = dataset.arrays(idx[start:start + chunk])
        total += mse_loss(model.predict(segments), labels) * labels.size
    return total / idx.size


@monitor_performance(stage="train")
def train(
    model: DenoiserModel,
    train_set: SegmentDataset,
    val_set: Optional[SegmentDataset],
    config: TrainConfig,
) -> TrainResult:
    """
    Mini-batch Adam on the MSE loss.

    Epoch e shuffles with a generator seeded by config.seed + e. The returned
    model holds the parameters with the lowest validation MSE, where the
    initial parameters count as epoch 0; without a validation set the final
    parameters are kept.
    """
    if len(train_set) == 0:
        raise EmptyBatch("Training set is empty")

    result = TrainResult(model=model)
    if config.epochs == 0:
        return result

    optimizer = AdamOptimizer(model.parameters(), config.adam())
    eval_rng = make_rng(config.seed ^ 0x5EED)
    val_idx = None
    if val_set is not None and len(val_set) > 0:
        val_idx = _subsample(len(val_set), config.eval_examples, eval_rng)
    else:
        val_set = None

    best_params = {k: v.copy() for k, v in model.parameters().items()}
    best_val = evaluate(model, val_set, indices=val_idx) if val_set is not None else None
    result.best_val_mse = best_val
    result.initial_train_mse = evaluate(
        model, train_set, indices=_subsample(len(train_set), config.eval_examples, eval_rng)
    )

    for epoch in range(1, config.epochs + 1):
        rng = make_rng(config.seed + epoch)
        order = rng.permutation(len(train_set))
        if config.examples_per_epoch is not None:
            order = order[: config.examples_per_epoch]

        with PerfLogger(f"epoch {epoch}"):
            seen = 0
            running = 0.0
            for start in range(0, order.size, config.batch_size):
                segments, labels = train_set.arrays(order[start:start + config.batch_size])
                try:
                    loss, grads = backward_arrays(model, segments, labels)
                except NonFiniteActivation as exc:
                    raise DivergenceDetected(
                        "Activations became non-finite",
                        details={"epoch": epoch, "batch_start": int(start), "stage": exc.details.get("stage")},
                    ) from exc
                if not np.isfinite(loss):
                    raise DivergenceDetected(details={"epoch": epoch, "batch_start": int(start)})
                optimizer.step(_clip(grads, config.grad_clip))
                running += loss * labels.size
                seen += labels.size
            train_mse = running / seen

            if not np.all([np.all(np.isfinite(p)) for p in model.parameters().values()]):
                raise DivergenceDetected("Parameters became non-finite", details={"epoch": epoch})

            try:
                val_mse = evaluate(model, val_set, indices=val_idx) if val_set is not None else None
            except NonFiniteActivation as exc:
                raise DivergenceDetected(
                    "Validation activations became non-finite",
                    details={"epoch": epoch, "stage": exc.details.get("stage")},
                ) from exc

        result.history.append(EpochRecord(epoch, train_mse, val_mse))
        logger.info("Epoch finished", extra={"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse})

        if val_mse is not None and not np.isfinite(val_mse):
            raise DivergenceDetected("Validation loss became non-finite", details={"epoch": epoch})
        if val_mse is None or val_mse < best_val:
            best_val = val_mse
            result.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.parameters().items()}

    model.set_parameters(best_params)
    result.best_val_mse = best_val
    logger.info("Training finished", extra={"best_epoch": result.best_epoch, "best_val_mse": best_val,
                                            "epochs": config.epochs})
    return result


def predict_cycle(
    model: DenoiserModel,
    mcg: McgCycle,
    window: Optional[int] = None,
    stride: int = 1,
) -> SampledSignal:
    """
    Model output for every sequential segment of the cycle. With stride 1 the
    result has L - N + 1 samples aligned to ecg[N-1 .. L-1]; a larger stride
    divides the reported sample rate by the stride.
    """
    window = int(window or model.arch.window)
    segments = segment_matrix(mcg, window, stride)
    chunk = settings.MCG_PREDICT_CHUNK
    out = np.concatenate([
        model.predict(segments[start:start + chunk]) for start in range(0, segments.shape[0], chunk)
    ])
    if stride == 1:
        return mcg.signal.with_samples(out)
    return SampledSignal(out, mcg.signal.sample_rate / stride, mcg.signal.unit)

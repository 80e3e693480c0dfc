"""
Adaptive-moment optimizer with bias correction.

`optimizer_step` is the functional form used by tests and tooling: it never
mutates its inputs. `AdamOptimizer` applies the same arithmetic in place to a
model's live parameter arrays during training.
"""
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from utils.error_handler import ShapeMismatch

Params = Dict[str, np.ndarray]


class AdamConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)


@dataclass
class AdamState:
    """Step counter plus first and second moment estimates per parameter"""
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            v={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
        )

    def copy(self) -> "AdamState":
        return AdamState(self.step, {k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()})


def _check_shapes(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    if set(params) != set(grads):
        raise ShapeMismatch("Gradient names differ from parameter names",
                            details={"missing": sorted(set(params) - set(grads)),
                                     "unexpected": sorted(set(grads) - set(params))})
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ShapeMismatch(f"{name}: parameter {np.shape(p)} vs gradient {np.shape(g)}",
                                details={"parameter": name})
        for moment in (state.m, state.v):
            if name in moment and moment[name].shape != np.shape(p):
                raise ShapeMismatch(f"{name}: optimizer state has shape {moment[name].shape}",
                                    details={"parameter": name})


def _update(p: np.ndarray, g: np.ndarray, m: np.ndarray, v: np.ndarray, step: int, config: AdamConfig) -> None:
    # m, v and p are updated in place
    m *= config.beta1
    m += (1.0 - config.beta1) * g
    v *= config.beta2
    v += (1.0 - config.beta2) * (g * g)
    m_hat = m / (1.0 - config.beta1 ** step)
    v_hat = v / (1.0 - config.beta2 ** step)
    p -= config.lr * m_hat / (np.sqrt(v_hat) + config.eps)


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: AdamConfig,
) -> Tuple[Params, AdamState]:
    """One update; returns new parameters and a new state"""
    _check_shapes(params, grads, state)
    new_state = state.copy()
    new_state.step += 1
    new_params = {}
    for name in params:
        p = np.array(params[name], dtype=np.float64, copy=True)
        m = new_state.m.setdefault(name, np.zeros_like(p))
        v = new_state.v.setdefault(name, np.zeros_like(p))
        _update(p, np.asarray(grads[name], dtype=np.float64), m, v, new_state.step, config)
        new_params[name] = p
    return new_params, new_state


class AdamOptimizer:
    """In-place Adam over a fixed parameter dict, iterated in its insertion order"""

    def __init__(self, params: Mapping[str, np.ndarray], config: AdamConfig):
        self.params = params
        self.config = config
        self.state = AdamState.zeros_like(params)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        _check_shapes(self.params, grads, self.state)
        self.state.step += 1
        for name, p in self.params.items():
            _update(p, grads[name], self.state.m[name], self.state.v[name], self.state.step, self.config)

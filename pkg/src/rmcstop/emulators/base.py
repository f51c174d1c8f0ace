"""Shared fit/predict contract and serialization registry for emulators.

Every fitted emulator is an immutable object with a ``predict`` method; GP
fits additionally expose ``predict_sd``.  Fits serialize to self-describing
tagged state dicts (kind + version + arrays) so policies can be saved by a
solver run and evaluated later.
"""

from __future__ import annotations

import numpy as np

__all__ = ["EmulatorFit", "ConstantFit", "serialize_fit", "deserialize_fit"]

STATE_VERSION = 1

_REGISTRY: dict[str, type] = {}


def register_kind(cls):
    """Class decorator recording a fit class under its ``kind`` tag."""
    _REGISTRY[cls.kind] = cls
    return cls


class EmulatorFit:
    """Base class for fitted timing-value approximators T-hat(k, .)."""

    kind: str = "abstract"
    step: int | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def has_sd(self) -> bool:
        return hasattr(self, "predict_sd")

    def _check_query(self, x: np.ndarray, dim: int) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != dim:
            raise ValueError(
                f"query dimension {x.shape[1]} does not match fit dimension {dim}"
            )
        return x

    def to_state(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_state(cls, state: dict) -> "EmulatorFit":
        raise NotImplementedError


@register_kind
class ConstantFit(EmulatorFit):
    """Degenerate emulator returned when all responses are equal."""

    kind = "constant"

    def __init__(self, value: float, dim: int, step: int | None = None):
        self.value = float(value)
        self.dim = int(dim)
        self.step = step

    def predict(self, x):
        x = self._check_query(x, self.dim)
        return np.full(x.shape[0], self.value)

    def to_state(self):
        return {
            "kind": self.kind,
            "version": STATE_VERSION,
            "value": self.value,
            "dim": self.dim,
            "step": self.step,
        }

    @classmethod
    def from_state(cls, state):
        return cls(state["value"], state["dim"], state.get("step"))


def serialize_fit(fit: EmulatorFit) -> dict:
    state = fit.to_state()
    if "kind" not in state or "version" not in state:
        raise ValueError("fit state must carry kind and version tags")
    return state


def deserialize_fit(state: dict) -> EmulatorFit:
    kind = state.get("kind")
    if kind not in _REGISTRY:
        raise ValueError(f"unknown emulator kind {kind!r} in serialized state")
    if state.get("version") != STATE_VERSION:
        raise ValueError(
            f"serialized emulator version {state.get('version')} not supported "
            f"(expected {STATE_VERSION})"
        )
    return _REGISTRY[kind].from_state(state)

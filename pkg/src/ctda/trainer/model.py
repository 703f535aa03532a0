"""
Feature map (two-layer perceptron with a unit-norm head) and linear classifier,
with hand-written backpropagation.
"""
import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from ctda.kernels import EmbeddingBatch

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_hidden: np.ndarray
    hidden: np.ndarray
    u: np.ndarray
    norms: np.ndarray
    z: np.ndarray


@dataclass
class FeatureMap:
    """x -> relu(x W1 + b1) -> u = h W2 + b2 -> z = u / max(||u||, eps)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int = 128, embedding_dim: int = 32,
             rng: np.random.Generator | None = None) -> "FeatureMap":
        rng = rng or np.random.default_rng(0)
        feature_map = cls(
            W1=rng.normal(0.0, np.sqrt(2.0 / input_dim), (input_dim, hidden_dim)),
            b1=np.zeros(hidden_dim),
            W2=rng.normal(0.0, np.sqrt(1.0 / hidden_dim), (hidden_dim, embedding_dim)),
            b2=np.zeros(embedding_dim),
        )
        logger.info(f"Feature map {input_dim}->{hidden_dim}->{embedding_dim}, "
                    f"{feature_map.n_parameters} parameters")
        return feature_map

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def embedding_dim(self) -> int:
        return self.W2.shape[1]

    @property
    def parameters(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters.values())

    def copy(self) -> "FeatureMap":
        return FeatureMap(**{name: p.copy() for name, p in self.parameters.items()})

    def forward(self, inputs: np.ndarray) -> ForwardCache:
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise ValueError(f"expected inputs with {self.input_dim} columns, got shape {inputs.shape}")
        pre_hidden = inputs @ self.W1 + self.b1
        hidden = np.maximum(pre_hidden, 0.0)
        u = hidden @ self.W2 + self.b2
        norms = np.maximum(np.linalg.norm(u, axis=1, keepdims=True), NORM_EPS)
        return ForwardCache(inputs, pre_hidden, hidden, u, norms, u / norms)

    def backward(self, cache: ForwardCache, grad_z: np.ndarray) -> Dict[str, np.ndarray]:
        """Parameter gradients given dLoss/dz, through the unit-norm projection."""
        z = cache.z
        clamped = np.linalg.norm(cache.u, axis=1, keepdims=True) < NORM_EPS
        projected = grad_z - z * np.sum(z * grad_z, axis=1, keepdims=True)
        grad_u = np.where(clamped, grad_z, projected) / cache.norms

        grad_hidden = grad_u @ self.W2.T
        grad_pre = grad_hidden * (cache.pre_hidden > 0)
        return {
            "W1": cache.inputs.T @ grad_pre,
            "b1": grad_pre.sum(axis=0),
            "W2": cache.hidden.T @ grad_u,
            "b2": grad_u.sum(axis=0),
        }


@dataclass
class LinearHead:
    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, embedding_dim: int, n_classes: int,
             rng: np.random.Generator | None = None) -> "LinearHead":
        rng = rng or np.random.default_rng(0)
        return cls(weight=rng.normal(0.0, 0.01, (embedding_dim, n_classes)), bias=np.zeros(n_classes))

    @property
    def n_classes(self) -> int:
        return self.weight.shape[1]

    @property
    def parameters(self) -> Dict[str, np.ndarray]:
        return {"Wh": self.weight, "bh": self.bias}

    def copy(self) -> "LinearHead":
        return LinearHead(self.weight.copy(), self.bias.copy())

    def logits(self, z: np.ndarray) -> np.ndarray:
        return z @ self.weight + self.bias

    def backward(self, z: np.ndarray, grad_logits: np.ndarray):
        """Returns (parameter gradients, dLoss/dz)."""
        grads = {"Wh": z.T @ grad_logits, "bh": grad_logits.sum(axis=0)}
        return grads, grad_logits @ self.weight.T


def forward(feature_map: FeatureMap, inputs: np.ndarray, class_labels=None, domain_labels=None,
            n_classes: int = 0) -> EmbeddingBatch:
    """Embed inputs; rows whose pre-norm activation vanished cannot form a unit-norm batch."""
    z = feature_map.forward(inputs).z
    if class_labels is None:
        class_labels = np.zeros(len(z), dtype=np.int64)
    return EmbeddingBatch(z, class_labels, domain_labels if domain_labels is not None
                          else np.zeros(len(z), dtype=np.int64), n_classes)

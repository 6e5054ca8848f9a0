#!/usr/bin/env python3
"""Dense feedforward network (ReLU hidden layers, identity output) trained by plain SGD.

Model files (``.mlp``) are little-endian:
    magic   b"TSMLP\\x00"     6 bytes
    version uint16            currently 1
    n_dims  uint32
    dims    n_dims x uint32
    params  float64 block: for each layer, weights (out x in, row-major) then biases
"""

import logging
import struct
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from utils import ContractError, FormatError, NumericError

logger = logging.getLogger(__name__)

MAGIC = b"TSMLP\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<6sHI")


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    batch_size: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")


class Mlp:
    """Weights are stored (out, in) so a layer computes ``W @ x + b``."""

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) == 0 or len(weights) != len(biases):
            raise ContractError("an Mlp needs one bias vector per weight matrix and at least one layer")
        self.weights: List[np.ndarray] = [np.array(w, dtype=np.float64) for w in weights]
        self.biases: List[np.ndarray] = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ContractError(f"layer {idx}: weight {w.shape} does not match bias {b.shape}")
            if idx and w.shape[1] != self.weights[idx - 1].shape[0]:
                raise ContractError(f"layer {idx}: input width {w.shape[1]} does not match "
                                    f"previous output {self.weights[idx - 1].shape[0]}")

    @classmethod
    def initialize(cls, layer_dims: Sequence[int], seed) -> 'Mlp':
        """Glorot-uniform weights, zero biases."""
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ContractError(f"layer_dims needs at least two positive widths, got {list(layer_dims)}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_weights(self) -> int:
        return int(sum(w.size for w in self.weights))

    @property
    def n_biases(self) -> int:
        return int(sum(b.size for b in self.biases))

    def copy(self) -> 'Mlp':
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def _forward_cache(self, inputs: np.ndarray):
        activations = [inputs]
        pre_activations = []
        out = inputs
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = out @ w.T + b
            pre_activations.append(z)
            out = z if idx == last else np.maximum(z, 0.0)
            activations.append(out)
        return activations, pre_activations

    def _as_batch(self, inputs) -> Tuple[np.ndarray, bool]:
        x = np.asarray(inputs, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.ndim != 2 or x.shape[1] != self.layer_dims[0]:
            raise ContractError(f"input width {x.shape[-1]} does not match network input {self.layer_dims[0]}")
        return x, single

    def forward(self, inputs) -> np.ndarray:
        """Accepts one input vector or a batch (rows); returns the matching shape."""
        x, single = self._as_batch(inputs)
        activations, _ = self._forward_cache(x)
        out = activations[-1]
        return out[0] if single else out

    def loss_and_gradients(self, inputs, targets, masks):
        """Masked MSE (mean over selected outputs) and its parameter gradients."""
        x, _ = self._as_batch(inputs)
        y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        m = np.atleast_2d(np.asarray(masks, dtype=np.float64))
        if y.shape != (x.shape[0], self.layer_dims[-1]) or m.shape != y.shape:
            raise ContractError(f"targets {y.shape} / masks {m.shape} do not match "
                                f"batch of {x.shape[0]} x {self.layer_dims[-1]}")
        n_selected = m.sum()
        if n_selected <= 0:
            raise ContractError("mask selects no outputs")

        activations, pre_activations = self._forward_cache(x)
        error = (activations[-1] - y) * m
        loss = float(np.sum(error ** 2) / n_selected)

        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        delta = 2.0 * error / n_selected
        for idx in reversed(range(len(self.weights))):
            grad_w[idx] = delta.T @ activations[idx]
            grad_b[idx] = delta.sum(axis=0)
            if idx:
                delta = (delta @ self.weights[idx]) * (pre_activations[idx - 1] > 0.0)
        return loss, grad_w, grad_b

    def sgd_step(self, batch, config: SgdConfig) -> float:
        """One SGD update on ``batch`` of (input, target, output_mask); returns the pre-update loss."""
        if not batch:
            raise ContractError("sgd_step needs a non-empty batch")
        inputs, targets, masks = (np.array(column, dtype=np.float64) for column in zip(*batch))
        loss, grad_w, grad_b = self.loss_and_gradients(inputs, targets, masks)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grad_w + grad_b):
            raise NumericError(f"non-finite loss or gradient (loss={loss}); training diverged")
        for w, b, gw, gb in zip(self.weights, self.biases, grad_w, grad_b):
            w -= config.learning_rate * gw
            b -= config.learning_rate * gb
        return loss

    def to_bytes(self) -> bytes:
        dims = self.layer_dims
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(dims))
        header += struct.pack(f"<{len(dims)}I", *dims)
        block = b"".join(
            w.astype('<f8').tobytes(order='C') + b.astype('<f8').tobytes()
            for w, b in zip(self.weights, self.biases)
        )
        return header + block

    @classmethod
    def from_bytes(cls, data: bytes) -> 'Mlp':
        if len(data) < _HEADER.size:
            raise FormatError("truncated model header")
        magic, version, n_dims = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported model version {version}")
        if n_dims < 2:
            raise FormatError(f"model declares {n_dims} layer dims, need at least 2")
        offset = _HEADER.size
        if len(data) < offset + 4 * n_dims:
            raise FormatError("truncated layer dimensions")
        dims = struct.unpack_from(f"<{n_dims}I", data, offset)
        offset += 4 * n_dims

        n_params = sum(i * o + o for i, o in zip(dims[:-1], dims[1:]))
        expected = offset + 8 * n_params
        if len(data) != expected:
            raise FormatError(f"parameter block has {len(data) - offset} bytes, expected {8 * n_params}")
        params = np.frombuffer(data, dtype='<f8', offset=offset).astype(np.float64)

        weights, biases, cursor = [], [], 0
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(params[cursor:cursor + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            cursor += fan_in * fan_out
            biases.append(params[cursor:cursor + fan_out].copy())
            cursor += fan_out
        return cls(weights, biases)

    def save(self, path) -> None:
        with open(path, 'wb') as f:
            f.write(self.to_bytes())
        logger.info(f"Saved network {self.layer_dims} to {path}")

    @classmethod
    def load(cls, path) -> 'Mlp':
        with open(path, 'rb') as f:
            return cls.from_bytes(f.read())


def init(layer_dims: Sequence[int], seed) -> Mlp:
    return Mlp.initialize(layer_dims, seed)


def forward(net: Mlp, inputs) -> np.ndarray:
    return net.forward(inputs)


def sgd_step(net: Mlp, batch, config: SgdConfig) -> float:
    return net.sgd_step(batch, config)


def serialize(net: Mlp) -> bytes:
    return net.to_bytes()


def deserialize(data: bytes) -> Mlp:
    return Mlp.from_bytes(data)

"""Small configurable MLPs exposing penultimate embeddings and logits.

A model's width chain is [input, hidden..., embedding, classes]; every layer
up to and including the embedding layer is followed by relu, the final layer
is linear. Teachers are frozen by building their parameters off-tape.

Binary serialization format (little-endian throughout):
    bytes 0..3   magic "WCRD"
    u32          format version (1)
    u32          number of widths k
    u32 * k      width chain
    then per layer, in declaration order: weight (out x in) as row-major
    float64, followed by the bias as float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .tensor import Tape, Tensor, add_rowvec, matmul, relu, transpose

MAGIC = b"WCRD"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: tuple[int, ...]
    embed_dim: int
    n_classes: int

    def __post_init__(self):
        for w in self.widths:
            if w < 1:
                raise ContractError(f"all widths must be >= 1, got {self.widths}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.in_dim, *self.hidden, self.embed_dim, self.n_classes)

    @staticmethod
    def from_widths(widths) -> "MlpSpec":
        widths = tuple(int(w) for w in widths)
        if len(widths) < 3:
            raise ContractError(f"width chain needs at least 3 entries, got {widths}")
        return MlpSpec(widths[0], widths[1:-2], widths[-2], widths[-1])


class Model:
    def __init__(self, spec: MlpSpec, weights: list[Tensor], biases: list[Tensor], frozen: bool = False):
        self.spec = spec
        self.weights = weights
        self.biases = biases
        self.frozen = frozen

    def parameters(self) -> list[Tensor]:
        if self.frozen:
            return []
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def all_tensors(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def freeze(self) -> "Model":
        self.frozen = True
        for t in self.all_tensors():
            t.tape = None
        return self


def init_params(spec: MlpSpec, seed: int, tape: Tape | None = None) -> Model:
    """Glorot-uniform weights, zero biases; bitwise deterministic per seed."""
    rng = np.random.default_rng(seed)
    widths = spec.widths
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.uniform(-limit, limit, size=(fan_out, fan_in)), tape))
        biases.append(Tensor(np.zeros(fan_out), tape))
    return Model(spec, weights, biases)


def forward(model: Model, X) -> tuple[Tensor, Tensor]:
    """Returns (embedding H after the penultimate relu, logits Z)."""
    x = X if isinstance(X, Tensor) else Tensor(np.asarray(X, dtype=np.float64))
    if x.data.ndim != 2 or x.shape[1] != model.spec.in_dim:
        raise ContractError(
            f"input width {x.shape} does not match model input dim {model.spec.in_dim}"
        )
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = relu(add_rowvec(matmul(h, transpose(w)), b))
    z = add_rowvec(matmul(h, transpose(model.weights[-1])), model.biases[-1])
    return h, z


def save_model(model: Model, path) -> None:
    widths = model.spec.widths
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(widths)))
        fh.write(struct.pack(f"<{len(widths)}I", *widths))
        for w, b in zip(model.weights, model.biases):
            fh.write(np.ascontiguousarray(w.data, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b.data, dtype="<f8").tobytes())


def load_model(path, tape: Tape | None = None, frozen: bool = False) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ContractError(f"{path}: bad magic {raw[:4]!r}")
    version, = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise ContractError(f"{path}: unsupported format version {version}")
    k, = struct.unpack_from("<I", raw, 8)
    widths = struct.unpack_from(f"<{k}I", raw, 12)
    spec = MlpSpec.from_widths(widths)
    offset = 12 + 4 * k
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        n = fan_out * fan_in
        w = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(fan_out, fan_in)
        offset += 8 * n
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(Tensor(w.copy(), None if frozen else tape))
        biases.append(Tensor(b.copy(), None if frozen else tape))
    if offset != len(raw):
        raise ContractError(f"{path}: trailing bytes after parameters")
    return Model(spec, weights, biases, frozen=frozen)

"""Residual-block inference, stacked models, and model persistence.

A model is a stack of raw blocks sharing the state width; the total
Lipschitz budget is split geometrically across blocks (each block gets
total**(1/K)), so the composed bound is the product of the per-block
bounds.  Inference always runs against materialized parameters produced
once per parameter update, never re-deriving the multipliers inside the
forward loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .activations import ActivationSpec, get_activation
from .autodiff import value_of
from .param import (
    BlockShape,
    DEFAULT_CONFIG,
    MaterializeConfig,
    MaterializedBlock,
    RawBlock,
    backward_pass,
    init_raw,
)

__all__ = [
    "Model",
    "ModelFormatError",
    "block_forward",
    "empirical_lipschitz",
    "forward_batch",
    "load_model",
    "make_model",
    "materialize_model",
    "model_forward",
    "model_forward_batch",
    "pair_ratio_max",
    "save_model",
]

MODEL_FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model file is malformed or inconsistent."""


@dataclass
class Model:
    blocks: list[RawBlock]
    lipschitz_total: float

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("model needs at least one block")
        d_x = self.blocks[0].shape.d_x
        if any(b.shape.d_x != d_x for b in self.blocks):
            raise ValueError("all blocks must share the state width")
        if self.lipschitz_total <= 0:
            raise ValueError("lipschitz_total must be positive")
        product = float(np.prod([b.lipschitz for b in self.blocks]))
        if not math.isclose(product, self.lipschitz_total, rel_tol=1e-9):
            raise ValueError(
                f"per-block budgets multiply to {product}, not lipschitz_total="
                f"{self.lipschitz_total}"
            )

    @property
    def d_x(self) -> int:
        return self.blocks[0].shape.d_x


def make_model(d_x: int, dims: list[int], activations: list[ActivationSpec],
               lipschitz_total: float, n_blocks: int = 1, seed=0) -> Model:
    """Random model of `n_blocks` identical-shape blocks, budget split geometrically."""
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    shape = BlockShape(d_x=d_x, dims=tuple(dims))
    per_block = float(lipschitz_total) ** (1.0 / n_blocks)
    rng = np.random.default_rng(seed)
    blocks = [init_raw(shape, per_block, activations, rng) for _ in range(n_blocks)]
    return Model(blocks=blocks, lipschitz_total=float(lipschitz_total))


def materialize_model(model: Model, config: MaterializeConfig = DEFAULT_CONFIG) -> list[MaterializedBlock]:
    return [backward_pass(b, config) for b in model.blocks]


def block_forward(block: MaterializedBlock, x: np.ndarray) -> np.ndarray:
    """One residual block on a single state vector."""
    blk = block.to_numpy()
    x = np.asarray(x, dtype=float)
    if x.shape != (blk.shape.d_x,):
        raise ValueError(f"input must have shape ({blk.shape.d_x},), got {x.shape}")
    w = x
    for spec, C, bias in zip(blk.activations, blk.C, blk.biases):
        w = spec(C @ w + bias)
    return blk.A * x + blk.B * w


def forward_batch(block: MaterializedBlock, X):
    """One residual block on rows of X (shape (N, d_x)); autodiff-transparent."""
    w = X
    for spec, C, bias in zip(block.activations, block.C, block.biases):
        z = ad.matmul(w, ad.transpose(C)) + bias
        w = ad.elementwise(z, lambda v, s=spec: s(v), lambda v, s=spec: s.derivative(v))
    return block.A * X + block.B * w


def model_forward(blocks: list[MaterializedBlock], x: np.ndarray) -> np.ndarray:
    for block in blocks:
        x = block_forward(block, x)
    return x


def model_forward_batch(blocks: list[MaterializedBlock], X):
    for block in blocks:
        X = forward_batch(block, X)
    return X


def pair_ratio_max(blocks: list[MaterializedBlock], X, Xp) -> float:
    """Max of ||f(x) - f(x')|| / ||x - x'|| over given pair rows; near-coincident
    pairs (gap < 1e-12) are skipped."""
    X = np.asarray(X, dtype=float)
    Xp = np.asarray(Xp, dtype=float)
    gaps = np.linalg.norm(X - Xp, axis=1)
    keep = gaps > 1e-12
    if not np.any(keep):
        raise ValueError("no usable pairs: all inputs coincide")
    Y = value_of(model_forward_batch(blocks, X[keep]))
    Yp = value_of(model_forward_batch(blocks, Xp[keep]))
    return float((np.linalg.norm(Y - Yp, axis=1) / gaps[keep]).max())


def empirical_lipschitz(blocks: list[MaterializedBlock],
                        domain: tuple[float, float] = (-10.0, 10.0),
                        n_pairs: int = 10_000, seed: int = 0) -> float:
    """Empirical Lipschitz estimate over uniformly sampled input pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"domain {domain} is degenerate")
    d_x = blocks[0].shape.d_x
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(n_pairs, d_x))
    Xp = rng.uniform(lo, hi, size=(n_pairs, d_x))
    return pair_ratio_max(blocks, X, Xp)


# --- persistence -------------------------------------------------------------

def _block_to_dict(block: RawBlock) -> dict:
    return {
        "d_x": block.shape.d_x,
        "dims": list(block.shape.dims),
        "activations": [{"name": s.name, "params": s.params} for s in block.activations],
        "W_raw": [np.asarray(value_of(w)).tolist() for w in block.W_raw],
        "a_raw": np.asarray(value_of(block.a_raw)).tolist(),
        "b_raw": np.asarray(value_of(block.b_raw)).tolist(),
        "biases": [np.asarray(value_of(b)).tolist() for b in block.biases],
    }


def save_model(model: Model, path) -> None:
    """Write the model as versioned JSON; float serialization round-trips exactly."""
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "lipschitz_total": model.lipschitz_total,
        "blocks": [_block_to_dict(b) for b in model.blocks],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _require(cond: bool, message: str):
    if not cond:
        raise ModelFormatError(message)


def _as_matrix(obj, shape, what) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    _require(arr.shape == shape, f"{what} has shape {arr.shape}, expected {shape}")
    _require(bool(np.all(np.isfinite(arr))), f"{what} contains non-finite values")
    return arr


def load_model(path) -> Model:
    """Load and validate a model file written by `save_model`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top-level document must be an object")
    _require(doc.get("version") == MODEL_FORMAT_VERSION,
             f"unsupported model format version {doc.get('version')!r}")
    _require(isinstance(doc.get("blocks"), list) and doc["blocks"],
             "model must contain a nonempty 'blocks' list")
    lip_total = doc.get("lipschitz_total")
    _require(isinstance(lip_total, (int, float)) and lip_total > 0,
             "'lipschitz_total' must be a positive number")

    n_blocks = len(doc["blocks"])
    per_block = float(lip_total) ** (1.0 / n_blocks)
    blocks = []
    for bi, bd in enumerate(doc["blocks"]):
        what = f"block {bi}"
        try:
            shape = BlockShape(d_x=int(bd["d_x"]), dims=tuple(int(d) for d in bd["dims"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{what}: invalid shape: {exc}") from exc
        try:
            specs = [get_activation(ad_["name"], ad_.get("params") or None)
                     for ad_ in bd["activations"]]
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"{what}: invalid activation list: {exc}") from exc
        W_raw = [_as_matrix(w, shape.layer_dims(l), f"{what} W_raw[{l}]")
                 for l, w in enumerate(bd.get("W_raw", []))]
        _require(len(W_raw) == shape.n, f"{what}: need {shape.n} weight matrices")
        biases = [_as_matrix(b, (shape.layer_dims(l)[0],), f"{what} biases[{l}]")
                  for l, b in enumerate(bd.get("biases", []))]
        _require(len(biases) == shape.n, f"{what}: need {shape.n} bias vectors")
        a_raw = _as_matrix(bd.get("a_raw"), (shape.d_x,), f"{what} a_raw")
        b_raw = _as_matrix(bd.get("b_raw"), (shape.d_x,), f"{what} b_raw")
        try:
            blocks.append(RawBlock(shape=shape, lipschitz=per_block, activations=specs,
                                   W_raw=W_raw, a_raw=a_raw, b_raw=b_raw, biases=biases))
        except ValueError as exc:
            raise ModelFormatError(f"{what}: {exc}") from exc
    return Model(blocks=blocks, lipschitz_total=float(lip_total))

"""Sine-regression experiment: training loop, gradients, and collapse metrics.

Gradients are taken through the *entire* pipeline: raw parameters ->
constrained materialization (including the multiplier recursion and its
min/abs compositions) -> batched forward pass -> MSE.  The closed-form
least-squares line against the target sine provides the reference loss the
collapsed network degenerates to.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .lmi import verify_block
from .network import Model, materialize_model, model_forward_batch
from .param import DEFAULT_CONFIG, MaterializeConfig, RawBlock, backward_pass

__all__ = [
    "CollapseMetrics",
    "Dataset",
    "GradientError",
    "TrainConfig",
    "TrainingDiverged",
    "TrainingHistory",
    "collapse_metric",
    "flatten_params",
    "gradient",
    "linear_fit_oracle",
    "loss_and_grad",
    "make_sine_dataset",
    "mse_loss",
    "output_curve",
    "param_segments",
    "set_flat_params",
    "train",
    "write_curve_csv",
    "write_history_csv",
]


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    domain: tuple[float, float]
    amplitude: float


def make_sine_dataset(n: int, domain: tuple[float, float] = (-2 * math.pi, 2 * math.pi),
                      amplitude: float = 0.5, seed: int = 42) -> Dataset:
    """n points uniform over `domain` with targets amplitude * sin(x)."""
    if n < 2:
        raise ValueError("need at least two samples")
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValueError(f"domain {domain} is empty")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, n)
    return Dataset(inputs=x, targets=amplitude * np.sin(x), domain=(lo, hi),
                   amplitude=float(amplitude))


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


# --- parameter flattening ----------------------------------------------------

def param_segments(model: Model) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) segments: per block W_raw[*], a_raw, b_raw, biases[*]."""
    segments = []
    for bi, block in enumerate(model.blocks):
        for l in range(block.shape.n):
            segments.append((f"block{bi}.W_raw[{l}]", value_of(block.W_raw[l]).shape))
        segments.append((f"block{bi}.a_raw", (block.shape.d_x,)))
        segments.append((f"block{bi}.b_raw", (block.shape.d_x,)))
        for l in range(block.shape.n):
            segments.append((f"block{bi}.biases[{l}]", value_of(block.biases[l]).shape))
    return segments


def _block_arrays(block: RawBlock) -> list:
    return [*block.W_raw, block.a_raw, block.b_raw, *block.biases]


def flatten_params(model: Model) -> np.ndarray:
    parts = []
    for block in model.blocks:
        parts.extend(np.asarray(value_of(p), dtype=float).ravel() for p in _block_arrays(block))
    return np.concatenate(parts)


def set_flat_params(model: Model, vec: np.ndarray) -> None:
    vec = np.asarray(vec, dtype=float)
    pos = 0
    for block in model.blocks:
        n = block.shape.n
        new = []
        for p in _block_arrays(block):
            shape = value_of(p).shape
            size = int(np.prod(shape))
            new.append(vec[pos:pos + size].reshape(shape).copy())
            pos += size
        block.W_raw = new[:n]
        block.a_raw = new[n]
        block.b_raw = new[n + 1]
        block.biases = new[n + 2:]
    if pos != vec.size:
        raise ValueError(f"parameter vector has {vec.size} entries, expected {pos}")


def _locate(segments, flat_index: int) -> str:
    pos = 0
    for name, shape in segments:
        size = int(np.prod(shape))
        if flat_index < pos + size:
            return f"{name} (flat offset {flat_index - pos})"
        pos += size
    return f"flat index {flat_index}"


class GradientError(RuntimeError):
    """A gradient entry came out non-finite."""


def _as_rows(x, d_x: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if d_x != 1:
            raise ValueError(f"1-D data requires a width-1 model, got d_x={d_x}")
        return arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[1] != d_x:
        raise ValueError(f"data must have {d_x} columns, got shape {arr.shape}")
    return arr


def loss_and_grad(model: Model, inputs, targets,
                  config: MaterializeConfig = DEFAULT_CONFIG) -> tuple[float, np.ndarray]:
    """MSE and its gradient w.r.t. all raw parameters, through materialization."""
    X = _as_rows(inputs, model.d_x)
    T = _as_rows(targets, model.d_x)
    if X.shape != T.shape:
        raise ValueError(f"inputs {X.shape} and targets {T.shape} disagree")
    if X.shape[0] == 0:
        raise ValueError("batch is empty")

    leaves: list[ad.Tensor] = []
    tensor_blocks = []
    for block in model.blocks:
        W = [ad.leaf(w) for w in block.W_raw]
        a = ad.leaf(block.a_raw)
        b = ad.leaf(block.b_raw)
        biases = [ad.leaf(v) for v in block.biases]
        leaves.extend([*W, a, b, *biases])
        tensor_blocks.append(RawBlock(shape=block.shape, lipschitz=block.lipschitz,
                                      activations=block.activations, W_raw=W,
                                      a_raw=a, b_raw=b, biases=biases))

    # overflow is legal here: non-finite results are reported explicitly below
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        mblocks = [backward_pass(b, config) for b in tensor_blocks]
        diff = model_forward_batch(mblocks, X) - T
        loss = ad.mean(diff * diff)
        loss.backward()

    grads = [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
             for leaf in leaves]
    flat = np.concatenate([g.ravel() for g in grads])
    if not np.all(np.isfinite(flat)):
        bad = int(np.flatnonzero(~np.isfinite(flat))[0])
        raise GradientError(f"non-finite gradient at {_locate(param_segments(model), bad)}")
    return float(loss.value), flat


def gradient(model: Model, batch: tuple, config: MaterializeConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Gradient of the batch MSE over all raw parameters (canonical flat order)."""
    inputs, targets = batch
    return loss_and_grad(model, inputs, targets, config)[1]


# --- optimizers and training loop --------------------------------------------

@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-2
    epochs: int = 2000
    batch_size: int = 0  # 0 = full batch
    seed: int = 42
    verify_every: int = 0  # re-certify the materialized blocks every k epochs
    grid_points: int = 512

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr < 0 or self.epochs < 0:
            raise ValueError("lr and epochs must be nonnegative")


@dataclass
class CollapseMetrics:
    slope: float
    intercept: float
    r_squared: float
    max_residual: float


@dataclass
class TrainingHistory:
    losses: list[float]
    optimizer: str
    collapse: CollapseMetrics | None = None
    certification_failures: list[int] = field(default_factory=list)

    @property
    def final_mse(self) -> float:
        return self.losses[-1] if self.losses else math.nan


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss; `history` holds the epochs completed."""

    def __init__(self, message: str, history: TrainingHistory):
        super().__init__(message)
        self.history = history


class _Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


def _dataset_mse(model: Model, dataset: Dataset,
                 config: MaterializeConfig) -> float:
    blocks = materialize_model(model, config)
    X = _as_rows(dataset.inputs, model.d_x)
    Y = value_of(model_forward_batch(blocks, X))
    return mse_loss(Y, _as_rows(dataset.targets, model.d_x))


def train(model: Model, dataset: Dataset, config: TrainConfig,
          mat_config: MaterializeConfig = DEFAULT_CONFIG) -> TrainingHistory:
    """Train in place; deterministic given config.seed.  Raises TrainingDiverged
    (with partial history attached) on a non-finite loss."""
    history = TrainingHistory(losses=[], optimizer=config.optimizer)
    params = flatten_params(model)
    opt = _Adam(params.size, config.lr) if config.optimizer == "adam" else _Sgd(config.lr)
    rng = np.random.default_rng(config.seed)
    n = dataset.inputs.shape[0]
    batch = config.batch_size if config.batch_size and config.batch_size < n else n

    for epoch in range(config.epochs):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            try:
                loss, grad = loss_and_grad(model, dataset.inputs[idx],
                                           dataset.targets[idx], mat_config)
            except GradientError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}", history) from exc
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
            params = opt.step(params, grad)
            set_flat_params(model, params)
        epoch_loss = _dataset_mse(model, dataset, mat_config)
        history.losses.append(epoch_loss)
        if not math.isfinite(epoch_loss):
            raise TrainingDiverged(f"non-finite loss at epoch {epoch}", history)
        if config.verify_every and (epoch + 1) % config.verify_every == 0:
            for blk in materialize_model(model, mat_config):
                if not verify_block(blk).all_pass:
                    history.certification_failures.append(epoch)
                    break

    blocks = materialize_model(model, mat_config)
    history.collapse = collapse_metric(blocks, dataset.domain, config.grid_points)
    return history


# --- oracles and diagnostics --------------------------------------------------

def linear_fit_oracle(domain: tuple[float, float] = (-2 * math.pi, 2 * math.pi),
                      amplitude: float = 1.0) -> tuple[float, float, float]:
    """Continuous least-squares line against amplitude*sin over a symmetric domain.

    Closed form: with T = hi, a* = 3A (sin T - T cos T) / T^3, b* = 0, and
    loss* the mean squared residual of that line.  For T = 2*pi this gives
    a* = -3A/(4 pi^2) and loss* = A^2 (1/2 - 3/(4 pi^2)).
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not math.isclose(lo, -hi) or hi <= 0:
        raise ValueError("oracle requires a symmetric domain (-T, T)")
    T = hi
    A = float(amplitude)
    moment = math.sin(T) - T * math.cos(T)  # integral of x sin x over [0, T]
    a_star = 3.0 * A * moment / T ** 3
    sin_sq = T - math.sin(2.0 * T) / 2.0  # integral of sin^2 over [-T, T]
    loss = (a_star ** 2 * (2.0 * T ** 3 / 3.0)
            - 4.0 * a_star * A * moment
            + A * A * sin_sq) / (2.0 * T)
    return (a_star, 0.0, loss)


def collapse_metric(blocks, domain: tuple[float, float], n_points: int = 512) -> CollapseMetrics:
    """Least-squares line fit to the model output over a uniform grid (d_x = 1)."""
    if n_points < 3:
        raise ValueError("need at least 3 grid points")
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise ValueError(f"degenerate grid domain {domain}")
    if blocks[0].shape.d_x != 1:
        raise ValueError("collapse metric is defined for width-1 models")
    xs = np.linspace(lo, hi, n_points)
    ys = value_of(model_forward_batch(blocks, xs.reshape(-1, 1))).ravel()
    return fit_line(xs, ys)


def fit_line(xs: np.ndarray, ys: np.ndarray) -> CollapseMetrics:
    """Ordinary least-squares line plus R^2 and max |residual|."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xc = xs - xs.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        raise ValueError("degenerate grid: zero variance in x")
    slope = float(xc @ (ys - ys.mean())) / denom
    intercept = float(ys.mean() - slope * xs.mean())
    resid = ys - (slope * xs + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    if ss_tot <= 1e-30:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return CollapseMetrics(slope=slope, intercept=intercept, r_squared=r2,
                           max_residual=float(np.abs(resid).max()))


def output_curve(blocks, domain: tuple[float, float], amplitude: float,
                 n_points: int = 512) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x, y_pred, y_target) over a uniform grid for the sine experiment."""
    lo, hi = float(domain[0]), float(domain[1])
    xs = np.linspace(lo, hi, n_points)
    ys = value_of(model_forward_batch(blocks, xs.reshape(-1, 1))).ravel()
    return xs, ys, amplitude * np.sin(xs)


def write_history_csv(history: TrainingHistory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(history.losses):
            writer.writerow([epoch, repr(loss)])


def write_curve_csv(xs, y_pred, y_target, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y_pred", "y_target"])
        for row in zip(xs, y_pred, y_target):
            writer.writerow([repr(float(v)) for v in row])

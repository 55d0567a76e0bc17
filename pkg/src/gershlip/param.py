"""Constraint engine: maps unconstrained raw parameters to a certified block.

The residual block

    x_out = A x + B w_n,   w_l = sigma_l(C_l w_{l-1} + b_l),   w_0 = x

is L-Lipschitz whenever its parameters satisfy a family of closed-form
inequalities (row-norm budgets on every C_l, an element-wise cap on C_1,
interval bounds on the diagonals A and B, and recursive lower bounds on the
positive diagonal multipliers Lambda_l).  `backward_pass` materializes a
constrained parameter set from arbitrary raw values so that every
inequality holds by construction, for any raw input whatsoever.

All formulas are written against the autodiff dispatch layer, so the same
code materializes plain numpy parameters or differentiable tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .activations import ActivationSpec
from .autodiff import value_of

__all__ = [
    "BlockShape",
    "MaterializeConfig",
    "MaterializedBlock",
    "RawBlock",
    "DEFAULT_CONFIG",
    "backward_pass",
    "compute_G",
    "compute_lambda_first",
    "compute_lambda_mid",
    "compute_lambda_n",
    "init_raw",
    "materialize_A",
    "materialize_B",
    "materialize_C1",
    "materialize_C_inner",
    "weighted_norm_rows",
]

# tanh output is clipped to +/- _PMAX so norm budgets stay strict even when
# float tanh saturates to exactly 1.
_PMAX = 1.0 - 1e-12


@dataclass(frozen=True)
class MaterializeConfig:
    """Margins applied on top of the closed-form bounds.

    eps:        multiplicative shrink on open-interval budgets (strict '<').
    delta:      floor/ceiling fraction keeping |a_i| inside (0, L).
    lam_floor:  absolute floor on every lambda (positivity).
    lam_margin: relative headroom above each lambda lower bound, keeping the
                matched Gershgorin disc strictly negative under roundoff.
    s_zero_cap: per-element magnitude cap used only when an inner layer has
                S = 0 and the row budget 2/|S| is infinite.
    """

    eps: float = 1e-6
    delta: float = 1e-3
    lam_floor: float = 1e-8
    lam_margin: float = 1e-9
    s_zero_cap: float = 1e4


DEFAULT_CONFIG = MaterializeConfig()


@dataclass(frozen=True)
class BlockShape:
    """State width d_x and inner widths [d_1, ..., d_n]; d_n must equal d_x."""

    d_x: int
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.d_x < 1 or any(d < 1 for d in self.dims):
            raise ValueError("all widths must be positive")
        if len(self.dims) < 1:
            raise ValueError("need at least one inner layer")
        if self.dims[-1] != self.d_x:
            raise ValueError(
                f"last inner width {self.dims[-1]} must equal the state width {self.d_x}"
            )

    @property
    def n(self) -> int:
        return len(self.dims)

    def layer_dims(self, l: int) -> tuple[int, int]:
        """(rows, cols) of C_l for l in 0..n-1; cols of layer 0 is d_x."""
        cols = self.d_x if l == 0 else self.dims[l - 1]
        return self.dims[l], cols


@dataclass
class RawBlock:
    """Unconstrained trainable parameters of one residual block."""

    shape: BlockShape
    lipschitz: float
    activations: list[ActivationSpec]
    W_raw: list  # W_raw[l] has shape (d_l, d_{l-1})
    a_raw: object  # length d_x
    b_raw: object  # length d_x
    biases: list  # biases[l] has length d_l

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ValueError("lipschitz bound must be positive")
        if len(self.activations) != self.shape.n:
            raise ValueError("need one activation per inner layer")
        first = self.activations[0]
        if first.P > 0:
            raise ValueError(
                f"first-layer activation {first.name!r} has L*m = {first.P} > 0; "
                "the first layer requires L*m <= 0"
            )
        if first.S == 0:
            raise ValueError(
                f"first-layer activation {first.name!r} has L+m = 0, which forces C_1 = 0"
            )
        if len(self.W_raw) != self.shape.n or len(self.biases) != self.shape.n:
            raise ValueError("need one weight matrix and one bias vector per layer")
        for l in range(self.shape.n):
            want = self.shape.layer_dims(l)
            got = value_of(self.W_raw[l]).shape
            if got != want:
                raise ValueError(f"W_raw[{l}] has shape {got}, expected {want}")
            if value_of(self.biases[l]).shape != (want[0],):
                raise ValueError(f"biases[{l}] must have length {want[0]}")
        for name, vec in (("a_raw", self.a_raw), ("b_raw", self.b_raw)):
            if value_of(vec).shape != (self.shape.d_x,):
                raise ValueError(f"{name} must have length {self.shape.d_x}")


@dataclass
class MaterializedBlock:
    """Constrained block parameters; A, B and each Lambda_l stored as diagonals."""

    shape: BlockShape
    lipschitz: float
    activations: list[ActivationSpec]
    A: object
    B: object
    C: list
    Lambda: list
    biases: list

    def to_numpy(self) -> "MaterializedBlock":
        """Copy with every field reduced to a plain ndarray."""
        return replace(
            self,
            A=np.array(value_of(self.A)),
            B=np.array(value_of(self.B)),
            C=[np.array(value_of(c)) for c in self.C],
            Lambda=[np.array(value_of(lam)) for lam in self.Lambda],
            biases=[np.array(value_of(b)) for b in self.biases],
        )


def weighted_norm_rows(raw, budget: float, weights=1.0):
    """Reparameterize a raw matrix so every row has weighted l1 norm below `budget`.

    Each element becomes (budget / ncols) * tanh(raw_ij) / w_j, so
    sum_j w_j |x_ij| <= budget * max|tanh| < budget.  Odd in `raw`.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    ncols = value_of(raw).shape[1]
    p = ad.clip(ad.tanh(raw), -_PMAX, _PMAX)
    return (budget / ncols) * (1.0 / w) * p


def materialize_A(a_raw, lipschitz: float, config: MaterializeConfig = DEFAULT_CONFIG):
    """Diagonal of A with |a_i| in [delta*L, (1-delta)*L], sign from tanh (sign(0) -> +)."""
    if lipschitz <= 0:
        raise ValueError("lipschitz bound must be positive")
    t = ad.tanh(a_raw)
    sign = np.where(value_of(t) < 0.0, -1.0, 1.0)
    mag = ad.clip(ad.absolute(t), config.delta, 1.0 - config.delta)
    return sign * lipschitz * mag


def materialize_B(b_raw, a, lipschitz: float, config: MaterializeConfig = DEFAULT_CONFIG):
    """Diagonal of B with |b_i| strictly below (L^2 - a_i^2)/|a_i|."""
    a_abs = ad.absolute(a)
    if np.any(value_of(a_abs) <= 0) or np.any(value_of(a_abs) >= lipschitz):
        raise ValueError("need 0 < |a_i| < lipschitz before materializing B")
    bound = (lipschitz * lipschitz - a * a) / a_abs
    p = ad.clip(ad.tanh(b_raw), -_PMAX, _PMAX)
    return (1.0 - config.eps) * bound * p


def materialize_C_inner(raw, S_l: float, config: MaterializeConfig = DEFAULT_CONFIG):
    """Inner-layer weights (l >= 2): row l1 norms strictly below 2/|S_l|.

    When S_l = 0 the row budget is infinite; entries are only clipped to
    +/- s_zero_cap for numerical hygiene.
    """
    if S_l == 0.0:
        return ad.clip(raw, -config.s_zero_cap, config.s_zero_cap)
    return weighted_norm_rows(raw, (1.0 - config.eps) * 2.0 / abs(S_l))


def _lambda_from_bound(bound, config: MaterializeConfig):
    return ad.maximum(bound * (1.0 + config.lam_margin), config.lam_floor)


def _row_denominator(C, S: float):
    den = 2.0 - abs(S) * ad.tsum(ad.absolute(C), axis=1)
    if np.any(value_of(den) <= 0):
        raise ValueError("row norm budget violated: 2 - |S| * ||C_i||_1 must stay positive")
    return den


def compute_lambda_n(a, b, S_n: float, C_n, config: MaterializeConfig = DEFAULT_CONFIG):
    """Last-layer multipliers: lambda_i >= (b_i^2 + |a_i||b_i|) / (2 - |S_n|*||C_{n,i}||_1)."""
    num = b * b + ad.absolute(a) * ad.absolute(b)
    return _lambda_from_bound(num / _row_denominator(C_n, S_n), config)


def compute_G(lambda_next, C_next, S_next: float, P_next: float):
    """Numerator of the lambda recursion, indexed over the columns of C_next.

    G_i = sum_j lambda_j (|S||c_ji| - 2 P c_ji^2) + 2|P| sum_{z != i} |Q_iz|
    with Q = C^T diag(lambda) C; clamped at zero from below (the clamp is
    inert whenever the row budgets hold).
    """
    lam_col = ad.reshape(lambda_next, (-1, 1))
    absC = ad.absolute(C_next)
    term = abs(S_next) * absC - (2.0 * P_next) * C_next * C_next
    g = ad.tsum(term * lam_col, axis=0)
    if P_next != 0.0:
        Q = ad.matmul(ad.transpose(C_next), lam_col * C_next)
        mask = 1.0 - np.eye(value_of(C_next).shape[1])
        g = g + (2.0 * abs(P_next)) * ad.tsum(ad.absolute(Q * mask), axis=1)
    return ad.maximum(g, 0.0)


def compute_lambda_mid(G, C_l, S_l: float, config: MaterializeConfig = DEFAULT_CONFIG):
    """Middle-layer multipliers: lambda_i >= G_i / (2 - |S_l|*||C_{l,i}||_1)."""
    return _lambda_from_bound(G / _row_denominator(C_l, S_l), config)


def compute_lambda_first(G2, config: MaterializeConfig = DEFAULT_CONFIG):
    """First-layer multipliers: lambda_1 = G_2 suffices because the extra row
    constraint |S_1|*||C_{1,i}||_1 <= 1 keeps the true denominator >= 1."""
    return _lambda_from_bound(G2, config)


def materialize_C1(raw, spec1: ActivationSpec, lambda1, a, b, lipschitz: float,
                   config: MaterializeConfig = DEFAULT_CONFIG):
    """First-layer weights under both the element-wise cap and the row constraint.

    Element (j, i) is bounded by
        (L^2 - a_i^2 - |a_i||b_i|) |S_1| / (d_1 lambda_{1,j} (S_1^2 + 4|P_1|))
    and additionally by (1 - eps) / (|S_1| d_x) so that
    |S_1| * ||C_{1,j}||_1 <= 1 regardless of the element cap.
    """
    S1, P1 = spec1.S, spec1.P
    if S1 == 0.0:
        raise ValueError("first layer requires S_1 != 0")
    if P1 > 0.0:
        raise ValueError("first layer requires P_1 <= 0")
    d1, d_x = value_of(raw).shape
    slack = lipschitz * lipschitz - a * a - ad.absolute(a) * ad.absolute(b)
    if np.any(value_of(slack) < 0):
        raise ValueError("L^2 - a_i^2 - |a_i||b_i| must be nonnegative")
    coef = abs(S1) / (d1 * (S1 * S1 + 4.0 * abs(P1)))
    elem = coef * ad.reshape(slack, (1, -1)) / ad.reshape(lambda1, (-1, 1))
    share = (1.0 - config.eps) / (abs(S1) * d_x)
    u = ad.minimum(elem, share)
    return u * ad.clip(ad.tanh(raw), -_PMAX, _PMAX)


def backward_pass(raw: RawBlock, config: MaterializeConfig = DEFAULT_CONFIG) -> MaterializedBlock:
    """Materialize a constrained block from raw parameters.

    Order: inner C_l for l = n..2, then A and B, then Lambda_n, then the
    middle multipliers down to Lambda_2, then Lambda_1 from G_2, and
    finally C_1 (whose element cap needs Lambda_1).
    """
    n = raw.shape.n
    specs = raw.activations
    lip = raw.lipschitz

    C: list = [None] * n
    for l in range(n - 1, 0, -1):
        C[l] = materialize_C_inner(raw.W_raw[l], specs[l].S, config)

    A = materialize_A(raw.a_raw, lip, config)
    B = materialize_B(raw.b_raw, A, lip, config)

    Lambda: list = [None] * n
    if n == 1:
        # C_1 is simultaneously first and last layer.  The row constraint
        # |S_1|*||row||_1 <= 1 keeps the last-layer denominator >= 1, so the
        # numerator alone is a valid lower bound for lambda_1.
        bound = B * B + ad.absolute(A) * ad.absolute(B)
        Lambda[0] = _lambda_from_bound(bound, config)
    else:
        Lambda[n - 1] = compute_lambda_n(A, B, specs[n - 1].S, C[n - 1], config)
        for l in range(n - 2, 0, -1):
            G = compute_G(Lambda[l + 1], C[l + 1], specs[l + 1].S, specs[l + 1].P)
            Lambda[l] = compute_lambda_mid(G, C[l], specs[l].S, config)
        G2 = compute_G(Lambda[1], C[1], specs[1].S, specs[1].P)
        Lambda[0] = compute_lambda_first(G2, config)

    C[0] = materialize_C1(raw.W_raw[0], specs[0], Lambda[0], A, B, lip, config)

    biases = [b if ad.is_tensor(b) else np.array(value_of(b)) for b in raw.biases]
    return MaterializedBlock(
        shape=raw.shape,
        lipschitz=lip,
        activations=list(specs),
        A=A,
        B=B,
        C=C,
        Lambda=Lambda,
        biases=biases,
    )


def init_raw(shape: BlockShape, lipschitz: float, activations: list[ActivationSpec],
             seed) -> RawBlock:
    """Random raw block: Kaiming-uniform weights with tanh gain 1.

    Weights are uniform in +/- sqrt(3 / fan_in), biases uniform in
    +/- 1/sqrt(fan_in), and the A/B raw diagonals uniform in (-1, 1).
    Deterministic given the seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    W_raw, biases = [], []
    for l in range(shape.n):
        rows, cols = shape.layer_dims(l)
        w_bound = np.sqrt(3.0 / cols)
        W_raw.append(rng.uniform(-w_bound, w_bound, size=(rows, cols)))
        biases.append(rng.uniform(-1.0 / np.sqrt(cols), 1.0 / np.sqrt(cols), size=rows))
    a_raw = rng.uniform(-1.0, 1.0, size=shape.d_x)
    b_raw = rng.uniform(-1.0, 1.0, size=shape.d_x)
    return RawBlock(
        shape=shape,
        lipschitz=float(lipschitz),
        activations=list(activations),
        W_raw=W_raw,
        a_raw=a_raw,
        b_raw=b_raw,
        biases=biases,
    )

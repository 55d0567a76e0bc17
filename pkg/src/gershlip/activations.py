"""Catalog of element-wise activations with slope-restriction constants.

Every supported activation is slope-restricted: all difference quotients
(sigma(v) - sigma(v')) / (v - v') lie in [m, L].  The catalog stores an
(L, m) envelope per activation, from which the derived constants
S = L + m and P = L * m drive the block parameterization.  Some stored
envelopes are deliberately loose (e.g. sigmoid's L = 1 while the sharp
bound is 1/4); looseness never invalidates the constraints, it only
tightens the parameterization more than strictly necessary.

Hardshrink and RReLU are rejected: the former is discontinuous (infinite
quotients), the latter is stochastic, so neither admits finite constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, expit

__all__ = [
    "ActivationSpec",
    "SlopeReport",
    "UnknownActivationError",
    "InfiniteConstantsError",
    "activation_constants",
    "activation_eval",
    "activation_derivative",
    "catalog_names",
    "default_catalog",
    "get_activation",
    "numeric_constants",
    "slope_quadratic_form",
    "verify_slope_restriction",
]

# PyTorch SELU constants.
_SELU_ALPHA = 1.6732632423543772848170429916717
_SELU_SCALE = 1.0507009873554804934193349852946

# GELU (exact erf form) slope extremes, attained at +/- sqrt(2):
#   L = (erf(1) + 1)/2 + 1/(e*sqrt(pi)),  m = erfc(1)/2 - 1/(e*sqrt(pi))
_GELU_L = 0.5 * (math.erf(1.0) + 1.0) + 1.0 / (math.e * math.sqrt(math.pi))
_GELU_M = 0.5 * math.erfc(1.0) - 1.0 / (math.e * math.sqrt(math.pi))

# SiLU slope extremes, attained near x = +/- 2.39936 (numeric extremum of
# sigma(x)(1 + x(1 - sigma(x)))); the derivative satisfies f'(-x) = 1 - f'(x).
_SILU_L = 1.099839320128867
_SILU_M = 1.0 - _SILU_L

# Mish envelope kept deliberately loose; the sharp extremes are approximately
# (1.08850, -0.11253), well inside this interval.
_MISH_L = 1.199678640
_MISH_M = -0.2157287822


class UnknownActivationError(ValueError):
    """Raised for activation names not in the catalog."""


class InfiniteConstantsError(ValueError):
    """Raised for activations whose slope constants are infinite."""


@dataclass
class ActivationSpec:
    """An element-wise activation together with its (L, m) slope envelope."""

    name: str
    L: float
    m: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isfinite(self.L) and math.isfinite(self.m)):
            raise InfiniteConstantsError(
                f"activation {self.name!r} has infinite slope constants"
            )
        if self.L < self.m:
            raise ValueError(f"activation {self.name!r}: L={self.L} < m={self.m}")

    @property
    def S(self) -> float:
        return self.L + self.m

    @property
    def P(self) -> float:
        return self.L * self.m

    @property
    def first_layer_ok(self) -> bool:
        """Whether this activation may sit in the first inner layer (needs P <= 0, S != 0)."""
        return self.P <= 0.0 and self.S != 0.0

    def __call__(self, x):
        return activation_eval(self, x)

    def derivative(self, x):
        return activation_derivative(self, x)


# --- activation definitions -------------------------------------------------
#
# Each entry: (constants, value, derivative, default params).  `constants`
# maps params -> (L, m).  Derivatives use interior-side conventions at kinks
# (the kink set has measure zero; training resamples away from it).


def _relu(x, p):
    return np.maximum(x, 0.0)


def _relu_d(x, p):
    return np.where(x > 0.0, 1.0, 0.0)


def _relu6(x, p):
    return np.clip(x, 0.0, 6.0)


def _relu6_d(x, p):
    return np.where((x > 0.0) & (x < 6.0), 1.0, 0.0)


def _leaky(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, x, a * x)


def _leaky_d(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, 1.0, a)


def _elu(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, x, a * np.expm1(np.minimum(x, 0.0)))


def _elu_d(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, 1.0, a * np.exp(np.minimum(x, 0.0)))


def _celu(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, x, a * np.expm1(np.minimum(x, 0.0) / a))


def _celu_d(x, p):
    a = p["alpha"]
    return np.where(x > 0.0, 1.0, np.exp(np.minimum(x, 0.0) / a))


def _selu(x, p):
    neg = _SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
    return _SELU_SCALE * np.where(x > 0.0, x, neg)


def _selu_d(x, p):
    return _SELU_SCALE * np.where(x > 0.0, 1.0, _SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def _gelu(x, p):
    return x * 0.5 * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_d(x, p):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def _sigmoid(x, p):
    return expit(x)


def _sigmoid_d(x, p):
    s = expit(x)
    return s * (1.0 - s)


def _silu(x, p):
    return x * expit(x)


def _silu_d(x, p):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def _tanh(x, p):
    return np.tanh(x)


def _tanh_d(x, p):
    t = np.tanh(x)
    return 1.0 - t * t


def _softplus(x, p):
    return np.logaddexp(0.0, x)


def _softplus_d(x, p):
    return expit(x)


def _logsigmoid(x, p):
    return -np.logaddexp(0.0, -x)


def _logsigmoid_d(x, p):
    return expit(-x)


def _mish(x, p):
    return x * np.tanh(np.logaddexp(0.0, x))


def _mish_d(x, p):
    t = np.tanh(np.logaddexp(0.0, x))
    return t + x * (1.0 - t * t) * expit(x)


def _hardtanh(x, p):
    return np.clip(x, p["min_val"], p["max_val"])


def _hardtanh_d(x, p):
    return np.where((x > p["min_val"]) & (x < p["max_val"]), 1.0, 0.0)


def _hardsigmoid(x, p):
    return np.clip(x / 6.0 + 0.5, 0.0, 1.0)


def _hardsigmoid_d(x, p):
    return np.where((x > -3.0) & (x < 3.0), 1.0 / 6.0, 0.0)


def _hardswish(x, p):
    return x * np.clip(x + 3.0, 0.0, 6.0) / 6.0


def _hardswish_d(x, p):
    inner = (2.0 * x + 3.0) / 6.0
    return np.where(x <= -3.0, 0.0, np.where(x >= 3.0, 1.0, inner))


def _softshrink(x, p):
    lam = p["lambd"]
    return np.where(x > lam, x - lam, np.where(x < -lam, x + lam, 0.0))


def _softshrink_d(x, p):
    lam = p["lambd"]
    return np.where(np.abs(x) > lam, 1.0, 0.0)


def _softsign(x, p):
    return x / (1.0 + np.abs(x))


def _softsign_d(x, p):
    d = 1.0 + np.abs(x)
    return 1.0 / (d * d)


def _tanhshrink(x, p):
    return x - np.tanh(x)


def _tanhshrink_d(x, p):
    t = np.tanh(x)
    return t * t


def _threshold(x, p):
    return np.where(x > p["threshold"], x, p["value"])


def _threshold_d(x, p):
    return np.where(x > p["threshold"], 1.0, 0.0)


def _const_consts(L, m):
    return lambda p: (L, m)


def _slope_pair_consts(p):
    # LeakyReLU / PReLU: slopes are {alpha, 1}.
    a = p["alpha"]
    return (max(1.0, a), min(1.0, a))


_CATALOG = {
    # name: (constants(params) -> (L, m), value, derivative, default params)
    "elu": (lambda p: (max(1.0, p["alpha"]), 0.0), _elu, _elu_d, {"alpha": 1.0}),
    "hardsigmoid": (_const_consts(1.0 / 6.0, 0.0), _hardsigmoid, _hardsigmoid_d, {}),
    "hardtanh": (_const_consts(1.0, 0.0), _hardtanh, _hardtanh_d, {"min_val": -1.0, "max_val": 1.0}),
    "hardswish": (_const_consts(1.5, -0.5), _hardswish, _hardswish_d, {}),
    "leaky_relu": (_slope_pair_consts, _leaky, _leaky_d, {"alpha": 0.01}),
    "logsigmoid": (_const_consts(1.0, 0.0), _logsigmoid, _logsigmoid_d, {}),
    "prelu": (_slope_pair_consts, _leaky, _leaky_d, {"alpha": 0.25}),
    "relu": (_const_consts(1.0, 0.0), _relu, _relu_d, {}),
    "relu6": (_const_consts(1.0, 0.0), _relu6, _relu6_d, {}),
    "selu": (_const_consts(_SELU_ALPHA * _SELU_SCALE, 0.0), _selu, _selu_d, {}),
    "celu": (lambda p: (max(1.0, p["alpha"]), 0.0), _celu, _celu_d, {"alpha": 1.0}),
    "gelu": (_const_consts(_GELU_L, _GELU_M), _gelu, _gelu_d, {}),
    "sigmoid": (_const_consts(1.0, 0.0), _sigmoid, _sigmoid_d, {}),
    "silu": (_const_consts(_SILU_L, _SILU_M), _silu, _silu_d, {}),
    "softplus": (_const_consts(1.0, 0.0), _softplus, _softplus_d, {}),
    "mish": (_const_consts(_MISH_L, _MISH_M), _mish, _mish_d, {}),
    "softshrink": (_const_consts(1.0, 0.0), _softshrink, _softshrink_d, {"lambd": 0.5}),
    "softsign": (_const_consts(1.0, 0.0), _softsign, _softsign_d, {}),
    "tanh": (_const_consts(1.0, 0.0), _tanh, _tanh_d, {}),
    "tanhshrink": (_const_consts(1.0, 0.0), _tanhshrink, _tanhshrink_d, {}),
    "threshold": (_const_consts(1.0, 0.0), _threshold, _threshold_d, {"threshold": 0.0, "value": 0.0}),
}

# Activations with infinite slope constants; rejected on lookup.
_INFINITE = {"hardshrink", "rrelu"}

# Rows where the stored envelope is loose rather than sharp: the true slope
# range sits strictly inside [m, L].  Numeric checks can only assert
# containment for these, not agreement.
LOOSE_ENVELOPES = frozenset({"sigmoid", "mish"})


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def get_activation(name: str, params: dict | None = None) -> ActivationSpec:
    """Look up a catalog activation, applying default parameters.

    Raises InfiniteConstantsError for hardshrink/rrelu and
    UnknownActivationError for anything else not in the catalog.
    """
    if name in _INFINITE:
        raise InfiniteConstantsError(
            f"activation {name!r} has infinite slope constants and cannot be used"
        )
    try:
        consts, _, _, defaults = _CATALOG[name]
    except KeyError:
        raise UnknownActivationError(f"unknown activation {name!r}") from None
    merged = dict(defaults)
    if params:
        unknown = set(params) - set(defaults)
        if unknown:
            raise ValueError(f"activation {name!r} does not take parameters {sorted(unknown)}")
        merged.update({k: float(v) for k, v in params.items()})
    L, m = consts(merged)
    return ActivationSpec(name=name, L=L, m=m, params=merged)


def default_catalog() -> list[ActivationSpec]:
    """All supported activations with their default parameters."""
    return [get_activation(name) for name in catalog_names()]


def activation_constants(name: str, params: dict | None = None) -> tuple[float, float, float, float]:
    """Return (L, m, S, P) for a catalog activation."""
    spec = get_activation(name, params)
    return (spec.L, spec.m, spec.S, spec.P)


def activation_eval(spec: ActivationSpec, x):
    """Evaluate sigma(x) element-wise; scalars in, scalars out."""
    _, value, _, _ = _CATALOG[spec.name]
    out = value(np.asarray(x, dtype=float), spec.params)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def activation_derivative(spec: ActivationSpec, x):
    """Evaluate sigma'(x) element-wise (interior-side convention at kinks)."""
    _, _, deriv, _ = _CATALOG[spec.name]
    out = deriv(np.asarray(x, dtype=float), spec.params)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


@dataclass
class SlopeReport:
    violations: int
    min_quotient: float
    max_quotient: float
    pairs_checked: int


def verify_slope_restriction(
    spec: ActivationSpec,
    sample_count: int,
    domain: tuple[float, float],
    seed: int,
    tol: float = 1e-6,
) -> SlopeReport:
    """Sample pairs in `domain` and check all difference quotients lie in [m - tol, L + tol]."""
    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    lo, hi = float(domain[0]), float(domain[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"domain {domain} is not a finite nonempty interval")
    rng = np.random.default_rng(seed)
    v = rng.uniform(lo, hi, sample_count)
    vp = rng.uniform(lo, hi, sample_count)
    keep = np.abs(v - vp) > 1e-12
    v, vp = v[keep], vp[keep]
    q = (activation_eval(spec, v) - activation_eval(spec, vp)) / (v - vp)
    violations = int(np.count_nonzero((q < spec.m - tol) | (q > spec.L + tol)))
    return SlopeReport(
        violations=violations,
        min_quotient=float(q.min()),
        max_quotient=float(q.max()),
        pairs_checked=int(q.size),
    )


def numeric_constants(
    spec: ActivationSpec,
    domain: tuple[float, float] = (-10.0, 10.0),
    step: float = 1e-3,
) -> tuple[float, float]:
    """Estimate (sup, inf) of the slope by central differences over a grid.

    Independent numeric cross-check of the catalog constants; requires
    step <= 1e-3 so the differences resolve the slope extremes.
    """
    if step > 1e-3:
        raise ValueError("grid step must be <= 1e-3")
    lo, hi = float(domain[0]), float(domain[1])
    x = np.arange(lo, hi + step / 2, step)
    slope = (activation_eval(spec, x + step) - activation_eval(spec, x - step)) / (2.0 * step)
    return (float(slope.max()), float(slope.min()))


def slope_quadratic_form(spec: ActivationSpec, v, vp, lam: float = 1.0):
    """Per-coordinate incremental quadratic form; <= 0 iff the slope restriction holds.

    Evaluates 2*lam * (dw - m*dv)(dw - L*dv) = lam*(2P dv^2 - 2S dv dw + 2 dw^2)
    with dv = v - v' and dw = sigma(v) - sigma(v').
    """
    dv = np.asarray(v, dtype=float) - np.asarray(vp, dtype=float)
    dw = activation_eval(spec, v) - activation_eval(spec, vp)
    return lam * (2.0 * spec.P * dv * dv - 2.0 * spec.S * dv * dw + 2.0 * dw * dw)

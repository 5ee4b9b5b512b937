"""Layer maps and sampled checkers for the properties that make them act
nicely on cones and normed spaces: order preservation, subhomogeneity,
non-expansiveness, and the scalar sigmoid criterion behind them.

The property checks are falsifiable Monte-Carlo searches, not proofs: they
sample seeded inputs, compare against a tolerance, and hand back a witness
when a violation is found.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .metrics import MetricKind

__all__ = [
    "Activation",
    "ACTIVATIONS",
    "get_activation",
    "LayerMap",
    "ComposedMap",
    "compose",
    "WeightSpec",
    "BiasSpec",
    "sample_weights",
    "sample_weight_batch",
    "PropertyVerdict",
    "apply_layer",
    "check_order_preserving",
    "check_subhomogeneous",
    "check_nonexpansive",
    "check_scalar_criterion_b",
    "sample_positive_cone",
    "default_criterion_grid",
    "POSITIVE_SAMPLE_RANGE",
]

# Log-uniform sampling range for positive-cone inputs; cone-metric behavior
# spans scales, so uniform sampling would miss ray directions.
POSITIVE_SAMPLE_RANGE = (1e-3, 1e3)


@dataclass(frozen=True, eq=False)
class Activation:
    """A componentwise scalar nonlinearity with its derivative."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    def derivative(self, t):
        return self.deriv(np.asarray(t, dtype=float))

    def __repr__(self):
        return f"Activation({self.name})"


def _silu(t):
    return t * expit(t)


def _silu_deriv(t):
    s = expit(t)
    return s * (1.0 + t * (1.0 - s))


RELU = Activation("relu", lambda t: np.maximum(t, 0.0),
                  lambda t: (t > 0.0).astype(float))  # subgradient 0 at the kink
TANH = Activation("tanh", np.tanh, lambda t: 1.0 - np.tanh(t) ** 2)
SIGMOID = Activation("sigmoid", expit, lambda t: expit(t) * (1.0 - expit(t)))
SILU = Activation("silu", _silu, _silu_deriv)
HARD_SIGMOID = Activation("hard_sigmoid", lambda t: np.clip(t, 0.0, 1.0),
                          lambda t: ((t > 0.0) & (t < 1.0)).astype(float))
IDENTITY = Activation("identity", lambda t: t, np.ones_like)

ACTIVATIONS = {a.name: a for a in (RELU, TANH, SIGMOID, SILU, HARD_SIGMOID, IDENTITY)}


def get_activation(name: str) -> Activation:
    try:
        return ACTIVATIONS[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; "
                         f"known: {sorted(ACTIVATIONS)}") from None


LAYER_FORMS = ("affine", "sandwich", "residual", "scaled_residual")


@dataclass(frozen=True, eq=False)
class LayerMap:
    """A parameterized layer map on R^d.

    form 'affine':           x -> act(W x + b)
    form 'sandwich':         x -> W^T act(W x + b)
    form 'residual':         x -> x + act(W x + b)
    form 'scaled_residual':  x -> x + act(W x + b) / scale   (scale >= 1)

    Instances are callable and accept either a single vector of shape (d,)
    or a batch of shape (m, d).
    """

    form: str
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation
    scale: float = 1.0

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)
        if self.form not in LAYER_FORMS:
            raise ValueError(f"unknown layer form {self.form!r}")
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"weights must be square, got shape {W.shape}")
        if b.ndim != 1 or b.size != W.shape[0]:
            raise ValueError(f"bias length {b.shape} does not match weights {W.shape}")
        if self.form == "scaled_residual" and not self.scale >= 1.0:
            raise ValueError(f"scaled_residual needs scale >= 1, got {self.scale}")

    @property
    def dim(self) -> int:
        return self.bias.size

    def preactivation(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"input dim {x.shape[-1]} does not match layer dim {self.dim}")
        z = self.activation(self.preactivation(x))
        if self.form == "affine":
            return z
        if self.form == "sandwich":
            return z @ self.weights
        if self.form == "residual":
            return x + z
        return x + z / self.scale

    @classmethod
    def affine(cls, weights, bias, activation: Activation) -> "LayerMap":
        return cls("affine", weights, bias, activation)

    @classmethod
    def sandwich(cls, weights, bias, activation: Activation) -> "LayerMap":
        return cls("sandwich", weights, bias, activation)

    @classmethod
    def residual(cls, weights, bias, activation: Activation) -> "LayerMap":
        return cls("residual", weights, bias, activation)

    @classmethod
    def scaled_residual(cls, weights, bias, activation: Activation,
                        scale: float) -> "LayerMap":
        return cls("scaled_residual", weights, bias, activation, scale=scale)

    def describe(self) -> str:
        return f"{self.form}[{self.activation.name}, d={self.dim}]"


def apply_layer(layer: LayerMap, x) -> np.ndarray:
    """Apply a layer map to a vector (or a batch of vectors)."""
    return layer(x)


@dataclass(frozen=True, eq=False)
class ComposedMap:
    """Composition of maps, applied right to left: compose(f, g)(x) = f(g(x))."""

    maps: tuple

    def __call__(self, x):
        for m in reversed(self.maps):
            x = m(x)
        return x

    @property
    def dim(self) -> int:
        return self.maps[-1].dim


def compose(*maps) -> ComposedMap:
    if not maps:
        raise ValueError("compose needs at least one map")
    return ComposedMap(tuple(maps))


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Distribution of a square weight matrix of size dim x dim.

    tag 'uniform_box':      entries iid uniform on [-scale, scale]
    tag 'xavier':           uniform box with scale sqrt(3)/sqrt(dim)
    tag 'positive_uniform': entries iid uniform on [lo, hi], 0 <= lo < hi
    tag 'spectral_capped':  a base draw rescaled so the operator 2-norm is <= 1
    """

    tag: str
    dim: int
    scale: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    base: "WeightSpec | None" = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dim}")
        if self.tag in ("uniform_box", "xavier") and self.scale < 0.0:
            raise ValueError(f"scale must be nonnegative, got {self.scale}")
        if self.tag == "positive_uniform":
            if self.lo < 0.0 or self.hi < self.lo:
                raise ValueError(f"positive_uniform needs 0 <= lo <= hi, "
                                 f"got lo={self.lo}, hi={self.hi}")
        if self.tag == "spectral_capped" and self.base is None:
            raise ValueError("spectral_capped needs a base spec")

    @classmethod
    def uniform_box(cls, dim: int, scale: float) -> "WeightSpec":
        return cls("uniform_box", dim, scale=scale)

    @classmethod
    def xavier(cls, dim: int) -> "WeightSpec":
        return cls("xavier", dim, scale=np.sqrt(3.0) / np.sqrt(dim))

    @classmethod
    def positive_uniform(cls, dim: int, lo: float, hi: float) -> "WeightSpec":
        return cls("positive_uniform", dim, lo=lo, hi=hi)

    @classmethod
    def spectral_capped(cls, base: "WeightSpec") -> "WeightSpec":
        return cls("spectral_capped", base.dim, base=base)

    def describe(self) -> str:
        if self.tag == "uniform_box":
            return f"uniform_box(scale={self.scale:g})"
        if self.tag == "xavier":
            return f"xavier(scale={self.scale:g})"
        if self.tag == "positive_uniform":
            return f"positive_uniform({self.lo:g}, {self.hi:g})"
        return f"spectral_capped({self.base.describe()})"


def sample_weight_batch(spec: WeightSpec, count: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` matrices at once; same stream order as repeated singles."""
    n = spec.dim
    if spec.tag in ("uniform_box", "xavier"):
        return rng.uniform(-spec.scale, spec.scale, size=(count, n, n))
    if spec.tag == "positive_uniform":
        return rng.uniform(spec.lo, spec.hi, size=(count, n, n))
    # spectral_capped: exact top singular values via batched SVD
    W = sample_weight_batch(spec.base, count, rng)
    top = np.linalg.svd(W, compute_uv=False)[:, 0]
    factor = np.where(top > 1.0, 1.0 / np.maximum(top, 1e-300), 1.0)
    return W * factor[:, None, None]


def sample_weights(spec: WeightSpec, seed: int | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw one weight matrix; identical (spec, seed) gives an identical matrix."""
    if rng is None:
        rng = np.random.default_rng(seed)
    return sample_weight_batch(spec, 1, rng)[0]


@dataclass(frozen=True, eq=False)
class BiasSpec:
    """Bias vector source: a fixed vector, iid uniform entries, or zeros."""

    tag: str
    value: np.ndarray | None = None
    lo: float = 0.0
    hi: float = 0.0

    @classmethod
    def fixed(cls, value) -> "BiasSpec":
        return cls("fixed", value=np.asarray(value, dtype=float))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "BiasSpec":
        if hi < lo:
            raise ValueError(f"uniform bias needs lo <= hi, got {lo}, {hi}")
        return cls("uniform", lo=lo, hi=hi)

    @classmethod
    def zeros(cls) -> "BiasSpec":
        return cls("zeros")

    def sample_batch(self, count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
        if self.tag == "fixed":
            if self.value.size != dim:
                raise ValueError(f"fixed bias has dim {self.value.size}, expected {dim}")
            return np.tile(self.value, (count, 1))
        if self.tag == "uniform":
            return rng.uniform(self.lo, self.hi, size=(count, dim))
        return np.zeros((count, dim))

    def describe(self) -> str:
        if self.tag == "fixed":
            return f"fixed({np.array2string(self.value, precision=4)})"
        if self.tag == "uniform":
            return f"uniform({self.lo:g}, {self.hi:g})"
        return "zeros"


@dataclass
class PropertyVerdict:
    """Outcome of a sampled property check.

    A counterexample always carries a witness whose violation magnitude
    exceeds the tolerance.
    """

    passed: bool
    trials: int
    tolerance: float
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    @property
    def outcome(self) -> str:
        return "pass" if self.passed else "counterexample"

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v
        out = {"outcome": self.outcome, "trials": self.trials,
               "tolerance": self.tolerance}
        if self.witness is not None:
            out["witness"] = {k: conv(v) for k, v in self.witness.items()}
        if self.details:
            out["details"] = {k: conv(v) for k, v in self.details.items()}
        return out


def sample_positive_cone(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    lo, hi = np.log(POSITIVE_SAMPLE_RANGE[0]), np.log(POSITIVE_SAMPLE_RANGE[1])
    return np.exp(rng.uniform(lo, hi, size=(count, dim)))


def _apply_batch(T, xs: np.ndarray) -> np.ndarray:
    """Apply T to an (m, d) batch, falling back to row-by-row application."""
    try:
        out = np.asarray(T(xs), dtype=float)
    except Exception:
        out = None
    if out is None or out.shape != xs.shape:
        out = np.stack([np.asarray(T(x), dtype=float) for x in xs])
    return out


def _infer_dim(T, dim: int | None) -> int:
    if dim is not None:
        return dim
    inferred = getattr(T, "dim", None)
    if inferred is None:
        raise ValueError("cannot infer the input dimension; pass dim= explicitly")
    return int(inferred)


def check_order_preserving(T, dim: int | None = None, trials: int = 10_000,
                           seed: int = 0, tolerance: float = 1e-9) -> PropertyVerdict:
    """Sample ordered pairs x <= y in the positive cone and test Tx <= Ty.

    A fraction of coordinates is left unchanged so the boundary of the
    partial order gets probed too.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dim = _infer_dim(T, dim)
    rng = np.random.default_rng(seed)
    xs = sample_positive_cone(rng, trials, dim)
    bump = sample_positive_cone(rng, trials, dim)
    mask = rng.random((trials, dim)) < 0.7
    ys = xs + bump * mask
    viol = _apply_batch(T, xs) - _apply_batch(T, ys)
    worst_per_trial = viol.max(axis=1)
    k = int(np.argmax(worst_per_trial))
    worst = float(worst_per_trial[k])
    if worst > tolerance:
        witness = {"x": xs[k], "y": ys[k], "violation": worst}
        return PropertyVerdict(False, trials, tolerance, witness)
    return PropertyVerdict(True, trials, tolerance,
                           details={"max_violation": worst})


def check_subhomogeneous(T, dim: int | None = None, trials: int = 10_000,
                         seed: int = 0, tolerance: float = 1e-9) -> PropertyVerdict:
    """Sample x in the positive cone and lam in (0, 1); test lam T(x) <= T(lam x)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dim = _infer_dim(T, dim)
    rng = np.random.default_rng(seed)
    xs = sample_positive_cone(rng, trials, dim)
    lams = rng.uniform(0.0, 1.0, trials)
    viol = lams[:, None] * _apply_batch(T, xs) - _apply_batch(T, lams[:, None] * xs)
    worst_per_trial = viol.max(axis=1)
    k = int(np.argmax(worst_per_trial))
    worst = float(worst_per_trial[k])
    if worst > tolerance:
        witness = {"x": xs[k], "lam": float(lams[k]), "violation": worst}
        return PropertyVerdict(False, trials, tolerance, witness)
    return PropertyVerdict(True, trials, tolerance,
                           details={"max_violation": worst})


def _sample_metric_domain(metric: MetricKind, rng: np.random.Generator,
                          count: int, dim: int) -> np.ndarray:
    if metric.requires_positive:
        return sample_positive_cone(rng, count, dim)
    return rng.normal(0.0, 2.0, size=(count, dim))


def check_nonexpansive(T, metric: MetricKind, dim: int | None = None,
                       trials: int = 10_000, seed: int = 0,
                       tolerance: float = 1e-9,
                       max_redraw_rounds: int = 50) -> PropertyVerdict:
    """Test d(Tx, Ty) <= d(x, y) on sampled pairs from the metric's domain.

    Pairs whose image leaves the metric's domain (for instance a zero
    coordinate under a cone metric) are redrawn up to a retry cap; the
    number of redraws is reported in the verdict details.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dim = _infer_dim(T, dim)
    rng = np.random.default_rng(seed)
    xs = _sample_metric_domain(metric, rng, trials, dim)
    ys = _sample_metric_domain(metric, rng, trials, dim)
    redraws = 0
    for _ in range(max_redraw_rounds):
        tx = _apply_batch(T, xs)
        ty = _apply_batch(T, ys)
        ok = np.ones(trials, dtype=bool)
        ok &= np.linalg.norm(xs - ys, axis=1) >= 1e-12
        for arr in (tx, ty):
            ok &= np.all(np.isfinite(arr), axis=1)
            if metric.requires_positive:
                ok &= np.all(arr > 0.0, axis=1)
        if ok.all():
            break
        bad = ~ok
        redraws += int(bad.sum())
        xs[bad] = _sample_metric_domain(metric, rng, int(bad.sum()), dim)
        ys[bad] = _sample_metric_domain(metric, rng, int(bad.sum()), dim)
    else:
        raise RuntimeError(
            f"could not keep {trials} sampled pairs inside the domain of "
            f"{metric.name} after {max_redraw_rounds} redraw rounds "
            f"({redraws} redraws)")
    d_in = metric.pairwise(xs, ys)
    d_out = metric.pairwise(tx, ty)
    viol = d_out - d_in
    k = int(np.argmax(viol))
    worst = float(viol[k])
    details = {"max_violation": worst, "redraws": redraws}
    if worst > tolerance:
        witness = {"x": xs[k], "y": ys[k], "violation": worst,
                   "ratio": float(d_out[k] / d_in[k])}
        return PropertyVerdict(False, trials, tolerance, witness, details)
    return PropertyVerdict(True, trials, tolerance, details=details)


def default_criterion_grid() -> np.ndarray:
    return np.linspace(1e-4, 50.0, 100_001)


def check_scalar_criterion_b(b: float, grid=None) -> PropertyVerdict:
    """Test the scalar sigmoid bound t (1 - sigmoid(t + b)) < 1 on a grid.

    The supremum and its location are reported whether or not the bound
    holds; the bound characterizes which biases keep scalar sigmoid layers
    subhomogeneous.
    """
    grid = default_criterion_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0.0):
        raise ValueError("grid must be nonempty and positive")
    vals = grid * (1.0 - expit(grid + b))
    k = int(np.argmax(vals))
    top = float(vals[k])
    details = {"max_value": top, "argmax": float(grid[k]), "b": float(b)}
    if top >= 1.0:
        witness = {"x": float(grid[k]), "value": top, "violation": top - 1.0}
        return PropertyVerdict(False, int(grid.size), 0.0, witness, details)
    return PropertyVerdict(True, int(grid.size), 0.0, details=details)

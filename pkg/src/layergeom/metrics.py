"""Distance functions on the positive cone, on normed spaces, and on spaces
of maps, plus directional (horofunction-style) evaluators.

Every supremum over a continuum domain is evaluated on an explicit finite
sample or grid, so the returned values are lower bounds of the true suprema.
Sample construction is seeded and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, ClassVar, Iterator

import numpy as np

__all__ = [
    "MetricKind",
    "MetricFunctional",
    "PairSample",
    "thompson_distance",
    "hilbert_distance",
    "norm_distance",
    "empirical_distance_metric_D",
    "distortion_distance_1d",
    "jacobian_distortion_distance",
    "eval_metric_functional",
    "empirical_horofunction",
    "MIN_PAIR_SEPARATION",
]

# Pairs closer than this are rejected from samples; ratios of distances
# degenerate near the diagonal.
MIN_PAIR_SEPARATION = 1e-9


def _as_vector(x, name: str = "point") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d vector, got shape {x.shape}")
    return x


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")


def _check_positive(x: np.ndarray, name: str = "point") -> None:
    if not np.all(x > 0.0):
        raise ValueError(f"{name} must have strictly positive coordinates")


def thompson_distance(x, y) -> float:
    """Largest log coordinate ratio between x and y, in either direction.

    Defined on the open positive cone.  Symmetric, zero iff x == y, and
    non-expansive under order-preserving subhomogeneous maps.
    """
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    _check_same_dim(x, y)
    _check_positive(x, "x")
    _check_positive(y, "y")
    # Both directions are divided explicitly so the value is bit-exactly
    # symmetric in (x, y).
    return float(np.log(max((x / y).max(), (y / x).max())))


def hilbert_distance(x, y) -> float:
    """Projective cone metric log(max_i x_i/y_i * max_i y_i/x_i).

    Vanishes on rays.  Computed as log(max(r)/min(r)) on a single ratio
    array r = x/y, so exactly proportional float inputs return exactly 0.0.
    """
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    _check_same_dim(x, y)
    _check_positive(x, "x")
    _check_positive(y, "y")
    r = x / y
    return float(np.log(r.max() / r.min()))


def norm_distance(x, y, p: float = 2.0) -> float:
    """Norm of x - y for the p-norm (p >= 1, np.inf for the max norm)."""
    if not (p >= 1.0):
        raise ValueError(f"p-norm requires p >= 1, got {p}")
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    _check_same_dim(x, y)
    return float(np.linalg.norm(x - y, ord=p))


_POINT_TAGS = ("thompson", "hilbert", "norm")
_FUNCTION_TAGS = ("distortion_1d", "jacobian_distortion", "distance_function_D")


@dataclass(frozen=True)
class MetricKind:
    """Tagged description of which distance function is in play.

    The point-metric tags (thompson, hilbert, norm) evaluate directly via
    ``distance``/``pairwise``.  The function-space tags exist for reporting
    and dispatch; their evaluation goes through the dedicated operations
    (``distortion_distance_1d`` and friends).
    """

    tag: str
    p: float = 2.0

    def __post_init__(self):
        if self.tag not in _POINT_TAGS + _FUNCTION_TAGS:
            raise ValueError(f"unknown metric tag {self.tag!r}")
        if self.tag == "norm" and not (self.p >= 1.0):
            raise ValueError(f"p-norm requires p >= 1, got {self.p}")

    @classmethod
    def thompson(cls) -> "MetricKind":
        return cls("thompson")

    @classmethod
    def hilbert(cls) -> "MetricKind":
        return cls("hilbert")

    @classmethod
    def euclidean(cls) -> "MetricKind":
        return cls("norm", 2.0)

    @classmethod
    def pnorm(cls, p: float) -> "MetricKind":
        return cls("norm", float(p))

    @classmethod
    def max_norm(cls) -> "MetricKind":
        return cls("norm", np.inf)

    @classmethod
    def from_name(cls, name: str, p: float | None = None) -> "MetricKind":
        """Resolve a config-style name ('thompson', 'euclidean', 'max', 'pnorm')."""
        name = name.strip().lower()
        if name == "thompson":
            return cls.thompson()
        if name == "hilbert":
            return cls.hilbert()
        if name in ("euclidean", "l2"):
            return cls.euclidean()
        if name in ("max", "linf", "max_norm"):
            return cls.max_norm()
        if name == "pnorm":
            if p is None:
                raise ValueError("pnorm metric needs an explicit p")
            return cls.pnorm(p)
        raise ValueError(f"unknown metric name {name!r}")

    @property
    def is_point_metric(self) -> bool:
        return self.tag in _POINT_TAGS

    @property
    def requires_positive(self) -> bool:
        return self.tag in ("thompson", "hilbert")

    @property
    def name(self) -> str:
        if self.tag == "norm":
            if self.p == 2.0:
                return "euclidean"
            if np.isinf(self.p):
                return "max_norm"
            return f"pnorm({self.p:g})"
        return self.tag

    def distance(self, x, y) -> float:
        if self.tag == "thompson":
            return thompson_distance(x, y)
        if self.tag == "hilbert":
            return hilbert_distance(x, y)
        if self.tag == "norm":
            return norm_distance(x, y, self.p)
        raise TypeError(f"{self.tag} is a function-space metric; "
                        "use the dedicated distance operation")

    def pairwise(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Row-wise distances between two (m, d) arrays."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 2:
            raise ValueError(f"expected matching (m, d) arrays, got {xs.shape} and {ys.shape}")
        if self.requires_positive:
            if not (np.all(xs > 0.0) and np.all(ys > 0.0)):
                raise ValueError("points must be strictly positive for cone metrics")
            r = xs / ys
            if self.tag == "thompson":
                return np.log(np.maximum(r.max(axis=1), (ys / xs).max(axis=1)))
            return np.log(r.max(axis=1) / r.min(axis=1))
        if self.tag == "norm":
            return np.linalg.norm(xs - ys, ord=self.p, axis=1)
        raise TypeError(f"{self.tag} is a function-space metric")

    def contains(self, x) -> bool:
        """Whether x lies in the metric's domain."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            return False
        if self.requires_positive:
            return bool(np.all(x > 0.0))
        return True


@dataclass(frozen=True, eq=False)
class PairSample:
    """Finite surrogate for suprema over pairs x != y inside a box.

    Pairs with separation below MIN_PAIR_SEPARATION are rejected at
    construction time.
    """

    xs: np.ndarray
    ys: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ValueError("PairSample needs a nonempty (m, d) array of first points")
        if xs.shape != ys.shape:
            raise ValueError(f"pair arrays disagree: {xs.shape} vs {ys.shape}")
        sep = np.linalg.norm(xs - ys, axis=1)
        if np.any(sep < MIN_PAIR_SEPARATION):
            raise ValueError(
                f"{int((sep < MIN_PAIR_SEPARATION).sum())} pair(s) closer than "
                f"{MIN_PAIR_SEPARATION}; degenerate pairs are not allowed")

    def __len__(self) -> int:
        return self.xs.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return zip(self.xs, self.ys)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @classmethod
    def uniform(cls, lower, upper, count: int, seed: int = 0,
                max_rounds: int = 100) -> "PairSample":
        """Draw ``count`` uniform pairs from the box, redrawing degenerate ones."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or np.any(upper <= lower):
            raise ValueError("box bounds must satisfy lower < upper componentwise")
        rng = np.random.default_rng(seed)
        d = lower.size
        xs = rng.uniform(lower, upper, size=(count, d))
        ys = rng.uniform(lower, upper, size=(count, d))
        for _ in range(max_rounds):
            bad = np.linalg.norm(xs - ys, axis=1) < MIN_PAIR_SEPARATION
            if not bad.any():
                break
            ys[bad] = rng.uniform(lower, upper, size=(int(bad.sum()), d))
        return cls(xs, ys, lower, upper)


DistanceFn = Callable[[np.ndarray, np.ndarray], float]


def empirical_distance_metric_D(d1: DistanceFn, d2: DistanceFn,
                                sample: PairSample) -> float:
    """Sampled version of the metric between two distance functions.

    Returns log(max{max_pairs d2/d1, max_pairs d1/d2}).  Because the true
    quantity takes a supremum over all pairs, the sampled value is a lower
    bound of it.
    """
    a = np.array([d1(x, y) for x, y in sample], dtype=float)
    b = np.array([d2(x, y) for x, y in sample], dtype=float)
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise ValueError("distance evaluators must be strictly positive on sampled pairs")
    r = b / a
    return float(np.log(max(r.max(), (1.0 / r).max())))


def distortion_distance_1d(fprime: Callable, gprime: Callable, grid) -> float:
    """Distortion distance between two interval maps from their derivatives.

    max over grid pairs (s, t) of |log|g'(s)/f'(s) * f'(t)/g'(t)||, computed
    as the spread of r = log|g'/f'| over the grid.  Zero whenever g' is a
    constant multiple of f'.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    fp = np.asarray(fprime(grid), dtype=float)
    gp = np.asarray(gprime(grid), dtype=float)
    if np.any(fp == 0.0) or np.any(gp == 0.0):
        raise ValueError("zero derivative on the grid")
    r = np.log(np.abs(gp)) - np.log(np.abs(fp))
    return float(r.max() - r.min())


def jacobian_distortion_distance(jac_f: Callable, jac_g: Callable, points) -> float:
    """Jacobian-determinant distortion distance sampled at the given points.

    max over point pairs of |log(|Jf(x)|/|Jg(x)| * |Jg(y)|/|Jf(y)|)|, again
    the spread of the per-point log-determinant ratio.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("need at least one sample point")
    r = np.empty(points.shape[0])
    for i, x in enumerate(points):
        sf, lf = np.linalg.slogdet(np.asarray(jac_f(x), dtype=float))
        sg, lg = np.linalg.slogdet(np.asarray(jac_g(x), dtype=float))
        if sf == 0.0 or sg == 0.0:
            raise ValueError(f"singular Jacobian at sample point {x}")
        r[i] = lf - lg
    return float(r.max() - r.min())


@dataclass(frozen=True, eq=False)
class MetricFunctional:
    """Closed-form directional functional of a metric.

    kind 'smooth_norm': h(x) = -x . grad||.||_p at the unit vector w, for a
    p-norm with 1 < p < inf (the max norm is excluded, it is not twice
    differentiable on the sphere).

    kind 'thompson_horo': h(x) = max{sup_i log(x_i u_i), sup_i log(v_i/x_i)}
    with the convention that indices where the weight is zero are excluded
    from each sup.  Requires u v = 0 componentwise and sup max{u, v} = 1.
    """

    kind: str
    w: np.ndarray | None = None
    p: float = 2.0
    u: np.ndarray | None = None
    v: np.ndarray | None = None

    _TOL: ClassVar[float] = 1e-12

    @classmethod
    def smooth_norm_directional(cls, w, p: float = 2.0) -> "MetricFunctional":
        w = _as_vector(w, "w")
        p = float(p)
        if not (1.0 < p < np.inf):
            raise ValueError("smooth norm functionals need a p-norm with 1 < p < inf")
        nw = np.linalg.norm(w, ord=p)
        if abs(nw - 1.0) > cls._TOL:
            raise ValueError(f"w must be a unit vector in the chosen norm, got ||w|| = {nw}")
        return cls(kind="smooth_norm", w=w, p=p)

    @classmethod
    def thompson_horo(cls, u, v) -> "MetricFunctional":
        u = _as_vector(u, "u")
        v = _as_vector(v, "v")
        _check_same_dim(u, v)
        if np.any(u < 0.0) or np.any(v < 0.0):
            raise ValueError("u and v must be componentwise nonnegative")
        if np.any(u * v != 0.0):
            raise ValueError("u and v must have disjoint supports (u v = 0 componentwise)")
        top = max(u.max(), v.max())
        if abs(top - 1.0) > cls._TOL:
            raise ValueError(f"sup of max(u, v) must equal 1, got {top}")
        return cls(kind="thompson_horo", u=u, v=v)


def eval_metric_functional(h: MetricFunctional, x) -> float:
    """Evaluate a closed-form metric functional at x."""
    x = _as_vector(x, "x")
    if h.kind == "smooth_norm":
        w = h.w
        _check_same_dim(x, w)
        # gradient of the p-norm at a unit vector: sign(w_i) |w_i|^(p-1)
        grad = np.sign(w) * np.abs(w) ** (h.p - 1.0)
        return float(-np.dot(x, grad))
    if h.kind == "thompson_horo":
        _check_same_dim(x, h.u)
        _check_positive(x, "x")
        best = -np.inf
        if np.any(h.u > 0.0):
            m = h.u > 0.0
            best = max(best, float(np.log(x[m] * h.u[m]).max()))
        if np.any(h.v > 0.0):
            m = h.v > 0.0
            best = max(best, float(np.log(h.v[m] / x[m]).max()))
        return best
    raise ValueError(f"unknown functional kind {h.kind!r}")


def empirical_horofunction(metric: MetricKind, basepoint, y_sequence, x) -> np.ndarray:
    """Normalized distance functions h_y(x) = d(x, y) - d(basepoint, y).

    Evaluated along the given sequence of points y.  Each value is bounded
    by d(basepoint, x) in absolute value.
    """
    x = _as_vector(x, "x")
    basepoint = _as_vector(basepoint, "basepoint")
    return np.array([metric.distance(x, y) - metric.distance(basepoint, y)
                     for y in y_sequence])

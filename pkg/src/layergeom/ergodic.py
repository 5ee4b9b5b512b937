"""Composition engines for stationary layer sequences and estimators for the
asymptotic quantities of their orbits: subadditive growth rates, the top
coordinate exponent, drift vectors, pair-separation rates, and Jacobian
distortion rates.

All estimators are deterministic functions of (generator, seed, n).  Rates
are extracted by averaging the last tenth of the per-step series, since the
underlying limits converge slowly and the early transient must be discarded.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .layers import (Activation, BiasSpec, LayerMap, WeightSpec,
                     sample_weight_batch)
from .metrics import MetricKind, PairSample

__all__ = [
    "SequenceGenerator",
    "Trajectory",
    "ExponentEstimate",
    "DriftEstimate",
    "run_append",
    "run_insert",
    "subadditive_rate",
    "top_exponent",
    "drift",
    "lipschitz_expansion_rate",
    "exact_jacobian",
    "jacobian_distortion_rate",
    "log_sup_trajectory",
    "OVERFLOW_LIMIT",
    "TAIL_FRACTION",
]

# Coordinates past this magnitude terminate a trajectory early; doubles
# overflow shortly after for exponentially growing systems.
OVERFLOW_LIMIT = 1e300

# Fraction of the series used for rate extraction.
TAIL_FRACTION = 0.1


@dataclass(frozen=True, eq=False)
class SequenceGenerator:
    """Reproducible source of a layer-map sequence T_1, T_2, ...

    mode 'iid':    fresh weights and biases per layer from the given specs
    mode 'cycle':  a fixed list of maps repeated cyclically
    mode 'markov': two maps with a seeded switch probability p per step
                   (p = 0 degenerates to a constant sequence of the first)
    """

    mode: str
    seed: int = 0
    form: str = "affine"
    activation: Activation | None = None
    weight_spec: WeightSpec | None = None
    bias_spec: BiasSpec | None = None
    maps: tuple = ()
    p: float = 0.0

    @classmethod
    def iid(cls, form: str, activation: Activation, weight_spec: WeightSpec,
            bias_spec: BiasSpec, seed: int = 0) -> "SequenceGenerator":
        return cls("iid", seed=seed, form=form, activation=activation,
                   weight_spec=weight_spec, bias_spec=bias_spec)

    @classmethod
    def cycle(cls, maps) -> "SequenceGenerator":
        maps = tuple(maps)
        if not maps:
            raise ValueError("cycle needs at least one map")
        return cls("cycle", maps=maps)

    @classmethod
    def constant(cls, layer: LayerMap) -> "SequenceGenerator":
        return cls.cycle([layer])

    @classmethod
    def markov(cls, map_a: LayerMap, map_b: LayerMap, p: float,
               seed: int = 0) -> "SequenceGenerator":
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"switch probability must lie in [0, 1], got {p}")
        if map_a.dim != map_b.dim:
            raise ValueError("both maps must share a dimension")
        return cls("markov", seed=seed, maps=(map_a, map_b), p=p)

    @property
    def dim(self) -> int:
        if self.mode == "iid":
            return self.weight_spec.dim
        return self.maps[0].dim

    def realize(self, n: int) -> list[LayerMap]:
        """Materialize the first n maps of the sequence."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.mode == "cycle":
            return [self.maps[k % len(self.maps)] for k in range(n)]
        rng = np.random.default_rng(self.seed)
        if self.mode == "markov":
            flips = rng.uniform(size=n - 1) < self.p if n > 1 else np.empty(0, bool)
            states = np.concatenate([[0], np.cumsum(flips) % 2]).astype(int)
            return [self.maps[s] for s in states]
        ws = sample_weight_batch(self.weight_spec, n, rng)
        bs = self.bias_spec.sample_batch(n, self.dim, rng)
        return [LayerMap(self.form, w, b, self.activation)
                for w, b in zip(ws, bs)]

    def describe(self) -> str:
        if self.mode == "iid":
            return (f"iid[{self.form}, {self.activation.name}, "
                    f"W~{self.weight_spec.describe()}, b~{self.bias_spec.describe()}, "
                    f"seed={self.seed}]")
        if self.mode == "markov":
            return (f"markov[p={self.p:g}, {self.maps[0].describe()} | "
                    f"{self.maps[1].describe()}, seed={self.seed}]")
        return "cycle[" + ", ".join(m.describe() for m in self.maps) + "]"

    def _drift_premises_ok(self) -> bool:
        # Drift expects sandwich layers with operator norm at most 1.
        if self.mode == "iid":
            return self.form == "sandwich" and self.weight_spec.tag == "spectral_capped"
        return all(
            m.form == "sandwich" and np.linalg.norm(m.weights, 2) <= 1.0 + 1e-9
            for m in self.maps)


@dataclass(eq=False)
class Trajectory:
    """An orbit x_0 .. x_k together with how it was produced.

    order 'append' satisfies x_k = T_k(x_{k-1}); order 'insert' satisfies
    x_k = T_1(T_2(... T_k(x_0))).  A trajectory whose coordinates pass the
    overflow limit is truncated and flagged.
    """

    points: np.ndarray
    order: str
    requested_steps: int
    overflowed: bool = False
    source: str = ""
    generator: SequenceGenerator | None = None

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _check_x0(gen: SequenceGenerator, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise ValueError(f"x0 must be a vector, got shape {x0.shape}")
    if x0.size != gen.dim:
        raise ValueError(f"x0 has dim {x0.size}, generator expects {gen.dim}")
    return x0


def _blown_up(x: np.ndarray) -> bool:
    return not np.all(np.isfinite(x)) or np.abs(x).max() > OVERFLOW_LIMIT


def run_append(gen: SequenceGenerator, x0, n: int) -> Trajectory:
    """Evolve x_k = T_k(x_{k-1}); new maps act on the latest state.

    Costs O(n) layer applications.
    """
    x0 = _check_x0(gen, x0)
    maps = gen.realize(n)
    points = [x0]
    overflowed = False
    x = x0
    for T in maps:
        x = np.asarray(T(x), dtype=float)
        if _blown_up(x):
            overflowed = True
            break
        points.append(x)
    return Trajectory(np.stack(points), "append", n, overflowed,
                      gen.describe(), gen)


def run_insert(gen: SequenceGenerator, x0, n: int) -> Trajectory:
    """Compose x_k = T_1(T_2(... T_k(x_0))); new maps act first.

    Each prefix is recomputed from scratch, so the cost is O(n^2) layer
    applications.  Inserting a new innermost map invalidates every suffix,
    and at desk scale the simple recomputation is affordable.
    """
    x0 = _check_x0(gen, x0)
    maps = gen.realize(n)
    points = [x0]
    overflowed = False
    for k in range(1, n + 1):
        x = x0
        for j in range(k - 1, -1, -1):
            x = np.asarray(maps[j](x), dtype=float)
        if _blown_up(x):
            overflowed = True
            break
        points.append(x)
    return Trajectory(np.stack(points), "insert", n, overflowed,
                      gen.describe(), gen)


@dataclass(eq=False)
class ExponentEstimate:
    """A per-layer log rate with its per-n series.

    lam is the average of the last tenth of the series.  leading_index is
    the coordinate attaining the final sup when that argmax is stable over
    the tail window (ties broken by lowest index and flagged).
    """

    lam: float
    ns: np.ndarray
    values: np.ndarray
    half_width: float
    leading_index: int | None = None
    tie: bool = False
    argmax_pair: tuple | None = None
    overflowed: bool = False


@dataclass(eq=False)
class DriftEstimate:
    """Final x_n/n together with the whole per-n series."""

    v: np.ndarray
    v_norm: float
    ns: np.ndarray
    series: np.ndarray
    overflowed: bool = False


def _tail_slice(length: int) -> slice:
    k = max(1, math.ceil(TAIL_FRACTION * length))
    return slice(length - k, length)

def _tail_stats(values: np.ndarray) -> tuple[float, float]:
    tail = values[_tail_slice(len(values))]
    if len(tail) < 2:
        return float(tail[-1]), 0.0
    return float(tail.mean()), float(1.96 * tail.std(ddof=1) / np.sqrt(len(tail)))


def subadditive_rate(traj: Trajectory, metric: MetricKind) -> ExponentEstimate:
    """Rate of d(x_0, x_n)/n along the trajectory."""
    if traj.n_steps < 1:
        raise ValueError("trajectory has no steps")
    pts = traj.points
    ns = np.arange(1, traj.n_steps + 1)
    x0 = np.broadcast_to(pts[0], pts[1:].shape)
    dists = metric.pairwise(x0, pts[1:])
    values = dists / ns
    lam, hw = _tail_stats(values)
    return ExponentEstimate(lam, ns, values, hw, overflowed=traj.overflowed)


def top_exponent(traj: Trajectory) -> ExponentEstimate:
    """Rate of log sup_i |x_n(i)| / n, with the leading coordinate.

    The leading coordinate is reported only when the same index attains the
    sup across the whole tail window; exact ties go to the lowest index and
    set the tie flag.
    """
    if traj.n_steps < 1:
        raise ValueError("trajectory has no steps")
    pts = traj.points[1:]
    ns = np.arange(1, traj.n_steps + 1)
    amplitudes = np.abs(pts)
    sups = amplitudes.max(axis=1)
    if sups[-1] == 0.0:
        raise ValueError("zero final state: the top exponent is undefined")
    if np.any(sups == 0.0):
        k = int(np.argmax(sups == 0.0)) + 1
        raise ValueError(f"zero state at step {k}: the log-sup series is undefined")
    values = np.log(sups) / ns
    lam, hw = _tail_stats(values)
    argmaxes = amplitudes.argmax(axis=1)
    tail = argmaxes[_tail_slice(len(argmaxes))]
    leading = int(tail[-1]) if np.all(tail == tail[-1]) else None
    tie = bool((amplitudes[-1] == sups[-1]).sum() > 1)
    return ExponentEstimate(lam, ns, values, hw, leading_index=leading,
                            tie=tie, overflowed=traj.overflowed)


def drift(traj: Trajectory) -> DriftEstimate:
    """The per-step displacement x_n/n and its limit candidate.

    Meaningful for non-expansive sandwich-style layers with operator norm
    at most 1; other sources are accepted but produce a warning.  The limit
    lives in the insert order, and append-order trajectories match it in
    distribution for iid layers.
    """
    if traj.n_steps < 1:
        raise ValueError("trajectory has no steps")
    gen = traj.generator
    if gen is None or not gen._drift_premises_ok():
        warnings.warn("drift expects sandwich layers with operator norm <= 1; "
                      "the limit may not exist for this source", stacklevel=2)
    ns = np.arange(1, traj.n_steps + 1)
    series = traj.points[1:] / ns[:, None]
    v = series[-1]
    return DriftEstimate(v, float(np.linalg.norm(v)), ns, series,
                         overflowed=traj.overflowed)


def lipschitz_expansion_rate(gen: SequenceGenerator, pairs: PairSample,
                             n: int) -> ExponentEstimate:
    """Growth rate of the worst pair-separation ratio under one realized sequence.

    Every pair evolves under the same maps in append order; the estimate is
    the tail average of log(max_j ||x_k^j - y_k^j|| / ||x_0^j - y_0^j||) / k.
    The initial points of the final maximizing pair are returned as the
    empirical location of maximal separation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    maps = gen.realize(n)
    X = pairs.xs.copy()
    Y = pairs.ys.copy()
    d0 = np.linalg.norm(X - Y, axis=1)
    lo = pairs.lower - 1e-9
    hi = pairs.upper + 1e-9
    values = np.empty(n)
    ratios = None
    for k in range(1, n + 1):
        T = maps[k - 1]
        X = np.asarray(T(X), dtype=float)
        Y = np.asarray(T(Y), dtype=float)
        if np.any(X < lo) or np.any(X > hi) or np.any(Y < lo) or np.any(Y > hi):
            raise ValueError(f"maps do not send the sample box into itself "
                             f"(left the box at step {k})")
        dk = np.linalg.norm(X - Y, axis=1)
        if np.any(dk < 1e-300):
            j = int(np.argmin(dk))
            raise ValueError(f"pair {j} collapsed below 1e-300 at step {k}")
        ratios = dk / d0
        values[k - 1] = np.log(ratios.max()) / k
    lam, hw = _tail_stats(values)
    j = int(np.argmax(ratios))
    return ExponentEstimate(lam, np.arange(1, n + 1), values, hw,
                            argmax_pair=(pairs.xs[j].copy(), pairs.ys[j].copy()))


def exact_jacobian(layer: LayerMap, x) -> np.ndarray:
    """Closed-form Jacobian of a layer map at x.

    affine: diag(act'(z)) W, sandwich: W^T diag(act'(z)) W,
    residual: I + diag(act'(z)) W, scaled_residual: I + diag(act'(z)) W / scale,
    with z = W x + b.  The relu derivative at the kink is taken as 0.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != layer.dim:
        raise ValueError(f"x must be a vector of dim {layer.dim}")
    z = layer.preactivation(x)
    core = layer.activation.derivative(z)[:, None] * layer.weights
    if layer.form == "affine":
        return core
    if layer.form == "sandwich":
        return layer.weights.T @ core
    if layer.form == "residual":
        return np.eye(layer.dim) + core
    return np.eye(layer.dim) + core / layer.scale


def jacobian_distortion_rate(gen: SequenceGenerator, n: int, points,
                             decision_logdet: Callable | None = None
                             ) -> ExponentEstimate:
    """Growth rate of the Jacobian-determinant spread across sample orbits.

    Log-determinants of the composition are accumulated along each orbit by
    the chain rule; the series is (max_j - min_j of the accumulated values)
    divided by the depth.  A decision map contributes its own log |det J| at
    the orbit head when ``decision_logdet`` is given (identity otherwise).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 2:
        raise ValueError("need at least two sample points to measure a spread")
    maps = gen.realize(n)
    m = pts.shape[0]
    L = np.zeros(m)
    X = pts.copy()
    values = np.empty(n)
    for k in range(1, n + 1):
        T = maps[k - 1]
        for i in range(m):
            sign, logdet = np.linalg.slogdet(exact_jacobian(T, X[i]))
            if sign == 0.0:
                raise ValueError(f"singular layer Jacobian at step {k}, point {X[i]}")
            L[i] += logdet
        X = np.asarray(T(X), dtype=float)
        total = L if decision_logdet is None else L + np.array(
            [decision_logdet(x) for x in X])
        values[k - 1] = (total.max() - total.min()) / k
    lam, hw = _tail_stats(values)
    return ExponentEstimate(lam, np.arange(1, n + 1), values, hw)


def log_sup_trajectory(traj: Trajectory) -> Trajectory:
    """The scalar orbit log sup_i |x_n(i)|, as a 1-d trajectory.

    Euclidean distances on this orbit recover the top exponent as a
    subadditive rate.
    """
    sups = np.abs(traj.points).max(axis=1)
    if np.any(sups == 0.0):
        raise ValueError("log-sup orbit undefined: a state is exactly zero")
    return Trajectory(np.log(sups)[:, None], traj.order, traj.requested_steps,
                      traj.overflowed, f"log-sup of {traj.source}")

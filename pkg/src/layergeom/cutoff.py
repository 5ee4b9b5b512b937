"""Monte-Carlo harness for depth-indexed Markov chains of the form
X_{t+1} = act(W_t X_t) with fresh random weights at every step.

States are quantized to a grid of cell width ``precision`` and histogrammed;
the distance to equilibrium is the un-halved total variation between the
empirical measure and the point mass at the origin bin, so raw values live
in [0, 2].  The normalized variant (raw / 2) is emitted alongside, and the
mixing threshold is applied on the normalized scale.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .layers import Activation, WeightSpec, sample_weight_batch

__all__ = [
    "ChainConfig",
    "QuantizedHistogram",
    "TVCurve",
    "MixingReport",
    "quantize_states",
    "simulate_ensemble",
    "tv_to_point_mass",
    "compute_tv_curve",
    "mixing_time",
    "cutoff_scan",
    "CHUNK_SIZE",
    "TV_CONVENTION",
]

# Ensembles are simulated in fixed-size chunks with seeds spawned from the
# master seed, so results do not depend on the worker count or schedule.
CHUNK_SIZE = 25_000

TV_CONVENTION = ("raw TV is the un-halved L1 sum in [0, 2]; thresholds are "
                 "applied on the normalized scale raw/2")


@dataclass(frozen=True, eq=False)
class ChainConfig:
    """Parameters of one quantized-chain ensemble.

    x0 defaults to the all-ones vector (unit max norm).  The curve measures
    the single fixed start, not a max over starting points.
    """

    width: int
    activation: Activation
    weight_spec: WeightSpec
    x0: np.ndarray | None = None
    precision: float = 0.001
    ensemble: int = 100_000
    max_depth: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"width must be >= 1, got {self.width}")
        if self.precision <= 0.0:
            raise ValueError(f"precision must be positive, got {self.precision}")
        if self.ensemble < 1:
            raise ValueError(f"ensemble size must be >= 1, got {self.ensemble}")
        if self.max_depth < 1:
            raise ValueError(f"max depth must be >= 1, got {self.max_depth}")
        x0 = np.ones(self.width) if self.x0 is None else np.asarray(self.x0, float)
        object.__setattr__(self, "x0", x0)
        if x0.shape != (self.width,):
            raise ValueError(f"x0 shape {x0.shape} does not match width {self.width}")
        if not np.any(x0 != 0.0):
            raise ValueError("x0 must have a nonzero coordinate")
        if self.weight_spec.dim != self.width:
            raise ValueError(f"weight spec dim {self.weight_spec.dim} "
                             f"does not match width {self.width}")

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "activation": self.activation.name,
            "weight_spec": self.weight_spec.describe(),
            "x0": self.x0.tolist(),
            "precision": self.precision,
            "ensemble": self.ensemble,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }


def quantize_states(states: np.ndarray, precision: float) -> np.ndarray:
    """Integer bin coordinates under round-half-away-from-zero cells.

    The origin bin (all-zero index) is the cell containing 0.
    """
    scaled = np.abs(states) / precision + 0.5
    if np.any(scaled >= 2 ** 62):
        raise ValueError("state magnitude exceeds the quantization grid")
    return (np.sign(states) * np.floor(scaled)).astype(np.int64)


@dataclass(eq=False)
class QuantizedHistogram:
    """Sparse histogram over integer bin coordinates."""

    bins: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_occupied(self) -> int:
        return int(self.bins.shape[0])

    def origin_count(self) -> int:
        at0 = np.all(self.bins == 0, axis=1)
        return int(self.counts[at0].sum())

    def origin_mass(self) -> float:
        return self.origin_count() / self.total

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in b): int(c2)
                for b, c2 in zip(self.bins, self.counts)}

    @classmethod
    def from_states(cls, states: np.ndarray, precision: float) -> "QuantizedHistogram":
        q = quantize_states(states, precision)
        bins, counts = np.unique(q, axis=0, return_counts=True)
        return cls(bins, counts)

    def merge(self, other: "QuantizedHistogram") -> "QuantizedHistogram":
        """Combine two histograms; associative and commutative."""
        stacked = np.concatenate([self.bins, other.bins])
        weights = np.concatenate([self.counts, other.counts])
        bins, inverse = np.unique(stacked, axis=0, return_inverse=True)
        counts = np.zeros(bins.shape[0], dtype=np.int64)
        np.add.at(counts, inverse, weights)
        return QuantizedHistogram(bins, counts)


def _simulate_chunk(cfg: ChainConfig, count: int,
                    seed: np.random.SeedSequence) -> list[QuantizedHistogram]:
    rng = np.random.default_rng(seed)
    x = np.tile(cfg.x0, (count, 1))
    hists = [QuantizedHistogram.from_states(x, cfg.precision)]
    for _ in range(cfg.max_depth):
        w = sample_weight_batch(cfg.weight_spec, count, rng)
        x = cfg.activation(np.einsum("mij,mj->mi", w, x))
        hists.append(QuantizedHistogram.from_states(x, cfg.precision))
    return hists


def simulate_ensemble(cfg: ChainConfig, n_workers: int = 1
                      ) -> list[QuantizedHistogram]:
    """Per-depth histograms of ``cfg.ensemble`` independent chains.

    Each chain draws a fresh weight matrix at every step.  Chunk seeds are
    spawned deterministically from the master seed and merged in a fixed
    order, so the result is bit-identical for any worker count.
    """
    sizes = [CHUNK_SIZE] * (cfg.ensemble // CHUNK_SIZE)
    if cfg.ensemble % CHUNK_SIZE:
        sizes.append(cfg.ensemble % CHUNK_SIZE)
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    if n_workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(lambda a: _simulate_chunk(cfg, *a),
                                  zip(sizes, seeds)))
    else:
        parts = [_simulate_chunk(cfg, c, s) for c, s in zip(sizes, seeds)]
    merged = parts[0]
    for part in parts[1:]:
        merged = [a.merge(b) for a, b in zip(merged, part)]
    return merged


def tv_to_point_mass(hist: QuantizedHistogram) -> float:
    """Un-halved total variation to the point mass at the origin bin.

    Equals 2 (1 - origin mass) exactly, so the range is [0, 2].
    """
    if hist.total == 0:
        raise ValueError("empty histogram")
    return 2.0 * (1.0 - hist.origin_mass())


@dataclass(eq=False)
class TVCurve:
    """Per-depth distance to the origin point mass for one configuration."""

    config: ChainConfig
    tv_raw: np.ndarray
    origin_mass: np.ndarray
    occupied_bins: np.ndarray

    @property
    def tv_normalized(self) -> np.ndarray:
        return self.tv_raw / 2.0

    @property
    def depths(self) -> np.ndarray:
        return np.arange(self.tv_raw.size)


def compute_tv_curve(cfg: ChainConfig, n_workers: int = 1) -> TVCurve:
    hists = simulate_ensemble(cfg, n_workers=n_workers)
    tv = np.array([tv_to_point_mass(h) for h in hists])
    mass = np.array([h.origin_mass() for h in hists])
    occ = np.array([h.n_occupied for h in hists], dtype=int)
    return TVCurve(cfg, tv, mass, occ)


@dataclass(eq=False)
class MixingReport:
    """Mixing time and empirical transition window of one curve.

    t_mix is the smallest depth whose normalized TV is at most epsilon,
    None when the threshold is never reached within the max depth.  The
    window spans from the last depth at raw TV >= 0.9 max to the first
    depth at raw TV <= 0.1 max.
    """

    t_mix: int | None
    epsilon: float
    threshold_raw: float
    window: tuple[int | None, int | None]
    d_max: float
    final_tv: float
    convention: str
    curve: TVCurve

    def to_dict(self) -> dict:
        return {
            "t_mix": self.t_mix,
            "epsilon": self.epsilon,
            "threshold_raw": self.threshold_raw,
            "window": list(self.window),
            "d_max": self.d_max,
            "final_tv": self.final_tv,
            "convention": self.convention,
            "chain_config": self.curve.config.to_dict(),
        }


def mixing_time(curve: TVCurve, epsilon: float = 0.25) -> MixingReport:
    """First depth at which the normalized TV drops to epsilon.

    The threshold is epsilon * 2 on the raw scale; the choice is recorded
    in the report.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    tv = curve.tv_raw
    threshold = 2.0 * epsilon
    below = np.nonzero(tv <= threshold)[0]
    t_mix = int(below[0]) if below.size else None
    d_max = float(tv.max())
    high = np.nonzero(tv >= 0.9 * d_max)[0]
    low = np.nonzero(tv <= 0.1 * d_max)[0]
    window = (int(high[-1]) if high.size else None,
              int(low[0]) if low.size else None)
    return MixingReport(t_mix, epsilon, threshold, window, d_max,
                        float(tv[-1]), TV_CONVENTION, curve)


def heuristic_weight_spec(width: int) -> WeightSpec:
    """Entries uniform on [-1/sqrt(N), 1/sqrt(N)]."""
    return WeightSpec.uniform_box(width, 1.0 / np.sqrt(width))


def scaled_weight_spec(width: int, scaling: str) -> WeightSpec:
    if scaling == "heuristic":
        return heuristic_weight_spec(width)
    if scaling == "xavier":
        return WeightSpec.xavier(width)
    raise ValueError(f"unknown weight scaling {scaling!r} "
                     "(expected 'heuristic' or 'xavier')")


def cutoff_scan(widths, base: ChainConfig, scaling: str = "heuristic",
                n_workers: int = 1, epsilon: float = 0.25) -> list[MixingReport]:
    """One curve and mixing report per width.

    The weight scale is recomputed per width from the chosen scaling rule,
    and x0 is reset to the all-ones vector of matching width.
    """
    widths = list(widths)
    if not widths:
        raise ValueError("widths must be nonempty")
    reports = []
    for w in widths:
        cfg = dataclasses.replace(base, width=int(w),
                                  weight_spec=scaled_weight_spec(int(w), scaling),
                                  x0=np.ones(int(w)))
        curve = compute_tv_curve(cfg, n_workers=n_workers)
        reports.append(mixing_time(curve, epsilon))
    return reports

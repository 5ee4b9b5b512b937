"""layergeom: metric geometry of random neural-network layer compositions.

The package groups into five parts: cone and function-space metrics with
their directional functionals (``metrics``), layer maps and sampled property
checkers (``layers``), composition engines and asymptotic rate estimators
(``ergodic``), a quantized Markov-chain mixing harness (``cutoff``), and a
CLI that emits data files and figures (``cli``).
"""

from .metrics import (MetricFunctional, MetricKind, PairSample,
                      distortion_distance_1d, empirical_distance_metric_D,
                      empirical_horofunction, eval_metric_functional,
                      hilbert_distance, jacobian_distortion_distance,
                      norm_distance, thompson_distance)
from .layers import (ACTIVATIONS, Activation, BiasSpec, LayerMap,
                     PropertyVerdict, WeightSpec, apply_layer,
                     check_nonexpansive, check_order_preserving,
                     check_scalar_criterion_b, check_subhomogeneous, compose,
                     get_activation, sample_weights)
from .ergodic import (DriftEstimate, ExponentEstimate, SequenceGenerator,
                      Trajectory, drift, exact_jacobian,
                      jacobian_distortion_rate, lipschitz_expansion_rate,
                      log_sup_trajectory, run_append, run_insert,
                      subadditive_rate, top_exponent)
from .cutoff import (ChainConfig, MixingReport, QuantizedHistogram, TVCurve,
                     compute_tv_curve, cutoff_scan, mixing_time,
                     simulate_ensemble, tv_to_point_mass)

__version__ = "0.1.0"

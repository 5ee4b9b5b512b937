"""Command-line front end: parse a run configuration, orchestrate the
experiment, and emit CSV data, a JSON summary with the echoed config, and a
companion figure per report.

Exit codes: 0 success, 1 check failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import (COMMANDS, ConfigError, RunConfig, build_run_config,
                     parse_int_list, parse_matrix, parse_vector)
from .cutoff import (ChainConfig, compute_tv_curve, cutoff_scan, mixing_time,
                     scaled_weight_spec)
from .ergodic import (SequenceGenerator, drift, jacobian_distortion_rate,
                      lipschitz_expansion_rate, run_append, run_insert,
                      subadditive_rate, top_exponent)
from .layers import (BiasSpec, LayerMap, WeightSpec, check_nonexpansive,
                     check_order_preserving, check_scalar_criterion_b,
                     check_subhomogeneous, get_activation, sample_weights)
from .metrics import MetricFunctional, MetricKind, PairSample, \
    empirical_horofunction, eval_metric_functional
from .output import (curve_csv_name, write_curve_csv, write_json,
                     write_series_csv)
from .plotting import save_series_figure, save_tv_figure

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2

THREADS_ENV_VAR = "LAYERGEOM_THREADS"


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _get_float(cfg: RunConfig, section: str, key: str, default: str) -> float:
    raw = cfg.get(section, key, default)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad number for [{section}] {key}: {raw!r}") from None


def _get_int(cfg: RunConfig, section: str, key: str, default: str) -> int:
    raw = cfg.get(section, key, default)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"bad integer for [{section}] {key}: {raw!r}") from None


def _build_weight_spec(cfg: RunConfig, section: str, dim: int) -> WeightSpec:
    kind = cfg.get(section, "weight", "uniform_box")
    if kind == "uniform_box":
        spec = WeightSpec.uniform_box(dim, _get_float(cfg, section, "weight_scale", "1.0"))
    elif kind == "xavier":
        spec = WeightSpec.xavier(dim)
    elif kind == "positive_uniform":
        spec = WeightSpec.positive_uniform(dim,
                                           _get_float(cfg, section, "weight_lo", "0.0"),
                                           _get_float(cfg, section, "weight_hi", "1.0"))
    else:
        raise ConfigError(f"unknown weight kind {kind!r}")
    if _parse_bool(cfg.get(section, "weight_capped", "false")):
        spec = WeightSpec.spectral_capped(spec)
    return spec


def _bias_vector(cfg: RunConfig, section: str, key: str, dim: int) -> np.ndarray:
    raw = cfg.get(section, key)
    if raw is None:
        return np.zeros(dim)
    b = parse_vector(raw)
    if b.size == 1 and dim > 1:
        b = np.full(dim, b[0])
    if b.size != dim:
        raise ConfigError(f"[{section}] {key} has dim {b.size}, expected {dim}")
    return b


def _explicit_map(cfg: RunConfig, form: str, activation, w_key: str,
                  b_key: str) -> LayerMap:
    w = parse_matrix(cfg.require("generator", w_key))
    b = _bias_vector(cfg, "generator", b_key, w.shape[0])
    return LayerMap(form, w, b, activation)


def _build_generator(cfg: RunConfig) -> SequenceGenerator:
    mode = cfg.require("generator", "mode")
    form = cfg.get("generator", "form", "affine")
    activation = get_activation(cfg.get("generator", "activation", "identity"))
    if mode == "iid":
        dim = _get_int(cfg, "generator", "dim", "0")
        if dim < 1:
            raise ConfigError("[generator] dim must be >= 1 for iid mode")
        spec = _build_weight_spec(cfg, "generator", dim)
        raw_bias = cfg.get("generator", "bias", "zeros")
        if raw_bias == "zeros":
            bias = BiasSpec.zeros()
        elif raw_bias == "uniform":
            bias = BiasSpec.uniform(_get_float(cfg, "generator", "bias_lo", "0.0"),
                                    _get_float(cfg, "generator", "bias_hi", "0.0"))
        elif raw_bias == "fixed":
            bias = BiasSpec.fixed(_bias_vector(cfg, "generator", "bias_value", dim))
        else:
            raise ConfigError(f"unknown bias kind {raw_bias!r}")
        return SequenceGenerator.iid(form, activation, spec, bias, seed=cfg.seed)
    if mode == "constant":
        return SequenceGenerator.constant(
            _explicit_map(cfg, form, activation, "w", "bias_value"))
    if mode == "cycle":
        a = _explicit_map(cfg, form, activation, "w", "bias_value")
        b = _explicit_map(cfg, form, activation, "w2", "bias_value2")
        return SequenceGenerator.cycle([a, b])
    if mode == "markov":
        a = _explicit_map(cfg, form, activation, "w", "bias_value")
        b = _explicit_map(cfg, form, activation, "w2", "bias_value2")
        p = _get_float(cfg, "generator", "p", "0.5")
        return SequenceGenerator.markov(a, b, p, seed=cfg.seed)
    raise ConfigError(f"unknown generator mode {mode!r}")


def _metric_from(cfg: RunConfig, section: str, default: str = "euclidean") -> MetricKind:
    name = cfg.get(section, "metric", default)
    p_raw = cfg.get(section, "metric_p")
    try:
        return MetricKind.from_name(name, float(p_raw) if p_raw else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_exponent(cfg: RunConfig) -> int:
    gen = _build_generator(cfg)
    n = _get_int(cfg, "exponent", "n", "10000")
    x0 = parse_vector(cfg.get("exponent", "x0", f"ones:{gen.dim}"))
    traj = run_append(gen, x0, n)
    est = top_exponent(traj)
    summary = {
        "config": cfg.echo(),
        "lambda": est.lam,
        "half_width": est.half_width,
        "leading_index": est.leading_index,
        "tie": est.tie,
        "overflowed": traj.overflowed,
        "steps_completed": traj.n_steps,
        "generator": gen.describe(),
    }
    metric_name = cfg.get("exponent", "metric")
    if metric_name is not None:
        sub = subadditive_rate(traj, _metric_from(cfg, "exponent"))
        summary["subadditive_lambda"] = sub.lam
        write_series_csv(cfg.out / "exponent_subadditive.csv", sub.ns, sub.values)
    write_series_csv(cfg.out / "exponent_series.csv", est.ns, est.values)
    write_json(cfg.out / "exponent.json", summary)
    save_series_figure(est.ns, est.values, "log sup |x_n| / n",
                       cfg.out / "exponent.png", hline=est.lam,
                       title=gen.describe())
    return EXIT_OK


def cmd_drift(cfg: RunConfig) -> int:
    gen = _build_generator(cfg)
    n = _get_int(cfg, "drift", "n", "10000")
    x0 = parse_vector(cfg.get("drift", "x0", f"zeros:{gen.dim}"))
    order = cfg.get("drift", "order", "append")
    if order == "append":
        traj = run_append(gen, x0, n)
    elif order == "insert":
        traj = run_insert(gen, x0, n)
    else:
        raise ConfigError(f"unknown order {order!r}")
    est = drift(traj)
    norms = np.linalg.norm(est.series, axis=1)
    write_series_csv(cfg.out / "drift_series.csv", est.ns, norms)
    write_json(cfg.out / "drift.json", {
        "config": cfg.echo(),
        "v": est.v,
        "v_norm": est.v_norm,
        "order": order,
        "overflowed": est.overflowed,
        "steps_completed": traj.n_steps,
        "generator": gen.describe(),
    })
    save_series_figure(est.ns, norms, "|x_n / n|", cfg.out / "drift.png",
                       hline=est.v_norm, title=gen.describe())
    return EXIT_OK


def cmd_expansion(cfg: RunConfig) -> int:
    gen = _build_generator(cfg)
    n = _get_int(cfg, "expansion", "n", "200")
    count = _get_int(cfg, "expansion", "pairs", "64")
    lo = _get_float(cfg, "expansion", "lo", "-0.999")
    hi = _get_float(cfg, "expansion", "hi", "0.999")
    pair_seed = _get_int(cfg, "expansion", "pair_seed", str(cfg.seed))
    sample = PairSample.uniform(np.full(gen.dim, lo), np.full(gen.dim, hi),
                                count, seed=pair_seed)
    est = lipschitz_expansion_rate(gen, sample, n)
    write_series_csv(cfg.out / "expansion_series.csv", est.ns, est.values)
    write_json(cfg.out / "expansion.json", {
        "config": cfg.echo(),
        "lambda": est.lam,
        "rate": float(np.exp(est.lam)),
        "half_width": est.half_width,
        "argmax_pair_x": est.argmax_pair[0],
        "argmax_pair_y": est.argmax_pair[1],
        "generator": gen.describe(),
    })
    save_series_figure(est.ns, est.values, "log max pair ratio / n",
                       cfg.out / "expansion.png", hline=est.lam,
                       title=gen.describe())
    return EXIT_OK


def cmd_distortion(cfg: RunConfig) -> int:
    gen = _build_generator(cfg)
    n = _get_int(cfg, "distortion", "n", "200")
    count = _get_int(cfg, "distortion", "points", "16")
    lo = _get_float(cfg, "distortion", "lo", "-0.999")
    hi = _get_float(cfg, "distortion", "hi", "0.999")
    point_seed = _get_int(cfg, "distortion", "point_seed", str(cfg.seed))
    rng = np.random.default_rng(point_seed)
    points = rng.uniform(lo, hi, size=(count, gen.dim))
    est = jacobian_distortion_rate(gen, n, points)
    write_series_csv(cfg.out / "distortion_series.csv", est.ns, est.values)
    write_json(cfg.out / "distortion.json", {
        "config": cfg.echo(),
        "lambda": est.lam,
        "half_width": est.half_width,
        "generator": gen.describe(),
    })
    save_series_figure(est.ns, est.values, "log-det spread / n",
                       cfg.out / "distortion.png", hline=est.lam,
                       title=gen.describe())
    return EXIT_OK


def _build_property_layer(cfg: RunConfig) -> LayerMap:
    form = cfg.get("layer", "form", "affine")
    activation = get_activation(cfg.require("layer", "activation"))
    raw_w = cfg.get("layer", "w")
    if raw_w is not None:
        w = parse_matrix(raw_w)
        dim = w.shape[0]
    else:
        dim = _get_int(cfg, "layer", "dim", "0")
        if dim < 1:
            raise ConfigError("[layer] needs either an explicit w or dim >= 1")
        w = sample_weights(_build_weight_spec(cfg, "layer", dim), seed=cfg.seed)
    bias = _bias_vector(cfg, "layer", "bias_value", dim)
    return LayerMap(form, w, bias, activation)


def cmd_properties(cfg: RunConfig) -> int:
    checks = [c.strip() for c in cfg.require("properties", "checks").split(",")]
    expect = cfg.get("properties", "expect", "pass")
    if expect not in ("pass", "fail"):
        raise ConfigError(f"expect must be 'pass' or 'fail', got {expect!r}")
    trials = _get_int(cfg, "properties", "trials", "10000")
    tolerance = _get_float(cfg, "properties", "tolerance", "1e-9")
    needs_layer = any(c != "criterion_b" for c in checks)
    layer = _build_property_layer(cfg) if needs_layer else None
    verdicts = {}
    for check in checks:
        if check == "order_preserving":
            verdicts[check] = check_order_preserving(layer, trials=trials,
                                                     seed=cfg.seed,
                                                     tolerance=tolerance)
        elif check == "subhomogeneous":
            verdicts[check] = check_subhomogeneous(layer, trials=trials,
                                                   seed=cfg.seed,
                                                   tolerance=tolerance)
        elif check == "nonexpansive":
            metric = _metric_from(cfg, "properties")
            verdicts[check] = check_nonexpansive(layer, metric, trials=trials,
                                                 seed=cfg.seed,
                                                 tolerance=tolerance)
        elif check == "criterion_b":
            b = _get_float(cfg, "properties", "criterion_b", "0.0")
            verdicts[check] = check_scalar_criterion_b(b)
        else:
            raise ConfigError(f"unknown check {check!r}")
    if expect == "pass":
        ok = all(v.passed for v in verdicts.values())
    else:
        ok = all((not v.passed) and v.witness is not None
                 for v in verdicts.values())
    write_json(cfg.out / "properties.json", {
        "config": cfg.echo(),
        "expect": expect,
        "ok": ok,
        "layer": layer.describe() if layer is not None else None,
        "verdicts": {k: v.to_dict() for k, v in verdicts.items()},
    })
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_cutoff(cfg: RunConfig) -> int:
    sec = "cutoff"
    widths = parse_int_list(cfg.require(sec, "widths"))
    if not widths:
        raise ConfigError("widths must be nonempty")
    activation = get_activation(cfg.get(sec, "activation", "tanh"))
    scaling = cfg.get(sec, "scaling", "heuristic")
    ensemble = _get_int(cfg, sec, "ensemble", "100000")
    max_depth = _get_int(cfg, sec, "max_depth", "30")
    precision = _get_float(cfg, sec, "precision", "0.001")
    epsilon = _get_float(cfg, sec, "epsilon", "0.25")
    raw_x0 = cfg.get(sec, "x0")
    if raw_x0 is not None and len(widths) != 1:
        raise ConfigError("an explicit x0 is only valid for a single width")
    try:
        base = ChainConfig(width=widths[0], activation=activation,
                           weight_spec=scaled_weight_spec(widths[0], scaling),
                           x0=parse_vector(raw_x0) if raw_x0 else None,
                           precision=precision, ensemble=ensemble,
                           max_depth=max_depth, seed=cfg.seed)
        if raw_x0 is not None:
            reports = [mixing_time(compute_tv_curve(base, n_workers=cfg.threads),
                                   epsilon)]
        else:
            reports = cutoff_scan(widths, base, scaling,
                                  n_workers=cfg.threads, epsilon=epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    summary = {"config": cfg.echo(), "scaling": scaling, "reports": []}
    for report in reports:
        stem = curve_csv_name(report.curve, scaling)
        write_curve_csv(report.curve, cfg.out / f"{stem}.csv")
        write_json(cfg.out / f"{stem}.json",
                   {"config": cfg.echo(), **report.to_dict()})
        save_tv_figure(report, cfg.out / f"{stem}.png")
        summary["reports"].append({**report.to_dict(), "files": stem})
    write_json(cfg.out / "cutoff_summary.json", summary)
    return EXIT_OK


def cmd_horofunction(cfg: RunConfig) -> int:
    sec = "horofunction"
    metric = _metric_from(cfg, sec)
    x = parse_vector(cfg.require(sec, "x"))
    default_base = f"ones:{x.size}" if metric.requires_positive else f"zeros:{x.size}"
    basepoint = parse_vector(cfg.get(sec, "basepoint", default_base))
    direction = parse_vector(cfg.require(sec, "direction"))
    ns = parse_int_list(cfg.get(sec, "ns", "10,100,1000,10000,100000"))
    ys = [n * direction for n in ns]
    values = empirical_horofunction(metric, basepoint, ys, x)
    summary = {
        "config": cfg.echo(),
        "metric": metric.name,
        "values": values,
        "final": float(values[-1]),
    }
    if metric.tag == "norm" and 1.0 < metric.p < np.inf:
        w = direction / np.linalg.norm(direction, ord=metric.p)
        functional = MetricFunctional.smooth_norm_directional(w, p=metric.p)
        summary["directional_limit"] = eval_metric_functional(functional, x)
    write_series_csv(cfg.out / "horofunction_series.csv", ns, values)
    write_json(cfg.out / "horofunction.json", summary)
    save_series_figure(ns, values, "h_y(x)", cfg.out / "horofunction.png",
                       hline=summary.get("directional_limit"), logx=True,
                       title=f"{metric.name} horofunction values")
    return EXIT_OK


_DRIVERS = {
    "exponent": cmd_exponent,
    "drift": cmd_drift,
    "expansion": cmd_expansion,
    "distortion": cmd_distortion,
    "properties": cmd_properties,
    "cutoff": cmd_cutoff,
    "horofunction": cmd_horofunction,
}


def run_command(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return _DRIVERS[cfg.command](cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="layergeom",
        description="Metric-geometry experiments on random layer compositions.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--preset", help="named parameter preset")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="worker count for ensembles")
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(args.command, config_path=args.config,
                               preset=args.preset, seed=args.seed,
                               out=args.out, threads=args.threads,
                               env_threads=os.environ.get(THREADS_ENV_VAR))
        return run_command(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())

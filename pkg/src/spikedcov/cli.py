"""Command-line interface.

Subcommands cover the simulation harness (simulate-type1, simulate-power,
clt-check), file-based detection (detect), image-pair change mapping
(changemap, roc), and a calculator for the limit-spectrum quantities (limits).
Flags override values from an optional JSON config; exit codes are 0 success,
2 usage error, 3 data error, 4 numeric degeneracy.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .estimators import ModelDims
from .io import ChangeMap, DataFormatError, read_image
from .montecarlo import (
    DEFAULT_ALPHAS,
    STATISTIC_NAMES,
    run_clt_check,
    run_power,
    run_type1,
    scenario_preset,
    type1_preset,
)
from .pipeline import changemap as run_changemap
from .pipeline import detect as run_detect
from .pipeline import roc as run_roc
from .rmt import MpParams, mp_edges, spike_forward
from .statistics import NumericalDegeneracy, fisher_consistency_thresholds

__all__ = ["main", "cli_dispatch"]

_USAGE_ERROR, _DATA_ERROR, _DEGENERACY_ERROR = 2, 3, 4

_FLAGS = {
    "M": dict(type=int, help="observation dimension"),
    "N": dict(type=int, help="per-group sample count override"),
    "K": dict(type=int, help="number of spikes"),
    "L": dict(type=int, help="number of groups"),
    "sigma2": dict(type=float, help="noise variance"),
    "alpha": dict(type=float, help="test level (default: the standard grid)"),
    "trials": dict(type=int, help="Monte-Carlo trials"),
    "seed": dict(type=int, help="base RNG seed"),
    "scenario": dict(type=int, choices=(1, 2), help="power-study scenario"),
    "out": dict(type=str, help="output path (default: stdout)"),
    "config": dict(type=str, help="JSON file with flag defaults"),
    "workers": dict(type=int, help="parallel worker processes"),
    "statistics": dict(type=str, help="comma-separated statistic names"),
    "window": dict(type=int, help="odd sliding-window side length"),
    "statistic": dict(type=str, choices=STATISTIC_NAMES, help="statistic to map"),
    "mask": dict(type=str, help="ground-truth .npy boolean mask to attach"),
    "map": dict(type=str, help="change-map .npz path"),
    "c": dict(type=float, help="dimension-to-samples ratio M/N"),
    "gamma": dict(type=float, help="spike strength"),
    "delta": dict(type=float, help="relative eigenvalue change"),
}


def _subparser(sub, name: str, help_text: str, flags, positems=()):
    p = sub.add_parser(name, help=help_text)
    for pos, kwargs in positems:
        p.add_argument(pos, **kwargs)
    for flag in flags:
        p.add_argument(f"--{flag}", default=None, **_FLAGS[flag])
    return p


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikedcov",
        description="Equality tests for spiked covariance matrices across groups",
    )
    sub = parser.add_subparsers(dest="command")
    p = _subparser(
        sub,
        "simulate-type1",
        "empirical type-I error table for the calibrated test",
        ("M", "N", "K", "L", "sigma2", "alpha", "trials", "seed", "out", "config", "workers"),
    )
    p.set_defaults(func=_cmd_simulate_type1)
    p = _subparser(
        sub,
        "simulate-power",
        "empirical power table with null-calibrated thresholds",
        ("scenario", "M", "N", "K", "L", "sigma2", "alpha", "trials", "seed", "out",
         "config", "workers", "statistics"),
    )
    p.set_defaults(func=_cmd_simulate_power)
    p = _subparser(
        sub,
        "clt-check",
        "empirical vs theoretical eigenvalue-CLT covariance",
        ("scenario", "M", "N", "sigma2", "trials", "seed", "out", "config", "workers"),
    )
    p.set_defaults(func=_cmd_clt_check)
    p = _subparser(
        sub,
        "detect",
        "test covariance equality across matrix files",
        ("K", "alpha", "seed", "out", "config"),
        positems=[("files", dict(nargs="+", help="one CMX1 file per group"))],
    )
    p.set_defaults(func=_cmd_detect)
    p = _subparser(
        sub,
        "changemap",
        "sliding-window statistic map over an image pair",
        ("window", "K", "statistic", "alpha", "seed", "mask", "out", "config"),
        positems=[
            ("image_a", dict(help="planar complex image (with JSON sidecar)")),
            ("image_b", dict(help="planar complex image (with JSON sidecar)")),
        ],
    )
    p.set_defaults(func=_cmd_changemap)
    p = _subparser(
        sub,
        "roc",
        "ROC curve and AUC of a change map with ground truth",
        ("map", "out", "config"),
    )
    p.set_defaults(func=_cmd_roc)
    p = _subparser(
        sub,
        "limits",
        "print limit-spectrum quantities for given parameters",
        ("sigma2", "c", "gamma", "delta", "out", "config"),
    )
    p.set_defaults(func=_cmd_limits)
    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if getattr(args, "config", None) is None:
        return
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{args.config}: cannot read config ({exc})") from exc
    if not isinstance(config, dict):
        raise DataFormatError(f"{args.config}: config must be a JSON object")
    for key, value in config.items():
        if not hasattr(args, key) or key in ("config", "func", "command"):
            raise ValueError(f"config key {key!r} is not a flag of {args.command!r}")
        if getattr(args, key) is None:
            setattr(args, key, value)


def _require(args, name: str):
    value = getattr(args, name)
    if value is None:
        raise ValueError(f"--{name} is required for {args.command!r}")
    return value


def _pick(args, name: str, default):
    value = getattr(args, name)
    return default if value is None else value


def _alphas(args) -> tuple:
    return DEFAULT_ALPHAS if args.alpha is None else (float(args.alpha),)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _fixed_dims_preset(args, preset):
    """Apply --N/--K/--L to a preset; K and L are fixed by the preset and only
    validated, N replaces every group's sample count."""
    for name, fixed in (("K", preset.dims.K), ("L", preset.dims.L)):
        value = getattr(args, name, None)
        if value is not None and value != fixed:
            raise ValueError(f"--{name} is fixed to {fixed} by this preset")
    if getattr(args, "N", None) is not None:
        dims = ModelDims(
            M=preset.dims.M, N=(int(args.N),) * preset.dims.L, K=preset.dims.K
        )
        preset = dataclasses.replace(preset, dims=dims)
    return preset


def _cmd_simulate_type1(args) -> int:
    preset = _fixed_dims_preset(
        args, type1_preset(_require(args, "M"), sigma2=_pick(args, "sigma2", 0.5))
    )
    start = time.perf_counter()
    result = run_type1(
        preset,
        alphas=_alphas(args),
        trials=_pick(args, "trials", 10_000),
        seed=_pick(args, "seed", 0),
        workers=_pick(args, "workers", 1),
    )
    print(f"elapsed {time.perf_counter() - start:.1f}s", file=sys.stderr)
    if result.degenerate_trials:
        print(
            f"{result.degenerate_trials} trial(s) hit the detectability floor "
            "and were counted as non-rejections",
            file=sys.stderr,
        )
    _emit(args, result.to_tsv())
    return 0


def _cmd_simulate_power(args) -> int:
    scenario = _require(args, "scenario")
    M = _require(args, "M")
    sigma2 = _pick(args, "sigma2", 0.5)
    h0 = _fixed_dims_preset(args, scenario_preset(scenario, "H0", M, sigma2=sigma2))
    h1 = _fixed_dims_preset(args, scenario_preset(scenario, "H1", M, sigma2=sigma2))
    names = tuple(
        s.strip() for s in _pick(args, "statistics", ",".join(STATISTIC_NAMES)).split(",")
    )
    start = time.perf_counter()
    result = run_power(
        h0,
        h1,
        statistics=names,
        alphas=_alphas(args),
        trials=_pick(args, "trials", 2000),
        seed=_pick(args, "seed", 0),
        workers=_pick(args, "workers", 1),
    )
    print(f"elapsed {time.perf_counter() - start:.1f}s", file=sys.stderr)
    _emit(args, result.to_tsv())
    return 0


def _cmd_clt_check(args) -> int:
    preset = scenario_preset(
        _pick(args, "scenario", 2), "H0", _require(args, "M"),
        sigma2=_pick(args, "sigma2", 0.5),
    )
    preset = _fixed_dims_preset(args, preset)
    start = time.perf_counter()
    result = run_clt_check(
        preset,
        trials=_pick(args, "trials", 2000),
        seed=_pick(args, "seed", 0),
        workers=_pick(args, "workers", 1),
    )
    print(f"elapsed {time.perf_counter() - start:.1f}s", file=sys.stderr)
    _emit(args, result.to_json() + "\n")
    return 0


def _cmd_detect(args) -> int:
    report = run_detect(
        args.files,
        K=_require(args, "K"),
        alpha=_pick(args, "alpha", 0.05),
        seed=_pick(args, "seed", 0),
    )
    _emit(args, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_changemap(args) -> int:
    out = _require(args, "out")
    image_a = read_image(args.image_a)
    image_b = read_image(args.image_b)
    cmap = run_changemap(
        image_a,
        image_b,
        window=_pick(args, "window", 5),
        K=_pick(args, "K", 5),
        statistic=_pick(args, "statistic", "wishart"),
        alpha=args.alpha,
        seed=_pick(args, "seed", 0),
    )
    if args.mask is not None:
        try:
            mask = np.load(args.mask, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise DataFormatError(f"{args.mask}: cannot read mask ({exc})") from exc
        cmap = cmap.with_mask(mask)
    cmap.save(out)
    return 0


def _cmd_roc(args) -> int:
    curve = run_roc(ChangeMap.load(_require(args, "map")))
    _emit(args, curve.to_tsv())
    return 0


def _cmd_limits(args) -> int:
    sigma2 = _require(args, "sigma2")
    c = _require(args, "c")
    params = MpParams(sigma2=sigma2, c=c)
    lo, hi = mp_edges(params)
    lines = [
        f"bulk_edges {lo:g} {hi:g}",
        f"detectability {params.detectability:g}",
    ]
    if args.gamma is not None:
        spike = spike_forward(float(args.gamma), params)
        lines.insert(0, f"location {spike.location:g}")
    if 0 < c < 0.5:
        fp = fisher_consistency_thresholds(c, _pick(args, "delta", 1.0))
        lines.append(f"nu_edges {fp.nu_minus:g} {fp.nu_plus:g}")
        lines.append(f"beta_subspace {fp.beta_subspace:g}")
        if args.delta is not None:
            lines.append(f"beta_eigenvalue {fp.beta_eigenvalue:g}")
    _emit(args, "\n".join(lines) + "\n")
    return 0


def cli_dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else _USAGE_ERROR
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return _USAGE_ERROR
    try:
        _apply_config(args)
        return args.func(args)
    except NumericalDegeneracy as exc:
        print(
            f"error: near detectability edge — decision unreliable ({exc})",
            file=sys.stderr,
        )
        return _DEGENERACY_ERROR
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _DATA_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _USAGE_ERROR


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()

"""Declarative experiment runner.

Usage:

    gbesq <check> [CONFIG] [--out DIR] [--seed N] [--workers N]

where <check> is one of: simulate, laplace-check, hitting-check, path-props,
cir-check, scaling-check, pde-solve.  CONFIG is a YAML file (JSON is valid
YAML, so .json configs work unchanged); omitted keys fall back to the
check's defaults, which match the shipped acceptance tolerances.

Each run writes <check>.json (assertions, values, resolved config, version)
and one CSV per result table into the output directory.  Exit status: 0 all
assertions passed, 1 an assertion failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import yaml

from .checks import CHECKS, ConfigError, run_check
from .model import InvalidParameter

__all__ = ["main", "ExperimentConfig", "parse_config", "serialize_config"]


def parse_config(text: str) -> dict:
    """Parse a YAML (or JSON) config document into a plain dict."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML/JSON: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def serialize_config(cfg: dict) -> str:
    """Canonical YAML serialisation; parse(serialize(c)) == c."""
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


@dataclass(frozen=True)
class ExperimentConfig:
    """A check id plus its (possibly partial) parameter mapping."""

    check_id: str
    options: dict

    @classmethod
    def load(cls, check_id: str, path: str | Path | None) -> "ExperimentConfig":
        if check_id not in CHECKS:
            raise ConfigError(f"unknown check id {check_id!r}")
        options: dict = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file not found: {p}")
            options = parse_config(p.read_text())
            declared = options.pop("check", None)
            if declared is not None and declared != check_id:
                raise ConfigError(
                    f"config declares check {declared!r} but {check_id!r} was requested")
        return cls(check_id, options)

    def serialize(self) -> str:
        return serialize_config({"check": self.check_id, **self.options})

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        data = parse_config(text)
        check_id = data.pop("check", None)
        if check_id is None:
            raise ConfigError("missing required config field: check")
        if check_id not in CHECKS:
            raise ConfigError(f"unknown check id {check_id!r}")
        return cls(check_id, data)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbesq",
        description="Squared Bessel processes under volatility uncertainty: "
                    "verification experiment runner.")
    sub = parser.add_subparsers(dest="check", required=True, metavar="check")
    for name in CHECKS:
        p = sub.add_parser(name, help=f"run the {name} suite")
        p.add_argument("config", nargs="?", default=None,
                       help="YAML or JSON config file (defaults are built in)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads for family members "
                            "(default: GBESQ_WORKERS or 1)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        exp = ExperimentConfig.load(args.check, args.config)
        cfg = dict(exp.options)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = args.out
        if args.workers is not None:
            os.environ["GBESQ_WORKERS"] = str(args.workers)
        report = run_check(args.check, cfg)
    except (ConfigError, InvalidParameter) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2

    out_dir = cfg.get("output_dir") or "gbesq-out"
    path = report.write(out_dir)
    for a in report.assertions:
        mark = "PASS" if a.passed else "FAIL"
        print(f"[{mark}] {a.name}: value={a.value:.6g}"
              + (f" target={a.target:.6g}" if a.target is not None else "")
              + (f" tol={a.tol:.3g}" if a.tol else ""))
    status = "passed" if report.passed else "FAILED"
    print(f"{report.check_id}: {status} "
          f"({sum(a.passed for a in report.assertions)}/{len(report.assertions)} "
          f"assertions) -> {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())

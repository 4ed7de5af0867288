"""Check reports: assertions, tables, and deterministic serialisation.

A report's ``payload()`` (everything except wall-clock timing) is a pure
function of the resolved config, so re-running a config with the same seed
reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

__all__ = ["Assertion", "CheckReport"]


@dataclass
class Assertion:
    """One pass/fail comparison with its tolerance and context."""

    name: str
    value: float
    target: float | None
    tol: float
    passed: bool
    stderr: float | None = None
    detail: str | None = None

    def to_dict(self) -> dict:
        out = {"name": self.name, "value": self.value, "target": self.target,
               "tol": self.tol, "passed": self.passed}
        if self.stderr is not None:
            out["stderr"] = self.stderr
        if self.detail is not None:
            out["detail"] = self.detail
        return out


@dataclass
class CheckReport:
    """Result of one named check suite."""

    check_id: str
    config: dict
    assertions: list[Assertion] = field(default_factory=list)
    tables: dict[str, list[dict]] = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    elapsed_s: float | None = None

    def ok(self, name: str, value: float, target: float | None, tol: float,
           stderr: float | None = None, detail: str | None = None,
           passed: bool | None = None) -> Assertion:
        """Record an assertion; default pass rule is |value - target| <= tol."""
        if passed is None:
            passed = abs(value - target) <= tol
        a = Assertion(name, float(value), target if target is None else float(target),
                      float(tol), bool(passed), stderr, detail)
        self.assertions.append(a)
        return a

    def ok_le(self, name: str, value: float, bound: float,
              stderr: float | None = None, detail: str | None = None) -> Assertion:
        """Record a one-sided assertion value <= bound."""
        return self.ok(name, value, bound, 0.0, stderr, detail, passed=value <= bound)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def payload(self) -> dict:
        """The deterministic part of the report (no timing)."""
        return {
            "check": self.check_id,
            "version": __version__,
            "passed": self.passed,
            "assertions": [a.to_dict() for a in self.assertions],
            "values": self.values,
            "tables": self.tables,
            "config": self.config,
        }

    def to_dict(self) -> dict:
        out = self.payload()
        if self.elapsed_s is not None:
            out["elapsed_s"] = self.elapsed_s
        return out

    def write(self, out_dir: str | Path) -> Path:
        """Write <check>.json plus one CSV per table; returns the JSON path."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        json_path = out_dir / f"{self.check_id}.json"
        json_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        for name, rows in self.tables.items():
            if not rows:
                continue
            cols = list(rows[0])
            with open(out_dir / f"{self.check_id}_{name}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                w.writerows(rows)
        return json_path

"""Declarative simulation specs and the shipped experiment presets.

A spec is a JSON object::

    {
      "name": "table2_panelA",
      "dgp": {"family": "sample_mean_lognormal", "law": "chisq1",
              "scale_mode": "homogeneous"},
      "design": "stochastic",
      "cells": [{"N": 80, "T": 80, "tau": 0.3}],
      "methods": ["sqb", "dqb"],
      "alpha": 0.05, "n_mc": 10000, "B": 299, "seed": 0, "tie": "midpoint",
      "reference": [{"N": 80, "T": 80, "tau": 0.3, "bias": ..., "sqb": ..., "dqb": ...}]
    }

``tie`` is the quantile tie rule (default ``"lower"``); the shipped presets use
``"midpoint"``, which reproduces their reference bias values. ``reference`` is
optional and only used for side-by-side printing. A spec may
name a ``"preset"`` instead of repeating it; its own keys then override the
preset's.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources

from ..bootstrap import Design
from ..errors import IoError, ValidationError
from ..quantile import validate_tie
from .dgp import DgpSpec, Heterogeneity
from .experiment import CoverageCell, CoverageReport, run_coverage_experiment

__all__ = ["SimulationSpec", "list_presets", "load_preset", "load_simulation_spec"]


@dataclass(frozen=True)
class SimulationSpec:
    name: str
    template: DgpSpec
    design: str
    cells: tuple[tuple[int, int, float], ...]
    methods: tuple[Design, ...] = (Design.SQB, Design.DQB)
    alpha: float = 0.05
    n_mc: int = 1000
    n_replicates: int = 299
    seed: int = 0
    tie: str = "lower"
    description: str = ""
    reference: tuple[dict, ...] = field(default=())

    @classmethod
    def from_dict(cls, d: dict) -> SimulationSpec:
        if "preset" in d:
            base = _preset_dict(d["preset"])
            d = {**base, **{k: v for k, v in d.items() if k != "preset"}}
        try:
            dgp = dict(d["dgp"])
            design = str(d.get("design", "stochastic")).lower()
            law = dgp.pop("law", "chisq1" if dgp.get("family") == "sample_mean_lognormal" else "std_normal")
            template = DgpSpec(heterogeneity=Heterogeneity.from_parts(design, law), **dgp)
            cells = tuple((int(c["N"]), int(c["T"]), float(c["tau"])) for c in d["cells"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed simulation spec: {exc}") from None
        if not cells:
            raise ValidationError("simulation spec has no cells")
        return cls(
            name=d.get("name", "custom"),
            template=template,
            design=design,
            cells=cells,
            methods=tuple(Design.parse(m) for m in d.get("methods", ("sqb", "dqb"))),
            alpha=float(d.get("alpha", 0.05)),
            n_mc=int(d.get("n_mc", 1000)),
            n_replicates=int(d.get("B", 299)),
            seed=int(d.get("seed", 0)),
            tie=validate_tie(d.get("tie", "lower")),
            description=d.get("description", ""),
            reference=tuple(d.get("reference", ())),
        )

    def grid(self, select: list[tuple[int, int]] | None = None, taus: list[float] | None = None) -> list[CoverageCell]:
        out = []
        for n, t, tau in self.cells:
            if select is not None and (n, t) not in select:
                continue
            if taus is not None and not any(math.isclose(tau, x) for x in taus):
                continue
            out.append(CoverageCell(n, t, tau, self.design, self.methods))
        if not out:
            raise ValidationError(f"no cells of {self.name} match the selection")
        return out

    def reference_for(self, n: int, t: int, tau: float) -> dict | None:
        for r in self.reference:
            if (r["N"], r["T"]) == (n, t) and math.isclose(r["tau"], tau):
                return r
        return None

    def run(self, cells: list[CoverageCell] | None = None, threads: int = 1, **overrides) -> CoverageReport:
        spec = replace(self, **overrides) if overrides else self
        return run_coverage_experiment(
            cells if cells is not None else spec.grid(),
            spec.template,
            spec.n_mc,
            spec.n_replicates,
            spec.seed,
            alpha=spec.alpha,
            threads=threads,
            name=spec.name,
            tie=spec.tie,
        )


def _preset_files():
    return resources.files(__package__).joinpath("presets")


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in _preset_files().iterdir() if p.name.endswith(".json"))


def _preset_dict(name: str) -> dict:
    path = _preset_files().joinpath(f"{name}.json")
    if not path.is_file():
        raise ValidationError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_preset(name: str) -> SimulationSpec:
    return SimulationSpec.from_dict(_preset_dict(name))


def load_simulation_spec(path: str | os.PathLike) -> SimulationSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from None
    return SimulationSpec.from_dict(d)

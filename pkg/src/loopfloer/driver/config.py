"""Scenario files: YAML with nesting, validated against the shipped JSON schema."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from ..errors import ConfigInvalid

DEFAULTS = {
    "backend": {"kind": "flat_torus", "dim": 1},
    "grids": {"h_s": 0.05},
    "sampling": {"components": None, "lattice": 8, "offsets": 8},
    "action_cut": 1.0,
    "nested_cuts": [],
    "eps_list": [0.1],
    "p_list": [2.0],
    "reference": None,
    "seed": 0,
}


def load_schema(name: str) -> dict:
    text = resources.files("loopfloer").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def builtin_scenarios() -> list:
    folder = resources.files("loopfloer").joinpath("scenarios")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass
class Scenario:
    """Validated scenario with every default filled in."""

    data: dict

    @property
    def id(self) -> str:
        return self.data["id"]

    @property
    def dim(self) -> int:
        return int(self.data["backend"]["dim"])

    @property
    def n_t(self) -> int:
        return int(self.data["grids"]["n_t"])

    @property
    def h_s(self) -> float:
        return float(self.data["grids"]["h_s"])

    @property
    def eps_list(self) -> list:
        return [float(e) for e in self.data["eps_list"]]

    @property
    def p_list(self) -> list:
        return [float(p) for p in self.data["p_list"]]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def action_cut(self) -> float:
        return float(self.data["action_cut"])

    @property
    def components(self) -> tuple:
        return tuple(tuple(int(v) for v in c) for c in self.data["sampling"]["components"])

    def snapshot(self) -> dict:
        return copy.deepcopy(self.data)

    def backend(self):
        from ..geometry import FlatTorus

        return FlatTorus(self.dim)

    def perturbation(self):
        from ..loops import FourierPotential, cosine_potential, moving_cosine_potential, wobble_potential

        pert = self.data["perturbation"]
        kind = pert["kind"]
        if kind == "cosine":
            return cosine_potential(float(pert.get("c", 0.01)), self.dim)
        if kind == "moving_cosine":
            return moving_cosine_potential(float(pert.get("c", 0.01)))
        if kind == "wobble":
            return wobble_potential(float(pert.get("c", 0.01)), float(pert.get("b", 0.005)))
        if kind == "zero":
            return FourierPotential([], self.dim)
        terms = [(t["a"], t["k"], t.get("m", 0.0), t.get("phase", 0.0)) for t in pert["terms"]]
        return FourierPotential(terms, self.dim)

    def plan(self):
        from ..critical import SamplingPlan

        s = self.data["sampling"]
        return SamplingPlan(n_nodes=self.n_t, lattice=int(s["lattice"]), components=self.components,
                            offsets=int(s["offsets"]))

    def with_overrides(self, seed=None, eps_list=None) -> "Scenario":
        data = copy.deepcopy(self.data)
        if seed is not None:
            data["seed"] = int(seed)
        if eps_list is not None:
            data["eps_list"] = [float(e) for e in eps_list]
        return validate(data)


def validate(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigInvalid("scenario must be a mapping")
    try:
        jsonschema.validate(raw, load_schema("scenario"))
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{path}: {exc.message}") from None
    data = _merge(DEFAULTS, raw)
    dim = int(data["backend"].get("dim", 1))
    data["backend"]["dim"] = dim
    n_t = int(data["grids"]["n_t"])
    if not (16 <= n_t <= 512 and _is_pow2(n_t)):
        raise ConfigInvalid(f"grids/n_t = {n_t} must be a power of two in [16, 512]")
    n_s = data["grids"].get("n_s")
    if n_s is not None and not 64 <= int(n_s) <= 4096:
        raise ConfigInvalid(f"grids/n_s = {n_s} must lie in [64, 4096]")
    eps = [float(e) for e in data["eps_list"]]
    if eps != sorted(eps, reverse=True):
        raise ConfigInvalid("eps_list must be sorted in descending order")
    if data["sampling"]["components"] is None:
        data["sampling"]["components"] = [[0] * dim]
    for comp in data["sampling"]["components"]:
        if len(comp) != dim:
            raise ConfigInvalid(f"component {comp} does not match dimension {dim}")
    cuts = [float(c) for c in data["nested_cuts"]]
    if cuts != sorted(cuts):
        raise ConfigInvalid("nested_cuts must be increasing")
    kind = data["perturbation"]["kind"]
    if kind == "fourier" and "terms" not in data["perturbation"]:
        raise ConfigInvalid("perturbation/terms is required for kind 'fourier'")
    if kind in ("moving_cosine", "wobble") and dim != 1:
        raise ConfigInvalid(f"perturbation '{kind}' lives on the circle")
    return Scenario(data)


def load_scenario(path=None, name=None) -> Scenario:
    """Scenario from a YAML file or from the packaged scenario ``name``."""
    if path is None and name is None:
        raise ConfigInvalid("give a scenario file or a packaged scenario name")
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigInvalid(f"config file {path} not found")
        text = p.read_text()
    else:
        if name not in builtin_scenarios():
            raise ConfigInvalid(f"unknown scenario {name!r}; packaged: {', '.join(builtin_scenarios())}")
        text = resources.files("loopfloer").joinpath("scenarios", f"{name}.yaml").read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"cannot parse scenario: {exc}") from None
    return validate(raw)

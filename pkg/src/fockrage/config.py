"""Experiment configuration: JSON schema, defaults and model construction."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import InputError
from .onebody import LatticeSpec, build_lattice_one_body, build_pair_interaction, shift_spectrum

COMMANDS = ("spectrum", "evolve", "ergodic", "bbgky", "rage-classic", "rage-escape")

_NUM = {"type": "number"}
_INT = {"type": "integer"}

SCHEMA = {
    "type": "object",
    "required": ["model"],
    "additionalProperties": False,
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "model": {
            "type": "object",
            "required": ["lattice"],
            "additionalProperties": False,
            "properties": {
                "lattice": {
                    "type": "object",
                    "required": ["length"],
                    "additionalProperties": False,
                    "properties": {
                        "length": {"type": "integer", "minimum": 2},
                        "hopping": _NUM,
                        "potential": {"type": "array", "items": _NUM},
                        "wells": {"type": "array",
                                  "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                            "prefixItems": [_INT, _NUM]}},
                        "boundary": {"enum": ["open"]},
                    },
                },
                "interaction": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["none", "contact", "exponential"]},
                        "g": _NUM,
                        "a": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "statistics": {"enum": ["boson", "fermion"]},
                "N": {"type": "integer", "minimum": 0},
                "margin": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "run": {"type": "object"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS = {
    "model": {"interaction": {"kind": "none"}, "statistics": "boson", "N": 1, "margin": 0.1},
    "output": {"directory": "out", "formats": ["csv", "json"]},
    "seed": 0,
    "run": {},
}


def _check_finite(obj, path="config"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InputError(f"{path} is not finite")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    model: dict
    run: dict
    output: dict
    seed: int
    command: str = None

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InputError("config must be a JSON object")
        try:
            jsonschema.validate(data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise InputError(f"config invalid at {where}: {exc.message}") from None
        _check_finite(data)
        full = _merge(DEFAULTS, data)
        lat = full["model"]["lattice"]
        if "potential" in lat and len(lat["potential"]) != lat["length"]:
            raise InputError("potential length differs from lattice length")
        if "potential" in lat and "wells" in lat:
            raise InputError("give either potential or wells, not both")
        for site, _ in lat.get("wells", []):
            if not 0 <= site < lat["length"]:
                raise InputError(f"well site {site} outside the lattice")
        inter = full["model"]["interaction"]
        if inter["kind"] != "none" and "g" not in inter:
            raise InputError("interaction needs a strength g")
        if inter["kind"] == "exponential" and "a" not in inter:
            raise InputError("exponential interaction needs a range a")
        return cls(full["model"], full["run"], full["output"], int(full["seed"]),
                   full.get("command"))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self):
        d = {"model": copy.deepcopy(self.model), "run": copy.deepcopy(self.run),
             "output": copy.deepcopy(self.output), "seed": self.seed}
        if self.command is not None:
            d["command"] = self.command
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def replace(self, **changes):
        d = self.to_dict()
        for k, v in changes.items():
            if k in ("output_directory",):
                d["output"]["directory"] = v
            else:
                d[k] = v
        return ExperimentConfig.from_dict(d)

    # -------------------------------------------------------------- model

    @property
    def statistics(self):
        return self.model["statistics"]

    @property
    def N(self):
        return int(self.model["N"])

    def lattice_spec(self) -> LatticeSpec:
        lat = self.model["lattice"]
        L, t = lat["length"], float(lat.get("hopping", 1.0))
        if "wells" in lat:
            return LatticeSpec.with_wells(L, t, [tuple(wl) for wl in lat["wells"]])
        pot = lat.get("potential")
        return LatticeSpec(L, t, tuple(pot) if pot is not None else None)

    def operators(self):
        spec = self.lattice_spec()
        h = shift_spectrum(build_lattice_one_body(spec), float(self.model["margin"]))
        w = build_pair_interaction(spec, self.model["interaction"])
        return h, w

    def rng(self):
        return np.random.default_rng(self.seed)

"""Experiment configuration: JSON schema, validation and model construction."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import jsonschema
import numpy as np

from .errors import ConfigError
from .models import build_channel, build_coupling, build_source
from .schedules import resolve_gamma_schedule, validate_gamma_schedule
from .errors import ScheduleError

SOURCE_KINDS = ["iid", "mixed", "uniform_message", "alternating_example", "truncated_countable"]
CHANNEL_KINDS = ["dmc", "identity", "mixed", "alternating_example"]
COUPLING_KINDS = ["deterministic_map", "independent", "per_letter_kernel"]
STAGES = [
    "validate", "spectrum", "simulate",
    "bound:feinstein", "bound:converse",
    "check:direct", "check:converse", "check:domination", "check:separation", "check:epsilon",
    "example:alternating", "example:mixed",
]

_SCHEDULE_SCHEMA = {
    "oneOf": [
        {"type": "string", "enum": ["inv_sqrt"]},
        {"type": "number", "exclusiveMinimum": 0},
        {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "constant": {"type": "number", "exclusiveMinimum": 0},
                "power": {"type": "number"},
                "values": {"type": "array", "items": {"type": "number"}},
            },
            "minProperties": 1,
            "maxProperties": 1,
        },
        {"type": "array", "items": {"type": "number"}, "minItems": 1},
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["source", "channel", "n_grid"],
    "additionalProperties": False,
    "properties": {
        "source": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": SOURCE_KINDS},
                "alphabet": {"type": "array"},
                "params": {"type": "object"},
            },
        },
        "channel": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": CHANNEL_KINDS},
                "x_alphabet": {"type": "array"},
                "y_alphabet": {"type": "array"},
                "params": {"type": "object"},
            },
        },
        "coupling": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": COUPLING_KINDS},
                "params": {"type": "object"},
            },
        },
        "input_candidates": {
            "oneOf": [
                {"const": "auto"},
                {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number", "minimum": 0}},
                },
            ]
        },
        "n_grid": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "integer", "minimum": 1},
        },
        "gamma": _SCHEDULE_SCHEMA,
        "c_schedule": {
            "oneOf": [
                {"type": "string", "enum": ["midpoint"]},
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "constant": {"type": "number"},
                        "values": {"type": "array", "items": {"type": "number"}},
                    },
                    "minProperties": 1,
                    "maxProperties": 1,
                },
            ]
        },
        "epsilon": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "mc": {
            "type": "object",
            "required": ["samples", "seed"],
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "codebooks": {"type": "integer", "minimum": 1},
            },
        },
        "caps": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enumeration": {"type": "integer", "minimum": 1},
                "atoms": {"type": "integer", "minimum": 1},
                "oracle": {"type": "integer", "minimum": 1},
                "ensemble": {"type": "integer", "minimum": 1},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "which": {
                    "type": "array",
                    "items": {"enum": ["entropy", "information"]},
                    "minItems": 1,
                },
                "engine": {"enum": ["auto", "exact", "monte_carlo"]},
                "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["exact_ensemble", "monte_carlo"]},
            },
        },
        "decoder": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"type": "string"},
                "table": {"type": "array"},
            },
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "domination_mode": {"enum": ["strict", "domination", "product"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "gap_tol": {"type": "number", "exclusiveMinimum": 0},
                "subsequences": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                },
            },
        },
        "stages": {"type": "array", "items": {"enum": STAGES}},
        "output_dir": {"type": "string"},
        "plots": {"type": "boolean"},
    },
}

_SWEEP_STAGES = {
    "bound:feinstein", "bound:converse", "simulate",
    "check:direct", "check:converse", "check:domination",
    "check:separation", "check:epsilon",
}


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def _semantic_violations(raw: dict) -> list:
    violations = []

    def check_weights(spec, pointer):
        params = spec.get("params", {})
        if spec.get("kind") == "mixed":
            weights = params.get("weights")
            if weights is None:
                violations.append((pointer + "/params/weights", "mixed kind needs weights"))
                return
            w = np.asarray(weights, dtype=float)
            if w.ndim != 1 or w.size < 1 or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                violations.append(
                    (pointer + "/params/weights",
                     f"weights must be positive and sum to 1, got {weights!r}")
                )
            comps = params.get("components")
            if not comps:
                violations.append((pointer + "/params/components", "mixed kind needs components"))
            elif weights is not None and len(comps) != len(weights):
                violations.append(
                    (pointer + "/params/components", "one component per weight required")
                )

    check_weights(raw.get("source", {}), "/source")
    check_weights(raw.get("channel", {}), "/channel")

    src = raw.get("source", {})
    if src.get("kind") == "iid" and "probs" not in src.get("params", {}):
        violations.append(("/source/params/probs", "iid kind needs probs"))
    if src.get("kind") == "uniform_message" and "messages" not in src.get("params", {}):
        violations.append(("/source/params/messages", "uniform_message kind needs messages"))
    if src.get("kind") == "truncated_countable":
        params = src.get("params", {})
        for key in ("p", "tail_budget"):
            if key not in params:
                violations.append((f"/source/params/{key}", f"truncated_countable needs {key}"))

    ch = raw.get("channel", {})
    if ch.get("kind") == "dmc":
        params = ch.get("params", {})
        if "matrix" not in params and "crossover" not in params:
            violations.append(("/channel/params", "dmc needs a matrix or a crossover"))
        elif "matrix" in params:
            m = np.asarray(params["matrix"], dtype=float)
            if m.ndim != 2 or np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
                violations.append(("/channel/params/matrix", "rows must be probability vectors"))

    stages = raw.get("stages", [])
    n_grid = raw.get("n_grid", [])
    needs_sweep = len(n_grid) >= 2 and any(s in _SWEEP_STAGES for s in stages)
    if needs_sweep:
        try:
            gammas = resolve_gamma_schedule(raw.get("gamma", "inv_sqrt"), n_grid)
            validate_gamma_schedule(n_grid, gammas, sweep=True)
        except ScheduleError as exc:
            violations.append(("/gamma", str(exc)))
    if len(n_grid) >= 2 and sorted(n_grid) != list(n_grid):
        violations.append(("/n_grid", "n_grid must be increasing"))

    engine = raw.get("spectrum", {}).get("engine")
    sim_mode = raw.get("simulate", {}).get("mode")
    wants_mc = engine == "monte_carlo" or sim_mode == "monte_carlo"
    if wants_mc and "mc" not in raw:
        violations.append(("/mc", "Monte Carlo requested but no mc.samples/mc.seed given"))
    return violations


@dataclass
class ExperimentConfig:
    """Validated experiment declaration; `raw` is the canonical source of truth."""

    raw: dict

    # -- identity -----------------------------------------------------------
    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    # -- accessors ----------------------------------------------------------
    @property
    def n_grid(self) -> list:
        return list(self.raw["n_grid"])

    @property
    def gamma_spec(self):
        spec = self.raw.get("gamma", "inv_sqrt")
        if isinstance(spec, (int, float)):
            return {"constant": float(spec)}
        return spec

    @property
    def c_spec(self):
        return self.raw.get("c_schedule", "midpoint")

    @property
    def epsilon(self) -> float:
        return float(self.raw.get("epsilon", 0.0))

    @property
    def seed(self):
        return self.raw.get("mc", {}).get("seed")

    @property
    def samples(self):
        return self.raw.get("mc", {}).get("samples")

    @property
    def codebooks(self):
        return self.raw.get("mc", {}).get("codebooks", 64)

    @property
    def engine(self) -> str:
        return self.raw.get("spectrum", {}).get("engine", "auto")

    @property
    def delta(self) -> float:
        return float(self.raw.get("spectrum", {}).get("delta", 1e-3))

    @property
    def which(self) -> list:
        return list(self.raw.get("spectrum", {}).get("which", ["entropy", "information"]))

    @property
    def stages(self) -> list:
        return list(self.raw.get("stages", []))

    @property
    def output_dir(self) -> str:
        return self.raw.get("output_dir", "out")

    @property
    def plots(self) -> bool:
        return bool(self.raw.get("plots", True))

    @property
    def check_options(self) -> dict:
        return dict(self.raw.get("check", {}))

    @property
    def input_candidates(self):
        return self.raw.get("input_candidates", "auto")

    @property
    def caps(self) -> dict:
        return dict(self.raw.get("caps", {}))

    # -- model construction ---------------------------------------------------
    def build_models(self):
        src_spec = self.raw["source"]
        source = build_source(
            src_spec["kind"], src_spec.get("alphabet"),
            **_source_params(src_spec),
        )
        ch_spec = self.raw["channel"]
        channel = build_channel(
            ch_spec["kind"], ch_spec.get("x_alphabet"), ch_spec.get("y_alphabet"),
            **ch_spec.get("params", {}),
        )
        cp_spec = self.raw.get(
            "coupling", {"kind": "deterministic_map", "params": {"map": "identity"}}
        )
        coupling = build_coupling(cp_spec["kind"], **_coupling_params(cp_spec))
        return source, channel, coupling


def _source_params(spec: dict) -> dict:
    params = dict(spec.get("params", {}))
    if spec["kind"] == "uniform_message":
        messages = params.get("messages")
        if isinstance(messages, dict) and "rate_nats" in messages:
            rate = float(messages["rate_nats"])
            params["messages"] = lambda n: max(1, round(math.exp(n * rate)))
    return params


def _coupling_params(spec: dict) -> dict:
    params = dict(spec.get("params", {}))
    if "table" in params:
        params["table"] = [
            (tuple(v), tuple(x)) for v, x in params["table"]
        ]
    return params


def parse_config(text) -> ExperimentConfig:
    """Parse and fully validate a config; reports every violation at once."""
    if isinstance(text, dict):
        raw = text
    else:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([("/", f"not valid JSON: {exc}")]) from exc
    validator = jsonschema.Draft202012Validator(SCHEMA)
    violations = [
        (_pointer(err.absolute_path), err.message)
        for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    ]
    if not violations:
        violations = _semantic_violations(raw)
    if violations:
        raise ConfigError(violations)
    return ExperimentConfig(raw)


def serialize(config: ExperimentConfig) -> str:
    return config.canonical_json()

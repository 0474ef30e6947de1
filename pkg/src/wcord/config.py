"""Run configuration: JSON schema, defaults, and validation.

Configs are strict: unknown keys are rejected and every error carries a JSON
pointer to the offending key. materialize() returns the effective config with
all defaults filled in, which commands echo to effective-config.json so any
run can be replayed exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ConfigError
from .train import DistillConfig


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


@dataclass
class Field:
    default: Any
    check: Callable[[Any], bool]
    describe: str
    nullable: bool = False


def _int_field(default, lo=None, describe="an integer"):
    return Field(default, lambda v: _is_int(v) and (lo is None or v >= lo), describe)


def _num_field(default, describe="a number", nullable=False):
    return Field(default, _is_num, describe, nullable)


SCHEMA: dict[str, Any] = {
    "objective": Field("wcord", lambda v: isinstance(v, str), "an objective name"),
    "seed": _int_field(0, describe="an integer seed"),
    "out_dir": Field(None, lambda v: isinstance(v, str), "a directory path", nullable=True),
    "data": {
        "train_csv": Field(None, lambda v: isinstance(v, str), "a path", nullable=True),
        "test_csv": Field(None, lambda v: isinstance(v, str), "a path", nullable=True),
        "generate": {
            "enabled": Field(False, lambda v: isinstance(v, bool), "a boolean"),
            "k": _int_field(10, lo=2),
            "n_per": _int_field(200, lo=1),
            "dim": _int_field(16, lo=2),
            "spread": _num_field(0.15),
            "seed": _int_field(1),
            "test_fraction": _num_field(0.5),
        },
        "two_view": {
            "enabled": Field(False, lambda v: isinstance(v, bool), "a boolean"),
            "d_a": _int_field(8, lo=1),
        },
    },
    "teacher": {
        "model": Field(None, lambda v: isinstance(v, str), "a model path", nullable=True),
    },
    "teacher_spec": {
        "hidden": Field([128, 128, 128], lambda v: isinstance(v, list) and all(_is_int(x) and x >= 1 for x in v), "a list of widths"),
        "embedding": _int_field(64, lo=1),
    },
    "student_spec": {
        "hidden": Field([32], lambda v: isinstance(v, list) and all(_is_int(x) and x >= 1 for x in v), "a list of widths"),
        "embedding": _int_field(16, lo=1),
    },
    "train": {
        "lr": _num_field(0.05),
        "epochs": _int_field(40, lo=0),
        "batch_size": _int_field(64, lo=1),
    },
    "distill": {
        "alpha": _num_field(1.0),
        "rho": _num_field(4.0),
        "lambda1": _num_field(0.8),
        "lambda2": _num_field(0.05),
        "m_negatives": _int_field(16, lo=1),
        "critic_hidden": _int_field(128, lo=1),
        "buffer_capacity": Field(None, lambda v: _is_int(v) and v >= 1, "an integer >= 1", nullable=True),
        "sinkhorn": {
            "epsilon": Field(None, lambda v: _is_num(v) and v > 0, "a positive number", nullable=True),
            "outer": _int_field(50, lo=1),
            "inner": _int_field(25, lo=1),
            "marginal_tol": _num_field(1e-6),
        },
    },
}


def materialize(user: Any, schema: dict[str, Any] = SCHEMA, pointer: str = "") -> dict:
    """Fill defaults, reject unknown keys, and type-check every value."""
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError(pointer or "/", "expected a JSON object")
    for key in user:
        if key not in schema:
            raise ConfigError(f"{pointer}/{key}", "unknown key")
    out = {}
    for key, spec in schema.items():
        child_pointer = f"{pointer}/{key}"
        if isinstance(spec, dict):
            out[key] = materialize(user.get(key), spec, child_pointer)
        else:
            if key in user:
                value = user[key]
                if value is None:
                    if not spec.nullable:
                        raise ConfigError(child_pointer, "null is not allowed")
                elif not spec.check(value):
                    raise ConfigError(child_pointer, f"expected {spec.describe}, got {value!r}")
                out[key] = value
            else:
                out[key] = spec.default
    return out


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("/", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON: {exc}") from None
    cfg = materialize(raw)
    env_seed = os.environ.get("WCORD_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError("/seed", f"WCORD_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def to_distill_config(cfg: dict) -> DistillConfig:
    d = cfg["distill"]
    t = cfg["train"]
    out = DistillConfig(
        alpha=float(d["alpha"]),
        rho=float(d["rho"]),
        lambda1=float(d["lambda1"]),
        lambda2=float(d["lambda2"]),
        m_negatives=d["m_negatives"],
        sinkhorn_epsilon=None if d["sinkhorn"]["epsilon"] is None else float(d["sinkhorn"]["epsilon"]),
        sinkhorn_outer=d["sinkhorn"]["outer"],
        sinkhorn_inner=d["sinkhorn"]["inner"],
        sinkhorn_tol=float(d["sinkhorn"]["marginal_tol"]),
        lr=float(t["lr"]),
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        seed=cfg["seed"],
        critic_hidden=d["critic_hidden"],
        buffer_capacity=d["buffer_capacity"],
    )
    try:
        out.validate()
    except Exception as exc:
        raise ConfigError("/distill", str(exc)) from None
    return out


def dump_effective(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")

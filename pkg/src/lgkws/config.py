"""Experiment configuration: one JSON document drives train/eval/infer.

Validation resolves defaults first and then reports every problem it can
find, not just the first, so a bad config surfaces all its mistakes in one
round trip. The resolved document (defaults filled in, overrides applied) is
echoed to the output directory by the CLI.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, fields

from .frontend import MfccConfig
from .model import MODEL_FACTORIES, LgBlockConfig, LgNetConfig
from .train import LOSS_MODES, TrainingConfig

DEFAULTS: dict = {
    "model": {
        "name": "lgnet3",
        "num_classes": None,  # resolved from the dataset
        "embedding_dim": 128,
        "input_channels": 40,
        "anchor_dim": None,  # resolved from the anchor store for ce_tt
        "dtype": "float32",
        "blocks": None,  # required for name == "custom"
    },
    "frontend": {f.name: f.default for f in fields(MfccConfig)},
    "data": {
        "root": None,
        "version": "v1",
        "duration": 16000,
        "include_silence": True,
        "silence_per_split": None,
        "cache_dir": None,
    },
    "anchors": {
        "path": None,
        "fallback_seed": None,
        "dim": 768,
        "granularity": "word",
    },
    "training": {f.name: f.default for f in fields(TrainingConfig)},
    "output_dir": "runs/default",
}


class ConfigError(ValueError):
    """Invalid configuration; carries the full list of problems."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = errors


def load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["config top level must be a JSON object"])
    return doc


def resolve_config(doc: dict) -> dict:
    """Merge `doc` over the defaults, error on unknown keys, validate values."""
    errors: list[str] = []
    resolved = copy.deepcopy(DEFAULTS)

    for section, value in doc.items():
        if section == "output_dir":
            resolved["output_dir"] = value
            continue
        if section not in resolved:
            errors.append(f"unknown section '{section}'")
            continue
        if not isinstance(value, dict):
            errors.append(f"section '{section}' must be an object")
            continue
        for key, v in value.items():
            if key not in resolved[section]:
                errors.append(f"unknown key '{section}.{key}'")
            else:
                resolved[section][key] = v

    errors.extend(_validate(resolved))
    if errors:
        raise ConfigError(errors)
    return resolved


def _validate(cfg: dict) -> list[str]:
    errors: list[str] = []

    m = cfg["model"]
    if m["name"] not in set(MODEL_FACTORIES) | {"custom"}:
        errors.append(
            f"model.name must be one of {sorted(MODEL_FACTORIES)} or 'custom', got '{m['name']}'"
        )
    if m["name"] == "custom" and not m["blocks"]:
        errors.append("model.name 'custom' requires model.blocks")
    if m["dtype"] not in ("float32", "float64"):
        errors.append(f"model.dtype must be float32 or float64, got '{m['dtype']}'")

    d = cfg["data"]
    if d["version"] not in ("v1", "v2", "synthetic"):
        errors.append(f"data.version must be v1, v2, or synthetic, got '{d['version']}'")
    if d["root"] is None:
        errors.append("data.root is required")
    if not isinstance(d["duration"], int) or d["duration"] < 400:
        errors.append(f"data.duration must be an integer >= 400 samples, got {d['duration']!r}")

    f = cfg["frontend"]
    if f["n_coeffs"] > f["n_mels"]:
        errors.append(
            f"frontend.n_coeffs ({f['n_coeffs']}) cannot exceed n_mels ({f['n_mels']})"
        )
    for key in ("frame_len", "hop", "n_fft", "n_mels", "n_coeffs", "sample_rate"):
        if not isinstance(f[key], int) or f[key] <= 0:
            errors.append(f"frontend.{key} must be a positive integer, got {f[key]!r}")
    if isinstance(f["fmax"], (int, float)) and isinstance(f["sample_rate"], int):
        if f["fmax"] > f["sample_rate"] / 2:
            errors.append(
                f"frontend.fmax ({f['fmax']}) exceeds the Nyquist rate "
                f"({f['sample_rate'] / 2})"
            )

    t = dict(cfg["training"])
    try:
        tc = TrainingConfig(**t)
        errors.extend(tc.validate())
    except TypeError as exc:
        errors.append(f"training section: {exc}")
        tc = None

    a = cfg["anchors"]
    if a["granularity"] not in ("word", "class"):
        errors.append(f"anchors.granularity must be 'word' or 'class', got '{a['granularity']}'")
    if tc is not None and tc.loss_mode == "ce_tt":
        if a["path"] is None and a["fallback_seed"] is None:
            errors.append(
                "loss mode ce_tt needs anchors.path or anchors.fallback_seed"
            )
    if a["fallback_seed"] is not None and (not isinstance(a["dim"], int) or a["dim"] <= 0):
        errors.append(f"anchors.dim must be a positive integer, got {a['dim']!r}")

    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        errors.append("output_dir must be a non-empty string")
    return errors


def mfcc_config(cfg: dict) -> MfccConfig:
    return MfccConfig(**cfg["frontend"])


def training_config(cfg: dict) -> TrainingConfig:
    tc = TrainingConfig(**cfg["training"])
    tc.anchor_granularity = cfg["anchors"]["granularity"]
    return tc


def model_config(cfg: dict, num_classes: int, anchor_dim: int | None) -> LgNetConfig:
    m = cfg["model"]
    n_classes = m["num_classes"] if m["num_classes"] is not None else num_classes
    a_dim = m["anchor_dim"] if m["anchor_dim"] is not None else anchor_dim
    if m["name"] in MODEL_FACTORIES:
        model_cfg = MODEL_FACTORIES[m["name"]](num_classes=n_classes, anchor_dim=a_dim)
        model_cfg.embedding_dim = m["embedding_dim"]
        model_cfg.input_channels = m["input_channels"]
        model_cfg.dtype = m["dtype"]
        if m["embedding_dim"] != 128 or m["input_channels"] != 40:
            model_cfg.validate()
        return model_cfg
    blocks = tuple(LgBlockConfig(**b) for b in m["blocks"])
    return LgNetConfig(
        blocks=blocks,
        input_channels=m["input_channels"],
        embedding_dim=m["embedding_dim"],
        num_classes=n_classes,
        anchor_dim=a_dim,
        dtype=m["dtype"],
    )

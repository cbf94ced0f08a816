"""Experiment configuration: flat ``key = value`` text with ``#`` comments.

Recognised keys (unknown keys are rejected)::

    seed                  global seed (u64); default for every *_seed key
    architecture          comma-separated layers, e.g. conv:8:3:1:1, relu, maxpool:2, flatten, linear:2
    input_shape           C,H,W
    concept_layer         index of the conv layer whose channels are concepts
    embedding_layer       index of the layer whose output is the embedding
    init_seed             weight initialisation seed
    epochs, batch_size, learning_rate, train_seed
    weights               weights file to start from
    finetune              true: keep training loaded weights for `epochs`; false: use them as is
    rule_epsilon          epsilon of the relevance rule
    dataset               synthetic | directory
    train_dir, test_dir   roots of <class_name>/<id>.pgm|ppm trees (dataset = directory)
    class_names           label-0 name, label-1 name
    synth_train_per_class, synth_test_per_class, synth_image_size, synth_seed
    augmentations         comma-separated rotate:<deg>[x<n>] / noise:<sigma>[x<n>], optional name= prefix
    noise_seed            base seed of the noise augmentation
    names_file            channel_id<TAB>name concept names
    out_dir               output directory
"""

from dataclasses import dataclass, fields, replace
from typing import Optional

from .augment import parse_augmentation
from .errors import ConfigError
from .network import (
    DEFAULT_ARCHITECTURE,
    DEFAULT_CONCEPT_LAYER,
    DEFAULT_EMBEDDING_LAYER,
    DEFAULT_INPUT_SHAPE,
    format_layer,
    parse_layer,
)

DEFAULT_AUGMENTATIONS = "rotate:180, noise:0.1, rotate:10"


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    architecture: tuple = DEFAULT_ARCHITECTURE
    input_shape: tuple = DEFAULT_INPUT_SHAPE
    concept_layer: int = DEFAULT_CONCEPT_LAYER
    embedding_layer: int = DEFAULT_EMBEDDING_LAYER
    init_seed: Optional[int] = None
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 0.05
    train_seed: Optional[int] = None
    weights: Optional[str] = None
    finetune: bool = False
    rule_epsilon: float = 1e-6
    dataset: str = "synthetic"
    train_dir: Optional[str] = None
    test_dir: Optional[str] = None
    class_names: tuple = ("vase", "teapot")
    synth_train_per_class: int = 200
    synth_test_per_class: int = 100
    synth_image_size: int = 32
    synth_seed: Optional[int] = None
    augmentations: str = DEFAULT_AUGMENTATIONS
    noise_seed: Optional[int] = None
    names_file: Optional[str] = None
    out_dir: str = "out"

    def seed_for(self, name):
        value = getattr(self, f"{name}_seed")
        return self.seed if value is None else value

    def augment_specs(self):
        specs = [parse_augmentation(a, self.seed_for("noise")) for a in self.augmentations.split(",") if a.strip()]
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate augmentation names {names}")
        if "original" in names:
            raise ConfigError("'original' is reserved for the unaugmented condition")
        return specs

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _parse_int(key, text):
    try:
        value = int(text, 0)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if key.endswith("seed") and not 0 <= value < 2 ** 64:
        raise ConfigError(f"{key}: seed must be an unsigned 64-bit integer")
    return value


def _parse_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_bool(key, text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")


def _parse_value(key, text):
    if key == "architecture":
        return tuple(parse_layer(p) for p in text.split(",") if p.strip())
    if key == "input_shape":
        return tuple(_parse_int(key, p.strip()) for p in text.split(","))
    if key == "class_names":
        names = tuple(p.strip() for p in text.split(","))
        if len(names) != 2 or not all(names):
            raise ConfigError("class_names: expected two non-empty names")
        return names
    if key == "finetune":
        return _parse_bool(key, text)
    if key in ("learning_rate", "rule_epsilon"):
        return _parse_float(key, text)
    if key == "dataset":
        if text not in ("synthetic", "directory"):
            raise ConfigError(f"dataset: expected 'synthetic' or 'directory', got {text!r}")
        return text
    if key in _INT_KEYS:
        return _parse_int(key, text)
    return text


_FIELDS = {f.name for f in fields(ExperimentConfig)}
_INT_KEYS = {
    "seed", "concept_layer", "embedding_layer", "init_seed", "epochs", "batch_size", "train_seed",
    "synth_train_per_class", "synth_test_per_class", "synth_image_size", "synth_seed", "noise_seed",
}


def parse_config(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, value)
    cfg = ExperimentConfig(**values)
    cfg.augment_specs()
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text, path)


def format_config(cfg):
    """Inverse of ``parse_config`` (defaults included)."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "architecture":
            value = ", ".join(format_layer(layer) for layer in value)
        elif f.name in ("input_shape", "class_names"):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"

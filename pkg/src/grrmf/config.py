"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, lists are comma-separated.
Unknown keys and malformed values raise :class:`ValidationError` naming
the offending key. Every key of :class:`ExperimentConfig` is accepted;
see ``configs/`` for examples.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass
from pathlib import Path

from grrmf.errors import ValidationError
from grrmf.generators import Family
from grrmf.optim import Loss

POLICIES = ("fixed", "learned")


@dataclass(frozen=True)
class Method:
    loss: Loss
    policy: str

    @classmethod
    def parse(cls, text: str) -> "Method":
        name, _, policy = text.strip().partition(":")
        try:
            loss = Loss(name.strip())
        except ValueError:
            raise ValidationError(f"methods: unknown loss {name.strip()!r}") from None
        policy = policy.strip() or "fixed"
        if policy not in POLICIES:
            raise ValidationError(f"methods: threshold policy must be one of {POLICIES}, got {policy!r}")
        if loss is Loss.LINEAR:
            # a linear model has no thresholds to learn
            policy = "fixed"
        return cls(loss, policy)

    @property
    def label(self) -> str:
        return self.loss.value if self.loss is Loss.LINEAR else f"{self.loss.value}:{self.policy}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run.

    ``ranks`` is the factorization rank per family for ``recover`` and
    ``complete`` (one value is broadcast), and the ``k`` sweep for
    ``recommend``.
    """

    source: str = "synthetic"
    families: tuple[str, ...] = ("upper_triangle",)
    n: int = 10
    bandwidth: int = 3
    n_levels: int = 5
    true_rank: int = 2
    matrix_path: str | None = None
    dataset_path: str | None = None
    validation_path: str | None = None
    rating_shift: int = -1
    dataset_levels: int = 4
    fractions: tuple[float, ...] = (0.2, 0.5, 0.8)
    methods: tuple[str, ...] = ("linear", "round:fixed", "round:learned", "multi_sigmoid:fixed",
                                "multi_sigmoid:learned")
    ranks: tuple[int, ...] = (2,)
    thresholds: tuple[float, ...] | None = None
    trials: int = 1
    seed: int = 0
    learning_rates: tuple[float, ...] = (0.01, 0.05, 0.1)
    l2_regs: tuple[float, ...] = (0.0, 1e-4, 1e-3)
    lr_decay: float = 1.0
    max_epochs: int = 1000
    patience: int | None = None
    sharpness: float = 1.0
    hinge_smoothing: float = 0.0
    test_fraction: float = 0.2
    val_fraction: float = 0.1
    holdout_fraction: float = 0.2
    k_max: int | None = None
    threads: int = 1
    out: str = "results"

    def __post_init__(self):
        if self.source not in ("synthetic", "file", "dataset"):
            raise ValidationError(f"source: expected synthetic, file or dataset, got {self.source!r}")
        for fam in self.families:
            try:
                Family(fam)
            except ValueError:
                raise ValidationError(f"families: unknown family {fam!r}") from None
        for key in ("matrix_path", "dataset_path", "validation_path"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ValidationError(f"{key}: file {path!r} does not exist")
        if self.source == "file" and self.matrix_path is None:
            raise ValidationError("matrix_path: required when source = file")
        if self.source == "dataset" and self.dataset_path is None:
            raise ValidationError("dataset_path: required when source = dataset")
        positive_ints = ("n", "trials", "max_epochs", "threads", "n_levels", "true_rank", "bandwidth")
        for key in positive_ints:
            if getattr(self, key) < 1:
                raise ValidationError(f"{key}: must be >= 1, got {getattr(self, key)}")
        if self.patience is not None and self.patience < 1:
            raise ValidationError("patience: must be >= 1")
        if not self.ranks or any(k < 1 for k in self.ranks):
            raise ValidationError("ranks: need at least one rank, all >= 1")
        if any(not 0 < f < 1 for f in self.fractions):
            raise ValidationError("fractions: every fraction must lie in (0, 1)")
        for key in ("test_fraction", "val_fraction", "holdout_fraction"):
            if not 0 < getattr(self, key) < 1:
                raise ValidationError(f"{key}: must lie in (0, 1)")
        if not self.learning_rates or any(lr <= 0 for lr in self.learning_rates):
            raise ValidationError("learning_rates: need positive values")
        if not self.l2_regs or any(r < 0 for r in self.l2_regs):
            raise ValidationError("l2_regs: need nonnegative values")
        if not 0 < self.lr_decay <= 1:
            raise ValidationError("lr_decay: must lie in (0, 1]")
        if self.k_max is not None and self.k_max < 0:
            raise ValidationError("k_max: must be >= 0")
        self.parsed_methods()

    def parsed_methods(self) -> list[Method]:
        if not self.methods:
            raise ValidationError("methods: need at least one method")
        out = []
        for text in self.methods:
            m = Method.parse(text)
            if m not in out:
                out.append(m)
        return out

    def rank_for(self, index: int) -> int:
        if len(self.ranks) == 1:
            return self.ranks[0]
        if len(self.ranks) != len(self.families):
            raise ValidationError("ranks: give one rank, or one per family")
        return self.ranks[index]

    def seeds(self) -> list[int]:
        return [self.seed + t for t in range(self.trials)]

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ExperimentConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ValidationError(f"{key}: unknown configuration key")
            kwargs[key] = _convert(key, raw, hints[key])
        return cls(**kwargs)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def as_lines(self) -> list[str]:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return lines


def _scalar(key: str, text: str, kind):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ValidationError(f"{key}: expected {kind.__name__}, got {text!r}") from None
    return text


def _convert(key: str, raw: str, hint):
    text = raw.strip()
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in ("none", ""):
            return None
        hint = next(a for a in args if a is not type(None))
    if typing.get_origin(hint) is tuple:
        kind = typing.get_args(hint)[0]
        items = [t.strip() for t in text.split(",") if t.strip()]
        return tuple(_scalar(key, t, kind) for t in items)
    return _scalar(key, text, hint)


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"{origin}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip()
        if key in mapping:
            raise ValidationError(f"{origin}:{lineno}: {key} given twice")
        mapping[key] = value.strip()
    return mapping


def load_config(path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Read a config file; ``overrides`` (raw strings) replace file values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror or exc}") from None
    mapping = parse_config_text(text, str(path))
    base = Path(path).resolve().parent
    for key in ("matrix_path", "dataset_path", "validation_path"):
        # relative data paths are taken relative to the config file
        if key in mapping and mapping[key].lower() != "none" and not Path(mapping[key]).is_absolute():
            candidate = base / mapping[key]
            if candidate.is_file() or not Path(mapping[key]).is_file():
                mapping[key] = str(candidate)
    mapping.update(overrides or {})
    return ExperimentConfig.from_mapping(mapping)

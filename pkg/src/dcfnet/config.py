"""Run configuration: compiled-in presets plus a flat ``section.key = value`` file format."""

from __future__ import annotations

import ast
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path


@dataclass
class ModelConfig:
    C: int = 32
    D: int = 16
    O: int = 2
    N: int = 2
    heads: int = 4
    hidden: int = 32
    n_fft: int = 256
    hop: int = 128
    drc_exponent: float = 0.5
    d_attn: int = 64
    attn_reduce: int = 4
    dilations: tuple = (1, 2, 3)
    extractor: str = "improved"  # improved | base | rnn
    se_reduction: int = 0  # 0 = single 1x1 conv gate, >0 = bottleneck ratio

    def validate(self) -> None:
        if self.D % self.heads:
            raise ValueError(f"D={self.D} not divisible by heads={self.heads}")
        if self.O < 0 or self.N < 1 or self.C < 1:
            raise ValueError("need O >= 0, N >= 1, C >= 1")
        if self.extractor not in ("improved", "base", "rnn"):
            raise ValueError(f"unknown extractor {self.extractor!r}")
        if self.drc_exponent <= 0 or self.drc_exponent > 1:
            raise ValueError("drc_exponent must lie in (0, 1]")

    @property
    def n_freq(self) -> int:
        return self.n_fft // 2 + 1


@dataclass
class TrainConfig:
    epochs: int = 30
    batch: int = 4
    lr: float = 5e-4
    warmup_epochs: float = 5.0
    wd: float = 0.01
    clip: float = 5.0
    seed: int = 0
    val_fraction: float = 0.1
    precision: str = "single"
    keep_checkpoints: int = 3  # most recent per-epoch checkpoints kept; 0 keeps all


@dataclass
class DataConfig:
    manifest: str = ""
    condition: str = "clean"
    duration: float = 1.0
    enroll_duration: float = 1.0
    n_speakers: int = 10
    rt60: float = 0.3
    noise_snr_db: float = 10.0


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = cls()
        for section in ("model", "train", "data"):
            for key, value in d.get(section, {}).items():
                cfg.set(f"{section}.{key}", value)
        return cfg

    def set(self, dotted: str, value) -> None:
        section, _, key = dotted.partition(".")
        target = getattr(self, section, None)
        names = {f.name: f for f in fields(target)} if dataclasses.is_dataclass(target) else {}
        if key not in names:
            raise KeyError(f"unknown config key {dotted!r}")
        current = getattr(target, key)
        if isinstance(value, str) and not isinstance(current, str):
            value = ast.literal_eval(value)
        if isinstance(current, tuple):
            value = tuple(value)
        elif isinstance(current, float) and isinstance(value, int):
            value = float(value)
        elif type(current) is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, type(current)):
            raise TypeError(f"{dotted} expects {type(current).__name__}, got {value!r}")
        setattr(target, key, value)

    def dumps(self) -> str:
        lines = []
        for section, values in self.to_dict().items():
            for key, value in values.items():
                lines.append(f"{section}.{key} = {value!r}")
        return "\n".join(lines) + "\n"


PRESETS = {
    "paper": dict(C=256, D=64, O=2, N=6, heads=4, hidden=128),
    "desk": dict(C=32, D=16, O=2, N=2, heads=4, hidden=32),
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg = RunConfig()
    for key, value in PRESETS[name].items():
        setattr(cfg.model, key, value)
    if name == "paper":
        cfg.train.epochs = 150
    return cfg


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``section.key = value`` lines (``#`` comments allowed) on top of ``base``."""
    cfg = base if base is not None else RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        value = value.strip()
        try:
            parsed = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            parsed = value
        cfg.set(key.strip(), parsed)
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)

"""Run configuration: every symbol the model and harness consume, in one place.

Configs round-trip through plain-text INI files with [data], [model] and
[train] sections (configparser). Named constructors give the full-scale
mirror of the benchmark setup and the micro profile used for tests and desk
experiments.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .scenes import GenProfile

VARIANTS = ("marginal-free", "marginal-aware", "joint-onestep", "jam")

_SECTIONS = {
    "data": ("n_a", "t_h", "t", "d_s", "d_p", "n_m", "n_p", "hz",
             "train_dataset", "val_dataset"),
    "model": ("variant", "scheme", "y_m", "k_m", "k_j", "y_j", "k", "e", "d_dim",
              "heads", "ffn_mult", "length_scale", "use_keypoints", "anchors_path"),
    "train": ("batch_size", "epochs", "base_lr", "lr_halve_every", "lr_halve_from",
              "grad_clip", "seed"),
}


@dataclass
class RunConfig:
    # data geometry
    n_a: int = 4
    t_h: int = 4
    t: int = 16
    d_s: int = 6
    d_p: int = 5
    n_m: int = 4
    n_p: int = 10
    hz: float = 2.0
    train_dataset: str = ""
    val_dataset: str = ""
    # decoder queries
    variant: str = "jam"
    scheme: str = "behavior8"       # stage-1 classification scheme
    y_m: int = 8                    # marginal categories
    k_m: int = 1                    # mode queries per category
    k_j: int = 6                    # joint mode queries
    y_j: int = 1                    # joint categories (always 1)
    k: int = 6                      # modes scored by the metrics
    # network
    e: int = 2
    d_dim: int = 32
    heads: int = 4
    ffn_mult: int = 2
    length_scale: float = 10.0      # meters per network unit on coordinate channels
    use_keypoints: bool = True
    anchors_path: str = ""
    # training
    batch_size: int = 32
    epochs: int = 15
    base_lr: float = 1e-4
    lr_halve_every: int = 2
    lr_halve_from: int = 20
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.y_j != 1:
            raise ValueError(f"y_j must be 1 for the joint stage, got {self.y_j}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant {self.variant!r} not in {VARIANTS}")
        if self.scheme == "behavior8" and self.y_m != 8:
            raise ValueError("behavior8 scheme requires y_m=8")
        if self.scheme == "none" and self.y_m != 1:
            raise ValueError("scheme 'none' requires y_m=1")
        if self.d_dim % self.heads:
            raise ValueError("d_dim must divide by heads")
        if self.d_s != 6 or self.d_p != 5:
            raise ValueError("this lab generates d_s=6 / d_p=5 scenes")

    @property
    def m1(self) -> int:
        """Stage-1 mode count per agent."""
        return self.y_m * self.k_m

    @property
    def profile(self) -> GenProfile:
        return GenProfile(hz=self.hz, t_h=self.t_h, t=self.t, n_a=self.n_a,
                          n_m=self.n_m, n_p=self.n_p)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


def micro_config(**overrides) -> RunConfig:
    """Small config for unit tests: 2 Hz, 8 s horizon, 32-dim features."""
    cfg = RunConfig(k_j=3, k=3)
    return cfg.replace(**overrides) if overrides else cfg


def desk_config(**overrides) -> RunConfig:
    """Experiment config: micro geometry, 6 joint modes, trainable in seconds."""
    cfg = RunConfig(k_j=6, k=6, base_lr=2e-3, epochs=15)
    return cfg.replace(**overrides) if overrides else cfg


def full_config(**overrides) -> RunConfig:
    """Mirror of the full-scale setup (built, not trained, at desk scale)."""
    cfg = RunConfig(n_a=34, t_h=11, t=80, n_m=8, n_p=20, hz=10.0,
                    scheme="anchor64", y_m=64, k_m=1, k_j=6, y_j=1, k=6,
                    e=6, d_dim=256, heads=8, ffn_mult=4,
                    batch_size=256, epochs=30, base_lr=1e-4)
    return cfg.replace(**overrides) if overrides else cfg


def save_config(path, cfg: RunConfig) -> None:
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {k: str(getattr(cfg, k)) for k in keys}
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path) -> RunConfig:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser()
    parser.read(path)
    kwargs = {}
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    for section, keys in _SECTIONS.items():
        for key in keys:
            if section not in parser or key not in parser[section]:
                continue
            raw = parser[section][key]
            tp = types[key]
            if tp in ("int", int):
                kwargs[key] = int(raw)
            elif tp in ("float", float):
                kwargs[key] = float(raw)
            elif tp in ("bool", bool):
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes")
            else:
                kwargs[key] = raw
    return RunConfig(**kwargs)

"""Pipeline configuration: plain-text key=value sections holding every
tunable constant (frame grid, strategy mixes, fusion thresholds, training
settings) so a bare default config runs the canonical settings."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

from .audio import FrameGridSpec
from .errors import ConfigError
from .forge import BOUNDARY_MIX, SPOOF_MIX, AugmentConfig, StrategyMix
from .fusion import FusionConfig
from .inference import DetectConfig
from .scorer import TrainConfig


@dataclass(frozen=True)
class PathsConfig:
    corpus_dir: str = "corpus"
    manifest: str = "corpus/manifest.txt"
    models_dir: str = "models"
    scores_dir: str = ""
    output_dir: str = "out"


@dataclass(frozen=True)
class ScorerTrainSettings:
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 30
    batch_clips: int = 64
    clips: int = 2000

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.momentum, self.epochs, self.batch_clips)


@dataclass(frozen=True)
class VaeSettings:
    latent_dim: int = 16
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 50
    batch: int = 128
    mc_samples: int = 16
    energy_target: float = 0.98
    max_frames: int = 60000


@dataclass(frozen=True)
class ForgeSettings:
    n_genuine: int = 110
    n_fake: int = 90
    n_partial: int = 100
    min_duration_s: float = 2.5
    max_duration_s: float = 6.0


@dataclass(frozen=True)
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    sample_rate: int = 16000
    grid: FrameGridSpec = field(default_factory=FrameGridSpec)
    mix_boundary: StrategyMix = BOUNDARY_MIX
    mix_spoof: StrategyMix = SPOOF_MIX
    detect: DetectConfig = field(default_factory=DetectConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    apply_vae: bool = True
    train: ScorerTrainSettings = field(default_factory=ScorerTrainSettings)
    vae: VaeSettings = field(default_factory=VaeSettings)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    forge: ForgeSettings = field(default_factory=ForgeSettings)
    seed: int = 1234
    jobs: int = 1


_SECTIONS = {
    "paths": [("corpus_dir", str), ("manifest", str), ("models_dir", str),
              ("scores_dir", str), ("output_dir", str)],
    "grid": [("sample_rate", int), ("hop_samples", int), ("window_samples", int),
             ("step_samples", int)],
    "mix_boundary": [("p1", float), ("p2", float), ("p3", float),
                     ("genuine_pick_prob", float)],
    "mix_spoof": [("p1", float), ("p2", float), ("p3", float),
                  ("genuine_pick_prob", float)],
    "detect": [("threshold", float), ("min_gap_frames", int)],
    "fusion": [("fake_proportion_ratio", float), ("frame_genuine_threshold", float),
               ("vae_min_boundaries", int), ("vae_max_boundaries", int),
               ("vae_fake_fraction", float), ("add_weight_accuracy", float),
               ("add_weight_f1star", float), ("apply_vae", bool)],
    "train": [("lr", float), ("momentum", float), ("epochs", int),
              ("batch_clips", int), ("clips", int)],
    "vae": [("latent_dim", int), ("lr", float), ("momentum", float), ("epochs", int),
            ("batch", int), ("mc_samples", int), ("energy_target", float),
            ("max_frames", int)],
    "augment": [("noise_prob", float), ("reverb_prob", float),
                ("snr_db_min", float), ("snr_db_max", float), ("reverb_len_s", float)],
    "forge": [("n_genuine", int), ("n_fake", int), ("n_partial", int),
              ("min_duration_s", float), ("max_duration_s", float)],
    "run": [("seed", int), ("jobs", int)],
}


def _flatten(cfg: PipelineConfig) -> dict:
    return {
        "paths": {f.name: getattr(cfg.paths, f.name) for f in fields(cfg.paths)},
        "grid": {"sample_rate": cfg.sample_rate, "hop_samples": cfg.grid.hop_samples,
                 "window_samples": cfg.grid.window_samples,
                 "step_samples": cfg.grid.step_samples},
        "mix_boundary": {f.name: getattr(cfg.mix_boundary, f.name)
                         for f in fields(cfg.mix_boundary)},
        "mix_spoof": {f.name: getattr(cfg.mix_spoof, f.name)
                      for f in fields(cfg.mix_spoof)},
        "detect": {"threshold": cfg.detect.threshold,
                   "min_gap_frames": cfg.detect.min_gap_frames},
        "fusion": {"fake_proportion_ratio": cfg.fusion.fake_proportion_ratio,
                   "frame_genuine_threshold": cfg.fusion.frame_genuine_threshold,
                   "vae_min_boundaries": cfg.fusion.vae_min_boundaries,
                   "vae_max_boundaries": cfg.fusion.vae_max_boundaries,
                   "vae_fake_fraction": cfg.fusion.vae_fake_fraction,
                   "add_weight_accuracy": cfg.fusion.add_weights[0],
                   "add_weight_f1star": cfg.fusion.add_weights[1],
                   "apply_vae": cfg.apply_vae},
        "train": {f.name: getattr(cfg.train, f.name) for f in fields(cfg.train)},
        "vae": {f.name: getattr(cfg.vae, f.name) for f in fields(cfg.vae)},
        "augment": {f.name: getattr(cfg.augment, f.name) for f in fields(cfg.augment)},
        "forge": {f.name: getattr(cfg.forge, f.name) for f in fields(cfg.forge)},
        "run": {"seed": cfg.seed, "jobs": cfg.jobs},
    }


def to_text(cfg: PipelineConfig) -> str:
    out = io.StringIO()
    for section, values in _flatten(cfg).items():
        out.write(f"[{section}]\n")
        for key, val in values.items():
            out.write(f"{key} = {val!r}\n" if isinstance(val, float) else f"{key} = {val}\n")
        out.write("\n")
    return out.getvalue()


def dump(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(to_text(cfg), encoding="utf-8")


def from_text(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}")
    raw = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        known = dict(_SECTIONS[section])
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            typ = known[key]
            try:
                if typ is bool:
                    raw[section][key] = parser.getboolean(section, key)
                else:
                    raw[section][key] = typ(value)
            except ValueError:
                raise ConfigError(f"bad value for [{section}] {key}: {value!r}")

    def get(section, key, default):
        return raw.get(section, {}).get(key, default)

    d = PipelineConfig()
    try:
        return PipelineConfig(
            paths=PathsConfig(*(get("paths", f.name, getattr(d.paths, f.name))
                                for f in fields(PathsConfig))),
            sample_rate=get("grid", "sample_rate", d.sample_rate),
            grid=FrameGridSpec(
                hop_samples=get("grid", "hop_samples", d.grid.hop_samples),
                window_samples=get("grid", "window_samples", d.grid.window_samples),
                step_samples=get("grid", "step_samples", d.grid.step_samples)),
            mix_boundary=StrategyMix(*(get("mix_boundary", k, getattr(d.mix_boundary, k))
                                       for k in ("p1", "p2", "p3", "genuine_pick_prob"))),
            mix_spoof=StrategyMix(*(get("mix_spoof", k, getattr(d.mix_spoof, k))
                                    for k in ("p1", "p2", "p3", "genuine_pick_prob"))),
            detect=DetectConfig(get("detect", "threshold", d.detect.threshold),
                                get("detect", "min_gap_frames", d.detect.min_gap_frames)),
            fusion=FusionConfig(
                get("fusion", "fake_proportion_ratio", d.fusion.fake_proportion_ratio),
                get("fusion", "frame_genuine_threshold", d.fusion.frame_genuine_threshold),
                get("fusion", "vae_min_boundaries", d.fusion.vae_min_boundaries),
                get("fusion", "vae_max_boundaries", d.fusion.vae_max_boundaries),
                get("fusion", "vae_fake_fraction", d.fusion.vae_fake_fraction),
                (get("fusion", "add_weight_accuracy", d.fusion.add_weights[0]),
                 get("fusion", "add_weight_f1star", d.fusion.add_weights[1]))),
            apply_vae=get("fusion", "apply_vae", d.apply_vae),
            train=ScorerTrainSettings(*(get("train", f.name, getattr(d.train, f.name))
                                        for f in fields(ScorerTrainSettings))),
            vae=VaeSettings(*(get("vae", f.name, getattr(d.vae, f.name))
                              for f in fields(VaeSettings))),
            augment=AugmentConfig(*(get("augment", f.name, getattr(d.augment, f.name))
                                    for f in fields(AugmentConfig))),
            forge=ForgeSettings(*(get("forge", f.name, getattr(d.forge, f.name))
                                  for f in fields(ForgeSettings))),
            seed=get("run", "seed", d.seed),
            jobs=get("run", "jobs", d.jobs),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}")


def from_file(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    return from_text(path.read_text(encoding="utf-8"))

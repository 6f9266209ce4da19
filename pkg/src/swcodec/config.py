"""Run configuration: one YAML file with model/train/mel/fsq/paths sections plus dotted overrides."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bottleneck import FSQSpec
from .dsp import MelConfig
from .encoder import ModelConfig
from .losses import LossWeights
from .training import TrainConfig

RUN_ROOT_ENV = "SWCODEC_RUN_ROOT"
SIDECAR = "config.yaml"


class ConfigError(ValueError):
    pass


def _build(cls, section: str, values: dict | None, base=None):
    values = dict(values or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    try:
        if base is not None:
            return dataclasses.replace(base, **values)
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from exc


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig.desk)
    mel: MelConfig = field(default_factory=MelConfig)
    fsq: FSQSpec = field(default_factory=FSQSpec)
    manifest: Path | None = None
    run_dir: Path = Path("runs/default")

    SECTIONS = ("model", "train", "mel", "fsq", "paths")

    @classmethod
    def from_dict(cls, data: dict | None, base_dir: Path | None = None) -> "RunConfig":
        data = dict(data or {})
        unknown = sorted(set(data) - set(cls.SECTIONS))
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
        for name in cls.SECTIONS:
            if data.get(name) is not None and not isinstance(data[name], dict):
                raise ConfigError(f"section '{name}' must be a mapping")
        model = _build(ModelConfig, "model", data.get("model"))
        train_values = dict(data.get("train") or {})
        if "weights" in train_values:
            train_values["weights"] = _build(LossWeights, "train.weights", train_values["weights"])
        train = _build(TrainConfig, "train", train_values, TrainConfig.desk())
        mel_values = {"n_mels": model.n_mels, **(data.get("mel") or {})}
        mel = _build(MelConfig, "mel", mel_values)
        if mel.n_mels != model.n_mels:
            raise ConfigError(f"mel.n_mels={mel.n_mels} disagrees with model.n_mels={model.n_mels}")
        fsq = _build(FSQSpec, "fsq", data.get("fsq"))
        paths = dict(data.get("paths") or {})
        unknown = sorted(set(paths) - {"manifest", "run_dir"})
        if unknown:
            raise ConfigError(f"unknown key(s) in 'paths': {', '.join(unknown)}")
        base_dir = Path(base_dir or ".")
        manifest = paths.get("manifest")
        if manifest is not None:
            manifest = Path(manifest)
            manifest = manifest if manifest.is_absolute() else base_dir / manifest
        run_dir = Path(paths.get("run_dir", "runs/default"))
        if not run_dir.is_absolute():
            run_dir = Path(os.environ.get(RUN_ROOT_ENV, base_dir)) / run_dir
        return cls(model, train, mel, fsq, manifest, run_dir)

    def to_dict(self) -> dict:
        def plain(obj):
            d = dataclasses.asdict(obj)
            return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

        return {
            "model": plain(self.model),
            "train": plain(self.train),
            "mel": plain(self.mel),
            "fsq": plain(self.fsq),
            "paths": {
                "manifest": None if self.manifest is None else str(self.manifest),
                "run_dir": str(self.run_dir),
            },
        }


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` (values parsed as YAML scalars or lists)."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in (data or {}).items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override key '{key}' needs a section, e.g. train.steps")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{item}': {exc}") from exc
        node = data
        for p in parts[:-1]:
            child = node.get(p)
            if child is None:
                child = node[p] = {}
            elif not isinstance(child, dict):
                raise ConfigError(f"override '{item}': '{p}' is not a section")
            else:
                child = node[p] = dict(child)
            node = child
        node[parts[-1]] = value
    return data


def load_config(path=None, overrides=()) -> RunConfig:
    data, base = {}, Path(".")
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base = path.parent
    return RunConfig.from_dict(apply_overrides(data, overrides), base)


def save_config(cfg: RunConfig, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))

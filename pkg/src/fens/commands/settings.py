"""
Pipeline configuration: nested dataclasses, JSON files and leaf flags.

Every leaf of the default config becomes a flag (`train.epochs` ->
`--train.epochs`, `hpo.max_resource` -> `--hpo.max-resource`). Layers merge
as defaults < config file < leaf flags < shortcut flags.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

from fens.bench.harness import BenchConfig
from fens.core.coerce import to_bool, to_float, to_float_pair, to_int, to_list
from fens.core.errors import ConfigError
from fens.data.preprocess import PreprocessSpec
from fens.ensemble.combos import MODES
from fens.ensemble.voting import VOTING
from fens.hpo.space import SearchSpace
from fens.training.config import TrainConfig
from fens.zoo.model import STRATEGIES
from fens.zoo.spec import FAMILIES, PRESETS

DEFAULT_HOME = "./fens-out"
SYNTH_SOURCE = "synth"


def resolve_home(flag: Optional[str] = None, configured: Optional[str] = None) -> Path:
    return Path(flag or configured or os.environ.get("FENS_HOME") or DEFAULT_HOME)


@dataclass(frozen=True)
class DatasetSettings:
    sources: Tuple[str, ...] = ()
    height: int = 32
    width: int = 32
    synth_classes: int = 28
    synth_per_class: int = 50
    train_fraction: float = 0.8
    selection_fraction: float = 0.1


@dataclass(frozen=True)
class ModelSettings:
    families: Tuple[str, ...] = FAMILIES
    strategies: Tuple[str, ...] = ("tfs",)
    preset: str = "micro"
    width: float = 1.0


@dataclass(frozen=True)
class HpoSettings:
    enabled: bool = False
    max_resource: int = 27
    eta: int = 3
    space: SearchSpace = field(default_factory=SearchSpace)


@dataclass(frozen=True)
class PretrainSettings:
    """
    Source checkpoints for hft/fft: `<checkpoints>/<family>.ckpt` when a
    directory is given, otherwise a short tfs run on synthetic glyphs.
    """
    checkpoints: str = ""
    classes: int = 10
    per_class: int = 30
    epochs: int = 3
    seed: int = 101


@dataclass(frozen=True)
class EnsembleSettings:
    modes: Tuple[str, ...] = MODES
    voting: Tuple[str, ...] = VOTING
    min_size: int = 1


@dataclass(frozen=True)
class BenchSettings:
    enabled: bool = False
    config: BenchConfig = field(default_factory=BenchConfig)


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    hpo: HpoSettings = field(default_factory=HpoSettings)
    cv_k: int = 5
    pretrain: PretrainSettings = field(default_factory=PretrainSettings)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    bench: BenchSettings = field(default_factory=BenchSettings)
    seed: int = 0
    jobs: int = 1
    out: str = ""

    @property
    def input_shape(self) -> Tuple[int, int, int]:
        return (self.preprocess.channels or 1, self.preprocess.height, self.preprocess.width)

    def validate(self, *, need_dataset: bool = False) -> "PipelineConfig":
        ds = self.dataset
        if need_dataset and not ds.sources:
            raise ConfigError("no dataset source given (use --data or dataset.sources)", details={"key": "dataset.sources"})
        for source in ds.sources:
            if source != SYNTH_SOURCE and not Path(source).exists():
                raise ConfigError(f"dataset source not found: {source}", details={"key": "dataset.sources"})
        if not 0.0 < ds.train_fraction < 1.0 or not 0.0 < ds.selection_fraction < 1.0:
            raise ConfigError("dataset fractions must lie in (0, 1)", details={"key": "dataset"})
        if not self.model.families or not self.model.strategies:
            raise ConfigError("at least one family and one strategy are required", details={"key": "model"})
        _check_members("model.families", self.model.families, FAMILIES)
        _check_members("model.strategies", self.model.strategies, STRATEGIES)
        _check_members("ensemble.modes", self.ensemble.modes, MODES)
        _check_members("ensemble.voting", self.ensemble.voting, VOTING)
        if self.model.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.model.preset!r}", details={"key": "model.preset"})
        if self.model.width <= 0:
            raise ConfigError("model.width must be > 0", details={"key": "model.width"})
        if self.cv_k < 2:
            raise ConfigError(f"cv_k must be >= 2, got {self.cv_k}", details={"key": "cv_k"})
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}", details={"key": "jobs"})
        if self.pretrain.checkpoints and not Path(self.pretrain.checkpoints).is_dir():
            raise ConfigError(f"pretrain checkpoint directory not found: {self.pretrain.checkpoints}",
                              details={"key": "pretrain.checkpoints"})
        if self.ensemble.min_size < 1:
            raise ConfigError("ensemble.min_size must be >= 1", details={"key": "ensemble.min_size"})
        self.preprocess.validate()
        self.hpo.space.validate()
        self.bench.config.validate()
        # strategy and source are filled in per matrix entry
        replace(self.train, strategy="tfs", source_checkpoint=None).validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dataset": _plain(self.dataset.__dict__),
            "preprocess": self.preprocess.to_dict(),
            "model": _plain(self.model.__dict__),
            "train": self.train.to_dict(),
            "hpo": {
                "enabled": self.hpo.enabled,
                "max_resource": self.hpo.max_resource,
                "eta": self.hpo.eta,
                "space": self.hpo.space.to_dict(),
            },
            "cv_k": self.cv_k,
            "pretrain": _plain(self.pretrain.__dict__),
            "ensemble": _plain(self.ensemble.__dict__),
            "bench": {"enabled": self.bench.enabled, "config": self.bench.config.to_dict()},
            "seed": self.seed,
            "jobs": self.jobs,
            "out": self.out,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PipelineConfig":
        merged = deep_merge(cls().to_dict(), raw)
        ds, model, hpo = merged["dataset"], merged["model"], merged["hpo"]
        try:
            return cls(
                dataset=DatasetSettings(
                    sources=tuple(to_list(ds["sources"], "dataset.sources")),
                    height=to_int(ds["height"], "dataset.height"),
                    width=to_int(ds["width"], "dataset.width"),
                    synth_classes=to_int(ds["synth_classes"], "dataset.synth_classes"),
                    synth_per_class=to_int(ds["synth_per_class"], "dataset.synth_per_class"),
                    train_fraction=to_float(ds["train_fraction"], "dataset.train_fraction"),
                    selection_fraction=to_float(ds["selection_fraction"], "dataset.selection_fraction"),
                ),
                preprocess=PreprocessSpec.from_dict(merged["preprocess"]),
                model=ModelSettings(
                    families=tuple(f.lower() for f in to_list(model["families"], "model.families")),
                    strategies=tuple(s.lower() for s in to_list(model["strategies"], "model.strategies")),
                    preset=str(model["preset"]),
                    width=to_float(model["width"], "model.width"),
                ),
                train=TrainConfig.from_dict(merged["train"]),
                hpo=HpoSettings(
                    enabled=to_bool(hpo["enabled"], "hpo.enabled"),
                    max_resource=to_int(hpo["max_resource"], "hpo.max_resource"),
                    eta=to_int(hpo["eta"], "hpo.eta"),
                    space=SearchSpace.from_dict(hpo["space"]),
                ),
                cv_k=to_int(merged["cv_k"], "cv_k"),
                pretrain=PretrainSettings(
                    checkpoints=str(merged["pretrain"]["checkpoints"] or ""),
                    classes=to_int(merged["pretrain"]["classes"], "pretrain.classes"),
                    per_class=to_int(merged["pretrain"]["per_class"], "pretrain.per_class"),
                    epochs=to_int(merged["pretrain"]["epochs"], "pretrain.epochs"),
                    seed=to_int(merged["pretrain"]["seed"], "pretrain.seed"),
                ),
                ensemble=EnsembleSettings(
                    modes=tuple(to_list(merged["ensemble"]["modes"], "ensemble.modes")),
                    voting=tuple(to_list(merged["ensemble"]["voting"], "ensemble.voting")),
                    min_size=to_int(merged["ensemble"]["min_size"], "ensemble.min_size"),
                ),
                bench=BenchSettings(
                    enabled=to_bool(merged["bench"]["enabled"], "bench.enabled"),
                    config=_bench_config(merged["bench"]["config"]),
                ),
                seed=to_int(merged["seed"], "seed"),
                jobs=to_int(merged["jobs"], "jobs"),
                out=str(merged["out"] or ""),
            )
        except TypeError as exc:
            raise ConfigError(f"invalid config value: {exc}") from exc


def _bench_config(raw: Mapping[str, Any]) -> BenchConfig:
    return BenchConfig(
        batch=to_int(raw["batch"], "bench.config.batch"),
        runs=to_int(raw["runs"], "bench.config.runs"),
        warmup=to_int(raw["warmup"], "bench.config.warmup"),
        memory=str(raw["memory"]),
        seed=to_int(raw["seed"], "bench.config.seed"),
    )


def _plain(values: Mapping[str, Any]) -> Dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in values.items()}


def _check_members(key: str, values: Tuple[str, ...], known: Tuple[str, ...]) -> None:
    unknown = [v for v in values if v not in known]
    if unknown:
        raise ConfigError(f"{key}: unknown {unknown}, expected any of {list(known)}", details={"key": key})


# ---------------------------
# Merging and flags
# ---------------------------

def deep_merge(base: Mapping[str, Any], overlay: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """
    Overlay wins; keys missing from base are rejected.
    """
    out = dict(base)
    for key, value in overlay.items():
        where = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}", details={"key": where})
        if isinstance(base[key], Mapping) and isinstance(value, Mapping):
            out[key] = deep_merge(base[key], value, prefix=f"{where}.")
        else:
            out[key] = value
    return out


def iter_leaves(tree: Mapping[str, Any], prefix: str = "") -> Iterator[Tuple[str, Any]]:
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            yield from iter_leaves(value, prefix=f"{path}.")
        else:
            yield path, value


def flag_name(path: str) -> str:
    return "--" + path.replace("_", "-")


def leaf_flags() -> List[Tuple[str, str, Any]]:
    """
    (flag, dotted key, default) for every leaf of the default config.
    """
    return [(flag_name(path), path, default) for path, default in iter_leaves(PipelineConfig().to_dict())]


def coerce_like(default: Any, text: str, key: str) -> Any:
    if isinstance(default, bool):
        return to_bool(text, key)
    if isinstance(default, int):
        return to_int(text, key)
    if isinstance(default, float):
        return to_float(text, key)
    if isinstance(default, list):
        if len(default) == 2 and all(isinstance(v, float) for v in default):
            return to_float_pair(text, key)
        if default and all(isinstance(v, int) and not isinstance(v, bool) for v in default):
            return [to_int(v, key) for v in to_list(text, key)]
        if default and all(isinstance(v, float) for v in default):
            return [to_float(v, key) for v in to_list(text, key)]
        return to_list(text, key)
    if default is None:
        if text.strip().lower() in ("", "none", "null"):
            return None
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return text
    return text


def set_path(tree: Dict[str, Any], path: str, value: Any) -> None:
    node = tree
    parts = path.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"config file not readable: {path}", details={"path": str(path)}) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}", details={"path": str(path)}) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object", details={"path": str(path)})
    return raw


def build_config(
    file_values: Mapping[str, Any],
    leaf_values: Mapping[str, str],
    shortcuts: Mapping[str, Any],
) -> PipelineConfig:
    """
    leaf_values maps dotted keys to raw flag text; shortcuts hold already
    typed values for --seed/--epochs/--jobs/--out/--data.
    """
    defaults = dict(iter_leaves(PipelineConfig().to_dict()))
    overlay: Dict[str, Any] = {}
    for path, text in leaf_values.items():
        set_path(overlay, path, coerce_like(defaults[path], text, path))
    if shortcuts.get("seed") is not None:
        set_path(overlay, "seed", shortcuts["seed"])
        set_path(overlay, "train.seed", shortcuts["seed"])
    if shortcuts.get("epochs") is not None:
        set_path(overlay, "train.epochs", shortcuts["epochs"])
    if shortcuts.get("jobs") is not None:
        set_path(overlay, "jobs", shortcuts["jobs"])
    if shortcuts.get("out"):
        set_path(overlay, "out", shortcuts["out"])
    if shortcuts.get("data"):
        set_path(overlay, "dataset.sources", list(shortcuts["data"]))
    merged = deep_merge(deep_merge(PipelineConfig().to_dict(), file_values), overlay)
    return PipelineConfig.from_dict(merged)

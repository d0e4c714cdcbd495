"""Run configuration: flat ``key = value`` files with dotted sections.

Grammar: one ``key = value`` assignment per line; blank lines and lines
starting with ``#`` are ignored; values holding several numbers are
space-separated.  CLI ``--set key=value`` overrides file keys.  The config
digest (sha256 of the sorted canonical assignments) and the root seed are
embedded in every JSON artifact so reruns can be tied to their inputs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .bounds import ParameterGrid
from .density import SmoothingSpec
from .errors import ConfigError
from .transforms import compose, make_part, param_map

_KEY_RE = re.compile(r"^[a-z_]+(\.[a-z0-9_]+)*$")

_TRANSFORM_FIELDS = {"name", "dist", "dist_params", "range"}
_SCALAR_KEYS = {
    "dataset.images": str,
    "dataset.labels": str,
    "dataset.limit": int,
    "model.path": str,
    "model.hidden": int,
    "smoothing.sigma": float,
    "bounds.n_samples": int,
    "bounds.grid_points": int,
    "bounds.path": str,
    "bounds.image_index": int,
    "bounds.batch_size": int,
    "predict.n_max": int,
    "predict.alpha_star": float,
    "region.resolution": int,
    "region.box": "floats",
    "heatmap.resolution": int,
    "train.epochs": int,
    "train.learning_rate": float,
    "train.momentum": float,
    "train.batch_size": int,
    "train.augment": "bool",
    "run.seed": int,
    "run.out_dir": str,
    "run.workers": int,
}


def parse_assignments(text: str) -> dict:
    """Parse the flat key-value grammar into a string-to-string dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"line {lineno}: malformed key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_digest(assignments: dict) -> str:
    canon = "\n".join(f"{k} = {assignments[k]}" for k in sorted(assignments))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class TransformEntry:
    name: str
    dist: str
    dist_params: tuple
    range: tuple


@dataclass(frozen=True)
class RunConfig:
    assignments: dict
    digest: str
    transforms: tuple
    dataset_images: str | None
    dataset_labels: str | None
    dataset_limit: int | None
    model_path: str | None
    model_hidden: int
    sigma: float
    bounds_n_samples: int
    bounds_grid_points: int
    bounds_path: str
    bounds_image_index: int
    bounds_batch_size: int
    predict_n_max: int
    predict_alpha_star: float
    region_resolution: int
    region_box: tuple | None
    heatmap_resolution: int
    train_epochs: int
    train_learning_rate: float
    train_momentum: float
    train_batch_size: int
    train_augment: bool
    seed: int
    out_dir: str
    workers: int

    # -- derived builders ----------------------------------------------------

    def build_chain(self):
        return compose([e.name for e in self.transforms])

    def build_maps(self) -> tuple:
        maps = []
        for e in self.transforms:
            count = make_part(e.name).dim
            maps.extend(param_map(e.dist, e.dist_params) for _ in range(count))
        return tuple(maps)

    def build_spec(self) -> SmoothingSpec:
        return SmoothingSpec(transform=self.build_chain(), maps=self.build_maps(),
                             sigma=self.sigma, n_samples=self.bounds_n_samples)

    def attack_ranges(self) -> list:
        ranges = []
        for e in self.transforms:
            count = make_part(e.name).dim
            ranges.extend([e.range] * count)
        return ranges

    def build_grid(self) -> ParameterGrid:
        chain = self.build_chain()
        return ParameterGrid.from_ranges(self.attack_ranges(), chain.identity,
                                         self.bounds_grid_points)

    def region_box_or_default(self) -> list:
        if self.region_box is not None:
            vals = self.region_box
            box = [(vals[2 * i], vals[2 * i + 1]) for i in range(len(vals) // 2)]
        else:
            box = self.attack_ranges()
        d = self.build_chain().d
        if len(box) != d:
            raise ConfigError(f"region box must list {d} (lo, hi) pairs")
        return box

    def spec_digest(self) -> str:
        keys = [k for k in self.assignments
                if k.startswith("transform.") or k in ("smoothing.sigma", "bounds.n_samples")]
        canon = "\n".join(f"{k} = {self.assignments[k]}" for k in sorted(keys))
        return hashlib.sha256(canon.encode()).hexdigest()


def _parse_floats(value: str, key: str) -> tuple:
    try:
        return tuple(float(tok) for tok in value.split())
    except ValueError:
        raise ConfigError(f"{key}: expected space-separated numbers, got {value!r}") from None


def _parse_scalar(key: str, value: str):
    kind = _SCALAR_KEYS[key]
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind == "bool":
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
        if kind == "floats":
            return _parse_floats(value, key)
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {kind}") from None


def _collect_transforms(assignments: dict) -> tuple:
    indices = set()
    for key in assignments:
        parts = key.split(".")
        if parts[0] == "transform":
            if len(parts) != 3 or parts[2] not in _TRANSFORM_FIELDS:
                raise ConfigError(f"unknown transform key {key!r}")
            if not parts[1].isdigit():
                raise ConfigError(f"transform index must be numeric in {key!r}")
            indices.add(int(parts[1]))
    if not indices:
        raise ConfigError("config declares no transform chain")
    if sorted(indices) != list(range(1, len(indices) + 1)):
        raise ConfigError("transform indices must be 1..k without gaps")
    entries = []
    for i in sorted(indices):
        prefix = f"transform.{i}."
        try:
            name = assignments[prefix + "name"].lower()
            dist = assignments[prefix + "dist"].lower()
            dist_params = _parse_floats(assignments[prefix + "dist_params"], prefix + "dist_params")
            rng = _parse_floats(assignments[prefix + "range"], prefix + "range")
        except KeyError as exc:
            raise ConfigError(f"transform.{i} is missing field {exc}") from None
        if len(rng) != 2 or rng[0] >= rng[1]:
            raise ConfigError(f"transform.{i}.range must be 'lo hi' with lo < hi")
        make_part(name)                      # validates the name
        param_map(dist, dist_params)         # validates the distribution
        entries.append(TransformEntry(name=name, dist=dist,
                                      dist_params=dist_params, range=(rng[0], rng[1])))
    return tuple(entries)


def load_config(path: str, overrides=()) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        assignments = parse_assignments(fh.read())
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        assignments[key.strip()] = value.strip()
    return build_run_config(assignments)


def build_run_config(assignments: dict) -> RunConfig:
    for key in assignments:
        if key.startswith("transform."):
            continue
        if key not in _SCALAR_KEYS:
            raise ConfigError(f"unknown config key {key!r}")

    transforms = _collect_transforms(assignments)

    def get(key, default=None, required=False):
        if key in assignments:
            return _parse_scalar(key, assignments[key])
        if required:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    out_dir = get("run.out_dir", "out")
    cfg = RunConfig(
        assignments=dict(assignments),
        digest=config_digest(assignments),
        transforms=transforms,
        dataset_images=get("dataset.images"),
        dataset_labels=get("dataset.labels"),
        dataset_limit=get("dataset.limit"),
        model_path=get("model.path"),
        model_hidden=get("model.hidden", 128),
        sigma=get("smoothing.sigma", 0.05),
        bounds_n_samples=get("bounds.n_samples", 10_000),
        bounds_grid_points=get("bounds.grid_points", 17),
        bounds_path=get("bounds.path", f"{out_dir}/bounds.json"),
        bounds_image_index=get("bounds.image_index", 0),
        bounds_batch_size=get("bounds.batch_size", 4096),
        predict_n_max=get("predict.n_max", 1000),
        predict_alpha_star=get("predict.alpha_star", 1e-3),
        region_resolution=get("region.resolution", 17),
        region_box=get("region.box"),
        heatmap_resolution=get("heatmap.resolution", 11),
        train_epochs=get("train.epochs", 2),
        train_learning_rate=get("train.learning_rate", 1e-3),
        train_momentum=get("train.momentum", 0.95),
        train_batch_size=get("train.batch_size", 32),
        train_augment=get("train.augment", True),
        seed=get("run.seed", 0),
        out_dir=out_dir,
        workers=get("run.workers", 1),
    )
    if cfg.sigma < 0:
        raise ConfigError("smoothing.sigma must be non-negative")
    if cfg.bounds_n_samples < 1000:
        raise ConfigError("bounds.n_samples must be at least 1000")
    if cfg.bounds_grid_points < 2:
        raise ConfigError("bounds.grid_points must be at least 2")
    if not 0 < cfg.predict_alpha_star < 1:
        raise ConfigError("predict.alpha_star must lie in (0, 1)")
    if cfg.predict_n_max < 1:
        raise ConfigError("predict.n_max must be positive")
    if cfg.workers < 1:
        raise ConfigError("run.workers must be positive")
    cfg.build_spec()          # validates chain/map compatibility eagerly
    cfg.region_box_or_default()
    return cfg

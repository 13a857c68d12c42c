"""Flat ``section.key = value`` run configuration with strict parsing.

Lines starting with ``#`` are comments. Every key must appear in
:data:`SCHEMA`; values are converted to the declared type. Command-line
overrides (``--set section.key=value``) are applied after the file and win.
"""
from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

# type tags: int, float, str, ints, floats, strs (comma separated), optional variants end in "?"
SCHEMA = {
    "run.seed": ("int", 0),
    "paths.dataset": ("str?", None),
    "paths.checkpoint": ("str?", None),
    "paths.output": ("str?", None),
    "phantom.height": ("int", 64),
    "phantom.width": ("int", 64),
    "phantom.texture_scale": ("float", 3.0),
    "phantom.ellipse_margin": ("float", 0.08),
    "phantom.seed": ("int?", None),
    "lesion.shape": ("str", "sharp_square"),
    "lesion.size_range": ("floats", (4, 8)),
    "lesion.intensity_delta_range": ("floats", (0.25, 0.45)),
    "lesion.blur_sigma": ("float", 1.5),
    "lesion.count_range": ("ints", (1, 3)),
    "data.train": ("int", 2000),
    "data.val": ("int", 500),
    "data.test": ("int", 500),
    "model.conv_filters": ("ints", (8, 16, 32, 64, 64)),
    "model.pool_after": ("ints", (1, 2, 5)),
    "model.pool_kernels": ("ints", (3, 3, 4)),
    "model.pool_strides": ("ints", (1, 2, 2)),
    "train.learning_rate": ("float", 1e-3),
    "train.weight_decay": ("float", 1e-4),
    "train.batch_size": ("int", 32),
    "train.patience": ("int", 7),
    "train.max_epochs": ("int", 30),
    "train.seed": ("int?", None),
    "viz.layer": ("int", 1),
    "viz.channel": ("int", 0),
    "viz.lambda": ("float", 10.0),
    "viz.iterations": ("int?", None),
    "viz.step_size": ("float", 0.05),
    "viz.seed": ("int?", None),
    "viz.transform_every": ("int", 50),
    "viz.transforms": ("strs", ()),
    "viz.init_range": ("floats", (0.4, 0.6)),
    "viz.penalty_on": ("str", "input"),
    "viz.baseline_samples": ("int", 500),
    "jitter.brightness_range": ("floats", (0.8, 1.2)),
    "rotation.max_degrees": ("float", 15.0),
    "rotation.interpolation": ("str", "bilinear"),
    "translation.max_shift": ("int", 4),
    "resize.size": ("ints?", None),
    "resize.scale": ("float", 1.2),
    "resize.interpolation": ("str", "bilinear"),
    "random_resized_crop.scale_range": ("floats", (0.5, 1.0)),
    "random_resized_crop.ratio_range": ("floats", (0.75, 4 / 3)),
    "random_resized_crop.interpolation": ("str", "bilinear"),
    "sbf.window": ("int", 5),
    "sbf.sigma_s": ("float", 1.5),
    "sbf.sigma_r": ("float", 0.15),
    "sbf.threshold": ("float", 0.25),
    "tv_denoise.weight": ("float", 0.1),
    "tv_denoise.steps": ("int", 10),
    "grid.layers": ("ints", (1, 2, 3, 4, 5)),
    "grid.channels_per_layer": ("int", 3),
    "grid.seed": ("int?", None),
}

_SCALARS = {"int": int, "float": float, "str": str}


def convert(key: str, raw: str):
    kind, _ = SCHEMA[key]
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    raw = raw.strip()
    if optional and raw.lower() in ("", "none"):
        return None
    try:
        if kind in _SCALARS:
            if kind == "str" and not raw:
                raise ValueError("empty value")
            return _SCALARS[kind](raw)
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if kind == "strs":
            return tuple(items)
        return tuple((int if kind == "ints" else float)(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind} ({exc})") from exc


def parse_lines(lines, source: str = "<config>") -> dict:
    values = {}
    for n, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{n}: expected 'section.key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in text.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r}")
        values[key] = convert(key, raw)
    return values


class RunConfig:
    """Typed view over parsed settings, with builders for the domain specs."""

    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        self.values.update(values or {})

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        values = {}
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc}") from exc
            values = parse_lines(text.splitlines(), str(path))
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            key, raw = (s.strip() for s in item.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r} in override")
            values[key] = convert(key, raw)
        return cls(values)

    def __getitem__(self, key):
        return self.values[key]

    def seed_for(self, section: str) -> int:
        v = self.values.get(f"{section}.seed")
        return self.values["run.seed"] if v is None else v

    def path(self, key: str, required: bool = True):
        v = self.values[f"paths.{key}"]
        if v is None:
            if required:
                raise ConfigError(f"paths.{key} is required for this command")
            return None
        return Path(v)

    def phantom_spec(self):
        from .synthdata import PhantomSpec
        return PhantomSpec(self["phantom.height"], self["phantom.width"], self.seed_for("phantom"),
                           self["phantom.texture_scale"], self["phantom.ellipse_margin"])

    def lesion_spec(self):
        from .synthdata import LesionSpec
        size = self["lesion.size_range"]
        if len(size) != 2:
            raise ConfigError(f"lesion.size_range needs two values, got {size}")
        if self["lesion.shape"] == "sharp_square":
            size = tuple(int(round(s)) for s in size)
        return LesionSpec(self["lesion.shape"], size, self["lesion.intensity_delta_range"],
                          self["lesion.blur_sigma"], self["lesion.count_range"])

    def sizes(self) -> tuple:
        return self["data.train"], self["data.val"], self["data.test"]

    def model_spec(self, height: int, width: int):
        from .errors import ShapeError
        from .model import ModelSpec
        try:
            return ModelSpec((1, height, width), self["model.conv_filters"], 3, 1, self["model.pool_after"],
                             self["model.pool_kernels"], self["model.pool_strides"])
        except ShapeError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def train_config(self):
        from .training import TrainConfig
        return TrainConfig(self["train.learning_rate"], self["train.weight_decay"], self["train.batch_size"],
                           self["train.patience"], self["train.max_epochs"], self.seed_for("train"))

    def transform_specs(self) -> tuple:
        from .featureviz.transforms import DEFAULTS, TransformSpec
        specs = []
        for kind in self["viz.transforms"]:
            if kind not in DEFAULTS:
                raise ConfigError(f"viz.transforms: unknown transform {kind!r}; expected one of "
                                  f"{tuple(DEFAULTS)}")
            params = {name: self.values[f"{kind}.{name}"] for name in DEFAULTS[kind]}
            specs.append(TransformSpec(kind, params))
        return tuple(specs)

    def viz_config(self, layer=None, channel=None):
        from .featureviz import VizConfig
        return VizConfig(
            layer=self["viz.layer"] if layer is None else layer,
            channel=self["viz.channel"] if channel is None else channel,
            lam=self["viz.lambda"], iterations=self["viz.iterations"], step_size=self["viz.step_size"],
            seed=self.seed_for("viz"), transform_every=self["viz.transform_every"],
            transforms=self.transform_specs(), init_range=self["viz.init_range"],
            penalty_on=self["viz.penalty_on"],
        )

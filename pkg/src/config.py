"""Run configuration: the documented key table, YAML loading and overrides.

Keys are dotted names such as ``track.min_hits``. A config file may write them
flat or nested; both forms flatten to the same key. Precedence, highest first:
``--set KEY=VALUE``, ``--config FILE``, the file named by ``FUSEMOT_CONFIG``,
then the defaults below.
"""

import logging
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .association import AssociationGates, CostMode
from .state_estimation import FilterNoise2D, FilterNoise3D
from .tracker import TrackerConfig
from .validation import validate_override


logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "FUSEMOT_CONFIG"


class ConfigError(ValueError):
    """Unknown key, wrong type or out-of-range value."""


@dataclass(frozen=True)
class KeySpec:
    """One configuration key with its type, default and allowed range."""

    name: str
    type: type
    default: Any
    description: str
    choices: tuple[str, ...] | None = None
    minimum: float | None = None
    maximum: float | None = None

    def coerce(self, value: Any, source: str) -> Any:
        """Convert a raw value to this key's type and check its range.

        Raises:
            ConfigError: The value has the wrong type or is out of range
        """
        if self.type is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{source}: {self.name} must be true or false, got {value!r}")
        elif self.type is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{source}: {self.name} must be an integer, got {value!r}")
        elif self.type is float:
            if isinstance(value, bool) or not isinstance(value, int | float):
                raise ConfigError(f"{source}: {self.name} must be a number, got {value!r}")
            value = float(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{source}: {self.name} must be a string, got {value!r}")

        if self.choices is not None and value not in self.choices:
            raise ConfigError(f"{source}: {self.name} must be one of {', '.join(self.choices)}, got '{value}'")
        if self.minimum is not None and value < self.minimum:
            raise ConfigError(f"{source}: {self.name} must be >= {self.minimum}, got {value}")
        if self.maximum is not None and value > self.maximum:
            raise ConfigError(f"{source}: {self.name} must be <= {self.maximum}, got {value}")
        return value


CONFIG_KEYS: tuple[KeySpec, ...] = (
    KeySpec("fusion.iou_threshold", float, 0.5, "2D IoU a 3D projection must exceed to fuse", minimum=0.0, maximum=1.0),
    KeySpec("assoc.iou3d_gate", float, 0.1, "minimum 3D IoU for iou-branch matches", minimum=0.0, maximum=1.0),
    KeySpec("assoc.dist_gate_m", float, 4.0, "maximum center distance for distance-branch matches (m)", minimum=0.0),
    KeySpec("assoc.iou2d_gate", float, 0.3, "minimum 2D IoU for 2D and merge matches", minimum=0.0, maximum=1.0),
    KeySpec("assoc.cost_mode", str, "fused", "3D affinity", choices=("fused", "iou", "distance")),
    KeySpec("track.min_hits", int, 3, "consecutive matches confirming a tentative track", minimum=1),
    KeySpec("track.miss_to_reappear", int, 2, "misses before a confirmed track turns reappeared", minimum=0),
    KeySpec("track.max_age", int, 30, "misses before a reappeared track dies", minimum=0),
    KeySpec("track.2d_motion", str, "kalman", "motion model of 2D-only tracks", choices=("kalman", "snap")),
    KeySpec("track.use_camera", bool, True, "use camera detections (false runs the LiDAR-only cascade)"),
    KeySpec("output.coasting", bool, False, "emit unmatched confirmed/reappeared tracks with predicted boxes"),
    KeySpec("filter.pos_var", float, 1.0, "initial position variance (m^2)", minimum=1e-12),
    KeySpec("filter.yaw_var", float, 0.1, "initial yaw variance (rad^2)", minimum=1e-12),
    KeySpec("filter.dim_var", float, 0.01, "initial dimension variance (m^2)", minimum=1e-12),
    KeySpec("filter.vel_var", float, 100.0, "initial velocity variance", minimum=1e-12),
    KeySpec("filter.process_noise", float, 0.01, "process noise on kinematic terms", minimum=0.0),
    KeySpec("filter.measurement_noise", float, 0.1, "3D measurement noise", minimum=1e-12),
    KeySpec("filter2d.box_var", float, 10.0, "initial 2D box variance (px^2)", minimum=1e-12),
    KeySpec("filter2d.vel_var", float, 1000.0, "initial 2D velocity variance", minimum=1e-12),
    KeySpec("filter2d.process_noise", float, 1.0, "2D process noise", minimum=0.0),
    KeySpec("filter2d.measurement_noise", float, 1.0, "2D measurement noise", minimum=1e-12),
    KeySpec("input.frame", str, "camera", "coordinate frame of 3D detections", choices=("camera", "lidar")),
    KeySpec("input.image_width", int, 1242, "image width (px)", minimum=1),
    KeySpec("input.image_height", int, 375, "image height (px)", minimum=1),
    KeySpec("input.category", str, "Car", "object category tracked and evaluated"),
    KeySpec("eval.iou_gate", float, 0.5, "minimum 2D IoU for an evaluation match", minimum=0.0, maximum=1.0),
)

KEY_INDEX: dict[str, KeySpec] = {spec.name: spec for spec in CONFIG_KEYS}


def flatten(mapping: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Flatten nested mappings into dotted keys.

    ``{"track": {"min_hits": 1}}`` and ``{"track.min_hits": 1}`` give the same result.
    """
    flat: dict[str, Any] = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


class RunConfig:
    """Resolved configuration values for one run."""

    def __init__(self, values: Mapping[str, Any] | None = None):
        self._values = {spec.name: spec.default for spec in CONFIG_KEYS}
        self._sources = {spec.name: "default" for spec in CONFIG_KEYS}
        if values:
            self.update(values, "arguments")

    def update(self, values: Mapping[str, Any], source: str) -> None:
        """Apply values over the current ones.

        Raises:
            ConfigError: A key is unknown or a value is invalid
        """
        for name, value in flatten(values).items():
            spec = KEY_INDEX.get(name)
            if spec is None:
                raise ConfigError(f"{source}: unknown config key '{name}'")
            self._values[name] = spec.coerce(value, source)
            self._sources[name] = source

    def __getitem__(self, name: str) -> Any:
        if name not in self._values:
            raise ConfigError(f"unknown config key '{name}'")
        return self._values[name]

    def source(self, name: str) -> str:
        return self._sources[name]

    def as_dict(self) -> dict[str, Any]:
        return dict(self._values)

    @property
    def image_size(self) -> tuple[int, int]:
        return (self["input.image_width"], self["input.image_height"])

    def tracker_config(self) -> TrackerConfig:
        """Assemble the tracker's parameters from the resolved keys."""
        try:
            return TrackerConfig(
                min_hits=self["track.min_hits"],
                miss_to_reappear=self["track.miss_to_reappear"],
                max_age=self["track.max_age"],
                gates=AssociationGates(iou3d=self["assoc.iou3d_gate"], dist_m=self["assoc.dist_gate_m"]),
                iou2d_gate=self["assoc.iou2d_gate"],
                cost_mode=CostMode(self["assoc.cost_mode"]),
                motion_2d=self["track.2d_motion"],
                use_camera=self["track.use_camera"],
                coasting=self["output.coasting"],
                noise3d=FilterNoise3D(
                    pos_var=self["filter.pos_var"],
                    yaw_var=self["filter.yaw_var"],
                    dim_var=self["filter.dim_var"],
                    vel_var=self["filter.vel_var"],
                    process_noise=self["filter.process_noise"],
                    measurement_noise=self["filter.measurement_noise"],
                ),
                noise2d=FilterNoise2D(
                    box_var=self["filter2d.box_var"],
                    vel_var=self["filter2d.vel_var"],
                    process_noise=self["filter2d.process_noise"],
                    measurement_noise=self["filter2d.measurement_noise"],
                ),
                category=self["input.category"],
            )
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a config file into flat dotted keys.

    The file is YAML, nested or with dotted keys. A file of plain
    ``key = value`` lines is accepted too; its values follow the same YAML
    scalar rules as ``--set``.

    Raises:
        ConfigError: The file is missing, unreadable or not a mapping
    """
    config_file = Path(path)
    logger.info(f"Loading configuration from: {config_file.absolute()}")
    if not config_file.exists():
        raise ConfigError(f"configuration file not found: {config_file}")
    try:
        text = config_file.read_text()
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"error parsing configuration file {config_file}: {e}") from e
    except OSError as e:
        raise ConfigError(f"error loading configuration file {config_file}: {e}") from e

    if data is None:
        return {}
    if isinstance(data, Mapping):
        return flatten(data)
    if isinstance(data, str):
        lines = [line.strip() for line in text.splitlines()]
        items = [line for line in lines if line and not line.startswith("#")]
        if all("=" in item for item in items):
            logger.debug(f"Reading {config_file} as key = value lines")
            return parse_overrides(items)
    raise ConfigError(f"configuration file {config_file} must contain a mapping")


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    """Parse ``KEY=VALUE`` strings; values follow YAML scalar rules.

    Raises:
        ConfigError: An item is not of the KEY=VALUE shape
    """
    overrides: dict[str, Any] = {}
    for item in items:
        result = validate_override(item)
        if not result.valid:
            raise ConfigError(result.error_message)
        key, _, raw = item.partition("=")
        try:
            overrides[key.strip()] = yaml.safe_load(raw) if raw.strip() else ""
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse value of override '{item}': {e}") from e
    return overrides


def load_run_config(
    config_path: str | Path | None = None,
    overrides: Iterable[str] = (),
    environ: Mapping[str, str] | None = None,
) -> RunConfig:
    """Resolve the run configuration from every source.

    Args:
        config_path: Value of ``--config``
        overrides: Values of ``--set``
        environ: Environment to read ``FUSEMOT_CONFIG`` from (os.environ when None)

    Returns:
        The resolved configuration

    Raises:
        ConfigError: Any source is invalid
    """
    environ = os.environ if environ is None else environ
    config = RunConfig()

    if config_path is None and environ.get(CONFIG_ENV_VAR):
        config_path = environ[CONFIG_ENV_VAR]
        logger.info(f"Using configuration file from {CONFIG_ENV_VAR}")
    if config_path is not None:
        config.update(load_config_file(config_path), str(config_path))
    config.update(parse_overrides(overrides), "--set")

    for name, value in config.as_dict().items():
        if config.source(name) != "default":
            logger.info(f"  {name} = {value} ({config.source(name)})")
    return config


def format_key_table() -> str:
    """Every key with its default and description, one per line."""
    width = max(len(spec.name) for spec in CONFIG_KEYS)
    lines = []
    for spec in CONFIG_KEYS:
        default = str(spec.default).lower() if spec.type is bool else str(spec.default)
        lines.append(f"  {spec.name:<{width}}  {default:<8}  {spec.description}")
    return "\n".join(lines)

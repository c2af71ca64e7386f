import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace

from src.errors import ConfigurationError, ValidationError
from src.hardy_core import COSH_EXPONENT_LIMIT, StripDomain
from src.named_operators import exp_cos_map, operator_from_block
from src.utils import load_env_overrides

logger = logging.getLogger(__name__)

COMMANDS = ("spectrum", "monodromy", "crosscheck", "completeness", "evolve", "kernel")
DEFAULT_OUT_DIR = "output"


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; every field has a default so partial files load."""

    command: str
    name: str = "run"
    n_trunc: int = 32
    strip_height: float = 0.5
    keep: int = None
    seed: int = 0
    threads: int = 1
    out: str = DEFAULT_OUT_DIR
    # monodromy
    rectangle: tuple = (-0.5, 10.5, -1.0, 1.0)
    scan_grid: tuple = (21, 9)
    locate_tol: float = 1e-10
    lambda_max: float = 1e4
    agreement_tol: float = 1e-6
    resolvent_samples: int = 3
    # completeness
    t_min: float = 0.25
    t_max: float = 3.0
    t_steps: int = 12
    search_grid: tuple = (256, 64)
    polish_tol: float = 1e-10
    span_modes: int = 40
    test_modes: int = 5
    completeness_strip: float = 0.4
    # semigroup
    shift: object = "auto"
    modes: int = None
    time_ladder: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
    times: tuple = (0.01, 0.1, 1.0)
    continuity_tol: float = 1e-4
    # kernel battery
    kernel_samples: int = 100
    kernel_points: int = 20
    verbose: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}; choose one of {COMMANDS}")
        for name in ("rectangle", "scan_grid", "search_grid", "time_ladder", "times"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_trunc < 1:
            raise ConfigurationError(f"n_trunc must be at least 1, got {self.n_trunc}")
        if not self.strip_height > 0:
            raise ConfigurationError(f"strip_height must be positive, got {self.strip_height}")
        if 2 * self.n_trunc * self.strip_height > COSH_EXPONENT_LIMIT:
            raise ConfigurationError(
                f"2 * n_trunc * strip_height = {2 * self.n_trunc * self.strip_height:g} exceeds {COSH_EXPONENT_LIMIT:g}"
            )
        if self.keep is not None and self.keep < 1:
            raise ConfigurationError(f"keep must be at least 1, got {self.keep}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be at least 1, got {self.threads}")
        for name in ("locate_tol", "agreement_tol", "polish_tol", "continuity_tol", "lambda_max"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.rectangle) != 4 or not (self.rectangle[0] < self.rectangle[1] and self.rectangle[2] < self.rectangle[3]):
            raise ConfigurationError(f"rectangle must be [re_min, re_max, im_min, im_max] with min < max, got {self.rectangle}")
        if not 0 < self.t_min < self.t_max or self.t_steps < 1:
            raise ConfigurationError(f"strip ladder needs 0 < t_min < t_max and t_steps >= 1, got {self.t_min}, {self.t_max}, {self.t_steps}")
        ladder = self.time_ladder
        if any(t <= 0 for t in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigurationError(f"time_ladder must be positive and strictly decreasing, got {ladder}")
        if any(t < 0 for t in self.times):
            raise ConfigurationError(f"times must be nonnegative, got {self.times}")
        if self.shift != "auto":
            try:
                shift = float(self.shift)
            except (TypeError, ValueError):
                raise ConfigurationError(f"shift must be 'auto' or a number, got {self.shift!r}")
            if shift < 0:
                raise ConfigurationError(f"shift must be 'auto' or nonnegative, got {self.shift}")

    @property
    def domain(self):
        return StripDomain(self.strip_height)

    @property
    def output_dir(self):
        return os.path.join(self.out, self.command)

    def to_record(self):
        record = asdict(self)
        record.pop("verbose")
        return record

    def hash_record(self):
        """Fields that determine results; output location and thread count are excluded."""
        record = self.to_record()
        for key in ("out", "threads"):
            record.pop(key)
        return record


def load_config_file(json_filepath):
    """Loads a JSON config file; a missing path means defaults only."""
    if json_filepath is None:
        return {}
    if not os.path.exists(json_filepath):
        raise ValidationError(f"config file not found at '{json_filepath}'")
    try:
        with open(json_filepath, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"could not decode JSON from {os.path.basename(json_filepath)}: {e}")
    if not isinstance(data, dict):
        raise ValidationError(f"{os.path.basename(json_filepath)} must hold a JSON object")
    logger.info("Loaded config from %s", os.path.basename(json_filepath))
    return data


def resolve_run_config(command, data, flags=None, env=None):
    """flag > environment > file > default."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for key, value in (data.get("run") or {}).items():
        if key in known:
            values[key] = value
        else:
            logger.warning("Ignoring unknown run option %r", key)
    values.update(load_env_overrides() if env is None else env)
    values.update({k: v for k, v in (flags or {}).items() if v is not None})
    values.pop("command", None)
    try:
        return RunConfig(command=command, **values)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"bad run option: {e}")


def load_run_config(command, json_filepath=None, flags=None):
    data = load_config_file(json_filepath)
    config = resolve_run_config(command, data, flags)
    if "name" not in (data.get("run") or {}) and json_filepath:
        config = replace(config, name=os.path.splitext(os.path.basename(json_filepath))[0])
    return config, data


def build_operator(config, data):
    """Operator on the run's strip; an explicit coefficient block takes the run's T."""
    block = data.get("operator")
    if block is None:
        raise ValidationError(f"command {config.command!r} needs an 'operator' block in the config")
    if "named" not in block:
        block = dict(block, T=config.strip_height)
    return operator_from_block(block, config.domain)


def build_family_map(config, data):
    """Conformal map of the configured family on the widest strip of the ladder."""
    family = data.get("family")
    if family is None:
        raise ValidationError("completeness scans need a 'family' block")
    kind = family.get("kind")
    if kind != "exp_cos":
        raise ValidationError(f"unknown family kind {kind!r}; only 'exp_cos' is bundled")
    try:
        a = float(family["a"])
        n_trunc = family.get("n_trunc")
        n_trunc = None if n_trunc is None else int(n_trunc)
    except (KeyError, TypeError, ValueError):
        raise ValidationError("exp_cos family needs a real parameter 'a' and an optional integer 'n_trunc'")
    return a, exp_cos_map(a, config.t_max, n_trunc)

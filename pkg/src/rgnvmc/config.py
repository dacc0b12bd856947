"""Run configuration: a flat ``key = value`` text file with CLI overrides."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .exceptions import ConfigError
from .optimizers import SAMPLING_MODES, PenaltySchedule, PreconditionerKind
from .validation import check_dims


@dataclass
class RunConfig:
    model: str = "tfi"
    coupling: float | None = None
    dims: tuple = (10,)
    alpha: int = 5
    init_scale: float = 1e-3
    seed: int = 123
    optimizer: str = "rgn"
    eps_min: float | None = None
    eps_max: float | None = None
    eta_min: float | None = None
    eta_max: float | None = None
    ramp_length: int = 500
    sampling: str = "exact"
    levels: int = 50
    chain_count: int = 100
    steps_multiplier: int = 20
    record_stride: int | None = None
    iterations: int = 1000
    final_multiplier: int = 2000
    checkpoint_stride: int = 0
    timing: bool = True

    def __post_init__(self):
        self.dims = check_dims(self.dims)
        if self.model not in ("tfi", "xxz"):
            raise ConfigError(f"model must be tfi or xxz, got {self.model!r}")
        self.optimizer = PreconditionerKind.parse(self.optimizer).value
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        for name in ("alpha", "levels", "chain_count", "steps_multiplier", "ramp_length"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        for name in ("iterations", "final_multiplier", "checkpoint_stride"):
            if int(getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be non-negative")

    @property
    def n(self) -> int:
        out = 1
        for d in self.dims:
            out *= d
        return out

    def resolved(self) -> "RunConfig":
        """Copy with every default made explicit."""
        if self.coupling is None:
            raise ConfigError("coupling (h for tfi, delta for xxz) is required")
        sched = self.schedule()
        return replace(self, eps_min=sched.eps_min, eps_max=sched.eps_max, eta_min=sched.eta_min,
                       eta_max=sched.eta_max, record_stride=self.record_stride or self.n)

    def schedule(self) -> PenaltySchedule:
        return PenaltySchedule.defaults(self.optimizer, eps_min=self.eps_min, eps_max=self.eps_max,
                                        eta_min=self.eta_min, eta_max=self.eta_max,
                                        ramp_length=int(self.ramp_length))

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                continue
            if key == "dims":
                value = "x".join(str(d) for d in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                values[key] = _coerce(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{source}:{lineno}: {exc}") from exc
        try:
            return cls(**values)
        except ConfigError as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, str(path))

    def with_overrides(self, overrides: dict) -> "RunConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        unknown = set(clean) - _FIELD_TYPES.keys()
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return replace(self, **clean)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INTS = {"alpha", "seed", "ramp_length", "levels", "chain_count", "steps_multiplier", "record_stride",
         "iterations", "final_multiplier", "checkpoint_stride"}
_FLOATS = {"coupling", "init_scale", "eps_min", "eps_max", "eta_min", "eta_max"}


def _coerce(key, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown field {key!r}")
    try:
        if key in _INTS:
            return int(value)
        if key in _FLOATS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"field {key!r}: cannot parse {value!r}") from exc
    if key == "timing":
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"field 'timing': expected a boolean, got {value!r}")
        return low in ("true", "1", "yes")
    if key == "dims":
        return check_dims(value)
    return value

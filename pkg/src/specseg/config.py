"""Pipeline configuration: a small TOML-compatible config format.

Files hold ``key = value`` lines under ``[section]`` headers.  Values
may be integers, floats, booleans or (optionally quoted) strings;
``#`` starts a comment.  :func:`dump_config` writes the resolved
configuration back out as strict TOML so a run directory always
carries an exact, reloadable record of its parameters.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path

from .baselines import FzParams, SlicParams
from .errors import ConfigError
from .postprocess import CrfParams
from .preprocess import PreprocessSpec

CROP_FEATURE_MODES = ("histogram", "sidecar")
MATCHING_METHODS = ("hungarian", "majority")


@dataclass
class AffinityConfig:
    patch_size: int = 8
    c_ssd: float = 1.0
    c_mi: float = 1.0
    c_pos: float = 0.1
    delta: float = 5.0
    knn: int = 8
    mi_bins: int = 32

    def validate(self):
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        for name in ("c_ssd", "c_mi", "c_pos"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        if self.knn < 1:
            raise ConfigError(f"knn must be >= 1, got {self.knn}")
        if self.mi_bins < 2:
            raise ConfigError(f"mi_bins must be >= 2, got {self.mi_bins}")
        return self


@dataclass
class SpectralConfig:
    n_eigensegments: int = 15
    solver: str = "dense"
    seed: int = 0

    def validate(self):
        if self.n_eigensegments < 1:
            raise ConfigError(
                f"n_eigensegments must be >= 1, got {self.n_eigensegments}"
            )
        if self.solver not in ("dense", "lanczos"):
            raise ConfigError(f"solver must be dense or lanczos, got {self.solver!r}")
        return self


@dataclass
class SemanticConfig:
    n_classes: int = 6
    lambda_mask: float = 0.5
    lambda_pos: float = 0.5
    split_components: bool = False
    crop_features: str = "histogram"

    def validate(self):
        if self.n_classes < 1:
            raise ConfigError(f"n_classes must be >= 1, got {self.n_classes}")
        if self.lambda_mask < 0 or self.lambda_pos < 0:
            raise ConfigError("lambda weights must be >= 0")
        if self.crop_features not in CROP_FEATURE_MODES:
            raise ConfigError(
                f"crop_features must be one of {CROP_FEATURE_MODES}, "
                f"got {self.crop_features!r}"
            )
        return self


@dataclass
class EvaluateConfig:
    matching: str = "hungarian"
    boundary_d: int = 3

    def validate(self):
        if self.matching not in MATCHING_METHODS:
            raise ConfigError(
                f"matching must be one of {MATCHING_METHODS}, got {self.matching!r}"
            )
        if self.boundary_d < 0:
            raise ConfigError(f"boundary_d must be >= 0, got {self.boundary_d}")
        return self


@dataclass
class BaselineConfig:
    method: str = "slic"
    slic: SlicParams = field(default_factory=SlicParams)
    fz: FzParams = field(default_factory=FzParams)

    def validate(self):
        if self.method not in ("slic", "fz"):
            raise ConfigError(f"baseline method must be slic or fz, got {self.method!r}")
        self.slic.validate()
        self.fz.validate()
        return self


@dataclass
class PipelineConfig:
    """Aggregate of every stage's settings plus the global seed."""

    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    semantic: SemanticConfig = field(default_factory=SemanticConfig)
    crf: CrfParams = field(default_factory=CrfParams)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    @property
    def patch_size(self):
        return self.affinity.patch_size

    @property
    def seed(self):
        return self.spectral.seed

    def validate(self):
        self.preprocess.validate()
        self.affinity.validate()
        self.spectral.validate()
        self.semantic.validate()
        self.crf.validate()
        self.evaluate.validate()
        self.baseline.validate()
        return self


def _parse_scalar(text, where):
    text = text.strip()
    if not text:
        raise ConfigError(f"{where}: empty value")
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _strip_comment(line):
    in_quote = None
    for i, ch in enumerate(line):
        if in_quote:
            if ch == in_quote:
                in_quote = None
        elif ch in "\"'":
            in_quote = ch
        elif ch == "#":
            return line[:i]
    return line


def parse_config_text(text, source="<config>"):
    """Parse config text into ``{section: {key: scalar}}``."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{where}: empty section name")
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{where}: empty key")
        if key in current:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        current[key] = _parse_scalar(value, where)
    return sections


def _apply_section(obj, data, section, source):
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(
                f"{source}: unknown key {key!r} in [{section}] "
                f"(known: {', '.join(sorted(known))})"
            )
        current = getattr(obj, key)
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{source}: [{section}] {key} must be true/false")
        elif isinstance(current, int) and not isinstance(value, (int, bool)):
            raise ConfigError(f"{source}: [{section}] {key} must be an integer")
        elif isinstance(current, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{source}: [{section}] {key} must be a number")
            value = float(value)
        elif isinstance(current, str) and not isinstance(value, str):
            raise ConfigError(f"{source}: [{section}] {key} must be a string")
        setattr(obj, key, value)


def config_from_sections(sections, source="<config>"):
    """Build a validated :class:`PipelineConfig` from parsed sections."""
    cfg = PipelineConfig()
    handlers = {
        "preprocess": cfg.preprocess,
        "affinity": cfg.affinity,
        "spectral": cfg.spectral,
        "semantic": cfg.semantic,
        "crf": cfg.crf,
        "evaluate": cfg.evaluate,
    }
    for section, data in sections.items():
        if section in handlers:
            _apply_section(handlers[section], data, section, source)
        elif section == "baseline":
            rest = dict(data)
            if "method" in rest:
                method = rest.pop("method")
                if not isinstance(method, str):
                    raise ConfigError(f"{source}: [baseline] method must be a string")
                cfg.baseline.method = method
            slic_keys = {f.name for f in fields(SlicParams)}
            fz_keys = {f.name for f in fields(FzParams)}
            slic_data = {k: v for k, v in rest.items() if k in slic_keys}
            fz_data = {k: v for k, v in rest.items() if k in fz_keys and k not in slic_keys}
            unknown = set(rest) - slic_keys - fz_keys
            if unknown:
                raise ConfigError(
                    f"{source}: unknown key {sorted(unknown)[0]!r} in [baseline]"
                )
            _apply_section(cfg.baseline.slic, slic_data, "baseline", source)
            _apply_section(cfg.baseline.fz, fz_data, "baseline", source)
        else:
            raise ConfigError(f"{source}: unknown section [{section}]")
    return cfg.validate()


def load_config(path=None):
    """Load a config file; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig().validate()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_sections(parse_config_text(text, source=str(path)), str(path))


def _format_scalar(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dump_config(cfg, path=None):
    """Serialize a config as strict TOML; returns the text."""
    cfg.validate()
    lines = []

    def emit(section, obj, skip=()):
        lines.append(f"[{section}]")
        for f in fields(obj):
            if f.name in skip:
                continue
            lines.append(f"{f.name} = {_format_scalar(getattr(obj, f.name))}")
        lines.append("")

    emit("preprocess", cfg.preprocess)
    emit("affinity", cfg.affinity)
    emit("spectral", cfg.spectral)
    emit("semantic", cfg.semantic)
    emit("crf", cfg.crf)
    emit("evaluate", cfg.evaluate)
    lines.append("[baseline]")
    lines.append(f"method = {_format_scalar(cfg.baseline.method)}")
    for f in fields(SlicParams):
        lines.append(f"{f.name} = {_format_scalar(getattr(cfg.baseline.slic, f.name))}")
    for f in fields(FzParams):
        lines.append(f"{f.name} = {_format_scalar(getattr(cfg.baseline.fz, f.name))}")
    lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text

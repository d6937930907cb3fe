"""Experiment configuration: TOML loading, overrides, and range validation.

A config file mirrors the dataclasses below section by section:

    corpus_path = "corpus.txt"

    [vocabulary]
    min_count = 1

    [model]
    order = 2
    alpha = 0.1

    [watermark]
    sigma = 0.001
    seed = 42
    frequency_source = "corpus"     # or "model_generated"

    [detector]
    alpha = 0.05
    beta = 0.05

    [monte_carlo]
    trials = 200
    master_seed = 12345
    sequence_length = 2000

    [extraction]
    student_order = 2
    query_tokens = 100000

    [generation]
    sequences = 1
    max_tokens = 1000
    seed = 777

Every field has a default, unknown keys are rejected, and all numeric
ranges are checked at load time so commands fail before doing any work.
Command-line overrides use dotted paths: --set watermark.sigma=0.002.
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

FREQUENCY_SOURCES = ("corpus", "model_generated")

_MAX_SEED = 2**64


def _check_int(section: str, key: str, value, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{section}.{key} must be >= {minimum}, got {value}")
    return value


def _check_seed(section: str, key: str, value) -> int:
    seed = _check_int(section, key, value, 0)
    if seed >= _MAX_SEED:
        raise ConfigError(f"{section}.{key} must fit in 64 unsigned bits")
    return seed


def _check_float(section: str, key: str, value, low: float, high: float,
                 low_open: bool = True, high_open: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    value = float(value)
    below = value <= low if low_open else value < low
    above = value >= high if high_open else value > high
    if below or above:
        lo_b = "(" if low_open else "["
        hi_b = ")" if high_open else "]"
        raise ConfigError(f"{section}.{key} must lie in {lo_b}{low}, {high}{hi_b}, got {value}")
    return value


def _check_str(section: str, key: str, value, choices=None) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
    if choices is not None and value not in choices:
        raise ConfigError(f"{section}.{key} must be one of {choices}, got {value!r}")
    return value


@dataclass(frozen=True)
class VocabularyParams:
    min_count: int = 1


@dataclass(frozen=True)
class ModelParams:
    order: int = 2
    alpha: float = 0.1


@dataclass(frozen=True)
class WatermarkParams:
    sigma: float = 0.001
    seed: int = 1
    frequency_source: str = "corpus"
    floor_epsilon: float = 1e-8
    # Sample size when frequency_source = "model_generated": how many tokens
    # of model output to measure frequencies on.
    freq_sample_tokens: int = 100000


@dataclass(frozen=True)
class DetectorParams:
    alpha: float = 0.05
    beta: float = 0.05


@dataclass(frozen=True)
class MonteCarloParams:
    trials: int = 200
    master_seed: int = 12345
    sequence_length: int = 2000


@dataclass(frozen=True)
class ExtractionParams:
    student_order: int = 2
    query_tokens: int = 100000
    probe_contexts: int = 200


@dataclass(frozen=True)
class GenerationParams:
    sequences: int = 1
    max_tokens: int = 1000
    seed: int = 777
    prompt: str = ""
    stop_token: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_path: str | None = None
    vocabulary: VocabularyParams = field(default_factory=VocabularyParams)
    model: ModelParams = field(default_factory=ModelParams)
    watermark: WatermarkParams = field(default_factory=WatermarkParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    monte_carlo: MonteCarloParams = field(default_factory=MonteCarloParams)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    generation: GenerationParams = field(default_factory=GenerationParams)

    def to_json_obj(self) -> dict:
        return {
            "corpus_path": self.corpus_path,
            "vocabulary": {"min_count": self.vocabulary.min_count},
            "model": {"order": self.model.order, "alpha": self.model.alpha},
            "watermark": {
                "sigma": self.watermark.sigma,
                "seed": str(self.watermark.seed),
                "frequency_source": self.watermark.frequency_source,
                "floor_epsilon": self.watermark.floor_epsilon,
                "freq_sample_tokens": self.watermark.freq_sample_tokens,
            },
            "detector": {"alpha": self.detector.alpha, "beta": self.detector.beta},
            "monte_carlo": {
                "trials": self.monte_carlo.trials,
                "master_seed": str(self.monte_carlo.master_seed),
                "sequence_length": self.monte_carlo.sequence_length,
            },
            "extraction": {
                "student_order": self.extraction.student_order,
                "query_tokens": self.extraction.query_tokens,
                "probe_contexts": self.extraction.probe_contexts,
            },
            "generation": {
                "sequences": self.generation.sequences,
                "max_tokens": self.generation.max_tokens,
                "seed": str(self.generation.seed),
                "prompt": self.generation.prompt,
                "stop_token": self.generation.stop_token,
            },
        }


_SECTION_KEYS = {
    "vocabulary": {"min_count"},
    "model": {"order", "alpha"},
    "watermark": {"sigma", "seed", "frequency_source", "floor_epsilon", "freq_sample_tokens"},
    "detector": {"alpha", "beta"},
    "monte_carlo": {"trials", "master_seed", "sequence_length"},
    "extraction": {"student_order", "query_tokens", "probe_contexts"},
    "generation": {"sequences", "max_tokens", "seed", "prompt", "stop_token"},
}


def _validate_raw(raw: dict) -> None:
    for key, value in raw.items():
        if key == "corpus_path":
            continue
        if key not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section or key: {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"config section {key!r} must be a table")
        unknown = set(value) - _SECTION_KEYS[key]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{key}]: {sorted(unknown)}")


def _from_raw(raw: dict) -> ExperimentConfig:
    _validate_raw(raw)
    corpus_path = raw.get("corpus_path")
    if corpus_path is not None and not isinstance(corpus_path, str):
        raise ConfigError(f"corpus_path must be a string, got {corpus_path!r}")

    voc = raw.get("vocabulary", {})
    mod = raw.get("model", {})
    wat = raw.get("watermark", {})
    det = raw.get("detector", {})
    mc = raw.get("monte_carlo", {})
    ext = raw.get("extraction", {})
    gen = raw.get("generation", {})

    stop_token = gen.get("stop_token")
    if stop_token is not None:
        stop_token = _check_str("generation", "stop_token", stop_token)

    return ExperimentConfig(
        corpus_path=corpus_path,
        vocabulary=VocabularyParams(
            min_count=_check_int("vocabulary", "min_count", voc.get("min_count", 1), 1),
        ),
        model=ModelParams(
            order=_check_int("model", "order", mod.get("order", 2), 1),
            alpha=_check_float("model", "alpha", mod.get("alpha", 0.1), 0.0, float("inf")),
        ),
        watermark=WatermarkParams(
            sigma=_check_float("watermark", "sigma", wat.get("sigma", 0.001), 0.0, float("inf")),
            seed=_check_seed("watermark", "seed", wat.get("seed", 1)),
            frequency_source=_check_str(
                "watermark", "frequency_source",
                wat.get("frequency_source", "corpus"), FREQUENCY_SOURCES,
            ),
            floor_epsilon=_check_float(
                "watermark", "floor_epsilon", wat.get("floor_epsilon", 1e-8), 0.0, 1.0,
            ),
            freq_sample_tokens=_check_int(
                "watermark", "freq_sample_tokens", wat.get("freq_sample_tokens", 100000), 1000,
            ),
        ),
        detector=DetectorParams(
            alpha=_check_float("detector", "alpha", det.get("alpha", 0.05), 0.0, 0.5),
            beta=_check_float("detector", "beta", det.get("beta", 0.05), 0.0, 0.5),
        ),
        monte_carlo=MonteCarloParams(
            trials=_check_int("monte_carlo", "trials", mc.get("trials", 200), 1),
            master_seed=_check_seed("monte_carlo", "master_seed", mc.get("master_seed", 12345)),
            sequence_length=_check_int("monte_carlo", "sequence_length", mc.get("sequence_length", 2000), 1),
        ),
        extraction=ExtractionParams(
            student_order=_check_int("extraction", "student_order", ext.get("student_order", 2), 1),
            query_tokens=_check_int("extraction", "query_tokens", ext.get("query_tokens", 100000), 1000),
            probe_contexts=_check_int("extraction", "probe_contexts", ext.get("probe_contexts", 200), 1),
        ),
        generation=GenerationParams(
            sequences=_check_int("generation", "sequences", gen.get("sequences", 1), 1),
            max_tokens=_check_int("generation", "max_tokens", gen.get("max_tokens", 1000), 1),
            seed=_check_seed("generation", "seed", gen.get("seed", 777)),
            prompt=_check_str("generation", "prompt", gen.get("prompt", "")),
            stop_token=stop_token,
        ),
    )


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    path_text, value_text = text.split("=", 1)
    path = [p for p in path_text.strip().split(".") if p]
    if not path or len(path) > 2:
        raise ConfigError(f"override path {path_text!r} must be key or section.key")
    try:
        value = tomllib.loads(f"v = {value_text}")["v"]
    except tomllib.TOMLDecodeError:
        value = value_text  # bare words are taken as strings
    return path, value


def apply_overrides(raw: dict, overrides) -> dict:
    for text in overrides:
        path, value = _parse_override(text)
        node = raw
        for part in path[:-1]:
            existing = node.get(part)
            if existing is None:
                existing = node[part] = {}
            elif not isinstance(existing, dict):
                raise ConfigError(f"override {text!r} descends into non-table {part!r}")
            node = existing
        node[path[-1]] = value
    return raw


def load_config(path: str, overrides=()) -> ExperimentConfig:
    """Read a TOML config file, apply --set overrides, validate everything.

    Raises:
        ConfigError: on unreadable files, TOML syntax errors, unknown
            keys, or out-of-range values.
    """
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return _from_raw(apply_overrides(raw, overrides))


def default_config() -> ExperimentConfig:
    return ExperimentConfig()

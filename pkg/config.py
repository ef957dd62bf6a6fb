"""
Configuration settings for the query-focused summarization toolkit
"""

import os
import json
import logging
from dataclasses import dataclass, field, fields, asdict, is_dataclass
from typing import Any, Dict, Iterable, Optional, Union, get_type_hints, get_origin, get_args

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_DIR = os.getenv('LOG_DIR', 'logs')

    # Where pipeline runs are written when no --output is given
    RUNS_DIR = os.getenv('RUNS_DIR', 'runs')

    # Default parallelism for per-example evaluation
    DEFAULT_JOBS = int(os.getenv('QFAS_JOBS', 1))

    @staticmethod
    def seed_override() -> Optional[int]:
        """Seed from QFAS_SEED, read at call time so it can change between runs"""
        raw = os.getenv('QFAS_SEED')
        if raw is None or raw.strip() == '':
            return None
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"QFAS_SEED must be an integer, got {raw!r}", key='seed')


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the offending key path"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


ATTENTION_MODES = ('bidirectional', 'query_document')
MULTI_REF_MODES = ('max', 'mean')
LR_SCHEDULES = ('linear_warmup', 'noam')
SCHEDULE_MODES = ('sequential', 'batchwise')
RELEVANCE_SCORERS = ('overlap', 'tfidf')
SIMILARITY_SCORERS = ('unigram-f1',)


def _check(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}", key=key)


@dataclass
class ModelConfig:
    vocab_size: int = 0
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_src_len: int = 512
    max_tgt_len: int = 64
    attention_mode: str = 'query_document'
    use_positions: bool = True
    seed: int = 0

    def validate(self, prefix: str = 'model') -> 'ModelConfig':
        _check(self.vocab_size >= 0, f'{prefix}.vocab_size', 'must be >= 0')
        for name in ('d_model', 'n_heads', 'd_ff', 'max_src_len', 'max_tgt_len'):
            _check(getattr(self, name) > 0, f'{prefix}.{name}', 'must be positive')
        for name in ('n_enc_layers', 'n_dec_layers'):
            _check(getattr(self, name) >= 1, f'{prefix}.{name}', 'must be >= 1')
        _check(self.d_model % self.n_heads == 0, f'{prefix}.d_model', 'must be divisible by n_heads')
        _check(0.0 <= self.dropout < 1.0, f'{prefix}.dropout', 'must lie in [0,1)')
        _check(0.0 <= self.label_smoothing < 1.0, f'{prefix}.label_smoothing', 'must lie in [0,1)')
        _check(self.attention_mode in ATTENTION_MODES, f'{prefix}.attention_mode',
               f'must be one of {ATTENTION_MODES}')
        return self


@dataclass
class BeamConfig:
    beam_size: int = 5
    max_len: int = 60
    trigram_block: bool = True
    length_penalty: float = 1.0

    def validate(self, prefix: str = 'beam') -> 'BeamConfig':
        _check(self.beam_size >= 1, f'{prefix}.beam_size', 'must be >= 1')
        _check(self.max_len >= 1, f'{prefix}.max_len', 'must be >= 1')
        _check(self.length_penalty >= 0.0, f'{prefix}.length_penalty', 'must be >= 0')
        return self


@dataclass
class EvalConfig:
    stemming: bool = True
    truncate_words: Optional[int] = None
    alpha: float = 0.5
    skip_distance: int = 4
    include_unigrams_in_su: bool = True
    multi_ref_mode: str = 'max'
    drop_punctuation: bool = False

    def validate(self, prefix: str = 'eval') -> 'EvalConfig':
        _check(0.0 <= self.alpha <= 1.0, f'{prefix}.alpha', 'must lie in [0,1]')
        _check(self.skip_distance >= 0, f'{prefix}.skip_distance', 'must be >= 0')
        _check(self.truncate_words is None or self.truncate_words >= 0,
               f'{prefix}.truncate_words', 'must be >= 0 or null')
        _check(self.multi_ref_mode in MULTI_REF_MODES, f'{prefix}.multi_ref_mode',
               f'must be one of {MULTI_REF_MODES}')
        return self

    @classmethod
    def multi_document(cls, budget: int = 250) -> 'EvalConfig':
        """Evaluation setup of the multi-document runs (summaries cut at `budget` words)"""
        return cls(truncate_words=budget)


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 8
    learning_rate: float = 1e-3
    warmup_steps: int = 20
    encoder_learning_rate: Optional[float] = None
    decoder_learning_rate: Optional[float] = None
    encoder_warmup_steps: Optional[int] = None
    decoder_warmup_steps: Optional[int] = None
    lr_schedule: str = 'linear_warmup'
    pretrain_steps: int = 300
    pretrain_examples: int = 200
    num_golds: Optional[int] = None
    schedule_mode: str = 'sequential'
    extractive_prestage: bool = False
    extractive_steps: int = 50
    log_interval: int = 50
    show_progress: bool = False

    def validate(self, prefix: str = 'train') -> 'TrainConfig':
        for name in ('steps', 'pretrain_steps', 'extractive_steps', 'warmup_steps'):
            _check(getattr(self, name) >= 0, f'{prefix}.{name}', 'must be >= 0')
        for name in ('batch_size', 'pretrain_examples', 'log_interval'):
            _check(getattr(self, name) >= 1, f'{prefix}.{name}', 'must be >= 1')
        _check(self.learning_rate > 0, f'{prefix}.learning_rate', 'must be positive')
        for name in ('encoder_learning_rate', 'decoder_learning_rate'):
            value = getattr(self, name)
            _check(value is None or value > 0, f'{prefix}.{name}', 'must be positive or null')
        for name in ('encoder_warmup_steps', 'decoder_warmup_steps'):
            value = getattr(self, name)
            _check(value is None or value >= 0, f'{prefix}.{name}', 'must be >= 0 or null')
        _check(self.num_golds is None or self.num_golds >= 1, f'{prefix}.num_golds', 'must be >= 1 or null')
        _check(self.lr_schedule in LR_SCHEDULES, f'{prefix}.lr_schedule', f'must be one of {LR_SCHEDULES}')
        _check(self.schedule_mode in SCHEDULE_MODES, f'{prefix}.schedule_mode',
               f'must be one of {SCHEDULE_MODES}')
        return self


@dataclass
class PipelineConfig:
    profile: str = 'custom'
    use_query: bool = True
    use_pretraining: bool = True
    use_trigram_block: bool = True
    use_distant_supervision: bool = True
    use_weak_supervision: bool = True
    filter_budget_n: int = 512
    summary_budget: int = 250
    relevance_scorer: str = 'tfidf'
    similarity_scorer: str = 'unigram-f1'
    folds: int = 1
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    beam: BeamConfig = field(default_factory=BeamConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def validate(self) -> 'PipelineConfig':
        _check(self.profile in DATASET_PROFILES, 'profile', f'must be one of {tuple(DATASET_PROFILES)}')
        _check(self.filter_budget_n > 0, 'filter_budget_n', 'must be positive')
        _check(self.summary_budget > 0, 'summary_budget', 'must be positive')
        _check(self.folds >= 1, 'folds', 'must be >= 1')
        _check(self.relevance_scorer in RELEVANCE_SCORERS, 'relevance_scorer',
               f'must be one of {RELEVANCE_SCORERS}')
        _check(self.similarity_scorer in SIMILARITY_SCORERS, 'similarity_scorer',
               f'must be one of {SIMILARITY_SCORERS}')
        self.model.validate()
        self.train.validate()
        self.beam.validate()
        self.eval.validate()
        _check(self.beam.max_len <= self.model.max_tgt_len + 1, 'beam.max_len',
               f'must be <= model.max_tgt_len + 1 ({self.model.max_tgt_len + 1})')
        return self

    def multi_document_eval(self) -> EvalConfig:
        """Evaluation config for multi-document runs: the word budget applies unless set explicitly"""
        if self.eval.truncate_words is not None:
            return self.eval
        return EvalConfig(**{**asdict(self.eval), 'truncate_words': self.summary_budget})


SECTIONS = {
    'model': ModelConfig,
    'train': TrainConfig,
    'beam': BeamConfig,
    'eval': EvalConfig,
}

# Dataset profiles: fill the keys a user did not set explicitly
DATASET_PROFILES = {
    'custom': {},
    'debatepedia': {
        'model.max_src_len': 100,
        'model.max_tgt_len': 26,
        'beam.max_len': 25,
    },
    'msmarco': {
        'model.max_src_len': 256,
        'model.max_tgt_len': 101,
        'beam.max_len': 100,
    },
    'duc': {
        'model.max_src_len': 512,
        'filter_budget_n': 512,
        'summary_budget': 250,
        'eval.truncate_words': 250,
    },
}


def _top_level_fields() -> Dict[str, Any]:
    hints = get_type_hints(PipelineConfig)
    return {f.name: hints[f.name] for f in fields(PipelineConfig) if f.name not in SECTIONS}


def _section_fields(section: str) -> Dict[str, Any]:
    cls = SECTIONS[section]
    hints = get_type_hints(cls)
    return {f.name: hints[f.name] for f in fields(cls)}


def _coerce(value: Any, expected: Any, key: str) -> Any:
    """Check a JSON value against a dataclass field type"""
    origin = get_origin(expected)
    if origin is Union:
        options = [a for a in get_args(expected) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, options[0], key)
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}", key=key)
        return value
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
        return value
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}", key=key)
        return float(value)
    if expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}", key=key)
        return value
    return value


def resolve_key(key: str) -> str:
    """
    Resolve a config key to its canonical dotted path

    Args:
        key: 'section.name', a top-level name, or a leaf name unique across sections

    Returns:
        Canonical key ('beam.beam_size', 'summary_budget', ...)

    Raises:
        ConfigError: If the key is unknown or ambiguous
    """
    if '.' in key:
        section, _, name = key.partition('.')
        if section not in SECTIONS or name not in _section_fields(section):
            raise ConfigError(f"Unknown config key: {key}", key=key)
        return key
    if key in _top_level_fields():
        return key
    matches = [s for s in SECTIONS if key in _section_fields(s)]
    if not matches:
        raise ConfigError(f"Unknown config key: {key}", key=key)
    if len(matches) > 1:
        raise ConfigError(f"Ambiguous config key {key!r}: use one of "
                          f"{', '.join(f'{s}.{key}' for s in matches)}", key=key)
    return f"{matches[0]}.{key}"


def _flatten(data: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected an object", key=key)
            for name, inner in value.items():
                flat[resolve_key(f"{key}.{name}")] = inner
        else:
            flat[resolve_key(key)] = value
    return flat


def build_pipeline_config(data: Dict[str, Any], overrides: Iterable[str] = ()) -> PipelineConfig:
    """
    Build a validated PipelineConfig from a config mapping and key=value overrides

    Args:
        data: Parsed JSON config (sections and/or leaf keys)
        overrides: 'key=value' strings; values are JSON-decoded when possible

    Returns:
        Validated PipelineConfig with defaults and profile values filled in

    Raises:
        ConfigError: On unknown keys, wrong types or violated bounds
    """
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object")

    flat = _flatten(data)
    for item in overrides:
        key, sep, raw = item.partition('=')
        if not sep:
            raise ConfigError(f"Override must look like key=value, got {item!r}", key=item)
        flat[resolve_key(key.strip())] = _parse_override_value(raw.strip())

    profile = flat.get('profile', 'custom')
    if profile not in DATASET_PROFILES:
        raise ConfigError(f"profile: must be one of {tuple(DATASET_PROFILES)}", key='profile')
    for key, value in DATASET_PROFILES[profile].items():
        flat.setdefault(key, value)

    env_seed = Config.seed_override()
    if env_seed is not None:
        flat['seed'] = env_seed

    top_types = _top_level_fields()
    top_kwargs: Dict[str, Any] = {}
    section_kwargs: Dict[str, Dict[str, Any]] = {s: {} for s in SECTIONS}
    for key, value in flat.items():
        if '.' in key:
            section, _, name = key.partition('.')
            section_kwargs[section][name] = _coerce(value, _section_fields(section)[name], key)
        else:
            top_kwargs[key] = _coerce(value, top_types[key], key)

    # The model follows the pipeline seed unless pinned explicitly
    section_kwargs['model'].setdefault('seed', top_kwargs.get('seed', 0))

    cfg = PipelineConfig(
        **top_kwargs,
        **{name: SECTIONS[name](**kwargs) for name, kwargs in section_kwargs.items()},
    )
    return cfg.validate()


def _parse_override_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def load_pipeline_config(path: Optional[str], overrides: Iterable[str] = ()) -> PipelineConfig:
    """Read a JSON config file (or defaults when path is None) and validate it"""
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}")
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Config file {path} is not valid JSON: {e}")
    cfg = build_pipeline_config(data, overrides)
    logger.debug(f"Loaded pipeline config from {path or '<defaults>'}")
    return cfg


def config_to_dict(cfg: Any) -> Dict[str, Any]:
    """Nested plain-dict view of a config dataclass (the effective-config echo)"""
    if not is_dataclass(cfg):
        raise TypeError(f"Expected a config dataclass, got {type(cfg).__name__}")
    return asdict(cfg)


def config_to_json(cfg: Any) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=False)


def model_config_from_dict(data: Dict[str, Any]) -> ModelConfig:
    known = {f.name for f in fields(ModelConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown model config keys: {sorted(unknown)}", key='model')
    return ModelConfig(**data).validate()

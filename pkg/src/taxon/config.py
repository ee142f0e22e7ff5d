"""Layered service configuration: defaults, then a config file, then flags.

The file format is INI (configparser). Every knob is declared in SCHEMA with
its section, type, and constraint; unknown sections or keys are hard errors so
typos surface at startup instead of silently running with defaults. Flag
overrides address keys as ``section.key=value``, the same spelling the file
uses, and win over the file, which wins over defaults.

The effective configuration prints back to INI text (``to_ini_text``) and
re-parsing that text reproduces the identical configuration, which is what
makes startup audit logs trustworthy.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Union

from .errors import ConstraintViolation, TypeMismatch, UnknownKey
from .features import VectorizerConfig
from .pipeline import GridSearchSpec, default_algorithm_grids
from .tokenize import TokenizerConfig, default_stop_words

ENV_CONFIG_PATH = "TAXON_CONFIG"

_BOOL_WORDS = {
    "1": True, "yes": True, "true": True, "on": True,
    "0": False, "no": False, "false": False, "off": False,
}

KNOWN_ALGORITHMS = ("gaussian_nb", "logistic", "linear_svm", "random_forest")
REG_KINDS = ("none", "l1", "l2")
STORE_BACKENDS = ("jsonl", "sqlite")


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise TypeMismatch(f"expected a boolean, got {text!r}") from None


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise TypeMismatch(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise TypeMismatch(f"expected a number, got {text!r}") from None


def _parse_number(text: str) -> Union[int, float]:
    """int means an absolute count, float a proportion; keep the distinction."""
    stripped = text.strip()
    try:
        return int(stripped)
    except ValueError:
        pass
    try:
        return float(stripped)
    except ValueError:
        raise TypeMismatch(f"expected an int or float, got {text!r}") from None


def _parse_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_str(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class ServiceConfig:
    """Every configurable of both services, resolved and validated."""

    # tokenizer
    tokenizer_mode: str = "word"
    n_min: int = 1
    n_max: int = 1
    lowercase: bool = True
    stop_word_file: str = ""
    # vectorizer
    min_df: Union[int, float] = 1
    max_df: Union[int, float] = 1.0
    use_tfidf: bool = True
    clamp_negative_idf: bool = False
    l2_normalize: bool = False
    # training
    algorithms: tuple[str, ...] = KNOWN_ALGORITHMS
    regularization: tuple[str, ...] = ("l1", "l2")
    parallel_jobs: int = 1
    cv_folds: int = 3
    test_fraction: float = 0.2
    seed: int = 0
    labels: tuple[str, ...] = ()
    allow_new_labels: bool = True
    retrain_interval_seconds: float = 0.0
    auto_promote: bool = False
    export_path: str = ""
    promote_to: str = ""
    # classify
    storage_threshold: float = 0.8
    window_lines: int = 0
    store_backend: str = "jsonl"
    retain_input: bool = True
    fetch_timeout_seconds: float = 30.0
    fetch_size_cap_mib: float = 64.0
    # service
    host: str = "127.0.0.1"
    train_port: int = 8301
    classify_port: int = 8302
    data_dir: str = "taxon-data"
    ui_dir: str = ""


# (section, key) -> (attribute, parser)
SCHEMA: dict[tuple[str, str], tuple[str, Callable[[str], object]]] = {
    ("tokenizer", "mode"): ("tokenizer_mode", _parse_str),
    ("tokenizer", "n_min"): ("n_min", _parse_int),
    ("tokenizer", "n_max"): ("n_max", _parse_int),
    ("tokenizer", "lowercase"): ("lowercase", _parse_bool),
    ("tokenizer", "stop_word_file"): ("stop_word_file", _parse_str),
    ("vectorizer", "min_df"): ("min_df", _parse_number),
    ("vectorizer", "max_df"): ("max_df", _parse_number),
    ("vectorizer", "use_tfidf"): ("use_tfidf", _parse_bool),
    ("vectorizer", "clamp_negative_idf"): ("clamp_negative_idf", _parse_bool),
    ("vectorizer", "l2_normalize"): ("l2_normalize", _parse_bool),
    ("training", "algorithms"): ("algorithms", _parse_list),
    ("training", "regularization"): ("regularization", _parse_list),
    ("training", "parallel_jobs"): ("parallel_jobs", _parse_int),
    ("training", "cv_folds"): ("cv_folds", _parse_int),
    ("training", "test_fraction"): ("test_fraction", _parse_float),
    ("training", "seed"): ("seed", _parse_int),
    ("training", "labels"): ("labels", _parse_list),
    ("training", "allow_new_labels"): ("allow_new_labels", _parse_bool),
    ("training", "retrain_interval_seconds"): ("retrain_interval_seconds", _parse_float),
    ("training", "auto_promote"): ("auto_promote", _parse_bool),
    ("training", "export_path"): ("export_path", _parse_str),
    ("training", "promote_to"): ("promote_to", _parse_str),
    ("classify", "storage_threshold"): ("storage_threshold", _parse_float),
    ("classify", "window_lines"): ("window_lines", _parse_int),
    ("classify", "store_backend"): ("store_backend", _parse_str),
    ("classify", "retain_input"): ("retain_input", _parse_bool),
    ("classify", "fetch_timeout_seconds"): ("fetch_timeout_seconds", _parse_float),
    ("classify", "fetch_size_cap_mib"): ("fetch_size_cap_mib", _parse_float),
    ("service", "host"): ("host", _parse_str),
    ("service", "train_port"): ("train_port", _parse_int),
    ("service", "classify_port"): ("classify_port", _parse_int),
    ("service", "data_dir"): ("data_dir", _parse_str),
    ("service", "ui_dir"): ("ui_dir", _parse_str),
}

_ATTR_TO_SECTION_KEY = {attr: sk for sk, (attr, _) in SCHEMA.items()}


def validate_config(cfg: ServiceConfig) -> ServiceConfig:
    """Check every cross-field and range constraint; returns cfg unchanged."""
    def bad(message: str) -> ConstraintViolation:
        return ConstraintViolation(message)

    if cfg.tokenizer_mode not in ("word", "char"):
        raise bad(f"tokenizer.mode must be word or char, got {cfg.tokenizer_mode!r}")
    if cfg.n_min < 1:
        raise bad(f"tokenizer.n_min must be >= 1, got {cfg.n_min}")
    if cfg.n_max < cfg.n_min:
        raise bad(f"tokenizer.n_max ({cfg.n_max}) must be >= n_min ({cfg.n_min})")
    for name, value in (("min_df", cfg.min_df), ("max_df", cfg.max_df)):
        if isinstance(value, float) and not 0.0 <= value <= 1.0:
            raise bad(f"vectorizer.{name} as a proportion must lie in [0, 1], got {value}")
        if isinstance(value, int) and value < 0:
            raise bad(f"vectorizer.{name} as a count must be >= 0, got {value}")
    if (
        type(cfg.min_df) is type(cfg.max_df)  # comparable without a corpus size
        and cfg.min_df > cfg.max_df
    ):
        raise bad(f"vectorizer.min_df ({cfg.min_df}) exceeds max_df ({cfg.max_df})")
    if not cfg.algorithms:
        raise bad("training.algorithms must name at least one algorithm")
    for algo in cfg.algorithms:
        if algo not in KNOWN_ALGORITHMS:
            raise bad(f"training.algorithms contains unknown algorithm {algo!r}")
    for reg in cfg.regularization:
        if reg not in REG_KINDS:
            raise bad(f"training.regularization contains unknown kind {reg!r}")
    if not cfg.regularization:
        raise bad("training.regularization must name at least one kind")
    if cfg.parallel_jobs < 1:
        raise bad(f"training.parallel_jobs must be >= 1, got {cfg.parallel_jobs}")
    if cfg.cv_folds < 2:
        raise bad(f"training.cv_folds must be >= 2, got {cfg.cv_folds}")
    if not 0.0 < cfg.test_fraction < 1.0:
        raise bad(f"training.test_fraction must lie in (0, 1), got {cfg.test_fraction}")
    if cfg.retrain_interval_seconds < 0.0:
        raise bad(
            f"training.retrain_interval_seconds must be >= 0, got {cfg.retrain_interval_seconds}"
        )
    if len(set(cfg.labels)) != len(cfg.labels):
        raise bad("training.labels contains duplicates")
    if not 0.0 <= cfg.storage_threshold <= 1.0:
        raise bad(f"classify.storage_threshold must lie in [0, 1], got {cfg.storage_threshold}")
    if cfg.window_lines < 0:
        raise bad(f"classify.window_lines must be >= 0, got {cfg.window_lines}")
    if cfg.store_backend not in STORE_BACKENDS:
        raise bad(f"classify.store_backend must be one of {STORE_BACKENDS}, got {cfg.store_backend!r}")
    if cfg.fetch_timeout_seconds <= 0.0:
        raise bad("classify.fetch_timeout_seconds must be > 0")
    if cfg.fetch_size_cap_mib <= 0.0:
        raise bad("classify.fetch_size_cap_mib must be > 0")
    for name, port in (("train_port", cfg.train_port), ("classify_port", cfg.classify_port)):
        if not 1 <= port <= 65535:
            raise bad(f"service.{name} must be a valid TCP port, got {port}")
    return cfg


def _apply(cfg: ServiceConfig, section: str, key: str, raw: str) -> ServiceConfig:
    try:
        attr, parser = SCHEMA[(section, key)]
    except KeyError:
        raise UnknownKey(f"unknown configuration key [{section}] {key}") from None
    try:
        value = parser(raw)
    except TypeMismatch as exc:
        raise TypeMismatch(f"[{section}] {key}: {exc}") from None
    return replace(cfg, **{attr: value})


def load_config_file(path: Union[str, Path], base: Optional[ServiceConfig] = None) -> ServiceConfig:
    """Parse an INI file over ``base`` (or the defaults). Not yet validated."""
    parser = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text(encoding="utf-8")
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConstraintViolation(f"unparseable config file {path}: {exc}") from exc
    cfg = base or ServiceConfig()
    for section in parser.sections():
        for key, raw in parser.items(section):
            cfg = _apply(cfg, section, key, raw)
    return cfg


def parse_flag_overrides(pairs) -> list[tuple[str, str, str]]:
    """Split ``section.key=value`` strings into addressable triples."""
    triples = []
    for pair in pairs:
        if "=" not in pair:
            raise UnknownKey(f"override {pair!r} is not of the form section.key=value")
        address, value = pair.split("=", 1)
        if "." not in address:
            raise UnknownKey(f"override key {address!r} is not of the form section.key")
        section, key = address.split(".", 1)
        triples.append((section.strip(), key.strip(), value))
    return triples


def resolve_config(
    config_file: Optional[Union[str, Path]] = None,
    flag_overrides=(),
    base: Optional[ServiceConfig] = None,
) -> ServiceConfig:
    """defaults -> file -> flags, validated at the end.

    When ``config_file`` is None the TAXON_CONFIG environment variable is
    consulted; a missing value there means file-less operation on defaults.
    """
    cfg = base or ServiceConfig()
    path = config_file or os.environ.get(ENV_CONFIG_PATH) or None
    if path:
        cfg = load_config_file(path, base=cfg)
    for section, key, value in parse_flag_overrides(flag_overrides):
        cfg = _apply(cfg, section, key, value)
    return validate_config(cfg)


def to_ini_text(cfg: ServiceConfig) -> str:
    """Render the effective configuration; parsing it back yields an equal config."""
    parser = configparser.ConfigParser(interpolation=None)
    for (section, key), (attr, _) in SCHEMA.items():
        if not parser.has_section(section):
            parser.add_section(section)
        value = getattr(cfg, attr)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(value)
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        parser.set(section, key, text)
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def tokenizer_config_from(cfg: ServiceConfig) -> TokenizerConfig:
    stop_words: frozenset[str] = frozenset()
    if cfg.stop_word_file:
        words = Path(cfg.stop_word_file).read_text(encoding="utf-8").split()
        stop_words = default_stop_words(words)
    return TokenizerConfig(
        mode=cfg.tokenizer_mode,
        n_min=cfg.n_min,
        n_max=cfg.n_max,
        lowercase=cfg.lowercase,
        stop_words=stop_words,
    )


def vectorizer_config_from(cfg: ServiceConfig) -> VectorizerConfig:
    return VectorizerConfig(
        min_df=cfg.min_df,
        max_df=cfg.max_df,
        use_tfidf=cfg.use_tfidf,
        clamp_negative_idf=cfg.clamp_negative_idf,
        l2_normalize=cfg.l2_normalize,
    )


def grid_spec_from(cfg: ServiceConfig) -> GridSearchSpec:
    """Default grids narrowed by the algorithm allow-list and penalty kinds."""
    grids = {}
    for name, grid in default_algorithm_grids().items():
        if name not in cfg.algorithms:
            continue
        if name == "logistic":
            grid = tuple(h for h in grid if h["reg"] in cfg.regularization)
            if not grid:
                grid = tuple({"reg": r, "strength": 0.01} for r in cfg.regularization)
        grids[name] = grid
    return GridSearchSpec(
        tokenizer_grid=(tokenizer_config_from(cfg),),
        vectorizer_grid=(vectorizer_config_from(cfg),),
        algorithm_grids=grids,
        cv_folds=cfg.cv_folds,
        parallel_jobs=cfg.parallel_jobs,
        seed=cfg.seed,
    )

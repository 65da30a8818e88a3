"""Run configuration: flat INI sections, every protocol constant surfaced as
a named key (thresholds zh 0.7 / en 0.8, temperatures 0/0.3/0.6/0.9, window
32) so deviations from the defaults show up in config diffs."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from biaseval.corpus import DEFAULT_TEMPERATURES, LANGUAGES, MERGE_THRESHOLDS, PROMPT_IDS
from biaseval.llm.client import ANNOTATION_TEMPERATURE
from biaseval.ranking import DEFAULT_EPSILON, DEFAULT_MAX_ITER, DEFAULT_TOL


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    languages: tuple[str, ...] = LANGUAGES
    temperatures: tuple[float, ...] = DEFAULT_TEMPERATURES
    prompts: tuple[str, ...] = PROMPT_IDS
    seed: int = 7
    thresholds: dict[str, float] = field(default_factory=lambda: dict(MERGE_THRESHOLDS))
    mattr_window: int = 32
    mattr_window_mode: str = "n-l"
    epsilon: float = DEFAULT_EPSILON
    ranking_tol: float = DEFAULT_TOL
    ranking_max_iter: int = DEFAULT_MAX_ITER
    repetitions: int = 12
    tuple_size: int = 4
    generation_rounds: int = 2
    annotation_temperature: float = ANNOTATION_TEMPERATURE
    llm_base_url: str = ""
    llm_model: str = "gpt-3.5-turbo"
    requests_per_minute: float = 600.0
    max_retries: int = 5
    scorer_endpoint: str = ""
    registry_path: str = ""
    indicators_path: str = ""
    countries_limit: int = 0          # 0 means all countries
    service_port: int = 8080
    annotators: dict[str, str] = field(default_factory=dict)   # id -> token
    arbiter: dict[str, str] = field(default_factory=dict)      # id -> token

    def validate(self):
        for lang, threshold in self.thresholds.items():
            if not 0.0 < threshold <= 1.0:
                raise ConfigError(f"threshold for {lang} must be in (0,1], got {threshold}")
        for lang in self.languages:
            if lang not in self.thresholds:
                raise ConfigError(f"no merge threshold configured for language {lang!r}")
        for temp in self.temperatures:
            if not 0.0 <= temp <= 2.0:
                raise ConfigError(f"temperature {temp} outside [0, 2]")
        unknown = set(self.prompts) - set(PROMPT_IDS)
        if unknown:
            raise ConfigError(f"unknown prompt ids: {sorted(unknown)}")
        if self.mattr_window < 1:
            raise ConfigError("mattr window must be >= 1")
        if self.mattr_window_mode not in ("n-l", "n-l+1"):
            raise ConfigError(f"bad mattr window mode {self.mattr_window_mode!r}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be >= 0")
        if self.repetitions < 1 or self.tuple_size < 2:
            raise ConfigError("bad schedule parameters")
        return self


def _split(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _parse_accounts(raw: str) -> dict[str, str]:
    accounts = {}
    for part in _split(raw):
        if ":" not in part:
            raise ConfigError(f"account spec must be id:token, got {part!r}")
        annotator_id, token = part.split(":", 1)
        accounts[annotator_id.strip()] = token.strip()
    return accounts


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read an INI config; missing file or sections keep the defaults."""
    config = RunConfig()
    if path is None:
        return config.validate()
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    try:
        if parser.has_section("run"):
            run = parser["run"]
            if "languages" in run:
                config.languages = tuple(_split(run["languages"]))
            if "temperatures" in run:
                config.temperatures = tuple(float(v) for v in _split(run["temperatures"]))
            if "prompts" in run:
                config.prompts = tuple(_split(run["prompts"]))
            if "seed" in run:
                config.seed = run.getint("seed")
            if "countries_limit" in run:
                config.countries_limit = run.getint("countries_limit")
            if "registry" in run:
                config.registry_path = run["registry"]
        if parser.has_section("merge"):
            merge = parser["merge"]
            for lang in list(config.thresholds) + list(config.languages):
                key = f"threshold_{lang}"
                if key in merge:
                    config.thresholds[lang] = merge.getfloat(key)
        if parser.has_section("mattr"):
            mattr = parser["mattr"]
            if "window" in mattr:
                config.mattr_window = mattr.getint("window")
            if "windows" in mattr:
                config.mattr_window_mode = mattr["windows"].strip()
        if parser.has_section("ranking"):
            ranking = parser["ranking"]
            if "epsilon" in ranking:
                config.epsilon = ranking.getfloat("epsilon")
            if "tol" in ranking:
                config.ranking_tol = ranking.getfloat("tol")
            if "max_iter" in ranking:
                config.ranking_max_iter = ranking.getint("max_iter")
        if parser.has_section("bws"):
            bws = parser["bws"]
            if "repetitions" in bws:
                config.repetitions = bws.getint("repetitions")
            if "tuple_size" in bws:
                config.tuple_size = bws.getint("tuple_size")
        if parser.has_section("llm"):
            llm = parser["llm"]
            config.llm_base_url = llm.get("base_url", config.llm_base_url)
            config.llm_model = llm.get("model", config.llm_model)
            if "rounds" in llm:
                config.generation_rounds = llm.getint("rounds")
            if "annotation_temperature" in llm:
                config.annotation_temperature = llm.getfloat("annotation_temperature")
            if "requests_per_minute" in llm:
                config.requests_per_minute = llm.getfloat("requests_per_minute")
            if "max_retries" in llm:
                config.max_retries = llm.getint("max_retries")
        if parser.has_section("scorer"):
            config.scorer_endpoint = parser["scorer"].get("endpoint", "")
        if parser.has_section("analysis"):
            config.indicators_path = parser["analysis"].get("indicators", "")
        if parser.has_section("service"):
            service = parser["service"]
            if "port" in service:
                config.service_port = service.getint("port")
            if "annotators" in service:
                config.annotators = _parse_accounts(service["annotators"])
            if "arbiter" in service:
                config.arbiter = _parse_accounts(service["arbiter"])
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config.validate()

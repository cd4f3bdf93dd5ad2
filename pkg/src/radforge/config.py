"""Pipeline configuration: TOML file with ${ENV_VAR} interpolation in
string values, validated into a typed config object.
"""
from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .agents import AgentGateway, EchoRule, HttpBackend, MockBackend
from .errors import ConfigError

_ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value):
    if isinstance(value, str):
        def sub(match):
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"environment variable {name} referenced in config is not set")
            return os.environ[name]

        return _ENV_PATTERN.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass
class AgentConfig:
    kind: str = "mock"
    endpoint: str = ""
    model: str = ""
    api_key_env: str | None = None
    retry_budget: int = 4
    backoff_base: float = 0.5
    timeout: float = 120.0
    max_in_flight: int = 4
    cache_dir: str | None = None
    fixtures: str | None = None
    default_rule: str = "echo"  # mock only: echo | static | error
    default_reply: str | None = None


@dataclass
class PipelineConfig:
    corpus_iu: str | None = None
    corpus_mimic: str | None = None
    split_iu_ratio: str = "7:1:2"
    split_mimic_ratio: str | None = None
    split_mimic_official: str | None = None
    split_seed: int = 0
    kg_path: str | None = None
    keep_organs: list[str] = field(default_factory=list)
    subgroups: int = 3
    tree_seed: int = 0
    n_iu: int = 0
    n_mimic: int = 0
    sample_seed: int = 0
    agent: AgentConfig = field(default_factory=AgentConfig)
    gate_threshold: float = 0.3
    regenerate_with_images: bool = False
    composition: str = "reasoning_only"
    require_approval: bool = False
    output_dir: str = "out"
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def load_config(path: str | Path) -> PipelineConfig:
    """Parse, interpolate, and validate a pipeline config file. Relative
    paths inside the file resolve against the file's directory."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}") from e
    raw = _interpolate(raw)

    corpus = raw.get("corpus", {})
    split = raw.get("split", {})
    tree = raw.get("tree", {})
    sample = raw.get("sample", {})
    agent_raw = raw.get("agent", {})
    gate = raw.get("gate", {})
    export = raw.get("export", {})
    curation = raw.get("curation", {})
    output = raw.get("output", {})

    agent = AgentConfig(
        kind=agent_raw.get("kind", "mock"),
        endpoint=agent_raw.get("endpoint", ""),
        model=agent_raw.get("model", ""),
        api_key_env=agent_raw.get("api_key_env"),
        retry_budget=int(agent_raw.get("retry_budget", 4)),
        backoff_base=float(agent_raw.get("backoff_base", 0.5)),
        timeout=float(agent_raw.get("timeout", 120.0)),
        max_in_flight=int(agent_raw.get("max_in_flight", 4)),
        cache_dir=agent_raw.get("cache_dir"),
        fixtures=agent_raw.get("fixtures"),
        default_rule=agent_raw.get("default_rule", "echo"),
        default_reply=agent_raw.get("default_reply"),
    )
    config = PipelineConfig(
        corpus_iu=corpus.get("iu"),
        corpus_mimic=corpus.get("mimic"),
        split_iu_ratio=split.get("iu_ratio", "7:1:2"),
        split_mimic_ratio=split.get("mimic_ratio"),
        split_mimic_official=split.get("mimic_official"),
        split_seed=int(split.get("seed", 0)),
        kg_path=tree.get("kg") or None,
        keep_organs=list(tree.get("keep_organs", [])),
        subgroups=int(tree.get("k", 3)),
        tree_seed=int(tree.get("seed", 0)),
        n_iu=int(sample.get("n_iu", 0)),
        n_mimic=int(sample.get("n_mimic", 0)),
        sample_seed=int(sample.get("seed", 0)),
        agent=agent,
        gate_threshold=float(gate.get("threshold", 0.3)),
        regenerate_with_images=bool(gate.get("regenerate_with_images", False)),
        composition=export.get("composition", "reasoning_only"),
        require_approval=bool(curation.get("require_approval", False)),
        output_dir=output.get("dir", "out"),
        base_dir=path.parent,
    )
    _validate(config)
    return config


def _validate(config: PipelineConfig) -> None:
    if config.agent.kind not in ("mock", "http"):
        raise ConfigError(f"agent.kind must be 'mock' or 'http', got {config.agent.kind!r}")
    if config.agent.kind == "http" and not config.agent.endpoint:
        raise ConfigError("agent.kind 'http' requires agent.endpoint")
    if config.agent.default_rule not in ("echo", "static", "error"):
        raise ConfigError(f"agent.default_rule must be echo|static|error, got {config.agent.default_rule!r}")
    for label, value in (("sample.n_iu", config.n_iu), ("sample.n_mimic", config.n_mimic)):
        if value < 0:
            raise ConfigError(f"{label} must be non-negative, got {value}")
    if config.subgroups < 1:
        raise ConfigError(f"tree.k must be >= 1, got {config.subgroups}")
    if not 0.0 <= config.gate_threshold <= 1.0:
        raise ConfigError(f"gate.threshold must lie in [0, 1], got {config.gate_threshold}")
    if config.composition not in ("reasoning_only", "reasoning_plus_reflection"):
        raise ConfigError(f"unknown export.composition {config.composition!r}")
    for label, p in (
        ("corpus.iu", config.corpus_iu),
        ("corpus.mimic", config.corpus_mimic),
        ("split.mimic_official", config.split_mimic_official),
        ("tree.kg", config.kg_path),
        ("agent.fixtures", config.agent.fixtures),
    ):
        resolved = config.resolve(p)
        if resolved is not None and not resolved.exists():
            raise ConfigError(f"{label} path does not exist: {resolved}")


def build_gateway(config: PipelineConfig) -> AgentGateway:
    """Instantiate the agent gateway described by the config. For a mock
    backend with the echo rule, register report texts on
    `gateway.backend.echo` before use."""
    agent = config.agent
    if agent.kind == "http":
        backend = HttpBackend(
            endpoint=agent.endpoint,
            model=agent.model,
            api_key_env=agent.api_key_env,
            retry_budget=agent.retry_budget,
            backoff_base=agent.backoff_base,
            timeout=agent.timeout,
        )
    else:
        echo = EchoRule() if agent.default_rule == "echo" else None
        default_reply = agent.default_reply if agent.default_rule == "static" else None
        if agent.fixtures:
            backend = MockBackend.from_fixture_file(
                config.resolve(agent.fixtures), default_reply=default_reply, echo=echo
            )
        else:
            backend = MockBackend(default_reply=default_reply, echo=echo)
    cache_dir = config.resolve(agent.cache_dir)
    return AgentGateway(backend, cache_dir=cache_dir, max_in_flight=agent.max_in_flight)

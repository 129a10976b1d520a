"""Run configuration: key/value config files plus flag overrides.

Config file grammar (a deliberately small TOML-like subset, parsed here so
the package has no parser dependency):

    # comment lines start with '#'; blank lines are ignored
    [section]                         # letters, digits, '.', '-', '_'
    key = "quoted string"             # supports \\" \\\\ \\n \\t escapes
    key = bare string until EOL       # no quotes needed for simple values
    key = 42                          # integer
    key = 3.14                        # float
    key = true                        # booleans: true / false
    key = ["a", "b", 3]               # flat list of scalars

Keys before any section header land in the "" section. Flags override file
values (standard precedence).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .batching import HeuristicCounter, TokenCounter
from .errors import ConfigError
from .gateway import Backend, Gateway, HttpBackend, ScriptedBackend
from .model import GenerationParams
from .pipeline import STAGE_MAX_TOKENS, PipelineConfig
from .prompts import GeneralResources, TemplateSet

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9._-]+)\]$")
_KEY_RE = re.compile(r"^([A-Za-z0-9._-]+)\s*=\s*(.+)$")


def _parse_scalar(raw: str, where: str) -> Any:
    raw = raw.strip()
    if raw.startswith('"'):
        if not raw.endswith('"') or len(raw) < 2:
            raise ConfigError(f"{where}: unterminated string literal")
        return _unescape(raw[1:-1], where)
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if re.fullmatch(r"[+-]?\d+", raw):
        return int(raw)
    if re.fullmatch(r"[+-]?(\d+\.\d*|\.\d+|\d+(\.\d*)?[eE][+-]?\d+)", raw):
        return float(raw)
    return raw


def _unescape(body: str, where: str) -> str:
    out = []
    i = 0
    escapes = {'"': '"', "\\": "\\", "n": "\n", "t": "\t"}
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            if i + 1 >= len(body) or body[i + 1] not in escapes:
                raise ConfigError(f"{where}: unsupported escape in string literal")
            out.append(escapes[body[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _parse_value(raw: str, where: str) -> Any:
    raw = raw.strip()
    if raw.startswith("["):
        if not raw.endswith("]"):
            raise ConfigError(f"{where}: unterminated list")
        inner = raw[1:-1].strip()
        if not inner:
            return []
        # Split on commas outside quotes.
        parts, depth, current = [], False, []
        for ch in inner:
            if ch == '"':
                depth = not depth
                current.append(ch)
            elif ch == "," and not depth:
                parts.append("".join(current))
                current = []
            else:
                current.append(ch)
        parts.append("".join(current))
        return [_parse_scalar(p, where) for p in parts]
    return _parse_scalar(raw, where)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, Any]]:
    """Parse the documented key/value grammar into nested dicts."""
    sections: dict[str, dict[str, Any]] = {"": {}}
    current = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        section_match = _SECTION_RE.match(stripped)
        if section_match:
            current = section_match.group(1)
            sections.setdefault(current, {})
            continue
        key_match = _KEY_RE.match(stripped)
        if not key_match:
            raise ConfigError(f"{where}: expected 'key = value' or '[section]'")
        key, raw_value = key_match.groups()
        sections[current][key] = _parse_value(raw_value, where)
    return sections


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI command (or the service) needs to drive a run."""

    dataset: str | None = None
    run_dir: str | None = None
    name: str | None = None
    backend_kind: str = "scripted"
    backend_script: str | None = None
    backend_endpoint: str | None = None
    backend_model: str | None = None
    api_key_env: str = "THEMEKIT_API_KEY"
    seed: int = 0
    sample_size: int = 20
    k: int = 3
    parallelism: int = 1
    max_themes: int = 20
    interim_token_reserve: int = 30
    params: GenerationParams = field(default_factory=GenerationParams)
    stage_max_tokens: Mapping[str, int] = field(default_factory=lambda: dict(STAGE_MAX_TOKENS))
    template_dir: str | None = None
    method_definition_path: str | None = None
    quality_checklist_path: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        sections = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
        return cls.from_sections(sections)

    @classmethod
    def from_sections(cls, sections: Mapping[str, Mapping[str, Any]]) -> "RunConfig":
        run = dict(sections.get("run", {}))
        backend = dict(sections.get("backend", {}))
        generation = dict(sections.get("generation", {}))
        stage_tokens = dict(STAGE_MAX_TOKENS)
        for stage, value in dict(sections.get("generation.max_tokens", {})).items():
            stage_tokens[stage] = int(value)
        templates = dict(sections.get("templates", {}))
        resources = dict(sections.get("resources", {}))

        params = GenerationParams(
            temperature=float(generation.get("temperature", 0.0)),
            top_p=float(generation.get("top_p", 1.0)),
            frequency_penalty=float(generation.get("frequency_penalty", 0.0)),
            presence_penalty=float(generation.get("presence_penalty", 0.0)),
            max_tokens=int(generation.get("max_tokens", 2000)),
            context_limit=int(generation.get("context_limit", 8192)),
        )
        return cls(
            dataset=run.get("dataset"),
            run_dir=run.get("run_dir"),
            name=run.get("name"),
            backend_kind=str(backend.get("kind", "scripted")),
            backend_script=backend.get("script"),
            backend_endpoint=backend.get("endpoint"),
            backend_model=backend.get("model"),
            api_key_env=str(backend.get("api_key_env", "THEMEKIT_API_KEY")),
            seed=int(run.get("seed", 0)),
            sample_size=int(run.get("sample_size", 20)),
            k=int(run.get("k", 3)),
            parallelism=int(run.get("parallelism", 1)),
            max_themes=int(run.get("max_themes", 20)),
            interim_token_reserve=int(run.get("interim_token_reserve", 30)),
            params=params,
            stage_max_tokens=stage_tokens,
            template_dir=templates.get("dir"),
            method_definition_path=resources.get("method_definition"),
            quality_checklist_path=resources.get("quality_checklist"),
        )

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """Rebuild a config from the snapshot stored in a run manifest."""
        params_data = dict(data.get("params", {}))
        params = GenerationParams(
            temperature=float(params_data.get("temperature", 0.0)),
            top_p=float(params_data.get("top_p", 1.0)),
            frequency_penalty=float(params_data.get("frequency_penalty", 0.0)),
            presence_penalty=float(params_data.get("presence_penalty", 0.0)),
            max_tokens=int(params_data.get("max_tokens", 2000)),
            context_limit=int(params_data.get("context_limit", 8192)),
        )
        stage_tokens = dict(STAGE_MAX_TOKENS)
        stage_tokens.update({k: int(v) for k, v in dict(data.get("stage_max_tokens", {})).items()})
        return cls(
            dataset=data.get("dataset"),
            run_dir=data.get("run_dir"),
            name=data.get("name"),
            backend_kind=str(data.get("backend_kind", "scripted")),
            backend_script=data.get("backend_script"),
            backend_endpoint=data.get("backend_endpoint"),
            backend_model=data.get("backend_model"),
            api_key_env=str(data.get("api_key_env", "THEMEKIT_API_KEY")),
            seed=int(data.get("seed", 0)),
            sample_size=int(data.get("sample_size", 20)),
            k=int(data.get("k", 3)),
            parallelism=int(data.get("parallelism", 1)),
            max_themes=int(data.get("max_themes", 20)),
            interim_token_reserve=int(data.get("interim_token_reserve", 30)),
            params=params,
            stage_max_tokens=stage_tokens,
            template_dir=data.get("template_dir"),
        )

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Apply non-None flag values over file values."""
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **cleaned) if cleaned else self

    def with_backend_flag(self, flag: str | None) -> "RunConfig":
        """Parse --backend values: 'scripted:<script.json>' or 'http:<endpoint>,<model>'."""
        if flag is None:
            return self
        kind, _, rest = flag.partition(":")
        if kind == "scripted":
            if not rest:
                raise ConfigError("--backend scripted:<script.json> needs a script path")
            return replace(self, backend_kind="scripted", backend_script=rest)
        if kind == "http":
            endpoint, _, model = rest.rpartition(",")
            if not endpoint or not model:
                raise ConfigError("--backend http:<endpoint>,<model> needs both parts")
            return replace(self, backend_kind="http", backend_endpoint=endpoint, backend_model=model)
        raise ConfigError(f"unknown backend kind {kind!r} (use scripted: or http:)")

    # -- factories -------------------------------------------------------------

    def build_backend(self) -> Backend:
        if self.backend_kind == "scripted":
            if not self.backend_script:
                raise ConfigError("scripted backend needs a script file (backend.script)")
            return ScriptedBackend.from_file(self.backend_script)
        if self.backend_kind == "http":
            if not self.backend_endpoint or not self.backend_model:
                raise ConfigError("http backend needs backend.endpoint and backend.model")
            return HttpBackend(
                endpoint=self.backend_endpoint,
                model=self.backend_model,
                api_key_env=self.api_key_env,
            )
        raise ConfigError(f"unknown backend kind {self.backend_kind!r}")

    def build_gateway(self, audit=None, counter: TokenCounter | None = None) -> Gateway:
        return Gateway(self.build_backend(), counter=counter or HeuristicCounter(), audit=audit)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            params=self.params,
            stage_max_tokens=dict(self.stage_max_tokens),
            sample_size=self.sample_size,
            interim_token_reserve=self.interim_token_reserve,
            max_themes=self.max_themes,
            k=self.k,
            parallelism=self.parallelism,
            seed=self.seed,
        )

    def load_templates(self) -> TemplateSet:
        if self.template_dir:
            return TemplateSet.load_dir(self.template_dir)
        return TemplateSet.default()

    def load_resources(self) -> GeneralResources:
        if self.method_definition_path or self.quality_checklist_path:
            return GeneralResources.load(
                method_definition_path=self.method_definition_path,
                quality_checklist_path=self.quality_checklist_path,
            )
        return GeneralResources.default()

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "run_dir": self.run_dir,
            "name": self.name,
            "backend_kind": self.backend_kind,
            "backend_script": self.backend_script,
            "backend_endpoint": self.backend_endpoint,
            "backend_model": self.backend_model,
            "seed": self.seed,
            "sample_size": self.sample_size,
            "k": self.k,
            "parallelism": self.parallelism,
            "max_themes": self.max_themes,
            "params": self.params.to_dict(),
            "stage_max_tokens": dict(self.stage_max_tokens),
            "template_dir": self.template_dir,
        }

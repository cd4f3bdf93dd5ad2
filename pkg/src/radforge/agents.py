"""Uniform access to every LLM/LVM agent role over one chat-completion
endpoint, with on-disk response caching, retries with exponential backoff,
a bounded in-flight budget, and deterministic mock backends for tests.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import mimetypes
import os
import string
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import requests

from .corpus import segment_sentences
from .errors import AgentTransportError, ConfigError, SchemaError

log = logging.getLogger("radforge.agents")

ROLE_NAMES = (
    "classify",
    "summarize",
    "describe_organ",
    "judge_conditions",
    "corrupt_description",
    "regenerate_report",
)
_IMAGE_ROLES = frozenset(
    {"describe_organ", "judge_conditions", "corrupt_description", "regenerate_report"}
)
_TRANSIENT_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class AgentRole:
    name: str
    system: str
    prompt_template: str
    expects_images: bool
    temperature: float

    def __post_init__(self):
        if self.expects_images and self.name not in _IMAGE_ROLES:
            raise SchemaError(f"role {self.name!r} may not expect images")


def load_roles() -> dict[str, AgentRole]:
    """Load the versioned role definitions and prompt templates bundled
    with the package."""
    prompt_dir = resources.files("radforge") / "data" / "prompts"
    meta = json.loads((prompt_dir / "roles.json").read_text(encoding="utf-8"))
    roles: dict[str, AgentRole] = {}
    for name in ROLE_NAMES:
        entry = meta[name]
        roles[name] = AgentRole(
            name=name,
            system=entry["system"],
            prompt_template=(prompt_dir / entry["template"]).read_text(encoding="utf-8").rstrip("\n"),
            expects_images=entry["expects_images"],
            temperature=entry["temperature"],
        )
    return roles


def template_placeholders(template: str) -> set[str]:
    return {name for _, name, _, _ in string.Formatter().parse(template) if name}


def render_prompt(role: AgentRole, fills: dict[str, str]) -> str:
    """Deterministic placeholder substitution; unknown or missing fills are
    hard errors."""
    placeholders = template_placeholders(role.prompt_template)
    missing = placeholders - fills.keys()
    if missing:
        raise SchemaError(f"missing placeholder {sorted(missing)[0]}")
    extra = fills.keys() - placeholders
    if extra:
        raise SchemaError(f"unknown placeholder {sorted(extra)[0]}")
    return role.prompt_template.format(**fills)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AgentRequest:
    role: AgentRole
    prompt: str
    image_refs: tuple[str, ...] = ()
    temperature: float = 0.0

    @property
    def cache_key(self) -> str:
        payload = "\x00".join([self.role.name, self.prompt, *self.image_refs])
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AgentReply:
    text: str
    latency_ms: int
    from_cache: bool


class HttpBackend:
    """Chat-completion client: system preamble + user text with inline
    base64 images, transient-failure retries with exponential backoff."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str | None = None,
        retry_budget: int = 4,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.retry_budget = retry_budget
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.session = session or requests.Session()

    def _image_part(self, ref: str) -> dict:
        path = Path(ref)
        if not path.exists():
            raise ConfigError(f"image attachment not found: {ref}")
        mime = mimetypes.guess_type(ref)[0] or "image/png"
        encoded = base64.b64encode(path.read_bytes()).decode("ascii")
        return {"type": "image_url", "image_url": {"url": f"data:{mime};base64,{encoded}"}}

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ConfigError(f"API key environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    @staticmethod
    def _reply_text(payload: dict) -> str:
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as e:
            raise SchemaError(f"chat-completion reply missing choices[0].message.content: {e}") from e
        if isinstance(content, list):
            return "".join(part.get("text", "") for part in content)
        return content or ""

    def send(self, role: AgentRole, prompt: str, image_refs: tuple[str, ...], temperature: float) -> str:
        user_content: str | list
        if image_refs:
            user_content = [{"type": "text", "text": prompt}]
            user_content.extend(self._image_part(ref) for ref in image_refs)
        else:
            user_content = prompt
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": role.system},
                {"role": "user", "content": user_content},
            ],
            "temperature": temperature,
        }
        attempts = 0
        last_status: int | None = None
        while True:
            attempts += 1
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
                )
                last_status = resp.status_code
                if resp.status_code == 200:
                    return self._reply_text(resp.json())
                if resp.status_code not in _TRANSIENT_STATUSES:
                    raise AgentTransportError(
                        f"agent endpoint returned {resp.status_code}",
                        status=resp.status_code,
                        attempts=attempts,
                    )
            except requests.RequestException as e:
                last_status = None
                log.warning("agent request failed (attempt %d): %s", attempts, e)
            if attempts > self.retry_budget:
                raise AgentTransportError(
                    f"agent endpoint failed after {attempts} attempts",
                    status=last_status,
                    attempts=attempts,
                )
            time.sleep(self.backoff_base * (2 ** (attempts - 1)))


class EchoRule:
    """Deterministic default-reply rule for the mock backend.

    Parses the bundled prompt templates and answers from a registry of
    ground-truth report texts, making every pipeline a pure function of
    its inputs. Used for tests and offline dry-runs.
    """

    _NEGATION_CUES = ("no", "not", "without", "free of", "negative for", "clear of")

    def __init__(self, reports: dict[str, str] | None = None):
        self.reports = dict(reports or {})

    def register(self, report_id: str, report_text: str) -> None:
        self.reports[report_id] = report_text

    @staticmethod
    def _line_value(prompt: str, prefix: str) -> str:
        for line in prompt.splitlines():
            if line.startswith(prefix):
                return line[len(prefix):].strip()
        raise SchemaError(f"echo rule: prompt has no {prefix!r} line")

    def _ground_truth(self, prompt: str) -> str:
        first = prompt.splitlines()[0]
        if not (first.startswith("Report ") and first.endswith(".")):
            raise SchemaError("echo rule: prompt does not open with a report id line")
        report_id = first[len("Report "):-1]
        if report_id not in self.reports:
            raise SchemaError(f"echo rule: no registered report {report_id!r}")
        return self.reports[report_id]

    @classmethod
    def _negated(cls, sentence_lower: str, keyword: str) -> bool:
        padded = f" {sentence_lower} "
        pos = padded.find(keyword)
        if pos < 0:
            return False
        before = padded[:pos]
        return any(f" {cue} " in f"{before} " for cue in cls._NEGATION_CUES)

    def reply(self, role: AgentRole, prompt: str) -> str:
        if role.name == "classify":
            sentence = self._line_value(prompt, "Sentence: ").lower()
            labels = self._line_value(prompt, "Categories: ").split(" | ")
            for label in labels:
                if label.lower() in sentence:
                    return label
            return "none"
        if role.name == "summarize":
            lines = prompt.splitlines()
            start = lines.index("Sentences:") + 1
            first = lines[start] if start < len(lines) else ""
            words = [w.strip(".,!?").lower() for w in first.split()]
            return " ".join(words[:6])
        if role.name == "describe_organ":
            organ = self._line_value(prompt, "Organ: ")
            truth = self._ground_truth(prompt)
            matches = [
                s.text for s in segment_sentences(truth) if organ.lower() in s.text.lower()
            ]
            return " ".join(matches) if matches else f"No remarkable findings for the {organ}."
        if role.name == "judge_conditions":
            conditions = self._line_value(prompt, "Conditions: ").split(" | ")
            truth = self._ground_truth(prompt)
            truth_sentences = segment_sentences(truth)
            lines = []
            for condition in conditions:
                needle = condition.lower()
                hit = next((s.text for s in truth_sentences if needle in s.text.lower()), None)
                if hit is None:
                    lines.append(f"{condition}\tno\tNo evidence of {condition.lower()}.")
                else:
                    verdict = "no" if self._negated(hit.lower(), needle) else "yes"
                    lines.append(f"{condition}\t{verdict}\t{hit}")
            return "\n".join(lines)
        if role.name == "corrupt_description":
            organ = self._line_value(prompt, "Organ: ")
            description = self._line_value(prompt, "Original description: ").lower()
            normal_words = ("no ", "normal", "clear", "unremarkable", "intact", "patent", "without")
            if any(w in f"{description} " for w in normal_words):
                return f"There is a marked acute abnormality of the {organ}."
            return f"Entirely normal appearance of the {organ} with no abnormality."
        if role.name == "regenerate_report":
            return self._ground_truth(prompt)
        raise SchemaError(f"echo rule: unsupported role {role.name!r}")


class MockBackend:
    """Fixture-driven backend: exact replies by rendered-prompt hash, then
    an optional default rule (EchoRule or a static string)."""

    def __init__(
        self,
        fixtures: dict[str, str] | None = None,
        default_reply: str | None = None,
        echo: EchoRule | None = None,
    ):
        self.fixtures = dict(fixtures or {})
        self.default_reply = default_reply
        self.echo = echo

    @classmethod
    def from_fixture_file(cls, path, default_reply=None, echo=None) -> "MockBackend":
        fixtures: dict[str, str] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    fixtures[obj["prompt_hash"]] = obj["reply"]
                except (json.JSONDecodeError, KeyError) as e:
                    raise SchemaError(f"{path}:{lineno}: bad mock fixture: {e}") from e
        return cls(fixtures, default_reply=default_reply, echo=echo)

    def send(self, role: AgentRole, prompt: str, image_refs: tuple[str, ...], temperature: float) -> str:
        key = prompt_hash(prompt)
        if key in self.fixtures:
            return self.fixtures[key]
        if self.echo is not None:
            return self.echo.reply(role, prompt)
        if self.default_reply is not None:
            return self.default_reply
        raise SchemaError(f"mock backend has no reply for role {role.name!r} prompt hash {key[:12]}…")


class AgentGateway:
    """Shared front door for all agent calls: caching, request budget, and
    role-aware prompt rendering."""

    def __init__(
        self,
        backend,
        roles: dict[str, AgentRole] | None = None,
        cache_dir: str | Path | None = None,
        max_in_flight: int = 4,
    ):
        self.backend = backend
        self.roles = roles or load_roles()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._budget = threading.BoundedSemaphore(max_in_flight)

    def role(self, name: str) -> AgentRole:
        try:
            return self.roles[name]
        except KeyError:
            raise SchemaError(f"unknown agent role {name!r}") from None

    def make_request(
        self,
        role_name: str,
        fills: dict[str, str],
        image_refs: tuple[str, ...] = (),
        temperature: float | None = None,
    ) -> AgentRequest:
        role = self.role(role_name)
        if image_refs and not role.expects_images:
            raise SchemaError(f"role {role_name!r} does not accept image attachments")
        return AgentRequest(
            role=role,
            prompt=render_prompt(role, fills),
            image_refs=tuple(image_refs),
            temperature=role.temperature if temperature is None else temperature,
        )

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def complete(self, request: AgentRequest) -> AgentReply:
        if self.cache_dir:
            path = self._cache_path(request.cache_key)
            if path.exists():
                obj = json.loads(path.read_text(encoding="utf-8"))
                return AgentReply(text=obj["text"], latency_ms=obj["latency_ms"], from_cache=True)
        start = time.monotonic()
        with self._budget:
            text = self.backend.send(
                request.role, request.prompt, request.image_refs, request.temperature
            )
        if text is None:
            raise SchemaError("backend returned null reply text")
        latency_ms = int((time.monotonic() - start) * 1000)
        if self.cache_dir:
            path = self._cache_path(request.cache_key)
            tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
            tmp.write_text(
                json.dumps({"text": text, "latency_ms": latency_ms}, ensure_ascii=False),
                encoding="utf-8",
            )
            tmp.replace(path)
        return AgentReply(text=text, latency_ms=latency_ms, from_cache=False)

    def ask(
        self,
        role_name: str,
        fills: dict[str, str],
        image_refs: tuple[str, ...] = (),
        temperature: float | None = None,
    ) -> str:
        return self.complete(self.make_request(role_name, fills, image_refs, temperature)).text

"""Provider-abstracted access to multimodal models.

Pieces:

* instruction templates with `{{var}}` placeholders, rendered with exactly
  their required variable set;
* a content-addressed media cache so a file is uploaded at most once per
  provider (index: JSON-lines records appended to media_cache.json, which
  survives a crash mid-append because the reader skips partial lines);
* `submit`, which retries transient provider failures with exponential
  backoff and re-prompts once with the validation error when a response
  fails its schema, then gives up (ProviderExhausted);
* a deterministic mock provider for offline runs and a minimal HTTP
  provider for real endpoints.

Response schemas are the gate between model output and the rest of the
pipeline: nothing unvalidated leaves this module.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import jsonschema

from .errors import ProviderError, ProviderExhausted, TemplateError
from .model import digest_file

DEFAULT_RETRIES = 3
DEFAULT_REPAIR_ATTEMPTS = 1
DEFAULT_CONCURRENCY = 4
DEFAULT_BACKOFF_BASE = 0.25

_VAR_RE = re.compile(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}")

TEMPLATE_SCHEMAS = {
    "classify_slide_type": "slide_analysis_response",
    "transcribe_talk": "transcript_response",
    "generate_content_report": "content_report_response",
}


@dataclass(frozen=True)
class InstructionTemplate:
    name: str
    body: str
    required_vars: frozenset[str]
    expected_schema: str


@dataclass(frozen=True)
class MediaHandle:
    content_digest: str
    provider_ref: str
    uploaded_at: str


@dataclass(frozen=True)
class ModelRequest:
    template_name: str
    rendered_prompt: str
    media: tuple[MediaHandle, ...]
    model_id: str
    # Structured copy of the prompt variables; offline providers synthesize
    # deterministic responses from it, network providers ignore it.
    context: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    parsed: dict | None
    parse_failure: str | None = None
    usage: Mapping[str, int] | None = None


def load_templates(directory: Path | None = None) -> dict[str, InstructionTemplate]:
    templates: dict[str, InstructionTemplate] = {}
    if directory is not None:
        entries = [(p.stem, p.read_text("utf-8")) for p in sorted(Path(directory).glob("*.tmpl"))]
    else:
        root = resources.files("partitur") / "templates"
        entries = [(p.name.removesuffix(".tmpl"), p.read_text(encoding="utf-8"))
                   for p in sorted(root.iterdir(), key=lambda p: p.name)
                   if p.name.endswith(".tmpl")]
    for name, body in entries:
        schema = TEMPLATE_SCHEMAS.get(name)
        if schema is None:
            raise TemplateError(f"template {name!r} has no registered response schema")
        templates[name] = InstructionTemplate(
            name=name,
            body=body,
            required_vars=frozenset(_VAR_RE.findall(body)),
            expected_schema=schema,
        )
    return templates


def render_template(template: InstructionTemplate, variables: Mapping[str, Any]) -> str:
    provided = set(variables)
    missing = sorted(template.required_vars - provided)
    if missing:
        raise TemplateError(f"template {template.name!r}: missing variables: {', '.join(missing)}")
    extra = sorted(provided - template.required_vars)
    if extra:
        raise TemplateError(f"template {template.name!r}: unexpected variables: {', '.join(extra)}")
    return _VAR_RE.sub(lambda m: str(variables[m.group(1)]), template.body)


_SCHEMA_CACHE: dict[str, jsonschema.Draft202012Validator] = {}


def response_validator(schema_name: str) -> jsonschema.Draft202012Validator:
    if schema_name not in _SCHEMA_CACHE:
        raw = (resources.files("partitur") / "schemas" / f"{schema_name}.schema.json").read_text(
            encoding="utf-8")
        _SCHEMA_CACHE[schema_name] = jsonschema.Draft202012Validator(json.loads(raw))
    return _SCHEMA_CACHE[schema_name]


class MediaCache:
    """Digest-keyed upload records; lookups precede any upload."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], MediaHandle] = {}
        if self.path.is_file():
            for line in self.path.read_text("utf-8").splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    handle = MediaHandle(record["content_digest"], record["provider_ref"],
                                         record["uploaded_at"])
                    self._entries[(record["provider"], handle.content_digest)] = handle
                except (json.JSONDecodeError, KeyError, TypeError):
                    continue  # partial line from an interrupted append

    def get(self, provider: str, digest: str) -> MediaHandle | None:
        with self._lock:
            return self._entries.get((provider, digest))

    def put(self, provider: str, handle: MediaHandle) -> None:
        record = {
            "provider": provider,
            "content_digest": handle.content_digest,
            "provider_ref": handle.provider_ref,
            "uploaded_at": handle.uploaded_at,
        }
        with self._lock:
            self._entries[(provider, handle.content_digest)] = handle
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


class Provider(Protocol):
    name: str

    def upload(self, path: Path, digest: str) -> str: ...

    def generate(self, request: ModelRequest) -> str: ...


def _request_digest(request: ModelRequest) -> str:
    h = hashlib.sha256()
    h.update(request.template_name.encode())
    h.update(request.rendered_prompt.encode())
    for handle in request.media:
        h.update(handle.content_digest.encode())
    return h.hexdigest()


class MockProvider:
    """Offline provider: canned responses by (template, media digest), else
    deterministic synthesis seeded by the request digest."""

    name = "mock"

    def __init__(self):
        self._canned: dict[tuple[str, str | None], dict] = {}
        self.uploads = 0
        self.generate_calls = 0
        self._lock = threading.Lock()

    def register(self, template_name: str, response: dict, *, media_digest: str | None = None):
        self._canned[(template_name, media_digest)] = response

    def upload(self, path: Path, digest: str) -> str:
        with self._lock:
            self.uploads += 1
        return f"mock://{digest[:16]}"

    def generate(self, request: ModelRequest) -> str:
        with self._lock:
            self.generate_calls += 1
        for handle in request.media:
            canned = self._canned.get((request.template_name, handle.content_digest))
            if canned is not None:
                return json.dumps(canned)
        canned = self._canned.get((request.template_name, None))
        if canned is not None:
            return json.dumps(canned)
        return json.dumps(self._synthesize(request))

    def _synthesize(self, request: ModelRequest) -> dict:
        rng = random.Random(int(_request_digest(request)[:12], 16))
        if request.template_name == "classify_slide_type":
            return _mock_analysis(request.context, rng)
        if request.template_name == "transcribe_talk":
            return _mock_transcript(request.context, rng)
        if request.template_name == "generate_content_report":
            return _mock_report(request.context)
        raise ProviderError(f"mock provider has no behavior for template {request.template_name!r}")


def _mock_analysis(context: Mapping[str, Any], rng: random.Random) -> dict:
    index = int(context.get("slide_index", 0))
    if index == 1:
        slide_type = "title"
    else:
        slide_type = rng.choice(["technical_architecture", "conceptual", "data"])
    return {
        "slide_type": slide_type,
        "content_summary": f"Slide {index}: key material presented on this slide.",
        "comprehensive_analysis": (
            f"Slide {index} develops one step of the talk's argument; offline analysis "
            "records its visual structure for downstream assembly."),
        "academic_significance": rng.choice(["medium", "high"]),
    }


_MOCK_PHRASES = (
    "So, um, in this part we walk through the material shown here.",
    "And then, uh, we move on to the next stage of the argument.",
    "Now, you know, this is where the interesting result appears.",
    "Here we have, um, we have the comparison laid out in detail.",
)


def _mock_transcript(context: Mapping[str, Any], rng: random.Random) -> dict:
    duration_ms = int(context.get("duration_ms", 0))
    segments = []
    cursor = 0
    k = 0
    while cursor + 3_000 <= duration_ms:
        length = min(6_000, duration_ms - cursor)
        segments.append({
            "start_ms": cursor,
            "end_ms": cursor + length,
            "text": _MOCK_PHRASES[(k + rng.randrange(0, 4)) % len(_MOCK_PHRASES)],
        })
        cursor += length + 2_000
        k += 1
    return {"segments": segments}


def _mock_report(context: Mapping[str, Any]) -> dict:
    blocks = list(context.get("blocks", []))
    title = str(context.get("title", "the talk"))
    if not blocks:
        raise ProviderError("mock report synthesis needs at least one storyboard block")
    kinds = ("synthesis", "combination", "reorganization", "expansion")
    sections = []
    coverage = []
    for start in range(0, len(blocks), 2):
        group = blocks[start:start + 2]
        number = start // 2 + 1
        speech = " ".join(str(b.get("speech", "")).strip() for b in group).strip()
        sections.append({
            "number": number,
            "title": f"Theme {number} of {title}",
            "outline": [f"Blocks {group[0]['block']}-{group[-1]['block']}",
                        "Deterministic offline synthesis"],
            "text": speech or f"Material from blocks {group[0]['block']}-{group[-1]['block']}.",
            "source_blocks": [b["block"] for b in group],
            "transformation_type": kinds[(number - 1) % len(kinds)],
        })
        for b in group:
            coverage.append({"block": b["block"], "sections": [number]})
    return {
        "overview": f"{title}: {len(blocks)} narrative blocks reorganized into "
                    f"{len(sections)} thematic sections.",
        "sections": sections,
        "block_coverage": coverage,
    }


class HttpProvider:
    """JSON-over-HTTP provider: POST {base}/upload and {base}/generate.

    The bearer token comes from the environment (never from config files);
    a custom transport can be injected for testing.
    """

    name = "http"

    def __init__(self, base_url: str, *, token_env: str = "PARTITUR_API_TOKEN",
                 timeout: float = 60.0, transport=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        token = os.environ.get(token_env, "")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(base_url=self.base_url, headers=headers,
                                    timeout=timeout, transport=transport)

    def upload(self, path: Path, digest: str) -> str:
        response = self._post("/upload", content=Path(path).read_bytes(),
                              headers={"X-Content-Digest": digest})
        ref = response.get("ref")
        if not isinstance(ref, str) or not ref:
            raise ProviderError("upload response carried no ref")
        return ref

    def generate(self, request: ModelRequest) -> str:
        payload = {
            "model_id": request.model_id,
            "template": request.template_name,
            "prompt": request.rendered_prompt,
            "media_refs": [h.provider_ref for h in request.media],
        }
        response = self._post("/generate", json=payload)
        text = response.get("text")
        if not isinstance(text, str):
            raise ProviderError("generate response carried no text")
        return text

    def _post(self, path: str, **kwargs) -> dict:
        import httpx

        try:
            res = self._client.post(path, **kwargs)
        except httpx.HTTPError as exc:
            raise ProviderError(f"transport failure on {path}: {exc}") from exc
        if res.status_code in (429,) or res.status_code >= 500:
            raise ProviderError(f"{path} returned {res.status_code}")
        if res.status_code >= 400:
            raise ProviderExhausted(f"{path} rejected the request: {res.status_code} {res.text[:200]}")
        try:
            return res.json()
        except ValueError as exc:
            raise ProviderError(f"{path} returned non-JSON body") from exc


class Gateway:
    def __init__(self, provider: Provider, cache_path: Path, *,
                 templates: Mapping[str, InstructionTemplate] | None = None,
                 model_ids: Mapping[str, str] | None = None,
                 retries: int = DEFAULT_RETRIES,
                 repair_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
                 concurrency: int = DEFAULT_CONCURRENCY,
                 backoff_base: float = DEFAULT_BACKOFF_BASE,
                 sleeper: Callable[[float], None] = time.sleep):
        self.provider = provider
        self.cache = MediaCache(cache_path)
        self.templates = dict(templates) if templates is not None else load_templates()
        self.model_ids = dict(model_ids or {})
        self.retries = retries
        self.repair_attempts = repair_attempts
        self.concurrency = max(1, concurrency)
        self.backoff_base = backoff_base
        self._sleep = sleeper
        self.uploads_performed = 0

    # -- media -------------------------------------------------------------

    def cache_media(self, path: Path) -> MediaHandle:
        digest = digest_file(path)
        cached = self.cache.get(self.provider.name, digest)
        if cached is not None:
            return cached
        ref = self._with_retries(lambda: self.provider.upload(Path(path), digest),
                                 what=f"upload of {Path(path).name}")
        handle = MediaHandle(
            content_digest=digest,
            provider_ref=ref,
            uploaded_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        )
        self.cache.put(self.provider.name, handle)
        self.uploads_performed += 1
        return handle

    # -- requests ------------------------------------------------------------

    def build_request(self, template_name: str, variables: Mapping[str, Any],
                      media: Sequence[MediaHandle] = (),
                      context: Mapping[str, Any] | None = None) -> ModelRequest:
        template = self.templates.get(template_name)
        if template is None:
            raise TemplateError(f"unknown template {template_name!r}")
        prompt = render_template(template, variables)
        model_id = self.model_ids.get(template_name, self.model_ids.get("default", "mock-model"))
        return ModelRequest(
            template_name=template_name,
            rendered_prompt=prompt,
            media=tuple(media),
            model_id=model_id,
            context=dict(context or {}),
        )

    def submit(self, request: ModelRequest) -> ModelResponse:
        template = self.templates.get(request.template_name)
        if template is None:
            raise TemplateError(f"unknown template {request.template_name!r}")
        validator = response_validator(template.expected_schema)
        prompt = request.rendered_prompt
        failure = "no response"
        for _ in range(self.repair_attempts + 1):
            attempt_request = replace(request, rendered_prompt=prompt)
            raw = self._with_retries(lambda: self.provider.generate(attempt_request),
                                     what=f"generate for {request.template_name}")
            parsed, failure = _parse_against(validator, raw)
            if failure is None:
                return ModelResponse(raw_text=raw, parsed=parsed)
            prompt = (request.rendered_prompt
                      + "\n\nYour previous reply failed validation: " + failure
                      + "\nReturn only a corrected JSON object.")
        raise ProviderExhausted(
            f"{request.template_name}: response still failed its schema after "
            f"{self.repair_attempts} repair attempt(s): {failure}")

    def run(self, template_name: str, variables: Mapping[str, Any],
            media: Sequence[MediaHandle] = (),
            context: Mapping[str, Any] | None = None) -> dict:
        return self.submit(self.build_request(template_name, variables, media, context)).parsed

    def map_submit(self, requests: Sequence[ModelRequest]) -> list[ModelResponse]:
        """Bounded-concurrency submit preserving input order."""
        if len(requests) <= 1 or self.concurrency == 1:
            return [self.submit(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(self.submit, requests))

    # -- retry machinery -----------------------------------------------------

    def _with_retries(self, call: Callable[[], Any], *, what: str):
        delay = self.backoff_base
        for attempt in range(self.retries + 1):
            try:
                return call()
            except ProviderError as exc:
                if attempt == self.retries:
                    raise ProviderExhausted(
                        f"{what} failed after {self.retries + 1} attempts: {exc}") from exc
                self._sleep(delay)
                delay *= 2


def gateway_from_config(config, cache_path: Path, *, provider: Provider | None = None,
                        sleeper: Callable[[float], None] = time.sleep) -> Gateway:
    """Build a Gateway from a PipelineConfig's [gateway] section.

    An explicit provider wins over the configured one (tests inject
    scripted mocks this way).
    """
    gw = config.gateway
    if provider is None:
        if gw.provider == "mock":
            provider = MockProvider()
        elif gw.provider == "http":
            if not gw.base_url:
                raise ProviderError("http provider requires base_url in config")
            provider = HttpProvider(gw.base_url, token_env=gw.token_env)
        else:
            raise ProviderError(f"unknown provider {gw.provider!r}")
    return Gateway(
        provider,
        cache_path,
        model_ids=dict(gw.models),
        retries=gw.retries,
        repair_attempts=gw.repair_attempts,
        concurrency=gw.concurrency,
        backoff_base=gw.backoff_base,
        sleeper=sleeper,
    )


def _parse_against(validator, raw: str) -> tuple[dict | None, str | None]:
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, f"not valid JSON: {exc}"
    errors = sorted(validator.iter_errors(parsed), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "(root)"
        return None, f"schema violation at {where}: {first.message}"
    return parsed, None

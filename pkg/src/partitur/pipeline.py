"""Stage orchestration: gates between stages, staging-directory atomicity,
resume, and run bookkeeping.

Layout per presentation under the work root:

    work/<ID>/
        manifest.json       input
        overrides.json      optional curation overrides
        gateway.toml        optional config (--config wins)
        slides/             extracted page images
        artifacts/          durable per-stage artifacts (resume source)
        media_cache.json    provider upload index
        staging/            bundle under construction
        out/                the promoted bundle (only ever complete)
        run_result.json     status, timings, digests of the last run
        .lock               one run at a time

Every stage writes into staging/, passes its gate (the artifact file is
re-read from disk and checked against its JSON schema plus the model's own
invariants), and only then is copied to artifacts/. When all ten stages
pass, staging/ is renamed onto out/ in one move; any failure discards
staging/, so out/ either holds a complete validated bundle or nothing.
"""

from __future__ import annotations

import fcntl
import json
import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from PIL import Image

from . import faults
from .analysis import analyze_slides
from .config import PipelineConfig
from .curator import (
    build_curation_plan,
    classify_roles,
    detect_overlay_chains,
    load_overrides,
)
from .errors import (
    LockError,
    ManifestError,
    PartiturError,
    ProviderExhausted,
    SchemaValidationError,
    StageInputError,
)
from .extract import extract_slides
from .fingerprint import fingerprint_image
from .gateway import Gateway, MockProvider, gateway_from_config, response_validator
from .intake import load_manifest, resolve_input, validate_inputs
from .model import (
    ARTIFACT_FILES,
    STAGE_ARTIFACTS,
    STAGE_ORDER,
    PipelineResult,
    QualityMetricsReport,
    deserialize_artifact,
    digest_bytes,
    serialize_artifact,
)
from .render import DOCUMENT_NAME, FIGURES_DIR, render_document
from .sync import build_transition_map
from .synthesis import generate_content_report, validate_report
from .storyboard import build_storyboard
from .transcript import assign_speech, transcribe

RUN_RESULT_FILE = "run_result.json"
OVERRIDES_FILE = "overrides.json"
MEDIA_CACHE_FILE = "media_cache.json"
LOCK_FILE = ".lock"

FAILURE_NONE = "none"
FAILURE_BLOCKED = "blocked"
FAILURE_GATE = "gate"
FAILURE_PROVIDER = "provider"

_EXIT_CODES = {FAILURE_NONE: 0, FAILURE_BLOCKED: 2, FAILURE_GATE: 3, FAILURE_PROVIDER: 4}


@dataclass(frozen=True)
class RunOutcome:
    result: PipelineResult
    failure_kind: str

    @property
    def exit_code(self) -> int:
        return _EXIT_CODES[self.failure_kind]


class _StageFailure(PartiturError):
    def __init__(self, message: str, kind: str = FAILURE_GATE):
        super().__init__(message)
        self.kind = kind


class PipelineRunner:
    def __init__(self, presentation_id: str, config: PipelineConfig | None = None, *,
                 work_root: Path = Path("work"), use_mock: bool = False,
                 resume: bool = False, provider=None):
        self.presentation_id = presentation_id
        self.config = config or PipelineConfig()
        self.work_dir = Path(work_root) / presentation_id
        self.use_mock = use_mock
        self.resume = resume
        self._provider = provider
        self._gateway: Gateway | None = None
        self._ctx: dict[str, Any] = {}
        self.staging_dir = self.work_dir / "staging"
        self.artifacts_dir = self.work_dir / "artifacts"
        self.out_dir = self.work_dir / "out"

    # -- public operations ---------------------------------------------------

    def full_pipeline(self) -> RunOutcome:
        if not self.work_dir.is_dir():
            raise ManifestError(f"no working directory for {self.presentation_id!r}: "
                                f"{self.work_dir}")
        with self._lock():
            self._reset_staging()
            timings: list[tuple[str, int]] = []
            digests: list[tuple[str, str]] = []
            for stage in STAGE_ORDER:
                started = time.monotonic()
                try:
                    if not (self.resume and self._try_resume(stage, digests)):
                        self._execute_stage(stage, digests)
                except ProviderExhausted as exc:
                    return self._fail(stage, started, timings, digests,
                                      FAILURE_PROVIDER, exc)
                except _StageFailure as exc:
                    return self._fail(stage, started, timings, digests, exc.kind, exc)
                except PartiturError as exc:
                    kind = FAILURE_BLOCKED if stage == "intake" else FAILURE_GATE
                    return self._fail(stage, started, timings, digests, kind, exc)
                timings.append((stage, _elapsed_ms(started)))
            self._promote()
            result = PipelineResult(
                presentation_id=self.presentation_id, status="COMPLETE",
                failed_stage=None, stage_timings=tuple(timings),
                artifact_digests=tuple(sorted(digests)))
            self._write_run_result(result)
            return RunOutcome(result=result, failure_kind=FAILURE_NONE)

    def run_stage(self, stage: str):
        if stage not in STAGE_ORDER:
            raise StageInputError(f"unknown stage {stage!r}; stages are "
                                  f"{', '.join(STAGE_ORDER)}")
        if not self.work_dir.is_dir():
            raise ManifestError(f"no working directory for {self.presentation_id!r}: "
                                f"{self.work_dir}")
        with self._lock():
            (self.staging_dir / "artifacts").mkdir(parents=True, exist_ok=True)
            for upstream in STAGE_ORDER[:STAGE_ORDER.index(stage)]:
                kind = STAGE_ARTIFACTS.get(upstream)
                if kind is None:
                    continue
                filename = ARTIFACT_FILES[kind]
                path = self._find_artifact(filename)
                if path is None:
                    raise StageInputError(
                        f"stage {stage!r} needs {filename} from {upstream!r}; "
                        f"run that stage first")
                try:
                    self._ctx[kind] = _load_validated(path)
                except PartiturError as exc:
                    raise StageInputError(f"{filename} does not validate: {exc}") from exc
            digests: list[tuple[str, str]] = []
            self._execute_stage(stage, digests)
            kind = STAGE_ARTIFACTS.get(stage)
            return self._ctx.get(kind) if kind else None

    def report(self) -> tuple[PipelineResult, QualityMetricsReport | None]:
        path = self.work_dir / RUN_RESULT_FILE
        if not path.is_file():
            raise StageInputError(
                f"no recorded run for {self.presentation_id!r} (missing {path.name})")
        result = deserialize_artifact(path.read_bytes())
        if not isinstance(result, PipelineResult):
            raise StageInputError(f"{path.name} does not hold a run result")
        quality = None
        quality_file = ARTIFACT_FILES["quality_metrics"]
        for root in (self.out_dir / "artifacts", self.artifacts_dir):
            candidate = root / quality_file
            if candidate.is_file():
                quality = deserialize_artifact(candidate.read_bytes())
                break
        return result, quality

    # -- stage execution -----------------------------------------------------

    def _execute_stage(self, stage: str, digests: list[tuple[str, str]]) -> None:
        runner: Callable[[], Any] = getattr(self, f"_stage_{stage}")
        artifact = runner()
        mode = faults.armed_mode(stage)
        if mode == "crash":
            faults.hard_crash()
        kind = STAGE_ARTIFACTS.get(stage)
        if kind is not None:
            filename = ARTIFACT_FILES[kind]
            path = self.staging_dir / "artifacts" / filename
            path.write_bytes(serialize_artifact(artifact))
            if mode == "corrupt":
                faults.corrupt_file(path)
            try:
                self._ctx[kind] = _load_validated(path)
            except PartiturError as exc:
                raise _StageFailure(f"gate rejected {filename}: {exc}") from exc
            self._gate_extra(stage)
            self._store_durable(path, filename)
            digests.append((filename, digest_bytes(path.read_bytes())))
        else:  # render has no JSON artifact; its gate checks the document
            if mode == "corrupt":
                faults.corrupt_file(self.staging_dir / DOCUMENT_NAME)
            self._gate_extra(stage)

    def _gate_extra(self, stage: str) -> None:
        if stage == "intake":
            report = self._ctx["validation_report"]
            if not report.ready:
                details = "; ".join(f"{c}: {d}" for c, d in report.failures)
                raise _StageFailure(f"inputs are BLOCKED: {details}", FAILURE_BLOCKED)
        elif stage == "extract":
            for slide in self._ctx["slide_set"].slides:
                if not (self.work_dir / slide.path).is_file():
                    raise _StageFailure(f"extracted image missing: {slide.path}")
        elif stage == "synthesize":
            verdict = validate_report(self._ctx["content_report"], self._ctx["storyboard"])
            if not verdict.passed:
                raise _StageFailure(f"coverage audit failed: {verdict.to_dict()}")
        elif stage in ("render", "qa"):
            self._check_bundle(stage)

    def _check_bundle(self, stage: str) -> None:
        document = self.staging_dir / DOCUMENT_NAME
        if not document.is_file():
            raise _StageFailure(f"{DOCUMENT_NAME} missing from staging")
        text = document.read_text("utf-8", errors="replace")
        if not text.startswith("---\n") or "\n# " not in text:
            raise _StageFailure(f"{DOCUMENT_NAME} is not a well-formed document")
        for line in text.splitlines():
            if line.startswith("![") and "](" in line:
                target = line.rsplit("](", 1)[1].rstrip(")")
                if not (self.staging_dir / target).is_file():
                    raise _StageFailure(f"document references missing figure {target}")
        if stage == "qa":
            for kind, filename in ARTIFACT_FILES.items():
                path = self.staging_dir / "artifacts" / filename
                if not path.is_file():
                    raise _StageFailure(f"bundle is missing {filename}")
                _load_validated(path)

    # Stage bodies. Each returns the artifact object (None for render).

    def _stage_intake(self):
        manifest = load_manifest(self.work_dir)
        self._ctx["manifest"] = manifest
        intake_cfg = self.config.intake
        return validate_inputs(manifest, self.work_dir,
                               min_width=intake_cfg.min_video_width,
                               min_height=intake_cfg.min_video_height)

    def _stage_extract(self):
        manifest = self._manifest()
        previous = None
        durable = self.artifacts_dir / ARTIFACT_FILES["slide_set"]
        if durable.is_file():
            try:
                previous = _load_validated(durable)
            except PartiturError:
                previous = None
        return extract_slides(
            resolve_input(self.work_dir, manifest.pdf_path), self.work_dir,
            dpi=self.config.extract.dpi, event_tag=manifest.event_tag,
            presentation_id=manifest.presentation_id, previous=previous)

    def _stage_sync(self):
        manifest = self._manifest()
        sync_cfg = self.config.sync
        return build_transition_map(
            resolve_input(self.work_dir, manifest.video_path),
            self._slide_images(),
            presentation_id=manifest.presentation_id,
            rate_hz=sync_cfg.rate_hz,
            min_similarity=sync_cfg.min_similarity,
            debounce_frames=sync_cfg.debounce_frames)

    def _stage_analyze(self):
        return analyze_slides(self._ctx["slide_set"], self._manifest(),
                              self.gateway(), self.work_dir)

    def _stage_curate(self):
        slide_set = self._ctx["slide_set"]
        fingerprints = [fingerprint_image(img) for img in self._slide_images()]
        chains = detect_overlay_chains(slide_set, fingerprints,
                                       theta_sub=self.config.curator.theta_sub)
        roles = classify_roles(slide_set, self._ctx["slide_analyses"])
        overrides_path = self.work_dir / OVERRIDES_FILE
        overrides = load_overrides(overrides_path) if overrides_path.is_file() else None
        return build_curation_plan(slide_set.presentation_id, roles, chains, overrides)

    def _stage_transcribe(self):
        manifest = self._manifest()
        return transcribe(manifest, resolve_input(self.work_dir, manifest.video_path),
                          self.gateway(),
                          extra_fillers=self.config.transcript.extra_fillers)

    def _stage_storyboard(self):
        speech = assign_speech(self._ctx["transcript"], self._ctx["transition_map"])
        return build_storyboard(self._ctx["transition_map"], self._ctx["curation_plan"],
                                speech, self._ctx["slide_set"])

    def _stage_synthesize(self):
        return generate_content_report(self._ctx["storyboard"],
                                       self._ctx["slide_analyses"],
                                       self._manifest(), self.gateway())

    def _stage_render(self):
        render_document(self._ctx["content_report"], self._ctx["storyboard"],
                        self._ctx["curation_plan"], self._ctx["slide_set"],
                        self._ctx["slide_analyses"], self._manifest(),
                        work_dir=self.work_dir, out_dir=self.staging_dir)
        return None

    def _stage_qa(self):
        return QualityMetricsReport(presentation_id=self.presentation_id,
                                    evaluator_id="none")

    # -- plumbing --------------------------------------------------------------

    def gateway(self) -> Gateway:
        if self._gateway is None:
            provider = self._provider
            if provider is None and self.use_mock:
                provider = MockProvider()
            self._gateway = gateway_from_config(
                self.config, self.work_dir / MEDIA_CACHE_FILE, provider=provider)
        return self._gateway

    def _manifest(self):
        if "manifest" not in self._ctx:
            self._ctx["manifest"] = load_manifest(self.work_dir)
        return self._ctx["manifest"]

    def _slide_images(self) -> list[Image.Image]:
        images = []
        for slide in self._ctx["slide_set"].slides:
            path = self.work_dir / slide.path
            if not path.is_file():
                raise StageInputError(f"slide image missing: {slide.path}")
            with Image.open(path) as img:
                images.append(img.convert("RGB"))
        return images

    def _try_resume(self, stage: str, digests: list[tuple[str, str]]) -> bool:
        kind = STAGE_ARTIFACTS.get(stage)
        if kind is None or stage == "qa":
            return False  # render and qa are cheap and re-validate the bundle
        durable = self.artifacts_dir / ARTIFACT_FILES[kind]
        if not durable.is_file():
            return False
        try:
            artifact = _load_validated(durable)
        except PartiturError:
            return False
        if kind == "slide_set":
            if any(not (self.work_dir / s.path).is_file() for s in artifact.slides):
                return False
        if kind == "validation_report" and not artifact.ready:
            return False
        self._ctx[kind] = artifact
        staged = self.staging_dir / "artifacts" / ARTIFACT_FILES[kind]
        shutil.copyfile(durable, staged)
        digests.append((ARTIFACT_FILES[kind], digest_bytes(staged.read_bytes())))
        if kind == "validation_report":
            self._ctx["manifest"] = load_manifest(self.work_dir)
        return True

    def _find_artifact(self, filename: str) -> Path | None:
        for root in (self.staging_dir / "artifacts", self.artifacts_dir):
            candidate = root / filename
            if candidate.is_file():
                return candidate
        return None

    def _store_durable(self, staged: Path, filename: str) -> None:
        self.artifacts_dir.mkdir(parents=True, exist_ok=True)
        tmp = self.artifacts_dir / (filename + ".tmp")
        shutil.copyfile(staged, tmp)
        tmp.replace(self.artifacts_dir / filename)

    def _reset_staging(self) -> None:
        if self.staging_dir.exists():
            shutil.rmtree(self.staging_dir)
        (self.staging_dir / "artifacts").mkdir(parents=True)

    def _promote(self) -> None:
        if self.out_dir.exists():
            shutil.rmtree(self.out_dir)
        self.staging_dir.rename(self.out_dir)

    def _fail(self, stage: str, started: float, timings: list[tuple[str, int]],
              digests: list[tuple[str, str]], kind: str,
              error: Exception) -> RunOutcome:
        timings.append((stage, _elapsed_ms(started)))
        if self.staging_dir.exists():
            shutil.rmtree(self.staging_dir)
        result = PipelineResult(
            presentation_id=self.presentation_id, status="FAILED", failed_stage=stage,
            stage_timings=tuple(timings), artifact_digests=tuple(sorted(digests)))
        self._write_run_result(result)
        self.last_error = error
        return RunOutcome(result=result, failure_kind=kind)

    def _write_run_result(self, result: PipelineResult) -> None:
        (self.work_dir / RUN_RESULT_FILE).write_bytes(serialize_artifact(result))

    def _lock(self):
        return _WorkLock(self.work_dir / LOCK_FILE, self.presentation_id)


class _WorkLock:
    def __init__(self, path: Path, presentation_id: str):
        self.path = path
        self.presentation_id = presentation_id
        self._fh = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")
        try:
            fcntl.flock(self._fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError:
            self._fh.close()
            raise LockError(f"another run holds the lock for "
                            f"{self.presentation_id!r}") from None
        return self

    def __exit__(self, *exc_info):
        fcntl.flock(self._fh, fcntl.LOCK_UN)
        self._fh.close()
        return False


def _load_validated(path: Path):
    """Read an artifact file back and hold it to both its JSON schema and
    the model's constructor invariants."""
    data = path.read_bytes()
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaValidationError(f"{path.name}: not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "kind" not in payload:
        raise SchemaValidationError(f"{path.name}: artifact must be an object with a kind")
    kind = payload["kind"]
    if kind not in ARTIFACT_FILES and kind != "run_result":
        raise SchemaValidationError(f"{path.name}: unknown artifact kind {kind!r}")
    validator = response_validator(kind)
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        where = "/".join(str(p) for p in first.absolute_path) or "(root)"
        raise SchemaValidationError(f"{path.name}: schema violation at {where}: "
                                    f"{first.message}")
    return deserialize_artifact(data)


def _elapsed_ms(started: float) -> int:
    return max(0, round((time.monotonic() - started) * 1000))

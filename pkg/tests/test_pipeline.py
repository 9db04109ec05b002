import dataclasses
import json
import os
import subprocess
import sys

import pytest
from click.testing import CliRunner

from partitur.cli import main as cli_main
from partitur.config import ExtractConfig, PipelineConfig
from partitur.errors import LockError, ProviderError, StageInputError
from partitur.gateway import MockProvider
from partitur.model import ARTIFACT_FILES, STAGE_ORDER, deserialize_artifact
from partitur.pipeline import PipelineRunner, _WorkLock

from builders import make_work_dir

CFG = dataclasses.replace(PipelineConfig(), extract=ExtractConfig(dpi=72))
FAST_TOML = "[extract]\ndpi = 72\n"


def run_full(root, presentation_id, **kwargs):
    runner = PipelineRunner(presentation_id, CFG, work_root=root, use_mock=True, **kwargs)
    return runner, runner.full_pipeline()


@pytest.fixture(scope="module")
def complete_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("complete")
    make_work_dir(root, "101")
    runner, outcome = run_full(root, "101")
    assert outcome.result.status == "COMPLETE"
    return root, runner, outcome


class TestFullPipeline:
    def test_complete_bundle_layout(self, complete_run):
        _, runner, outcome = complete_run
        assert outcome.exit_code == 0
        out = runner.out_dir
        assert (out / "chapter.qmd").is_file()
        assert sorted(p.name for p in (out / "artifacts").iterdir()) == sorted(
            ARTIFACT_FILES.values())
        figures = list((out / "figures").glob("*.png"))
        assert figures, "no figures were embedded"
        assert not runner.staging_dir.exists()

    def test_every_artifact_deserializes(self, complete_run):
        _, runner, _ = complete_run
        for kind, filename in ARTIFACT_FILES.items():
            artifact = deserialize_artifact((runner.out_dir / "artifacts" / filename).read_bytes())
            assert artifact.presentation_id == "101", kind

    def test_timings_cover_all_stages(self, complete_run):
        _, _, outcome = complete_run
        assert tuple(s for s, _ in outcome.result.stage_timings) == STAGE_ORDER
        assert all(ms >= 0 for _, ms in outcome.result.stage_timings)

    def test_digests_cover_all_artifacts(self, complete_run):
        _, _, outcome = complete_run
        names = {name for name, _ in outcome.result.artifact_digests}
        assert names == set(ARTIFACT_FILES.values())

    def test_run_result_lives_outside_the_bundle(self, complete_run):
        _, runner, _ = complete_run
        assert (runner.work_dir / "run_result.json").is_file()
        assert not (runner.out_dir / "run_result.json").exists()

    def test_second_run_hits_media_cache(self, complete_run):
        root, first_runner, _ = complete_run
        doc_before = (first_runner.out_dir / "chapter.qmd").read_bytes()
        runner, outcome = run_full(root, "101")
        assert outcome.result.status == "COMPLETE"
        assert runner.gateway().uploads_performed == 0
        assert (runner.out_dir / "chapter.qmd").read_bytes() == doc_before


class TestIntakeBlocking:
    def test_missing_video_blocks(self, tmp_path):
        work = make_work_dir(tmp_path, "102")
        (work / "talk.mp4").unlink()
        runner, outcome = run_full(tmp_path, "102")
        assert outcome.result.status == "FAILED"
        assert outcome.result.failed_stage == "intake"
        assert outcome.exit_code == 2
        assert not runner.out_dir.exists()
        assert not runner.staging_dir.exists()

    def test_missing_manifest_blocks(self, tmp_path):
        work = make_work_dir(tmp_path, "103")
        (work / "manifest.json").unlink()
        _, outcome = run_full(tmp_path, "103")
        assert outcome.result.failed_stage == "intake"
        assert outcome.exit_code == 2

    def test_blocked_run_is_reported_with_no_digests(self, tmp_path):
        work = make_work_dir(tmp_path, "104")
        (work / "deck.pdf").write_bytes(b"not a pdf at all")
        run_full(tmp_path, "104")
        result, quality = PipelineRunner("104", work_root=tmp_path).report()
        assert result.status == "FAILED"
        assert result.failed_stage == "intake"
        assert result.artifact_digests == ()
        assert quality is None


class TestFaultInjection:
    def test_corrupt_artifact_fails_its_own_gate(self, tmp_path, monkeypatch):
        make_work_dir(tmp_path, "105")
        monkeypatch.setenv("PARTITUR_FAULT_STAGE", "transcribe")
        monkeypatch.setenv("PARTITUR_FAULT_MODE", "corrupt")
        runner, outcome = run_full(tmp_path, "105")
        assert outcome.result.status == "FAILED"
        assert outcome.result.failed_stage == "transcribe"
        assert outcome.exit_code == 3
        assert not runner.out_dir.exists()
        assert not runner.staging_dir.exists()

    def test_corrupt_document_fails_render_gate(self, tmp_path, monkeypatch):
        make_work_dir(tmp_path, "106")
        monkeypatch.setenv("PARTITUR_FAULT_STAGE", "render")
        monkeypatch.setenv("PARTITUR_FAULT_MODE", "corrupt")
        runner, outcome = run_full(tmp_path, "106")
        assert outcome.result.failed_stage == "render"
        assert not runner.out_dir.exists()

    def test_crash_leaves_no_bundle_and_frees_the_lock(self, tmp_path):
        work = make_work_dir(tmp_path, "107")
        (work / "gateway.toml").write_text(FAST_TOML, "utf-8")
        env = dict(os.environ)
        env.update(PARTITUR_FAULT_STAGE="curate", PARTITUR_FAULT_MODE="crash")
        proc = subprocess.run(
            [sys.executable, "-m", "partitur.cli", "full-pipeline", "107",
             "--work-root", str(tmp_path), "--mock"],
            env=env, capture_output=True, text=True, timeout=120)
        assert proc.returncode == 23
        assert not (work / "out").exists()
        runner, outcome = run_full(tmp_path, "107")
        assert outcome.result.status == "COMPLETE"
        assert runner.out_dir.is_file() or runner.out_dir.is_dir()

    def test_existing_bundle_survives_a_failed_rerun(self, tmp_path, monkeypatch):
        make_work_dir(tmp_path, "108")
        runner, outcome = run_full(tmp_path, "108")
        assert outcome.result.status == "COMPLETE"
        before = (runner.out_dir / "chapter.qmd").read_bytes()
        monkeypatch.setenv("PARTITUR_FAULT_STAGE", "synthesize")
        monkeypatch.setenv("PARTITUR_FAULT_MODE", "corrupt")
        _, failed = run_full(tmp_path, "108")
        assert failed.result.status == "FAILED"
        assert (runner.out_dir / "chapter.qmd").read_bytes() == before


class TestProviderFailure:
    def test_dead_provider_maps_to_exhaustion_exit(self, tmp_path):
        class DeadProvider(MockProvider):
            def upload(self, path, digest):
                raise ProviderError("upstream is down")

        make_work_dir(tmp_path, "109")
        cfg = dataclasses.replace(CFG, gateway=dataclasses.replace(
            CFG.gateway, retries=1, backoff_base=0.0))
        runner = PipelineRunner("109", cfg, work_root=tmp_path,
                                use_mock=True, provider=DeadProvider())
        outcome = runner.full_pipeline()
        assert outcome.result.status == "FAILED"
        assert outcome.result.failed_stage == "analyze"
        assert outcome.exit_code == 4
        assert not runner.out_dir.exists()


class TestResume:
    def test_resume_reuses_artifacts_without_source_video(self, tmp_path):
        work = make_work_dir(tmp_path, "110")
        _, first = run_full(tmp_path, "110")
        assert first.result.status == "COMPLETE"
        (work / "talk.mp4").unlink()
        runner, outcome = run_full(tmp_path, "110", resume=True)
        assert outcome.result.status == "COMPLETE"
        assert runner.gateway().uploads_performed == 0

    def test_resume_reexecutes_an_invalid_durable(self, tmp_path):
        work = make_work_dir(tmp_path, "111")
        _, first = run_full(tmp_path, "111")
        assert first.result.status == "COMPLETE"
        broken = work / "artifacts" / ARTIFACT_FILES["transition_map"]
        broken.write_bytes(b"{completely: broken")
        (work / "talk.mp4").unlink()
        _, outcome = run_full(tmp_path, "111", resume=True)
        assert outcome.result.status == "FAILED"
        assert outcome.result.failed_stage == "sync"

    def test_resume_after_midway_failure(self, tmp_path, monkeypatch):
        make_work_dir(tmp_path, "112")
        monkeypatch.setenv("PARTITUR_FAULT_STAGE", "storyboard")
        monkeypatch.setenv("PARTITUR_FAULT_MODE", "corrupt")
        _, failed = run_full(tmp_path, "112")
        assert failed.result.failed_stage == "storyboard"
        monkeypatch.delenv("PARTITUR_FAULT_STAGE")
        monkeypatch.delenv("PARTITUR_FAULT_MODE")
        runner, outcome = run_full(tmp_path, "112", resume=True)
        assert outcome.result.status == "COMPLETE"
        assert runner.gateway().uploads_performed == 0


class TestRunStage:
    def test_missing_upstream_names_the_artifact(self, tmp_path):
        make_work_dir(tmp_path, "113")
        runner = PipelineRunner("113", CFG, work_root=tmp_path, use_mock=True)
        runner.run_stage("intake")
        with pytest.raises(StageInputError, match="01_slide_set.json"):
            runner.run_stage("sync")

    def test_unknown_stage_is_rejected(self, tmp_path):
        make_work_dir(tmp_path, "114")
        runner = PipelineRunner("114", CFG, work_root=tmp_path, use_mock=True)
        with pytest.raises(StageInputError, match="unknown stage"):
            runner.run_stage("polish")

    def test_stagewise_document_matches_full_pipeline(self, tmp_path):
        make_work_dir(tmp_path, "115")
        full_runner, outcome = run_full(tmp_path, "115")
        assert outcome.result.status == "COMPLETE"
        reference = (full_runner.out_dir / "chapter.qmd").read_bytes()

        stage_runner = PipelineRunner("115", CFG, work_root=tmp_path, use_mock=True)
        stage_runner.run_stage("render")
        assert (stage_runner.staging_dir / "chapter.qmd").read_bytes() == reference

    def test_run_stage_writes_staging_and_durable(self, tmp_path):
        make_work_dir(tmp_path, "117")
        runner = PipelineRunner("117", CFG, work_root=tmp_path, use_mock=True)
        runner.run_stage("intake")
        runner.run_stage("extract")
        name = ARTIFACT_FILES["slide_set"]
        assert (runner.staging_dir / "artifacts" / name).is_file()
        assert (runner.artifacts_dir / name).is_file()
        assert not runner.out_dir.exists()


class TestLock:
    def test_concurrent_run_is_refused(self, tmp_path):
        work = make_work_dir(tmp_path, "118")
        with _WorkLock(work / ".lock", "118"):
            runner = PipelineRunner("118", CFG, work_root=tmp_path, use_mock=True)
            with pytest.raises(LockError, match="another run"):
                runner.full_pipeline()
        _, outcome = run_full(tmp_path, "118")
        assert outcome.result.status == "COMPLETE"


class TestReport:
    def test_report_before_any_run_errors(self, tmp_path):
        make_work_dir(tmp_path, "119")
        with pytest.raises(StageInputError, match="no recorded run"):
            PipelineRunner("119", work_root=tmp_path).report()

    def test_report_after_complete_run(self, complete_run):
        root, _, outcome = complete_run
        result, quality = PipelineRunner("101", work_root=root).report()
        assert result.status == "COMPLETE"
        assert dict(result.stage_timings).keys() == set(STAGE_ORDER)
        assert quality is not None
        assert quality.evaluator_id == "none"
        assert quality.content_completeness is None


class TestCli:
    def test_full_pipeline_and_report(self, tmp_path):
        make_work_dir(tmp_path, "120")
        (tmp_path / "120" / "gateway.toml").write_text(FAST_TOML, "utf-8")
        cli = CliRunner()
        run = cli.invoke(cli_main, ["full-pipeline", "120", "--work-root",
                                    str(tmp_path), "--mock"])
        assert run.exit_code == 0, run.output
        assert "COMPLETE" in run.output
        rep = cli.invoke(cli_main, ["report", "120", "--work-root", str(tmp_path)])
        assert rep.exit_code == 0
        payload = json.loads(rep.output)
        assert payload["status"] == "COMPLETE"
        assert len(payload["stage_timings"]) == len(STAGE_ORDER)

    def test_blocked_inputs_exit_two(self, tmp_path):
        work = make_work_dir(tmp_path, "121")
        (work / "talk.mp4").unlink()
        cli = CliRunner()
        run = cli.invoke(cli_main, ["full-pipeline", "121", "--work-root",
                                    str(tmp_path), "--mock"])
        assert run.exit_code == 2

    def test_single_stage_subcommand(self, tmp_path):
        make_work_dir(tmp_path, "122")
        (tmp_path / "122" / "gateway.toml").write_text(FAST_TOML, "utf-8")
        cli = CliRunner()
        run = cli.invoke(cli_main, ["stage", "intake", "122", "--work-root",
                                    str(tmp_path), "--mock"])
        assert run.exit_code == 0, run.output
        assert "intake ok" in run.output

    def test_report_without_a_run_is_a_usage_error(self, tmp_path):
        make_work_dir(tmp_path, "123")
        cli = CliRunner()
        run = cli.invoke(cli_main, ["report", "123", "--work-root", str(tmp_path)])
        assert run.exit_code == 1
        assert "no recorded run" in run.output

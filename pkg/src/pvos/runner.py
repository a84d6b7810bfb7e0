"""Manifest-level execution: scenario manifests in, prediction manifests and logs out."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .dataset import Manifest, Masklet, PromptRecord, VideoRecord
from .errors import ConfigError, CoverageError, DataError
from .memory import MemoryConfig
from .pipeline import AudioTranscript, BoxPrompt, Engine, MaskPrompt, PointsPrompt, Prompt, TextPrompt
from .scenario import (
    default_prompts,
    generate_scene,
    make_tracker,
    resolve_visual_prompt,
    scene_config_from_dict,
    scripted_detector,
    SceneEmbedder,
)
from .transition import AstConfig


@dataclass
class RunConfig:
    manifest: str = ""
    modality: str = "all"  # all | visual | linguistic
    ast: dict[str, Any] = field(default_factory=dict)
    memory: dict[str, Any] = field(default_factory=dict)
    exit_gate: bool = True
    out: str = "out"
    seed: int | None = None
    parallel: int = 1
    dump_memory: bool = False

    def __post_init__(self) -> None:
        if self.modality not in ("all", "visual", "linguistic"):
            raise ConfigError(f"unknown modality filter {self.modality!r}")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")

    def ast_config(self) -> AstConfig:
        try:
            return AstConfig(**self.ast)
        except TypeError as exc:
            raise ConfigError(f"bad AST override: {exc}") from exc

    def memory_config(self) -> MemoryConfig:
        try:
            return MemoryConfig(**self.memory)
        except TypeError as exc:
            raise ConfigError(f"bad memory override: {exc}") from exc


def run_config_from_dict(d: dict) -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    return RunConfig(**d)


def to_prompt(rec: PromptRecord) -> Prompt:
    p = rec.payload
    if rec.modality == "text":
        return TextPrompt(str(p))
    if rec.modality == "audio-transcript":
        return AudioTranscript(str(p))
    if rec.modality == "visual-points":
        return PointsPrompt(tuple((int(x), int(y), int(lab)) for x, y, lab in p), rec.frame_index)
    if rec.modality == "visual-box":
        return BoxPrompt(tuple(int(v) for v in p), rec.frame_index)
    if rec.modality == "visual-mask":
        return MaskPrompt(p, rec.frame_index)
    raise DataError(f"unknown modality {rec.modality!r}")


def wanted(rec: PromptRecord, modality: str) -> bool:
    if modality == "all":
        return True
    return rec.is_visual == (modality == "visual")


def build_scenario_manifest(cfg_dict: dict, seed: int | None = None) -> Manifest:
    """Render a scene config into a dataset manifest that embeds its oracle bindings."""
    if seed is not None:
        cfg_dict = {**cfg_dict, "seed": seed}
    cfg = scene_config_from_dict(cfg_dict)
    scene = generate_scene(cfg)
    raw_prompts = list(cfg.prompts) or default_prompts(scene)
    prompts = []
    for i, p in enumerate(raw_prompts):
        masklet_id = p.get("masklet_id")
        if masklet_id is not None and str(masklet_id) not in scene.gt:
            raise ConfigError(f"prompt references unknown object {masklet_id!r}")
        prompts.append(
            PromptRecord(
                id=str(p.get("id", f"p{i}")),
                masklet_id=None if masklet_id is None else str(masklet_id),
                modality=p["modality"],
                payload=p["payload"],
                frame_index=p.get("frame_index"),
            )
        )
    video = VideoRecord(
        id=cfg.name,
        width=cfg.width,
        height=cfg.height,
        frame_count=cfg.num_frames,
        fps=cfg.fps,
        masklets=list(scene.gt.values()),
        prompts=prompts,
        scenario=cfg_dict,
    )
    return Manifest(dataset=cfg.dataset, videos=[video])


@dataclass
class JobResult:
    video_id: str
    prompt_id: str
    masklet: Masklet
    events: list[dict]
    memory: list[dict]
    frames: int


def run_job(video: VideoRecord, rec: PromptRecord, config: RunConfig) -> JobResult:
    if video.scenario is None:
        raise DataError(f"video {video.id} carries no oracle bindings")
    scene = generate_scene(scene_config_from_dict(video.scenario))
    cfg = scene.config
    prompt = to_prompt(rec)
    expression = getattr(prompt, "expression", None)
    engine = Engine(
        detector=scripted_detector(cfg.detector, scene, expression),
        tracker=make_tracker(cfg.tracker, scene),
        embedder=SceneEmbedder(scene),
        prompt=prompt,
        ast_config=config.ast_config(),
        memory_config=config.memory_config(),
        exit_gate=config.exit_gate,
        resolver=lambda p, f: resolve_visual_prompt(scene, p, f),
    )
    pred, events = engine.run_video(scene.frames, f"{rec.masklet_id or '-'}@{rec.id}")
    gt = video.masklet(rec.masklet_id) if rec.masklet_id is not None else None
    pred.prompt_id = rec.id
    pred.source_masklet = rec.masklet_id
    pred.category = gt.category if gt is not None else None
    pred.granularity = gt.granularity if gt is not None else "whole"
    return JobResult(video.id, rec.id, pred, [e.to_dict() for e in events], engine.memory.dump(), cfg.num_frames)


def _jobs(manifest: Manifest, config: RunConfig) -> list[tuple[VideoRecord, PromptRecord]]:
    jobs = []
    for v in manifest.videos:
        ids = {m.id for m in v.masklets}
        for rec in v.prompts:
            if rec.masklet_id is not None and rec.masklet_id not in ids:
                raise CoverageError(f"{v.id}/{rec.id}: prompt references missing masklet {rec.masklet_id!r}")
            if wanted(rec, config.modality):
                jobs.append((v, rec))
    return jobs


def run_manifest(manifest: Manifest, config: RunConfig) -> tuple[Manifest, list[JobResult]]:
    jobs = _jobs(manifest, config)
    if config.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.parallel) as pool:
            results = list(pool.map(run_job, *zip(*jobs), [config] * len(jobs)))
    else:
        results = [run_job(v, rec, config) for v, rec in jobs]

    by_video: dict[str, list[Masklet]] = {}
    for r in results:
        by_video.setdefault(r.video_id, []).append(r.masklet)
    videos = [
        replace(v, masklets=by_video.get(v.id, []), prompts=[], scenario=None)
        for v in manifest.videos
    ]
    return Manifest(dataset=manifest.dataset, videos=videos), results


def log_name(r: JobResult) -> str:
    return f"{r.video_id}__{r.prompt_id}"


def write_logs(results: list[JobResult], out_dir: Path, dump_memory: bool = False) -> None:
    log_dir = out_dir / "logs"
    log_dir.mkdir(parents=True, exist_ok=True)
    for r in results:
        lines = "".join(json.dumps(e) + "\n" for e in r.events)
        (log_dir / f"{log_name(r)}.jsonl").write_text(lines, encoding="utf-8")
        if dump_memory:
            (log_dir / f"{log_name(r)}.memory.json").write_text(json.dumps(r.memory, indent=1) + "\n", encoding="utf-8")

"""Request handlers shared by the HTTP endpoints and the in-process CLI client."""

from __future__ import annotations

import json
from pathlib import Path

from .. import __version__
from ..config import Config, load_config
from ..errors import ConfigError, UsageError
from ..features import (
    generate_synthetic_dataset,
    generate_two_topic_corpus,
    generate_two_topic_video,
    read_feature_file,
    read_ground_truth,
    read_manifest,
)
from ..model import score_video
from ..summary import build_summary
from ..trainer import Checkpoint, evaluate_checkpoint, train
from . import schemas


def handle_gen_synthetic(req: schemas.GenSyntheticRequest) -> schemas.GenSyntheticResponse:
    if req.two_topic:
        manifest = generate_two_topic_corpus(
            req.out_dir, seed=req.seed, n_videos=req.videos, n_frames=req.frames,
            dim=req.dim, shot_len=req.shot_len, fps=req.fps)
        extra = generate_two_topic_video(
            req.out_dir, seed=req.seed, n_frames=req.frames, dim=req.dim,
            shot_len=req.shot_len, fps=req.fps)
        return schemas.GenSyntheticResponse(manifest=str(manifest), extra_files=extra)
    manifest = generate_synthetic_dataset(
        req.out_dir, seed=req.seed, n_videos=req.videos, n_frames=req.frames,
        dim=req.dim, keyframe_fraction=req.keyframe_fraction, m_captions=req.captions,
        n_annotators=req.annotators, shot_len=req.shot_len, text_kind=req.text_kind,
        test_fraction=req.test_fraction, fps=req.fps)
    return schemas.GenSyntheticResponse(manifest=str(manifest))


def _write_text(path: str, content: str, what: str) -> None:
    try:
        Path(path).write_text(content, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {what} to {path}: {exc}") from exc


def handle_train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    cfg = load_config(req.config_file, **req.config)
    manifest = read_manifest(req.manifest)
    split = req.split if req.split not in ("", "all") else None
    ckpt, history = train(manifest, cfg, split=split)
    out = Path(req.checkpoint_out)
    try:
        if out.parent != Path("") and not out.parent.exists():
            out.parent.mkdir(parents=True, exist_ok=True)
        ckpt.save(out)
    except OSError as exc:
        raise ConfigError(f"cannot write checkpoint to {out}: {exc}") from exc
    return schemas.TrainResponse(
        checkpoint=str(out),
        epochs=ckpt.epoch,
        history=[schemas.EpochLog(**m.to_dict()) for m in history],
    )


def _load_video_pair(ckpt: Checkpoint, frames_path: str, text_path: str):
    frames = read_feature_file(frames_path)
    text = read_feature_file(text_path)
    if frames.kind != "frames":
        raise UsageError(f"{frames_path} holds {frames.kind!r} features, expected frames")
    if text.kind not in ("captions", "query"):
        raise UsageError(f"{text_path} holds {text.kind!r} features, expected captions or query")
    return frames, text


def handle_score(req: schemas.ScoreRequest) -> schemas.ScoreResponse:
    ckpt = Checkpoint.load(req.checkpoint)
    frames, text = _load_video_pair(ckpt, req.frames, req.text)
    scores = score_video(frames.embeddings, text.embeddings, text.kind,
                         ckpt.params, ckpt.config)
    return schemas.ScoreResponse(video_id=frames.video_id, scores=[float(s) for s in scores])


def handle_summarize(req: schemas.SummarizeRequest) -> schemas.SummarizeResponse:
    ckpt = Checkpoint.load(req.checkpoint)
    frames, text = _load_video_pair(ckpt, req.frames, req.text)
    scores = score_video(frames.embeddings, text.embeddings, text.kind,
                         ckpt.params, ckpt.config)
    if req.ground_truth:
        gt = read_ground_truth(req.ground_truth)
        boundaries = gt.boundaries_or_uniform(frames.fps)
    else:
        from ..features import uniform_boundaries
        boundaries = uniform_boundaries(frames.rows, frames.fps)
    budget = req.budget_fraction if req.budget_fraction is not None \
        else ckpt.config.budget_fraction
    summary = build_summary(scores, boundaries, budget_fraction=budget,
                            video_id=frames.video_id)
    if req.out:
        _write_text(req.out, json.dumps(summary.to_dict(), indent=2), "summary")
    return schemas.SummarizeResponse(**summary.to_dict())


def handle_evaluate(req: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
    ckpt = Checkpoint.load(req.checkpoint)
    manifest = read_manifest(req.manifest)
    split = req.split if req.split not in ("", "all") else None
    report = evaluate_checkpoint(ckpt, manifest, split=split, f1_mode=req.f1_mode,
                                 budget_fraction=req.budget_fraction)
    if req.out:
        _write_text(req.out, json.dumps(report.to_dict(), indent=2), "report")
    if req.csv_out:
        _write_text(req.csv_out, report.to_csv(), "report CSV")
    return schemas.EvaluateResponse(**report.to_dict())


def handle_inspect(req: schemas.InspectRequest) -> schemas.InspectResponse:
    bundle = read_feature_file(req.path)  # raises on any format/validation problem
    emb = bundle.embeddings
    return schemas.InspectResponse(
        valid=True, video_id=bundle.video_id, kind=bundle.kind,
        rows=bundle.rows, dim=bundle.dim, fps=bundle.fps,
        min_value=float(emb.min()), max_value=float(emb.max()),
        mean_value=float(emb.mean()),
    )


def handle_health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


def handle_config() -> schemas.ConfigResponse:
    return schemas.ConfigResponse(defaults=Config().to_dict())

"""Deterministic training loop over manifests, with binary checkpoints.

Batching unit is the fixed-length window (videos vary in length, windows do
not): each optimizer step accumulates gradients over ``batch_size`` windows.
Shuffling, initialization and dropout each draw from streams spawned off the
run seed, so identical configs reproduce bit-identical checkpoints.

Checkpoint container (``SUMCKPT1``): magic, u32 little-endian header length,
UTF-8 JSON header (config, config hash, epoch, adam step, named tensor
shapes), then the float32 little-endian payloads concatenated in header
order.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import backward
from .config import Config, config_hash
from .errors import (
    ConfigError,
    FeatureIOError,
    FormatError,
    NumericError,
    UsageError,
    ValidationError,
)
from .features import DatasetManifest, read_feature_file, read_ground_truth
from .losses import LossWeights, combined_loss
from .model import ModelParams, forward_window, init_model_params, score_video
from .optim import AdamState, adam_step, zero_grads
from .summary import build_summary
from .evaluation import MetricReport, VideoMetrics, multi_ref_f1, prf1, rank_metrics_per_annotator
from .transformer import window_spans

CKPT_MAGIC = b"SUMCKPT1"


@dataclass
class TrainWindow:
    """One padded window plus everything its forward pass needs."""

    video_id: str
    features: np.ndarray      # window_len x D, zero-padded
    valid_len: int
    text: np.ndarray
    text_kind: str
    labels: np.ndarray | None = None


@dataclass
class EpochMetrics:
    epoch: int
    total: float
    l_c: float | None
    l_d: float
    l_r: float

    def to_dict(self) -> dict:
        return {"epoch": self.epoch, "total": self.total, "l_c": self.l_c,
                "l_d": self.l_d, "l_r": self.l_r}


@dataclass
class Checkpoint:
    config: Config
    params: ModelParams
    adam: AdamState
    epoch: int

    def save(self, path: str | Path) -> None:
        named = self.params.named()
        tensors: list[tuple[str, np.ndarray]] = [(n, t.data) for n, t in named]
        for n, _ in named:
            tensors.append((f"adam.m.{n}", self.adam.m.get(n, np.zeros(1, dtype=np.float32))))
            tensors.append((f"adam.v.{n}", self.adam.v.get(n, np.zeros(1, dtype=np.float32))))
        header = {
            "config": self.config.to_dict(),
            "config_hash": config_hash(self.config),
            "epoch": self.epoch,
            "adam_step": self.adam.step,
            "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        }
        blob = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
        tmp = str(path) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(len(blob).to_bytes(4, "little"))
            fh.write(blob)
            for _, arr in tensors:
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise FeatureIOError(f"cannot read checkpoint {path}: {exc}") from exc
        if len(blob) < 12 or blob[:8] != CKPT_MAGIC:
            raise FormatError(f"{path}: bad checkpoint magic")
        hlen = int.from_bytes(blob[8:12], "little")
        try:
            header = json.loads(blob[12:12 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: malformed checkpoint header: {exc}") from exc
        cfg = Config.from_dict(header["config"])
        if config_hash(cfg) != header["config_hash"]:
            raise ValidationError(f"{path}: config hash mismatch")
        arrays: dict[str, np.ndarray] = {}
        offset = 12 + hlen
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            end = offset + 4 * count
            if end > len(blob):
                raise FeatureIOError(f"{path}: truncated checkpoint payload")
            arrays[entry["name"]] = np.frombuffer(blob[offset:end], dtype="<f4").reshape(shape).copy()
            offset = end
        if offset != len(blob):
            raise FeatureIOError(f"{path}: {len(blob) - offset} trailing bytes")

        params = init_model_params(cfg)
        adam = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay, step=int(header["adam_step"]))
        for name, tensor in params.named():
            if name not in arrays:
                raise ValidationError(f"{path}: checkpoint missing tensor {name!r}")
            if arrays[name].shape != tensor.data.shape:
                raise ValidationError(
                    f"{path}: tensor {name!r} has shape {arrays[name].shape}, "
                    f"config implies {tensor.data.shape}")
            tensor.data = arrays[name]
            m, v = arrays.get(f"adam.m.{name}"), arrays.get(f"adam.v.{name}")
            if m is not None and m.shape == tensor.data.shape:
                adam.m[name] = m
            if v is not None and v.shape == tensor.data.shape:
                adam.v[name] = v
        return cls(config=cfg, params=params, adam=adam, epoch=int(header["epoch"]))


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------


def _load_video(manifest: DatasetManifest, entry, cfg: Config, need_labels: bool):
    frames = read_feature_file(manifest.resolve(entry.frames))
    if frames.kind != "frames":
        raise ValidationError(f"{entry.video_id}: frame features have kind {frames.kind!r}")
    if frames.dim != cfg.embed_dim:
        raise ConfigError(
            f"{entry.video_id}: features are {frames.dim}-dim, config wants {cfg.embed_dim}")
    text = read_feature_file(manifest.resolve(entry.text_path()))
    if text.kind not in ("captions", "query"):
        raise ValidationError(f"{entry.video_id}: text features have kind {text.kind!r}")
    if text.dim != cfg.embed_dim:
        raise ConfigError(
            f"{entry.video_id}: text features are {text.dim}-dim, config wants {cfg.embed_dim}")
    labels = None
    if need_labels:
        if entry.ground_truth is None:
            raise ConfigError(f"{entry.video_id}: supervised mode needs ground truth")
        gt = read_ground_truth(manifest.resolve(entry.ground_truth))
        if gt.n_frames != frames.rows:
            raise ValidationError(
                f"{entry.video_id}: ground truth covers {gt.n_frames} frames, features {frames.rows}")
        labels = gt.keyframe_labels
    return frames, text, labels


def build_windows(manifest: DatasetManifest, entries, cfg: Config,
                  need_labels: bool) -> list[TrainWindow]:
    """Window every video; unsupervised paths never touch label files."""
    windows: list[TrainWindow] = []
    for entry in entries:
        frames, text, labels = _load_video(manifest, entry, cfg, need_labels)
        data = frames.embeddings
        for start, end in window_spans(frames.rows, cfg.window_len):
            valid = end - start
            chunk = data[start:end]
            if valid < cfg.window_len:
                pad = np.zeros((cfg.window_len - valid, frames.dim), dtype=np.float32)
                chunk = np.concatenate([chunk, pad], axis=0)
            windows.append(TrainWindow(
                video_id=entry.video_id,
                features=np.ascontiguousarray(chunk),
                valid_len=valid,
                text=text.embeddings,
                text_kind=text.kind,
                labels=None if labels is None else labels[start:end].copy(),
            ))
    return windows


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def train(manifest: DatasetManifest, cfg: Config, split: str | None = "train",
          log: list | None = None) -> tuple[Checkpoint, list[EpochMetrics]]:
    """Run the full loop and return the final checkpoint plus per-epoch metrics."""
    cfg.validate()
    entries = manifest.select(split)
    if not entries:
        raise ConfigError(f"manifest has no entries for split {split!r}")
    supervised = cfg.mode == "supervised"
    windows = build_windows(manifest, entries, cfg, need_labels=supervised)

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng = np.random.default_rng(seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    dropout_rng = np.random.default_rng(seeds[2]) if cfg.dropout > 0 else None

    params = init_model_params(cfg, rng=init_rng)
    named = params.named()
    adam = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    weights = LossWeights.from_config(cfg)

    history: list[EpochMetrics] = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(windows))
        sums = {"total": 0.0, "l_c": 0.0, "l_d": 0.0, "l_r": 0.0}
        counted = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [windows[i] for i in order[lo:lo + cfg.batch_size]]
            zero_grads(named)
            for win in batch:
                scores, hidden = forward_window(win.features, win.valid_len, win.text,
                                                win.text_kind, params, cfg,
                                                dropout_rng=dropout_rng)
                with warnings.catch_warnings():
                    # windows of a labeled video may legitimately hold no keyframe
                    warnings.filterwarnings("ignore", message="degenerate labels")
                    total, breakdown = combined_loss(
                        scores, hidden, win.features[:win.valid_len],
                        win.labels, params.reconstructor, weights, cfg.mode,
                        select_fraction=cfg.select_fraction, recon_mode=cfg.recon_mode,
                        invert_class_weight=cfg.invert_class_weight)
                if not np.isfinite(total.item()):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch}, video {win.video_id}: {breakdown}")
                backward(ad.scale(total, 1.0 / len(batch)))
                sums["total"] += breakdown["total"]
                sums["l_d"] += breakdown["l_d"]
                sums["l_r"] += breakdown["l_r"]
                if supervised:
                    sums["l_c"] += breakdown["l_c"]
                counted += 1
            adam_step(named, adam)
        metrics = EpochMetrics(
            epoch=epoch,
            total=sums["total"] / counted,
            l_c=(sums["l_c"] / counted) if supervised else None,
            l_d=sums["l_d"] / counted,
            l_r=sums["l_r"] / counted,
        )
        history.append(metrics)
        if log is not None:
            log.append(metrics.to_dict())
    return Checkpoint(config=cfg, params=params, adam=adam, epoch=cfg.epochs), history


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate_checkpoint(ckpt: Checkpoint, manifest: DatasetManifest,
                        split: str | None = "test", f1_mode: str | None = None,
                        budget_fraction: float | None = None) -> MetricReport:
    """Score, summarize and measure every entry of the chosen split."""
    cfg = ckpt.config
    entries = manifest.select(split)
    if not entries:
        raise UsageError(f"manifest has no entries for split {split!r}")
    mode = f1_mode or manifest.f1_mode
    budget = budget_fraction if budget_fraction is not None else cfg.budget_fraction
    videos: list[VideoMetrics] = []
    for entry in entries:
        frames, text, _ = _load_video(manifest, entry, cfg, need_labels=False)
        if entry.ground_truth is None:
            raise UsageError(f"{entry.video_id}: evaluation needs ground truth")
        gt = read_ground_truth(manifest.resolve(entry.ground_truth))
        if gt.n_frames != frames.rows:
            raise ValidationError(
                f"{entry.video_id}: ground truth covers {gt.n_frames} frames, features {frames.rows}")
        scores = score_video(frames.embeddings, text.embeddings, text.kind, ckpt.params, cfg)
        boundaries = gt.boundaries_or_uniform(frames.fps)
        summary = build_summary(scores, boundaries, budget_fraction=budget,
                                video_id=entry.video_id)
        references = gt.reference_summaries
        if not references:
            from .summary import keyframes_to_keyshots
            references = [keyframes_to_keyshots(gt.keyframe_labels, boundaries)]
        per_ref = [prf1(summary.frame_mask, ref) for ref in references]
        f1 = multi_ref_f1(summary.frame_mask, references, mode=mode)
        tau = rho = None
        if gt.annotator_scores:
            tau, rho = rank_metrics_per_annotator(scores, gt.annotator_scores,
                                                  tau_variant=cfg.tau_variant)
        best = int(np.argmax([f for _, _, f in per_ref]))
        videos.append(VideoMetrics(
            video_id=entry.video_id,
            precision=float(np.mean([p for p, _, _ in per_ref])) if mode == "avg" else per_ref[best][0],
            recall=float(np.mean([r for _, r, _ in per_ref])) if mode == "avg" else per_ref[best][1],
            f1=f1,
            per_reference_f1=[f for _, _, f in per_ref],
            tau=tau,
            rho=rho,
        ))
    return MetricReport(videos=videos, f1_mode=mode)

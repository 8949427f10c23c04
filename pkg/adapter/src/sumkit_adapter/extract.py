"""Frame sampling and extraction jobs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sumfeat import write_sumfeat


class ExtractionError(RuntimeError):
    pass


@dataclass
class FrameExtraction:
    rows: int
    fps: float
    out: str


def sample_frame_indices(n_frames: int, video_fps: float, target_fps: float) -> list[int]:
    """Nearest source frame for each target timestamp k / target_fps."""
    if n_frames < 1:
        raise ExtractionError("video has no frames")
    if video_fps <= 0 or target_fps <= 0:
        raise ExtractionError("frame rates must be positive")
    duration = n_frames / video_fps
    count = max(1, int(np.ceil(duration * target_fps)))
    return [min(int(round(k / target_fps * video_fps)), n_frames - 1)
            for k in range(count)]


def extract_frames(video_path: str | Path, out_path: str | Path, encoder,
                   target_fps: float = 2.0, video_id: str | None = None) -> FrameExtraction:
    """Decode, sample at the target rate, encode, write a frames file."""
    import cv2

    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise ExtractionError(f"cannot open video {video_path}")
    try:
        video_fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
        n_frames = int(cap.get(cv2.CAP_PROP_FRAME_COUNT) or 0)
        if video_fps <= 0 or n_frames <= 0:
            raise ExtractionError(f"{video_path}: cannot determine frame rate or length")
        wanted = set(sample_frame_indices(n_frames, video_fps, target_fps))
        frames = []
        index = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if index in wanted:
                frames.append(frame)
            index += 1
    finally:
        cap.release()
    if not frames:
        raise ExtractionError(f"{video_path}: no frames decoded")
    embeddings = encoder.encode_images(frames)
    vid = video_id or Path(video_path).stem
    write_sumfeat(out_path, vid, "frames", embeddings, fps=target_fps)
    return FrameExtraction(rows=embeddings.shape[0], fps=target_fps, out=str(out_path))


def extract_text(sentences: list[str], out_path: str | Path, encoder,
                 kind: str, video_id: str = "text", fps: float = 0.0) -> int:
    """Encode sentences (captions) or a single query; returns the row count."""
    sentences = [s.strip() for s in sentences if s.strip()]
    if not sentences:
        raise ExtractionError("no non-empty sentences to encode")
    if kind == "query" and len(sentences) != 1:
        raise ExtractionError("a query is a single sentence")
    embeddings = encoder.encode_texts(sentences)
    write_sumfeat(out_path, video_id, kind, embeddings, fps=fps)
    return embeddings.shape[0]

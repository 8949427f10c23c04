"""Embedding-file and dataset I/O, plus synthetic corpora for oracle tests.

Feature container (``SUMFEAT1``), byte-exact:

    bytes 0..7    magic ``SUMFEAT1``
    bytes 8..11   unsigned 32-bit little-endian header length H
    bytes 12..12+H UTF-8 JSON ``{"video_id", "kind", "rows", "dim", "fps"}``
                  with kind one of ``frames`` / ``captions`` / ``query``
    remainder     exactly rows*dim little-endian float32, row-major

Ground truth and manifests are plain UTF-8 JSON written with a fixed key
order so identical inputs always serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FeatureIOError, FormatError, UsageError, ValidationError

MAGIC = b"SUMFEAT1"
KINDS = ("frames", "captions", "query")


@dataclass
class FeatureBundle:
    """One video's worth of embeddings of a single kind."""

    video_id: str
    kind: str
    embeddings: np.ndarray  # rows x dim, float32
    fps: float = 0.0

    def __post_init__(self):
        self.embeddings = np.ascontiguousarray(np.asarray(self.embeddings, dtype=np.float32))
        self.validate()

    @property
    def rows(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown feature kind {self.kind!r}")
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] < 1 or self.embeddings.shape[1] < 1:
            raise ValidationError(f"embeddings must be a non-empty 2-D matrix, got {self.embeddings.shape}")
        if self.kind == "query" and self.embeddings.shape[0] != 1:
            raise ValidationError("query bundles must contain exactly one row")
        if not np.isfinite(self.embeddings).all():
            raise ValidationError(f"non-finite values in embeddings of {self.video_id!r}")


def _canonical_header(bundle: FeatureBundle) -> bytes:
    header = {
        "video_id": bundle.video_id,
        "kind": bundle.kind,
        "rows": bundle.rows,
        "dim": bundle.dim,
        "fps": float(bundle.fps),
    }
    return json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def write_feature_file(bundle: FeatureBundle, path: str | Path) -> None:
    bundle.validate()
    header = _canonical_header(bundle)
    payload = bundle.embeddings.astype("<f4", copy=False).tobytes()
    try:
        tmp = str(path) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(len(header).to_bytes(4, "little"))
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise FeatureIOError(f"cannot write feature file {path}: {exc}") from exc


def read_feature_file(path: str | Path) -> FeatureBundle:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FeatureIOError(f"cannot read feature file {path}: {exc}") from exc
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MAGIC!r}")
    hlen = int.from_bytes(blob[8:12], "little")
    if len(blob) < 12 + hlen:
        raise FeatureIOError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed JSON header: {exc}") from exc
    for key in ("video_id", "kind", "rows", "dim", "fps"):
        if key not in header:
            raise FormatError(f"{path}: header missing {key!r}")
    rows, dim = int(header["rows"]), int(header["dim"])
    payload = blob[12 + hlen:]
    expected = rows * dim * 4
    if len(payload) != expected:
        raise FeatureIOError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return FeatureBundle(video_id=str(header["video_id"]), kind=str(header["kind"]),
                         embeddings=data.copy(), fps=float(header["fps"]))


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


@dataclass
class GroundTruth:
    """Per-frame keyframe labels, annotator importance scores, references."""

    video_id: str
    keyframe_labels: np.ndarray              # length N, values in {0, 1}
    annotator_scores: list[np.ndarray] = field(default_factory=list)   # each length N in [0, 1]
    reference_summaries: list[np.ndarray] = field(default_factory=list)  # binary masks, length N
    shot_boundaries: list[int] | None = None  # ascending, first 0, last N

    def __post_init__(self):
        self.keyframe_labels = np.asarray(self.keyframe_labels, dtype=np.int64)
        self.annotator_scores = [np.asarray(s, dtype=np.float64) for s in self.annotator_scores]
        self.reference_summaries = [np.asarray(m, dtype=np.int64) for m in self.reference_summaries]
        self.validate()

    @property
    def n_frames(self) -> int:
        return int(self.keyframe_labels.shape[0])

    def validate(self) -> None:
        n = self.n_frames
        if n < 1:
            raise ValidationError("ground truth needs at least one frame")
        if not np.isin(self.keyframe_labels, (0, 1)).all():
            raise ValidationError("keyframe labels must be binary")
        for s in self.annotator_scores:
            if s.shape != (n,):
                raise ValidationError("annotator score length differs from label length")
            if not np.isfinite(s).all() or s.min() < 0 or s.max() > 1:
                raise ValidationError("annotator scores must lie in [0, 1]")
        for m in self.reference_summaries:
            if m.shape != (n,) or not np.isin(m, (0, 1)).all():
                raise ValidationError("reference summaries must be binary masks of length N")
        if self.shot_boundaries is not None:
            b = list(self.shot_boundaries)
            if len(b) < 2 or b[0] != 0 or b[-1] != n or any(y <= x for x, y in zip(b, b[1:])):
                raise ValidationError(f"shot boundaries must rise strictly from 0 to {n}")

    def boundaries_or_uniform(self, fps: float) -> list[int]:
        if self.shot_boundaries is not None:
            return list(self.shot_boundaries)
        return uniform_boundaries(self.n_frames, fps)


def uniform_boundaries(n_frames: int, fps: float) -> list[int]:
    """Uniform 5-second segments when no shot boundaries were supplied."""
    if n_frames < 1:
        raise UsageError("need at least one frame")
    step = max(1, math.ceil(5.0 * fps)) if fps > 0 else max(1, n_frames // 10 or 1)
    bounds = list(range(0, n_frames, step))
    bounds.append(n_frames)
    if bounds[-2] == n_frames:
        bounds.pop(-2)
    return bounds


def write_ground_truth(gt: GroundTruth, path: str | Path) -> None:
    doc = {
        "video_id": gt.video_id,
        "keyframe_labels": gt.keyframe_labels.tolist(),
        "annotator_scores": [s.tolist() for s in gt.annotator_scores],
        "reference_summaries": [m.tolist() for m in gt.reference_summaries],
        "shot_boundaries": gt.shot_boundaries,
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def read_ground_truth(path: str | Path) -> GroundTruth:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FeatureIOError(f"cannot read ground truth {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed ground-truth JSON: {exc}") from exc
    return GroundTruth(
        video_id=doc.get("video_id", ""),
        keyframe_labels=doc["keyframe_labels"],
        annotator_scores=doc.get("annotator_scores", []),
        reference_summaries=doc.get("reference_summaries", []),
        shot_boundaries=doc.get("shot_boundaries"),
    )


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    video_id: str
    frames: str
    captions: str | None = None
    query: str | None = None
    ground_truth: str | None = None
    split: str | None = None

    def text_path(self) -> str:
        if self.query is not None:
            return self.query
        if self.captions is not None:
            return self.captions
        raise UsageError(f"entry {self.video_id!r} has neither captions nor query features")


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    f1_mode: str = "avg"   # per-dataset aggregation convention
    name: str = ""
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def select(self, split: str | None) -> list[ManifestEntry]:
        if split is None:
            return list(self.entries)
        return [e for e in self.entries if e.split == split]


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "name": manifest.name,
        "f1_mode": manifest.f1_mode,
        "entries": [
            {k: v for k, v in {
                "video_id": e.video_id,
                "frames": e.frames,
                "captions": e.captions,
                "query": e.query,
                "ground_truth": e.ground_truth,
                "split": e.split,
            }.items() if v is not None}
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def read_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FeatureIOError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed manifest JSON: {exc}") from exc
    entries = [ManifestEntry(
        video_id=str(raw["video_id"]),
        frames=str(raw["frames"]),
        captions=raw.get("captions"),
        query=raw.get("query"),
        ground_truth=raw.get("ground_truth"),
        split=raw.get("split"),
    ) for raw in doc.get("entries", [])]
    manifest = DatasetManifest(entries=entries, f1_mode=doc.get("f1_mode", "avg"),
                               name=doc.get("name", ""), root=path.parent)
    seen: set[str] = set()
    for e in entries:
        if e.video_id in seen:
            raise ValidationError(f"duplicate video_id {e.video_id!r} in manifest")
        seen.add(e.video_id)
        for rel in (e.frames, e.captions, e.query, e.ground_truth):
            if rel is not None and not manifest.resolve(rel).exists():
                raise ValidationError(f"manifest references missing file {rel!r}")
    if manifest.f1_mode not in ("avg", "max"):
        raise ValidationError(f"manifest f1_mode must be avg or max, got {manifest.f1_mode!r}")
    return manifest


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------


def _unit(v: np.ndarray) -> np.ndarray:
    return v / max(float(np.linalg.norm(v)), 1e-12)


def _orthogonal_part(v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    return v - float(v @ axis) * axis


def generate_synthetic_dataset(out_dir: str | Path, seed: int = 0, n_videos: int = 8,
                               n_frames: int = 200, dim: int = 32,
                               keyframe_fraction: float = 0.15, m_captions: int = 7,
                               n_annotators: int = 3, shot_len: int = 10,
                               text_kind: str = "captions", test_fraction: float = 0.25,
                               fps: float = 2.0, topic_spread: float = 0.2,
                               feature_norm: float | None = None) -> Path:
    """Write a separable synthetic corpus and return the manifest path.

    Per-video "topic" directions are perturbations of one seed-global master
    direction (``topic_spread`` sets how far they wander, so held-out videos
    stay learnable at desk scale). Keyframes sit close to their video's
    topic, background frames are forced orthogonal to it, and caption or
    query embeddings are drawn near the topic too, so a scorer that reads the
    text can separate the classes. Keyframes occupy whole shots, so the
    keyframe mask doubles as the reference keyshot summary. Embeddings are
    scaled to row norm ``feature_norm`` (default sqrt(dim), the scale of real
    encoder features, which keeps positional encodings from drowning the
    signal). Fully deterministic per seed.
    """
    if not (0.0 < keyframe_fraction < 1.0):
        raise UsageError("keyframe_fraction must lie strictly between 0 and 1")
    if dim < 4:
        raise UsageError("dim must be at least 4")
    if text_kind not in ("captions", "query"):
        raise UsageError(f"text_kind must be captions or query, got {text_kind!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    scale = float(feature_norm) if feature_norm is not None else float(np.sqrt(dim))
    master = _unit(rng.normal(size=dim))
    n_test = int(round(n_videos * test_fraction))
    entries: list[ManifestEntry] = []
    for v in range(n_videos):
        video_id = f"synth{v:03d}"
        topic = _unit(master + topic_spread * rng.normal(size=dim))
        labels, boundaries = _keyshot_layout(rng, n_frames, keyframe_fraction, shot_len)
        emb = np.zeros((n_frames, dim), dtype=np.float64)
        for i in range(n_frames):
            noise = rng.normal(size=dim)
            if labels[i]:
                emb[i] = _unit(topic + 0.2 * noise)
            else:
                base = _orthogonal_part(_unit(noise), topic)
                emb[i] = _unit(base + 0.05 * rng.normal(size=dim))
        frames = FeatureBundle(video_id, "frames", (scale * emb).astype(np.float32), fps=fps)

        if text_kind == "captions":
            text = np.stack([_unit(topic + 0.1 * rng.normal(size=dim))
                             for _ in range(m_captions)])
            text_bundle = FeatureBundle(video_id, "captions",
                                        (scale * text).astype(np.float32), fps=fps)
        else:
            text = _unit(topic + 0.05 * rng.normal(size=dim))[None, :]
            text_bundle = FeatureBundle(video_id, "query",
                                        (scale * text).astype(np.float32), fps=fps)

        affinity = np.clip(emb @ topic, 0.0, 1.0)
        scores = [np.clip(affinity + 0.03 * rng.normal(size=n_frames), 0.0, 1.0)
                  for _ in range(n_annotators)]
        gt = GroundTruth(video_id, labels,
                         annotator_scores=scores,
                         reference_summaries=[labels.copy() for _ in range(n_annotators)],
                         shot_boundaries=boundaries)

        frames_rel = f"{video_id}.frames.sumfeat"
        text_rel = f"{video_id}.{text_bundle.kind}.sumfeat"
        gt_rel = f"{video_id}.gt.json"
        write_feature_file(frames, out / frames_rel)
        write_feature_file(text_bundle, out / text_rel)
        write_ground_truth(gt, out / gt_rel)
        entries.append(ManifestEntry(
            video_id=video_id,
            frames=frames_rel,
            captions=text_rel if text_kind == "captions" else None,
            query=text_rel if text_kind == "query" else None,
            ground_truth=gt_rel,
            split="test" if v >= n_videos - n_test else "train",
        ))
    manifest = DatasetManifest(entries=entries, name=f"synthetic-seed{seed}", root=out)
    manifest_path = out / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path


def _keyshot_layout(rng: np.random.Generator, n_frames: int, keyframe_fraction: float,
                    shot_len: int) -> tuple[np.ndarray, list[int]]:
    """Label exactly round(fraction*N) frames, grouped into whole shots."""
    n_key = int(round(keyframe_fraction * n_frames))
    n_key = max(1, min(n_key, n_frames - 1))
    runs = []
    remaining = n_key
    while remaining > 0:
        runs.append(min(shot_len, remaining))
        remaining -= runs[-1]
    # place runs into non-overlapping slots, earliest-start order
    starts: list[int] = []
    cursor = 0
    slack = n_frames - n_key
    gaps = rng.integers(1, max(2, slack // (len(runs) + 1) + 1), size=len(runs))
    for run, gap in zip(runs, gaps):
        start = min(cursor + int(gap), n_frames - run)
        starts.append(start)
        cursor = start + run
    labels = np.zeros(n_frames, dtype=np.int64)
    cuts = {0, n_frames}
    for start, run in zip(starts, runs):
        labels[start:start + run] = 1
        cuts.add(start)
        cuts.add(start + run)
    # cut remaining background stretches into ~shot_len pieces
    ordered = sorted(cuts)
    for a, b in zip(ordered, ordered[1:]):
        for c in range(a + shot_len, b, shot_len):
            cuts.add(c)
    return labels, sorted(cuts)


def generate_two_topic_video(out_dir: str | Path, seed: int = 0, n_frames: int = 200,
                             dim: int = 32, shot_len: int = 20, fps: float = 2.0,
                             video_id: str = "twotopic",
                             feature_norm: float | None = None) -> dict[str, str]:
    """Write one video alternating between two global topics plus two queries.

    Returns relative paths for the frames file, the two query files and the
    ground truth (whose labels mark the first topic's shots). Topic
    directions are derived from the seed only, so corpora generated with
    :func:`generate_two_topic_corpus` under the same seed share them.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scale = float(feature_norm) if feature_norm is not None else float(np.sqrt(dim))
    topic_a, topic_b = two_topic_directions(seed, dim)
    rng = np.random.default_rng(seed + 1000)
    emb, labels, boundaries = _two_topic_frames(rng, n_frames, shot_len,
                                                topic_a, topic_b, scale)
    paths = {
        "frames": f"{video_id}.frames.sumfeat",
        "query_a": f"{video_id}.query_a.sumfeat",
        "query_b": f"{video_id}.query_b.sumfeat",
        "ground_truth": f"{video_id}.gt.json",
    }
    write_feature_file(FeatureBundle(video_id, "frames", emb, fps=fps), out / paths["frames"])
    write_feature_file(FeatureBundle(video_id, "query",
                                     (scale * topic_a)[None, :].astype(np.float32), fps=fps),
                       out / paths["query_a"])
    write_feature_file(FeatureBundle(video_id, "query",
                                     (scale * topic_b)[None, :].astype(np.float32), fps=fps),
                       out / paths["query_b"])
    gt = GroundTruth(video_id, labels, annotator_scores=[], reference_summaries=[],
                     shot_boundaries=boundaries)
    write_ground_truth(gt, out / paths["ground_truth"])
    return paths


def generate_two_topic_corpus(out_dir: str | Path, seed: int = 0, n_videos: int = 8,
                              n_frames: int = 200, dim: int = 32, shot_len: int = 20,
                              fps: float = 2.0, feature_norm: float | None = None) -> Path:
    """Query-mode training corpus over two shared topics; returns manifest path.

    Every video mixes shots of both topics; its query picks one of them and
    the labels mark exactly the shots of the queried topic.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scale = float(feature_norm) if feature_norm is not None else float(np.sqrt(dim))
    topic_a, topic_b = two_topic_directions(seed, dim)
    rng = np.random.default_rng(seed + 2000)
    entries = []
    for v in range(n_videos):
        video_id = f"duo{v:03d}"
        emb, labels_a, boundaries = _two_topic_frames(rng, n_frames, shot_len,
                                                      topic_a, topic_b, scale)
        want_a = v % 2 == 0
        query_dir = topic_a if want_a else topic_b
        labels = labels_a if want_a else 1 - labels_a
        query = scale * _unit(query_dir + 0.05 * rng.normal(size=dim))[None, :]
        frames_rel, query_rel, gt_rel = (f"{video_id}.frames.sumfeat",
                                         f"{video_id}.query.sumfeat",
                                         f"{video_id}.gt.json")
        write_feature_file(FeatureBundle(video_id, "frames", emb, fps=fps), out / frames_rel)
        write_feature_file(FeatureBundle(video_id, "query", query.astype(np.float32), fps=fps),
                           out / query_rel)
        write_ground_truth(GroundTruth(video_id, labels, annotator_scores=[],
                                       reference_summaries=[labels.copy()],
                                       shot_boundaries=boundaries), out / gt_rel)
        entries.append(ManifestEntry(video_id=video_id, frames=frames_rel, query=query_rel,
                                     ground_truth=gt_rel, split="train"))
    manifest = DatasetManifest(entries=entries, name=f"two-topic-seed{seed}", root=out)
    manifest_path = out / "manifest.json"
    write_manifest(manifest, manifest_path)
    return manifest_path


def two_topic_directions(seed: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    a = _unit(rng.normal(size=dim))
    b = _unit(_orthogonal_part(_unit(rng.normal(size=dim)), a))
    return a, b


def _two_topic_frames(rng: np.random.Generator, n_frames: int, shot_len: int,
                      topic_a: np.ndarray, topic_b: np.ndarray, scale: float = 1.0):
    dim = topic_a.shape[0]
    boundaries = list(range(0, n_frames, shot_len))
    boundaries.append(n_frames)
    if boundaries[-2] == n_frames:
        boundaries.pop(-2)
    emb = np.zeros((n_frames, dim), dtype=np.float64)
    labels_a = np.zeros(n_frames, dtype=np.int64)
    for s, (lo, hi) in enumerate(zip(boundaries, boundaries[1:])):
        topic = topic_a if s % 2 == 0 else topic_b
        for i in range(lo, hi):
            emb[i] = _unit(topic + 0.2 * rng.normal(size=dim))
        if s % 2 == 0:
            labels_a[lo:hi] = 1
    return (scale * emb).astype(np.float32), labels_a, boundaries

"""Image and text encoders producing fixed-dimension embedding rows.

Two backends:

* ``clip`` — the pretrained CLIP image/text towers via transformers. Needs
  the model weights on disk or a network path to the hub.
* ``projection`` — a deterministic offline stand-in: pooled pixel statistics
  (images) or hashed character trigrams (text) pushed through a fixed
  seeded random projection, then L2-normalized. No downloads, useful for
  air-gapped runs and tests.

Both emit unit-norm float32 rows.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_DIM = 512
_GRID = 16  # pooled image patch grid


class EncoderUnavailable(RuntimeError):
    pass


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return (m / np.maximum(norms, 1e-12)).astype(np.float32)


class ProjectionEncoder:
    """Deterministic random-projection encoder; same inputs, same bytes."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.dim = dim
        rng = np.random.default_rng(0xC11F)
        self._img_proj = rng.normal(size=(_GRID * _GRID * 3, dim)).astype(np.float64) \
            / np.sqrt(_GRID * _GRID * 3)
        self._txt_proj = rng.normal(size=(4096, dim)).astype(np.float64) / 64.0

    def encode_images(self, frames: list[np.ndarray]) -> np.ndarray:
        import cv2

        rows = np.zeros((len(frames), self.dim), dtype=np.float64)
        for i, frame in enumerate(frames):
            small = cv2.resize(frame, (_GRID, _GRID), interpolation=cv2.INTER_AREA)
            flat = small.astype(np.float64).reshape(-1) / 255.0
            rows[i] = (flat - flat.mean()) @ self._img_proj
        return _normalize_rows(rows)

    def encode_texts(self, sentences: list[str]) -> np.ndarray:
        rows = np.zeros((len(sentences), self.dim), dtype=np.float64)
        for i, sentence in enumerate(sentences):
            bag = np.zeros(4096, dtype=np.float64)
            text = sentence.lower().strip()
            for j in range(len(text) - 2):
                gram = text[j:j + 3].encode("utf-8")
                slot = int.from_bytes(hashlib.blake2b(gram, digest_size=4).digest(), "little")
                bag[slot % 4096] += 1.0
            rows[i] = bag @ self._txt_proj
        return _normalize_rows(rows)


class ClipEncoder:
    """CLIP towers; 512-dim normalized embeddings, frozen weights."""

    MODEL = "openai/clip-vit-base-patch32"

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim != DEFAULT_DIM:
            raise EncoderUnavailable(f"clip encoder emits {DEFAULT_DIM}-dim rows, not {dim}")
        self.dim = dim
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderUnavailable(
                "clip encoder needs torch and transformers installed "
                "(pip install 'sumkit-adapter[clip]')") from exc
        try:
            self._model = CLIPModel.from_pretrained(self.MODEL)
            self._processor = CLIPProcessor.from_pretrained(self.MODEL)
        except OSError as exc:
            raise EncoderUnavailable(
                f"cannot load {self.MODEL}; download the weights or use "
                "--encoder projection for offline runs") from exc
        self._torch = torch
        self._model.eval()

    def encode_images(self, frames: list[np.ndarray]) -> np.ndarray:
        # frames arrive BGR from OpenCV; CLIP expects RGB
        rgb = [frame[:, :, ::-1] for frame in frames]
        inputs = self._processor(images=rgb, return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return _normalize_rows(feats.cpu().numpy().astype(np.float64))

    def encode_texts(self, sentences: list[str]) -> np.ndarray:
        inputs = self._processor(text=sentences, return_tensors="pt", padding=True,
                                 truncation=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return _normalize_rows(feats.cpu().numpy().astype(np.float64))


def make_encoder(name: str, dim: int = DEFAULT_DIM):
    if name == "projection":
        return ProjectionEncoder(dim=dim)
    if name == "clip":
        return ClipEncoder(dim=dim)
    raise EncoderUnavailable(f"unknown encoder {name!r}; choose clip or projection")

"""Training losses: weighted BCE, reconstruction, diversity, and combinations.

Classification weighting: keyframe terms carry k/N and background terms
1-k/N, where k is the keyframe count. That down-weights the minority class;
``invert_class_weight`` swaps to the conventional weighting for ablations.
Reconstruction defaults to mean squared error, with an unsquared-L2 variant
selectable via ``recon_mode``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, _result
from .config import Config
from .errors import ShapeError, UsageError

LOG_CLAMP = 1e-7


@dataclass
class LossWeights:
    alpha: float = 0.5
    beta: float = 0.3
    lambda_: float = 0.2

    def __post_init__(self):
        if min(self.alpha, self.beta, self.lambda_) < 0:
            raise UsageError("loss weights must be nonnegative")
        if max(self.alpha, self.beta, self.lambda_) <= 0:
            raise UsageError("at least one loss weight must be positive")

    @classmethod
    def from_config(cls, cfg: Config) -> "LossWeights":
        return cls(alpha=cfg.alpha, beta=cfg.beta, lambda_=cfg.lambda_)


@dataclass
class KeyframeSelection:
    indices: list[int]      # strictly increasing
    scores: np.ndarray      # the scores the selection was computed from


@dataclass
class ReconstructorParams:
    """Position-wise D->D map; layers applied with relu between, none after last."""

    layers: list[tuple[Tensor, Tensor]]  # (weight D x D, bias 1 x D)

    def named(self, prefix: str = "recon") -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(self.layers):
            out += [(f"{prefix}.l{i}.w", w), (f"{prefix}.l{i}.b", b)]
        return out


def init_reconstructor_params(cfg: Config, rng: np.random.Generator,
                              n_layers: int = 2) -> ReconstructorParams:
    d = cfg.embed_dim
    bound = 1.0 / np.sqrt(d)
    layers = [(ad.parameter(rng.uniform(-bound, bound, size=(d, d))),
               ad.parameter(np.zeros((1, d)))) for _ in range(n_layers)]
    return ReconstructorParams(layers=layers)


def classification_loss(scores: Tensor, labels: np.ndarray,
                        invert_class_weight: bool = False) -> Tensor:
    """Weighted binary cross entropy over per-frame scores.

    Log arguments are clamped at 1e-7 (gradient zero beyond the clamp).
    Degenerate all-keyframe / no-keyframe labels warn but still evaluate.
    """
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if scores.data.ndim != 1 or scores.shape[0] != labels.shape[0]:
        raise ShapeError(f"scores {scores.shape} and labels {labels.shape} differ in length")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise UsageError("labels must be binary")
    n = labels.shape[0]
    k = float(labels.sum())
    if k == 0 or k == n:
        warnings.warn(f"degenerate labels (k={int(k)} of {n}); loss still computed",
                      stacklevel=2)
    w_key = k / n
    w_bg = 1.0 - k / n
    if invert_class_weight:
        w_key, w_bg = w_bg, w_key

    s = scores.data.astype(np.float64)
    s_c = np.maximum(s, LOG_CLAMP)
    one_minus_c = np.maximum(1.0 - s, LOG_CLAMP)
    terms = w_key * labels * np.log(s_c) + w_bg * (1.0 - labels) * np.log(one_minus_c)
    value = -float(terms.sum()) / n

    def back(g: np.ndarray) -> None:
        if scores.requires_grad:
            g0 = float(g.reshape(-1)[0])
            ds = np.zeros(n, dtype=np.float64)
            live_pos = s > LOG_CLAMP
            live_neg = (1.0 - s) > LOG_CLAMP
            ds += np.where(live_pos, w_key * labels / s_c, 0.0)
            ds -= np.where(live_neg, w_bg * (1.0 - labels) / one_minus_c, 0.0)
            scores._accumulate((-g0 / n * ds).astype(np.float32))

    return _result(np.array([value]), (scores,), back, exact=value)


def select_keyframes(scores: np.ndarray, fraction: float) -> KeyframeSelection:
    """Top-ceil(fraction*N) indices by score, ties to the lower index.

    At least two indices are returned when N >= 2 so the diversity loss
    always has a pair to compare.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = scores.shape[0]
    if n < 1:
        raise UsageError("need at least one score")
    if not (0.0 < fraction <= 1.0):
        raise UsageError(f"fraction must lie in (0, 1], got {fraction}")
    count = math.ceil(fraction * n)
    if n >= 2:
        count = max(count, 2)
    count = min(count, n)
    order = np.argsort(-scores, kind="stable")  # stable: equal scores keep index order
    chosen = sorted(int(i) for i in order[:count])
    return KeyframeSelection(indices=chosen, scores=scores)


def reconstruct(selected: Tensor, params: ReconstructorParams) -> Tensor:
    """Apply the position-wise reconstructor to selected feature rows."""
    if selected.shape[0] < 1:
        raise UsageError("need at least one selected row")
    x = selected
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        if w.shape[0] != x.shape[1]:
            raise ShapeError(f"reconstructor layer {i} expects dim {w.shape[0]}, got {x.shape[1]}")
        x = ad.add(ad.matmul(x, w), b)
        if i != last:
            x = ad.relu(x)
    return x


def reconstruction_loss(original: Tensor, reconstructed: Tensor, mode: str = "mse") -> Tensor:
    """Mean per-row discrepancy: squared L2 ("mse") or plain L2 ("l2")."""
    if original.shape != reconstructed.shape:
        raise ShapeError(f"original {original.shape} vs reconstructed {reconstructed.shape}")
    if original.data.ndim != 2 or original.shape[0] < 1:
        raise UsageError("reconstruction loss needs a non-empty 2-D selection")
    if mode not in ("mse", "l2"):
        raise UsageError(f"mode must be mse or l2, got {mode!r}")
    count = original.shape[0]
    diff = ad.sub(original, reconstructed)
    sq = ad.mul(diff, diff)
    if mode == "mse":
        return ad.scale(ad.sum_all(sq), 1.0 / count)
    return ad.scale(ad.sum_all(ad.sqrt(ad.sum_rows(sq))), 1.0 / count)


def diversity_loss(reconstructed: Tensor) -> Tensor:
    """Mean pairwise cosine similarity among reconstructed rows; 0 if < 2 rows."""
    count = reconstructed.shape[0]
    if count < 2:
        return ad.constant([0.0])
    unit = ad.l2_normalize_rows(reconstructed)
    gram = ad.matmul(unit, ad.transpose(unit))
    off_diag = 1.0 - np.eye(count, dtype=np.float32)
    total = ad.sum_all(ad.mul_const(gram, off_diag))
    return ad.scale(total, 1.0 / (count * (count - 1)))


def combined_loss(scores: Tensor, hidden: Tensor, frame_features: np.ndarray,
                  labels: np.ndarray | None, recon_params: ReconstructorParams,
                  weights: LossWeights, mode: str, select_fraction: float = 0.15,
                  recon_mode: str = "mse", invert_class_weight: bool = False,
                  frozen_selection: list[int] | None = None) -> tuple[Tensor, dict]:
    """Weighted sum of the losses, plus a per-term breakdown for logging.

    Supervised combines all three; unsupervised drops the classification
    term since no labels are available. Keyframe selection for the
    diversity/reconstruction path is non-differentiable; pass
    ``frozen_selection`` to pin it (gradient checks perturb parameters
    without letting the selected set flip).
    """
    if mode not in ("supervised", "unsupervised"):
        raise UsageError(f"mode must be supervised or unsupervised, got {mode!r}")
    if mode == "supervised" and labels is None:
        raise UsageError("supervised loss needs labels")
    if frozen_selection is not None:
        indices = list(frozen_selection)
    else:
        indices = select_keyframes(scores.data, select_fraction).indices
    selected_hidden = ad.gather_rows(hidden, indices)
    reconstructed = reconstruct(selected_hidden, recon_params)
    originals = ad.constant(np.asarray(frame_features, dtype=np.float32)[indices])
    l_r = reconstruction_loss(originals, reconstructed, mode=recon_mode)
    l_d = diversity_loss(reconstructed)

    breakdown = {"l_d": l_d.item(), "l_r": l_r.item(), "selected": indices}
    total = ad.add(ad.scale(l_d, weights.beta), ad.scale(l_r, weights.lambda_))
    if mode == "supervised":
        l_c = classification_loss(scores, labels, invert_class_weight=invert_class_weight)
        breakdown["l_c"] = l_c.item()
        total = ad.add(ad.scale(l_c, weights.alpha), total)
    breakdown["total"] = total.item()
    return total, breakdown

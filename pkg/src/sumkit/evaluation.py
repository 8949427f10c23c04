"""Summary quality metrics: keyshot F1 and rank correlations with ties.

Kendall's tau defaults to the tie-corrected tau-b,
(C - D) / sqrt((C + D + T_pred)(C + D + T_ref)) with T counting pairs tied on
one side only; tau-a is selectable. Spearman's rho is the Pearson correlation
of average ranks. For context: reported human agreement on the TVSum
benchmark is tau 0.177 / rho 0.204 (documented only, never asserted).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, UsageError

HUMAN_AGREEMENT_TAU = 0.177
HUMAN_AGREEMENT_RHO = 0.204


def prf1(pred_mask: np.ndarray, ref_mask: np.ndarray) -> tuple[float, float, float]:
    """Precision, recall, F1 of two binary masks; empty sides count as zero."""
    pred = np.asarray(pred_mask).reshape(-1).astype(bool)
    ref = np.asarray(ref_mask).reshape(-1).astype(bool)
    if pred.shape != ref.shape:
        raise ShapeError(f"mask lengths differ: {pred.shape} vs {ref.shape}")
    overlap = float(np.logical_and(pred, ref).sum())
    p = overlap / pred.sum() if pred.sum() else 0.0
    r = overlap / ref.sum() if ref.sum() else 0.0
    f1 = 2 * p * r / (p + r) if (p + r) else 0.0
    return p, r, f1


def multi_ref_f1(pred_mask: np.ndarray, references: list[np.ndarray],
                 mode: str = "avg") -> float:
    """Aggregate F1 over annotator references: mean or max per convention."""
    if not references:
        raise UsageError("need at least one reference summary")
    if mode not in ("avg", "max"):
        raise UsageError(f"mode must be avg or max, got {mode!r}")
    scores = [prf1(pred_mask, ref)[2] for ref in references]
    return float(np.mean(scores)) if mode == "avg" else float(max(scores))


def _pair_counts(x: np.ndarray, y: np.ndarray) -> tuple[int, int, int, int]:
    """(concordant, discordant, tied-only-in-x, tied-only-in-y) over all pairs."""
    n = x.shape[0]
    concordant = discordant = ties_x = ties_y = 0
    # chunked sign comparison keeps memory bounded for long videos
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dx = np.sign(x[lo:hi, None] - x[None, :])
        dy = np.sign(y[lo:hi, None] - y[None, :])
        upper = np.triu(np.ones((hi - lo, n), dtype=bool), k=lo + 1)
        prod = dx * dy
        concordant += int(((prod > 0) & upper).sum())
        discordant += int(((prod < 0) & upper).sum())
        ties_x += int(((dx == 0) & (dy != 0) & upper).sum())
        ties_y += int(((dy == 0) & (dx != 0) & upper).sum())
    return concordant, discordant, ties_x, ties_y


def kendall_tau(pred_scores: np.ndarray, ref_scores: np.ndarray,
                variant: str = "b") -> float:
    """Kendall rank correlation; 0 when one side is entirely tied."""
    x = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    y = np.asarray(ref_scores, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"score lengths differ: {x.shape} vs {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise UsageError("rank correlation needs at least two items")
    if variant not in ("a", "b"):
        raise UsageError(f"variant must be a or b, got {variant!r}")
    c, d, tx, ty = _pair_counts(x, y)
    if variant == "a":
        return (c - d) / (n * (n - 1) / 2)
    denom = np.sqrt(float(c + d + tx) * float(c + d + ty))
    if denom == 0.0:
        return 0.0
    return (c - d) / denom


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank positions."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(pred_scores: np.ndarray, ref_scores: np.ndarray) -> float:
    """Pearson correlation of average ranks; 0 when a side has no rank variance."""
    x = np.asarray(pred_scores, dtype=np.float64).reshape(-1)
    y = np.asarray(ref_scores, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"score lengths differ: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise UsageError("rank correlation needs at least two items")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0.0:
        return 0.0
    return float(rx @ ry) / denom


def rank_metrics_per_annotator(pred_scores: np.ndarray,
                               annotator_scores: list[np.ndarray],
                               tau_variant: str = "b") -> tuple[float, float]:
    """Mean tau and rho of the prediction against each annotator."""
    if not annotator_scores:
        raise UsageError("need at least one annotator")
    taus = [kendall_tau(pred_scores, a, variant=tau_variant) for a in annotator_scores]
    rhos = [spearman_rho(pred_scores, a) for a in annotator_scores]
    return float(np.mean(taus)), float(np.mean(rhos))


@dataclass
class VideoMetrics:
    video_id: str
    precision: float
    recall: float
    f1: float
    per_reference_f1: list[float] = field(default_factory=list)
    tau: float | None = None
    rho: float | None = None

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_reference_f1": self.per_reference_f1,
            "tau": self.tau,
            "rho": self.rho,
        }


@dataclass
class MetricReport:
    videos: list[VideoMetrics]
    f1_mode: str = "avg"

    @property
    def mean_f1(self) -> float:
        return float(np.mean([v.f1 for v in self.videos])) if self.videos else 0.0

    @property
    def mean_tau(self) -> float:
        vals = [v.tau for v in self.videos if v.tau is not None]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def mean_rho(self) -> float:
        vals = [v.rho for v in self.videos if v.rho is not None]
        return float(np.mean(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "f1_mode": self.f1_mode,
            "mean_f1": self.mean_f1,
            "mean_tau": self.mean_tau,
            "mean_rho": self.mean_rho,
            "videos": [v.to_dict() for v in self.videos],
        }

    def to_csv(self) -> str:
        lines = ["video_id,precision,recall,f1,tau,rho"]
        for v in self.videos:
            tau = "" if v.tau is None else f"{v.tau:.6f}"
            rho = "" if v.rho is None else f"{v.rho:.6f}"
            lines.append(f"{v.video_id},{v.precision:.6f},{v.recall:.6f},{v.f1:.6f},{tau},{rho}")
        return "\n".join(lines) + "\n"

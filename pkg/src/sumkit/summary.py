"""Turn frame scores into a budgeted keyshot summary.

Shot value is the mean frame score over the shot; the knapsack objective is
total score mass (value * length), so summing frame scores per shot gives
the same optimum. Selection is an exact 0/1 dynamic program over integer
frame counts; among equal-objective solutions it prefers fewer total frames,
then the lexicographically smallest shot index set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError, ValidationError


@dataclass
class ShotScore:
    index: int
    start: int
    end: int          # exclusive
    value: float      # mean frame score over [start, end)

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class Summary:
    video_id: str
    n_frames: int
    budget_frames: int
    budget_fraction: float
    selected: list[ShotScore] = field(default_factory=list)

    @property
    def frame_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_frames, dtype=np.int64)
        for shot in self.selected:
            mask[shot.start:shot.end] = 1
        return mask

    @property
    def total_selected_frames(self) -> int:
        return sum(s.length for s in self.selected)

    @property
    def objective(self) -> float:
        return sum(s.value * s.length for s in self.selected)

    def mask_runs(self) -> list[list[int]]:
        """Run-length encoding of the mask as [start, end) pairs."""
        runs = []
        mask = self.frame_mask
        i = 0
        while i < self.n_frames:
            if mask[i]:
                j = i
                while j < self.n_frames and mask[j]:
                    j += 1
                runs.append([i, j])
                i = j
            else:
                i += 1
        return runs

    def to_dict(self) -> dict:
        return {
            "video_id": self.video_id,
            "n_frames": self.n_frames,
            "budget_fraction": self.budget_fraction,
            "budget_frames": self.budget_frames,
            "total_selected_frames": self.total_selected_frames,
            "selected_shots": [{"index": s.index, "start": s.start, "end": s.end,
                                "value": s.value} for s in self.selected],
            "frame_mask_rle": self.mask_runs(),
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def _check_boundaries(boundaries, n_frames: int) -> list[int]:
    b = [int(x) for x in boundaries]
    if len(b) < 2 or b[0] != 0 or b[-1] != n_frames or any(y <= x for x, y in zip(b, b[1:])):
        raise ValidationError(f"boundaries must rise strictly from 0 to {n_frames}, got {b[:5]}...")
    return b


def frame_to_shot_scores(scores: np.ndarray, boundaries) -> list[ShotScore]:
    """Average frame scores within each [start, end) shot."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    b = _check_boundaries(boundaries, scores.shape[0])
    return [ShotScore(index=i, start=lo, end=hi, value=float(scores[lo:hi].mean()))
            for i, (lo, hi) in enumerate(zip(b, b[1:]))]


def knapsack_select(shots: list[ShotScore], budget_frames: int,
                    video_id: str = "", n_frames: int | None = None,
                    budget_fraction: float = 0.0) -> Summary:
    """Exact 0/1 knapsack maximizing sum(value * length) within the frame budget."""
    if budget_frames < 0:
        raise UsageError("budget_frames must be >= 0")
    n = len(shots)
    total_frames = n_frames if n_frames is not None else (shots[-1].end if shots else 0)
    cap = min(budget_frames, sum(s.length for s in shots))

    # suffix DP: best[i][w] = (objective, frames used) over shots i.. with capacity w
    best_obj = [[0.0] * (cap + 1) for _ in range(n + 1)]
    best_frames = [[0] * (cap + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        length = shots[i].length
        gain = shots[i].value * length
        row_obj, row_fr = best_obj[i], best_frames[i]
        nxt_obj, nxt_fr = best_obj[i + 1], best_frames[i + 1]
        for w in range(cap + 1):
            obj, fr = nxt_obj[w], nxt_fr[w]
            if length <= w:
                t_obj = gain + nxt_obj[w - length]
                t_fr = length + nxt_fr[w - length]
                if t_obj > obj or (t_obj == obj and t_fr < fr):
                    obj, fr = t_obj, t_fr
            row_obj[w], row_fr[w] = obj, fr

    # forward walk; taking on ties yields the lexicographically smallest set
    chosen: list[ShotScore] = []
    w = cap
    for i in range(n):
        length = shots[i].length
        if length > w:
            continue
        gain = shots[i].value * length
        take_obj = gain + best_obj[i + 1][w - length]
        take_fr = length + best_frames[i + 1][w - length]
        if (take_obj > best_obj[i][w]
                or (take_obj == best_obj[i][w] and take_fr <= best_frames[i][w])):
            chosen.append(shots[i])
            w -= length
    return Summary(video_id=video_id, n_frames=total_frames, budget_frames=budget_frames,
                   budget_fraction=budget_fraction, selected=chosen)


def build_summary(scores: np.ndarray, boundaries, budget_fraction: float = 0.15,
                  video_id: str = "") -> Summary:
    """frame scores -> shot scores -> knapsack under floor(fraction * N) frames."""
    if not (0.0 < budget_fraction <= 1.0):
        raise UsageError(f"budget_fraction must lie in (0, 1], got {budget_fraction}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = scores.shape[0]
    shots = frame_to_shot_scores(scores, boundaries)
    budget = math.floor(budget_fraction * n)
    return knapsack_select(shots, budget, video_id=video_id, n_frames=n,
                           budget_fraction=budget_fraction)


def keyframes_to_keyshots(labels: np.ndarray, boundaries,
                          budget_fraction: float = 0.15) -> np.ndarray:
    """Mark shots containing any keyframe, trimmed to the budget by density.

    A shot qualifies if it holds at least one labeled keyframe. While the
    marked set exceeds floor(fraction * N) frames, the shot with the lowest
    keyframe density (keyframes per frame) is dropped, later index first on
    ties, so earlier shots survive.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n = labels.shape[0]
    b = _check_boundaries(boundaries, n)
    budget = math.floor(budget_fraction * n)
    marked = []
    for i, (lo, hi) in enumerate(zip(b, b[1:])):
        count = int(labels[lo:hi].sum())
        if count > 0:
            marked.append((i, lo, hi, count / (hi - lo)))
    total = sum(hi - lo for _, lo, hi, _ in marked)
    while marked and total > budget:
        drop = min(range(len(marked)), key=lambda j: (marked[j][3], -marked[j][0]))
        _, lo, hi, _ = marked.pop(drop)
        total -= hi - lo
    mask = np.zeros(n, dtype=np.int64)
    for _, lo, hi, _ in marked:
        mask[lo:hi] = 1
    return mask

"""Acceptance suite: one test per release criterion, one PASS line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings. Every tolerance is pinned here, not configurable.
"""

import hashlib
import itertools
import json
import time

import numpy as np
import pytest
from click.testing import CliRunner

from sumkit import autodiff as ad
from sumkit.autodiff import Tensor
from sumkit.attention import init_lga_params, language_guided_attention
from sumkit.cli import main as cli_main
from sumkit.config import Config
from sumkit.evaluation import kendall_tau, multi_ref_f1, prf1, spearman_rho
from sumkit.features import (
    generate_synthetic_dataset,
    generate_two_topic_corpus,
    generate_two_topic_video,
    read_feature_file,
    read_ground_truth,
    read_manifest,
)
from sumkit.fusion import fuse_text, init_fusion_params
from sumkit.losses import (
    LossWeights,
    classification_loss,
    combined_loss,
    diversity_loss,
    init_reconstructor_params,
    reconstruct,
    reconstruction_loss,
    select_keyframes,
)
from sumkit.model import score_video
from sumkit.optim import finite_diff_check
from sumkit.summary import ShotScore, build_summary, knapsack_select
from sumkit.trainer import train, evaluate_checkpoint
from sumkit.transformer import init_transformer_params, score_window, window_video


GRAD_TOL = 1e-3


def small_cfg(**kw):
    base = dict(embed_dim=16, m_fixed=3, lga_heads=2, tf_heads=2,
                tf_enc_layers=2, tf_dec_layers=2, window_len=8)
    base.update(kw)
    return Config(**base).validate()


def _report(name: str, ok: bool, detail: str = ""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f" — {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------
# criterion 1: gradient suite
# ---------------------------------------------------------------------------


def _grad_case_fusion(seed):
    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    params = init_fusion_params(cfg, rng)
    sampled = Tensor(rng.normal(size=(cfg.m_fixed, cfg.embed_dim)))

    def f(_):
        out = fuse_text(sampled, params)
        return ad.mean_all(ad.mul(out, out))

    return finite_diff_check(f, params.named(), seed=seed)


def _grad_case_lga(seed):
    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    params = init_lga_params(cfg, rng)
    frames = Tensor(rng.normal(size=(6, cfg.embed_dim)))
    text = Tensor(rng.normal(size=(4, cfg.embed_dim)))

    def f(_):
        out = language_guided_attention(frames, text, params)
        return ad.mean_all(ad.mul(out, out))

    return finite_diff_check(f, params.named(), max_coords_per_tensor=3, seed=seed)


def _grad_case_transformer(seed):
    # 2 encoder + 2 decoder layers on an 8-frame window, BCE readout
    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    params = init_transformer_params(cfg, rng)
    frames = Tensor(rng.normal(size=(8, cfg.embed_dim)))
    labels = rng.integers(0, 2, size=8)
    if labels.sum() in (0, 8):
        labels[0] = 1 - labels[0]

    def f(_):
        scores, _hidden = score_window(frames, 8, params, cfg)
        return classification_loss(scores, labels)

    return finite_diff_check(f, params.named(), max_coords_per_tensor=2, seed=seed)


def _grad_case_reconstructor(seed):
    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    params = init_reconstructor_params(cfg, rng)
    x = Tensor(rng.normal(size=(5, cfg.embed_dim)))
    target = Tensor(rng.normal(size=(5, cfg.embed_dim)))

    def f(_):
        return reconstruction_loss(target, reconstruct(x, params))

    return finite_diff_check(f, params.named(), seed=seed)


def _grad_case_losses(seed):
    # all three losses combined through a frozen selection
    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    recon = init_reconstructor_params(cfg, rng)
    raw = Tensor(rng.normal(size=10), requires_grad=True)
    hidden = Tensor(rng.normal(size=(10, cfg.embed_dim)), requires_grad=True)
    feats = rng.normal(size=(10, cfg.embed_dim)).astype(np.float32)
    labels = rng.integers(0, 2, size=10)
    if labels.sum() in (0, 10):
        labels[0] = 1 - labels[0]
    frozen = select_keyframes(ad.sigmoid(raw).data, 0.3).indices
    named = [("raw", raw), ("hidden", hidden)] + recon.named()

    def f(_):
        total, _ = combined_loss(ad.sigmoid(raw), hidden, feats, labels, recon,
                                 LossWeights(), "supervised", frozen_selection=frozen)
        return total

    return finite_diff_check(f, named, max_coords_per_tensor=3, seed=seed)


def _grad_case_pipeline(seed):
    # full supervised objective on an 8-frame window: fusion -> cross-modal
    # attention -> transformer -> combined loss, selection held fixed
    from sumkit.model import forward_window, init_model_params

    cfg = small_cfg()
    rng = np.random.default_rng(seed)
    params = init_model_params(cfg, rng=rng)
    feats = rng.normal(size=(8, cfg.embed_dim)).astype(np.float32)
    text = rng.normal(size=(4, cfg.embed_dim)).astype(np.float32)
    labels = rng.integers(0, 2, size=8)
    if labels.sum() in (0, 8):
        labels[0] = 1 - labels[0]
    scores0, _ = forward_window(feats, 8, text, "captions", params, cfg)
    frozen = select_keyframes(scores0.data, 0.3).indices

    def f(_):
        scores, hidden = forward_window(feats, 8, text, "captions", params, cfg)
        total, _ = combined_loss(scores, hidden, feats, labels, params.reconstructor,
                                 LossWeights(), "supervised", frozen_selection=frozen)
        return total

    # half the default step: the deep composition crosses relu kinks at 1e-3
    return finite_diff_check(f, params.named(), max_coords_per_tensor=1, seed=seed,
                             epsilon=5e-4)


def test_criterion_gradient_suite():
    start = time.monotonic()
    cases = []
    for seed in range(7):
        cases.append(("fusion", seed, _grad_case_fusion(seed)))
        cases.append(("lga", seed, _grad_case_lga(seed)))
        cases.append(("transformer", seed, _grad_case_transformer(seed)))
        cases.append(("reconstructor", seed, _grad_case_reconstructor(seed)))
        cases.append(("losses", seed, _grad_case_losses(seed)))
        cases.append(("pipeline", seed, _grad_case_pipeline(seed)))
    elapsed = time.monotonic() - start
    worst = max(err for _, _, err in cases)
    failures = [(b, s, e) for b, s, e in cases if e > GRAD_TOL]
    _report("gradient suite",
            len(cases) >= 30 and not failures and elapsed < 120.0,
            f"{len(cases)} cases, worst rel err {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: knapsack against exhaustive search
# ---------------------------------------------------------------------------


def _brute_force_objective(lengths: np.ndarray, values: np.ndarray, budget: int) -> float:
    n = len(lengths)
    masks = np.arange(1 << n, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(np.float64)
    weights = bits @ lengths
    objectives = bits @ (values * lengths)
    return float(objectives[weights <= budget].max())


def test_criterion_knapsack_oracle():
    start = time.monotonic()
    rng = np.random.default_rng(20240)
    checked = 0
    for _ in range(500):
        n = int(rng.integers(1, 17))
        lengths = rng.integers(1, 12, size=n).astype(np.float64)
        # dyadic values make every subset objective exact in float64, so the
        # DP and the enumeration compare bit-for-bit regardless of sum order
        values = rng.integers(0, 1025, size=n) / 1024.0
        budget = int(rng.integers(0, int(lengths.sum()) + 3))
        shots, cursor = [], 0
        for i in range(n):
            shots.append(ShotScore(index=i, start=cursor, end=cursor + int(lengths[i]),
                                   value=float(values[i])))
            cursor += int(lengths[i])
        got = knapsack_select(shots, budget).objective
        expected = _brute_force_objective(lengths, values, budget)
        assert got == pytest.approx(expected, abs=0.0, rel=0.0), \
            f"knapsack mismatch: {got} vs {expected} (n={n}, budget={budget})"
        checked += 1
    elapsed = time.monotonic() - start
    _report("knapsack oracle", checked == 500 and elapsed < 30.0,
            f"{checked} instances exact, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 3: metric oracles
# ---------------------------------------------------------------------------


def _tau_enumeration(x, y):
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx = np.sign(x[i] - x[j])
        dy = np.sign(y[i] - y[j])
        if dx == 0 and dy == 0:
            continue
        elif dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif dx == dy:
            c += 1
        else:
            d += 1
    denom = np.sqrt((c + d + tx) * (c + d + ty))
    return 0.0 if denom == 0 else (c - d) / denom


def test_criterion_metric_oracles():
    # hand-derived module examples, asserted exactly
    assert prf1(np.array([1, 0, 1]), np.array([1, 0, 1])) == (1.0, 1.0, 1.0)
    assert prf1(np.array([1, 0]), np.array([0, 1])) == (0.0, 0.0, 0.0)
    pred = np.zeros(40, dtype=int); pred[:20] = 1
    ref = np.zeros(40, dtype=int); ref[:10] = 1
    p, r, f1 = prf1(pred, ref)
    assert (p, r) == (0.5, 1.0) and f1 == pytest.approx(2 / 3, abs=1e-12)

    two = [np.array([1, 1, 0, 0]), np.array([1, 0, 1, 0])]
    pred2 = np.array([1, 1, 0, 0])
    assert multi_ref_f1(pred2, two, "avg") == pytest.approx(0.75)
    assert multi_ref_f1(pred2, two, "max") == 1.0

    assert kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]) == 1.0
    assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(4 / 6, abs=1e-12)
    assert spearman_rho([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)
    assert spearman_rho([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)

    # pair-enumeration oracle, 200 random short vectors, equality to 1e-9
    rng = np.random.default_rng(77)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        x = rng.integers(0, 5, size=n).astype(float)
        y = rng.integers(0, 5, size=n).astype(float)
        assert kendall_tau(x, y) == pytest.approx(_tau_enumeration(x, y), abs=1e-9)
    _report("metric oracles", True, "examples exact; 200 tau vectors at 1e-9")


# ---------------------------------------------------------------------------
# criterion 4: loss-value oracle
# ---------------------------------------------------------------------------


def test_criterion_loss_value_oracle():
    bce = classification_loss(Tensor(np.full(4, 0.5)), np.array([1, 0, 0, 0])).item()
    ok_bce = abs(bce - 0.625 * np.log(2.0)) <= 1e-6

    same = diversity_loss(Tensor(np.tile([1.0, 2.0], (3, 1)))).item()
    orth = diversity_loss(Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))).item()
    anti = diversity_loss(Tensor(np.array([[1.0, 0.0], [-1.0, 0.0]]))).item()
    ok_div = abs(same - 1.0) <= 1e-6 and abs(orth) <= 1e-6 and abs(anti + 1.0) <= 1e-6
    _report("loss-value oracle", ok_bce and ok_div,
            f"bce={bce:.8f} (0.625*ln2={0.625 * np.log(2):.8f}), "
            f"diversity=({same:.7f}, {orth:.7f}, {anti:.7f})")


# ---------------------------------------------------------------------------
# criterion 5: end-to-end learning on the separable synthetic corpus
# ---------------------------------------------------------------------------


E2E_SEED = 42


def _e2e_config(**kw):
    base = dict(embed_dim=32, m_fixed=7, lga_heads=4, tf_heads=4,
                tf_enc_layers=2, tf_dec_layers=2, window_len=50,
                epochs=20, batch_size=1, lr=3e-3, seed=0)
    base.update(kw)
    return Config(**base).validate()


def test_criterion_end_to_end_learning(tmp_path):
    start = time.monotonic()
    manifest_path = generate_synthetic_dataset(
        tmp_path, seed=E2E_SEED, n_videos=8, n_frames=200, dim=32,
        shot_len=10, m_captions=7)
    manifest = read_manifest(manifest_path)

    ckpt, _ = train(manifest, _e2e_config())
    held_out = evaluate_checkpoint(ckpt, manifest, split="test").mean_f1

    _, history = train(manifest, _e2e_config(mode="unsupervised", lr=1e-4))
    totals = [m.total for m in history]
    strictly_down = all(b < a for a, b in zip(totals, totals[1:]))

    elapsed = time.monotonic() - start
    _report("end-to-end learning",
            held_out >= 0.9 and strictly_down and elapsed < 300.0,
            f"held-out F1 {held_out:.3f}, unsup loss {totals[0]:.4f}->{totals[-1]:.4f} "
            f"strictly decreasing={strictly_down}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 6: query sensitivity on a two-topic video
# ---------------------------------------------------------------------------


def test_criterion_query_sensitivity(tmp_path):
    manifest_path = generate_two_topic_corpus(tmp_path, seed=E2E_SEED, n_videos=8,
                                              n_frames=200, dim=32, shot_len=10)
    paths = generate_two_topic_video(tmp_path, seed=E2E_SEED, n_frames=200, dim=32,
                                     shot_len=10)
    manifest = read_manifest(manifest_path)
    ckpt, _ = train(manifest, _e2e_config(epochs=40))

    frames = read_feature_file(tmp_path / paths["frames"])
    query_a = read_feature_file(tmp_path / paths["query_a"]).embeddings
    query_b = read_feature_file(tmp_path / paths["query_b"]).embeddings
    gt = read_ground_truth(tmp_path / paths["ground_truth"])

    def summarize(query):
        scores = score_video(frames.embeddings, query, "query", ckpt.params, ckpt.config)
        return build_summary(scores, gt.shot_boundaries, budget_fraction=0.15)

    summary_a, summary_b = summarize(query_a), summarize(query_b)
    set_a = {s.index for s in summary_a.selected}
    set_b = {s.index for s in summary_b.selected}
    iou = len(set_a & set_b) / max(1, len(set_a | set_b))

    def mean_cos(mask, q):
        rows = frames.embeddings[mask.astype(bool)]
        return float(np.mean(rows @ q / (np.linalg.norm(rows, axis=1) * np.linalg.norm(q))))

    a_own = mean_cos(summary_a.frame_mask, query_a[0])
    a_other = mean_cos(summary_a.frame_mask, query_b[0])
    b_own = mean_cos(summary_b.frame_mask, query_b[0])
    b_other = mean_cos(summary_b.frame_mask, query_a[0])

    _report("query sensitivity",
            iou < 0.5 and a_own > a_other and b_own > b_other,
            f"IoU {iou:.2f}; cosine own/other A {a_own:.2f}/{a_other:.2f}, "
            f"B {b_own:.2f}/{b_other:.2f}")


# ---------------------------------------------------------------------------
# criterion 7: bit-identical training determinism via the CLI
# ---------------------------------------------------------------------------


def test_criterion_training_determinism(tmp_path):
    runner = CliRunner()
    result = runner.invoke(cli_main, ["gen-synthetic", "--out", str(tmp_path / "data"),
                                      "--seed", "6", "--videos", "3", "--frames", "48",
                                      "--dim", "16", "--shot-len", "8", "--captions", "3"])
    assert result.exit_code == 0, result.output
    manifest = json.loads(result.output)["manifest"]
    digests = []
    for name in ("one.ckpt", "two.ckpt"):
        out = tmp_path / name
        result = runner.invoke(cli_main, [
            "train", "--manifest", manifest, "--out", str(out), "--seed", "13",
            "--embed-dim", "16", "--window-len", "16", "--epochs", "2",
            "--batch-size", "4", "--lr", "0.001"])
        assert result.exit_code == 0, result.output
        digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
    _report("training determinism", digests[0] == digests[1],
            f"sha256 {digests[0][:16]}... twice")


# ---------------------------------------------------------------------------
# criterion 8: padding independence and windowing round-trip
# ---------------------------------------------------------------------------


def test_criterion_padding_and_windowing():
    rng = np.random.default_rng(55)
    cfg_padded = small_cfg(window_len=256)
    params = init_transformer_params(cfg_padded, np.random.default_rng(56))
    frames = rng.normal(size=(44, 16)).astype(np.float32)

    from sumkit.transformer import score_frames
    padded = score_frames(Tensor(frames), params, cfg_padded).data
    exact = score_frames(Tensor(frames), params, small_cfg(window_len=44)).data
    pad_ok = np.allclose(padded, exact, atol=1e-5)

    trip_ok = True
    for n in (1, 44, 256, 300, 513):
        data = rng.normal(size=(n, 4)).astype(np.float32)
        wins = window_video(data, 256)
        rebuilt = np.concatenate([w.features[:w.valid_len] for w in wins], axis=0)
        trip_ok = trip_ok and np.array_equal(rebuilt, data)
        if n == 300:
            trip_ok = trip_ok and [w.valid_len for w in wins] == [256, 44]

    _report("padding independence + windowing round-trip", pad_ok and trip_ok,
            f"max |pad diff| {np.abs(padded - exact).max():.2e}; round-trips exact")

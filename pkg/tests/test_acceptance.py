"""Acceptance gate: one test per release criterion.

Each test prints a single PASS/FAIL line with the measured values so a
full run reads as a checklist.  Tolerances are asserted exactly as
stated; nothing here is tuned to make a failing criterion pass.
"""

import itertools
import sys
import time

import numpy as np
from sklearn.metrics import adjusted_rand_score

from conftest import random_affinity
from phantoms import write_phantom_dataset
from specseg.affinity import (
    combine,
    extract_patch_grid,
    feature_affinity,
    gaussian_kernel,
    patchwise_distance,
)
from specseg.baselines import FzParams, SlicParams, felzenszwalb, slic
from specseg.config import PipelineConfig
from specseg.metrics import (
    MatchResult,
    boundary_recall,
    dice,
    hungarian_match,
    label_consistency,
    majority_match,
    undersegmentation_error,
)
from specseg.pipeline import run_pipeline
from specseg.spectral import SpectralOversegmenter, eigendecompose, normalized_laplacian


def _verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{name}] {detail}"
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _planted_affinity(sizes, seed=0):
    # weight exactly 1 inside each block, at most 0.05 across blocks
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    w = rng.uniform(0.0, 0.05, size=(n, n))
    w = (w + w.T) / 2.0
    start = 0
    for s in sizes:
        w[start : start + s, start : start + s] = 1.0
        start += s
    return w


def test_criterion_1_spectral_recovers_planted_partition():
    cases = [
        (220, 180),
        (20, 15, 10),
        (30, 25, 20, 15),
        (12, 11, 10, 9, 8),
    ]
    aris = []
    t0 = time.perf_counter()
    for i, sizes in enumerate(cases):
        truth = np.repeat(np.arange(len(sizes)), sizes)
        w = _planted_affinity(sizes, seed=i)
        labels = SpectralOversegmenter(
            n_segments=len(sizes), random_state=0
        ).fit_predict(w)
        aris.append(adjusted_rand_score(truth, labels))
    elapsed = time.perf_counter() - t0
    ok = all(a == 1.0 for a in aris) and elapsed < 5.0
    _verdict(
        "spectral planted partition",
        ok,
        f"blocks=2..5, n up to 400, ari={['%.2f' % a for a in aris]} "
        f"elapsed={elapsed:.2f}s (<5)",
    )


def test_criterion_2_laplacian_and_solver_tolerances():
    rng = np.random.default_rng(11)
    worst_lap = worst_min = worst_res = 0.0
    for _ in range(100):
        n = int(rng.integers(8, 201))
        w = random_affinity(rng, n)
        lap = normalized_laplacian(w)

        deg = w.sum(axis=1)
        oracle = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                lij = (deg[i] if i == j else 0.0) - w[i, j]
                oracle[i, j] = lij / np.sqrt(deg[i] * deg[j])
        worst_lap = max(worst_lap, float(np.abs(lap - oracle).max()))

        dec = eigendecompose(lap, min(8, n - 1))
        worst_min = max(worst_min, abs(float(dec.eigenvalues[0])))
        res = lap @ dec.eigenvectors - dec.eigenvectors * dec.eigenvalues
        worst_res = max(worst_res, float(np.abs(res).max()))
    ok = worst_lap <= 1e-10 and worst_min <= 1e-8 and worst_res <= 1e-6
    _verdict(
        "laplacian and eigensolver",
        ok,
        f"laplacian={worst_lap:.2e} (<=1e-10) lambda_min={worst_min:.2e} "
        f"(<=1e-8) residual={worst_res:.2e} (<=1e-6)",
    )


def test_criterion_3_affinity_terms_match_brute_force():
    rng = np.random.default_rng(5)
    img = rng.random((40, 48))
    grid = extract_patch_grid(img, 8)
    p = grid.patches
    n, k = p.shape[0], 8

    feats = rng.standard_normal((n, 6))
    w_feat = feature_affinity(feats)
    worst_feat = 0.0
    for i in range(n):
        for j in range(n):
            cos = feats[i] @ feats[j] / (
                np.linalg.norm(feats[i]) * np.linalg.norm(feats[j])
            )
            expect = 1.0 if i == j else min(max(cos, 0.0), 1.0)
            worst_feat = max(worst_feat, abs(w_feat[i, j] - expect))

    d_ssd = patchwise_distance(p, metric="ssd")
    worst_ssd = 0.0
    for i in range(n):
        for j in range(n):
            total = 0.0
            for a in range(k):
                for b in range(k):
                    diff = p[i, a, b] - p[j, a, b]
                    total += diff * diff
            worst_ssd = max(worst_ssd, abs(d_ssd[i, j] - total / (k * k)))
    diag_ssd = float(np.abs(np.diag(d_ssd)).max())

    bins = 16
    d_mi = patchwise_distance(p, metric="mi", mi_bins=bins)
    q = np.minimum((p * bins).astype(int), bins - 1)

    def entropy(codes):
        _, counts = np.unique(codes, return_counts=True)
        pr = counts / counts.sum()
        return float(-(pr * np.log2(pr)).sum())

    worst_mi = 0.0
    for i in range(0, n, 7):
        for j in range(0, n, 5):
            h1, h2 = entropy(q[i]), entropy(q[j])
            h12 = entropy(q[i].astype(np.int64) * bins + q[j])
            if h12 == 0.0:
                mi = 2.0 if np.array_equal(q[i], q[j]) else 1.0
            else:
                mi = (h1 + h2) / h12
            worst_mi = max(worst_mi, abs(d_mi[i, j] - (1.0 - mi)))
    diag_mi_ok = bool(np.all(d_mi.diagonal() == -1.0))

    w_ssd = gaussian_kernel(d_ssd, 5.0)
    w_mi = gaussian_kernel(d_mi, 5.0)
    w_pos = rng.random((n, n))
    w_pos = (w_pos + w_pos.T) / 2.0
    np.fill_diagonal(w_pos, 1.0)
    w_all = combine(
        w_feat=w_feat, w_ssd=w_ssd, w_mi=w_mi, w_pos=w_pos,
        c_ssd=1.0, c_mi=1.0, c_pos=0.1,
    )
    worst_comb = 0.0
    for i in range(n):
        for j in range(n):
            expect = w_feat[i, j] + 1.0 * w_ssd[i, j] + 1.0 * w_mi[i, j]
            expect = max(expect + 0.1 * w_pos[i, j], 0.0)
            worst_comb = max(worst_comb, abs(w_all[i, j] - expect))

    ok = (
        worst_feat <= 1e-6
        and worst_ssd <= 1e-6
        and diag_ssd == 0.0
        and worst_mi <= 1e-6
        and diag_mi_ok
        and worst_comb <= 1e-6
    )
    _verdict(
        "affinity terms vs brute force",
        ok,
        f"cosine={worst_feat:.2e} ssd={worst_ssd:.2e} ssd_diag={diag_ssd:.1e} "
        f"mi={worst_mi:.2e} mi_self=-1:{diag_mi_ok} combine={worst_comb:.2e} "
        f"(all <=1e-6)",
    )


def test_criterion_4_metric_worked_examples():
    checks = {}

    sq = np.zeros((6, 6), dtype=bool)
    sq[2:4, 2:4] = True
    shifted = np.zeros((6, 6), dtype=bool)
    shifted[2:4, 3:5] = True
    corner = np.zeros((6, 6), dtype=bool)
    corner[0, 0] = True
    checks["dice"] = (
        dice(sq, sq) == 1.0 and dice(sq, corner) == 0.0 and dice(sq, shifted) == 0.5
    )

    rng = np.random.default_rng(3)
    gt3 = rng.integers(0, 3, size=(12, 12))
    perm = np.array([2, 0, 1])
    m_perm = hungarian_match(perm[gt3], gt3)
    perm_ok = m_perm.objective == 3.0 and all(
        m_perm.mapping[int(perm[g])] == g for g in range(3)
    )

    def best_total(pred, gt):
        p_labels = list(np.unique(pred))
        g_labels = list(np.unique(gt))
        m = min(len(p_labels), len(g_labels))
        best = -1.0
        for ps in itertools.permutations(p_labels, m):
            for gs in itertools.combinations(g_labels, m):
                best = max(
                    best,
                    sum(dice(pred == a, gt == b) for a, b in zip(ps, gs)),
                )
        return best

    worst_gap = 0.0
    for seed in range(20):
        r = np.random.default_rng(seed)
        pred = r.integers(0, int(r.integers(2, 6)), size=(9, 9))
        gt = r.integers(0, int(r.integers(2, 6)), size=(9, 9))
        worst_gap = max(
            worst_gap, abs(hungarian_match(pred, gt).objective - best_total(pred, gt))
        )

    halves = np.zeros((4, 8), dtype=int)
    halves[:, 4:] = 1
    quads = np.repeat(np.arange(4), 8).reshape(4, 8)
    m_surplus = hungarian_match(quads, halves)
    surplus_ok = len(m_surplus.mapping) == 2 and len(m_surplus.unmatched) == 2
    checks["hungarian"] = perm_ok and worst_gap <= 1e-12 and surplus_ok

    g = np.zeros((6, 6), dtype=int)
    g[:, 3:] = 1
    p = g.copy()
    p[1:3, 4:6] = 2
    maj_nested = majority_match(p, g).mapping[2] == 1
    g6040 = np.zeros(100, dtype=int)
    g6040[60:] = 1
    flat = np.zeros((10, 10), dtype=int)
    maj_6040 = majority_match(flat, g6040.reshape(10, 10)).mapping[0] == 0
    g_tie = np.full((10, 10), 2, dtype=int)
    g_tie[:, :5] = 1
    maj_tie = majority_match(flat, g_tie).mapping[0] == 1
    checks["majority"] = maj_nested and maj_6040 and maj_tie

    def mr(mapping):
        return MatchResult(mapping=mapping, objective=0.0, method="majority")

    lc_same, _ = label_consistency([mr({0: 0, 1: 1})] * 4, [{0, 1}] * 4)
    lc_agree, per_agree = label_consistency(
        [mr({0: 0, 1: 1})] * 3 + [mr({0: 1, 1: 0})], [{0, 1}] * 4
    )
    lc_single, _ = label_consistency([mr({0: 0})], [{0}])
    checks["label_consistency"] = (
        lc_same == 100.0
        and lc_agree == 75.0
        and per_agree == {0: 75.0, 1: 75.0}
        and lc_single == 100.0
    )

    g_half = np.zeros((8, 8), dtype=int)
    g_half[:, 4:] = 1
    nested_sp = np.arange(64).reshape(8, 8) // 4
    worst_ue = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        sp = r.integers(0, 6, size=(12, 9))
        gt = r.integers(0, 3, size=(12, 9))
        total = 0
        for s in np.unique(sp):
            overlaps = [int(np.sum((sp == s) & (gt == c))) for c in np.unique(gt)]
            total += int(np.sum(sp == s)) - max(overlaps)
        worst_ue = max(
            worst_ue, abs(undersegmentation_error(sp, gt) - total / sp.size)
        )
    checks["undersegmentation"] = (
        undersegmentation_error(nested_sp, g_half) == 0.0
        and undersegmentation_error(np.zeros((8, 8), dtype=int), g_half) == 0.5
        and worst_ue == 0.0
    )

    def vsplit(col):
        m = np.zeros((16, 24), dtype=int)
        m[:, col:] = 1
        return m

    checks["boundary_recall"] = (
        boundary_recall(vsplit(10), vsplit(10), d=3) == 1.0
        and boundary_recall(np.zeros((16, 24), dtype=int), vsplit(10), d=3) == 0.0
        and boundary_recall(vsplit(12), vsplit(10), d=3) == 1.0
        and boundary_recall(vsplit(15), vsplit(10), d=3) == 0.0
    )

    ok = all(checks.values())
    detail = " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
    _verdict("metric worked examples", ok, detail)


def _acceptance_config():
    cfg = PipelineConfig()
    cfg.preprocess.gaussian_sigma = 0.8
    cfg.affinity.c_ssd = 1.0
    cfg.affinity.c_mi = 1.0
    cfg.affinity.c_pos = 0.1
    cfg.semantic.n_classes = 2
    cfg.semantic.crop_features = "histogram"
    cfg.crf.n_iters = 5
    cfg.crf.spatial_sigma = 2.0
    cfg.crf.bilateral_sigma_xy = 4.0
    cfg.crf.bilateral_sigma_int = 0.1
    return cfg


def test_criterion_5_end_to_end_phantom_quality(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_ds")
    manifest = write_phantom_dataset(root, 20, shape=(96, 96))
    out = tmp_path_factory.mktemp("acceptance_run")
    t0 = time.perf_counter()
    result = run_pipeline(manifest, _acceptance_config(), out)
    elapsed = time.perf_counter() - t0
    assert result.ok, result.errors
    step2 = result.report["step2"]
    ellipse_dice = step2["per_class_dice"][1]
    lc = step2["label_consistency"]
    ok = ellipse_dice >= 0.80 and lc >= 90.0 and elapsed < 120.0
    _verdict(
        "end-to-end phantom segmentation",
        ok,
        f"ellipse_dice={ellipse_dice:.4f} (>=0.80) "
        f"mean_dice={step2['mean_dice']:.4f} label_consistency={lc:.1f} "
        f"(>=90) elapsed={elapsed:.1f}s (<120)",
    )


def test_criterion_6_affinity_scale_invariance():
    w = _planted_affinity([18, 12, 9], seed=3)
    base = SpectralOversegmenter(n_segments=3, random_state=0).fit_predict(w)
    ok = True
    for c in (2.0, 3.7, 0.3):
        scaled = SpectralOversegmenter(n_segments=3, random_state=0).fit_predict(c * w)
        ok = ok and bool(np.array_equal(base, scaled))
    _verdict(
        "segmentation scale invariance",
        ok,
        f"labels identical for W, 2W, 3.7W, 0.3W: {ok}",
    )


def test_criterion_7_reproducible_artifacts(tmp_path_factory):
    root = tmp_path_factory.mktemp("repro_ds")
    manifest = write_phantom_dataset(root, 3, shape=(64, 64))
    cfg = _acceptance_config()
    cfg.spectral.n_eigensegments = 10
    cfg.crf.n_iters = 2
    dirs = [tmp_path_factory.mktemp("repro_a"), tmp_path_factory.mktemp("repro_b")]
    trees = []
    for d in dirs:
        assert run_pipeline(manifest, cfg, d).ok
        trees.append({
            str(p.relative_to(d)): p.read_bytes()
            for p in sorted(d.rglob("*")) if p.is_file()
        })
    same_names = set(trees[0]) == set(trees[1])
    diff = [rel for rel in trees[0] if trees[0][rel] != trees[1].get(rel)]
    ok = same_names and not diff
    _verdict(
        "byte-identical reruns",
        ok,
        f"artifacts={len(trees[0])} differing={len(diff)}",
    )


def test_criterion_8_baseline_constructions():
    img_const = np.full((16, 16), 0.4)
    n_const = np.unique(
        felzenszwalb(img_const, FzParams(scale=1.0, sigma=0.0, min_size=1))
    ).size

    img_two = np.full((16, 16), 0.2)
    img_two[:, 8:] = 0.9
    fz_two = felzenszwalb(img_two, FzParams(scale=0.01, sigma=0.0, min_size=5))
    two_ok = (
        np.unique(fz_two).size == 2
        and np.unique(fz_two[:, :8]).size == 1
        and np.unique(fz_two[:, 8:]).size == 1
    )

    rng = np.random.default_rng(2)
    img = rng.random((50, 70))
    count_ok = True
    counts = {}
    for n in (20, 60):
        got = np.unique(slic(img, SlicParams(n_superpixels=n))).size
        counts[n] = got
        count_ok = count_ok and abs(got - n) <= 0.3 * n

    tone = np.full((40, 40), 0.1)
    tone[:, 20:] = 0.9
    labels = slic(tone, SlicParams(n_superpixels=16, compactness=0.5))
    straddles = 0
    for label in np.unique(labels):
        xs = np.nonzero(labels == label)[1]
        if xs.min() < 20 <= xs.max():
            straddles += 1

    ok = n_const == 1 and two_ok and count_ok and straddles == 0
    _verdict(
        "baseline segmenters",
        ok,
        f"fz_constant={n_const}(=1) fz_two_tone_ok={two_ok} "
        f"slic_counts={counts}(+/-30%) straddles={straddles}(=0)",
    )

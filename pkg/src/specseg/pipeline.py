"""End-to-end orchestration: stages, artifacts, caching, evaluation.

A run directory is laid out as::

    config.toml                  resolved settings, written up front
    preproc/<id>.dst             preprocessed image, float32
    masks_step1/<id>_grid.png    patch-grid segment labels
    masks_step1/<id>.png         the same labels at image resolution
    eigensegments/<id>.dst       non-trivial eigenvector stack
    eigensegments/<id>_eNN.png   binary support of each eigenvector
    masks_step2/<id>.png         dataset-level semantic classes
    postproc/step1/<id>.png      CRF-refined step-I mask
    postproc/step2/<id>.png      CRF-refined semantic mask
    reports/report.json|.txt     evaluation summary
    cache/*.key                  content hashes enabling stage resume

Stage outputs carry no timestamps and all computation is seeded, so
re-running a configuration reproduces every artifact byte for byte.
A stage is skipped when its cache key (hash of inputs plus the stage's
config subset) matches the previous run.
"""

import hashlib
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .affinity import AffinityBuilder
from .baselines import felzenszwalb, slic
from .config import PipelineConfig, dump_config
from .errors import ConfigError, DataError, DescriptorError, SpecsegError
from .io import (
    load_image,
    load_manifest,
    load_mask,
    read_tensor,
    save_mask,
    write_tensor,
)
from .postprocess import crf_refine, upscale_mask
from .preprocess import preprocess_image
from .semantic import build_descriptor, cluster_dataset, extract_segments, render_semantic_mask
from .spectral import SpectralOversegmenter, eigensegment_masks

log = logging.getLogger("specseg")

STAGES = ("preprocess", "segment", "cluster", "postprocess", "evaluate")


@dataclass
class RunResult:
    """What a pipeline invocation produced."""

    run_dir: Path
    stages: tuple
    report: dict | None = None
    errors: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def _dirs(run_dir):
    run_dir = Path(run_dir)
    d = {
        "run": run_dir,
        "preproc": run_dir / "preproc",
        "masks1": run_dir / "masks_step1",
        "eigen": run_dir / "eigensegments",
        "masks2": run_dir / "masks_step2",
        "post1": run_dir / "postproc" / "step1",
        "post2": run_dir / "postproc" / "step2",
        "reports": run_dir / "reports",
        "cache": run_dir / "cache",
        "crops": run_dir / "crop_features",
    }
    for p in d.values():
        p.mkdir(parents=True, exist_ok=True)
    return d


def _hash_parts(*parts):
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(str(part).encode())
        h.update(b"\x00")
    return h.hexdigest()


def _cache_fresh(cache_dir, name, key, outputs):
    key_file = cache_dir / f"{name}.key"
    if key_file.exists() and key_file.read_text() == key:
        if all(Path(p).exists() for p in outputs):
            return True
    return False


def _cache_store(cache_dir, name, key):
    (cache_dir / f"{name}.key").write_text(key)


def _read_input(path, hint):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {hint} {path}: {exc}") from exc


def _grid_geometry(shape, k):
    h, w = shape
    n_h, n_w = h // k, w // k
    off = ((h - n_h * k) // 2, (w - n_w * k) // 2)
    return (n_h, n_w), off


def _preprocess_one(entry, cfg, d):
    out = d["preproc"] / f"{entry.image_id}.dst"
    src = _read_input(entry.image_path, "image")
    key = _hash_parts("preprocess", repr(cfg.preprocess), src)
    if _cache_fresh(d["cache"], f"preprocess_{entry.image_id}", key, [out]):
        log.debug("preprocess: %s cached", entry.image_id)
        return out
    img = load_image(entry.image_path)
    processed = preprocess_image(img, cfg.preprocess)
    write_tensor(processed.astype(np.float32), out)
    _cache_store(d["cache"], f"preprocess_{entry.image_id}", key)
    log.info("preprocess: %s done", entry.image_id)
    return out


def _segment_one(entry, cfg, d):
    pre_path = d["preproc"] / f"{entry.image_id}.dst"
    outputs = [
        d["masks1"] / f"{entry.image_id}_grid.png",
        d["masks1"] / f"{entry.image_id}.png",
        d["eigen"] / f"{entry.image_id}.dst",
    ]
    hash_inputs = [_read_input(pre_path, "preprocessed image")]
    if entry.feature_path is not None:
        hash_inputs.append(_read_input(entry.feature_path, "dense features"))
    key = _hash_parts(
        "segment", repr(cfg.affinity), repr(cfg.spectral), *hash_inputs
    )
    if _cache_fresh(d["cache"], f"segment_{entry.image_id}", key, outputs):
        log.debug("segment: %s cached", entry.image_id)
        return
    img = read_tensor(pre_path).astype(np.float64)
    features = None
    if entry.feature_path is not None:
        features = read_tensor(entry.feature_path).astype(np.float64)
        if features.ndim != 2:
            raise ConfigError(
                f"{entry.feature_path}: dense features must be 2-D"
            )
    builder = AffinityBuilder(
        patch_size=cfg.affinity.patch_size,
        c_ssd=cfg.affinity.c_ssd,
        c_mi=cfg.affinity.c_mi,
        c_pos=cfg.affinity.c_pos,
        delta=cfg.affinity.delta,
        knn=cfg.affinity.knn,
        mi_bins=cfg.affinity.mi_bins,
    )
    w, grid = builder.build(img, features=features)
    seg = SpectralOversegmenter(
        n_segments=cfg.spectral.n_eigensegments,
        solver=cfg.spectral.solver,
        random_state=cfg.spectral.seed,
    ).fit(w)
    grid_labels = seg.labels_.reshape(grid.shape)
    full = upscale_mask(
        grid_labels, img.shape, patch_size=grid.patch_size, offset=grid.offset
    )
    save_mask(grid_labels, outputs[0])
    save_mask(full, outputs[1])
    stack = eigensegment_masks(seg.decomposition_, grid.shape)
    write_tensor(
        seg.decomposition_.eigenvectors[:, 1:].T.reshape(-1, *grid.shape), outputs[2]
    )
    for i, m in enumerate(stack):
        save_mask(
            m.astype(np.int64), d["eigen"] / f"{entry.image_id}_e{i + 1:02d}.png",
            legend={0: "e <= 0", 1: "e > 0"},
        )
    _cache_store(d["cache"], f"segment_{entry.image_id}", key)
    log.info("segment: %s done (%d segments)", entry.image_id, grid_labels.max() + 1)


def _load_crop_features(entry, d, n_segments):
    path = d["crops"] / f"{entry.image_id}.dst"
    if not path.exists():
        raise DescriptorError(
            f"crop features for {entry.image_id} not found at {path}; "
            f"run the sidecar first: extract crops --manifest <manifest> "
            f"--out {d['crops']}"
        )
    feats = read_tensor(path).astype(np.float64)
    if feats.ndim != 2 or feats.shape[0] != n_segments:
        raise DescriptorError(
            f"{path}: expected ({n_segments}, dim) crop embeddings, "
            f"got shape {feats.shape}"
        )
    return feats


def _stage_cluster(entries, cfg, d):
    mask_paths = [d["masks1"] / f"{e.image_id}.png" for e in entries]
    pre_paths = [d["preproc"] / f"{e.image_id}.dst" for e in entries]
    hash_inputs = []
    for mp, pp in zip(mask_paths, pre_paths):
        hash_inputs.append(_read_input(mp, "step-I mask"))
        hash_inputs.append(_read_input(pp, "preprocessed image"))
    if cfg.semantic.crop_features == "sidecar":
        for e in entries:
            p = d["crops"] / f"{e.image_id}.dst"
            if p.exists():
                hash_inputs.append(p.read_bytes())
    key = _hash_parts("cluster", repr(cfg.semantic), cfg.spectral.seed, *hash_inputs)
    outputs = [d["masks2"] / f"{e.image_id}.png" for e in entries]
    if _cache_fresh(d["cache"], "cluster", key, outputs):
        log.debug("cluster: cached")
        return
    records = []
    descriptors = []
    spans = []
    for entry, mp, pp in zip(entries, mask_paths, pre_paths):
        img = read_tensor(pp).astype(np.float64)
        mask = load_mask(mp)
        recs = extract_segments(
            mask, image=img, image_id=entry.image_id,
            split_components=cfg.semantic.split_components,
        )
        crop_feats = None
        if cfg.semantic.crop_features == "sidecar":
            crop_feats = _load_crop_features(entry, d, len(recs))
        for i, rec in enumerate(recs):
            desc = build_descriptor(
                rec,
                img,
                crop_features=None if crop_feats is None else crop_feats[i],
                lambda_mask=cfg.semantic.lambda_mask,
                lambda_pos=cfg.semantic.lambda_pos,
            )
            descriptors.append(desc)
        spans.append((len(records), len(records) + len(recs), img.shape))
        records.extend(recs)
    classes = cluster_dataset(descriptors, cfg.semantic.n_classes, seed=cfg.spectral.seed)
    for entry, (lo, hi, shape), out in zip(entries, spans, outputs):
        semantic_mask = render_semantic_mask(records[lo:hi], classes[lo:hi], shape)
        save_mask(semantic_mask, out, legend={
            int(c): f"class {int(c)}" for c in np.unique(semantic_mask)
        })
    _cache_store(d["cache"], "cluster", key)
    log.info("cluster: %d segments over %d images -> %d classes",
             len(records), len(entries), cfg.semantic.n_classes)


def _postprocess_one(entry, cfg, d):
    pre_path = d["preproc"] / f"{entry.image_id}.dst"
    jobs = [
        (d["masks1"] / f"{entry.image_id}.png", d["post1"] / f"{entry.image_id}.png"),
        (d["masks2"] / f"{entry.image_id}.png", d["post2"] / f"{entry.image_id}.png"),
    ]
    img = None
    for src, dst in jobs:
        if not src.exists():
            continue
        key = _hash_parts("postprocess", repr(cfg.crf), src.read_bytes(),
                          _read_input(pre_path, "preprocessed image"))
        name = f"postprocess_{dst.parent.name}_{entry.image_id}"
        if _cache_fresh(d["cache"], name, key, [dst]):
            continue
        if img is None:
            img = read_tensor(pre_path).astype(np.float64)
        refined = crf_refine(load_mask(src), img, cfg.crf)
        save_mask(refined, dst)
        _cache_store(d["cache"], name, key)
    log.info("postprocess: %s done", entry.image_id)


def _per_image_stage(fn, entries, cfg, d, jobs):
    errors = []
    if jobs <= 1:
        for entry in entries:
            try:
                fn(entry, cfg, d)
            except SpecsegError as exc:
                errors.append((entry.image_id, str(exc)))
        return errors
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = {
            pool.submit(fn, entry, cfg, d): entry for entry in entries
        }
        for fut, entry in futures.items():
            try:
                fut.result()
            except SpecsegError as exc:
                errors.append((entry.image_id, str(exc)))
    return errors


def run_pipeline(manifest, cfg=None, out_dir="run", stages=STAGES, jobs=1):
    """Execute the requested stages over a manifest.

    ``manifest`` may be a path or a loaded :class:`DatasetManifest`.
    Per-image failures are collected in the returned
    :class:`RunResult` rather than aborting the whole run.
    """
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    cfg = (cfg or PipelineConfig()).validate()
    for stage in stages:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; valid: {', '.join(STAGES)}")
    d = _dirs(out_dir)
    dump_config(cfg, d["run"] / "config.toml")

    errors = []
    entries = list(manifest)

    def surviving():
        failed = {img_id for img_id, _ in errors}
        return [e for e in entries if e.image_id not in failed]

    if "preprocess" in stages:
        errors += _per_image_stage(_preprocess_one, surviving(), cfg, d, jobs)
    if "segment" in stages:
        errors += _per_image_stage(_segment_one, surviving(), cfg, d, jobs)
    if "cluster" in stages:
        try:
            _stage_cluster(surviving(), cfg, d)
        except SpecsegError as exc:
            errors.append(("<dataset>", str(exc)))
    if "postprocess" in stages:
        errors += _per_image_stage(_postprocess_one, surviving(), cfg, d, jobs)

    report = None
    if "evaluate" in stages:
        if manifest.has_ground_truth:
            try:
                report = evaluate_run(d["run"], manifest, cfg)
            except SpecsegError as exc:
                errors.append(("<evaluate>", str(exc)))
        else:
            log.warning("manifest has no ground truth; skipping evaluation")
    for img_id, msg in errors:
        log.error("%s: %s", img_id, msg)
    return RunResult(run_dir=d["run"], stages=tuple(stages), report=report, errors=errors)


def _best_segment_dice(step1_mask, gt_mask):
    """Mean over gt classes of the best single-segment DICE."""
    scores = {}
    for cls in np.unique(gt_mask):
        gt_bin = gt_mask == cls
        best = 0.0
        for seg in np.unique(step1_mask):
            best = max(best, metrics.dice(step1_mask == seg, gt_bin))
        scores[int(cls)] = best
    return scores


def _resolve_mask(run_dir, sub_post, sub_raw, image_id):
    post = run_dir / "postproc" / sub_post / f"{image_id}.png"
    raw = run_dir / sub_raw / f"{image_id}.png"
    if post.exists():
        return post
    return raw if raw.exists() else None


def evaluate_run(run_dir, manifest, cfg=None):
    """Score a finished run against manifest ground truth.

    CRF-refined masks are preferred when present.  Returns the report
    dict and writes ``reports/report.json`` and ``reports/report.txt``.
    """
    run_dir = Path(run_dir)
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    cfg = (cfg or PipelineConfig()).validate()
    if not manifest.has_ground_truth:
        raise ConfigError("manifest provides no ground-truth masks to evaluate against")
    match_fn = (
        metrics.hungarian_match
        if cfg.evaluate.matching == "hungarian"
        else metrics.majority_match
    )
    d_boundary = cfg.evaluate.boundary_d

    step1_rows = {}
    step2_rows = {}
    matches = []
    presence = []
    evaluated = []
    for entry in manifest:
        if entry.gt_mask_path is None:
            continue
        gt = load_mask(entry.gt_mask_path)
        p1 = _resolve_mask(run_dir, "step1", "masks_step1", entry.image_id)
        p2 = _resolve_mask(run_dir, "step2", "masks_step2", entry.image_id)
        if p1 is None and p2 is None:
            raise ConfigError(
                f"run {run_dir} holds no masks for {entry.image_id}; "
                f"run the segment/cluster stages first"
            )
        evaluated.append(entry.image_id)
        if p1 is not None:
            m1 = load_mask(p1)
            if m1.shape != gt.shape:
                m1 = upscale_mask(m1, gt.shape)
            per_class = _best_segment_dice(m1, gt)
            step1_rows[entry.image_id] = {
                "best_dice_per_class": per_class,
                "mean_best_dice": float(np.mean(list(per_class.values()))),
                "undersegmentation_error": metrics.undersegmentation_error(m1, gt),
                "boundary_recall": metrics.boundary_recall(m1, gt, d=d_boundary),
                "n_segments": int(np.unique(m1).size),
            }
        if p2 is not None:
            m2 = load_mask(p2)
            if m2.shape != gt.shape:
                m2 = upscale_mask(m2, gt.shape)
            match = match_fn(m2, gt)
            matches.append(match)
            presence.append({int(c) for c in np.unique(gt)})
            class_dice = {}
            mapped = metrics.apply_mapping(m2, match, fill=-1)
            for cls in np.unique(gt):
                class_dice[int(cls)] = metrics.dice(mapped == cls, gt == cls)
            step2_rows[entry.image_id] = {
                "dice_per_class": class_dice,
                "mean_dice": float(np.mean(list(class_dice.values()))),
                "mapping": {str(k): int(v) for k, v in match.mapping.items()},
                "undersegmentation_error": metrics.undersegmentation_error(m2, gt),
                "boundary_recall": metrics.boundary_recall(m2, gt, d=d_boundary),
            }

    report = {"n_images": len(evaluated), "matching": cfg.evaluate.matching}
    if step1_rows:
        vals = [r["mean_best_dice"] for r in step1_rows.values()]
        report["step1"] = {
            "mean_best_dice": float(np.mean(vals)),
            "std_best_dice": float(np.std(vals)),
            "undersegmentation_error": float(
                np.mean([r["undersegmentation_error"] for r in step1_rows.values()])
            ),
            "boundary_recall": float(
                np.mean([r["boundary_recall"] for r in step1_rows.values()])
            ),
            "per_image": step1_rows,
        }
    if step2_rows:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            overall_lc, per_class_lc = metrics.label_consistency(matches, presence)
        all_classes = sorted({c for row in step2_rows.values()
                              for c in row["dice_per_class"]})
        per_class_dice = {
            cls: float(np.mean([
                row["dice_per_class"][cls]
                for row in step2_rows.values() if cls in row["dice_per_class"]
            ]))
            for cls in all_classes
        }
        vals = [r["mean_dice"] for r in step2_rows.values()]
        report["step2"] = {
            "mean_dice": float(np.mean(vals)),
            "std_dice": float(np.std(vals)),
            "label_consistency": overall_lc,
            "per_class_consistency": {int(k): v for k, v in per_class_lc.items()},
            "per_class_dice": per_class_dice,
            "undersegmentation_error": float(
                np.mean([r["undersegmentation_error"] for r in step2_rows.values()])
            ),
            "boundary_recall": float(
                np.mean([r["boundary_recall"] for r in step2_rows.values()])
            ),
            "per_image": step2_rows,
        }

    reports_dir = run_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    (reports_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    (reports_dir / "report.txt").write_text(_format_report(report))
    return report


def _format_report(report):
    lines = []
    lines.append(f"images evaluated : {report['n_images']}")
    lines.append(f"matching         : {report['matching']}")
    for step in ("step1", "step2"):
        if step not in report:
            continue
        r = report[step]
        lines.append("")
        lines.append(f"[{step}]")
        for key in sorted(r):
            if key == "per_image":
                continue
            value = r[key]
            if isinstance(value, dict):
                body = ", ".join(f"{k}: {v:.4f}" for k, v in sorted(value.items()))
                lines.append(f"  {key:<28s} {{{body}}}")
            else:
                lines.append(f"  {key:<28s} {value:.4f}")
    lines.append("")
    return "\n".join(lines) + "\n"


def run_baseline(manifest, cfg=None, out_dir="run", method=None):
    """Segment every manifest image with a classical baseline.

    Masks land in ``masks_step1`` of the run directory, so evaluation
    and the semantic stage can consume them exactly like spectral
    output.
    """
    if isinstance(manifest, (str, Path)):
        manifest = load_manifest(manifest)
    cfg = (cfg or PipelineConfig()).validate()
    method = method or cfg.baseline.method
    if method not in ("slic", "fz"):
        raise ConfigError(f"baseline method must be slic or fz, got {method!r}")
    d = _dirs(out_dir)
    dump_config(cfg, d["run"] / "config.toml")
    errors = []
    for entry in manifest:
        try:
            pre = _preprocess_one(entry, cfg, d)
            img = read_tensor(pre).astype(np.float64)
            if method == "slic":
                labels = slic(img, cfg.baseline.slic)
            else:
                labels = felzenszwalb(img, cfg.baseline.fz)
            save_mask(labels, d["masks1"] / f"{entry.image_id}.png")
            log.info("baseline %s: %s -> %d labels",
                     method, entry.image_id, int(labels.max()) + 1)
        except SpecsegError as exc:
            errors.append((entry.image_id, str(exc)))
    return RunResult(run_dir=d["run"], stages=("baseline",), errors=errors)

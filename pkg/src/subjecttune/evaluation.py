"""Evaluation metrics and the benchmark runner.

Identity similarity (two feature spaces plus CLIP image features), prompt
adherence, naturalness (Frechet distance, kernel MMD, CLIP-feature MMD),
masked perceptual background preservation, and pixel-MSE diversity. All
backends are injectable so the whole module runs on stubs offline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Protocol, Sequence

import numpy as np
import torch
from scipy import linalg

from .errors import ConfigurationError, SubjectNotFoundError
from .extractors import (
    ExtractorHandle,
    TextExtractorHandle,
    embed,
    get_extractor,
    hashed_text_stub,
    preprocess,
    projection_stub,
)
from .imaging import load_png, load_mask_png, to_tensor_image
from .masks import ObjectDetector, detect_subject
from .subject import ReferenceSubject

# -- distribution metrics -----------------------------------------------------


class FrechetResult(NamedTuple):
    value: float
    regularized: bool


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray, eps: float = 1e-6) -> FrechetResult:
    """Frechet distance between Gaussians fitted to two feature sets.

    Singular covariance products are regularized with ``eps * I`` and
    flagged. Needs at least two samples per set.
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    if feats_a.shape[0] < 2 or feats_b.shape[0] < 2:
        raise ConfigurationError("frechet_distance needs >= 2 samples per set")
    mu_a, mu_b = feats_a.mean(axis=0), feats_b.mean(axis=0)
    cov_a = np.cov(feats_a, rowvar=False)
    cov_b = np.cov(feats_b, rowvar=False)
    cov_a = np.atleast_2d(cov_a)
    cov_b = np.atleast_2d(cov_b)

    regularized = False
    covmean, _ = linalg.sqrtm(cov_a @ cov_b, disp=False)
    if not np.isfinite(covmean).all():
        regularized = True
        offset = np.eye(cov_a.shape[0]) * eps
        covmean, _ = linalg.sqrtm((cov_a + offset) @ (cov_b + offset), disp=False)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(covmean))
    # the distance is non-negative; tiny negative values are sqrtm noise
    return FrechetResult(max(value, 0.0), regularized)


def polynomial_kernel(x: np.ndarray, y: np.ndarray, degree: int = 3, coef: float = 1.0) -> np.ndarray:
    """(x.y / d + coef)^degree, the kernel conventional for KID."""
    d = x.shape[1]
    return (x @ y.T / d + coef) ** degree


def mmd2_unbiased(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Unbiased squared MMD with the degree-3 polynomial kernel.

    Equal-size sets use the paired estimator that drops diagonal cross terms,
    so identical sets score exactly 0; the estimator can be slightly negative
    on independent draws of one distribution.
    """
    x = np.asarray(feats_a, dtype=np.float64)
    y = np.asarray(feats_b, dtype=np.float64)
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise ConfigurationError("mmd2_unbiased needs >= 2 samples per set")
    k_xx = polynomial_kernel(x, x)
    k_yy = polynomial_kernel(y, y)
    k_xy = polynomial_kernel(x, y)
    sum_xx = k_xx.sum() - np.trace(k_xx)
    sum_yy = k_yy.sum() - np.trace(k_yy)
    if m == n:
        sum_xy = k_xy.sum() - np.trace(k_xy)
        return float((sum_xx + sum_yy - 2.0 * sum_xy) / (m * (m - 1)))
    return float(sum_xx / (m * (m - 1)) + sum_yy / (n * (n - 1)) - 2.0 * k_xy.mean())


def kid_score(
    feats_a: np.ndarray,
    feats_b: np.ndarray,
    subset_size: int | None = None,
    n_subsets: int = 10,
    seed: int = 0,
) -> float:
    """Kernel inception-style distance: mean unbiased MMD^2 over seeded subsets.

    Equal-size sets share each subset's index draw so identical sets score 0.
    """
    feats_a = np.asarray(feats_a, dtype=np.float64)
    feats_b = np.asarray(feats_b, dtype=np.float64)
    n = min(feats_a.shape[0], feats_b.shape[0])
    size = min(n, 100) if subset_size is None else min(subset_size, n)
    rng = np.random.RandomState(seed)
    values = []
    for _ in range(n_subsets):
        idx_a = rng.choice(feats_a.shape[0], size, replace=False)
        if feats_a.shape[0] == feats_b.shape[0]:
            idx_b = idx_a
        else:
            idx_b = rng.choice(feats_b.shape[0], size, replace=False)
        values.append(mmd2_unbiased(feats_a[idx_a], feats_b[idx_b]))
    return float(np.mean(values))


def cmmd_score(
    feats_a: np.ndarray, feats_b: np.ndarray, sigma: float = 10.0, scale: float = 1000.0
) -> float:
    """Gaussian-kernel MMD on (CLIP-style) embeddings, biased estimator.

    Uses bandwidth sigma=10 and a x1000 report scale, matching the published
    CLIP-MMD recipe; identical sets score exactly 0.
    """
    x = np.asarray(feats_a, dtype=np.float64)
    y = np.asarray(feats_b, dtype=np.float64)
    gamma = 1.0 / (2.0 * sigma**2)

    def kernel(a, b):
        sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * (a @ b.T)
        return np.exp(-gamma * np.clip(sq, 0.0, None))

    mmd = kernel(x, x).mean() + kernel(y, y).mean() - 2.0 * kernel(x, y).mean()
    return float(scale * max(mmd, 0.0))


# -- image-level metrics ------------------------------------------------------


class PerceptualBackend(Protocol):
    def distance(self, a: np.ndarray, b: np.ndarray) -> float: ...


class PixelMSEPerceptual:
    """Stub perceptual net: plain pixel MSE."""

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))


@dataclass
class IdentityScores:
    dino: float
    ir: float
    clip_i: float
    full_image_flags: list[bool] = field(default_factory=list)


def _crop_subject(image: np.ndarray, class_label: str, detector: ObjectDetector | None):
    if detector is None:
        return image, True
    try:
        (x0, y0, x1, y1), _conf = detect_subject(image, class_label, detector)
        return image[y0:y1, x0:x1], False
    except SubjectNotFoundError:
        return image, True


def identity_scores(
    generated: Sequence[np.ndarray],
    subject: ReferenceSubject,
    *,
    extractors: dict[str, ExtractorHandle],
    detector: ObjectDetector | None = None,
) -> IdentityScores:
    """Mean cosine similarity of cropped-subject embeddings to the reference.

    Samples whose subject cannot be detected are scored on the full image and
    flagged.
    """
    if not generated:
        raise ConfigurationError("identity_scores needs at least one generated image")
    subj_crop, _ = _crop_subject(subject.image, subject.class_label, detector)
    subj_t = to_tensor_image(subj_crop)
    flags: list[bool] = []
    sims: dict[str, list[float]] = {key: [] for key in ("dino", "ir", "clip_i")}
    with torch.no_grad():
        refs = {key: embed(extractors[key], subj_t) for key in sims}
        for image in generated:
            crop, flagged = _crop_subject(image, subject.class_label, detector)
            flags.append(flagged)
            crop_t = to_tensor_image(crop)
            for key in sims:
                sims[key].append(float((embed(extractors[key], crop_t) * refs[key]).sum()))
    return IdentityScores(
        dino=float(np.mean(sims["dino"])),
        ir=float(np.mean(sims["ir"])),
        clip_i=float(np.mean(sims["clip_i"])),
        full_image_flags=flags,
    )


def prompt_adherence(
    generated: Sequence[np.ndarray],
    prompts: Sequence[str],
    *,
    image_extractor: ExtractorHandle,
    text_extractor: TextExtractorHandle,
) -> float:
    """Mean image-text embedding similarity over paired samples."""
    if len(generated) != len(prompts):
        raise ConfigurationError(
            f"generated/prompts length mismatch: {len(generated)} vs {len(prompts)}"
        )
    scores = []
    with torch.no_grad():
        for image, prompt in zip(generated, prompts):
            img_vec = embed(image_extractor, to_tensor_image(image))
            txt_vec = text_extractor.embed_text(prompt).to(img_vec.dtype)
            scores.append(float((img_vec * txt_vec).sum()))
    return float(np.mean(scores))


def extract_features(images: Sequence[np.ndarray], handle: ExtractorHandle, normalized: bool = False) -> np.ndarray:
    """Stack backend features for a set of images (raw by default: Frechet and
    kernel metrics run on unnormalized pooled features)."""
    rows = []
    with torch.no_grad():
        for image in images:
            tensor = to_tensor_image(image)
            if normalized:
                rows.append(embed(handle, tensor).numpy())
            else:
                rows.append(handle.backend(preprocess(tensor, handle.preprocessing)).numpy())
    return np.stack(rows).astype(np.float64)


@dataclass
class NaturalnessScores:
    fid: float
    kid: float
    cmmd: float
    fid_regularized: bool = False


def naturalness(
    generated: Sequence[np.ndarray],
    reference: Sequence[np.ndarray],
    *,
    feature_extractor: ExtractorHandle,
    clip_extractor: ExtractorHandle | None = None,
) -> NaturalnessScores:
    """Distribution distances between generated and reference image sets."""
    if len(generated) < 2 or len(reference) < 2:
        raise ConfigurationError("naturalness needs >= 2 samples per set")
    feats_g = extract_features(generated, feature_extractor)
    feats_r = extract_features(reference, feature_extractor)
    fid = frechet_distance(feats_g, feats_r)
    kid = kid_score(feats_g, feats_r)
    clip_handle = clip_extractor or feature_extractor
    clip_g = extract_features(generated, clip_handle, normalized=True)
    clip_r = extract_features(reference, clip_handle, normalized=True)
    cmmd = cmmd_score(clip_g, clip_r)
    return NaturalnessScores(fid=fid.value, kid=kid, cmmd=cmmd, fid_regularized=fid.regularized)


def mask_out_subject(image: np.ndarray, subject_mask: np.ndarray) -> np.ndarray:
    """Zero the subject region so metrics see only the background."""
    keep = (~np.asarray(subject_mask, dtype=bool)).astype(image.dtype)
    return image * keep[:, :, None]


def background_preservation(
    edited: Sequence[np.ndarray],
    originals: Sequence[np.ndarray],
    masks: Sequence[np.ndarray | None],
    *,
    perceptual: PerceptualBackend,
) -> tuple[float | None, list[bool]]:
    """Mean perceptual distance on subject-masked-out image pairs.

    Triples without a mask are skipped and flagged; returns None when nothing
    could be scored.
    """
    if not (len(edited) == len(originals) == len(masks)):
        raise ConfigurationError("edited/originals/masks must be aligned")
    scores, skipped = [], []
    for out, orig, mask in zip(edited, originals, masks):
        if mask is None:
            skipped.append(True)
            continue
        skipped.append(False)
        scores.append(perceptual.distance(mask_out_subject(out, mask), mask_out_subject(orig, mask)))
    return (float(np.mean(scores)) if scores else None), skipped


def diversity(generated: Sequence[np.ndarray], subject: ReferenceSubject) -> float:
    """Mean pixel MSE between generated images and the subject image.

    Low values flag overfitting to the reference; resolutions are aligned by
    resizing onto the subject image.
    """
    target_h, target_w = subject.image.shape[:2]
    scores = []
    for image in generated:
        if image.shape[:2] != (target_h, target_w):
            tensor = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0)
            resized = torch.nn.functional.interpolate(
                tensor, size=(target_h, target_w), mode="bilinear", align_corners=False
            )
            image = resized.squeeze(0).permute(1, 2, 0).numpy()
        scores.append(float(np.mean((image - subject.image) ** 2)))
    return float(np.mean(scores))


# -- benchmark runner ---------------------------------------------------------


@dataclass
class EvalBackends:
    """Every backend the benchmark runner needs, injectable for offline runs."""

    dino: ExtractorHandle
    ir: ExtractorHandle
    clip_image: ExtractorHandle
    clip_text: TextExtractorHandle
    feature: ExtractorHandle
    perceptual: PerceptualBackend
    detector: ObjectDetector | None = None

    @classmethod
    def stubs(cls, resolution: tuple[int, int] = (16, 16)) -> "EvalBackends":
        return cls(
            dino=projection_stub("eval-stub-dino", resolution, 32, seed=11),
            ir=projection_stub("eval-stub-ir", resolution, 24, seed=12),
            clip_image=projection_stub("eval-stub-clip-image", resolution, 16, seed=13),
            clip_text=hashed_text_stub("eval-stub-clip-text", 16),
            feature=projection_stub("eval-stub-feature", resolution, 16, seed=14),
            perceptual=PixelMSEPerceptual(),
        )

    @classmethod
    def from_registry(cls, detector: ObjectDetector | None = None) -> "EvalBackends":
        class _LpipsAdapter:
            def __init__(self):
                self.handle = get_extractor("lpips-backbone")

            def distance(self, a, b):  # pragma: no cover - needs real weights
                raise NotImplementedError

        return cls(
            dino=get_extractor("dino-v2"),
            ir=get_extractor("ir-features"),
            clip_image=get_extractor("clip-image"),
            clip_text=get_extractor("clip-text"),
            feature=get_extractor("inception-pool3"),
            perceptual=_LpipsAdapter(),
            detector=detector,
        )


@dataclass
class MetricReport:
    """Aggregate metric values over one benchmark run.

    ``kid`` is floored at 0 for reporting (the raw unbiased estimator may be
    marginally negative).
    """

    identity_dino: float
    identity_ir: float
    identity_clip_i: float
    clip_t: float | None
    fid: float | None
    kid: float | None
    cmmd: float | None
    lpips: float | None
    diversity_mse: float | None
    n_samples: int
    missing: list[str] = field(default_factory=list)
    flags: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "identity": {
                "dino": self.identity_dino,
                "ir": self.identity_ir,
                "clip_i": self.identity_clip_i,
            },
            "prompt_adherence": {"clip_t": self.clip_t},
            "naturalness": {"fid": self.fid, "kid": self.kid, "cmmd": self.cmmd},
            "background": {"lpips": self.lpips},
            "diversity": {"mse": self.diversity_mse},
            "n_samples": self.n_samples,
            "missing": self.missing,
            "flags": self.flags,
        }

    def render_table(self) -> str:
        def fmt(value):
            return "-" if value is None else f"{value:.4f}"

        rows = [
            ("DINO", fmt(self.identity_dino)),
            ("IR", fmt(self.identity_ir)),
            ("CLIP-I", fmt(self.identity_clip_i)),
            ("CLIP-T", fmt(self.clip_t)),
            ("FID", fmt(self.fid)),
            ("KID", fmt(self.kid)),
            ("CMMD", fmt(self.cmmd)),
            ("LPIPS", fmt(self.lpips)),
            ("MSE", fmt(self.diversity_mse)),
        ]
        width = max(len(name) for name, _ in rows)
        lines = [f"n_samples: {self.n_samples}"]
        lines += [f"{name:<{width}}  {value}" for name, value in rows]
        return "\n".join(lines)


def read_manifest(path) -> list[dict]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"manifest line {line_no} is not valid JSON: {exc}") from exc
    if not entries:
        raise ConfigurationError(f"manifest {path} contains no samples")
    return entries


def run_benchmark(
    manifest_path,
    *,
    backends: EvalBackends,
    output_dir=None,
    mode: str = "generation",
) -> tuple[MetricReport, list[dict]]:
    """Score a directory of model outputs against a manifest.

    Manifest lines: {sample_id, subject_path, prompt|input_path, output_path,
    mask_path?, reference_path?}. Missing files are listed and skipped so a
    partial report is still produced.
    """
    if mode not in ("generation", "editing"):
        raise ConfigurationError(f"mode must be 'generation' or 'editing', got {mode!r}")
    entries = read_manifest(manifest_path)

    per_sample: list[dict] = []
    missing: list[str] = []
    outputs, subjects, prompts = [], [], []
    inputs, masks, references = [], [], []
    dino_scores, ir_scores, clip_i_scores, div_scores = [], [], [], []
    full_image_count = 0

    for entry in entries:
        sample_id = entry.get("sample_id", entry.get("output_path", "?"))
        paths = [entry.get("subject_path"), entry.get("output_path")]
        if mode == "editing":
            paths.append(entry.get("input_path"))
        absent = [p for p in paths if not p or not Path(p).exists()]
        if absent:
            missing.extend(str(p) for p in absent if p)
            per_sample.append({"sample_id": sample_id, "skipped": True, "missing": absent})
            continue

        output = load_png(entry["output_path"])
        subject = ReferenceSubject(
            image=load_png(entry["subject_path"]), class_label=entry.get("class_label", "subject")
        )
        ident = identity_scores([output], subject, extractors={
            "dino": backends.dino, "ir": backends.ir, "clip_i": backends.clip_image,
        }, detector=backends.detector)
        full_image_count += sum(ident.full_image_flags)
        dino_scores.append(ident.dino)
        ir_scores.append(ident.ir)
        clip_i_scores.append(ident.clip_i)

        record = {
            "sample_id": sample_id,
            "identity": {"dino": ident.dino, "ir": ident.ir, "clip_i": ident.clip_i},
        }
        outputs.append(output)
        subjects.append(subject)

        if mode == "generation":
            prompts.append(entry.get("prompt", ""))
            div_scores.append(diversity([output], subject))
            record["diversity_mse"] = div_scores[-1]
            ref_path = entry.get("reference_path")
            if ref_path and Path(ref_path).exists():
                references.append(load_png(ref_path))
        else:
            original = load_png(entry["input_path"])
            inputs.append(original)
            references.append(original)
            mask_path = entry.get("mask_path")
            masks.append(load_mask_png(mask_path) if mask_path and Path(mask_path).exists() else None)
        per_sample.append(record)

    if not outputs:
        raise ConfigurationError("no scoreable samples in manifest")

    clip_t = None
    lpips_value = None
    div_value = float(np.mean(div_scores)) if div_scores else None
    if mode == "generation":
        clip_t = prompt_adherence(
            outputs, prompts, image_extractor=backends.clip_image, text_extractor=backends.clip_text
        )
    else:
        lpips_value, skip_flags = background_preservation(
            outputs, inputs, masks, perceptual=backends.perceptual
        )
        for record, skipped in zip((r for r in per_sample if not r.get("skipped")), skip_flags):
            record["mask_missing"] = skipped

    fid = kid = cmmd = None
    fid_regularized = False
    if len(outputs) >= 2 and len(references) >= 2:
        scores = naturalness(
            outputs, references, feature_extractor=backends.feature, clip_extractor=backends.clip_image
        )
        fid, cmmd = scores.fid, scores.cmmd
        kid = max(0.0, scores.kid)
        fid_regularized = scores.fid_regularized

    report = MetricReport(
        identity_dino=float(np.mean(dino_scores)),
        identity_ir=float(np.mean(ir_scores)),
        identity_clip_i=float(np.mean(clip_i_scores)),
        clip_t=clip_t,
        fid=fid,
        kid=kid,
        cmmd=cmmd,
        lpips=lpips_value,
        diversity_mse=div_value,
        n_samples=len(outputs),
        missing=missing,
        flags={"identity_full_image": full_image_count, "fid_regularized": int(fid_regularized)},
    )

    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
        with open(out / "report.txt", "w", encoding="utf-8") as fh:
            fh.write(report.render_table() + "\n")
        with open(out / "per_sample.jsonl", "w", encoding="utf-8") as fh:
            for record in per_sample:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return report, per_sample

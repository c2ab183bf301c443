"""Quality benchmark tables: per-dataset score reports and SR comparisons.

benchmark_dataset runs the regressor over an image directory and emits a
per-image quality table with a dataset-mean row.  benchmark_sr degrades each
image (downsample, optional pre-blur), reconstructs it with every requested
method and reports full-reference fidelity, no-reference measurements and,
when regressor models are supplied, predicted quality vectors with scores.
All tables are plain CSV with fixed column formats so reruns are
byte-identical for a given seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__, fr_metrics, nr_metrics
from .errors import EoqaError, ParameterError
from .evaluation import PARAM_NAMES, QualityVector, ScoreConvention, aggregate_score
from .image import Image, downsample, load_image, resize_bilinear
from .modifiers import apply_blur
from .regressor import TrainedModel, predict_quality_vector
from .sr import SrMethod, apply_sr

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")
DATASET_HEADER = ["Modifier", "blur", "snr", "rer", "F", "GSD", "score"]
FR_HEADER = ["Modifier", "ssim", "psnr", "gmsd"]
NR_HEADER = ["Modifier", "snr_Mdn", "snr_M", "RER(XY)", "MTF(XY)", "FWHM(XY)"]
UNAVAILABLE = "-"


@dataclass
class TableReport:
    header: list[str]
    rows: list[list[str]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = [",".join(self.header)]
        lines.extend(",".join(r) for r in self.rows)
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def list_images(directory: str) -> list[str]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise ParameterError(f"unreadable image directory {directory!r}: {exc}") from exc
    out = [n for n in names if n.lower().endswith(IMAGE_EXTENSIONS)]
    if not out:
        raise ParameterError(f"no images found under {directory!r}")
    return out


def _fmt_vector(qv: QualityVector, score: float) -> list[str]:
    return [f"{qv.blur:.3f}", f"{qv.snr:.2f}", f"{qv.rer:.3f}",
            f"{qv.sharpness:.3f}", f"{qv.gsd:.3f}", f"{score:.3f}"]


def _mean_vector(vectors: list[QualityVector]) -> QualityVector:
    return QualityVector(**{name: float(np.mean([getattr(v, name) for v in vectors]))
                            for name in PARAM_NAMES})


def benchmark_dataset(models: "TrainedModel | dict[str, TrainedModel]", image_dir: str,
                      crops: int | None = None, seed: int = 0,
                      convention: ScoreConvention | None = None) -> TableReport:
    """Per-image QualityVector rows plus a dataset mean row.

    The mean row scores the column-mean vector, matching how dataset-level
    tables are usually quoted.
    """
    conv = convention or ScoreConvention()
    report = TableReport(list(DATASET_HEADER))
    vectors = []
    for name in list_images(image_dir):
        img = load_image(os.path.join(image_dir, name))
        qv = predict_quality_vector(models, img, crops, seed)
        vectors.append(qv)
        report.rows.append([name] + _fmt_vector(qv, aggregate_score(qv, conv)))
    mean = _mean_vector(vectors)
    report.rows.append(["mean"] + _fmt_vector(mean, aggregate_score(mean, conv)))
    return report


def _fr_cells(ref: Image, img: Image) -> list[str]:
    return [f"{fr_metrics.ssim(ref, img):.2f}",
            f"{fr_metrics.psnr(ref, img):.3f}",
            f"{fr_metrics.gmsd(ref, img):.4f}"]


def _nr_fields(img: Image) -> dict[str, float | None]:
    rep = nr_metrics.nr_report(img)
    return {"snr_Mdn": rep.snr_median, "snr_M": rep.snr_mean,
            "RER(XY)": rep.rer_xy(), "MTF(XY)": rep.mtf_xy(),
            "FWHM(XY)": rep.fwhm_xy()}


_NR_FMT = {"snr_Mdn": "{:.2f}", "snr_M": "{:.2f}", "RER(XY)": "{:.3f}",
           "MTF(XY)": "{:.3f}", "FWHM(XY)": "{:.3f}"}


def _nr_mean_cells(per_image: list[dict[str, float | None]]) -> list[str]:
    cells = []
    for key in NR_HEADER[1:]:
        vals = [d[key] for d in per_image if d[key] is not None]
        cells.append(_NR_FMT[key].format(float(np.mean(vals))) if vals else UNAVAILABLE)
    return cells


@dataclass
class SrBenchmark:
    fr: TableReport
    nr: TableReport
    qmr: TableReport | None
    manifest: dict


def benchmark_sr(methods: list[SrMethod], image_dir: str, scale: int,
                 blur_lr: bool = False, seed: int = 0,
                 models: "TrainedModel | dict[str, TrainedModel] | None" = None,
                 convention: ScoreConvention | None = None) -> SrBenchmark:
    """Degrade-and-reconstruct comparison over an image directory.

    Rows: LR (bilinear-upscaled for comparability), one per method, HR.
    A method that raises is reported as a row of '-' and the run continues.
    The quality table is produced only when regressor models are given.
    """
    for m in methods:
        if m.scale != scale:
            raise ParameterError(f"method {m.name!r} has scale {m.scale}, expected {scale}")
    conv = convention or ScoreConvention()
    names = list_images(image_dir)
    hrs = []
    for n in names:
        img = load_image(os.path.join(image_dir, n))
        lr = downsample(apply_blur(img, 1.0) if blur_lr else img, scale)
        hr = Image(img.data[:, :lr.height * scale, :lr.width * scale],
                   img.max_value, img.gsd)
        hrs.append((n, hr, lr))

    rows: list[tuple[str, list[Image] | None]] = [
        ("LR", [resize_bilinear(lr, scale) for _, _, lr in hrs])]
    for m in methods:
        try:
            rows.append((m.name, [apply_sr(m, lr) for _, _, lr in hrs]))
        except EoqaError:
            rows.append((m.name, None))
    rows.append(("HR", [hr for _, hr, _ in hrs]))

    fr = TableReport(list(FR_HEADER))
    nr = TableReport(list(NR_HEADER))
    qmr = TableReport(list(DATASET_HEADER)) if models is not None else None
    for label, images in rows:
        if images is None:
            fr.rows.append([label] + [UNAVAILABLE] * (len(FR_HEADER) - 1))
            nr.rows.append([label] + [UNAVAILABLE] * (len(NR_HEADER) - 1))
            if qmr is not None:
                qmr.rows.append([label] + [UNAVAILABLE] * (len(DATASET_HEADER) - 1))
            continue
        fr_vals = np.array([[fr_metrics.ssim(hr, img), fr_metrics.psnr(hr, img),
                             fr_metrics.gmsd(hr, img)]
                            for (_, hr, _), img in zip(hrs, images)])
        mean = fr_vals.mean(axis=0)
        fr.rows.append([label, f"{mean[0]:.2f}", f"{mean[1]:.3f}", f"{mean[2]:.4f}"])
        nr.rows.append([label] + _nr_mean_cells([_nr_fields(img) for img in images]))
        if qmr is not None:
            vecs = [predict_quality_vector(models, img, None, seed) for img in images]
            mv = _mean_vector(vecs)
            qmr.rows.append([label] + _fmt_vector(mv, aggregate_score(mv, conv)))

    manifest = {
        "version": __version__,
        "seed": seed,
        "scale": scale,
        "blur_lr": bool(blur_lr),
        "images": names,
        "methods": [m.name for m in methods],
        "convention": conv.as_dict(),
    }
    return SrBenchmark(fr, nr, qmr, manifest)

"""Super-resolution baselines and a tiny trainable SR network.

Baselines are plain interpolators (nearest, Catmull-Rom bicubic with edge
renormalization).  The trainable net is deliberately small: three 3x3 convs
at low resolution followed by pixel rearrangement, predicting a residual on
top of the bicubic upscale of its input.  It exists to demonstrate that the
quality-aware loss term measurably changes optimization outcomes, not to
compete with large SR stacks.  Color inputs run the net on luma only; chroma
is bicubic-upscaled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fr_metrics
from .errors import CheckpointError, ParameterError, SizeError, TrainingDiverged
from .image import Image, downsample, to_grayscale
from .modifiers import apply_blur
from .nn import SGD, Sequential, build_model
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .regressor import TrainedModel, combined_sr_loss

SR_MODEL_KIND = "tiny-sr"
SR_SCALES = (2, 3, 4)


def _check_scale(scale: int) -> int:
    if scale not in SR_SCALES:
        raise ParameterError(f"scale must be one of {SR_SCALES}, got {scale}")
    return int(scale)


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    at = np.abs(t)
    w = np.where(at <= 1.0,
                 (a + 2.0) * at ** 3 - (a + 3.0) * at ** 2 + 1.0,
                 a * at ** 3 - 5.0 * a * at ** 2 + 8.0 * a * at - 4.0 * a)
    return np.where(at < 2.0, w, 0.0)


def _bicubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) resampling weights, half-pixel centers.

    Taps falling outside the image are dropped and the remaining weights
    renormalized, which is what common raster libraries do at borders.
    """
    w = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for o in range(n_out):
        sx = (o + 0.5) * ratio - 0.5
        k0 = int(np.floor(sx)) - 1
        ks = np.arange(k0, k0 + 4)
        wt = _cubic(ks - sx)
        ok = (ks >= 0) & (ks < n_in)
        w[o, ks[ok]] = wt[ok] / wt[ok].sum()
    return w


def _bicubic_up(plane: np.ndarray, scale: int) -> np.ndarray:
    h, w = plane.shape
    wv = _bicubic_matrix(h, h * scale)
    wh = _bicubic_matrix(w, w * scale)
    return wv @ plane @ wh.T


def upscale_nearest(img: Image, scale: int) -> Image:
    scale = _check_scale(scale)
    data = np.repeat(np.repeat(img.data, scale, axis=1), scale, axis=2)
    gsd = None if img.gsd is None else img.gsd / scale
    return Image(data, img.max_value, gsd)


def upscale_bicubic(img: Image, scale: int) -> Image:
    scale = _check_scale(scale)
    out = np.stack([_bicubic_up(ch, scale) for ch in img.data])
    out = np.clip(out, 0.0, img.max_value)
    gsd = None if img.gsd is None else img.gsd / scale
    return Image(out, img.max_value, gsd)


def tiny_sr_spec(scale: int) -> list[dict]:
    scale = _check_scale(scale)
    return [
        {"type": "conv3x3", "in_ch": 1, "out_ch": 16}, {"type": "relu"},
        {"type": "conv3x3", "in_ch": 16, "out_ch": 16}, {"type": "relu"},
        {"type": "conv3x3", "in_ch": 16, "out_ch": scale * scale},
        {"type": "pixel_shuffle", "scale": scale},
    ]


@dataclass
class SrModel:
    net: Sequential
    scale: int
    metadata: dict = field(default_factory=dict)

    def forward_luma(self, batch: np.ndarray, base: np.ndarray) -> np.ndarray:
        """Residual prediction: net(LR) + bicubic(LR), both (B, 1, h, w) luma."""
        return self.net.forward(batch) + base


@dataclass(frozen=True)
class SrMethod:
    name: str
    scale: int
    model: SrModel | None = None

    @staticmethod
    def nearest(scale: int) -> "SrMethod":
        return SrMethod("nearest", _check_scale(scale))

    @staticmethod
    def bicubic(scale: int) -> "SrMethod":
        return SrMethod("bicubic", _check_scale(scale))

    @staticmethod
    def trained(model: SrModel, name: str = "tinysr") -> "SrMethod":
        if model is None:
            raise ParameterError("a trained method needs a model")
        return SrMethod(name, model.scale, model)


def _rgb_to_ycbcr(data01: np.ndarray) -> np.ndarray:
    r, g, b = data01
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.stack([y, cb, cr])


def _ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[0], ycc[1] - 0.5, ycc[2] - 0.5
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b])


def apply_sr(method: SrMethod, img: Image) -> Image:
    """Upscale img by method.scale; output dims are input dims x scale."""
    if method.name == "nearest":
        return upscale_nearest(img, method.scale)
    if method.model is None:
        return upscale_bicubic(img, method.scale)
    model = method.model
    s = model.scale
    if img.width < 3 or img.height < 3:
        raise SizeError(f"image {img.width}x{img.height} too small for the SR net")
    x = img.data / img.max_value
    if img.channels == 3:
        ycc = _rgb_to_ycbcr(x)
        base = _bicubic_up(ycc[0], s)
        y_sr = model.forward_luma(ycc[None, :1], base[None, None])[0, 0]
        chroma = [_bicubic_up(ycc[c], s) for c in (1, 2)]
        out = _ycbcr_to_rgb(np.stack([y_sr, chroma[0], chroma[1]]))
    else:
        y = to_grayscale(img).data[0] / img.max_value
        base = _bicubic_up(y, s)
        out = model.forward_luma(y[None, None], base[None, None])[0]
    out = np.clip(out * img.max_value, 0.0, img.max_value)
    gsd = None if img.gsd is None else img.gsd / s
    return Image(out, img.max_value, gsd)


@dataclass(frozen=True)
class SrTrainConfig:
    epochs: int = 20
    batch_size: int = 16
    patch: int = 24               # LR patch side; HR side is patch x scale
    patches_per_image: int = 4
    lr: float = 1e-2
    lr_decay: float = 0.8         # multiplicative, applied after each epoch
    momentum: float = 0.9
    weight_decay: float = 0.0
    split: float = 0.8
    lr_blur_sigma: float = 0.0    # optional Gaussian pre-blur before downsampling

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patches_per_image < 1:
            raise ParameterError("epochs, batch_size, patches_per_image must be >= 1")
        if self.patch < 8:
            raise ParameterError(f"patch side must be >= 8, got {self.patch}")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ParameterError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


def _rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _luma01(img: Image) -> np.ndarray:
    g = to_grayscale(img)
    return g.data[0] / g.max_value


def train_tiny_sr(sources: list[tuple[str, Image]], scale: int, lam: float = 0.0,
                  qmr_model: TrainedModel | None = None, kind: str = "l1",
                  config: SrTrainConfig | None = None, seed: int = 0
                  ) -> tuple[SrModel, list[dict]]:
    """Fit the tiny SR net on HR sources; LR inputs come from downsample().

    Loss per batch is combined_sr_loss (pixel L1 + lam x quality term).  The
    log records train loss components and held-out PSNR/SSIM per epoch.
    Deterministic in (sources order, config, seed).
    """
    scale = _check_scale(scale)
    if lam < 0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    if lam > 0 and qmr_model is None:
        raise ParameterError("a quality model is required when lam > 0")
    cfg = config or SrTrainConfig()
    if not sources:
        raise ParameterError("no training sources")

    pairs = []   # (name, hr luma, lr luma)
    for name, img in sources:
        hr = _luma01(img)
        degraded = Image(hr[None], 1.0, img.gsd)
        if cfg.lr_blur_sigma > 0:
            degraded = apply_blur(degraded, cfg.lr_blur_sigma)
        lo = downsample(degraded, scale)
        lr = lo.data[0]
        hr = hr[:lr.shape[0] * scale, :lr.shape[1] * scale]
        if min(lr.shape) < cfg.patch:
            raise SizeError(f"source {name!r} smaller than one {cfg.patch}px LR patch")
        pairs.append((name, hr, lr))

    n_train = max(1, int(round(cfg.split * len(pairs))))
    order = _rng(seed, 0x5917).permutation(len(pairs))
    tr = [pairs[i] for i in sorted(order[:n_train])]
    va = [pairs[i] for i in sorted(order[n_train:])] or tr

    meta = {"scale": scale, "lam": lam, "kind": kind, "seed": seed}
    if qmr_model is not None and lam > 0:
        meta["qmr_heads"] = qmr_model.net.head_names()
    model = SrModel(build_model(tiny_sr_spec(scale), seed), scale, meta)
    # zero the residual head so optimization starts at the bicubic baseline
    last_conv = model.net.layers[-2]
    for prm in last_conv.params():
        prm.value[...] = 0.0
    opt = SGD(model.net.params(), cfg.lr, cfg.momentum, cfg.weight_decay)
    p, hp = cfg.patch, cfg.patch * scale
    va_base = [_bicubic_up(lr, scale) for _, _, lr in va]

    log: list[dict] = []
    for epoch in range(cfg.epochs):
        lrs, hrs = [], []
        for i, (_, hr, lr) in enumerate(tr):
            g = _rng(seed, 0xCA, epoch, i)
            for _ in range(cfg.patches_per_image):
                x = int(g.integers(0, lr.shape[1] - p + 1))
                y = int(g.integers(0, lr.shape[0] - p + 1))
                lrs.append(lr[y:y + p, x:x + p])
                hrs.append(hr[y * scale:y * scale + hp, x * scale:x * scale + hp])
        X = np.stack(lrs)[:, None]
        Y = np.stack(hrs)[:, None]
        perm = _rng(seed, 0xE70C, epoch).permutation(len(X))
        tot_l, tot_c, tot_q = [], [], []
        for s0 in range(0, len(perm), cfg.batch_size):
            b = perm[s0:s0 + cfg.batch_size]
            base = np.stack([_bicubic_up(x[0], scale) for x in X[b]])[:, None]
            sr = model.forward_luma(X[b], base)
            total, content, quality, grad = combined_sr_loss(Y[b], sr, lam, kind, qmr_model)
            if not np.isfinite(total):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            tot_l.append(total)
            tot_c.append(content)
            tot_q.append(quality)
            for prm in model.net.params():
                prm.grad[...] = 0.0
            model.net.backward(grad)
            opt.step()
        psnrs, ssims = [], []
        for (name, hr, lr), base in zip(va, va_base):
            sr = np.clip(model.forward_luma(lr[None, None], base[None, None])[0, 0], 0, 1)
            a = Image(sr[None], 1.0)
            bimg = Image(hr[None], 1.0)
            psnrs.append(fr_metrics.psnr(bimg, a))
            ssims.append(fr_metrics.ssim(bimg, a))
        log.append({"epoch": epoch, "loss": float(np.mean(tot_l)),
                    "content": float(np.mean(tot_c)), "qmr": float(np.mean(tot_q)),
                    "val_psnr": float(np.mean(psnrs)), "val_ssim": float(np.mean(ssims))})
        opt.lr *= cfg.lr_decay
    model.metadata.update({"epochs": cfg.epochs, "final_val_psnr": log[-1]["val_psnr"],
                           "val_sources": [name for name, _, _ in va]})
    return model, log


def save_sr_model(model: SrModel, path: str) -> None:
    spec = {"scale": model.scale, "layers": model.net.spec()}
    save_checkpoint(path, SR_MODEL_KIND, spec,
                    [p.value for p in model.net.params()], model.metadata)


def load_sr_model(path: str) -> SrModel:
    doc = load_checkpoint(path)
    if doc["kind"] != SR_MODEL_KIND:
        raise CheckpointError(f"checkpoint kind {doc['kind']!r} is not {SR_MODEL_KIND!r}")
    spec = doc["model"]
    scale = _check_scale(spec["scale"])
    net = build_model(spec["layers"], 0)
    params = net.params()
    if len(params) != len(doc["params"]):
        raise CheckpointError(f"parameter count mismatch: {len(doc['params'])} stored, "
                              f"{len(params)} expected")
    for prm, v in zip(params, doc["params"]):
        if prm.value.shape != v.shape:
            raise CheckpointError(f"parameter shape mismatch {v.shape} vs {prm.value.shape}")
        prm.value[...] = v
    return SrModel(net, scale, doc["metadata"])

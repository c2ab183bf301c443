"""Interval-classification quality regressor.

A small convolutional encoder pools random crops of an image into a softmax
distribution over the parameter grid of one modifier; training data comes
straight from the self-annotating dataset generator.  Topologies: single
(one encoder, one head), multihead (one encoder, one head per parameter),
multibranch (an independent single net per parameter).

Prediction averages crop probabilities, renormalizes, applies a soft
threshold (default 0.3) to form the label set, and takes the argmax class.
The same heads power the quality-driven SR losses: qmr_loss compares head
outputs of an HR/SR pair and backpropagates into the SR image only.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import evaluation
from .errors import CheckpointError, GridMismatch, ParameterError
from .image import Image, circular_pad, crop, draw_crop_rects, load_image, to_grayscale
from .modifiers import DatasetManifest, ModifierKind, ParamGrid
from .nn import SGD, Sequential, bce_loss, build_model
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.losses import BCE_EPS

MODEL_KIND = "qmr-regressor"
TOPOLOGIES = ("single", "multihead", "multibranch")


@dataclass(frozen=True)
class RegressorConfig:
    side: int = 64                 # crop side R fed to the encoder
    crops: int = 8                 # crops C pooled per image at predict time
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 1e-4
    momentum: float = 0.9
    soft_threshold: float = 0.3
    topology: str = "single"
    encoder_channels: tuple[int, int, int] = (16, 32, 64)

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ParameterError(f"unknown topology {self.topology!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.crops < 1:
            raise ParameterError("epochs, batch_size and crops must be >= 1")
        if not (0.0 <= self.soft_threshold < 1.0):
            raise ParameterError(f"soft_threshold must be in [0, 1), got {self.soft_threshold}")


def encoder_spec(channels: tuple[int, int, int] = (16, 32, 64)) -> list[dict]:
    c1, c2, c3 = channels
    return [
        {"type": "conv3x3", "in_ch": 1, "out_ch": c1}, {"type": "relu"},
        {"type": "maxpool2"},
        {"type": "conv3x3", "in_ch": c1, "out_ch": c2}, {"type": "relu"},
        {"type": "maxpool2"},
        {"type": "conv3x3", "in_ch": c2, "out_ch": c3}, {"type": "relu"},
        {"type": "gap"},
    ]


def head_spec(feature_dim: int, n_classes: int) -> list[dict]:
    return [{"type": "linear", "in_f": feature_dim, "out_f": n_classes},
            {"type": "softmax"}]


class QmrNet:
    """Shared encoder with one softmax head per parameter."""

    def __init__(self, encoder: Sequential, heads: dict[str, Sequential]):
        self.encoder = encoder
        self.heads = dict(heads)

    @staticmethod
    def build(head_sizes: dict[str, int], seed: int,
              channels: tuple[int, int, int] = (16, 32, 64)) -> "QmrNet":
        enc = build_model(encoder_spec(channels), seed)
        heads = {}
        for i, (name, n) in enumerate(sorted(head_sizes.items())):
            heads[name] = build_model(head_spec(channels[-1], n), seed + 7919 * (i + 1))
        return QmrNet(enc, heads)

    def head_names(self) -> list[str]:
        return sorted(self.heads)

    def params(self):
        out = self.encoder.params()
        for name in self.head_names():
            out.extend(self.heads[name].params())
        return out

    def forward(self, x: np.ndarray) -> dict[str, np.ndarray]:
        feat = self.encoder.forward(x)
        return {name: self.heads[name].forward(feat) for name in self.head_names()}

    def backward(self, head_grads: dict[str, np.ndarray]) -> np.ndarray:
        gfeat = None
        for name, g in head_grads.items():
            gh = self.heads[name].backward(g)
            gfeat = gh if gfeat is None else gfeat + gh
        if gfeat is None:
            raise ParameterError("no head gradients supplied")
        return self.encoder.backward(gfeat)

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0


@dataclass
class TrainedModel:
    net: QmrNet
    grids: dict[str, ParamGrid]
    config: RegressorConfig
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PredictionDistribution:
    probs: np.ndarray
    labels: tuple[int, ...]   # classes clearing the soft threshold
    top_class: int
    value: float              # grid value of the top class
    grid_values: np.ndarray = None

    def expected_value(self) -> float:
        """Probability-weighted mean over the grid (continuous readout)."""
        return float(np.dot(self.probs, self.grid_values))


def _rng(seed: int, *stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def _load_crops(manifest: DatasetManifest, root: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Stack manifest crops into (n, 1, R, R) in [0, 1] with class and source ids."""
    xs, ys, sids = [], [], []
    sources = manifest.sources()
    index = {s: i for i, s in enumerate(sources)}
    for e in manifest.entries:
        img = load_image(os.path.join(root, e.path))
        g = to_grayscale(img)
        xs.append(g.data / g.max_value)
        ys.append(e.class_index)
        sids.append(index[e.source])
    return (np.stack(xs), np.array(ys, dtype=np.intp),
            np.array(sids, dtype=np.intp), sources)


def _split_sources(n_sources: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not (0.0 < split <= 1.0):
        raise ParameterError(f"split must be in (0, 1], got {split}")
    order = _rng(seed, 0x5917).permutation(n_sources)
    n_train = max(1, int(round(split * n_sources)))
    return np.sort(order[:n_train]), np.sort(order[n_train:])


def _grouped_pairs(probs: np.ndarray, targets: np.ndarray,
                   groups: np.ndarray) -> list[evaluation.EvalPair]:
    """Average crop probabilities per (source, class) group, then pair up."""
    pairs = []
    for g in np.unique(groups):
        mask = groups == g
        p = probs[mask].mean(axis=0)
        p = p / p.sum()
        pairs.append((int(targets[mask][0]), int(np.argmax(p)), p))
    return pairs


def train(manifest: DatasetManifest, config: RegressorConfig, root: str,
          split: float = 0.8, seed: int = 0) -> tuple[TrainedModel, list[dict]]:
    """Fit a single-parameter head; returns the best-validation model and a log.

    The split is by source image.  Every epoch logs mean train BCE and the
    validation medR/R@1/R@5 of crop-pooled predictions; the parameters of
    the best (medR, then R@1) epoch are restored at the end.
    """
    X, y, sids, sources = _load_crops(manifest, root)
    n = manifest.grid.n
    name = manifest.kind.value
    train_src, val_src = _split_sources(len(sources), split, seed)
    tr = np.isin(sids, train_src)
    va = np.isin(sids, val_src) if len(val_src) else tr
    onehot = np.eye(n)[y]

    net = QmrNet.build({name: n}, seed, config.encoder_channels)
    opt = SGD(net.params(), config.lr, config.momentum, config.weight_decay)
    tr_idx = np.flatnonzero(tr)
    va_idx = np.flatnonzero(va)
    va_groups = sids[va_idx] * (n + 1) + y[va_idx]

    log: list[dict] = []
    best: tuple[float, float] | None = None
    best_params = None
    for epoch in range(config.epochs):
        order = _rng(seed, 0xE70C, epoch).permutation(len(tr_idx))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = tr_idx[order[start:start + config.batch_size]]
            probs = net.forward(X[batch])[name]
            loss, grad = bce_loss(probs, onehot[batch])
            losses.append(loss)
            net.zero_grad()
            net.backward({name: grad})
            opt.step()
        val_probs = _forward_in_chunks(net, X[va_idx], name)
        pairs = _grouped_pairs(val_probs, y[va_idx], va_groups)
        medr = evaluation.med_r(pairs)
        r1 = evaluation.recall_at_k(pairs, 1)
        r5 = evaluation.recall_at_k(pairs, 5)
        log.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                    "val_medr": medr, "val_r1": r1, "val_r5": r5})
        key = (medr, -r1)
        if best is None or key < best:
            best = key
            best_params = [p.value.copy() for p in net.params()]
    if best_params is not None:
        for p, v in zip(net.params(), best_params):
            p.value[...] = v
    meta = {"kind": name, "seed": seed, "split": split,
            "epochs": config.epochs, "best_medr": best[0], "best_r1": -best[1],
            "n_train_crops": int(tr.sum()), "n_val_crops": int(len(va_idx)),
            "sources": {"train": [sources[i] for i in train_src],
                        "val": [sources[i] for i in val_src]}}
    model = TrainedModel(net, {name: manifest.grid}, config, meta)
    return model, log


def _forward_in_chunks(net: QmrNet, X: np.ndarray, name: str, chunk: int = 256) -> np.ndarray:
    outs = [net.forward(X[i:i + chunk])[name] for i in range(0, len(X), chunk)]
    return np.concatenate(outs, axis=0)


def _root_for(root: str | dict[str, str], name: str) -> str:
    """Datasets may share one directory or live in per-parameter directories."""
    return root[name] if isinstance(root, dict) else root


def train_multibranch(manifests: dict[str, DatasetManifest], config: RegressorConfig,
                      root: str | dict[str, str], split: float = 0.8,
                      seed: int = 0) -> dict[str, TrainedModel]:
    """Independent encoder+head per parameter (k grids -> k encoders)."""
    out = {}
    for i, name in enumerate(sorted(manifests)):
        cfg = replace(config, topology="single")
        out[name], _ = train(manifests[name], cfg, _root_for(root, name),
                             split, seed + 31 * i)
    return out


def train_multihead(manifests: dict[str, DatasetManifest], config: RegressorConfig,
                    root: str | dict[str, str], split: float = 0.8, seed: int = 0
                    ) -> tuple[TrainedModel, list[dict]]:
    """Shared encoder, one head per parameter, heads updated round-robin."""
    names = sorted(manifests)
    data = {}
    grids = {}
    for name in names:
        man = manifests[name]
        if man.kind.value != name:
            raise ParameterError(f"manifest kind {man.kind.value} under key {name!r}")
        X, y, sids, sources = _load_crops(man, _root_for(root, name))
        train_src, val_src = _split_sources(len(sources), split, seed)
        tr = np.isin(sids, train_src)
        va = np.isin(sids, val_src) if len(val_src) else tr
        data[name] = (X, y, sids, np.flatnonzero(tr), np.flatnonzero(va))
        grids[name] = man.grid

    net = QmrNet.build({n: grids[n].n for n in names}, seed, config.encoder_channels)
    opt = SGD(net.params(), config.lr, config.momentum, config.weight_decay)
    log: list[dict] = []
    for epoch in range(config.epochs):
        losses = []
        batches = []
        for name in names:
            X, y, sids, tr_idx, _ = data[name]
            order = _rng(seed, 0xE70C, epoch, names.index(name)).permutation(len(tr_idx))
            for s in range(0, len(order), config.batch_size):
                batches.append((name, tr_idx[order[s:s + config.batch_size]]))
        for bi in _rng(seed, 0xB6, epoch).permutation(len(batches)):
            name, batch = batches[bi]
            X, y, _, _, _ = data[name]
            probs = net.forward(X[batch])[name]
            loss, grad = bce_loss(probs, np.eye(grids[name].n)[y[batch]])
            losses.append(loss)
            net.zero_grad()
            net.backward({name: grad})
            opt.step()
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        for name in names:
            X, y, sids, _, va_idx = data[name]
            probs = _forward_in_chunks(net, X[va_idx], name)
            groups = sids[va_idx] * (grids[name].n + 1) + y[va_idx]
            pairs = _grouped_pairs(probs, y[va_idx], groups)
            row[f"val_medr_{name}"] = evaluation.med_r(pairs)
        log.append(row)
    meta = {"kind": "+".join(names), "seed": seed, "split": split, "epochs": config.epochs}
    return TrainedModel(net, grids, config, meta), log


def predict(model: TrainedModel, img: Image, crops: int | None = None,
            seed: int = 0) -> dict[str, PredictionDistribution]:
    """Pool crop probabilities into one distribution per trained head."""
    cfg = model.config
    c = cfg.crops if crops is None else crops
    if c < 1:
        raise ParameterError(f"crop count must be >= 1, got {c}")
    g = to_grayscale(img)
    g = circular_pad(g, cfg.side)
    rects = draw_crop_rects(g.width, g.height, cfg.side, c, seed)
    batch = np.stack([crop(g, r).data / g.max_value for r in rects])
    head_probs = {}
    for i in range(0, len(batch), 256):
        part = model.net.forward(batch[i:i + 256])
        for name, p in part.items():
            head_probs.setdefault(name, []).append(p)
    out = {}
    for name in model.net.head_names():
        p = np.concatenate(head_probs[name], axis=0).mean(axis=0)
        p = p / p.sum()
        labels = tuple(int(i) for i in np.flatnonzero(p >= cfg.soft_threshold))
        top = int(np.argmax(p))
        out[name] = PredictionDistribution(p, labels, top,
                                           model.grids[name].class_to_value(top),
                                           model.grids[name].values())
    return out


def predict_quality_vector(models: "TrainedModel | dict[str, TrainedModel]", img: Image,
                           crops: int | None = None, seed: int = 0) -> evaluation.QualityVector:
    """Predictions for all five parameters; every head must be available."""
    if isinstance(models, TrainedModel):
        table = {name: models for name in models.net.head_names()}
    else:
        table = dict(models)
    values = {}
    for name in evaluation.PARAM_NAMES:
        if name not in table:
            raise ParameterError(f"missing model for parameter {name!r}")
        values[name] = predict(table[name], img, crops, seed)[name].value
    return evaluation.QualityVector(**values)


def save_model(model: TrainedModel, path: str) -> None:
    cfg = model.config
    spec = {
        "encoder": model.net.encoder.spec(),
        "heads": {n: model.net.heads[n].spec() for n in model.net.head_names()},
        "grids": {n: {"kind": g.kind.value, "n": g.n, "lo": g.lo, "hi": g.hi}
                  for n, g in model.grids.items()},
        "config": {"side": cfg.side, "crops": cfg.crops, "epochs": cfg.epochs,
                   "batch_size": cfg.batch_size, "lr": cfg.lr,
                   "weight_decay": cfg.weight_decay, "momentum": cfg.momentum,
                   "soft_threshold": cfg.soft_threshold, "topology": cfg.topology,
                   "encoder_channels": list(cfg.encoder_channels)},
    }
    save_checkpoint(path, MODEL_KIND, spec,
                    [p.value for p in model.net.params()], model.metadata)


def load_model(path: str, expect_grid: ParamGrid | None = None) -> TrainedModel:
    doc = load_checkpoint(path)
    if doc["kind"] != MODEL_KIND:
        raise CheckpointError(f"checkpoint kind {doc['kind']!r} is not {MODEL_KIND!r}")
    spec = doc["model"]
    cfgd = spec["config"]
    cfg = RegressorConfig(side=cfgd["side"], crops=cfgd["crops"], epochs=cfgd["epochs"],
                          batch_size=cfgd["batch_size"], lr=cfgd["lr"],
                          weight_decay=cfgd["weight_decay"], momentum=cfgd["momentum"],
                          soft_threshold=cfgd["soft_threshold"], topology=cfgd["topology"],
                          encoder_channels=tuple(cfgd["encoder_channels"]))
    grids = {n: ParamGrid(ModifierKind(g["kind"]), g["n"], g["lo"], g["hi"])
             for n, g in spec["grids"].items()}
    net = QmrNet.build({n: g.n for n, g in grids.items()}, 0, cfg.encoder_channels)
    params = net.params()
    if len(params) != len(doc["params"]):
        raise CheckpointError(f"parameter count mismatch: {len(doc['params'])} stored, "
                              f"{len(params)} expected")
    for p, v in zip(params, doc["params"]):
        if p.value.shape != v.shape:
            raise CheckpointError(f"parameter shape mismatch {v.shape} vs {p.value.shape}")
        p.value[...] = v
    model = TrainedModel(net, grids, cfg, doc["metadata"])
    if expect_grid is not None:
        got = grids.get(expect_grid.kind.value)
        if got != expect_grid:
            raise GridMismatch(f"model grid {got} != expected {expect_grid}")
    return model


def qmr_loss(model: TrainedModel, hr: np.ndarray, sr: np.ndarray,
             kind: str = "l1") -> tuple[float, np.ndarray]:
    """Head-output discrepancy between an HR/SR batch pair.

    Inputs are (B, 1, H, W) arrays in [0, 1].  Gradient flows only through
    the SR branch; regressor parameters stay frozen (their grads are cleared
    before returning).  kind: l1 (mean abs), l2 (mean square), bce (cross
    entropy of SR probabilities against HR probabilities).
    """
    if hr.shape != sr.shape:
        raise ParameterError(f"shape mismatch {hr.shape} vs {sr.shape}")
    if kind not in ("l1", "l2", "bce"):
        raise ParameterError(f"unknown qmr loss kind {kind!r}")
    p_hr = {n: p.copy() for n, p in model.net.forward(hr).items()}
    p_sr = model.net.forward(sr)
    names = model.net.head_names()
    total = 0.0
    grads = {}
    for name in names:
        a, b = p_sr[name], p_hr[name]
        n = a.size
        if kind == "l1":
            total += float(np.abs(a - b).mean())
            g = np.sign(a - b) / n
        elif kind == "l2":
            total += float(((a - b) ** 2).mean())
            g = 2.0 * (a - b) / n
        else:
            pc = np.clip(a, BCE_EPS, 1.0 - BCE_EPS)
            total += float(-(b * np.log(pc) + (1.0 - b) * np.log1p(-pc)).mean())
            g = (pc - b) / (pc * (1.0 - pc)) / n
        grads[name] = g / len(names)
    gsr = model.net.backward(grads)
    model.net.zero_grad()
    return total / len(names), gsr


def combined_sr_loss(hr: np.ndarray, sr: np.ndarray, lam: float, kind: str = "l1",
                     model: TrainedModel | None = None
                     ) -> tuple[float, float, float, np.ndarray]:
    """Pixel L1 content loss plus lam x qmr_loss; returns grad wrt the SR batch."""
    if hr.shape != sr.shape:
        raise ParameterError(f"shape mismatch {hr.shape} vs {sr.shape}")
    d = sr - hr
    content = float(np.abs(d).mean())
    grad = np.sign(d) / d.size
    q = 0.0
    if lam != 0.0:
        if model is None:
            raise ParameterError("a quality model is required when lam != 0")
        q, gq = qmr_loss(model, hr, sr, kind)
        grad = grad + lam * gq
    return content + lam * q, content, q, grad

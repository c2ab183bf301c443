"""Scalar losses returning (value, gradient-wrt-prediction)."""

from __future__ import annotations

import numpy as np

BCE_EPS = 1e-7


def l1_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    d = pred - target
    n = d.size
    return float(np.abs(d).mean()), np.sign(d) / n


def l2_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    d = pred - target
    n = d.size
    return float((d * d).mean()), 2.0 * d / n


def bce_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy, predictions clamped into [eps, 1 - eps]."""
    p = np.clip(pred, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    loss = float(-(target * np.log(p) + (1.0 - target) * np.log1p(-p)).mean())
    grad = (p - target) / (p * (1.0 - p)) / n
    return loss, grad

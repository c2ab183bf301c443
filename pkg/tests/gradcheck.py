"""Central finite-difference gradient checking used across the nn tests.

Every check projects the layer output onto a fixed random direction so the
scalar loss exercises the full output tensor, then compares the analytic
gradient against (f(x+e) - f(x-e)) / 2e elementwise.
"""

import numpy as np


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float((diff / scale).max())


def fd_gradient(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Numeric gradient of scalar fn(x) by central differences."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    out = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = fn(x)
        flat[i] = old - eps
        lo = fn(x)
        flat[i] = old
        out[i] = (hi - lo) / (2.0 * eps)
    return g


def layer_max_rel_err(layer, x: np.ndarray, rng: np.random.Generator,
                      eps: float = 1e-6) -> float:
    """Worst relative error over the input gradient and every parameter."""
    direction = rng.standard_normal(layer.forward(x).shape)

    def loss_wrt_input(xv):
        return float(np.sum(layer.forward(xv) * direction))

    params = layer.params() if hasattr(layer, "params") else []
    for p in params:
        p.grad[...] = 0.0
    layer.forward(x)
    gx = layer.backward(direction)
    worst = rel_err(gx, fd_gradient(loss_wrt_input, x, eps))

    for p in params:
        analytic = p.grad.copy()
        clean = p.value.copy()

        def loss_wrt_param(pv, _p=p):
            _p.value[...] = pv
            return float(np.sum(layer.forward(x) * direction))

        numeric = fd_gradient(loss_wrt_param, clean, eps)
        p.value[...] = clean   # fd_gradient left clean unperturbed
        worst = max(worst, rel_err(analytic, numeric))
    return worst

import numpy as np
import pytest

from eoqa import synthetic
from eoqa.errors import ParameterError


def test_constant():
    img = synthetic.constant(8, 42.0)
    assert img.data.shape == (1, 8, 8)
    assert np.all(img.data == 42.0)


def test_gradient_axes():
    gx = synthetic.gradient(4, 0.0, 3.0, axis="x")
    assert np.allclose(gx.data[0, 0], [0.0, 1.0, 2.0, 3.0])
    assert np.allclose(gx.data[0, 0], gx.data[0, -1])
    gy = synthetic.gradient(4, 0.0, 3.0, axis="y")
    assert np.array_equal(gy.data[0], gx.data[0].T)
    with pytest.raises(ParameterError):
        synthetic.gradient(4, 0.0, 3.0, axis="z")


def test_checkerboard_period():
    img = synthetic.checkerboard(8, 2, lo=10.0, hi=200.0)
    d = img.data[0]
    assert d[0, 0] == d[1, 1] == 10.0
    assert d[0, 2] == 200.0
    assert np.array_equal(d[:2, :2], d[4:6, 4:6])
    assert set(np.unique(d)) == {10.0, 200.0}


def test_edge_phantom_basic_properties():
    img = synthetic.edge_phantom(1.0, side=64, low=0.2, high=0.8)
    d = img.data[0]
    assert d.min() >= 0.2 * 255.0 - 1e-9
    assert d.max() <= 0.8 * 255.0 + 1e-9
    # a vertical-ish edge: every row is nondecreasing left to right
    assert np.all(np.diff(d, axis=1) >= -1e-12)
    # plateaus reached on both sides
    assert d[:, 0].max() < 0.21 * 255.0
    assert d[:, -1].min() > 0.79 * 255.0


def test_edge_phantom_orientation_transpose():
    x = synthetic.edge_phantom(1.3, side=48, orientation="x")
    y = synthetic.edge_phantom(1.3, side=48, orientation="y")
    assert np.allclose(y.data[0], x.data[0].T)


def test_edge_phantom_slope_tilts_edge():
    img = synthetic.edge_phantom(0.8, side=64, slope=0.25)
    d = img.data[0]
    mid = (d.min() + d.max()) / 2.0
    crossings = np.argmax(d > mid, axis=1).astype(float)
    fit = np.polyfit(np.arange(64), crossings, 1)
    assert fit[0] == pytest.approx(0.25, abs=0.05)


def test_texture_deterministic():
    a = synthetic.texture(32, seed=5)
    b = synthetic.texture(32, seed=5)
    c = synthetic.texture(32, seed=6)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)
    assert a.data.min() >= 0.0 and a.data.max() <= 255.0


def test_texture_smoothing_softens_edges():
    sharp = synthetic.texture(64, seed=3, smooth=0.0)
    soft = synthetic.texture(64, seed=3, smooth=0.6)
    gs = np.abs(np.diff(sharp.data[0], axis=1)).max()
    go = np.abs(np.diff(soft.data[0], axis=1)).max()
    assert go < gs


def test_texture_set():
    imgs = synthetic.texture_set(3, 24, seed=11)
    assert len(imgs) == 3
    assert all(i.data.shape == (1, 24, 24) for i in imgs)
    assert not np.array_equal(imgs[0].data, imgs[1].data)

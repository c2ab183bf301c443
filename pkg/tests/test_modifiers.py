import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import erf

from eoqa import modifiers, nr_metrics, synthetic
from eoqa.errors import ParameterError
from eoqa.image import Image, new_image
from eoqa.modifiers import (DEFAULT_GRIDS, DatasetManifest, ModifierKind,
                            ParamGrid, apply_blur, apply_gsd, apply_modifier,
                            apply_rer, apply_sharpness, apply_snr,
                            gaussian_kernel, generate_annotated_dataset,
                            rer_to_sigma)


def test_default_grids_pinned():
    expected = {
        ModifierKind.BLUR: (50, 1.0, 2.5),
        ModifierKind.SHARPNESS: (9, 1.0, 10.0),
        ModifierKind.GSD: (10, 0.30, 0.60),
        ModifierKind.RER: (40, 0.15, 0.55),
        ModifierKind.SNR: (40, 15.0, 30.0),
    }
    for kind, (n, lo, hi) in expected.items():
        grid = DEFAULT_GRIDS[kind]
        assert (grid.n, grid.lo, grid.hi) == (n, lo, hi)


def test_param_grid_values_endpoints():
    grid = ParamGrid(ModifierKind.BLUR, 5, 1.0, 2.5)
    vals = grid.values()
    assert len(vals) == 5
    assert vals[0] == 1.0 and vals[-1] == 2.5
    assert np.allclose(np.diff(vals), 0.375)


def test_param_grid_rejects_bad_ranges():
    with pytest.raises(ParameterError):
        ParamGrid(ModifierKind.BLUR, 1, 1.0, 2.5)
    with pytest.raises(ParameterError):
        ParamGrid(ModifierKind.BLUR, 5, 2.5, 1.0)


@given(st.integers(2, 60), st.floats(0.1, 5.0), st.floats(5.5, 50.0),
       st.data())
def test_param_grid_class_value_roundtrip(n, lo, hi, data):
    grid = ParamGrid(ModifierKind.SNR, n, lo, hi)
    c = data.draw(st.integers(0, n - 1))
    assert grid.value_to_class(grid.class_to_value(c)) == c


def test_value_to_class_picks_nearest_interval():
    grid = ParamGrid(ModifierKind.BLUR, 4, 0.0, 3.0)   # values 0,1,2,3
    assert grid.value_to_class(0.4) == 0
    assert grid.value_to_class(0.6) == 1
    assert grid.value_to_class(2.9) == 3
    with pytest.warns(UserWarning, match="outside grid"):
        assert grid.value_to_class(99.0) == 3   # clamped with a warning


def test_gaussian_kernel_normalized_symmetric():
    k = gaussian_kernel(1.2, 3)
    assert k.shape == (7,)
    assert k.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(k, k[::-1])
    assert np.all(np.diff(k[:4]) > 0)


def test_apply_blur_matches_direct_convolution():
    # brute-force separable convolution with reflected borders
    rng = np.random.default_rng(7)
    img = new_image(rng.random((1, 12, 12)) * 255)
    sigma, radius = 1.4, 3
    out = apply_blur(img, sigma)
    k = gaussian_kernel(sigma, radius)
    # edge-repeating reflection: numpy calls it "symmetric"
    padded = np.pad(img.data[0], radius, mode="symmetric")
    ref = np.zeros((12, 12))
    for i in range(12):
        for j in range(12):
            win = padded[i:i + 7, j:j + 7]
            ref[i, j] = k @ win @ k
    assert np.allclose(out.data[0], ref, atol=1e-10)


def test_apply_blur_validates_sigma():
    img = synthetic.constant(8, 10.0)
    with pytest.raises(ParameterError):
        apply_blur(img, 0.0)


def test_apply_sharpness_identity_and_boost():
    img = synthetic.texture(48, seed=2)
    same = apply_sharpness(img, 1.0)
    assert np.allclose(same.data, img.data)
    boosted = apply_sharpness(img, 4.0)
    assert boosted.data.std() > img.data.std()
    assert boosted.data.min() >= 0.0 and boosted.data.max() <= img.max_value
    with pytest.raises(ParameterError):
        apply_sharpness(img, -1.0)


def test_apply_sharpness_is_residual_amplification():
    rng = np.random.default_rng(1)
    img = new_image(rng.random((1, 16, 16)) * 100 + 50)
    f = 3.0
    out = apply_sharpness(img, f)
    base = apply_blur(img, modifiers.UNSHARP_SIGMA).data
    expected = np.clip(base + f * (img.data - base), 0, img.max_value)
    assert np.allclose(out.data, expected)


def test_apply_gsd_enlarges_and_tags():
    img = Image(synthetic.texture(32, seed=3).data, gsd=0.30)
    out = apply_gsd(img, 0.60)
    assert out.gsd == 0.60
    assert (out.height, out.width) == (64, 64)
    same = apply_gsd(img, 0.30)
    assert np.array_equal(same.data, img.data)
    with pytest.raises(ParameterError):
        apply_gsd(img, 0.20)   # finer than the base is not a degradation


@given(st.floats(0.35, 3.0))
def test_rer_to_sigma_inverts_edge_response(sigma):
    r = float(erf(1.0 / (2.0 * math.sqrt(2.0) * sigma)))
    assert rer_to_sigma(r) == pytest.approx(sigma, rel=1e-9)


def test_apply_rer_hits_target():
    base = 0.55
    phantom = synthetic.edge_phantom(rer_to_sigma(base), side=96)
    out = apply_rer(phantom, 0.35, base_rer=base)
    measured = nr_metrics.rer(nr_metrics.measure_edge_response(out))
    assert measured == pytest.approx(0.35, rel=0.05)


def test_apply_snr_hits_target():
    img = synthetic.gradient(128, 60.0, 200.0, axis="x")
    noisy = apply_snr(img, 20.0, seed=4)
    est = nr_metrics.estimate_snr(noisy)
    assert est.median == pytest.approx(20.0, rel=0.15)
    # deterministic per seed, different across seeds
    again = apply_snr(img, 20.0, seed=4)
    other = apply_snr(img, 20.0, seed=5)
    assert np.array_equal(noisy.data, again.data)
    assert not np.array_equal(noisy.data, other.data)


def test_apply_modifier_dispatch():
    img = synthetic.texture(32, seed=6)
    out = apply_modifier(ModifierKind.BLUR, img, 2.0)
    assert np.allclose(out.data, apply_blur(img, 2.0).data)
    with pytest.raises(ParameterError):
        apply_modifier(ModifierKind.RER, img, 0.9)   # above the base rer


def test_generate_dataset_layout_and_manifest(tmp_path, small_sources):
    grid = ParamGrid(ModifierKind.BLUR, 3, 1.0, 2.5)
    out = str(tmp_path / "ds")
    manifest = generate_annotated_dataset(
        small_sources, ModifierKind.BLUR, grid, side=32, crops_per_value=2,
        seed=9, out_dir=out)
    assert len(manifest.entries) == 4 * 3 * 2
    assert manifest.skipped == []
    classes = {e.class_index for e in manifest.entries}
    assert classes == {0, 1, 2}
    for e in manifest.entries[:6]:
        path = tmp_path / "ds" / e.path
        assert path.exists()
        assert e.value in grid.values()
        assert grid.value_to_class(e.value) == e.class_index
    assert sorted(manifest.sources()) == sorted(n for n, _ in small_sources)


def test_generate_dataset_roundtrip_and_determinism(tmp_path, small_sources):
    grid = ParamGrid(ModifierKind.SNR, 3, 15.0, 30.0)
    a = generate_annotated_dataset(small_sources, ModifierKind.SNR, grid,
                                   32, 2, 11, str(tmp_path / "a"))
    b = generate_annotated_dataset(small_sources, ModifierKind.SNR, grid,
                                   32, 2, 11, str(tmp_path / "b"))
    assert a == b
    path = str(tmp_path / "a" / "manifest.jsonl")
    a.save(path)
    assert DatasetManifest.load(path) == a


def test_generate_dataset_skips_small_sources(tmp_path):
    sources = [("big", synthetic.texture(64, seed=0)),
               ("tiny", synthetic.texture(16, seed=1))]
    grid = ParamGrid(ModifierKind.BLUR, 2, 1.0, 2.5)
    manifest = generate_annotated_dataset(sources, ModifierKind.BLUR, grid,
                                          32, 2, 0, str(tmp_path / "ds"))
    # one skip record per unusable (source, grid value) pair
    assert len(manifest.skipped) == grid.n
    assert all(s["source"] == "tiny" for s in manifest.skipped)
    assert {e.source for e in manifest.entries} == {"big"}

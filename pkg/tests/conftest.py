"""Shared fixtures.

The trained models are expensive (the blur head alone takes a few minutes),
so everything trained lives at session scope and the training recipes are
identical to the ones exercised by the acceptance tests.
"""

import time

import pytest
from hypothesis import settings

from eoqa import modifiers, regressor, sr, synthetic
from eoqa.image import save_image
from eoqa.modifiers import DEFAULT_GRIDS, ModifierKind, ParamGrid

settings.register_profile("det", derandomize=True, max_examples=40)
settings.load_profile("det")

# printed by pytest_terminal_summary after the run; test_acceptance.py appends
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def texture_bank():
    """32 textured sources, side 128: the regressor training corpus."""
    return [(f"tex{i:02d}", synthetic.texture(128, seed=900 + i)) for i in range(32)]


@pytest.fixture(scope="session")
def blur_dataset(tmp_path_factory, texture_bank):
    out = tmp_path_factory.mktemp("blurset")
    grid = ParamGrid(ModifierKind.BLUR, 5, 1.0, 2.5)
    manifest = modifiers.generate_annotated_dataset(
        texture_bank, ModifierKind.BLUR, grid, side=64, crops_per_value=8,
        seed=42, out_dir=str(out))
    return manifest, str(out)


@pytest.fixture(scope="session")
def blur_head(blur_dataset):
    """Blur head trained on the 5-interval grid; returns (model, log, seconds)."""
    manifest, root = blur_dataset
    config = regressor.RegressorConfig(side=64, crops=8, epochs=30,
                                       batch_size=32, lr=1e-1)
    t0 = time.perf_counter()
    model, log = regressor.train(manifest, config, root, split=0.8, seed=1)
    return model, log, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sr_sources():
    """Textured sources for SR training, side 96."""
    return [(f"tex{i:02d}", synthetic.texture(96, seed=500 + i)) for i in range(32)]


@pytest.fixture(scope="session")
def sr_pair(sr_sources, blur_head):
    """Two x2 SR models off the same recipe: plain L1 and quality-steered.

    The low-res inputs are pre-blurred so the reconstruction task leaves the
    steered objective something to trade against.  Returns a dict with both
    (model, log) tuples and the combined wall-clock time.
    """
    head = blur_head[0]
    config = sr.SrTrainConfig(lr_blur_sigma=1.0)
    t0 = time.perf_counter()
    plain = sr.train_tiny_sr(sr_sources, 2, 0.0, config=config, seed=11)
    steered = sr.train_tiny_sr(sr_sources, 2, 0.1, qmr_model=head, kind="l1",
                               config=config, seed=11)
    return {"plain": plain, "steered": steered,
            "seconds": time.perf_counter() - t0}


@pytest.fixture(scope="session")
def small_sources():
    return [(f"s{i}", synthetic.texture(96, seed=100 + i)) for i in range(4)]


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory, small_sources):
    d = tmp_path_factory.mktemp("imgs")
    for name, img in small_sources:
        save_image(img, str(d / f"{name}.png"))
    return str(d)


@pytest.fixture(scope="session")
def tiny_blur_model(tmp_path_factory, small_sources):
    """Fast single-head model for prediction and checkpoint tests."""
    out = tmp_path_factory.mktemp("tinyblur")
    grid = ParamGrid(ModifierKind.BLUR, 3, 1.0, 2.5)
    manifest = modifiers.generate_annotated_dataset(
        small_sources, ModifierKind.BLUR, grid, side=32, crops_per_value=2,
        seed=7, out_dir=str(out))
    config = regressor.RegressorConfig(side=32, crops=2, epochs=3,
                                       batch_size=16, lr=0.03)
    model, log = regressor.train(manifest, config, str(out), seed=5)
    return model


@pytest.fixture(scope="session")
def tiny_multihead(tmp_path_factory, small_sources):
    """Fast five-parameter shared-encoder model for benchmark tests."""
    out = tmp_path_factory.mktemp("tinymh")
    manifests = {}
    for kind in ModifierKind:
        default = DEFAULT_GRIDS[kind]
        grid = ParamGrid(kind, 3, default.lo, default.hi)
        manifests[kind.value] = modifiers.generate_annotated_dataset(
            small_sources, kind, grid, side=32, crops_per_value=2,
            seed=7, out_dir=str(out))
    config = regressor.RegressorConfig(side=32, crops=2, epochs=2, batch_size=16)
    model, _ = regressor.train_multihead(manifests, config, str(out), seed=2)
    return model

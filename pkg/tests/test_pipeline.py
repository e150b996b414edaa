import dataclasses

import numpy as np
import pytest

from conftest import textured
from ogmm_deblur.detail_layer import add_detail_layer
from ogmm_deblur.image_core import EnhanceParams, enhance, load_image
from ogmm_deblur.ogmm import OgmmConfig, run_em
from ogmm_deblur.optical_flow import compute_dense_flow, read_flo
from ogmm_deblur.patching import CoverageError, PatchSpec, corresponding_centers, gather, slice_patches
from ogmm_deblur.pipeline import (
    Diagnostics,
    PipelineConfig,
    deblur,
    em_all_patches,
    parse_report,
    reassemble_patches,
)

FAST = OgmmConfig(gd_iterations=10, em_iterations=2)


@pytest.fixture(scope="module")
def small_pair(synthetic_pair):
    crop = (slice(32, 96), slice(32, 96))
    return synthetic_pair["blurred"][crop], synthetic_pair["noisy"][crop]


@pytest.mark.parametrize("kind", ["constant", "ramp"])
@pytest.mark.parametrize("iters,margin", [(1, 3), (2, 8)])
def test_clean_input_is_nearly_fixed(kind, iters, margin):
    yy, xx = np.mgrid[0:40, 0:40].astype(float)
    img = np.full((40, 40), 99.0) if kind == "constant" else 40 + 2 * xx + 1.5 * yy
    cfg = PipelineConfig(outer_iterations=iters, ogmm=OgmmConfig(omega=0.0, mu=0.0), detail=None)
    out, _ = deblur(img, img, cfg)
    # clamped noisy windows near the border sit off-centre; from t=2 on, the
    # resulting border change also bends the flow within one flow window
    inner = (slice(margin, -margin), slice(margin, -margin))
    assert np.abs(out[inner] - img[inner]).max() <= 1.0


def test_single_iteration_is_em_then_reassembly(small_pair):
    blurred, noisy = small_pair
    cfg = PipelineConfig(outer_iterations=1, ogmm=FAST, detail=None)
    out, report = deblur(blurred, noisy, cfg)

    flow = compute_dense_flow(blurred, noisy, cfg.flow)
    spec = cfg.patch
    centers = slice_patches(blurred.shape, spec)
    X = gather(blurred, centers, spec.s1)
    Y = gather(noisy, corresponding_centers(centers, flow, noisy.shape, spec.s2), spec.s2)
    res = run_em(X, Y, FAST, (3, 3))
    expect = reassemble_patches(blurred.shape, centers, res.centroids, spec.s1)
    np.testing.assert_allclose(out, expect, rtol=0, atol=1e-12)
    assert report.energies[0] == pytest.approx(res.energies[:, -1].sum(), rel=1e-12)


def test_threads_do_not_change_results(small_pair):
    blurred, noisy = small_pair
    flow = compute_dense_flow(blurred, noisy)
    one = em_all_patches(blurred, noisy, flow, PatchSpec(), FAST, threads=1)
    four = em_all_patches(blurred, noisy, flow, PatchSpec(), FAST, threads=4)
    assert len(one[0]) > 2048  # more than one chunk
    for a, b in zip(one, four):
        np.testing.assert_array_equal(a, b)


def test_detail_is_applied_with_final_flow(small_pair):
    blurred, noisy = small_pair
    base = PipelineConfig(outer_iterations=1, ogmm=FAST)
    with_dl, rep = deblur(blurred, noisy, base)
    without, rep0 = deblur(blurred, noisy, dataclasses.replace(base, detail=None))
    np.testing.assert_array_equal(rep.final_flow, rep0.final_flow)
    np.testing.assert_allclose(with_dl, add_detail_layer(without, noisy, rep0.final_flow, base.detail), atol=1e-12)


def test_enhancement_applies_to_noisy_view(small_pair):
    blurred, noisy = small_pair
    p = EnhanceParams(gain=1.2, bias=-5.0, gamma=1.3)
    cfg = PipelineConfig(outer_iterations=1, ogmm=FAST, detail=None)
    a, _ = deblur(blurred, noisy, dataclasses.replace(cfg, enhance=p))
    b, _ = deblur(blurred, enhance(noisy, p), cfg)
    np.testing.assert_array_equal(a, b)


def test_report_and_diagnostics(tmp_path, synthetic_pair):
    crop = (slice(32, 96), slice(32, 96))
    blurred = synthetic_pair["blurred"][crop]
    noisy = synthetic_pair["noisy"][crop]
    gt = synthetic_pair["gt"][crop]
    diag = Diagnostics(intermediate_dir=str(tmp_path / "it"), flow_dir=str(tmp_path / "fl"))
    cfg = PipelineConfig(outer_iterations=3, ogmm=FAST, detail=None, diagnostics=diag)
    out, report = deblur(blurred, noisy, cfg, gt_flow=gt)

    assert [r.t for r in report.iterations] == [1, 2, 3]
    assert all(r.aee is not None and r.aee >= 0 for r in report.iterations)
    assert all(len(r.em_energies) == FAST.em_iterations + 1 for r in report.iterations)
    last = report.iterations[-1]
    np.testing.assert_allclose(load_image(last.image_path), np.clip(np.floor(out + 0.5), 0, 255))
    assert read_flo(last.flow_path).shape == (64, 64, 2)

    path = tmp_path / "report.tsv"
    report.write(path)
    rows = parse_report(path.read_text())
    assert [r["energy"] for r in rows] == report.energies
    assert [r["aee"] for r in rows] == pytest.approx(report.aee)
    assert rows[0]["em_energies"] == report.iterations[0].em_energies


def test_validation():
    img = np.zeros((16, 16))
    with pytest.raises(CoverageError):
        deblur(img, img, PipelineConfig(patch=PatchSpec(3, 5, 4)))
    with pytest.raises(ValueError):
        deblur(img, img, PipelineConfig(outer_iterations=0))
    with pytest.raises(ValueError):
        deblur(img, np.zeros((16, 17)), PipelineConfig(outer_iterations=1))

"""Synthetic study generator: determinism, structure, ranking signal."""

import json

import numpy as np
import pytest

from cte.errors import CTEError, DegenerateStatisticError, ValidationError
from cte.manifest import load_manifest
from cte.npyio import read_npy
from cte.synthlab import generate_study, ladder, run_study


def folder_digest(folder):
    """Byte content of every file under a folder, keyed by relative path."""
    return {
        str(p.relative_to(folder)): p.read_bytes()
        for p in sorted(folder.rglob("*"))
        if p.is_file()
    }


def test_ladder_is_monotone_in_both_knobs():
    params = ladder(8)
    assert len(params) == 8
    widths = [w for w, _ in params]
    amps = [a for _, a in params]
    assert widths == sorted(widths)
    assert amps == sorted(amps)
    assert amps[0] == 0.0
    assert all(a >= 0 for a in amps)


def test_generate_study_structure(tmp_path):
    manifest_path = generate_study(tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=3)
    man = load_manifest(manifest_path)
    assert man.task == "semantic-binary"
    assert man.num_classes == 2
    assert man.n_models == 4 and man.n_images == 8
    assert man.model_ids == ["m0", "m1", "m2", "m3"]
    assert len(man.predictions) == 4 * 8 * 2
    assert len(list((tmp_path / "s" / "images").glob("*.npy"))) == 8
    assert len(list((tmp_path / "s" / "perturbed").glob("*.npy"))) == 8
    assert len(list((tmp_path / "s" / "predictions").glob("*.npy"))) == 64
    assert man.performance is not None and len(man.performance) == 4
    # Built-in ladder: performance strictly decreasing along the params.
    perf = [man.performance[m] for m in man.model_ids]
    assert all(a > b for a, b in zip(perf, perf[1:]))


def test_generate_study_is_byte_identical(tmp_path):
    generate_study(tmp_path / "a", task="semantic", n_models=4, n_images=8, seed=5)
    generate_study(tmp_path / "b", task="semantic", n_models=4, n_images=8, seed=5)
    assert folder_digest(tmp_path / "a") == folder_digest(tmp_path / "b")


def test_different_seeds_differ(tmp_path):
    generate_study(tmp_path / "a", task="semantic", n_models=4, n_images=8, seed=5)
    generate_study(tmp_path / "b", task="semantic", n_models=4, n_images=8, seed=6)
    a = folder_digest(tmp_path / "a")
    b = folder_digest(tmp_path / "b")
    assert set(a) == set(b)
    assert any(a[k] != b[k] for k in a if k.endswith(".npy"))


def test_semantic_predictions_are_probability_maps(tmp_path):
    manifest_path = generate_study(tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=3)
    man = load_manifest(manifest_path)
    bundle = man.load_bundle("m0", "img000", None)
    probs = bundle.prob_map.values
    assert bundle.prob_map.dtype == np.dtype("<f4")
    assert 0.0 < probs.min() and probs.max() < 1.0
    assert np.array_equal(bundle.label_map.values, probs >= 0.5)
    assert 0.0 < bundle.label_map.foreground_fraction() < 1.0


def test_instance_predictions_are_component_maps(tmp_path):
    manifest_path = generate_study(tmp_path / "s", task="instance", n_models=4, n_images=8, seed=3)
    man = load_manifest(manifest_path)
    assert man.task == "instance"
    assert man.num_classes is None
    bundle = man.load_bundle("m0", "img000", "gauss0")
    ids = bundle.label_map.values
    assert ids.dtype == np.uint16
    assert bundle.prob_map is None
    present = np.unique(ids)
    assert present[0] == 0 and len(present) >= 2
    # Connected components are labeled 1..k without gaps.
    assert np.array_equal(present[1:], np.arange(1, len(present)))


def test_scene_images_share_geometry_across_models(tmp_path):
    """Clean inputs are per-image, not per-model: one file per image."""
    manifest_path = generate_study(tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=4)
    man = load_manifest(manifest_path)
    img = read_npy(tmp_path / "s" / "images" / "img000.npy")
    assert img.shape == (64, 64)
    assert img.dtype == np.dtype("<f8")


def test_validation_of_arguments(tmp_path):
    with pytest.raises(ValidationError, match="task"):
        generate_study(tmp_path / "x", task="panoptic")
    with pytest.raises(ValidationError, match="at least 4"):
        generate_study(tmp_path / "x", n_models=2)
    with pytest.raises(ValidationError, match="at least 8"):
        generate_study(tmp_path / "x", n_images=3)
    with pytest.raises(ValidationError, match="entries"):
        generate_study(
            tmp_path / "x", n_models=4, n_images=8, model_params=[(0.8, 0.0)] * 3
        )


def test_identical_models_make_statistics_degenerate(tmp_path):
    """Four copies of the same model tie every score; evaluation refuses.

    Zero noise amplitude makes the per-model noise key irrelevant, so
    all four models emit bit-identical predictions.
    """
    params = [(0.85, 0.0)] * 4
    manifest_path = generate_study(
        tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=3, model_params=params
    )
    man = load_manifest(manifest_path)
    perf = list(man.performance.values())
    assert max(perf) == min(perf)
    with pytest.raises(DegenerateStatisticError):
        run_study(tmp_path / "s")


def test_run_study_semantic(tmp_path):
    generate_study(tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=3)
    report = run_study(tmp_path / "s")
    assert report.n == 4
    assert -1.0 <= report.kendall_tau <= 1.0
    results = tmp_path / "s" / "results"
    for name in ("scores.csv", "ranking.json", "ranking.csv", "report.json", "scatter.svg"):
        assert (results / name).exists()


def test_run_study_instance_uses_ars(tmp_path):
    generate_study(tmp_path / "s", task="instance", n_models=4, n_images=8, seed=3)
    report = run_study(tmp_path / "s")
    payload = json.loads((tmp_path / "s" / "results" / "ranking.json").read_text())
    assert payload["metric"] == "ars"
    assert report.n == 4


def test_run_study_requires_performance(tmp_path):
    generate_study(tmp_path / "s", task="semantic", n_models=4, n_images=8, seed=3)
    doc = json.loads((tmp_path / "s" / "manifest.json").read_text())
    doc["performance"] = None
    (tmp_path / "s" / "manifest.json").write_text(json.dumps(doc))
    with pytest.raises(ValidationError, match="no recorded performance"):
        run_study(tmp_path / "s")

"""Round trip: exported folders must satisfy the cte toolkit end to end.

The toolkit is exercised strictly through its command line, the same way
a user would chain the two packages.
"""

import json
import subprocess

import numpy as np
import pytest
import torch

from cte_adapter.arrayio import read_array, write_array
from cte_adapter.cli import main
from cte_adapter.dropout import spatial_dropout
from cte_adapter.export import _predict
from cte_adapter.models import ModelSpec, build_model
from cte_adapter.rng import derive_key

PERTS = [
    {"id": "g0", "kind": "gauss", "strength_range": [0.02, 0.05], "seed": 3},
    {"id": "do_mid", "kind": "feature-dropout", "strength_range": [0.2, 0.4],
     "placement": "bottleneck", "seed": 4},
]


def model_entry(model_id, seed, performance=None, task="semantic-binary", num_classes=2):
    return {
        "id": model_id, "factory": "cte_adapter.models:tiny_net",
        "params": {"hidden": 8, "num_classes": num_classes},
        "task": task, "num_classes": num_classes, "init_seed": seed,
        "feature_layers": ["enc"], "bottleneck": ["enc"],
        "performance": performance,
    }


def build_workspace(root, models, perts=PERTS, n_images=3):
    images = root / "images"
    images.mkdir()
    gen = np.random.default_rng(6)
    for k in range(n_images):
        write_array(images / f"img{k}.npy", gen.random((16, 16)))
    (root / "models.json").write_text(json.dumps(models))
    (root / "perts.json").write_text(json.dumps(perts))
    return root


def run_export(root, out="folder", extra=()):
    return main([
        "export", "--model", str(root / "models.json"),
        "--images", str(root / "images"),
        "--perturbations", str(root / "perts.json"),
        "--out", str(root / out), *extra,
    ])


def cte_pipeline(manifest, out, extra=()):
    return subprocess.run(
        ["cte", "pipeline", "--manifest", str(manifest), "--out", str(out), *extra],
        capture_output=True, text=True,
    )


def test_binary_export_passes_toolkit_validation_and_pipeline(tmp_path):
    models = [model_entry(f"net{k}", seed=k, performance=0.9 - 0.1 * k) for k in range(3)]
    build_workspace(tmp_path, models)
    assert run_export(tmp_path) == 0
    folder = tmp_path / "folder"
    assert (folder / "manifest.json").exists()
    # 3 models x 3 images x (ref + 2 perturbations)
    assert len(list(folder.glob("*.npy"))) == 27

    proc = cte_pipeline(folder / "manifest.json", tmp_path / "results")
    assert proc.returncode == 0, proc.stderr
    ranking = json.loads((tmp_path / "results" / "ranking.json").read_text())
    assert [m["model"] for m in ranking["models"]]
    # model specs carried performance, so the toolkit correlates too
    assert (tmp_path / "results" / "report.json").exists()


def test_zero_rate_dropout_reproduces_reference_bit_exactly(tmp_path):
    """DO(0) is exact identity through the predict-and-serialize path.

    The spec grammar keeps rate ranges strictly positive, so the zero
    rate can only arise as the operator's limiting case; it must be a
    true no-op, not a multiply by 1.
    """
    spec = ModelSpec.from_dict(model_entry("net0", seed=0))
    model = build_model(spec, tmp_path)
    gen = np.random.default_rng(6)
    x = torch.from_numpy(gen.random((16, 16)).astype(np.float32))[None, None]
    ref = _predict(model, x, spec, "img0")
    key = derive_key(5, "dropout", "net0", "img0")
    with spatial_dropout(model, ["enc"], p_d=0.0, key=key):
        null = _predict(model, x, spec, "img0")
    with spatial_dropout(model, ["enc"], p_d=0.3, key=key):
        mid = _predict(model, x, spec, "img0")
    write_array(tmp_path / "ref.npy", ref)
    write_array(tmp_path / "null.npy", null)
    write_array(tmp_path / "mid.npy", mid)
    assert (tmp_path / "null.npy").read_bytes() == (tmp_path / "ref.npy").read_bytes()
    assert (tmp_path / "mid.npy").read_bytes() != (tmp_path / "ref.npy").read_bytes()


def test_export_is_deterministic(tmp_path):
    models = [model_entry("net0", seed=0), model_entry("net1", seed=1)]
    build_workspace(tmp_path, models)
    assert run_export(tmp_path, out="a") == 0
    assert run_export(tmp_path, out="b") == 0
    a, b = tmp_path / "a", tmp_path / "b"
    names = sorted(p.name for p in a.glob("*.npy"))
    assert names == sorted(p.name for p in b.glob("*.npy"))
    for name in names + ["manifest.json"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_multiclass_export_supports_soft_scoring(tmp_path):
    models = [
        model_entry(f"net{k}", seed=k, task="semantic-multiclass", num_classes=3)
        for k in range(2)
    ]
    build_workspace(tmp_path, models)
    assert run_export(tmp_path) == 0
    folder = tmp_path / "folder"
    probs = read_array(folder / "net0__img0__ref.npy")
    assert probs.shape == (3, 16, 16) and probs.dtype == np.float32
    np.testing.assert_allclose(probs.sum(axis=0), 1.0, atol=1e-5)

    proc = cte_pipeline(folder / "manifest.json", tmp_path / "results",
                        extra=("--metric", "ei"))
    assert proc.returncode == 0, proc.stderr


def test_dropout_only_export_needs_no_toolkit_binary(tmp_path):
    models = [model_entry("net0", seed=0)]
    dropout_only = [PERTS[1]]
    build_workspace(tmp_path, models, perts=dropout_only)
    code = run_export(tmp_path, extra=("--cte-bin", "/definitely/not/here"))
    assert code == 0
    assert not (tmp_path / "folder" / "inputs").exists()


def test_missing_toolkit_binary_fails_cleanly(tmp_path, capsys):
    models = [model_entry("net0", seed=0)]
    build_workspace(tmp_path, models)  # includes an input-space spec
    code = run_export(tmp_path, extra=("--cte-bin", "/definitely/not/here"))
    assert code == 3
    assert "cannot run" in capsys.readouterr().err


def test_unresolvable_placement_lists_candidates(tmp_path, capsys):
    entry = model_entry("net0", seed=0)
    entry["bottleneck"] = ["trunk"]
    build_workspace(tmp_path, [entry])
    code = run_export(tmp_path)
    assert code == 3
    err = capsys.readouterr().err
    assert "trunk" in err and "enc" in err and "head" in err


def test_bad_perturbation_specs_rejected(tmp_path, capsys):
    models = [model_entry("net0", seed=0)]
    bad = [{"id": "do", "kind": "feature-dropout", "strength_range": [0.5, 1.0],
            "placement": "bottleneck"}]
    build_workspace(tmp_path, models, perts=bad)
    assert run_export(tmp_path) == 3
    assert "(0, 1)" in capsys.readouterr().err

    (tmp_path / "perts.json").write_text(json.dumps(
        [{"id": "do", "kind": "feature-dropout", "strength_range": [0.1, 0.2]}]
    ))
    assert run_export(tmp_path) == 3
    assert "placement" in capsys.readouterr().err


def test_images_dir_must_hold_npy_files(tmp_path, capsys):
    models = [model_entry("net0", seed=0)]
    build_workspace(tmp_path, models, n_images=0)
    assert run_export(tmp_path) == 3
    assert "no .npy images" in capsys.readouterr().err

"""End-to-end CLI behaviour: subcommand chains and exit codes."""

import json

import numpy as np
import pytest

from cte.cli import main
from cte.npyio import write_npy

from _folders import instance_folder, semantic_folder


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert capsys.readouterr().out.startswith("cte ")


def test_missing_subcommand_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2  # argparse usage error, not our I/O code


# ---- stage-by-stage chain ----


def test_score_rank_evaluate_chain(tmp_path, capsys):
    (tmp_path / "exp").mkdir()
    manifest = semantic_folder(tmp_path / "exp")

    scores_dir = tmp_path / "scores"
    code = main(["score", "--manifest", str(manifest), "--metric", "nhd",
                 "--out", str(scores_dir)])
    assert code == 0
    assert "wrote 6 scores" in capsys.readouterr().out
    assert (scores_dir / "scores.csv").exists()

    rank_dir = tmp_path / "rank"
    code = main(["rank", "--scores", str(scores_dir / "scores.csv"),
                 "--out", str(rank_dir), "--dataset-id", "unit"])
    assert code == 0
    assert "ranked 3 models" in capsys.readouterr().out
    ranking = json.loads((rank_dir / "ranking.json").read_text())
    assert ranking["dataset_id"] == "unit"
    assert len(ranking["models"]) == 3

    perf_csv = tmp_path / "perf.csv"
    perf_csv.write_text("model,performance\nm0,0.9\nm1,0.8\nm2,0.7\n")
    eval_dir = tmp_path / "eval"
    code = main(["evaluate", "--ranking", str(rank_dir / "ranking.csv"),
                 "--performance", str(perf_csv), "--out", str(eval_dir)])
    assert code == 0
    out = capsys.readouterr().out
    assert "n=3" in out and "tau=" in out
    report = json.loads((eval_dir / "report.json").read_text())
    assert report["kind"] == "report"
    assert (eval_dir / "scatter.svg").exists()


def test_perturb_subcommand(tmp_path, capsys):
    images = tmp_path / "images"
    images.mkdir()
    gen = np.random.default_rng(5)
    for name in ("img0", "img1"):
        write_npy(images / f"{name}.npy", gen.random((12, 12)))
    specs = [
        {"id": "g0", "kind": "gauss", "strength_range": [0.01, 0.02], "seed": 1},
        {"id": "b0", "kind": "brightness", "strength_range": [0.05, 0.1], "seed": 2},
        {"id": "fd", "kind": "feature-dropout", "strength_range": [0.1, 0.2],
         "placement": "bottleneck", "seed": 3},
    ]
    specs_path = tmp_path / "specs.json"
    specs_path.write_text(json.dumps(specs))

    out = tmp_path / "pert"
    code = main(["perturb", "--images", str(images), "--specs", str(specs_path),
                 "--out", str(out)])
    assert code == 0
    assert "wrote 4 perturbed arrays" in capsys.readouterr().out
    assert sorted(p.name for p in out.glob("*.npy")) == [
        "img0__b0.npy", "img0__g0.npy", "img1__b0.npy", "img1__g0.npy",
    ]
    provenance = json.loads((out / "provenance.json").read_text())
    skipped = [r for r in provenance["rows"] if "skipped" in r]
    assert len(skipped) == 2 and all(r["perturbation"] == "fd" for r in skipped)

    before = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["perturb", "--images", str(images), "--specs", str(specs_path),
                 "--out", str(out)]) == 0
    capsys.readouterr()
    assert {p.name: p.read_bytes() for p in out.iterdir()} == before


def test_synth_subcommand(tmp_path, capsys):
    out = tmp_path / "study"
    code = main(["synth", "--task", "semantic", "--models", "4", "--images", "8",
                 "--seed", "7", "--out", str(out)])
    assert code == 0
    assert "manifest" in capsys.readouterr().out
    assert (out / "manifest.json").exists()


# ---- one-shot pipeline ----


def test_pipeline_auto_metric(tmp_path, capsys):
    (tmp_path / "sem").mkdir()
    manifest = semantic_folder(tmp_path / "sem")
    out = tmp_path / "out"
    assert main(["pipeline", "--manifest", str(manifest), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "ranking_json:" in stdout and "report:" in stdout
    assert json.loads((out / "ranking.json").read_text())["metric"] == "nhd"

    (tmp_path / "inst").mkdir()
    manifest = instance_folder(tmp_path / "inst")
    out2 = tmp_path / "out2"
    assert main(["pipeline", "--manifest", str(manifest), "--out", str(out2)]) == 0
    capsys.readouterr()
    assert json.loads((out2 / "ranking.json").read_text())["metric"] == "ars"


def test_pipeline_without_performance_skips_report(tmp_path, capsys):
    manifest = semantic_folder(tmp_path, with_performance=False)
    out = tmp_path / "out"
    assert main(["pipeline", "--manifest", str(manifest), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "report" not in stdout
    assert not (out / "report.json").exists()


def test_pipeline_reruns_byte_identical(tmp_path, capsys):
    manifest = semantic_folder(tmp_path)
    out = tmp_path / "out"
    assert main(["pipeline", "--manifest", str(manifest), "--out", str(out)]) == 0
    stable = ["scores.csv", "ranking.json", "ranking.csv", "report.json", "scatter.svg"]
    first = {name: (out / name).read_bytes() for name in stable}
    assert main(["pipeline", "--manifest", str(manifest), "--out", str(out)]) == 0
    capsys.readouterr()
    assert {name: (out / name).read_bytes() for name in stable} == first


# ---- exit codes ----


def test_missing_manifest_exits_2(tmp_path, capsys):
    code = main(["score", "--manifest", str(tmp_path / "nope.json"),
                 "--metric", "nhd", "--out", str(tmp_path / "o")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_dangling_prediction_file_exits_2(tmp_path, capsys):
    manifest = semantic_folder(tmp_path)
    (tmp_path / "m0__i0__ref.npy").unlink()
    code = main(["pipeline", "--manifest", str(manifest), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "m0__i0__ref.npy" in capsys.readouterr().err


def test_metric_task_mismatch_exits_3(tmp_path, capsys):
    manifest = semantic_folder(tmp_path)
    code = main(["score", "--manifest", str(manifest), "--metric", "ars",
                 "--out", str(tmp_path / "o")])
    assert code == 3
    assert "instance" in capsys.readouterr().err


def test_malformed_manifest_exits_3(tmp_path, capsys):
    bad = tmp_path / "manifest.json"
    bad.write_text("{not json")
    code = main(["pipeline", "--manifest", str(bad), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "error:" in capsys.readouterr().err


def test_degenerate_reference_exits_4(tmp_path, capsys):
    manifest = instance_folder(tmp_path, empty_ref="m0")
    code = main(["score", "--manifest", str(manifest), "--metric", "ars",
                 "--out", str(tmp_path / "o")])
    assert code == 4
    assert "error:" in capsys.readouterr().err


def test_identical_scores_make_evaluate_exit_4(tmp_path, capsys):
    ranking_csv = tmp_path / "ranking.csv"
    ranking_csv.write_text(
        "rank,model,cte,n_images\n1,m0,0.5,2\n2,m1,0.5,2\n3,m2,0.5,2\n"
    )
    perf = tmp_path / "perf.csv"
    perf.write_text("model,performance\nm0,0.9\nm1,0.8\nm2,0.7\n")
    code = main(["evaluate", "--ranking", str(ranking_csv), "--performance",
                 str(perf), "--out", str(tmp_path / "o")])
    assert code == 4
    assert "tied in first vector" in capsys.readouterr().err


def test_empty_image_folder_exits_3(tmp_path, capsys):
    images = tmp_path / "images"
    images.mkdir()
    specs = tmp_path / "specs.json"
    specs.write_text('[{"id": "g0", "kind": "gauss", "strength_range": [0.01, 0.02]}]')
    code = main(["perturb", "--images", str(images), "--specs", str(specs),
                 "--out", str(tmp_path / "o")])
    assert code == 3
    assert "no .npy images" in capsys.readouterr().err

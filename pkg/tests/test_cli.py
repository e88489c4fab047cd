"""End-to-end CLI tests over temporary files."""

import csv
import json

import numpy as np
import pytest

from knnim import SimulationModel, cluster_units, generate_realization
from knnim.cli import main


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.fixture
def toy(tmp_path):
    e = write(
        tmp_path / "edges.csv",
        "i,j,d\n1,2,1.0\n1,3,2.0\n2,1,0.5\n2,3,3.0\n3,1,1.5\n3,2,0.2\n",
    )
    y = write(tmp_path / "y.csv", "unit,y\n1,0.5\n2,-1.0\n3,2.25\n")
    t = write(tmp_path / "w.csv", "unit,w\n1,1\n2,0\n3,1\n")
    return e, y, t


@pytest.fixture
def synthetic(tmp_path):
    """A 64-unit synthetic dataset with cluster-coherent treatment."""
    model = SimulationModel.from_catalog(9, n=64)
    rz = generate_realization(model, seed=11)
    clustering = cluster_units(rz.graph, size=4)
    w = np.zeros(64, dtype=np.int8)
    for cid in range(clustering.n_clusters):
        if cid % 2 == 0:
            w[clustering.members(cid)] = 1
    y = rz.potential_outcomes(w)
    edge_lines = ["i,j,d"]
    for i in range(64):
        for j in range(64):
            if i != j:
                edge_lines.append(f"{i + 1},{j + 1},{float(rz.graph.dist[i, j])!r}")
    e = write(tmp_path / "s_edges.csv", "\n".join(edge_lines) + "\n")
    yp = write(
        tmp_path / "s_y.csv",
        "unit,y\n" + "\n".join(f"{i + 1},{float(y[i])!r}" for i in range(64)) + "\n",
    )
    tp = write(
        tmp_path / "s_w.csv",
        "unit,w\n" + "\n".join(f"{i + 1},{int(w[i])}" for i in range(64)) + "\n",
    )
    return e, yp, tp


class TestFocals:
    def test_writes_csv_and_summary(self, toy, tmp_path, capsys):
        e, _, _ = toy
        out = tmp_path / "focals.csv"
        code = main(
            ["focals", "--graph", e, "--k", "1", "--seed", "3", "--out", str(out)]
        )
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["unit"] for r in rows] == ["1", "2", "3"]
        assert set(r["is_focal"] for r in rows) <= {"0", "1"}
        summary = json.loads(capsys.readouterr().out)
        assert summary["schema_version"] == 1
        assert summary["n"] == 3
        assert summary["n_focal"] == sum(int(r["is_focal"]) for r in rows)

    def test_seed_is_mandatory(self, toy):
        e, _, _ = toy
        with pytest.raises(SystemExit) as err:
            main(["focals", "--graph", e, "--k", "1"])
        assert err.value.code == 2

    def test_random_half_method(self, toy, capsys):
        e, _, _ = toy
        code = main(
            ["focals", "--graph", e, "--k", "1", "--seed", "0",
             "--method", "random_half"]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().err)
        assert summary["method"] == "random_half"
        assert summary["n_focal"] == 1


class TestTest:
    def test_report_json(self, synthetic, tmp_path, capsys):
        e, y, t = synthetic
        out = tmp_path / "report.json"
        code = main(
            ["test", "--graph", e, "--outcomes", y, "--treatment", t,
             "--k", "3", "--stat", "score", "--randomizations", "200",
             "--seed", "5", "--out", str(out)]
        )
        assert code == 0
        report = json.loads(out.read_text())
        assert report["schema_version"] == 1
        assert report["statistic"] == "score"
        assert 0 < report["p_value"] <= 1
        assert report["n_randomizations"] == 200
        assert report["focal_method"] == "two_net"

    def test_same_seed_reproduces_report(self, synthetic, capsys):
        e, y, t = synthetic
        args = ["test", "--graph", e, "--outcomes", y, "--treatment", t,
                "--k", "3", "--stat", "knn", "--randomizations", "100",
                "--seed", "9"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first

    def test_bernoulli_scheme_flag(self, synthetic, capsys):
        e, y, t = synthetic
        code = main(
            ["test", "--graph", e, "--outcomes", y, "--treatment", t,
             "--k", "3", "--stat", "elc", "--randomizations", "100",
             "--seed", "2", "--scheme", "bernoulli:0.5"]
        )
        assert code == 0
        assert 0 < json.loads(capsys.readouterr().out)["p_value"] <= 1

    def test_bad_scheme_is_input_error(self, synthetic, capsys):
        e, y, t = synthetic
        code = main(
            ["test", "--graph", e, "--outcomes", y, "--treatment", t,
             "--k", "3", "--stat", "elc", "--seed", "2",
             "--scheme", "jackknife"]
        )
        assert code == 2


class TestTwoStage:
    def test_result_json(self, synthetic, capsys):
        e, y, t = synthetic
        code = main(
            ["two-stage", "--graph", e, "--outcomes", y, "--treatment", t,
             "--k", "3", "--seed", "7"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["schema_version"] == 1
        assert payload["t_exp"] >= 0
        assert payload["conservative_threshold"] == pytest.approx(4.4721, abs=1e-3)
        assert payload["asymptotic_threshold"] == pytest.approx(1.96, abs=1e-2)
        assert payload["n_mixed_clusters_dropped"] == 0


class TestExposuresAndRecommendK:
    def test_exposures_json(self, synthetic, capsys):
        e, _, t = synthetic
        code = main(
            ["exposures", "--graph", e, "--treatment", t, "--k", "2"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["schema_version"] == 1
        assert payload["n_eligible"] == 64
        assert len(payload["cells"]) == 8

    def test_exposures_csv_and_figure(self, synthetic, tmp_path):
        e, _, t = synthetic
        out = tmp_path / "exposures.csv"
        fig = tmp_path / "exposures.png"
        code = main(
            ["exposures", "--graph", e, "--treatment", t, "--k", "2",
             "--format", "csv", "--out", str(out), "--figure", str(fig)]
        )
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 8
        assert sum(int(r["count"]) for r in rows) == 64
        assert fig.exists() and fig.stat().st_size > 0

    def test_recommend_k(self, synthetic, capsys):
        e, _, t = synthetic
        code = main(
            ["recommend-k", "--graph", e, "--treatment", t, "--k-max", "3",
             "--threshold", "2"]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["schema_version"] == 1
        assert set(payload["min_cell_count_per_k"]) == {"1", "2", "3"}
        assert payload["recommended_k"] in (None, 1, 2, 3)


class TestSimulate:
    def test_writes_table_report_and_figures(self, tmp_path, capsys):
        out = tmp_path / "table.csv"
        code = main(
            ["simulate", "--models", "1", "--n", "48", "--realizations", "3",
             "--randomizations", "30", "--assignments", "20", "--seed", "1",
             "--out", str(out)]
        )
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert {r["statistic"] for r in rows} == {
            "pearson", "elc", "score", "htn", "knn", "cons", "asymp"
        }
        report = json.loads(out.with_suffix(".json").read_text())
        assert report["schema_version"] == 1
        assert report["n"] == 48
        for suffix in ("_power.png", "_pvalues.png"):
            png = out.with_name(out.stem + suffix)
            assert png.exists() and png.stat().st_size > 0
        written = json.loads(capsys.readouterr().out)["written"]
        assert len(written) == 4

    def test_no_figures_flag(self, tmp_path, capsys):
        out = tmp_path / "t2.csv"
        code = main(
            ["simulate", "--models", "1", "--n", "48", "--realizations", "2",
             "--randomizations", "20", "--seed", "2", "--out", str(out),
             "--no-two-stage", "--no-figures"]
        )
        assert code == 0
        assert not out.with_name("t2_power.png").exists()

    def test_model_range_parsing_rejects_out_of_catalog(self, tmp_path):
        code = main(
            ["simulate", "--models", "1-20", "--seed", "0",
             "--out", str(tmp_path / "x.csv")]
        )
        assert code == 2


class TestExitCodes:
    def test_duplicate_edge_is_input_error(self, tmp_path):
        e = write(tmp_path / "edges.csv", "i,j,d\n1,2,1.0\n1,2,2.0\n2,1,1.0\n")
        code = main(["focals", "--graph", e, "--k", "1", "--seed", "0"])
        assert code == 2

    def test_k_too_large_is_precondition_error(self, toy):
        e, _, _ = toy
        code = main(["focals", "--graph", e, "--k", "5", "--seed", "0"])
        assert code == 3

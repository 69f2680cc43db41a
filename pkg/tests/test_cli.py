"""
tests/test_cli.py

grdpg コマンドの終了コードとJSONエンベロープのテスト
"""
import json

import numpy as np
import pandas as pd
import pytest

import app.commands.fit as fit_command
from app.data.presets import CAMPUS
from app.main import EXIT_DEGENERATE, EXIT_ERROR, EXIT_OK, main
from app.models import DegenerateFit
from app.services.graph_io import write_edge_list
from app.services.model_core import expand_sbm
from app.services.simulate import sample_graph


@pytest.fixture
def simulated(tmp_path, capsys):
    """例2から n=300 のグラフを生成してパスの接頭辞を返す"""
    prefix = tmp_path / "ex2"
    code = main(["simulate", "--preset", "example2", "--n", "300", "--seed", "3",
                 "--out-prefix", str(prefix)])
    assert code == EXIT_OK
    capsys.readouterr()
    return prefix


def _envelope(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestSimulate:
    """simulate サブコマンドのテスト"""

    def test_writes_files(self, tmp_path, capsys):
        prefix = tmp_path / "out" / "ex2"
        code = main(["simulate", "--preset", "example2", "--n", "200", "--out-prefix", str(prefix)])
        assert code == EXIT_OK
        envelope = _envelope(capsys)
        assert envelope["success"] is True
        assert envelope["data"]["n"] == 200
        assert envelope["data"]["ktilde"] == 4
        truth = pd.read_csv(envelope["data"]["truth_path"], sep="\t")
        assert list(truth.columns) == ["node_id", "tau", "xi"]
        covariates = pd.read_csv(envelope["data"]["covariates_path"], sep="\t")
        assert list(covariates.columns) == ["node_id", "z1"]

    def test_unknown_preset(self, tmp_path, capsys):
        code = main(["simulate", "--preset", "example9", "--n", "200",
                     "--out-prefix", str(tmp_path / "x")])
        assert code == EXIT_ERROR
        envelope = _envelope(capsys)
        assert envelope["success"] is False
        assert envelope["error"]["code"] == "CONFIG_ERROR"


class TestFit:
    """fit サブコマンドのテスト"""

    def test_success(self, simulated, capsys):
        code = main([
            "fit", "--edges", f"{simulated}.edges",
            "--covariates-file", f"{simulated}.covariates.tsv", "--covariate", "z1",
            "--k", "2", "--truth", f"{simulated}.truth.tsv",
        ])
        assert code == EXIT_OK
        data = _envelope(capsys)["data"]
        assert data["ktilde"] == 4
        assert data["covariates"] == ["z1"]
        assert {b["variant"] for b in data["betas"]} == {"simple_mean", "weighted_mean"}
        assert 0.0 <= data["ari"] <= 1.0
        assert len(data["latent_positions"]) == 2

    def test_report_file(self, simulated, tmp_path, capsys):
        report = tmp_path / "report.json"
        code = main([
            "fit", "--edges", f"{simulated}.edges",
            "--covariates-file", f"{simulated}.covariates.tsv", "--covariate", "z1",
            "--k", "2", "--estimator", "simple_mean", "--output", str(report),
        ])
        assert code == EXIT_OK
        assert capsys.readouterr().out == ""
        data = json.loads(report.read_text(encoding="utf-8"))["data"]
        assert [b["variant"] for b in data["betas"]] == ["simple_mean"]

    def test_missing_k(self, simulated, capsys):
        """必須フラグの欠落は終了コード1"""
        assert main(["fit", "--edges", f"{simulated}.edges"]) == EXIT_ERROR

    def test_parse_error(self, tmp_path, capsys):
        path = tmp_path / "bad.edges"
        path.write_text("1 2\n2 x\n", encoding="utf-8")
        code = main(["fit", "--edges", str(path), "--k", "2"])
        assert code == EXIT_ERROR
        error = _envelope(capsys)["error"]
        assert error["code"] == "PARSE_ERROR"
        assert error["message"].startswith("[load]")

    def test_covariate_without_file(self, simulated, capsys):
        code = main(["fit", "--edges", f"{simulated}.edges", "--covariate", "z1", "--k", "2"])
        assert code == EXIT_ERROR
        assert _envelope(capsys)["error"]["code"] == "CONFIG_ERROR"

    def test_degenerate_fit(self, simulated, capsys, monkeypatch):
        """DegenerateFit は終了コード2"""
        def degenerate(*args, **kwargs):
            raise DegenerateFit("cluster stage: expanded block 3 of 4 is empty")

        monkeypatch.setattr(fit_command, "fit", degenerate)
        code = main([
            "fit", "--edges", f"{simulated}.edges",
            "--covariates-file", f"{simulated}.covariates.tsv", "--covariate", "z1", "--k", "2",
        ])
        assert code == EXIT_DEGENERATE
        error = _envelope(capsys)["error"]
        assert error["code"] == "DEGENERATE_FIT"
        assert error["message"] == "[fit] cluster stage: expanded block 3 of 4 is empty"


class TestEmbed:
    """embed サブコマンドのテスト"""

    def test_writes_embedding(self, simulated, tmp_path, capsys):
        out = tmp_path / "emb.tsv"
        code = main(["embed", "--edges", f"{simulated}.edges", "--d-hat", "3",
                     "--output", str(out)])
        assert code == EXIT_OK
        data = _envelope(capsys)["data"]
        assert data["d_hat"] == 3
        table = pd.read_csv(out, sep="\t")
        assert list(table.columns) == ["node_id", "y1", "y2", "y3"]
        assert len(table) == data["n"]


class TestMonteCarlo:
    """montecarlo サブコマンドのテスト"""

    def test_small_design(self, tmp_path, capsys):
        out = tmp_path / "summary.tsv"
        code = main(["montecarlo", "--preset", "design1", "--n", "300", "--replicates", "2",
                     "--output", str(out)])
        assert code == EXIT_OK
        summary = _envelope(capsys)["data"]
        assert summary["design"] == "design1"
        table = pd.read_csv(out, sep="\t")
        assert set(table["n"]) == {300}
        assert set(table["estimator"]) <= {"simple_mean", "weighted_mean"}


@pytest.mark.slow
class TestCampusWorkflow:
    """3共変量の大学SNS風データ: 2値化 → 欠測除去 → 最大連結成分 → 正則化 → fit"""

    def test_three_positive_betas(self, tmp_path, capsys):
        sample = sample_graph(CAMPUS, 5000, seed=21)
        rng = np.random.default_rng(21)
        z = sample.z
        table = pd.DataFrame({
            "node_id": sample.graph.node_ids,
            "female": z[:, 0],
            "year": np.where(z[:, 1] == 1, 2008, 2007),
            "dorm": z[:, 2].astype(object),
        })
        table.loc[rng.random(len(table)) < 0.03, "year"] = 0
        table.loc[rng.random(len(table)) < 0.02, "dorm"] = None
        edges = tmp_path / "campus.edges"
        covariates = tmp_path / "campus.tsv"
        write_edge_list(sample.graph, edges)
        table.to_csv(covariates, sep="\t", index=False, na_rep="")
        report = tmp_path / "report.json"

        code = main([
            "fit", "--edges", str(edges), "--covariates-file", str(covariates),
            "--covariate", "female", "--covariate", "year", "--covariate", "dorm",
            "--binarize", "year=value==2008", "--missing", "0",
            "--lcc", "--regularize", "--k", "2", "--estimator", "simple_mean",
            "--d-hat", str(expand_sbm(CAMPUS).rank), "--output", str(report),
        ])
        assert code == EXIT_OK
        data = json.loads(report.read_text(encoding="utf-8"))["data"]
        assert data["ktilde"] == 16
        assert data["n"] < 5000
        assert [b["covariate"] for b in data["betas"]] == ["female", "year", "dorm"]
        assert all(b["value"] > 0 for b in data["betas"])

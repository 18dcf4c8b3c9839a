import json
import subprocess
import sys

import pytest

from kgcep.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("gen", "--shape", "ontology", "--subjects", 80, "--partners", 16, "--labels", "4,10,20",
               "--seed", 1, "--out", root / "d", "--quiet") == 0
    assert run("train", "--kg", root / "d", "--k", 8, "--epochs", 5, "--out", root / "m.bin",
               "--log", root / "log.json", "--quiet") == 0
    return root


class TestCommands:
    def test_gen_outputs(self, workspace):
        names = {p.name for p in (workspace / "d").iterdir()}
        assert {"lrn.tsv", "vld.tsv", "tun.tsv", "tst.tsv", "manifest.json", "labels_inPGroup.tsv"} <= names

    def test_gen_reproducible(self, tmp_path):
        for sub in ("a", "b"):
            assert run("gen", "--shape", "ehr", "--seed", 3, "--out", tmp_path / sub, "--quiet") == 0
        for f in ("lrn.tsv", "tst.tsv", "manifest.json", "labels_ageStage.tsv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_train_reproducible(self, workspace, tmp_path):
        assert run("train", "--kg", workspace / "d", "--k", 8, "--epochs", 5, "--out", tmp_path / "m.bin",
                   "--quiet") == 0
        assert (tmp_path / "m.bin").read_bytes() == (workspace / "m.bin").read_bytes()
        assert json.loads((workspace / "log.json").read_text())["epochs"][-1]["epoch"] == 5

    def test_eval_lp_json_to_stdout(self, workspace, capsys):
        assert run("eval-lp", "--model", workspace / "m.bin", "--kg", workspace / "d", "--split", "TST",
                   "--hits", "1,10") == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report["hits"]) == {"1", "10"} and report["mrank"] >= 1

    def test_eval_cep(self, workspace, capsys, tmp_path):
        assert run("eval-cep", "--model", workspace / "m.bin", "--kg", workspace / "d", "--relation", "inPGroup",
                   "--multiplier", 2, "--histogram", tmp_path / "h.csv", "--quiet") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["K"] == 8 and 0 <= report["aMean"] <= 1
        assert (tmp_path / "h.csv").read_text().startswith("cluster,")

    def test_split(self, tmp_path):
        src = tmp_path / "t.tsv"
        src.write_text("".join(f"p{i}:P\tin\tg{i % 3}:G\n" for i in range(40)))
        assert run("split", "--input", src, "--seed", 2, "--out", tmp_path / "s", "--quiet") == 0
        manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
        assert sum(manifest["counts"].values()) == 40 and manifest["seed"] == 2

    def test_split_with_types_sidecar(self, tmp_path):
        (tmp_path / "types.tsv").write_text("a\tP\nb\tP\nc\tP\nd\tP\nx\tG\n")
        (tmp_path / "t.tsv").write_text("a\tin\tx\nb\tin\tx\nc\tin\tx\nd\tin\tx\n")
        assert run("split", "--input", tmp_path / "t.tsv", "--types", tmp_path / "types.tsv",
                   "--out", tmp_path / "s", "--quiet") == 0

    def test_sweep_and_correlate(self, workspace, tmp_path, capsys):
        cfg = tmp_path / "s.toml"
        cfg.write_text(f'[dataset]\npath = "{workspace / "d"}"\nname = "onto"\n'
                       '[grid]\nk = [4, 8]\ngamma = [1.0, 2.0]\n[training]\nmax_epochs = 3\n'
                       '[cep]\ntargets = ["inPGroup"]\nn_init = 1\n')
        assert run("sweep", "--config", cfg, "--out", tmp_path / "o", "--quiet") == 0
        paths = json.loads(capsys.readouterr().out)
        assert run("correlate", "--sweep", paths["sweep"], "--dataset", "onto") == 0
        out = capsys.readouterr().out
        assert out == open(paths["correlations"]).read()


class TestExitCodes:
    def test_divergence_exit_3(self, workspace, capsys):
        assert run("train", "--kg", workspace / "d", "--lr", "1e9", "--epochs", 3,
                   "--out", workspace / "bad.bin") == 3
        assert "diverged" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["train", "--kg", "x", "--bogus"],
                                      ["train", "--kg", "x", "--k", "many"], ["gen", "--shape", "graph"],
                                      ["gen", "--quiet"]])
    def test_usage_exit_1(self, argv, capsys):
        assert run(*argv) == 1
        assert "usage" in capsys.readouterr().err

    def test_data_error_exit_2(self, workspace, tmp_path, capsys):
        assert run("eval-lp", "--model", tmp_path / "none.bin", "--kg", workspace / "d") == 2
        bad = tmp_path / "bad.tsv"
        bad.write_text("a:P\tr\n")
        assert run("split", "--input", bad, "--out", tmp_path / "s") == 2
        assert "line 1" in capsys.readouterr().err
        assert run("eval-cep", "--model", workspace / "m.bin", "--kg", workspace / "d",
                   "--relation", "nope") == 2

    def test_help_lists_defaults(self, capsys):
        assert run("train", "--help") == 0
        text = capsys.readouterr().out
        for flag in ("--seed", "--out", "--quiet", "--threads", "--lr", "--gamma", "--k"):
            assert flag in text
        assert "(default: 0.01)" in text

    def test_threads_env(self, monkeypatch, capsys):
        monkeypatch.setenv("KGCEP_THREADS", "3")
        run("sweep", "--help")
        assert "now 3" in capsys.readouterr().out


def test_console_entry_point(workspace):
    proc = subprocess.run([sys.executable, "-m", "kgcep.cli", "eval-lp", "--model", str(workspace / "m.bin"),
                           "--kg", str(workspace / "d")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["count"] > 0
    assert proc.stderr == "" or "INFO" in proc.stderr

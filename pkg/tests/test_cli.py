import json

import pytest

from catscreen import bench, cli
from catscreen.config import ConfigError, apply_overrides, build_config, load_config
from catscreen.data import load_dataset, write_dataset

from conftest import composition_dataset

FAST = ["--epochs", "2", "--rff-dim", "64", "--lr", "1e-3"]


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pool_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("pool") / "pool.jsonl"
    write_dataset(bench.make_synthetic_pool(60, seed=2), path)
    return path


class TestParsing:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--help")
        assert exc.value.code == 0
        assert "screen" in capsys.readouterr().out

    @pytest.mark.parametrize("cmd", ["screen", "bench", "train", "demo", "ood-report"])
    def test_subcommand_help(self, cmd):
        with pytest.raises(SystemExit) as exc:
            run_cli(cmd, "--help")
        assert exc.value.code == 0

    def test_unknown_flag_exits_two(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("screen", "--mode", "cbo", "--out", tmp_path, "--frobnicate")
        assert exc.value.code == 2

    def test_missing_pool_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("screen", "--mode", "random", "--out", tmp_path)
        assert exc.value.code == 2

    def test_runtime_error_is_one_line(self, tmp_path, capsys):
        assert run_cli("predict", "--ckpt", tmp_path / "nope.npz", "--data", tmp_path / "x", "--out", tmp_path / "o") == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error: FileNotFoundError")


class TestScreen:
    def test_repeat_runs_byte_identical(self, pool_file, tmp_path):
        for d in ("a", "b"):
            assert run_cli("screen", "--mode", "cbo", "--data", pool_file, "--budget", 2, "--seed", 5,
                           "--out", tmp_path / d, *FAST) == 0
        a, b = (tmp_path / d / "history.csv" for d in ("a", "b"))
        assert a.read_bytes() == b.read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["complete"] and manifest["seeds"] == [5]
        assert {p.name for p in (tmp_path / "a").iterdir()} == {
            "history.csv", "manifest.json", "regression.npz", "classification.npz"}

    def test_interrupt_marks_manifest_incomplete(self, pool_file, tmp_path, monkeypatch):
        def interrupted(*args, **kwargs):
            raise KeyboardInterrupt

        monkeypatch.setattr(cli, "run", interrupted)
        assert run_cli("screen", "--mode", "random", "--data", pool_file, "--out", tmp_path) == 1
        assert json.loads((tmp_path / "manifest.json").read_text())["complete"] is False

    def test_synthetic_pool(self, tmp_path):
        assert run_cli("screen", "--mode", "random", "--synthetic", 40, "--budget", 3, "--out", tmp_path) == 0
        assert len((tmp_path / "history.csv").read_text().splitlines()) == 5


class TestConfigPrecedence:
    def test_flag_beats_file_beats_default(self, pool_file, tmp_path):
        cfg = tmp_path / "run.yaml"
        cfg.write_text("regression:\n  epochs: 3\n  rff_dim: 64\ncampaign:\n  budget: 2\n")
        out = tmp_path / "m.npz"
        assert run_cli("train", "--head", "reg", "--data", pool_file, "--out", out, "--config", cfg,
                       "--epochs", 1) == 0
        conf = json.loads(out.with_name("m.npz.manifest.json").read_text())["config"]["regression"]
        assert (conf["epochs"], conf["rff_dim"], conf["hidden_width"]) == (1, 64, 64)

    def test_env_var_supplies_config(self, tmp_path, monkeypatch):
        cfg = tmp_path / "env.yaml"
        cfg.write_text("seed: 9\ncampaign:\n  budget: 1\n")
        monkeypatch.setenv("CATSCREEN_CONFIG", str(cfg))
        assert run_cli("screen", "--mode", "random", "--synthetic", 30, "--out", tmp_path / "o") == 0
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["seeds"] == [9] and manifest["config"]["budget"] == 1

    def test_all_problems_reported(self):
        with pytest.raises(ConfigError) as exc:
            build_config({"regression": {"epochz": 3}, "extra": 1, "seed": "x"})
        assert len(exc.value.problems) == 3

    def test_invalid_config_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("regression:\n  spectral_bound: 3.0\n")
        assert run_cli("train", "--head", "reg", "--data", cfg, "--out", tmp_path / "m.npz", "--config", cfg) == 2
        assert "spectral_bound" in capsys.readouterr().err

    def test_overrides(self):
        cfg = apply_overrides(load_config(None), seed=3, epochs=4)
        assert cfg.seed == 3 and cfg.regression.epochs == cfg.classification.epochs == 4


class TestPipeline:
    def test_convert_label_train_predict_score(self, tmp_path):
        docs = []
        for k, (eco, eh) in enumerate([(-0.7, 0.4), (-0.3, 0.0), (-1.0, 0.5), (-0.5, 0.8)]):
            for ads, e in (("CO", eco), ("H", eh)):
                docs.append({"adsorbate": ads, "composition": "Cu3Al", "miller": [1, 0, 0], "shift": 0.0,
                             "top": True, "site": [float(k), 0.0, 0.0], "energy": e,
                             "atoms": [{"el": "Cu", "x": float(k), "y": 0.0, "z": 0.0},
                                       {"el": "Al", "x": 0.0, "y": 1.0 + k, "z": 0.0}]})
        src = tmp_path / "src.jsonl"
        src.write_text("".join(json.dumps(d) + "\n" for d in docs))
        assert run_cli("convert", "--from", "gaspy-jsonl", "--in", src, "--out", tmp_path / "c.jsonl") == 0
        assert run_cli("label", "--in", tmp_path / "c.jsonl", "--out", tmp_path / "l.jsonl") == 0
        assert load_dataset(tmp_path / "l.jsonl").is_labeled
        for head in ("reg", "cls"):
            assert run_cli("train", "--head", head, "--data", tmp_path / "l.jsonl", "--out", tmp_path / f"{head}.npz",
                           *FAST) == 0
        assert run_cli("predict", "--ckpt", tmp_path / "cls.npz", "--data", tmp_path / "l.jsonl",
                       "--out", tmp_path / "p.csv") == 0
        assert (tmp_path / "p.csv").read_text().startswith("id,p,sigma,latent_0")
        assert run_cli("score", "--reg-ckpt", tmp_path / "reg.npz", "--cls-ckpt", tmp_path / "cls.npz",
                       "--data", tmp_path / "l.jsonl", "--f-best", 0.5, "--out", tmp_path / "s.csv") == 0
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "id,mu,sigma,p_feasible,ei,cei" and len(lines) == 5

    def test_unsupported_format_flag(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run_cli("convert", "--from", "cif", "--in", tmp_path, "--out", tmp_path / "o")
        assert exc.value.code == 2

    def test_bench_and_demo(self, tmp_path):
        assert run_cli("bench", "--modes", "random,bo", "--seeds", 2, "--synthetic", 40, "--budget", 2,
                       "--out", tmp_path / "b", *FAST) == 0
        names = {p.name for p in (tmp_path / "b").iterdir()}
        assert "aggregate_unconstrained_bo_n_solutions_both.csv" in names
        assert "seeds_random_search_top10_avg_product.csv" in names
        assert run_cli("demo", "--task", "cls2d", "--out", tmp_path / "d") == 0
        assert (tmp_path / "d" / "demo_classification_2d.csv").exists()

    def test_ood_report_empty_partition(self, pool_file, tmp_path, capsys):
        # synthetic compositions are all large, so nothing is out of distribution
        assert run_cli("ood-report", "--data", pool_file, "--out", tmp_path, *FAST) == 1
        assert "EmptySetError" in capsys.readouterr().err

    def test_ood_report(self, tmp_path):
        write_dataset(composition_dataset(), tmp_path / "d.jsonl")
        assert run_cli("ood-report", "--data", tmp_path / "d.jsonl", "--out", tmp_path / "o", *FAST) == 0
        summary = json.loads((tmp_path / "o" / "ood_summary.json").read_text())
        assert [summary[k]["n"] for k in ("train", "in_test", "ood")] == [56, 2, 2]

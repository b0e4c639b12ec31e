import json

import numpy as np
import pytest

from fedprompt.cli import main
from fedprompt.config import extract_round, load_config
from fedprompt.container import load_checkpoint, load_embeddings_file
from fedprompt.translator import init_translator_params

TINY = """\
world.d=16
world.n_base=6
world.n_new=2
federation.n_clients=2
federation.classes_per_client=3
federation.shots=4
federation.rounds=2
eval.n_test=5
master_seed=7
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return str(path)


def _train(tmp_path, tiny_cfg, *extra):
    ckpt = str(tmp_path / "model.ftpg")
    log = str(tmp_path / "log.jsonl")
    code = main(["train", "--config", tiny_cfg, "--checkpoint", ckpt, "--log", log, *extra])
    assert code == 0
    return ckpt, log


class TestDispatch:
    def test_no_arguments_prints_usage_and_fails(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        out = capsys.readouterr().out
        for command in ("make-world", "train", "eval", "report", "gradcheck", "selftest"):
            assert command in out

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "unknown command" in capsys.readouterr().err

    def test_subcommand_help_exits_zero(self, capsys):
        assert main(["train", "--help"]) == 0
        assert "--checkpoint" in capsys.readouterr().out

    def test_bad_flag_is_config_error(self, capsys):
        assert main(["train", "--bogus"]) == 1
        assert "error" in capsys.readouterr().err


class TestMakeWorld:
    def test_writes_loadable_file(self, tmp_path, tiny_cfg, capsys):
        out = str(tmp_path / "w.ftpe")
        assert main(["make-world", "--config", tiny_cfg, "--out", out]) == 0
        assert "6 base + 2 new" in capsys.readouterr().out
        arrays, echo = load_embeddings_file(out)
        assert arrays["base_centers"].shape == (6, 16)
        assert "master_seed=7" in echo

    def test_missing_config_file_is_io_error(self, tmp_path, capsys):
        code = main(["make-world", "--config", str(tmp_path / "absent.cfg")])
        assert code == 2

    def test_set_override_applies(self, tmp_path, tiny_cfg):
        out = str(tmp_path / "w.ftpe")
        assert main(
            ["make-world", "--config", tiny_cfg, "--set", "world.n_new=3", "--out", out]
        ) == 0
        arrays, _ = load_embeddings_file(out)
        assert arrays["new_centers"].shape == (3, 16)

    def test_bad_override_key(self, tiny_cfg, capsys):
        assert main(["make-world", "--config", tiny_cfg, "--set", "world.zzz=1"]) == 1
        assert "unknown config key" in capsys.readouterr().err


class TestTrain:
    def test_writes_checkpoint_and_log(self, tmp_path, tiny_cfg):
        ckpt, log = _train(tmp_path, tiny_cfg)
        params, echo = load_checkpoint(ckpt)
        assert extract_round(echo) == 2
        lines = [json.loads(l) for l in open(log)]
        assert [l["round"] for l in lines] == [0, 1]
        assert all(l["selected"] == [0, 1] for l in lines)

    def test_round_marker_counts_completed_rounds(self, tmp_path, tiny_cfg):
        ckpt, _ = _train(tmp_path, tiny_cfg, "--set", "federation.rounds=1")
        _, echo = load_checkpoint(ckpt)
        assert extract_round(echo) == 1

    def test_two_runs_bitwise_identical(self, tmp_path, tiny_cfg):
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        ckpt_a, log_a = _train(a, tiny_cfg)
        ckpt_b, log_b = _train(b, tiny_cfg)
        assert open(ckpt_a, "rb").read() == open(ckpt_b, "rb").read()
        assert open(log_a).read() == open(log_b).read()

    def test_stored_world_matches_rebuilt(self, tmp_path, tiny_cfg):
        world_file = str(tmp_path / "w.ftpe")
        assert main(["make-world", "--config", tiny_cfg, "--out", world_file]) == 0
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        ckpt_a, _ = _train(a, tiny_cfg, "--world", world_file)
        ckpt_b, _ = _train(b, tiny_cfg)
        assert open(ckpt_a, "rb").read() == open(ckpt_b, "rb").read()

    def test_echo_reproduces_config(self, tmp_path, tiny_cfg):
        from fedprompt.config import build_config, parse_config_text

        ckpt, _ = _train(tmp_path, tiny_cfg)
        _, echo = load_checkpoint(ckpt)
        assert build_config(parse_config_text(echo)) == load_config(tiny_cfg)


class TestEval:
    def test_eval_writes_json(self, tmp_path, tiny_cfg, capsys):
        ckpt, _ = _train(tmp_path, tiny_cfg)
        out = str(tmp_path / "eval.json")
        assert main(["eval", "--checkpoint", ckpt, "--out", out]) == 0
        payload = json.loads(open(out).read())
        assert set(payload) >= {"base", "new", "gap", "zero_context_baseline"}
        assert "checkpoint after round 2" in capsys.readouterr().out

    def test_zero_lr_single_round_matches_zero_context_baseline(self, tmp_path, tiny_cfg):
        # a no-op optimizer leaves the zero-started block closed, so the
        # trained model scores exactly like the zero-context baseline
        ckpt, _ = _train(
            tmp_path, tiny_cfg, "--set", "optimizer.lr0=0.0", "--set", "federation.rounds=1"
        )
        params, _ = load_checkpoint(ckpt)
        cfg = load_config(None, [l.replace("\n", "") for l in TINY.splitlines()])
        init = init_translator_params(cfg.translator, cfg.master_seed)
        assert np.array_equal(params.flatten().data, init.flatten().data)
        out = str(tmp_path / "eval.json")
        assert main(["eval", "--checkpoint", ckpt, "--out", out]) == 0
        payload = json.loads(open(out).read())
        assert payload["base"] == payload["zero_context_baseline"]["base"]
        assert payload["new"] == payload["zero_context_baseline"]["new"]

    def test_eval_override_n_test(self, tmp_path, tiny_cfg):
        ckpt, _ = _train(tmp_path, tiny_cfg)
        out = str(tmp_path / "eval.json")
        assert main(["eval", "--checkpoint", ckpt, "--set", "eval.n_test=3", "--out", out]) == 0

    def test_corrupt_checkpoint_is_format_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ftpg"
        bad.write_bytes(b"FTPGxxxx")
        assert main(["eval", "--checkpoint", str(bad)]) == 2

    def test_wrong_container_kind_is_format_error(self, tmp_path, tiny_cfg):
        world_file = str(tmp_path / "w.ftpe")
        assert main(["make-world", "--config", tiny_cfg, "--out", world_file]) == 0
        assert main(["eval", "--checkpoint", world_file]) == 2

    def test_missing_checkpoint_flag(self, capsys):
        assert main(["eval"]) == 1


class TestReport:
    def test_report_files_and_overall_block(self, tmp_path, capsys):
        out_dir = str(tmp_path / "rep")
        assert main(["report", "--out-dir", out_dir]) == 0
        out = capsys.readouterr().out
        assert "+0.11" in out
        assert "-0.23" in out
        names = sorted(p.name for p in (tmp_path / "rep").iterdir())
        assert names == [
            "comparison.csv",
            "error_rates.svg",
            "gaps.svg",
            "summary.csv",
            "summary.json",
        ]

    def test_report_is_byte_deterministic(self, tmp_path):
        a = str(tmp_path / "a")
        b = str(tmp_path / "b")
        assert main(["report", "--out-dir", a]) == 0
        assert main(["report", "--out-dir", b]) == 0
        for name in ("comparison.csv", "summary.csv", "summary.json", "error_rates.svg", "gaps.svg"):
            assert (
                open(f"{a}/{name}", "rb").read() == open(f"{b}/{name}", "rb").read()
            ), name

    def test_report_dir_from_config(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["report", "--set", "eval.report_dir=figs"]) == 0
        assert (tmp_path / "figs" / "summary.csv").exists()


class TestSelftest:
    def test_selftest_passes_on_clean_build(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "6/6 passed" in out
        assert "FAIL" not in out

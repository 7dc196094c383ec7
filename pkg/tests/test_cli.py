"""Command-line surface: exit codes, determinism, manifests, config parsing."""

import numpy as np
import pytest

from polarmamba import config as C
from polarmamba import io as pio
from polarmamba.cli import main

TOY = ["--preset", "toy", "--set", "k=4", "--set", "k_global=8",
       "--set", "d=8", "--set", "n_state=2",
       "--set", "epochs_pretrain=1", "--set", "epochs_finetune=1",
       "--set", "batch_size=16"]


def test_config_parses_and_rejects_unknown_keys():
    values = C.parse_config_text("# comment\nseed = 7\nd = 64\n\nlr_pretrain = 0.001\n")
    assert values == {"seed": 7, "d": 64, "lr_pretrain": 0.001}
    with pytest.raises(ValueError, match="unknown key"):
        C.parse_config_text("sneaky_typo = 3\n")
    with pytest.raises(ValueError, match="key = value"):
        C.parse_config_text("just some words\n")


def test_set_override_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown key"):
        C.parse_set_override("nope=1")


def test_unknown_command_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--does-not-exist", "x", "--out", "zzz"])
    assert exc.value.code == 2


def test_missing_file_exits_1(tmp_path):
    code = main(["pretrain", "--data", str(tmp_path / "absent.ptc"),
                 "--out", str(tmp_path)])
    assert code == 1


def test_unknown_config_key_is_hard_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("mystery = 1\n")
    code = main(["synth", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2


def test_synth_deterministic_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["synth", "--classes", "4", "--size", "24x24", "--seed", "7",
                     "--out", str(out)]) == 0
    assert (a / "synth.ptc").read_bytes() == (b / "synth.ptc").read_bytes()
    assert (a / "synth.plb").read_bytes() == (b / "synth.plb").read_bytes()


def test_rerun_from_manifest_reproduces_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--classes", "3", "--size", "16x16", "--seed", "11",
                 "--out", str(a)]) == 0
    assert main(["synth", "--config", str(a / "synth.manifest"),
                 "--out", str(b)]) == 0
    assert (a / "synth.ptc").read_bytes() == (b / "synth.ptc").read_bytes()
    assert (a / "synth.plb").read_bytes() == (b / "synth.plb").read_bytes()


def test_eval_identical_files_reports_perfect(tmp_path, capsys):
    assert main(["synth", "--classes", "3", "--size", "16x16", "--seed", "2",
                 "--out", str(tmp_path)]) == 0
    plb = str(tmp_path / "synth.plb")
    assert main(["eval", "--pred", plb, "--truth", plb]) == 0
    out = capsys.readouterr().out
    assert "oa=1.000000" in out


def test_full_toy_pipeline_end_to_end(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "--classes", "3", "--size", "16x16", "--seed", "5",
                 "--out", str(data)] + TOY) == 0
    assert main(["pretrain", "--data", str(data / "synth.ptc"),
                 "--out", str(run), "--seed", "5"] + TOY) == 0
    assert main(["finetune", "--data", str(data / "synth.ptc"),
                 "--labels", str(data / "synth.plb"),
                 "--pretrained", str(run / "pretrain.ecpw"),
                 "--sr-sample", "--set", "sr=0.2",
                 "--out", str(run), "--seed", "5"] + TOY) == 0
    assert main(["predict", "--data", str(data / "synth.ptc"),
                 "--model", str(run / "classifier.ecpw"),
                 "--out", str(run)] + TOY) == 0
    assert main(["eval", "--pred", str(run / "pred.plb"),
                 "--truth", str(data / "synth.plb"),
                 "--out", str(run)]) == 0

    # all advertised artifacts exist and parse
    assert (run / "pretrain_loss.log").read_text().count("\n") >= 1
    labels = pio.read_plb(run / "pred.plb")
    assert labels.ids.shape == (16, 16)
    ppm = (run / "pred.ppm").read_bytes()
    assert ppm.startswith(b"P6\n16 16\n255\n")
    assert "oa=" in (run / "metrics.txt").read_text()


def test_loss_log_format(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "--classes", "2", "--size", "8x8", "--seed", "1",
                 "--out", str(data)] + TOY) == 0
    assert main(["pretrain", "--data", str(data / "synth.ptc"),
                 "--out", str(run)] + TOY) == 0
    lines = (run / "pretrain_loss.log").read_text().strip().splitlines()
    for line in lines:
        step, loss, lr, lam = line.split(",")
        int(step), float(loss), float(lr), float(lam)


def test_architecture_mismatch_rejected(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "--classes", "2", "--size", "8x8", "--seed", "1",
                 "--out", str(data)] + TOY) == 0
    assert main(["pretrain", "--data", str(data / "synth.ptc"),
                 "--out", str(run)] + TOY) == 0
    code = main(["finetune", "--data", str(data / "synth.ptc"),
                 "--labels", str(data / "synth.plb"),
                 "--pretrained", str(run / "pretrain.ecpw"),
                 "--out", str(run)] + TOY + ["--set", "d=16"])
    assert code == 1


def test_config_echo_reaches_log(tmp_path, capsys):
    main(["synth", "--classes", "2", "--size", "8x8", "--seed", "3",
          "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert "resolved configuration" in err
    assert "seed = 3" in err
    assert "scan_order = spiral" in err

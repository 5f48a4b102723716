"""CLI contract: flags, exit codes, error prefixes, and artifact hygiene.

Dispatch runs in-process (fast, capsys-friendly); one subprocess test
proves the installed entry point wiring.
"""

import subprocess
import sys

import numpy as np
import pytest

from ahdr.checkpoint import load_checkpoint, save_checkpoint
from ahdr.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, cli_dispatch
from ahdr.imgio import read_pfm, read_ppm, write_pfm
from ahdr.tensor import Tensor

TINY_TRAIN = [
    "--iters", "3", "--patch", "16", "--batch", "2", "--lr", "1e-4",
    "--seed", "0", "--base-channels", "4", "--growth-rate", "4", "--blocks", "1",
]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset + trained checkpoint shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    ds = root / "ds"
    code = cli_dispatch(
        ["gen-data", "--count", "3", "--seed", "5", "--out", str(ds), "--size", "16"]
    )
    assert code == EXIT_OK
    ckpt = root / "net.ckpt"
    code = cli_dispatch(
        ["train", "--data", str(ds), "--out", str(ckpt), "--variant", "ahdr"] + TINY_TRAIN
    )
    assert code == EXIT_OK
    return root


def sample_paths(workspace, idx=0):
    sd = workspace / "ds" / f"sample_{idx:04d}"
    return sd / "ldr_0.ppm", sd / "ldr_1.ppm", sd / "ldr_2.ppm", sd / "gt.pfm"


class TestGenData:
    def test_deterministic_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert (
                cli_dispatch(
                    ["gen-data", "--count", "2", "--seed", "3", "--out", str(tmp_path / name), "--size", "16"]
                )
                == EXIT_OK
            )
        a = (tmp_path / "a" / "sample_0001" / "gt.pfm").read_bytes()
        b = (tmp_path / "b" / "sample_0001" / "gt.pfm").read_bytes()
        assert a == b

    def test_spaced_biases_form(self, tmp_path):
        code = cli_dispatch(
            ["gen-data", "--count", "1", "--seed", "0", "--out", str(tmp_path / "d"),
             "--size", "16", "--biases", "-2,0,2"]
        )
        assert code == EXIT_OK
        assert (tmp_path / "d" / "sample_0000" / "exposures.txt").read_text() == "-2\n0\n2\n"

    def test_wide_biases(self, tmp_path):
        code = cli_dispatch(
            ["gen-data", "--count", "1", "--seed", "0", "--out", str(tmp_path / "d"),
             "--size", "16", "--biases=-3,0,3"]
        )
        assert code == EXIT_OK
        assert (tmp_path / "d" / "sample_0000" / "exposures.txt").read_text() == "-3\n0\n3\n"

    @pytest.mark.parametrize(
        "biases,msg",
        [("2,0,-2", "ascending"), ("1,2", "3 comma-separated"), ("a,b,c", "integers")],
    )
    def test_bad_biases_are_usage_errors(self, tmp_path, capsys, biases, msg):
        code = cli_dispatch(
            ["gen-data", "--count", "1", "--seed", "0", "--out", str(tmp_path / "d"),
             f"--biases={biases}"]
        )
        assert code == EXIT_USAGE
        err = capsys.readouterr().err
        assert err.startswith("error: ") and msg in err
        assert not (tmp_path / "d").exists()  # no partial outputs

    def test_nonpositive_count(self, tmp_path, capsys):
        code = cli_dispatch(
            ["gen-data", "--count", "0", "--seed", "0", "--out", str(tmp_path / "d")]
        )
        assert code == EXIT_USAGE
        assert "--count" in capsys.readouterr().err


class TestTrain:
    def test_checkpoint_written_and_loadable(self, workspace):
        state, cfg = load_checkpoint(workspace / "net.ckpt")
        assert state.iteration == 3
        assert cfg.max_iterations == 3
        assert state.params.config.base_channels == 4

    def test_resume_extends_run(self, workspace, tmp_path):
        out = tmp_path / "more.ckpt"
        code = cli_dispatch(
            ["train", "--data", str(workspace / "ds"), "--out", str(out),
             "--resume", str(workspace / "net.ckpt"),
             "--iters", "5", "--patch", "16", "--batch", "2", "--lr", "1e-4",
             "--seed", "0", "--base-channels", "4", "--growth-rate", "4", "--blocks", "1"]
        )
        assert code == EXIT_OK
        state, _ = load_checkpoint(out)
        assert state.iteration == 5

    def test_resume_architecture_mismatch(self, workspace, tmp_path, capsys):
        code = cli_dispatch(
            ["train", "--data", str(workspace / "ds"), "--out", str(tmp_path / "x.ckpt"),
             "--resume", str(workspace / "net.ckpt"), "--variant", "rdb"] + TINY_TRAIN
        )
        assert code == EXIT_DATA
        assert "does not match" in capsys.readouterr().err
        assert not (tmp_path / "x.ckpt").exists()

    def test_resume_requires_more_iters(self, workspace, tmp_path, capsys):
        code = cli_dispatch(
            ["train", "--data", str(workspace / "ds"), "--out", str(tmp_path / "x.ckpt"),
             "--resume", str(workspace / "net.ckpt")] + TINY_TRAIN
        )
        assert code == EXIT_USAGE
        assert "not beyond resumed iteration" in capsys.readouterr().err

    def test_nan_parameters_exit_numeric(self, workspace, tmp_path, capsys):
        state, cfg = load_checkpoint(workspace / "net.ckpt")
        bad = state.params.named_tensors()["encoder.weight"]
        bad.data = np.full_like(bad.data, np.nan)
        poisoned = tmp_path / "nan.ckpt"
        save_checkpoint(poisoned, state, cfg)
        code = cli_dispatch(
            ["train", "--data", str(workspace / "ds"), "--out", str(tmp_path / "x.ckpt"),
             "--resume", str(poisoned),
             "--iters", "6", "--patch", "16", "--batch", "2", "--lr", "1e-4",
             "--seed", "0", "--base-channels", "4", "--growth-rate", "4", "--blocks", "1"]
        )
        assert code == EXIT_NUMERIC
        assert "error: " in capsys.readouterr().err
        assert not (tmp_path / "x.ckpt").exists()

    def test_missing_dataset(self, tmp_path, capsys):
        code = cli_dispatch(
            ["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "x.ckpt")]
            + TINY_TRAIN
        )
        assert code == EXIT_DATA
        assert "manifest" in capsys.readouterr().err

    def test_loss_log_is_jsonl(self, workspace, tmp_path):
        import json

        log = tmp_path / "loss.jsonl"
        code = cli_dispatch(
            ["train", "--data", str(workspace / "ds"), "--out", str(tmp_path / "l.ckpt"),
             "--log", str(log), "--record-every", "1"] + TINY_TRAIN
        )
        assert code == EXIT_OK
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert [rec["iteration"] for rec in lines] == [1, 2, 3]
        assert all(np.isfinite(rec["loss"]) for rec in lines)


class TestInfer:
    def infer_args(self, workspace, out, extra=()):
        low, mid, high, _ = sample_paths(workspace)
        return [
            "infer", "--ckpt", str(workspace / "net.ckpt"),
            "--low", str(low), "--mid", str(mid), "--high", str(high),
            "--biases", "-2,0,2", "--out", str(out), *extra,
        ]

    def test_output_dimensions_and_determinism(self, workspace, tmp_path):
        a, b = tmp_path / "a.pfm", tmp_path / "b.pfm"
        assert cli_dispatch(self.infer_args(workspace, a)) == EXIT_OK
        assert cli_dispatch(self.infer_args(workspace, b)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()  # byte-identical reruns
        fused = read_pfm(a)
        assert fused.shape == (1, 3, 16, 16)
        assert np.all(fused.data >= 0.0) and np.all(fused.data <= 1.0)

    def test_tonemapped_preview(self, workspace, tmp_path):
        out = tmp_path / "o.pfm"
        prev = tmp_path / "o.ppm"
        code = cli_dispatch(self.infer_args(workspace, out, ("--tonemapped", str(prev))))
        assert code == EXIT_OK
        preview = read_ppm(prev)
        assert preview.shape == (1, 3, 16, 16)

    def test_attention_dump(self, workspace, tmp_path):
        out = tmp_path / "o.pfm"
        att = tmp_path / "att"
        code = cli_dispatch(self.infer_args(workspace, out, ("--dump-attention", str(att))))
        assert code == EXIT_OK
        low = np.load(att / "attention_low.npy")
        high = np.load(att / "attention_high.npy")
        assert low.shape == (4, 16, 16)  # base_channels x H x W
        assert high.shape == (4, 16, 16)
        for m in (low, high):
            assert np.all(m > 0.0) and np.all(m < 1.0)

    def test_attention_dump_rejected_without_attention(self, workspace, tmp_path, capsys):
        ds = workspace / "ds"
        ckpt = tmp_path / "rdb.ckpt"
        assert (
            cli_dispatch(
                ["train", "--data", str(ds), "--out", str(ckpt), "--variant", "rdb"] + TINY_TRAIN
            )
            == EXIT_OK
        )
        low, mid, high, _ = sample_paths(workspace)
        code = cli_dispatch(
            ["infer", "--ckpt", str(ckpt), "--low", str(low), "--mid", str(mid),
             "--high", str(high), "--out", str(tmp_path / "x.pfm"),
             "--dump-attention", str(tmp_path / "att")]
        )
        assert code == EXIT_DATA
        assert "no attention stage" in capsys.readouterr().err
        assert not (tmp_path / "x.pfm").exists()

    def test_mismatched_dimensions(self, workspace, tmp_path, capsys):
        low, mid, high, _ = sample_paths(workspace)
        from ahdr.imgio import write_ppm

        small = tmp_path / "small.ppm"
        write_ppm(small, Tensor(np.zeros((1, 3, 8, 8), dtype=np.float32)))
        code = cli_dispatch(
            ["infer", "--ckpt", str(workspace / "net.ckpt"), "--low", str(small),
             "--mid", str(mid), "--high", str(high), "--out", str(tmp_path / "x.pfm")]
        )
        assert code == EXIT_DATA
        assert "dimensions disagree" in capsys.readouterr().err
        assert not (tmp_path / "x.pfm").exists()


class TestEval:
    def test_report_written_and_deterministic(self, workspace, tmp_path):
        args = ["eval", "--ckpt", str(workspace / "net.ckpt"),
                "--data", str(workspace / "ds")]
        r1, r2 = tmp_path / "r1.txt", tmp_path / "r2.txt"
        assert cli_dispatch(args + ["--report", str(r1)]) == EXIT_OK
        assert cli_dispatch(args + ["--report", str(r2)]) == EXIT_OK
        assert r1.read_bytes() == r2.read_bytes()
        text = r1.read_text()
        assert "sample_0000" in text and "sample_0002" in text
        assert "mean" in text
        assert "net.ckpt@iter3" in text

    def test_missing_checkpoint(self, workspace, tmp_path, capsys):
        code = cli_dispatch(
            ["eval", "--ckpt", str(tmp_path / "no.ckpt"), "--data", str(workspace / "ds"),
             "--report", str(tmp_path / "r.txt")]
        )
        assert code == EXIT_DATA
        assert not (tmp_path / "r.txt").exists()


class TestTonemap:
    def test_zero_radiance_maps_to_zero_image(self, tmp_path):
        src = tmp_path / "z.pfm"
        write_pfm(src, Tensor(np.zeros((1, 3, 4, 4), dtype=np.float32)))
        out = tmp_path / "z.ppm"
        code = cli_dispatch(["tonemap", "--in", str(src), "--mu", "5000", "--out", str(out)])
        assert code == EXIT_OK
        img = read_ppm(out)
        assert np.all(img.data == 0.0)

    def test_midgray_value(self, tmp_path):
        src = tmp_path / "h.pfm"
        write_pfm(src, Tensor(np.full((1, 3, 2, 2), 0.5, dtype=np.float32)))
        out = tmp_path / "h.ppm"
        assert cli_dispatch(["tonemap", "--in", str(src), "--out", str(out)]) == EXIT_OK
        # log(1 + 2500)/log(1 + 5000) = 0.918637...; x255 rounds to 234
        blob = out.read_bytes()
        assert blob.endswith(bytes([234] * 12))

    def test_nonpositive_mu(self, tmp_path, capsys):
        src = tmp_path / "h.pfm"
        write_pfm(src, Tensor(np.zeros((1, 3, 2, 2), dtype=np.float32)))
        code = cli_dispatch(["tonemap", "--in", str(src), "--mu", "0", "--out", str(tmp_path / "o.ppm")])
        assert code == EXIT_USAGE
        assert "--mu" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_subset_passes(self, capsys):
        assert cli_dispatch(["gradcheck", "--ops", "structural"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "all gradients verified" in out
        assert out.count("PASS") == 3

    def test_failure_exits_numeric(self, capsys, monkeypatch):
        from ahdr import cli
        from ahdr.gradcheck import CheckResult

        monkeypatch.setattr(cli, "run_suites", lambda which: [CheckResult("fake", 1.0, 1e-4)])
        assert cli_dispatch(["gradcheck"]) == EXIT_NUMERIC
        captured = capsys.readouterr()
        assert "GRADIENT MISMATCH" in captured.out
        assert captured.err.startswith("error: ")

    def test_unknown_suite_is_usage_error(self, capsys):
        assert cli_dispatch(["gradcheck", "--ops", "nonsense"]) == EXIT_USAGE


class TestDispatch:
    def test_no_subcommand(self, capsys):
        assert cli_dispatch([]) == EXIT_USAGE
        assert "missing subcommand" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert cli_dispatch(["frobnicate"]) == EXIT_USAGE

    def test_unknown_flag(self, capsys):
        assert cli_dispatch(["tonemap", "--in", "x", "--out", "y", "--what"]) == EXIT_USAGE

    def test_error_lines_are_single_line(self, tmp_path, capsys):
        cli_dispatch(["tonemap", "--in", str(tmp_path / "no.pfm"), "--out", str(tmp_path / "o.ppm")])
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert err.strip().count("\n") == 0

    def test_installed_entry_point(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "ahdr.cli", "--help"], capture_output=True, text=True
        )
        assert proc.returncode == 0
        for name in ("gen-data", "train", "infer", "eval", "tonemap", "gradcheck"):
            assert name in proc.stdout

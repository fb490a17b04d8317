import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bsblcs import cli
from bsblcs.errors import CholeskyFailure
from bsblcs.telemetry import EpochedDataset, read_stream


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def blocky(tmp_path):
    path = tmp_path / "blocky.npz"
    assert run("synth", "--kind", "blocksparse", "--N", 384, "--epochs", 3, "--channels", 2,
               "--seed", 4, "--out", path) == 0
    return path


class TestSynth:
    def test_writes_dataset(self, tmp_path, capsys):
        out = tmp_path / "a.npz"
        assert run("synth", "--kind", "ar1", "--N", 128, "--epochs", 5, "--out", out) == 0
        assert EpochedDataset.load(out).samples.shape == (1, 5, 128)
        assert "1 channel(s) x 5 epoch(s)" in capsys.readouterr().out

    def test_bad_kind_is_usage_error(self, tmp_path):
        assert run("synth", "--kind", "pink", "--out", tmp_path / "x.npz") == 2

    def test_small_n(self, tmp_path):
        assert run("synth", "--N", 16, "--out", tmp_path / "x.npz") == 2


class TestCompress:
    def test_packet_count_and_bytes(self, blocky, tmp_path, capsys):
        out = tmp_path / "p.bin"
        assert run("compress", "--dataset", blocky, "--M", 192, "--dict", "identity", "--out", out,
                   "--matrix-out", tmp_path / "phi.txt") == 0
        assert "wrote 6 packets (4794 bytes)" in capsys.readouterr().out
        assert len(read_stream(out)) == 6
        assert (tmp_path / "phi.txt").read_text() == "192 384 15 1\n"

    def test_empty_dataset(self, tmp_path, capsys):
        EpochedDataset(np.zeros((1, 0, 384))).save(tmp_path / "e.npz")
        assert run("compress", "--dataset", tmp_path / "e.npz", "--out", tmp_path / "e.bin") == 0
        assert "wrote 0 packets" in capsys.readouterr().out
        assert (tmp_path / "e.bin").read_bytes() == b""

    def test_n_mismatch(self, blocky, tmp_path, capsys):
        assert run("compress", "--dataset", blocky, "--N", 256, "--out", tmp_path / "p.bin") == 2
        err = capsys.readouterr().err
        assert "256" in err and "384" in err

    def test_missing_dataset(self, tmp_path):
        assert run("compress", "--dataset", tmp_path / "nope.npz", "--out", tmp_path / "p.bin") == 3

    def test_csv_input(self, tmp_path):
        np.savetxt(tmp_path / "raw.csv", np.random.default_rng(0).standard_normal((2, 768)), delimiter=",")
        assert run("compress", "--dataset", tmp_path / "raw.csv", "--epoch-len", 384, "--out", tmp_path / "p.bin") == 0
        assert len(read_stream(tmp_path / "p.bin")) == 4

    def test_deterministic_bytes(self, blocky, tmp_path):
        for name in ("a.bin", "b.bin"):
            assert run("compress", "--dataset", blocky, "--out", tmp_path / name) == 0
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


class TestRecover:
    def test_exact_blocksparse_report(self, blocky, tmp_path):
        run("compress", "--dataset", blocky, "--dict", "identity", "--out", tmp_path / "p.bin")
        report = tmp_path / "r.jsonl"
        assert run("recover", "--packets", tmp_path / "p.bin", "--max-iters", 50, "--reference", blocky,
                   "--report", report, "--out", tmp_path / "rec.npz") == 0
        rec = json.loads(report.read_text())
        assert rec["algo"] == "bsbl" and rec["M"] == 192 and rec["epochs"] == 6
        assert rec["nmse_mean"] < 1e-6
        assert EpochedDataset.load(tmp_path / "rec.npz").samples.shape == (2, 3, 384)

    def test_bsbl_beats_l1_on_ar1(self, tmp_path):
        run("synth", "--kind", "ar1", "--epochs", 6, "--seed", 3, "--out", tmp_path / "ar.npz")
        run("compress", "--dataset", tmp_path / "ar.npz", "--out", tmp_path / "p.bin")
        scores = {}
        for algo in ("bsbl", "l1"):
            assert run("recover", "--packets", tmp_path / "p.bin", "--algo", algo, "--reference",
                       tmp_path / "ar.npz", "--report", tmp_path / f"{algo}.jsonl",
                       "--out", tmp_path / f"{algo}.npz") == 0
            scores[algo] = json.loads((tmp_path / f"{algo}.jsonl").read_text())["nmse_mean"]
        assert scores["bsbl"] < scores["l1"]

    def test_l1_grid_without_reference(self, blocky, tmp_path):
        run("compress", "--dataset", blocky, "--out", tmp_path / "p.bin")
        assert run("recover", "--packets", tmp_path / "p.bin", "--algo", "l1", "--out", tmp_path / "r.npz") == 2
        assert run("recover", "--packets", tmp_path / "p.bin", "--algo", "l1", "--rho", "0.01",
                   "--out", tmp_path / "r.npz") == 0

    def test_corrupt_stream_names_packet(self, blocky, tmp_path, capsys):
        run("compress", "--dataset", blocky, "--out", tmp_path / "p.bin")
        raw = bytearray((tmp_path / "p.bin").read_bytes())
        raw[3 * 799] = ord("X")
        (tmp_path / "bad.bin").write_bytes(bytes(raw))
        assert run("recover", "--packets", tmp_path / "bad.bin", "--out", tmp_path / "r.npz") == 3
        assert "packet 3" in capsys.readouterr().err

    def test_numerical_failure_exit_code(self, blocky, tmp_path, monkeypatch):
        run("compress", "--dataset", blocky, "--out", tmp_path / "p.bin")

        def boom(*a, **k):
            raise CholeskyFailure("forced")

        monkeypatch.setattr(cli, "recover_packets", boom)
        assert run("recover", "--packets", tmp_path / "p.bin", "--out", tmp_path / "r.npz") == 4


class TestConfig:
    def test_config_supplies_and_flags_override(self, blocky, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"M": 96, "dict": "identity", "out": str(tmp_path / "c.bin")}))
        assert run("--config", cfg, "compress", "--dataset", blocky) == 0
        assert read_stream(tmp_path / "c.bin")[0].M == 96
        assert run("--config", cfg, "compress", "--dataset", blocky, "--M", 128) == 0
        p = read_stream(tmp_path / "c.bin")[0]
        assert (p.M, p.dict_code) == (128, 0)

    def test_unknown_key(self, blocky, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert run("--config", cfg, "compress", "--dataset", blocky, "--out", tmp_path / "x.bin") == 2

    def test_unreadable_config(self, blocky, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        assert run("--config", tmp_path / "c.json", "compress", "--dataset", blocky, "--out", tmp_path / "x.bin") == 2


class TestBench:
    def test_report_and_plot_data(self, tmp_path):
        report, plot = tmp_path / "b.jsonl", tmp_path / "b.csv"
        assert run("bench", "--synth", "ar1", "--N", 256, "--epochs", 2, "--M-grid", "64,128",
                   "--algos", "bsbl,l1,topk", "--report", report, "--plot-data", plot) == 0
        records = [json.loads(l) for l in report.read_text().splitlines()]
        assert [(r["M"], r["algo"]) for r in records] == [(m, a) for m in (64, 128) for a in ("bsbl", "l1", "topk")]
        with open(plot) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6 and float(rows[0]["ratio"]) == 0.25

    def test_needs_data(self):
        assert run("bench") == 2


class TestMetrics:
    def test_epoch_and_erp(self, tmp_path):
        ds = EpochedDataset(np.random.default_rng(1).standard_normal((1, 4, 128)), ["a", "b", "a", "b"])
        ds.save(tmp_path / "ref.npz")
        noisy = EpochedDataset(ds.samples + 0.01)
        noisy.save(tmp_path / "rec.npz")
        assert run("metrics", "--recovered", tmp_path / "rec.npz", "--reference", tmp_path / "ref.npz",
                   "--report", tmp_path / "m.jsonl") == 0
        rec = json.loads((tmp_path / "m.jsonl").read_text())
        assert rec["epochs"] == 4 and 0 < rec["nmse_mean"] < 1e-3
        assert run("metrics", "--erp", "--recovered", tmp_path / "rec.npz", "--reference", tmp_path / "ref.npz",
                   "--report", tmp_path / "e.jsonl") == 0
        erps = [json.loads(l) for l in (tmp_path / "e.jsonl").read_text().splitlines()]
        assert [e["label"] for e in erps] == ["a", "b"]

    def test_erp_needs_labels(self, tmp_path):
        EpochedDataset(np.ones((1, 2, 128)) * np.arange(128)).save(tmp_path / "r.npz")
        assert run("metrics", "--erp", "--recovered", tmp_path / "r.npz", "--reference", tmp_path / "r.npz") == 2


def test_separate_processes_reproduce(tmp_path):
    """Compressing and recovering in fresh interpreters gives identical outputs."""
    def sh(*argv):
        return subprocess.run([sys.executable, "-m", "bsblcs.cli", *map(str, argv)],
                              capture_output=True, text=True, check=True)

    sh("synth", "--kind", "ar1", "--epochs", 2, "--out", tmp_path / "d.npz")
    for tag in ("a", "b"):
        sh("compress", "--dataset", tmp_path / "d.npz", "--out", tmp_path / f"{tag}.bin")
        sh("recover", "--packets", tmp_path / f"{tag}.bin", "--out", tmp_path / f"{tag}.npz")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    np.testing.assert_array_equal(EpochedDataset.load(tmp_path / "a.npz").samples,
                                  EpochedDataset.load(tmp_path / "b.npz").samples)

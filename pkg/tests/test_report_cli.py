import subprocess
import sys

import numpy as np
import pytest

from trustgossip.cli import main, sweep_configs
from trustgossip.protocol import Variant
from trustgossip.report import CSV_HEADER, MEAN_CSV, emit_all, emit_csv, read_csv
from trustgossip.sim import SimConfig, Topology, run_experiment

HEADER = "round,avg_trust,avg_trust_pct,bytes_sync,bytes_total,attest_attempted,attest_succeeded,wallclock_s"


@pytest.fixture(scope="module")
def naive_result():
    return run_experiment(SimConfig(Variant.NAIVE, Topology("complete"), n=20, rounds=500,
                                    trials=3, seed=1))


def strip_wallclock(text: str) -> list:
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


class TestCsv:
    def test_header_and_length(self, naive_result, tmp_path):
        paths = emit_csv(naive_result, tmp_path)
        assert len(paths) == 4 and paths[-1].name == MEAN_CSV
        lines = paths[0].read_text().splitlines()
        assert lines[0] == HEADER == ",".join(CSV_HEADER)
        assert len(lines) == 501

    def test_reemit_identical(self, naive_result, tmp_path):
        emit_csv(naive_result, tmp_path / "a")
        emit_csv(naive_result, tmp_path / "b")
        for name in ("trial_0.csv", "trial_2.csv", MEAN_CSV):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_mean_file_is_row_mean(self, naive_result, tmp_path):
        paths = emit_csv(naive_result, tmp_path)
        trials = np.stack([read_csv(p)[1] for p in paths[:-1]])
        _, mean = read_csv(paths[-1])
        assert np.allclose(mean, trials.mean(axis=0), rtol=1e-5, atol=1e-9)

    def test_six_significant_digits(self, naive_result, tmp_path):
        paths = emit_csv(naive_result, tmp_path)
        for line in paths[-1].read_text().splitlines()[1:]:
            for cell in line.split(",")[1:]:
                digits = cell.split("e")[0].replace(".", "").replace("-", "").lstrip("0")
                assert len(digits) <= 6

    def test_config_and_summary(self, naive_result, tmp_path):
        emit_all(naive_result, tmp_path)
        echo = dict(line.split("=", 1) for line in (tmp_path / "config.txt").read_text().splitlines())
        assert echo["variant"] == "naive" and echo["n"] == "20" and echo["trials"] == "3"
        summary = (tmp_path / "summary.txt").read_text()
        assert "mean_bytes_sync_per_interaction=" in summary

    def test_unwritable(self, naive_result, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            emit_csv(naive_result, blocker / "sub")


class TestCli:
    def test_single_experiment(self, tmp_path):
        code = main(["--variant", "original", "--topology", "complete", "--n", "200",
                     "--seed", "7", "--rounds", "20", "--out", str(tmp_path)])
        assert code == 0
        assert len(list(tmp_path.glob("*.csv"))) == 6
        assert (tmp_path / "config.txt").exists()

    def test_ws_odd_k(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--topology", "ws", "--k", "3"])
        assert exc.value.code == 2
        assert "even" in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["--bogus"], ["--variant", "fancy"], ["--asr", "2"],
                                      ["--n", "1"], ["--jobs", "0"]])
    def test_config_errors(self, argv, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(argv + ["--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_sweep_grid_layout(self, tmp_path):
        code = main(["--sweep", "grid", "--rounds", "2", "--trials", "1", "--interactions", "5",
                     "--out", str(tmp_path)])
        assert code == 0
        dirs = sorted(p for p in tmp_path.iterdir() if p.is_dir())
        assert len(dirs) == 48
        assert all((d / MEAN_CSV).exists() for d in dirs)

    def test_sweep_asr(self):
        named = sweep_configs(SimConfig(n=100), "asr")
        assert len(named) == 12
        assert {c.asr for _, c in named} == {1.0, 0.75, 0.5, 0.25}
        assert all(c.topology.kind == "complete" and c.n == 100 for _, c in named)

    def test_dump_edges(self, tmp_path):
        main(["--topology", "ba", "--n", "20", "--rounds", "2", "--trials", "2",
              "--dump-edges", "--out", str(tmp_path)])
        lines = (tmp_path / "edges_1.txt").read_text().splitlines()
        assert len(lines) == 2 * 18

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "trustgossip", "--n", "10", "--rounds", "3",
                               "--trials", "1", "--out", str(tmp_path)], capture_output=True)
        assert proc.returncode == 0
        assert (tmp_path / "trial_0.csv").exists()

    def test_cli_output_deterministic(self, tmp_path):
        args = ["--topology", "er", "--p", "0.2", "--n", "25", "--rounds", "30", "--trials", "2",
                "--seed", "9"]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        for name in ("trial_0.csv", "trial_1.csv", MEAN_CSV):
            a = (tmp_path / "a" / name).read_text()
            b = (tmp_path / "b" / name).read_text()
            assert strip_wallclock(a) == strip_wallclock(b)

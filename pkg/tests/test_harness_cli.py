import csv
import json
import math

import numpy as np
import pytest

from pare.cli import main
from pare.harness import (
    CSV_HEADER,
    ExperimentSpec,
    emit_csv,
    load_spec,
    read_csv,
    run_cell,
    run_experiment,
    run_streams,
)
from pare.metrics import MetricSample
from pare.system_model import ConfigError, SystemConfig

SMALL = SystemConfig(M_R=3, M_T=2, N=4, Q=2, K=6, T=4)


def _sample(snr, q=4, **kw):
    base = dict(nmse_H=1.23456789e-3, nmse_G=4.5e-4, nmse_cascaded=2e-3, ser_pare=0.01,
                ser_zf=0.0, mean_iterations=19.5, mean_runtime_ms=float("nan"), runs=3)
    base.update(kw)
    return MetricSample(snr_db=snr, q=q, **base)


class TestCsv:
    def test_lines_and_header(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv([_sample(0.0), _sample(10.0)], path)
        text = path.read_text(encoding="utf-8")
        lines = text.split("\n")
        assert text.endswith("\n")
        assert len(lines) == 4 and lines[-1] == ""
        assert lines[0] == (
            "snr_db,q,nmse_H,nmse_G,nmse_cascaded,ser_pare,ser_zf,"
            "mean_iterations,mean_runtime_ms,runs"
        )

    def test_round_trip(self, tmp_path):
        samples = [_sample(0.0, nmse_H=1 / 3), _sample(12.5, q=8, ser_pare=2 / 7)]
        path = tmp_path / "out.csv"
        emit_csv(samples, path)
        rows = read_csv(path)
        for s, row in zip(samples, rows):
            assert list(row) == list(CSV_HEADER)
            for name in CSV_HEADER:
                got, want = row[name], getattr(s, name)
                assert (math.isnan(got) and math.isnan(want)) or got == want

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv([], tmp_path / "x.csv")

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError, match="missing"):
            emit_csv([_sample(0.0)], tmp_path / "missing" / "x.csv")


class TestSpec:
    def test_validation(self):
        with pytest.raises(ConfigError):
            ExperimentSpec(runs=0)
        with pytest.raises(ConfigError):
            ExperimentSpec(snr_grid_db=())
        with pytest.raises(ConfigError):
            ExperimentSpec(q_values=(3,))

    def test_flat_config(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("# desk run\nM_R = 4\nsnr_grid_db = 0, 10\nq_values: 2,4\nruns=7\n")
        spec = load_spec(path)
        assert spec.base.M_R == 4
        assert spec.snr_grid_db == (0.0, 10.0)
        assert spec.q_values == (2, 4)
        assert spec.runs == 7

    def test_json_config(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"base": {"K": 64, "T": 8, "M_R": 4, "M_T": 4},
                                    "q_values": [2], "master_seed": 9}))
        spec = load_spec(path)
        assert (spec.base.K, spec.base.T, spec.base.M_T) == (64, 8, 4)
        assert spec.q_values == (2,) and spec.master_seed == 9

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("bogus = 1\n")
        with pytest.raises(ConfigError):
            load_spec(path)


class TestExperiment:
    def test_single_run(self):
        spec = ExperimentSpec(base=SMALL, snr_grid_db=(20.0,), q_values=(2,), runs=1)
        samples = run_experiment(spec)
        assert len(samples) == 1 and samples[0].runs == 1
        assert samples[0].symbols_counted == (SMALL.T - 1) * SMALL.M_T

    def test_streams_independent_of_grid(self):
        spec_a = ExperimentSpec(base=SMALL, snr_grid_db=(10.0,), q_values=(2,), runs=3)
        spec_b = ExperimentSpec(base=SMALL, snr_grid_db=(0.0, 10.0, 20.0), q_values=(2,), runs=3)
        a = run_experiment(spec_a)[0].as_dict()
        b = run_experiment(spec_b)[1].as_dict()
        assert a.keys() == b.keys()
        for key in a:
            assert a[key] == b[key] or (math.isnan(a[key]) and math.isnan(b[key]))

    def test_streams_differ_by_snr_and_run(self):
        draws = {
            key: run_streams(0, 4, *key)[2].standard_normal()
            for key in [(0, 0.0), (0, 10.0), (1, 0.0)]
        }
        assert len(set(draws.values())) == 3
        chan = [run_streams(0, 4, 0, s)[0].standard_normal() for s in (0.0, 10.0)]
        assert chan[0] == chan[1]

    def test_skips_unidentifiable(self):
        base = SystemConfig(M_R=1, M_T=2, N=2, Q=1, K=2, T=1)
        spec = ExperimentSpec(base=base, snr_grid_db=(10.0,), q_values=(1,), runs=1)
        with pytest.warns(RuntimeWarning, match="skipping"):
            assert run_experiment(spec) == []

    def test_deterministic_csv(self, tmp_path):
        spec = ExperimentSpec(base=SMALL, snr_grid_db=(5.0, 15.0), q_values=(1, 2), runs=4)
        emit_csv(run_experiment(spec), tmp_path / "a.csv")
        emit_csv(run_experiment(spec), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_workers_do_not_change_output(self, tmp_path):
        spec = ExperimentSpec(base=SMALL, snr_grid_db=(10.0,), q_values=(2,), runs=4)
        par = ExperimentSpec(base=SMALL, snr_grid_db=(10.0,), q_values=(2,), runs=4, workers=2)
        emit_csv(run_experiment(spec), tmp_path / "a.csv")
        emit_csv(run_experiment(par), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_timing_recorded_on_request(self):
        spec = ExperimentSpec(base=SMALL, snr_grid_db=(10.0,), q_values=(2,), runs=2, record_timing=True)
        assert run_experiment(spec)[0].mean_runtime_ms > 0

    def test_run_count_stability(self):
        spec = ExperimentSpec(snr_grid_db=(20.0,), q_values=(4,), runs=40)
        outcomes = run_cell(spec, 20.0, 4)
        full = np.array([o.nmse_H for o in outcomes])
        half = full[:20]
        se = full.std(ddof=1) / np.sqrt(len(half))
        assert abs(half.mean() - full.mean()) < 3 * se


class TestCli:
    def test_check_reference(self, capsys):
        assert main(["check"]) == 0
        out = capsys.readouterr().out
        assert "200 >= 16" in out and "1000 >= 32" in out and "100 >= 2" in out
        assert "all identifiability conditions satisfied" in out

    def test_check_violation(self, capsys):
        assert main(["check", "--t", "1", "--k", "1", "--n", "2", "--mr", "1", "--mt", "1"]) == 1
        assert "T*K >= N" in capsys.readouterr().out

    def test_demo(self, capsys):
        assert main(["demo"]) == 0
        out = capsys.readouterr().out
        eps = float(out.strip().splitlines()[-1].split("=")[-1])
        assert eps < 1e-8

    def test_runs_zero(self, capsys):
        assert main(["run", "--runs", "0"]) == 1
        assert "runs" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert main(["run", "--frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command(self):
        assert main([]) == 1

    def test_bad_q(self):
        assert main(["run", "--q", "3", "--runs", "1"]) == 1

    def test_missing_config(self, tmp_path):
        assert main(["check", "--config", str(tmp_path / "nope.cfg")]) == 2

    def test_io_error(self, tmp_path):
        out = tmp_path / "missing" / "r.csv"
        args = ["run", "--mr", "3", "--mt", "2", "--n", "4", "--k", "6", "--t", "4",
                "--q", "2", "--snr", "10", "--runs", "1", "--out", str(out)]
        assert main(args) == 2

    def test_run_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "r.csv"
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("M_R=3\nM_T=2\nN=4\nK=6\nT=4\nq_values=2\n")
        args = ["run", "--config", str(cfg), "--snr", "10,20", "--runs", "2",
                "--seed", "3", "--out", str(out)]
        assert main(args) == 0
        with out.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(CSV_HEADER)
        assert [r[0] for r in rows[1:]] == ["10.0", "20.0"]
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first


def test_plot_script(tmp_path):
    pytest.importorskip("matplotlib")
    import importlib.util
    from pathlib import Path

    script = Path(__file__).resolve().parents[1] / "scripts" / "plot_figures.py"
    spec = importlib.util.spec_from_file_location("plot_figures", script)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    csv_path = tmp_path / "r.csv"
    emit_csv([_sample(0.0), _sample(10.0, ser_pare=0.0), _sample(0.0, q=8)], csv_path)
    module.main([str(csv_path), "--outdir", str(tmp_path / "figs")])
    assert sorted(p.name for p in (tmp_path / "figs").iterdir()) == [
        "iterations.png", "nmse.png", "ser.png"]

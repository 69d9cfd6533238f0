import os
from pathlib import Path

import pytest

from tresim.cli import EXIT_CONFIG, EXIT_INGEST, EXIT_SIM, best_tradeoff, main, sweep_rows
from tresim.config import ConfigError, load_config, parse_config
from tresim.domain import PolicyParams
from tresim.metrics import report_rows
from tresim.models import ModelKind, run_scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SWF = "\n".join(" ".join(map(str, [i + 1, i * 100, 0, 500 + i * 70, 1 + i % 4, -1, -1, 1 + i % 4]
                                   + [-1] * 10)) for i in range(30)) + "\n"


@pytest.fixture
def trace_dir(tmp_path):
    (tmp_path / "t.swf").write_text(SWF)
    return tmp_path


def write(dirpath, text, name="c.ini"):
    p = dirpath / name
    p.write_text(text)
    return str(p)


MINIMAL = "[scenario]\nmodels = dcs\n\n[tre t]\ntrace = t.swf\nfixed_size = 128\n"


class TestConfig:
    def test_minimal(self, trace_dir):
        cfg = load_config(write(trace_dir, MINIMAL))
        (e,) = cfg.scenario.entries
        assert cfg.models == (ModelKind.DCS,) and e.fixed_size == 128 and len(e.workload.jobs) == 30

    def test_typo_names_the_key(self, trace_dir):
        with pytest.raises(ConfigError, match="treshold"):
            load_config(write(trace_dir, MINIMAL + "treshold = 1.5\n"))

    def test_inline_comments(self, trace_dir):
        cfg = load_config(write(trace_dir, MINIMAL.replace("fixed_size = 128", "fixed_size = 64   # partition")))
        assert cfg.scenario.entries[0].fixed_size == 64

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[scenario]\n[extra]\n")

    def test_dsp_needs_policy(self, trace_dir):
        with pytest.raises(ConfigError, match="initial_resources"):
            load_config(write(trace_dir, MINIMAL.replace("dcs", "dsp")))

    def test_reproduction_config(self):
        cfg = load_config(str(CONFIGS / "consolidated.ini"))
        entries = {e.name: e for e in cfg.scenario.entries}
        assert set(cfg.models) == set(ModelKind)
        assert [entries[n].fixed_size for n in ("nasa", "blue", "montage")] == [128, 144, 166]
        assert [entries[n].params.label for n in ("nasa", "blue", "montage")] == ["B40_R1.2", "B80_R1.5", "B10_R8"]
        assert entries["montage"].params.scan_interval == 3 and entries["nasa"].params.scan_interval == 60
        assert entries["nasa"].workload.max_nodes <= 128 and len(entries["montage"].workload.jobs) == 1000


class TestSweep:
    def test_one_by_one_grid_equals_a_direct_run(self, trace_dir):
        text = MINIMAL.replace("dcs", "dsp") + ("initial_resources = 2\nthreshold_ratio = 1.5\n"
                                                "[sweep]\ntre = t\ninitial_resources = 2\nthreshold_ratio = 1.5\n")
        cfg = load_config(write(trace_dir, text))
        (row,) = sweep_rows(cfg, cfg.scenario)
        direct = run_scenario(cfg.scenario, ModelKind.DSP).reports["t"]
        want = report_rows(cfg.name, [(direct, 2, 1.5)])[0]
        assert {k: row[k] for k in want if k != "savings_pct"} == {k: v for k, v in want.items() if k != "savings_pct"}

    def test_rows_are_the_sorted_product(self, trace_dir):
        text = MINIMAL.replace("dcs", "dsp") + ("initial_resources = 2\nthreshold_ratio = 1.5\n"
                                                "[sweep]\ntre = t\ninitial_resources = 4, 1\nthreshold_ratio = 2, 1\n")
        cfg = load_config(write(trace_dir, text))
        rows = sweep_rows(cfg, cfg.scenario)
        assert [(r["B"], r["R"]) for r in rows] == [(1, 1), (1, 2), (4, 1), (4, 2)]
        assert rows == sweep_rows(cfg, cfg.scenario, parallel=2)

    def test_best_tradeoff(self):
        rows = [{"B": 1, "R": 2.0, "completed_jobs": 90, "billed_node_hours": 5.0},
                {"B": 2, "R": 1.0, "completed_jobs": 100, "billed_node_hours": 9.0},
                {"B": 2, "R": 2.0, "completed_jobs": 99, "billed_node_hours": 7.0},
                {"B": 3, "R": 2.0, "completed_jobs": 100, "billed_node_hours": 7.0},
                {"B": 9, "R": 9.0, "error": "boom"}]
        best = best_tradeoff(rows)
        assert PolicyParams(best["B"], best["R"]).label == "B2_R2"
        assert best_tradeoff([{"error": "x"}]) is None


class TestMain:
    def test_run_writes_report(self, trace_dir, capsys):
        cfg = write(trace_dir, MINIMAL.replace("dcs", "dcs, drp"))
        out = trace_dir / "out"
        assert main(["run", cfg, "--out", str(out), "--trace-dump"]) == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert len(lines) == 4 and os.path.exists(out / "trace_drp.tsv")
        assert "dcs" in capsys.readouterr().out

    def test_missing_config(self, tmp_path):
        assert main(["run", str(tmp_path / "none.ini")]) == EXIT_CONFIG

    def test_schema_error(self, trace_dir):
        assert main(["run", write(trace_dir, MINIMAL + "treshold = 1\n")]) == EXIT_CONFIG

    def test_dangling_trace(self, tmp_path):
        assert main(["run", write(tmp_path, MINIMAL)]) == EXIT_INGEST

    def test_simulation_abort(self, trace_dir):
        text = MINIMAL.replace("models = dcs", "models = dcs\npool_capacity = 4")
        assert main(["run", write(trace_dir, text)]) == EXIT_SIM

    def test_bad_quantum(self, trace_dir):
        assert main(["run", write(trace_dir, MINIMAL), "--quantum", "0"]) == EXIT_CONFIG

    def test_tco(self, capsys):
        assert main(["tco", str(CONFIGS / "tco.ini")]) == 0
        assert capsys.readouterr().out == "tco_dcs_monthly,3162.5\ntco_ssp_monthly,2260\n"

    def test_validate_builtin(self, capsys):
        assert main(["validate", "builtin:montage"]) == 0
        assert "1000 jobs" in capsys.readouterr().out

    def test_validate_reports_violations(self, tmp_path, capsys):
        p = tmp_path / "wide.swf"
        p.write_text(SWF)
        assert main(["validate", str(p), "--max-nodes", "2"]) == EXIT_INGEST
        assert "exceeds-attainable" in capsys.readouterr().out

    def test_validate_missing(self, tmp_path):
        assert main(["validate", str(tmp_path / "gone.swf")]) == EXIT_INGEST

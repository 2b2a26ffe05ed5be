import json

import numpy as np
import pytest

from fixedtime_consensus.cli import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_VALIDATION,
    EXIT_VERIFICATION,
    main,
)
from fixedtime_consensus.config import ConfigError, bundled_config, load_config, parse_config
from fixedtime_consensus.output import read_trajectory_csv
from fixedtime_consensus.simulator import run


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def base_config(**changes):
    doc = {
        "schema": 1,
        "name": "t",
        "settling_time": 20,
        "k_max": 60,
        "initial": {"positions": [1, 0], "velocities": [0, 0]},
        "schedule": {"mode": "fixed", "graphs": [{"n": 2, "edges": [[1, 2]]}]},
        "output": {"plot": "none"},
    }
    doc.update(changes)
    return doc


class TestConfig:
    def test_bundled_configs_parse(self):
        for name in ("six_agent_switching", "leader_follower", "empty_graph", "single_agent", "chain_union", "random_fixed"):
            assert load_config(bundled_config(name)).name == name

    def test_schema_error_names_field(self):
        with pytest.raises(ConfigError, match="settling_time"):
            parse_config(base_config(settling_time=-1))

    def test_missing_key(self):
        doc = base_config()
        del doc["schedule"]
        with pytest.raises(ConfigError, match="schedule"):
            parse_config(doc)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError, match="initial"):
            parse_config(base_config(initial={"positions": [1, 0, 2], "velocities": [0, 0]}))

    def test_kmax_cap(self):
        with pytest.raises(ConfigError, match="k_max"):
            parse_config(base_config(k_max=10001))

    def test_random_initial_is_seeded(self):
        doc = base_config(initial={"random": {"agents": 2, "scale": 3}}, seed=4)
        a, b = parse_config(doc), parse_config(doc)
        assert np.array_equal(a.initial.positions, b.initial.positions)


class TestSimulate:
    def test_six_agent_config(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(bundled_config("six_agent_switching")), "--out", str(tmp_path)]) == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())["report"]
        assert rep["achieved"] and rep["values_match"]
        assert rep["achieved_consensus"]["time"] < 20
        assert (tmp_path / "trajectory.svg").exists()
        assert "achieved=True" in capsys.readouterr().out

    def test_empty_graph_warns(self, tmp_path, caplog):
        assert main(["simulate", "--config", str(bundled_config("empty_graph")), "--out", str(tmp_path)]) == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())["report"]
        assert not rep["achieved"]
        assert "no directed spanning tree" in rep["warnings"]
        assert "no directed spanning tree" in caplog.text

    def test_single_agent(self, tmp_path):
        assert main(["simulate", "--config", str(bundled_config("single_agent")), "--out", str(tmp_path)]) == EXIT_OK
        rep = json.loads((tmp_path / "report.json").read_text())["report"]
        assert rep["achieved"] and rep["truncation_k"] == 0
        rec = read_trajectory_csv(tmp_path / "trajectory.csv")
        assert np.allclose(rec.positions[:, 0, 0], 2 + 0.5 * rec.times)

    def test_csv_roundtrip_exact(self, tmp_path):
        cfg = load_config(bundled_config("chain_union"))
        main(["simulate", "--config", str(bundled_config("chain_union")), "--out", str(tmp_path)])
        rec, _ = run(cfg.initial, cfg.schedule, cfg.partition(), cfg.tolerances, dense=cfg.dense, horizon=cfg.horizon)
        back = read_trajectory_csv(tmp_path / "trajectory.csv")
        assert np.array_equal(back.times, rec.times)
        assert np.array_equal(back.positions, rec.positions)
        assert np.array_equal(back.velocities, rec.velocities)
        assert np.array_equal(back.controls, rec.controls)
        header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,agent,x1,x2,v1,v2,u1,u2"
        assert (tmp_path / "trajectory.gp").exists()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = str(bundled_config("random_fixed"))
        for d in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d), "--plot", "svg", "--dense", "3"]) == 0
        for f in ("trajectory.csv", "report.json", "trajectory.svg"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_flag_overrides(self, tmp_path):
        cfg = str(bundled_config("leader_follower"))
        main(["simulate", "--config", cfg, "--out", str(tmp_path), "--kmax", "5", "--dense", "0", "--plot", "none"])
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["partition"]["k_max"] == 5 and doc["report"]["truncation_k"] == 5
        assert not (tmp_path / "trajectory.svg").exists()

    def test_sweep(self, tmp_path):
        cfgs = [str(bundled_config(n)) for n in ("leader_follower", "six_agent_switching", "chain_union")]
        args = ["simulate", "--sweep", "--out", str(tmp_path)]
        for c in cfgs:
            args += ["--config", c]
        assert main(args) == EXIT_OK
        for name in ("leader_follower", "six_agent_switching", "chain_union"):
            assert (tmp_path / name / "report.json").exists()

    def test_several_configs_need_sweep(self, tmp_path):
        c = str(bundled_config("leader_follower"))
        assert main(["simulate", "--config", c, "--config", c, "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_schema_error_exit(self, tmp_path, capsys):
        path = write_config(tmp_path, base_config(settling_time="soon"))
        assert main(["simulate", "--config", path, "--out", str(tmp_path)]) == EXIT_VALIDATION
        assert "settling_time" in capsys.readouterr().err

    def test_unreadable_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_VALIDATION

    def test_numeric_abort_exit(self, tmp_path, capsys):
        doc = base_config(
            initial={"positions": [1e308, -1e308], "velocities": [0, 0]},
            schedule={"mode": "fixed", "graphs": [{"n": 2, "edges": [[1, 2], [2, 1]]}]},
        )
        assert main(["simulate", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_NUMERIC
        assert "interval 0" in capsys.readouterr().err


class TestCheckGraph:
    def run(self, tmp_path, doc):
        assert main(["check-graph", "--config", write_config(tmp_path, doc), "--out", str(tmp_path)]) == EXIT_OK
        return json.loads((tmp_path / "graph_analysis.json").read_text())

    def test_leader_follower(self, tmp_path):
        doc = self.run(tmp_path, base_config())
        assert doc["graphs"][0]["has_tree"]
        assert doc["xi"] == pytest.approx([1, 0], abs=1e-15)

    def test_periodic_union(self, tmp_path):
        doc = self.run(tmp_path, json.loads(bundled_config("chain_union").read_text()))
        assert [g["has_tree"] for g in doc["graphs"]] == [False, False]
        assert doc["union"]["has_tree"]
        assert doc["xi"] == pytest.approx([1, 0, 0], abs=1e-12)

    def test_disconnected(self, tmp_path):
        doc = self.run(tmp_path, json.loads(bundled_config("empty_graph").read_text()))
        assert not doc["graphs"][0]["has_tree"]
        assert doc["xi"] is None and "spanning tree" in doc["xi_error"]
        assert not doc["product_limit"]["converged"]


class TestVerify:
    @pytest.mark.parametrize("name", ["leader_follower", "six_agent_switching", "chain_union", "empty_graph"])
    def test_bundled_pass(self, tmp_path, name):
        assert main(["verify", "--config", str(bundled_config(name)), "--out", str(tmp_path)]) == EXIT_OK
        doc = json.loads((tmp_path / "verification.json").read_text())
        checks = {c["check"]: c for c in doc["checks"]}
        assert checks["rk4_vs_closed_form"]["max_deviation"] <= 1e-6
        assert checks["minimum_energy_certificate"]["passed"]

    def test_six_agent_certificates_cover_all_agents(self, tmp_path):
        main(["verify", "--config", str(bundled_config("six_agent_switching")), "--out", str(tmp_path)])
        doc = json.loads((tmp_path / "verification.json").read_text())
        cert = next(c for c in doc["checks"] if c["check"] == "minimum_energy_certificate")
        assert cert["certificates"] == 60 * 6

    def test_kmax_beyond_cap(self):
        assert main(["verify", "--config", str(bundled_config("leader_follower")), "--kmax", "20000"]) == EXIT_VALIDATION

    def test_failure_exit_code(self, tmp_path, monkeypatch):
        import fixedtime_consensus.cli as cli

        monkeypatch.setattr(cli, "RK4_TOL", 0.0)
        doc = base_config(initial={"positions": [1, 0], "velocities": [0.3, -0.7]})
        assert main(["verify", "--config", write_config(tmp_path, doc)]) == EXIT_VERIFICATION

from __future__ import annotations

import csv
import json
import os
import textwrap

import numpy as np
import pytest

from artifact import harness
from artifact.cli import main
from artifact.env import load_model
from artifact.errors import IoError, ParseError, ValidationError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def test_minimal_config_defaults(tmp_path):
    cfg = harness.parse_config(write(tmp_path, """
        [instance]
        kind = "cycle2"
    """))
    assert cfg.repetitions == 1 and cfg.seed == 0 and cfg.record_every == 10
    assert cfg.setting == "markov" and cfg.threads == 1 and cfg.algorithms == []
    assert cfg.instance["gamma"] == 0.5 and cfg.instance["radius_safety"] == 1.0
    assert cfg.variance["n_mc"] == 500


def test_all_violations_listed(tmp_path):
    path = write(tmp_path, """
        repetitions = 0
        colour = "red"
        [instance]
        kind = "garnet"
        gamma = 1.5
        [[algorithms]]
        name = "SGD"
        alpha = -1.0
    """)
    with pytest.raises(ValidationError) as exc:
        harness.parse_config(path)
    text = "\n".join(exc.value.violations)
    for frag in ("repetitions", "colour", "gamma", "name", "alpha"):
        assert frag in text
    assert len(exc.value.violations) >= 5


def test_parse_error_has_location(tmp_path):
    with pytest.raises(ParseError) as exc:
        harness.parse_config(write(tmp_path, "seed = 1\nrepetitions = = 2\n"))
    assert "line 2" in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        harness.parse_config(str(tmp_path / "nope.toml"))
    with pytest.raises(ValidationError):
        harness.parse_config(write(tmp_path, """
            [instance]
            kind = "file"
            path = "missing.json"
        """))


def test_full_setup_parses():
    cfg = harness.parse_config(os.path.join(CONFIGS, "garnet_full.toml"))
    inst = cfg.instance
    assert (inst["n_states"], inst["n_actions"], inst["branching"], inst["d"]) == (500, 20, 50, 15)
    vrtdc = next(a for a in cfg.algorithms if a.name == "VRTDC")
    assert (vrtdc.alpha, vrtdc.beta, vrtdc.M) == (0.1, 0.02, 3000)
    assert vrtdc.algo_id(cfg.setting) == "VRTDC_MARKOV"


@pytest.mark.parametrize("name", sorted(os.listdir(CONFIGS)))
def test_shipped_configs_validate(name):
    harness.parse_config(os.path.join(CONFIGS, name))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_cycle2_quick_run(tmp_path):
    cfg = harness.parse_config(os.path.join(CONFIGS, "cycle2_quick.toml"))
    man = harness.cmd_run(cfg, out=str(tmp_path / "a"))
    out = tmp_path / "a"
    envs = sorted(p.name for p in out.iterdir() if p.name.startswith("envelope_"))
    assert envs == ["envelope_TD.csv", "envelope_TDC.csv", "envelope_VRTD.csv", "envelope_VRTDC_MARKOV.csv"]
    assert len(list((out / "traces").iterdir())) == 20
    rows = read_csv(out / "traces" / "TDC_rep000.csv")
    assert rows[0] == ["pg_count", "conv_error", "tracking_error_sq"]
    assert rows[1][0] == "0" and float(rows[1][1]) == pytest.approx(2 * np.sqrt(2))
    env = read_csv(out / "envelope_VRTDC_MARKOV.csv")
    assert env[0] == ["pg_count", "metric", "p5", "p50", "p95"]
    assert {r[1] for r in env[1:]} == {"conv_error", "tracking_error_sq"}
    for r in env[1:]:
        assert float(r[2]) <= float(r[3]) <= float(r[4])
    assert man["failures"] == [] and len(man["instance_hash"]) == 64
    m2, f2, doc = load_model(out / "instance.json")
    assert harness.instance_hash(harness.Problem(m2, f2, harness.Policy(np.array(doc["target"])),
                                                 harness.Policy(np.array(doc["behavior"])))) == man["instance_hash"]
    assert b"\r" not in (out / "asymptotic_error.csv").read_bytes()


def test_failed_repetition_recorded(tmp_path, monkeypatch):
    from artifact.errors import SingularA

    real = harness.run_algorithm

    def flaky(params, *args, **kw):
        if params.seed[1] == 1:
            raise SingularA("forced")
        return real(params, *args, **kw)

    monkeypatch.setattr(harness, "run_algorithm", flaky)
    cfg = harness.parse_config(write(tmp_path, """
        repetitions = 3
        [instance]
        kind = "cycle2"
        [[algorithms]]
        name = "TD"
        alpha = 0.1
        steps = 50
    """))
    man = harness.cmd_run(cfg, out=str(tmp_path / "o"))
    assert man["failures"] == [{"repetition": 1, "algorithm": "TD", "error": "SingularA: forced"}]
    assert sorted(os.listdir(tmp_path / "o" / "traces")) == ["TD_rep000.csv", "TD_rep002.csv"]


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = harness.parse_config(os.path.join(CONFIGS, "cycle2_quick.toml"))
    with pytest.raises(IoError):
        harness.cmd_run(cfg, out=str(blocker / "sub"))


def test_missing_output_dir_created(tmp_path):
    cfg = harness.parse_config(os.path.join(CONFIGS, "cycle2_conditions.toml"))
    target = tmp_path / "deep" / "er"
    harness.cmd_conditions(cfg, out=str(target))
    assert (target / "conditions.json").exists()


def test_conditions_search(tmp_path):
    cfg = harness.parse_config(os.path.join(CONFIGS, "cycle2_conditions.toml"))
    doc = harness.cmd_conditions(cfg, out=str(tmp_path))
    for name in ("iid", "markov"):
        sec = doc["settings"][name]
        assert sec["epsilon"] == 0.1 and sec["report"]["passed"] and sec["max_DEF"] < 1
    saved = json.loads((tmp_path / "conditions.json").read_text())
    assert saved["spectral"]["lambda_A_hat"] == pytest.approx(0.25)
    assert {"K1", "K2", "C1", "C4"} <= set(saved["settings"]["iid"]["constants"])
    assert {"K3", "K4", "K5"} <= set(saved["settings"]["markov"]["constants"])


def test_conditions_explicit_infeasible(tmp_path):
    cfg = harness.parse_config(write(tmp_path, """
        [instance]
        kind = "cycle2"
        [conditions]
        setting = "iid"
        alpha = 1.0
        beta = 0.5
        M = 10
    """))
    doc = harness.conditions_report(cfg)
    rep = doc["settings"]["iid"]["report"]
    assert not rep["passed"]
    failed = [c for c in rep["conditions"] if not c["passed"]]
    assert "lr_iid_1" in [c["id"] for c in failed]
    assert all("lhs" in c and "rhs" in c for c in failed)


def test_conditions_kappa_override(tmp_path):
    cfg = harness.parse_config(write(tmp_path, """
        [instance]
        kind = "cycle2"
        [conditions]
        setting = "markov"
        kappa = 0.0
        alpha = 1e-6
        beta = 1e-4
        M = 100
    """))
    doc = harness.conditions_report(cfg)
    from artifact.theory import constants_iid
    from artifact.stats import SpectralConstants, Radii

    sp = SpectralConstants(**doc["spectral"])
    iid = constants_iid(sp, Radii(**doc["radii"]), 0.5)
    assert doc["settings"]["markov"]["constants"]["K1"] == pytest.approx(iid.K1, rel=1e-12)


def test_variance_deterministic_instance(tmp_path):
    path = write(tmp_path, """
        repetitions = 1
        record_every = 20
        [instance]
        kind = "cycle2"
        [variance]
        n_mc = 50
        [[algorithms]]
        name = "TDC"
        alpha = 0.1
        beta = 0.05
        steps = 50
        [[algorithms]]
        name = "VRTDC"
        alpha = 0.1
        beta = 0.05
        M = 10
        epochs = 2
    """)
    # the first record sits on the anchor, where the correction cancels
    harness.cmd_variance(harness.parse_config(path), out=str(tmp_path / "v"))
    rows = read_csv(tmp_path / "v" / "variance" / "VRTDC_MARKOV_rep000.csv")
    assert rows[0] == ["pg_count", "var_theta_update", "var_w_update"]
    first = rows[1]
    assert float(first[1]) == 0.0 and float(first[2]) == 0.0


def test_single_transition_instance_all_zero(tmp_path):
    from artifact.env import FeatureMap, MDPModel, save_model

    model = MDPModel(np.ones((1, 1, 1)), np.ones((1, 1, 1)), 0.5)
    save_model(tmp_path / "one.json", model, FeatureMap(np.array([[1.0]])))
    path = write(tmp_path, """
        record_every = 5
        [instance]
        kind = "file"
        path = "one.json"
        [[algorithms]]
        name = "TDC"
        alpha = 0.1
        beta = 0.05
        steps = 30
        [[algorithms]]
        name = "VRTDC"
        alpha = 0.1
        beta = 0.05
        M = 5
        epochs = 3
    """)
    harness.cmd_variance(harness.parse_config(path), out=str(tmp_path / "v"))
    for name in ("variance_TDC.csv", "variance_VRTDC_MARKOV.csv"):
        rows = read_csv(tmp_path / "v" / name)[1:]
        assert rows and all(float(r[1]) == 0.0 and float(r[2]) == 0.0 for r in rows)


def test_gen_roundtrip(tmp_path):
    path = write(tmp_path, """
        seed = 4
        [instance]
        kind = "garnet"
    """)
    assert main(["gen", "--config", path, "--out", str(tmp_path / "g")]) == 0
    m, f, doc = load_model(tmp_path / "g" / "instance.json")
    p2 = write(tmp_path, f"""
        [instance]
        kind = "file"
        path = "{tmp_path / 'g' / 'instance.json'}"
    """, "file.toml")
    prob = harness.build_problem(harness.parse_config(p2).instance)
    ref = harness.build_problem(harness.parse_config(path).instance)
    assert harness.instance_hash(prob) == harness.instance_hash(ref)


def test_cli_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, "repetitions = 0\n[instance]\nkind = \"cycle2\"\n")
    assert main(["run", "--config", bad]) == 2
    assert "repetitions" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1
    assert main(["conditions", "--config", os.path.join(CONFIGS, "cycle2_conditions.toml"),
                 "--out", str(tmp_path / "c")]) == 0
    assert "iid: passed=True" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["run"])


def test_seed_override_changes_traces_not_instance(tmp_path):
    cfg = harness.parse_config(write(tmp_path, """
        seed = 3
        [instance]
        kind = "garnet"
        [[algorithms]]
        name = "TDC"
        alpha = 0.05
        beta = 0.02
        steps = 200
    """))
    a = harness.cmd_run(cfg, out=str(tmp_path / "a"))
    b = harness.cmd_run(cfg, out=str(tmp_path / "b"), seed=99)
    assert a["instance_hash"] == b["instance_hash"] and b["base_seed"] == 99
    ta = (tmp_path / "a" / "traces" / "TDC_rep000.csv").read_bytes()
    tb = (tmp_path / "b" / "traces" / "TDC_rep000.csv").read_bytes()
    assert ta != tb


def test_write_csv_format(tmp_path):
    p = tmp_path / "x.csv"
    harness.write_csv(p, ["a", "b", "c"], [(1, 0.1, "s"), (np.int64(2), 1 / 3, "t")])
    assert p.read_bytes() == b"a,b,c\n1,0.10000000000000001,s\n2,0.33333333333333331,t\n"

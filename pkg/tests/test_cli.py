import json

import numpy as np
import pytest

from rwsim.cli import main, run
from rwsim.config import PRESETS, ConfigError, ExperimentConfig, preset, validate
from rwsim.environment import load_environment
from rwsim.report import canonical_json, config_hash, rows_to_csv


def _diag_paths(raw):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(raw)
    return info.value.diagnostics


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate_clean(name):
    cfg = ExperimentConfig(**preset(name))
    assert validate(cfg) == []


def test_unknown_field_rejected():
    raw = preset("percolate")
    raw["colour"] = "blue"
    assert ("colour", "unknown field") in _diag_paths(raw)


def test_window_exceeds_torus():
    raw = preset("semigroup-compare")
    raw["window"]["K"] = 4.0
    msgs = [m for p, m in _diag_paths(raw) if p == "window"]
    assert msgs and "window exceeds torus" in msgs[0]


def test_beta_one_subdiffusive_diagnostic():
    raw = preset("btm-hydro")
    raw["scaling"]["beta"] = 1.0
    assert any(p == "scaling.beta" for p, _ in _diag_paths(raw))


def test_subcritical_p_diagnostic():
    raw = preset("percolate")
    raw["law"]["p"] = 0.45
    assert any(p == "law.p" for p, _ in _diag_paths(raw))


def test_nyquist_diagnostic():
    raw = preset("pde-solve")
    raw["profile"]["mode"] = [40, 0]
    raw["grid"] = 64
    assert any("Nyquist" in m for _, m in _diag_paths(raw))


def test_schema_version_checked():
    raw = preset("duality")
    raw["schema_version"] = 99
    assert any(p == "schema_version" for p, _ in _diag_paths(raw))


def test_env_sample_all_ones(tmp_path):
    assert main(["env-sample", "--preset", "env-sample", "--out", str(tmp_path / "e")]) == 0
    env = load_environment(tmp_path / "e" / "environment.bin")
    assert np.all(env.bond_weights == 1.0)
    manifest = json.loads((tmp_path / "e" / "manifest.json").read_text())
    assert set(manifest["files"]) == {"environment.bin", "report.json", "tables/bonds.csv"}


def test_exit_code_validation(tmp_path, capsys):
    cfg = preset("semigroup-compare")
    cfg["window"]["K"] = 10.0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    assert main(["semigroup-compare", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "window exceeds torus" in capsys.readouterr().err


def test_tolerance_validated():
    raw = preset("semigroup-compare")
    raw["tolerances"] = {"semigroup": -1.0}
    assert ("tolerances.semigroup", "must be > 0") in _diag_paths(raw)


def test_exit_code_runtime(tmp_path, capsys):
    import yaml

    from rwsim.environment import EnvironmentLaw, sample_environment
    from rwsim.lattice import Torus
    from rwsim.percolation import label_clusters

    cfg = preset("qip-test")
    cfg["law"] = preset("percolate")["law"]
    cfg["torus"] = {"d": 2, "L": 64}
    env = sample_environment(EnvironmentLaw.from_dict(cfg["law"]), Torus(2, 64), cfg["seed"])
    cfg["x0"] = int(next(x for x in range(env.torus.n_sites) if not label_clusters(env).in_giant[x]))
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(cfg))
    assert main(["qip-test", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "t=1.0/n=4" in err and "giant cluster" in err


def test_validate_subcommand(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(preset("duality")))
    assert main(["validate", "--config", str(p)]) == 0


def test_kind_mismatch(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(preset("duality")))
    assert main(["percolate", "--config", str(p)]) == 2


@pytest.mark.parametrize("name", ["percolate", "semigroup-compare", "ssep-hydro", "duality", "pde-solve"])
def test_rerun_byte_identical(tmp_path, name):
    outs = []
    for i, threads in enumerate((1, 3)):
        out = tmp_path / f"r{i}"
        assert main([name, "--preset", name, "--seed", "17", "--out", str(out), "--threads", str(threads)]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file() and p.name != "manifest.json")
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
    m0 = json.loads((outs[0] / "manifest.json").read_text())
    m1 = json.loads((outs[1] / "manifest.json").read_text())
    assert m0["files"] == m1["files"] and m0["config_hash"] == m1["config_hash"]


def test_seed_changes_output(tmp_path):
    main(["percolate", "--preset", "percolate", "--seed", "1", "--out", str(tmp_path / "a")])
    main(["percolate", "--preset", "percolate", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/tables/labels.csv").read_bytes() != (tmp_path / "b/tables/labels.csv").read_bytes()


def test_run_returns_report():
    rep, extra = run(ExperimentConfig.from_dict(preset("duality")))
    assert rep.summary["max_discrepancy"] < 1e-9 and extra == {}


def test_report_helpers():
    assert config_hash({"a": 1, "b": [1.0]}) == config_hash({"b": [1.0], "a": 1})
    assert rows_to_csv([{"x": 0.1, "y": 2}]) == "x,y\n0.1,2\n"
    assert canonical_json({"v": np.float64(0.5), "k": np.arange(2)}) == '{\n  "k": [\n    0,\n    1\n  ],\n  "v": 0.5\n}\n'

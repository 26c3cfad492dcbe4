import json

import pytest

from fibxy.cli import DEFAULTS, ConfigError, main, parse_config


def _run(tmp_path, argv, config=None):
    args = list(argv) + ["--output_dir", str(tmp_path)]
    if config is not None:
        p = tmp_path / "run.json"
        p.write_text(config if isinstance(config, str) else json.dumps(config))
        args += ["--config", str(p)]
    return main(args)


def _manifest(path):
    return json.loads((path / "manifest.json").read_text())


def test_empty_config_is_defaults(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    assert parse_config(str(p))["n"] == DEFAULTS["n"]
    p.write_text("{}")
    assert parse_config(str(p)) == parse_config(None)


def test_flag_overrides_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"n": 50, "potential": {"kind": "fibonacci", "lambda": 2.0}}))
    cfg = parse_config(str(p), [("potential.lambda", 8.0)])
    assert cfg["n"] == 50 and cfg["potential"]["lambda"] == 8.0


def test_unknown_key(tmp_path, capsys):
    assert _run(tmp_path, ["potential"], {"potentail": {}}) == 2
    assert "potentail" in capsys.readouterr().err
    assert _run(tmp_path, ["potential", "--cone.colour", "red"]) == 2


def test_bad_values_exit_2(tmp_path):
    assert _run(tmp_path, ["potential", "--n", "0"]) == 2
    assert _run(tmp_path, ["potential"], "{not json") == 2
    assert _run(tmp_path, ["potential", "--potential.kind", "nonsense"]) == 2
    with pytest.raises(ConfigError):
        parse_config(str(tmp_path / "missing.json"))


def test_potential_and_manifest(tmp_path):
    assert _run(tmp_path, ["potential", "--potential.kind", "fibonacci", "--potential.lambda=8", "--n", "13"]) == 0
    out = tmp_path / "potential"
    lines = (out / "potential.csv").read_text().split("\n")
    assert lines[0] == "j,V" and len(lines) == 15
    assert [float(l.split(",")[1]) for l in lines[1:6]] == [8.0, 0.0, 8.0, 8.0, 0.0]
    m = _manifest(out)
    assert {f["path"] for f in m["files"]} == {p.name for p in out.iterdir()} - {"manifest.json"}
    assert len(m["config_hash"]) == 64 and m["timestamp"]


def test_numeric_failure_exit_3(tmp_path, monkeypatch):
    import fibxy.oracle
    monkeypatch.setattr(fibxy.oracle, "oracle_grid", lambda grid, jobs: {"points": [], "pass": False})
    assert _run(tmp_path, ["oracle-check"]) == 3
    m = _manifest(tmp_path / "oracle-check")
    assert [f["path"] for f in m["files"]] == ["oracle.json"]


def test_oracle_check_small(tmp_path):
    grid = {"n": [2, 3], "lambda": [1.0], "omega": [0.0], "t": [0.0, 1.0]}
    assert _run(tmp_path, ["oracle-check", "--oracle", json.dumps(grid)]) == 0
    assert json.loads((tmp_path / "oracle-check" / "oracle.json").read_text())["pass"]


def test_wrong_potential_for_tracemap(tmp_path):
    assert _run(tmp_path, ["tracemap"]) == 2


def test_tracemap_small(tmp_path):
    assert _run(tmp_path, ["tracemap", "--potential.kind", "fibonacci", "--potential.lambda", "8",
                           "--tracemap.k", "6"]) == 0
    info = json.loads((tmp_path / "tracemap" / "tracemap.json").read_text())
    assert info["count"] == info["expected_count"] == 13


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*")
            if p.is_file() and p.name != "manifest.json"}


def test_reruns_byte_identical(tmp_path):
    common = ["--potential.kind", "fibonacci", "--potential.lambda", "8", "--n", "200",
              "--t_grid", json.dumps({"start": 0, "stop": 20, "count": 41, "spacing": "linear"}),
              "--window", "[2, 20]", "--n_grid", "[10, 20]"]
    for cmd in ("transport", "cone"):
        extra = ["--cone.thresholds", "[0.01]"] if cmd == "cone" else []
        assert main([cmd, *common, *extra, "--jobs", "1", "--output_dir", str(tmp_path / "a")]) == 0
        assert main([cmd, *common, *extra, "--jobs", "2", "--output_dir", str(tmp_path / "b")]) == 0
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
    ma, mb = _manifest(tmp_path / "a" / "cone"), _manifest(tmp_path / "b" / "cone")
    assert ma["config_hash"] == mb["config_hash"] and ma["files"] == mb["files"]


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FIBXY_OUTPUT_ROOT", str(tmp_path / "env"))
    assert main(["potential", "--n", "5"]) == 0
    assert (tmp_path / "env" / "potential" / "potential.csv").is_file()


def test_negative_lambda_names_field(tmp_path, capsys):
    assert _run(tmp_path, ["potential"], {"potential": {"kind": "fibonacci", "lambda": -1}}) == 2
    assert "lambda" in capsys.readouterr().err

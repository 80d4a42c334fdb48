import csv
import json
import math

import numpy as np
import pytest

from clvtools import __version__
from clvtools.cli import dumps, main, parse_int_list, parse_rates, parse_real, subseed
from clvtools.cocycle import CocycleOrbit, ConjugatedDiagonalSpec, make_conjugated_diagonal, save_orbit
from clvtools.errors import ClvError


def read_json(path):
    return json.loads(path.read_text())


# -- parsers ------------------------------------------------------------------


def test_parse_real_forms():
    assert parse_real("ln4") == math.log(4)
    assert parse_real("-ln2") == -math.log(2)
    assert parse_real("-inf") == float("-inf")
    assert parse_real("0.25") == 0.25
    assert parse_real(3) == 3.0
    with pytest.raises(ValueError):
        parse_real("ln0")
    with pytest.raises(ValueError):
        parse_real("fast")


def test_parse_lists():
    assert parse_rates("ln4,ln2,0") == (math.log(4), math.log(2), 0.0)
    assert parse_int_list("10..30:10,45") == [10, 20, 30, 45]
    assert parse_int_list("1..3") == [1, 2, 3]
    assert parse_int_list([1, 2.0]) == [1, 2]
    with pytest.raises(ValueError):
        parse_int_list("1..5:0")
    with pytest.raises(ValueError):
        parse_int_list([1.5])


def test_subseed_is_stable_and_separates_names():
    assert subseed(1, "spec") == subseed(1, "spec")
    assert subseed(1, "spec") != subseed(1, "ginelli")
    assert subseed(1, "spec") != subseed(2, "spec")


def test_dumps_refuses_nan():
    with pytest.raises(ClvError):
        dumps({"x": float("nan")})


# -- run ----------------------------------------------------------------------


def test_run_generated_spec(tmp_path):
    out = tmp_path / "r.json"
    code = main(["run", "--spec", "conjdiag", "--rates", "ln4,ln2,0", "--n1", "60", "--n2", "60",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    assert len(doc["blocks"]) == 3
    assert all(b["oracle_distance"] < 1e-10 for b in doc["blocks"])
    assert doc["tool_version"] == __version__
    assert doc["window"] == [-60, 60]


def test_run_ingested_orbit(tmp_path):
    spec = ConjugatedDiagonalSpec((math.log(3), 0.0, -1.0), conditioning=4, seed=2)
    orbit, oracle = make_conjugated_diagonal(spec, -40, 30)
    save_orbit(orbit, tmp_path / "mats")
    out = tmp_path / "r.json"
    code = main(["run", "--orbit-dir", str(tmp_path / "mats"), "--k", "3", "--n1", "40", "--n2", "30",
                 "--out", str(out)])
    assert code == 0
    doc = read_json(out)
    for block, y in zip(doc["blocks"], oracle.spaces_at(0)):
        v = np.array(block["vectors"]).T
        assert np.linalg.norm(y.residual(v)) < 1e-8


def test_run_missing_required_flag(capsys):
    assert main(["run", "--rates", "ln2,0", "--n2", "5"]) == 2
    err = capsys.readouterr().err
    assert "ConfigError" in err and "--n1" in err


def test_run_unknown_flag(capsys):
    assert main(["run", "--rates", "ln2,0", "--n1", "5", "--n2", "5", "--bogus", "1"]) == 2
    assert "usage" in capsys.readouterr().err


def test_run_needs_exactly_one_source(tmp_path):
    assert main(["run", "--n1", "5", "--n2", "5"]) == 2
    assert main(["run", "--rates", "0", "--orbit-dir", str(tmp_path), "--k", "1", "--n1", "5", "--n2", "5"]) == 2


def test_run_bad_spec_is_config_error(capsys):
    assert main(["run", "--rates", "0,ln2", "--n1", "5", "--n2", "5"]) == 2
    assert "BadSpec" in capsys.readouterr().err


def test_run_numerical_failure(tmp_path, capsys):
    gens = np.stack([np.eye(2)] * 6)
    gens[1] = 0.0
    save_orbit(CocycleOrbit(gens, -3), tmp_path)
    assert main(["run", "--orbit-dir", str(tmp_path), "--k", "1", "--n1", "3", "--n2", "3"]) == 3
    assert "RankDeficient" in capsys.readouterr().err


def test_run_io_failure(tmp_path, capsys):
    assert main(["run", "--orbit-dir", str(tmp_path / "none"), "--k", "1", "--n1", "3", "--n2", "3"]) == 4
    assert "OrbitFormatError" in capsys.readouterr().err


def test_run_window_outside_orbit(tmp_path, capsys):
    save_orbit(CocycleOrbit.constant(np.eye(2), -3, 3), tmp_path)
    assert main(["run", "--orbit-dir", str(tmp_path), "--k", "1", "--n1", "9", "--n2", "3"]) == 3
    assert "OutOfRange" in capsys.readouterr().err


# -- config files -------------------------------------------------------------


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec.rates": "ln2,0", "ginelli.n1": 30, "ginelli.n2": 30, "seed": 4}))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["run", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["run", "--config", str(cfg), "--n2", "10", "--out", str(b)]) == 0
    assert read_json(a)["window"] == [-30, 30]
    assert read_json(b)["window"] == [-30, 10]
    assert read_json(a)["config"]["seed"] == 4


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"spec.rates": "ln2,0", "ginelli.n1": 3, "ginelli.n2": 3, "bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_config_malformed(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg)]) == 2
    cfg.write_text("[1, 2]")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 4


# -- converge -----------------------------------------------------------------


def test_converge_default_grid_passes(tmp_path):
    out, table = tmp_path / "c.json", tmp_path / "c.csv"
    assert main(["converge", "--rates", "ln4,ln2,0", "--out", str(out), "--csv", str(table)]) == 0
    doc = read_json(out)
    assert doc["grid"] == [10, 20, 30, 40, 50, 60]
    assert doc["seeds"] == [0, 1, 2, 3, 4]
    assert all(b["pass"] for b in doc["blocks"])
    with open(table) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["N", "block", "distance", "seed"]
    assert len(rows) == 1 + 6 * 3 * 5


def test_converge_single_block(tmp_path):
    out = tmp_path / "c.json"
    assert main(["converge", "--rates", "0,0,0", "--conditioning", "5", "--out", str(out)]) == 0
    assert read_json(out)["blocks"][0]["trivial"]


def test_converge_malformed_grid(capsys):
    assert main(["converge", "--rates", "ln4,ln2,0", "--grid", "10,5"]) == 2
    assert main(["converge", "--rates", "ln4,ln2,0", "--grid", "ten"]) == 2
    assert main(["converge", "--rates", "ln4,ln2,0", "--grid", "0,5,10"]) == 2


def test_converge_failure_exit_code(tmp_path):
    # two grid points cannot support a rate fit, so no block passes
    assert main(["converge", "--rates", "ln4,ln2,0", "--grid", "50,60", "--out", str(tmp_path / "c.json")]) == 1


def test_converge_is_byte_identical(tmp_path, monkeypatch):
    args = ["converge", "--rates", "ln4,ln2,ln2,0", "--conditioning", "5", "--grid", "5..30:5", "--seeds", "0,1"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(args + ["--out", str(a)])
    monkeypatch.setenv("CLV_THREADS", "3")
    main(args + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_bad_thread_setting(monkeypatch):
    monkeypatch.setenv("CLV_THREADS", "many")
    assert main(["converge", "--rates", "ln2,0", "--grid", "5..20:5", "--seeds", "0"]) == 2


# -- lemma-check --------------------------------------------------------------


@pytest.mark.parametrize("lemma", ["forward", "backward"])
def test_lemma_check_sweep(tmp_path, lemma):
    out, table = tmp_path / "l.json", tmp_path / "l.csv"
    code = main(["lemma-check", "--lemma", lemma, "--instances", "1000", "--seed", "3", "--samples", "500",
                 "--out", str(out), "--csv", str(table)])
    assert code == 0
    (summary,) = read_json(out)["sweeps"]
    assert summary["violations"] == 0
    assert summary["precondition_met"] >= 300
    with open(table) as fh:
        assert sum(1 for _ in fh) == summary["precondition_met"] + 1


def test_lemma_check_all_writes_one_table_per_lemma(tmp_path):
    table = tmp_path / "l.csv"
    assert main(["lemma-check", "--instances", "20", "--samples", "100", "--csv", str(table),
                 "--out", str(tmp_path / "l.json")]) == 0
    for name in ("forward", "corollary", "backward"):
        assert (tmp_path / f"l_{name}.csv").exists()


def test_lemma_check_zero_instances():
    assert main(["lemma-check", "--instances", "0"]) == 2
    assert main(["lemma-check", "--lemma", "sideways"]) == 2


# -- ulam ---------------------------------------------------------------------


def test_ulam_doubling_map_is_uniform(tmp_path):
    assert main(["ulam", "--eps", "0", "--bins", "64", "--out-dir", str(tmp_path)]) == 0
    doc = read_json(tmp_path / "ulam.json")
    assert doc["runs"][0]["l1_to_uniform"] <= 1e-6
    with open(tmp_path / "leading_density.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 64
    assert max(abs(float(r["density"]) - 1) for r in rows) <= 1e-6


def test_ulam_truncation_stability(tmp_path):
    code = main(["ulam", "--eps", "0.05", "--bins", "64,128,256", "--k-max", "2", "--out-dir", str(tmp_path),
                 "--export-orbit", str(tmp_path / "orbit")])
    assert code == 0
    doc = read_json(tmp_path / "ulam.json")
    leading = [p for p in doc["truncation"] if p["k"] == 1]
    assert len(leading) == 3
    assert max(p["distance"] for p in leading) <= 0.05
    assert all(abs(r["exponents"][0]) < 1e-3 for r in doc["runs"])
    assert (tmp_path / "orbit" / "manifest.json").exists()


def test_ulam_non_expanding(tmp_path, capsys):
    assert main(["ulam", "--eps", "0.3", "--out-dir", str(tmp_path)]) == 2
    assert "BadSpec" in capsys.readouterr().err


def test_ulam_requires_out_dir():
    assert main(["ulam"]) == 2


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out

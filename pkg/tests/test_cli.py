import json
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from vinemeff import BlockMeffTest
from vinemeff.cli import main, read_csv_matrix
from vinemeff.experiments import gen_gauss15
from vinemeff.grouping import singleton_grouping
from vinemeff.meff import Calibration
from vinemeff.vine_model import VineModel


@pytest.fixture(scope="module")
def gauss_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    x = gen_gauss15(300, rng=np.random.default_rng(11))
    path = d / "x.csv"
    np.savetxt(path, x, delimiter=",", fmt="%.17g")
    return path, x


@pytest.fixture(scope="module")
def fitted(gauss_csv, tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    assert main(["fit", "--input", str(gauss_csv[0]), "--out", str(d / "model.json")]) == 0
    return d / "model.json"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_writes_model_and_report(fitted):
    model = VineModel.from_json(fitted)
    assert model.M == 15 and model.K == 2
    assert len(model.structure.level_edges(1)) == 14
    report = fitted.parent / "model_edges.csv"
    assert report.read_text().splitlines()[0].startswith("level,edge,family")


def test_fit_trunc_and_families(gauss_csv, tmp_path, capsys):
    code, _, _ = run(capsys, "fit", "--input", gauss_csv[0], "--trunc", 1, "--families", "gaussian",
                     "--out", tmp_path / "m.json")
    assert code == 0
    model = VineModel.from_json(tmp_path / "m.json")
    assert all(e.copula.is_independence for lvl in range(2, 15) for e in model.structure.level_edges(lvl))
    assert {e.copula.family.value for e in model.structure.edges()} <= {"gaussian", "independence"}


def test_fit_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\n5,x\n")
    code, _, err = run(capsys, "fit", "--input", bad, "--out", tmp_path / "m.json")
    assert code == 3 and "row 3, column 2" in err

    const = tmp_path / "const.csv"
    rows = ["a,b,c"] + [f"{i},7,{(i * 7) % 11}" for i in range(20)]
    const.write_text("\n".join(rows) + "\n")
    code, _, err = run(capsys, "fit", "--input", const, "--header", "--out", tmp_path / "m.json")
    assert code == 3 and "column b is constant" in err

    code, _, _ = run(capsys, "fit", "--input", tmp_path / "missing.csv", "--out", tmp_path / "m.json")
    assert code == 3


def test_fit_trunc_out_of_range(gauss_csv, tmp_path, capsys):
    code, _, err = run(capsys, "fit", "--input", gauss_csv[0], "--trunc", 15, "--out", tmp_path / "m.json")
    assert code == 2 and "--trunc" in err


def test_read_csv_matrix(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n1,2\n\n3,4\n")
    x, names = read_csv_matrix(p, header=True)
    assert names == ["x", "y"]
    assert_allclose(x, [[1, 2], [3, 4]])


def test_group(fitted, tmp_path, capsys):
    code, out, _ = run(capsys, "group", "--model", fitted, "--blocks", 3, "--out", tmp_path / "g.json")
    assert code == 0
    blocks = json.loads((tmp_path / "g.json").read_text())["blocks"]
    assert {frozenset(b) for b in blocks} == {frozenset(range(k, 15, 3)) for k in range(3)}
    code, _, err = run(capsys, "group", "--model", fitted, "--blocks", 16, "--out", tmp_path / "g2.json")
    assert code == 2


def test_group_two_coordinates(tmp_path, capsys):
    rng = np.random.default_rng(3)
    z = rng.normal(size=(50, 1))
    np.savetxt(tmp_path / "x.csv", np.hstack([z, z + rng.normal(size=(50, 1))]), delimiter=",")
    assert run(capsys, "fit", "--input", tmp_path / "x.csv", "--trunc", 1, "--out", tmp_path / "m.json")[0] == 0
    assert run(capsys, "group", "--model", tmp_path / "m.json", "--blocks", 1, "--out", tmp_path / "g.json")[0] == 0
    assert json.loads((tmp_path / "g.json").read_text())["blocks"] == [[0, 1]]


@pytest.mark.parametrize("M,marginal,expected", [(15, "half_normal", 2.928), (9, "std_normal", 2.531)])
def test_calibrate_sidak(M, marginal, expected, tmp_path, capsys):
    singleton_grouping(M).to_json(tmp_path / "g.json")
    code, _, _ = run(capsys, "calibrate", "--groups", tmp_path / "g.json", "--marginal", marginal,
                     "--out", tmp_path / "c.json")
    assert code == 0
    cal = Calibration.from_json(tmp_path / "c.json")
    assert abs(cal.critical_values[0] - expected) < 0.002


def test_calibrate_single_statistic(tmp_path, capsys):
    singleton_grouping(1).to_json(tmp_path / "g.json")
    run(capsys, "calibrate", "--groups", tmp_path / "g.json", "--alpha", 0.1, "--out", tmp_path / "c.json")
    assert Calibration.from_json(tmp_path / "c.json").alpha_loc == pytest.approx(0.1)


def test_decisions(tmp_path, capsys):
    singleton_grouping(3).to_json(tmp_path / "g.json")
    run(capsys, "calibrate", "--groups", tmp_path / "g.json", "--out", tmp_path / "c.json")
    c = Calibration.from_json(tmp_path / "c.json").critical_values[0]
    stats = tmp_path / "t.csv"

    stats.write_text("0.1,0.2,-3\n")
    code, out, _ = run(capsys, "test", "--stats", stats, "--calib", tmp_path / "c.json")
    assert code == 0 and out.count("retain") == 4

    stats.write_text(f"{c + 1!r},0.2,-3\n")
    out = run(capsys, "test", "--stats", stats, "--calib", tmp_path / "c.json")[1]
    assert "H1:" in out and out.splitlines()[0].endswith("reject") and "global null: reject" in out

    stats.write_text(f"{c!r},{c!r},{c!r}\n")
    out = run(capsys, "test", "--stats", stats, "--calib", tmp_path / "c.json")[1]
    assert "reject" not in out

    stats.write_text("1,2\n")
    assert run(capsys, "test", "--stats", stats, "--calib", tmp_path / "c.json")[0] == 2


def test_file_round_trip_matches_estimator(gauss_csv, fitted, tmp_path, capsys):
    run(capsys, "group", "--model", fitted, "--blocks", 3, "--seed", 7, "--out", tmp_path / "g.json")
    code, _, _ = run(capsys, "calibrate", "--model", fitted, "--groups", tmp_path / "g.json",
                     "--marginal", "half_normal", "--mc", 20000, "--seed", 7, "--out", tmp_path / "c.json")
    assert code == 0
    cal = Calibration.from_json(tmp_path / "c.json")
    est = BlockMeffTest(n_blocks=3, mc_size=20000, marginal="half_normal", random_state=7).fit(gauss_csv[1])
    assert [list(b) for b in est.grouping_.blocks] == json.loads((tmp_path / "g.json").read_text())["blocks"]
    assert_allclose(cal.critical_values, est.critical_values_, rtol=0, atol=0)
    assert cal.total_meff == est.calibration_.total_meff


def test_sample(fitted, tmp_path, capsys):
    assert run(capsys, "sample", "--model", fitted, "--n", 50, "--out", tmp_path / "s.csv")[0] == 0
    u = np.loadtxt(tmp_path / "s.csv", delimiter=",")
    assert u.shape == (50, 15) and np.all((u > 0) & (u < 1))


def test_reproduce_smoke(tmp_path, capsys):
    start = time.perf_counter()
    code, out, _ = run(capsys, "reproduce", "--study", "vine9", "--runs", 4, "--mc", 5000,
                       "--threads", 1, "--out", tmp_path)
    assert code == 0 and time.perf_counter() - start < 60
    for table in ("meff", "critical_values", "power", "fwer"):
        lines = (tmp_path / f"vine9_{table}.csv").read_text().splitlines()
        assert len(lines) == 5 and lines[1] == "comparator,n=100,n=200,n=300"
    assert run(capsys, "reproduce", "--study", "vine9", "--comparators", "", "--out", tmp_path)[0] == 2

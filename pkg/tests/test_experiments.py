import math
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from vinemeff.exceptions import ConfigurationError
from vinemeff.experiments import (GAUSS15_THETA, STUDIES, VINE9_THETA, ExperimentConfig, emit_tables,
                                  gauss15_covariance, gen_gauss15, gen_vine9, run_one, run_study,
                                  vine9_model)
from vinemeff.numerics import RngStream
from vinemeff.vine_model import is_dvine, validate


def test_gauss15_covariance_entries():
    s = gauss15_covariance()
    assert s.shape == (15, 15)
    assert s[0, 3] == 0.9 and s[0, 1] == 0.0 and s[2, 14] == 0.9 and s[4, 4] == 1.0
    assert np.all(np.linalg.eigvalsh(s) > 0)
    assert_allclose(GAUSS15_THETA[11:], 0.15)
    assert not GAUSS15_THETA[:11].any()


def test_gen_gauss15():
    n = 100_000
    x = gen_gauss15(n, rng=RngStream(1))
    assert np.all(np.abs(x.mean(axis=0)) < 4 / math.sqrt(n))
    r = np.corrcoef(x[:, :4].T)
    assert abs(r[0, 3] - 0.9) < 0.01 and abs(r[0, 1]) < 0.01
    alt = gen_gauss15(n, under_null=False, rng=RngStream(1))
    assert_allclose(alt - x, np.tile(GAUSS15_THETA, (n, 1)), atol=1e-12)


def test_gen_vine9():
    n = 100_000
    x = gen_vine9(n, rng=RngStream(2))
    assert np.all(np.abs(x.mean(axis=0)) < 4 / math.sqrt(n))
    # 1-based pair (5, 8) carries Gumbel 8
    assert abs(stats.kendalltau(x[:, 4], x[:, 7]).statistic - 0.875) < 0.01
    assert abs(stats.kendalltau(x[:, 0], x[:, 1]).statistic) < 0.01
    assert_allclose(VINE9_THETA, [0, 0, 0, 0, 0, 0.15, 0.15, 0.15, 0.15])


def test_vine9_model_shape():
    m = vine9_model()
    assert m.M == 9 and m.K == 2
    assert validate(m.structure) == [] and is_dvine(m.structure)
    dependent = [e for e in m.structure.edges() if not e.copula.is_independence]
    assert len(dependent) == 9
    assert all(e.conditioned[0] % 3 == e.conditioned[1] % 3 for e in dependent)


def test_study_definitions():
    assert STUDIES["gauss15"].marginal == "half_normal" and STUDIES["gauss15"].two_sided
    assert STUDIES["vine9"].marginal == "std_normal" and not STUDIES["vine9"].two_sided
    assert [len(b) for b in STUDIES["gauss15"].fixed_blocks] == [5, 5, 5]


@pytest.mark.parametrize("kwargs", [
    dict(study="other", n=100), dict(study="vine9", n=100, comparators=()),
    dict(study="vine9", n=100, comparators=("bonferroni",)), dict(study="vine9", n=5),
    dict(study="vine9", n=100, runs=0), dict(study="vine9", n=100, K=9),
    dict(study="vine9", n=100, B=10), dict(study="vine9", n=100, alpha=1.0),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**kwargs)


def test_run_one_is_deterministic():
    cfg = ExperimentConfig("vine9", 100, runs=1, mc_size=5000)
    a, b = run_one(cfg, 3), run_one(cfg, 3)
    assert a == b
    assert set(a) == {"sidak", "fixed", "chosen"}
    assert a["sidak"]["meff"] == 9
    assert 1 <= a["chosen"]["meff"] <= 9
    assert a["chosen"]["blocks"] is not None and a["fixed"]["blocks"] is None
    assert run_one(cfg, 4) != a


def test_run_study_and_tables(tmp_path):
    results = [run_study(ExperimentConfig("vine9", n, runs=4, mc_size=4000)) for n in (100, 200, 300)]
    assert all(r.completed == 4 and not r.failures for r in results)
    paths = emit_tables(results, tmp_path / "a")
    csvs = sorted(os.path.basename(p) for p in paths if p.endswith(".csv"))
    assert csvs == ["vine9_critical_values.csv", "vine9_fwer.csv", "vine9_meff.csv", "vine9_power.csv"]
    lines = (tmp_path / "a" / "vine9_meff.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and "seed=42" in lines[0]
    assert lines[1] == "comparator,n=100,n=200,n=300"
    assert [l.split(",")[0] for l in lines[2:]] == ["Sidak correction", "fixed groups", "chosen groups"]
    assert all(len(l.split(",")) == 4 for l in lines[1:])
    sidak_c = float((tmp_path / "a" / "vine9_critical_values.csv").read_text().splitlines()[2].split(",")[1])
    assert abs(sidak_c - 2.531) < 0.002

    again = [run_study(ExperimentConfig("vine9", n, runs=4, mc_size=4000)) for n in (100, 200, 300)]
    emit_tables(again, tmp_path / "b")
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_parallel_matches_serial():
    cfg = ExperimentConfig("gauss15", 100, runs=3, mc_size=3000)
    assert run_study(cfg, threads=2).rows == run_study(cfg, threads=1).rows


def test_emit_tables_rejects_empty(tmp_path):
    with pytest.raises(ConfigurationError):
        emit_tables([], tmp_path)

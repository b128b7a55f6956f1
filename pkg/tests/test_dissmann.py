import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from vinemeff.dissmann import (_kruskal, conditional_pseudo_obs, edge_report, edge_report_csv,
                               kendall_tau_empirical, parse_candidates, pseudo_obs,
                               select_structure)
from vinemeff.exceptions import DegenerateError, DomainError
from vinemeff.experiments import gen_gauss15
from vinemeff.pair_copulas import INDEPENDENCE, Family, PairCopulaSpec
from vinemeff.sampler import sample
from vinemeff.vine_model import VineEdge, validate

from conftest import dvine


def brute_tau(x, y):
    """Tau-b by counting all pairs."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        s = np.sign(x[i] - x[j]) * np.sign(y[i] - y[j])
        if s > 0:
            conc += 1
        elif s < 0:
            disc += 1
        elif x[i] == x[j] and y[i] != y[j]:
            tx += 1
        elif y[i] == y[j] and x[i] != x[j]:
            ty += 1
    n0 = conc + disc
    return (conc - disc) / np.sqrt((n0 + tx) * (n0 + ty))


def tree1(model):
    return {tuple(sorted(e.conditioned)) for e in model.structure.level_edges(1)}


def test_pseudo_obs_examples():
    assert_allclose(pseudo_obs([[3.0], [1.0], [2.0]], min_n=3)[:, 0], [0.75, 0.25, 0.5])
    assert_allclose(pseudo_obs([[1.0], [1.0], [2.0]], min_n=3)[:, 0], [0.375, 0.375, 0.75])
    n = 12
    assert_allclose(pseudo_obs(np.arange(n, dtype=float)[:, None])[:, 0],
                    np.arange(1, n + 1) / (n + 1))


def test_pseudo_obs_errors():
    with pytest.raises(DomainError):
        pseudo_obs(np.random.default_rng(0).normal(size=(5, 2)))
    x = np.random.default_rng(0).normal(size=(20, 3))
    x[:, 1] = 4.0
    with pytest.raises(DegenerateError) as info:
        pseudo_obs(x)
    assert info.value.column == 1
    x[0, 0] = np.nan
    with pytest.raises(DomainError):
        pseudo_obs(x)


@settings(max_examples=40, deadline=None)
@given(st.integers(10, 60), st.integers(0, 2 ** 31))
def test_pseudo_obs_is_rank_invariant(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    u = pseudo_obs(x)
    assert_allclose(np.sort(u, axis=0), np.tile(np.arange(1, n + 1)[:, None] / (n + 1), 3))
    assert_allclose(pseudo_obs(np.exp(x) * 3 - 1), u)


def test_kendall_tau_examples():
    assert kendall_tau_empirical([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert kendall_tau_empirical([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert kendall_tau_empirical([1, 2, 3, 4], [2, 1, 3, 4]) == pytest.approx(2 / 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=3, max_size=25))
def test_kendall_tau_matches_pair_count(pairs):
    x, y = map(list, zip(*pairs))
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert kendall_tau_empirical(x, y) == pytest.approx(brute_tau(x, y), abs=1e-12)


def test_kendall_tau_errors():
    with pytest.raises(DegenerateError):
        kendall_tau_empirical([1, 1, 1], [1, 2, 3])
    with pytest.raises(DomainError):
        kendall_tau_empirical([1, 2], [1, 2, 3])


def test_kruskal_three_node_example():
    # 0-based: |tau_01| = 0.8, |tau_12| = 0.7, |tau_02| = 0.1
    chosen = _kruskal(3, [(0.8, (0, 1), 0, 1), (0.1, (0, 2), 0, 2), (0.7, (1, 2), 1, 2)])
    assert {eid for eid, _, _ in chosen} == {(0, 1), (1, 2)}


def test_kruskal_tie_break_is_lexicographic():
    chosen = _kruskal(3, [(0.5, (1, 2), 1, 2), (0.5, (0, 2), 0, 2), (0.5, (0, 1), 0, 1)])
    assert [eid for eid, _, _ in chosen] == [(0, 1), (0, 2)]


def spanning_trees(M):
    pairs = list(itertools.combinations(range(M), 2))
    for subset in itertools.combinations(pairs, M - 1):
        parent = list(range(M))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a
        ok = True
        for a, b in subset:
            ra, rb = find(a), find(b)
            if ra == rb:
                ok = False
                break
            parent[ra] = rb
        if ok:
            yield subset


@pytest.mark.parametrize("M", [3, 4, 5, 6])
def test_tree1_weight_is_maximal(M):
    rng = np.random.default_rng(M)
    A = rng.normal(size=(M, M)) * 0.8
    x = rng.normal(size=(150, M)) @ A
    u = pseudo_obs(x)
    model = select_structure(u, K=1, candidates=["gaussian"])
    tau = {(i, j): abs(kendall_tau_empirical(u[:, i], u[:, j]))
           for i, j in itertools.combinations(range(M), 2)}
    chosen = sum(tau[e] for e in tree1(model))
    best = max(sum(tau[e] for e in t) for t in spanning_trees(M))
    assert chosen == pytest.approx(best, abs=1e-12)


def test_two_coordinates():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(300, 1))
    x = np.hstack([z, z + rng.normal(size=(300, 1))])
    model = select_structure(pseudo_obs(x), K=1)
    assert tree1(model) == {(0, 1)}
    assert not model.structure.edge((0, 1)).copula.is_independence


def test_three_coordinate_chain():
    c01 = PairCopulaSpec("clayton", 0, 8.0)     # tau 0.8
    c12 = PairCopulaSpec("gumbel", 0, 1 / 0.3)  # tau 0.7
    truth = dvine([0, 1, 2], {((0, 1), ()): c01, ((1, 2), ()): c12}, K=1)
    u = sample(truth, 2000, 3)
    assert tree1(select_structure(pseudo_obs(u), K=2)) == {(0, 1), (1, 2)}


def test_clayton_chain_recovery(clayton3_chain):
    truth = tree1(clayton3_chain)
    hits = 0
    for seed in range(100):
        u = sample(clayton3_chain, 2000, seed)
        hits += tree1(select_structure(pseudo_obs(u), K=1, candidates=["clayton"])) == truth
    assert hits >= 95


def test_gauss15_tree1_stays_within_blocks():
    x = gen_gauss15(300, rng=np.random.default_rng(300))
    model = select_structure(pseudo_obs(x), K=2)
    edges = tree1(model)
    within = [e for e in edges if e[0] % 3 == e[1] % 3]
    assert len(within) == 12 and len(edges) == 14
    assert validate(model.structure) == []
    assert model.structure.level_edges(2) and all(
        e.copula.is_independence for lvl in range(3, 15) for e in model.structure.level_edges(lvl))


def test_fit_report_and_edge_report(clayton3_chain, tmp_path):
    u = sample(clayton3_chain, 500, 9)
    model = select_structure(pseudo_obs(u), K=2)
    fitted = [e for lvl in (1, 2) for e in model.structure.level_edges(lvl)]
    assert set(model.fit_report) == {e.key for e in fitted}
    rows = edge_report(model)
    assert len(rows) == len(fitted)
    text = edge_report_csv(model, tmp_path / "edges.csv")
    assert text.splitlines()[0] == "level,edge,family,rotation,theta,tau_empirical,tau_model,aic"
    assert (tmp_path / "edges.csv").read_text() == text


def test_deterministic():
    x = gen_gauss15(200, rng=np.random.default_rng(5))
    a = select_structure(pseudo_obs(x), K=2)
    b = select_structure(pseudo_obs(x), K=2)
    assert a.to_json() == b.to_json()


def test_restricted_families():
    x = gen_gauss15(200, rng=np.random.default_rng(6))
    model = select_structure(pseudo_obs(x), K=2, candidates=["gaussian"])
    fams = {e.copula.family for e in model.structure.edges()}
    assert fams <= {Family.GAUSSIAN, Family.INDEPENDENCE}


def test_parse_candidates():
    c = parse_candidates("clayton,frank")
    assert (Family.INDEPENDENCE, 0) in c and (Family.CLAYTON, 270) in c and (Family.FRANK, 0) in c
    assert (Family.GAUSSIAN, 0) not in c
    with pytest.raises(DomainError):
        parse_candidates(["student"])


def test_truncation_level_checked():
    u = pseudo_obs(np.random.default_rng(0).normal(size=(50, 3)))
    for K in (0, 3):
        with pytest.raises(DomainError):
            select_structure(u, K=K)


def test_conditional_pseudo_obs_examples():
    u, v = np.array([0.2, 0.5]), np.array([0.9, 0.3])
    a, b = conditional_pseudo_obs(VineEdge(1, (0, 1)), u, v)
    assert_array_equal(a, u)
    assert_array_equal(b, v)
    a, b = conditional_pseudo_obs(VineEdge(1, (0, 1), (), PairCopulaSpec("gaussian", 0, 0.9)), 0.5, 0.5)
    assert_allclose([a, b], [0.5, 0.5], atol=1e-12)
    a, b = conditional_pseudo_obs(VineEdge(1, (0, 1), (), PairCopulaSpec("clayton", 0, 2.0)), 0.5, 0.5)
    assert_allclose([a, b], [0.432, 0.432], atol=5e-5)

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popgraph import graph as G
from popgraph import interchange as I


def oracle_matrix(g: G.Graph, k: int):
    """Dense chain on card tuples, built directly from the move rules."""
    size = g.n * k
    states = list(itertools.permutations(range(size)))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        i = index[s]
        P[i, i] += 0.25
        for u in range(g.n):
            st_ = list(s)
            blk = st_[u * k:(u + 1) * k]
            st_[u * k:(u + 1) * k] = blk[1:] + blk[:1]
            P[i, index[tuple(st_)]] += 0.5 / g.n
        for u, v in g.edges:
            st_ = list(s)
            st_[u * k], st_[v * k] = st_[v * k], st_[u * k]
            P[i, index[tuple(st_)]] += 0.25 / g.m
    return P, index[tuple(range(size))]


def oracle_tau(g, k, eps):
    P, start = oracle_matrix(g, k)
    p = np.zeros(P.shape[0])
    p[start] = 1
    t = 0
    while np.abs(p - 1 / p.size).sum() > 2 * eps:
        p = p @ P
        t += 1
    return t


def test_point_mass_at_zero():
    p = I.exact_distribution(G.generate("cycle", n=3), 2, 0)
    assert p[0] == 1.0 and p.sum() == 1.0


def test_k2_one_step():
    p = I.exact_distribution(G.generate("clique", n=2), 1, 1)
    assert np.allclose(p, [0.75, 0.25], atol=1e-15)


@pytest.mark.parametrize("t", [1, 2, 5, 10])
def test_k2_closed_form(t):
    p = I.exact_distribution(G.generate("clique", n=2), 1, t)
    assert abs(p[0] - (0.5 + 0.5 * 0.5 ** t)) < 1e-15
    assert abs(I.l1_to_uniform(p) - 0.5 ** t) < 1e-15


def test_k2_mixing_time():
    assert I.estimate_mixing_time(G.generate("clique", n=2), 1, 0.25) == 1


def test_c3_converges_to_uniform():
    p = I.exact_distribution(G.generate("cycle", n=3), 1, 200)
    assert np.all(np.abs(p - 1 / 6) < 1e-6)


@pytest.mark.parametrize("g,k,eps", [
    (G.generate("cycle", n=3), 1, 0.25),
    (G.generate("cycle", n=3), 2, 0.25),
    (G.generate("cycle", n=5), 1, 0.1),
    (G.generate("star", leaves=3), 1, 0.05),
    (G.generate("path", n=4), 1, 0.25),
])
def test_exact_tau_matches_oracle(g, k, eps):
    assert I.exact_mixing_time(g, k, eps) == oracle_tau(g, k, eps)


def test_exact_matrix_matches_oracle_spectrum():
    g = G.generate("cycle", n=3)
    P = I.ExactChain(g, 2).transition_matrix()
    Q, _ = oracle_matrix(g, 2)
    # same chain up to relabeling: compare sorted eigenvalues
    assert np.allclose(np.sort(np.linalg.eigvals(P).real), np.sort(np.linalg.eigvals(Q).real), atol=1e-10)


@pytest.mark.parametrize("g,k", [(G.generate("cycle", n=3), 2), (G.generate("star", leaves=2), 2),
                                 (G.generate("clique", n=4), 1), (G.generate("path", n=3), 2)])
def test_doubly_stochastic(g, k):
    P = I.ExactChain(g, k).transition_matrix()
    assert np.allclose(P.sum(axis=0), 1, atol=1e-12)
    assert np.allclose(P.sum(axis=1), 1, atol=1e-12)


@pytest.mark.parametrize("g,k", [(G.generate("cycle", n=4), 2), (G.generate("star", leaves=3), 2)])
def test_uniform_is_stationary(g, k):
    chain = I.ExactChain(g, k)
    u = chain.uniform()
    assert np.allclose(chain.step(u), u, atol=1e-15)


@pytest.mark.parametrize("g,k", [(G.generate("cycle", n=4), 2), (G.generate("clique", n=5), 1),
                                 (G.generate("star", leaves=3), 2)])
def test_increment_distribution_symmetric(g, k):
    mu = dict(I.increment_distribution(g, k))
    assert sum(mu.values()) == 1
    for h, p in mu.items():
        assert mu.get(h.inverse()) == p


def test_rotation_not_involution_for_k3():
    h = I.rotation(2, 3, 0)
    assert h * h != I.Permutation.identity(6)


def test_increment_masses():
    g = G.generate("cycle", n=4)
    mu = dict(I.increment_distribution(g, 2))
    assert mu[I.rotation(4, 2, 1)] == Fraction(1, 8)
    assert mu[I.top_swap(4, 2, 0, 1)] == Fraction(1, 16)
    assert mu[I.Permutation.identity(8)] == Fraction(1, 4)
    # k = 1: rotations merge into the identity
    mu1 = dict(I.increment_distribution(g, 1))
    assert mu1[I.Permutation.identity(4)] == Fraction(3, 4)


def test_embedded_step_law_on_regular_graph():
    """Enumerate all scheduler outcomes of apply_interaction and recover the increment law."""
    g = G.generate("cycle", n=4)
    k = 2
    law: Counter = Counter()
    for (u, v), o, qi, qr in itertools.product(g.edges, (0, 1), (0, 1), (0, 1)):
        a, b = (u, v) if o == 0 else (v, u)
        cfg = I.apply_interaction(I.StackConfig.identity(g.n, k), a, b, qi, qr)
        law[tuple(cfg.cards.tolist())] += Fraction(1, g.m * 8)
    expect: Counter = Counter()
    for h, p in I.increment_distribution(g, k):
        expect[h.inverse().images] += p  # cards = inverse of the location map
    assert law == expect


def test_d1_monotone():
    rows = I.mixing_curve(G.generate("cycle", n=4), 2, 60)
    d1 = [r[1] for r in rows]
    assert all(b <= a + 1e-15 for a, b in zip(d1, d1[1:]))
    assert rows[0][1] == pytest.approx(2 * (1 - 1 / 40320))


def test_tv_examples():
    point = np.eye(6)[0]
    assert I.tv_distance(point, point) == 0
    assert I.tv_distance(point, np.full(6, 1 / 6)) == pytest.approx(5 / 6)
    assert I.tv_distance(np.eye(6)[0], np.eye(6)[3]) == 1


def test_tv_errors():
    with pytest.raises(ValueError):
        I.tv_distance([1.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        I.tv_distance([0.5, 0.4], [0.5, 0.5])


@pytest.mark.parametrize("eps", [0, 0.5, -1, 0.7])
def test_eps_range(eps):
    with pytest.raises(ValueError):
        I.estimate_mixing_time(G.generate("clique", n=2), 1, eps)


def test_size_error():
    with pytest.raises(I.SizeError):
        I.exact_distribution(G.generate("cycle", n=9), 1, 1)
    with pytest.raises(I.SizeError):
        I.exact_distribution(G.generate("cycle", n=3), 3, 1)


def test_k1_rotation_noop_and_k2_rotation():
    cfg = I.StackConfig.identity(3, 1)
    cfg.rotate(1)
    assert cfg.cards.tolist() == [0, 1, 2]
    cfg2 = I.StackConfig(2, 2, np.array([5, 7, 1, 3]))
    cfg2.rotate(0)
    assert cfg2.stack(0) == [7, 5]


def test_k2_swap_frequency():
    g = G.generate("clique", n=2)
    rng = np.random.default_rng(17)
    trials = 10**6
    swaps = 0
    for _ in range(trials):
        cfg = I.interchange_step(I.StackConfig.identity(2, 1), g, rng)
        swaps += cfg.cards[0] == 1
    sigma = np.sqrt(0.25 * 0.75 / trials)
    assert abs(swaps / trials - 0.25) < 3 * sigma


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(1, 300))
def test_bijection_preserved(seed, k, steps):
    g = G.generate("cycle", n=5)
    rng = np.random.default_rng(seed)
    cfg = I.StackConfig.identity(g.n, k)
    for _ in range(steps):
        I.interchange_step(cfg, g, rng)
    assert cfg.is_bijection()


@given(st.permutations(list(range(6))))
def test_permutation_algebra(images):
    p = I.Permutation(tuple(images))
    assert (p * p.inverse()).is_identity()
    assert I.Permutation.unrank(p.rank(), 6) == p
    assert I.rank_array(np.array([images]))[0] == p.rank()


def test_sampler_matches_exact_distribution():
    g = G.generate("cycle", n=3)
    emp = I.sample_full_process(g, 2, 6, samples=200_000, seed=3)
    exact = I.exact_distribution(g, 2, 6)
    assert I.tv_distance(emp, exact) < 0.02


def test_projection_sampler_matches_exact_projection():
    g = G.generate("cycle", n=8)
    tau = I.projected_mixing_time(g, 2, 0.25)
    est = I.sampled_mixing_time(g, 2, 0.25, samples=40_000, seed=1)
    assert abs(est - tau) / tau < 0.1


def test_projection_lower_bounds_full_chain():
    g = G.generate("cycle", n=4)
    assert I.projected_mixing_time(g, 2, 0.25) <= I.exact_mixing_time(g, 2, 0.25)


def test_power_law_exponent():
    assert I.power_law_exponent([2, 4, 8], [8, 64, 512]) == pytest.approx(3.0)


def test_dump_distribution_keys():
    import json
    text = I.dump_distribution(I.exact_distribution(G.generate("clique", n=2), 1, 1), 2)
    assert json.loads(text) == {"00": 0.75, "10": 0.25}

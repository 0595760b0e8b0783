import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amopt.errors import ParameterError, ShapeError
from amopt.shapley import CoalitionGame, ShapleyReport, exact_shapley, explain_instances, sampled_shapley
from oracles import shapley_brute_force


def _table_game(table):
    return CoalitionGame(len(max(table, key=len)) if table else 0, value=lambda s: table[s])


def test_two_player_example():
    v = {frozenset(): 0, frozenset({0}): 1, frozenset({1}): 2, frozenset({0, 1}): 4}
    np.testing.assert_allclose(exact_shapley(CoalitionGame(2, value=v.__getitem__)), [1.5, 2.5])


def _random_game(seed, n):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=1 << n)
    table[0] = 0.0
    return table


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**16), st.integers(1, 5))
def test_matches_permutation_oracle_and_efficiency(seed, n):
    table = _random_game(seed, n)
    game = CoalitionGame(n, batch_value=lambda m: table[m])
    phi = exact_shapley(game)
    ref = shapley_brute_force(n, lambda s: table[sum(1 << i for i in s)])
    np.testing.assert_allclose(phi, ref, atol=1e-10)
    assert phi.sum() == pytest.approx(table[-1] - table[0], abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**16), st.integers(2, 6), st.data())
def test_dummy_player_gets_zero(seed, n, data):
    dummy = data.draw(st.integers(0, n - 1))
    table = _random_game(seed, n)
    game = CoalitionGame(n, batch_value=lambda m: table[m & ~(1 << dummy)])
    assert exact_shapley(game)[dummy] == pytest.approx(0.0, abs=1e-12)
    assert np.all(sampled_shapley(game, 50, seed=seed)[0][dummy] == 0.0)


def test_symmetric_players_equal():
    # v depends only on how many of players 0,1 are present, plus player 2
    game = CoalitionGame(3, value=lambda s: len(s & {0, 1}) ** 2 + 3 * (2 in s))
    phi = exact_shapley(game)
    assert phi[0] == pytest.approx(phi[1])


def _linear_game(rng, n):
    w = rng.normal(size=n)
    table = np.array([w[[(m >> i) & 1 == 1 for i in range(n)]].sum() for m in range(1 << n)])
    # add an interaction so permutation sampling has variance
    table += np.array([0.5 * ((m & 3) == 3) for m in range(1 << n)])
    return CoalitionGame(n, batch_value=lambda m: table[m])


def test_sampled_within_three_stderr():
    game = _linear_game(np.random.default_rng(1), 10)
    exact = exact_shapley(game)
    phi, se = sampled_shapley(game, 2000, seed=3)
    assert np.all(np.abs(phi - exact) <= 3 * se + 1e-12)


def test_sampled_stderr_shrinks_with_permutations():
    game = _linear_game(np.random.default_rng(2), 6)
    _, se1 = sampled_shapley(game, 400, seed=0)
    _, se4 = sampled_shapley(game, 1600, seed=0)
    noisy = se1 > 1e-6
    ratio = se1[noisy] / se4[noisy]
    assert np.all((ratio > 1.5) & (ratio < 2.5))


def test_sampled_deterministic():
    game = _linear_game(np.random.default_rng(4), 8)
    a = sampled_shapley(game, 100, seed=11)
    b = sampled_shapley(game, 100, seed=11)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    with pytest.raises(ParameterError):
        sampled_shapley(game, 0)


def test_exact_limit():
    with pytest.raises(ParameterError, match="sampled"):
        exact_shapley(CoalitionGame(21, batch_value=lambda m: np.zeros(len(m))))


@pytest.mark.parametrize("mode", ["exact", "sampled"])
def test_linear_model_closed_form(rng, mode):
    w = rng.normal(size=6)
    x = rng.normal(size=(3, 6))
    b = rng.normal(size=(1, 6))
    rep = explain_instances(lambda X: X @ w, x, b, mode=mode, n_permutations=20)
    np.testing.assert_allclose(rep.phi, w * (x - b), atol=1e-12)
    np.testing.assert_allclose(rep.base_values + rep.phi.sum(axis=1), rep.predictions, atol=1e-12)


def test_efficiency_with_background_mean(rng):
    W = rng.normal(size=(5, 3))
    f = lambda X: np.tanh(X @ W).sum(axis=1)  # noqa: E731
    x, bg = rng.normal(size=(4, 5)), rng.normal(size=(20, 5))
    rep = explain_instances(f, x, bg, mode="exact")
    np.testing.assert_allclose(rep.base_values + rep.phi.sum(axis=1), f(x), atol=1e-6)
    assert rep.base_values[0] == pytest.approx(f(bg).mean())


def test_constant_model(rng):
    rep = explain_instances(lambda X: np.full(len(X), 2.5), rng.normal(size=(3, 4)), rng.normal(size=(5, 4)))
    assert np.all(rep.phi == 0) and np.all(rep.base_values == 2.5)
    assert rep.mode == "exact"


def test_price_units(rng):
    w = rng.normal(size=3)
    x, b = rng.normal(size=(1, 3)), np.zeros((1, 3))
    rep = explain_instances(lambda X: X @ w, x, b, target_scale=10.0, target_offset=5.0)
    np.testing.assert_allclose(rep.phi, 10 * w * x)
    assert rep.base_values[0] == 5.0


def test_auto_mode_switches_to_sampled(rng):
    rep = explain_instances(lambda X: X.sum(axis=1), rng.normal(size=(1, 16)), np.zeros((1, 16)),
                            n_permutations=10)
    assert rep.mode == "sampled" and rep.stderr is not None
    with pytest.raises(ParameterError, match="sampled"):
        explain_instances(lambda X: X.sum(axis=1), np.zeros((1, 21)), np.zeros((1, 21)), mode="exact")


def test_input_validation():
    with pytest.raises(ShapeError):
        explain_instances(lambda X: X.sum(axis=1), np.zeros((1, 3)), np.zeros((0, 3)))
    with pytest.raises(ShapeError):
        explain_instances(lambda X: X.sum(axis=1), np.zeros((1, 3)), np.zeros((2, 4)))


def test_ranking_ties_and_outputs(tmp_path):
    phi = np.array([[1.0, -3.0, 3.0, 0.0]])
    rep = ShapleyReport(phi, None, np.zeros(1), np.ones(1), ["a", "b", "c", "d"], "exact")
    assert rep.ranking.tolist() == [1, 2, 0, 3]
    d = rep.to_dict("ITM_d1_9")
    assert [f["rank"] for f in d["features"]] == [3, 1, 2, 4]
    rep.write_ranking_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "1,b,3.0"


def test_masks_enumerated_once():
    seen = []

    def v(masks):
        seen.extend(masks.tolist())
        return masks.astype(float)

    exact_shapley(CoalitionGame(4, batch_value=v))
    assert sorted(seen) == list(range(16))

import numpy as np
import pytest

from syncucb.env import LinearEnv, NoiseTable, TOY_POOLS, build_toy_env


@pytest.fixture
def toy():
    return build_toy_env()


def test_toy_parameters(toy):
    np.testing.assert_array_equal(toy.theta_star, [0.5, 0.25, 0.75])
    assert toy.reward_noise_sd**2 == pytest.approx(1e-2)
    np.testing.assert_array_equal(toy.ranker_embed[1], [0.0, 1.0, 0.0])
    assert toy.actions == (0, 1, 2)
    assert TOY_POOLS == ((0,), (1, 2))


def test_noise_free_reward():
    env = build_toy_env()
    env = LinearEnv(
        env.theta_star, env.ranker_embed, env.nominator_embeds, 0.0, env.actions
    )
    table = NoiseTable(np.ones((5, 3)))
    assert env.sample_reward(2, 0, table) == pytest.approx(0.75)


def test_reward_with_unit_noise(toy):
    table = NoiseTable(np.ones((5, 3)))
    assert toy.sample_reward(0, 3, table) == pytest.approx(0.6)


def test_reward_sample_mean(toy):
    rng = np.random.Generator(np.random.Philox(9))
    table = NoiseTable.draw(100_000, 3, rng)
    draws = np.array([toy.sample_reward(1, t, table) for t in range(100_000)])
    assert draws.mean() == pytest.approx(0.25, abs=0.002)


def test_reward_sample_variance(toy):
    rng = np.random.Generator(np.random.Philox(10))
    table = NoiseTable.draw(100_000, 3, rng)
    for idx, a in enumerate(toy.actions):
        var = (toy.theta_star[idx] + 0.1 * table.values[:, idx]).var()
        assert var == pytest.approx(1e-2, rel=0.05)


def test_pseudo_regret(toy):
    assert toy.pseudo_regret(2) == 0.0
    assert toy.pseudo_regret(0) == pytest.approx(0.25)
    assert toy.pseudo_regret(1) == pytest.approx(0.5)


def test_pseudo_regret_zero_iff_optimal(toy):
    for a in toy.actions:
        assert (toy.pseudo_regret(a) == 0.0) == (a == toy.optimal_action())


def test_unknown_action(toy):
    table = NoiseTable(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        toy.sample_reward(7, 0, table)
    with pytest.raises(ValueError):
        toy.pseudo_regret(7)


def test_optimal_tie_lowest_index():
    eye = np.eye(2)
    env = LinearEnv(
        theta_star=np.array([1.0, 1.0]),
        ranker_embed={0: eye[0], 1: eye[1]},
        nominator_embeds=({0: eye[0], 1: eye[1]},),
        reward_noise_sd=0.0,
        actions=(0, 1),
    )
    assert env.optimal_action() == 0


def test_noise_table_reproducible():
    t1 = NoiseTable.draw(50, 3, np.random.Generator(np.random.Philox(123)))
    t2 = NoiseTable.draw(50, 3, np.random.Generator(np.random.Philox(123)))
    np.testing.assert_array_equal(t1.values, t2.values)


def test_missing_embedding_rejected():
    eye = np.eye(2)
    with pytest.raises(ValueError):
        LinearEnv(
            theta_star=np.array([1.0, 0.0]),
            ranker_embed={0: eye[0]},
            nominator_embeds=({0: eye[0], 1: eye[1]},),
            reward_noise_sd=0.1,
            actions=(0, 1),
        )

import hashlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tmppi import dataset as ds
from tmppi.envs.base import Termination


def synthetic_episode(seed, length=40, n=3, m=2, p=6, outcome=Termination.GOAL_REACHED):
    rng = np.random.default_rng(seed)
    return ds.EpisodeLog(
        env_id=0,
        seed=seed,
        states=rng.normal(size=(length, n)),
        controls=rng.normal(size=(length, m)),
        costs=rng.uniform(0, 5, size=length),
        contexts=np.tile(rng.normal(size=(1, p)), (length, 1)),
        outcome=outcome,
    )


# --- windowing -----------------------------------------------------------------

def test_window_count_matches_arithmetic():
    # length 150, k 5, H 20 -> valid anchors t = 0..130
    episode = synthetic_episode(0, length=150)
    samples = ds.window(episode, k=5, horizon=20)
    assert len(samples) == 131


def test_window_exact_length_episode_gives_single_fully_padded_sample():
    episode = synthetic_episode(1, length=20)
    samples = ds.window(episode, k=5, horizon=20)
    assert len(samples) == 1
    first = samples[0]
    assert np.array_equal(first.past_states, np.tile(episode.states[:1], (5, 1)))


def test_window_too_short_episode_yields_nothing():
    episode = synthetic_episode(2, length=9)
    assert ds.window(episode, k=5, horizon=20) == []


def test_window_padding_repeats_first_state():
    episode = synthetic_episode(3, length=30)
    samples = ds.window(episode, k=5, horizon=10)
    at_t0 = samples[0]
    assert np.array_equal(at_t0.past_states, np.tile(episode.states[:1], (5, 1)))
    at_t2 = samples[2]
    assert np.array_equal(at_t2.past_states[:3], np.tile(episode.states[:1], (3, 1)))
    assert np.array_equal(at_t2.past_states[3:], episode.states[1:3])


def test_window_alignment_future_starts_at_anchor():
    # future_controls[0] is the control applied at the anchor step, which is
    # the step right after past_states[-1] was recorded.
    episode = synthetic_episode(4, length=25)
    for sample in ds.window(episode, k=4, horizon=6):
        t = sample.t
        assert np.array_equal(sample.past_states[-1], episode.states[t])
        assert np.array_equal(sample.future_controls[0], episode.controls[t])
        assert np.array_equal(sample.future_controls, episode.controls[t : t + 6])


# --- quantile transform ----------------------------------------------------------

def test_quantile_empirical_cdf_arithmetic():
    data = np.arange(1.0, 101.0)[:, None]
    tf = ds.fit_quantile(data, n_q=100)
    assert tf.apply(np.array([[1.0]]))[0, 0] == pytest.approx(0.0)
    assert tf.apply(np.array([[100.0]]))[0, 0] == pytest.approx(1.0)
    assert tf.apply(np.array([[50.5]]))[0, 0] == pytest.approx(0.5)


def test_quantile_clips_out_of_range():
    data = np.arange(1.0, 101.0)[:, None]
    tf = ds.fit_quantile(data, n_q=50)
    assert tf.apply(np.array([[-5.0]]))[0, 0] == 0.0
    assert tf.apply(np.array([[500.0]]))[0, 0] == 1.0


def test_quantile_constant_channel_warns_and_inverts_to_constant():
    data = np.column_stack([np.full(50, 3.3), np.arange(50.0)])
    with pytest.warns(UserWarning):
        tf = ds.fit_quantile(data, n_q=20)
    mapped = tf.apply(np.array([[3.3, 10.0], [99.0, 20.0]]))
    assert np.all(mapped[:, 0] == 0.5)
    restored = tf.invert(mapped)
    assert np.all(restored[:, 0] == 3.3)


def test_quantile_round_trip_within_bin_width():
    rng = np.random.default_rng(0)
    data = rng.lognormal(mean=0.0, sigma=0.8, size=(10_000, 1))
    tf = ds.fit_quantile(data, n_q=1000)
    restored = tf.invert(tf.apply(data))
    span = data.max() - data.min()
    assert np.abs(restored - data).max() <= span / 1000.0


def test_quantile_forward_of_training_data_is_uniform():
    rng = np.random.default_rng(1)
    data = rng.exponential(scale=2.0, size=(5000, 1))
    tf = ds.fit_quantile(data, n_q=1000)
    u = np.sort(tf.apply(data)[:, 0])
    n = len(u)
    # Kolmogorov-Smirnov statistic against U[0,1], computed directly
    ks = max(
        np.max(np.arange(1, n + 1) / n - u),
        np.max(u - np.arange(0, n) / n),
    )
    assert ks < 0.05


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=8, max_size=60))
def test_quantile_apply_is_nondecreasing(values):
    data = np.asarray(values)[:, None]
    if np.ptp(data) == 0.0:
        return
    tf = ds.fit_quantile(data, n_q=17)
    xs = np.sort(np.asarray(values))[:, None]
    ys = tf.apply(xs)[:, 0]
    assert np.all(np.diff(ys) >= -1e-12)


# --- split ------------------------------------------------------------------------

def test_split_nine_one():
    episodes = [synthetic_episode(i) for i in range(10)]
    train, val = ds.split_episodes(episodes, ratio=0.9, seed=0)
    assert len(train) == 9 and len(val) == 1


def test_split_deterministic_and_disjoint():
    episodes = [synthetic_episode(i) for i in range(12)]
    a_train, a_val = ds.split_episodes(episodes, ratio=0.75, seed=5)
    b_train, b_val = ds.split_episodes(episodes, ratio=0.75, seed=5)
    assert [e.seed for e in a_train] == [e.seed for e in b_train]
    train_seeds = {e.seed for e in a_train}
    val_seeds = {e.seed for e in a_val}
    assert train_seeds.isdisjoint(val_seeds)
    assert train_seeds | val_seeds == set(range(12))


def test_split_needs_two_episodes():
    with pytest.raises(ValueError):
        ds.split_episodes([synthetic_episode(0)], ratio=0.9, seed=0)


def test_split_keeps_windows_on_one_side():
    episodes = [synthetic_episode(i, length=30) for i in range(6)]
    train, val = ds.split_episodes(episodes, ratio=0.7, seed=1)
    train_ids = {id(e) for e in train}
    for episode in episodes:
        windows = ds.window(episode, 3, 5, episode_index=episode.seed)
        sides = {id(episode) in train_ids for _ in windows}
        assert len(sides) == 1


# --- container ----------------------------------------------------------------------

def file_hash(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_empty_dataset_round_trips(tmp_path):
    data = ds.Dataset(env_id=0, k_past=5, horizon=20, episodes=[])
    path = tmp_path / "empty.bin"
    ds.save_dataset(path, data)
    loaded = ds.load_dataset(path)
    assert loaded.episodes == []
    assert (loaded.env_id, loaded.k_past, loaded.horizon) == (0, 5, 20)


def test_dataset_round_trips_bitwise(tmp_path):
    episodes = [
        synthetic_episode(i, length=20 + i, outcome=o)
        for i, o in zip(range(40), [Termination.GOAL_REACHED, Termination.COLLIDED] * 20)
    ]
    data = ds.Dataset(env_id=0, k_past=5, horizon=12, episodes=episodes)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    ds.save_dataset(p1, data)
    loaded = ds.load_dataset(p1)
    ds.save_dataset(p2, loaded)
    assert file_hash(p1) == file_hash(p2)
    for original, restored in zip(episodes, loaded.episodes):
        assert np.array_equal(original.states, restored.states)
        assert np.array_equal(original.controls, restored.controls)
        assert np.array_equal(original.costs, restored.costs)
        assert np.array_equal(original.contexts, restored.contexts)
        assert original.outcome is restored.outcome
        assert original.seed == restored.seed


def test_corrupted_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    data = ds.Dataset(env_id=0, k_past=5, horizon=20, episodes=[synthetic_episode(0)])
    ds.save_dataset(path, data)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ds.DatasetFormatError):
        ds.load_dataset(path)


def test_truncated_file_rejected(tmp_path):
    path = tmp_path / "trunc.bin"
    ds.save_dataset(path, ds.Dataset(env_id=0, k_past=5, horizon=20,
                                     episodes=[synthetic_episode(0)]))
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 17])
    with pytest.raises(ds.DatasetFormatError):
        ds.load_dataset(path)


def test_csv_export_schema(tmp_path):
    data = ds.Dataset(env_id=0, k_past=5, horizon=20,
                      episodes=[synthetic_episode(0, length=3)])
    out = tmp_path / "steps.csv"
    ds.export_csv(data, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "episode,t,state_0,state_1,state_2,control_0,control_1,cost"
    assert len(lines) == 4


# --- normaliser bundle ---------------------------------------------------------------

def test_normalizer_round_trip_through_arrays():
    episodes = [synthetic_episode(i) for i in range(4)]
    norm = ds.Normalizer.fit(episodes, n_q=50)
    arrays = norm.as_arrays()
    restored = ds.Normalizer.from_arrays(arrays)
    probe = episodes[0].states[:5]
    assert np.array_equal(norm.states.apply(probe), restored.states.apply(probe))

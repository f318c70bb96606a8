import numpy as np
import pytest

from banksim.rng import RngStream, _splitmix64


def test_same_key_same_sequence():
    a = RngStream(42, 7).normal(1000)
    b = RngStream(42, 7).normal(1000)
    assert np.array_equal(a, b)


def test_different_stream_ids_differ():
    a = RngStream(42, 0).normal(1000)
    b = RngStream(42, 1).normal(1000)
    assert not np.array_equal(a, b)


def test_spawn_deterministic_and_disjoint():
    root = RngStream(123)
    kids = [root.spawn(i).normal(100) for i in range(20)]
    kids2 = [RngStream(123).spawn(i).normal(100) for i in range(20)]
    for a, b in zip(kids, kids2):
        assert np.array_equal(a, b)
    ids = {RngStream(123).spawn(i).stream_id for i in range(1000)}
    assert len(ids) == 1000


def test_spawn_multiple_indices():
    root = RngStream(9)
    assert root.spawn(3, 5).stream_id != root.spawn(5, 3).stream_id


def test_key_range_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(0, 1 << 64)


def _reference_splitmix64_next(state):
    # verbatim transcription of the reference C implementation
    mask = (1 << 64) - 1
    state = (state + 0x9E3779B97F4A7C15) & mask
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
    return state, (z ^ (z >> 31)) & mask


def test_splitmix64_matches_reference():
    state = 1234567
    for _ in range(5):
        ours = _splitmix64(state)
        state, ref = _reference_splitmix64_next(state)
        assert ours == ref

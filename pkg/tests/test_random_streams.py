"""Tests for reproducible random substreams."""
import numpy as np

from src.distributions import Uniform
from src.random_streams import RandomStream, block_plan, draw_inputs, map_blocks, stream_id


def test_same_key_same_draws():
    a = RandomStream(42, "collect", 3).uniform(100)
    b = RandomStream(42, "collect", 3).uniform(100)
    np.testing.assert_array_equal(a, b)


def test_streams_are_independent_by_name_and_block():
    base = RandomStream(42, "collect", 0).uniform(10)
    assert not np.array_equal(base, RandomStream(42, "identity", 0).uniform(10))
    assert not np.array_equal(base, RandomStream(42, "collect", 1).uniform(10))
    assert not np.array_equal(base, RandomStream(43, "collect", 0).uniform(10))


def test_uniform_draws_in_open_interval():
    u = RandomStream(0, "cov").uniform(10_000)
    assert np.all(u > 0.0)
    assert np.all(u < 1.0)


def test_stream_id_is_stable():
    assert stream_id("collect") == stream_id("collect")
    assert stream_id("collect") != stream_id("validate")


def test_block_plan_covers_all_samples():
    plan = block_plan(20_001, block_size=8192)
    assert [count for _, _, count in plan] == [8192, 8192, 3617]
    assert [start for _, start, _ in plan] == [0, 8192, 16384]
    assert [index for index, _, _ in plan] == [0, 1, 2]


def test_map_blocks_independent_of_workers():
    def block(stream, start, count):
        return stream.uniform(count)

    serial = np.concatenate(map_blocks(30_000, 5, "collect", block, workers=1))
    parallel = np.concatenate(map_blocks(30_000, 5, "collect", block, workers=4))
    assert serial.shape == (30_000,)
    np.testing.assert_array_equal(serial, parallel)


def test_draw_inputs_shape():
    stream = RandomStream(1, "collect")
    x = draw_inputs([Uniform(), Uniform(-1.0, 1.0)], stream, 50)
    assert x.shape == (2, 50)
    assert np.all((x[1] > -1.0) & (x[1] < 1.0))

"""Tests for block streams and the worker fan-out."""
import numpy as np
import pytest

from softread.streams import MAX_SEED, block_rng, block_sizes, check_seed, map_blocks, resolve_workers


def draw_block(block, size, seed, scale=1.0):
    """Module-level so worker processes can unpickle it."""
    return block, scale * block_rng(seed, block).random(size)


class TestCheckSeed:
    """Tests for check_seed."""

    def test_accepts_range(self):
        assert check_seed(0) == 0
        assert check_seed(MAX_SEED) == MAX_SEED
        assert check_seed(np.uint64(7)) == 7

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            check_seed(-1)
        with pytest.raises(ValueError):
            check_seed(MAX_SEED + 1)

    def test_rejects_non_integers(self):
        with pytest.raises(TypeError):
            check_seed(True)
        with pytest.raises(TypeError):
            check_seed(1.0)


class TestBlockRng:
    """Tests for block_rng."""

    def test_reproducible(self):
        assert np.array_equal(block_rng(3, 2).random(5), block_rng(3, 2).random(5))

    def test_blocks_independent(self):
        assert not np.array_equal(block_rng(3, 0).random(5), block_rng(3, 1).random(5))
        assert not np.array_equal(block_rng(3, 0).random(5), block_rng(4, 0).random(5))


class TestBlockSizes:
    """Tests for block_sizes."""

    def test_remainder(self):
        assert block_sizes(10, 4) == [4, 4, 2]

    def test_exact(self):
        assert block_sizes(8, 4) == [4, 4]

    def test_smaller_than_block(self):
        assert block_sizes(3, 1024) == [3]

    def test_empty(self):
        with pytest.raises(ValueError):
            block_sizes(0, 4)


class TestResolveWorkers:
    """Tests for resolve_workers."""

    def test_zero_means_all_cpus(self):
        assert resolve_workers(0) >= 1

    def test_explicit(self):
        assert resolve_workers(3) == 3

    def test_negative(self):
        with pytest.raises(ValueError):
            resolve_workers(-2)


class TestMapBlocks:
    """Tests for map_blocks."""

    def test_order_and_sizes(self):
        results = list(map_blocks(draw_block, 10, 4, seed=9))
        assert [block for block, _ in results] == [0, 1, 2]
        assert [len(values) for _, values in results] == [4, 4, 2]

    def test_kwargs_forwarded(self):
        (_, values), = map_blocks(draw_block, 3, 4, seed=9, scale=0.0)
        assert np.all(values == 0.0)

    def test_worker_count_invariance(self):
        single = list(map_blocks(draw_block, 50, 7, seed=5))
        parallel = list(map_blocks(draw_block, 50, 7, seed=5, workers=3))
        assert [b for b, _ in single] == [b for b, _ in parallel]
        for (_, a), (_, b) in zip(single, parallel):
            assert np.array_equal(a, b)

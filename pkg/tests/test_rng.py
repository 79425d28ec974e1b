import numpy as np
import pytest

from fedgame.analysis import replication_seeds
from fedgame.rng import ANALYSIS, GRADIENT, SAMPLES, STRATEGY, substream


def test_same_path_reproduces_bits():
    a = substream(42, GRADIENT, 3, 7).integers(0, 2 ** 63, 16)
    b = substream(42, GRADIENT, 3, 7).integers(0, 2 ** 63, 16)
    assert np.array_equal(a, b)


def test_distinct_paths_decorrelate():
    base = substream(42, GRADIENT, 3, 7).integers(0, 2 ** 63, 16)
    for path in ((STRATEGY, 3, 7), (GRADIENT, 4, 7), (GRADIENT, 3, 8),
                 (ANALYSIS, 3, 7), (SAMPLES, 3, 7)):
        other = substream(42, *path).integers(0, 2 ** 63, 16)
        assert not np.array_equal(base, other)


def test_distinct_seeds_decorrelate():
    a = substream(1, GRADIENT, 0, 0).integers(0, 2 ** 63, 16)
    b = substream(2, GRADIENT, 0, 0).integers(0, 2 ** 63, 16)
    assert not np.array_equal(a, b)


def test_purpose_tags_are_distinct():
    assert len({GRADIENT, STRATEGY, ANALYSIS, SAMPLES}) == 4


def test_seed_range_is_validated():
    with pytest.raises(ValueError):
        substream(-1, GRADIENT)
    with pytest.raises(ValueError):
        substream(2 ** 64, GRADIENT)
    # boundary values are fine
    substream(0, GRADIENT).random()
    substream(2 ** 64 - 1, GRADIENT).random()


def test_replication_seeds_stable_prefix():
    short = replication_seeds(7, 3)
    long = replication_seeds(7, 10)
    assert long[:3] == short
    assert len(set(long)) == 10
    assert all(0 <= s < 2 ** 64 for s in long)

import numpy as np
import pytest

from mechlearn.rng import stream, worker_count


def test_streams_reproducible_and_distinct():
    assert np.array_equal(stream(5, 2).random(8), stream(5, 2).random(8))
    assert not np.array_equal(stream(5, 2).random(8), stream(5, 3).random(8))
    assert not np.array_equal(stream(5, 0).random(8), stream(6, 0).random(8))


def test_negative_rejected():
    with pytest.raises(ValueError):
        stream(-1)


def test_worker_count(monkeypatch):
    monkeypatch.delenv("MECHLEARN_THREADS", raising=False)
    assert worker_count() == 1
    monkeypatch.setenv("MECHLEARN_THREADS", "4")
    assert worker_count() == 4
    monkeypatch.setenv("MECHLEARN_THREADS", "lots")
    assert worker_count(2) == 2

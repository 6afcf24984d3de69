import numpy as np
from hypothesis import given, strategies as st

from ergomix.parallel import chunk_sizes, run_chunks, worker_count


def _draw(size, seq):
    return np.random.default_rng(seq).random(size)


@given(st.integers(1, 100000), st.integers(1, 5000))
def test_chunk_sizes_partition_total(total, chunk):
    sizes = chunk_sizes(total, chunk)
    assert sum(sizes) == total and all(0 < s <= chunk for s in sizes)


def test_results_independent_of_workers():
    a = np.concatenate(run_chunks(_draw, 20000, 5, workers=1, chunk=3000))
    b = np.concatenate(run_chunks(_draw, 20000, 5, workers=3, chunk=3000))
    assert np.array_equal(a, b)


def test_env_override(monkeypatch):
    monkeypatch.setenv("ERGOMIX_THREADS", "3")
    assert worker_count(8) == 3
    monkeypatch.delenv("ERGOMIX_THREADS")
    assert worker_count(2) == 2

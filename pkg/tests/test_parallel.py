import pytest

from finsgap.core.errors import ConfigError
from finsgap.core.parallel import THREADS_ENV, parallel_map, worker_count


def test_worker_count_defaults_to_one():
    assert worker_count({}) == 1
    assert worker_count({THREADS_ENV: " 4 "}) == 4


@pytest.mark.parametrize("raw", ["0", "-2", "many"])
def test_worker_count_rejects_bad_values(raw):
    with pytest.raises(ConfigError) as info:
        worker_count({THREADS_ENV: raw})
    assert info.value.field == THREADS_ENV


@pytest.mark.parametrize("workers", [1, 4])
def test_parallel_map_keeps_order(workers):
    assert parallel_map(lambda k: k * k, range(20), workers=workers) == [k * k for k in range(20)]


def test_parallel_map_reads_the_environment(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert parallel_map(str, [3, 1, 2]) == ["3", "1", "2"]

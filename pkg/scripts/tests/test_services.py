import time

import pytest

from besovkit.services.base import EnsembleService, run_ensemble, worker_count


def _slow_square(x: int) -> int:
    # later members finish first
    time.sleep(0.01 * (5 - x))
    return x * x


def _fragile(x: int) -> int:
    if x == 2:
        raise ValueError("bad member")
    return x


def test_results_keep_input_order():
    results = run_ensemble(_slow_square, range(5), workers=3)
    assert [r.index for r in results] == list(range(5))
    assert [r.value for r in results] == [0, 1, 4, 9, 16]


def test_threaded_matches_serial():
    serial = run_ensemble(_slow_square, range(5), workers=1)
    threaded = run_ensemble(_slow_square, range(5), workers=4)
    assert [r.value for r in serial] == [r.value for r in threaded]


@pytest.mark.parametrize("workers", [1, 3])
def test_failing_member_is_recorded(workers):
    results = run_ensemble(_fragile, range(4), workers=workers)
    assert [r.ok for r in results] == [True, True, False, True]
    assert results[2].error == "ValueError: bad member"
    assert results[3].value == 3


def test_service_lifecycle():
    service = EnsembleService(workers=2)
    assert not service.is_running
    service.start()
    try:
        assert service.is_running
        assert [r.value for r in service.map(abs, [-1, 2, -3])] == [1, 2, 3]
        assert [r.value for r in service.map(str, [7])] == ["7"]
        assert not service.has_pending_event
    finally:
        service.stop()
    assert not service.is_running


def test_dispatch_to_stopped_service_is_ignored():
    service = EnsembleService()
    service.dispatch("evaluate", (0, abs, -1))
    assert not service.has_pending_event


@pytest.mark.parametrize("value, expected", [(None, 1), ("4", 4), ("0", 1), ("many", 1)])
def test_worker_count(monkeypatch, value, expected):
    if value is None:
        monkeypatch.delenv("BESOVKIT_WORKERS", raising=False)
    else:
        monkeypatch.setenv("BESOVKIT_WORKERS", value)
    assert worker_count() == expected


def test_map_on_stopped_service_raises():
    service = EnsembleService()
    with pytest.raises(RuntimeError, match="not running"):
        service.map(abs, [-1, 2])

import pytest

from src.utils.json_utils import dumps_stable, is_valid_json, read_json, write_json
from src.utils.timing import Stopwatch
from src.utils.workers import WORKERS_ENV, num_workers, ordered_map


class TestWorkers:
    def test_default_is_serial(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert num_workers() == 1

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "4")
        assert num_workers() == 4
        monkeypatch.setenv(WORKERS_ENV, "0")
        assert num_workers() == 1

    def test_bad_env(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ValueError, match=WORKERS_ENV):
            num_workers()

    @pytest.mark.parametrize("workers", [1, 4])
    def test_order_is_kept(self, workers):
        assert ordered_map(lambda v: v * v, range(50), workers=workers) == [v * v for v in range(50)]


def test_dumps_stable_sorts_keys():
    assert dumps_stable({"b": 1, "a": 2}) == dumps_stable({"a": 2, "b": 1})
    assert dumps_stable({}).endswith("\n")


def test_json_files(tmp_path):
    path = write_json({"x": [1, 2]}, tmp_path / "sub" / "f.json")
    assert read_json(path) == {"x": [1, 2]}
    path.write_text("{broken", encoding="utf-8")
    with pytest.raises(ValueError, match="Invalid JSON"):
        read_json(path)
    with pytest.raises(FileNotFoundError):
        read_json(tmp_path / "missing.json")


def test_is_valid_json_bytes():
    assert is_valid_json(b'{"a": 1}') == (True, {"a": 1})
    ok, message = is_valid_json(b"\xff")
    assert not ok and "UTF-8" in message


def test_stopwatch():
    with Stopwatch() as timer:
        sum(range(1000))
    assert timer.elapsed_s >= 0.0

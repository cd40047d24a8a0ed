from __future__ import annotations

import io
import json
import logging
import threading
from pathlib import Path

import numpy as np
import pytest

from src.utils.helpers import (
    canonicalize_for_dump,
    ensure_output_directory,
    format_csv_number,
    parallel_map,
    write_json,
)
from src.utils.logging_config import ROOT_LOGGER, InterceptHandler, configure_logging


def test_ensure_output_directory_creates_parent_path(tmp_path: Path) -> None:
    output_file = tmp_path / "nested" / "folder" / "envelope.json"
    ensure_output_directory(str(output_file))
    assert output_file.parent.exists()


def test_ensure_output_directory_rejects_empty_path() -> None:
    with pytest.raises(ValueError, match="must not be empty"):
        ensure_output_directory("")


def test_canonicalize_sorts_keys_and_converts_numpy() -> None:
    payload = {"b": np.array([1.0, np.inf]), "a": (np.int64(3), np.bool_(True)), "c": 0.1 + 0.2}
    assert canonicalize_for_dump(payload) == {"a": [3, True], "b": [1.0, "inf"], "c": 0.3}
    assert list(canonicalize_for_dump(payload)) == ["a", "b", "c"]


def test_write_json_is_canonical(tmp_path: Path) -> None:
    path = tmp_path / "out" / "summary.json"
    write_json(path, {"z": 1, "a": float("nan")})
    text = path.read_text(encoding="utf-8")
    assert text == '{\n  "a": "nan",\n  "z": 1\n}\n'
    assert json.loads(text) == {"a": "nan", "z": 1}


def test_format_csv_number() -> None:
    assert format_csv_number(0.0) == "0"
    assert format_csv_number(-0.0) == "0"
    assert format_csv_number(1.0 / 3.0) == "0.3333333333"
    assert format_csv_number(float("nan")) == "nan"


def test_parallel_map_keeps_input_order() -> None:
    def square(value: int) -> int:
        return value * value

    assert parallel_map(square, list(range(20)), max_workers=4) == [v * v for v in range(20)]
    assert parallel_map(square, [3], max_workers=4) == [9]
    assert parallel_map(square, [], max_workers=4) == []


def test_parallel_map_serial_path_runs_in_caller_thread() -> None:
    names = parallel_map(lambda _: threading.current_thread().name, [1, 2, 3], max_workers=1)
    assert names == [threading.current_thread().name] * 3


def test_configure_logging_installs_single_handler(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("GRIDFLEX_LOG_LEVEL", "debug")
    logger = configure_logging()
    configure_logging()
    assert logger.name == ROOT_LOGGER
    assert logger.level == logging.DEBUG
    assert len(logger.handlers) == 1
    assert logger.propagate is False
    assert isinstance(logger.handlers[0], InterceptHandler)
    with pytest.raises(ValueError, match="Unknown log level"):
        configure_logging("chatty")


def test_json_logging_emits_one_object_per_record() -> None:
    stream = io.StringIO()
    configure_logging("info", json_format=True, sink=stream)
    logging.getLogger("src.solvers.lp").warning("gap %d", 3)
    logging.getLogger("src.solvers.lp").debug("hidden")
    lines = stream.getvalue().splitlines()
    assert len(lines) == 1
    record = json.loads(lines[0])["record"]
    assert record["message"] == "gap 3"
    assert record["level"]["name"] == "WARNING"
    assert record["extra"]["logger_name"] == "src.solvers.lp"


def test_plain_logging_names_the_source_logger() -> None:
    stream = io.StringIO()
    configure_logging("debug", sink=stream)
    logging.getLogger("src.powerflow.ac").debug("converged in %d iterations", 4)
    assert stream.getvalue().rstrip().endswith("DEBUG src.powerflow.ac: converged in 4 iterations")

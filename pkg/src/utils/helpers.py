"""Shared helpers for gridflex artifacts."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence, TypeVar

import numpy as np

FLOAT_DIGITS = 12

T = TypeVar("T")
R = TypeVar("R")


def ensure_output_directory(path: str | Path) -> None:
    """Create the parent directory for an output file if needed.

    Args:
        path: Destination file path.

    Returns:
        None

    Raises:
        ValueError: If ``path`` is empty.
        OSError: If the directory cannot be created.
    """
    if not str(path):
        raise ValueError("Output path must not be empty.")

    directory = Path(path).expanduser().resolve().parent
    directory.mkdir(parents=True, exist_ok=True)


def canonicalize_for_dump(value: Any, *, digits: int = FLOAT_DIGITS) -> Any:
    """Normalize a payload for deterministic JSON output.

    Args:
        value: Nested structure of mappings, sequences, numpy values and scalars.
        digits: Significant digits kept for floating point values.

    Returns:
        A recursively normalized structure with sorted mapping keys, numpy
        containers turned into lists and floats rounded to ``digits``.
        Non-finite floats become strings (``"inf"``, ``"-inf"``, ``"nan"``).
    """
    if isinstance(value, Mapping):
        return {str(key): canonicalize_for_dump(value[key], digits=digits) for key in sorted(value)}

    if isinstance(value, np.ndarray):
        return [canonicalize_for_dump(item, digits=digits) for item in value.tolist()]

    if isinstance(value, (list, tuple)):
        return [canonicalize_for_dump(item, digits=digits) for item in value]

    if isinstance(value, (bool, np.bool_)):
        return bool(value)

    if isinstance(value, (int, np.integer)):
        return int(value)

    if isinstance(value, (float, np.floating)):
        return format_float(float(value), digits=digits)

    return value


def format_float(value: float, *, digits: int = FLOAT_DIGITS) -> float | str:
    """Round ``value`` to ``digits`` significant digits; map non-finite values to strings."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0.0:
        return 0.0
    return float(f"{value:.{digits}g}")


def format_csv_number(value: float, *, digits: int = 10) -> str:
    """Format a number for CSV output with a fixed number of significant digits."""
    if math.isnan(value):
        return "nan"
    if value == 0.0:
        return "0"
    return f"{value:.{digits}g}"


def write_json(path: str | Path, payload: Any) -> None:
    """Write ``payload`` as canonical, indented JSON followed by a newline.

    Args:
        path: Destination JSON path.
        payload: Data to serialize; normalized with :func:`canonicalize_for_dump`.
    """
    ensure_output_directory(path)
    with open(path, "w", encoding="utf-8") as file_handle:
        json.dump(canonicalize_for_dump(payload), file_handle, indent=2, ensure_ascii=False)
        file_handle.write("\n")


def parallel_map(
    function: Callable[[T], R],
    items: Sequence[T],
    *,
    max_workers: int | None = None,
) -> list[R]:
    """Apply ``function`` to every item, keeping input order.

    Runs in a thread pool unless ``max_workers`` is 1 or there is at most one
    item. ``None`` lets the executor pick the pool size.
    """
    if max_workers == 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        return list(executor.map(function, items))

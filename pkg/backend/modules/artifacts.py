"""
artifacts.py - Atomic writers for CSV, JSON and text outputs.

Every output goes to a temporary file in the target directory first and
is renamed into place, so a crashed run never leaves half a table behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Union

import pandas as pd

FLOAT_FORMAT = "%.6g"

PathLike = Union[str, Path]


@contextmanager
def atomic_path(target: PathLike) -> Iterator[Path]:
    """Yield a temp path next to `target`; rename it over `target` on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(frame: pd.DataFrame, target: PathLike) -> Path:
    """Write a table with a header row, no index, 6 significant digits."""
    with atomic_path(target) as tmp:
        frame.to_csv(tmp, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return Path(target)


def write_json(payload: Any, target: PathLike) -> Path:
    with atomic_path(target) as tmp:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")
    return Path(target)


def write_text(text: str, target: PathLike) -> Path:
    with atomic_path(target) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return Path(target)


def _json_default(value: Any):
    # numpy scalars and arrays
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")

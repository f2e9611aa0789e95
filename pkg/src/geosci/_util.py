from __future__ import annotations

import os
import tempfile
from pathlib import Path


class EmptyResultWarning(UserWarning):
    """A filter left nothing behind."""


def atomic_write(path: str | Path, data: bytes | str) -> Path:
    """Write a whole file via a temp file in the same directory plus rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path

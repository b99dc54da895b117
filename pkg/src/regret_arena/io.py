"""Atomic file writes and float formatting shared by the writers."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path


def fmt_exact(x: float) -> str:
    """17 significant digits: parses back to the identical double."""
    return "%.17g" % x


def fmt_metric(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)) or (hasattr(x, "dtype") and x.dtype.kind in "iu"):
        return str(int(x))
    if isinstance(x, str):
        return x
    # 10 significant digits; adding 0.0 turns -0.0 into 0.0
    return "%.10g" % (float(x) + 0.0)


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path

"""Atomic output helpers: no command ever leaves a partial file behind."""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager


@contextmanager
def atomic_writer(path: str):
    """Text handle onto a temp file in the target directory; renamed into
    place only if the block completes."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            yield handle
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def atomic_write_text(path: str, content: str) -> None:
    """Write to a temp file in the target directory, then rename into place."""
    with atomic_writer(path) as handle:
        handle.write(content)

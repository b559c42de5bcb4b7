"""Small file-system helpers shared by the service and the sync client."""

from __future__ import annotations

import os


def write_private(path: str, data: str) -> None:
    """Write a file atomically (tmp + rename) with owner-only permissions.

    Readers concurrent with the write see either the old content or the new,
    never a torn file.
    """
    tmp = f"{path}.tmp"
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
    except BaseException:
        os.unlink(tmp)
        raise
    os.replace(tmp, path)

"""Small shared helpers: atomic file writes and seed derivation."""

import os
import tempfile
import zlib

import numpy as np


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename, so an
    interrupted run never leaves a partial artifact at the target path."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def child_seed(root_seed: int, *tags) -> int:
    """Stable derived seed for an independent substream.

    Tags may be ints or short strings; strings hash through crc32 so the
    derivation is stable across platforms and runs.
    """
    ints = [int(root_seed) & 0xFFFFFFFF]
    for t in tags:
        if isinstance(t, str):
            ints.append(zlib.crc32(t.encode("utf-8")))
        else:
            ints.append(int(t) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(ints)
    return int(ss.generate_state(1, np.uint64)[0])

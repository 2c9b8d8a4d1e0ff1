"""Small I/O helpers shared by the parsers and the CLI."""

from __future__ import annotations

import contextlib
import gc
import gzip
from pathlib import Path
from typing import IO


@contextlib.contextmanager
def gc_paused():
    """Pause the cyclic GC while a parser allocates many small immutable records.

    Long logs produce ~10^5 tuples; generational GC would otherwise rescan the
    growing result list many times for no benefit.
    """
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def open_text(path: str | Path, mode: str = "r") -> IO[str]:
    """Open a text file, transparently (de)compressing when the name ends in .gz."""
    p = Path(path)
    if p.suffix == ".gz":
        return gzip.open(p, mode + "t", encoding="utf-8", errors="replace" if "r" in mode else "strict")
    return open(p, mode, encoding="utf-8", errors="replace" if "r" in mode else "strict", newline=None)


def read_text(path: str | Path) -> str:
    with open_text(path) as f:
        return f.read()


def write_text(path: str | Path, text: str) -> None:
    with open_text(path, "w") as f:
        f.write(text)


__all__ = ["gc_paused", "open_text", "read_text", "write_text"]

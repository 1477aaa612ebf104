"""Workspace layout, canonical file IO, and the enactment lock."""

from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .errors import TracelinkError

MEGAMODEL_FILE = "megamodel.json"
LOCK_FILE = ".tracelink.lock"


@dataclass(frozen=True)
class WorkspaceConfig:
    root: Path
    output_dir: str = "out"
    trace_dir: str = "traces"
    marker_open: str = "{{"
    marker_close: str = "}}"

    def __post_init__(self):
        if not self.output_dir or not self.trace_dir or self.output_dir == self.trace_dir:
            raise TracelinkError("output and trace directories must be distinct and non-empty")
        if not self.marker_open or not self.marker_close or self.marker_open == self.marker_close:
            raise TracelinkError("marker delimiters must be distinct and non-empty")


def read_text(root: Path, uri: str) -> str:
    return (root / uri).read_text(encoding="utf-8")


def write_text(root: Path, uri: str, text: str):
    path = root / uri
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


@contextmanager
def workspace_lock(root: Path):
    """One enactment per workspace at a time."""
    lock_path = root / LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise TracelinkError(
            f"another enactment holds '{lock_path}'; remove the file if it is stale") from None
    try:
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock_path)
        except FileNotFoundError:
            pass

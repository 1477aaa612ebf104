"""Element paths: dot-separated, index-bearing addresses of elements in a model.

A path like ``filters[0].sections[1]`` walks ordered containment collections
from the model root. The single segment ``root`` addresses the root element
itself.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

from .errors import PathSyntaxError

ROOT_NAME = "root"

_IDENT_START = frozenset(string.ascii_letters + "_")
_IDENT_CONT = frozenset(string.ascii_letters + string.digits + "_")


@dataclass(frozen=True)
class PathSegment:
    """One step: a collection name plus index, or a bare name (root/alias)."""

    name: str
    index: int | None = None

    def __str__(self) -> str:
        return self.name if self.index is None else f"{self.name}[{self.index}]"


@dataclass(frozen=True)
class ElementPath:
    segments: tuple[PathSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a path needs at least one segment")

    def __str__(self) -> str:
        return ".".join(str(s) for s in self.segments)

    def child(self, name: str, index: int) -> "ElementPath":
        return ElementPath(self.segments + (PathSegment(name, index),))

    def sort_key(self) -> tuple:
        return tuple((s.name, -1 if s.index is None else s.index) for s in self.segments)


ROOT_PATH = ElementPath((PathSegment(ROOT_NAME),))


def parse_path(s: str) -> ElementPath:
    """Parse a path string; offsets in errors are byte positions."""
    if not s:
        raise PathSyntaxError("empty path", 0)
    segments: list[PathSegment] = []
    i = 0
    n = len(s)
    while True:
        start = i
        if i >= n or s[i] not in _IDENT_START:
            raise PathSyntaxError("expected identifier", i)
        i += 1
        while i < n and s[i] in _IDENT_CONT:
            i += 1
        name = s[start:i]
        index: int | None = None
        if i < n and s[i] == "[":
            j = i + 1
            digits_start = j
            while j < n and s[j].isdigit():
                j += 1
            if j == digits_start:
                raise PathSyntaxError("expected index", j)
            if j >= n or s[j] != "]":
                raise PathSyntaxError("expected ']'", j)
            index = int(s[digits_start:j])
            i = j + 1
        segments.append(PathSegment(name, index))
        if i == n:
            break
        if s[i] != ".":
            raise PathSyntaxError("expected '.'", i)
        i += 1
        if i == n:
            raise PathSyntaxError("trailing '.'", i)
    return ElementPath(tuple(segments))


def print_path(p: ElementPath) -> str:
    return str(p)


def normalize_marker_path(p: ElementPath) -> ElementPath:
    """Make an extracted marker payload model-root-relative.

    Marker payloads may carry the template's parameter alias as a leading
    index-less segment; it is dropped. A payload that is nothing but an
    index-less segment denotes the root element.
    """
    if p.segments[0].index is None:
        if len(p.segments) == 1:
            return ROOT_PATH
        return ElementPath(p.segments[1:])
    return p

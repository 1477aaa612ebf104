"""Trace links, local trace models, and the trace identifier tree.

This is the shared vocabulary between both transformation engines and the
global trace map: every transformation execution yields one local trace
model, stored as a sidecar ``*.trace.json`` file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import IntegrityError, ParseError
from .model import _load_json, canonical_json
from .paths import ROOT_PATH, ElementPath, parse_path


@dataclass(frozen=True)
class ElementRef:
    """An element of a model, addressed by workspace-relative URI plus path."""

    model_uri: str
    path: ElementPath

    def __str__(self) -> str:
        return f"{self.model_uri}:{self.path}"


@dataclass(frozen=True)
class CodeSpan:
    """Half-open byte range [start_byte, end_byte) in a generated file.

    Line and column are 1-based and derived from the byte offsets over the
    clean (marker-free) file content.
    """

    file_uri: str
    start_byte: int
    end_byte: int
    start_line: int
    start_col: int

    def __post_init__(self):
        if not (0 <= self.start_byte <= self.end_byte):
            raise IntegrityError(f"bad span [{self.start_byte}, {self.end_byte})")

    def __str__(self) -> str:
        return f"{self.file_uri}:{self.start_line}:{self.start_col}"

    def contains(self, byte_offset: int) -> bool:
        return self.start_byte <= byte_offset < self.end_byte


def span_at(file_uri: str, clean: bytes, start: int, end: int) -> CodeSpan:
    """Build a span over ``clean`` with line/col derived from ``start``."""
    line = clean.count(b"\n", 0, start) + 1
    last_nl = clean.rfind(b"\n", 0, start)
    col = start - (last_nl + 1) + 1
    return CodeSpan(file_uri, start, end, line, col)


@dataclass(frozen=True)
class TraceLink:
    """Tagged link from source elements to target elements or code spans."""

    sources: tuple[ElementRef, ...]
    targets: tuple[ElementRef | CodeSpan, ...]
    tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.sources:
            raise IntegrityError("trace link has no sources")
        if not self.targets:
            raise IntegrityError("trace link has no targets")
        kinds = {type(t) for t in self.targets}
        if len(kinds) > 1:
            raise IntegrityError("trace link mixes element and code targets")
        if any(not k for k in self.tags):
            raise IntegrityError("trace link has an empty tag key")


@dataclass
class LocalTraceModel:
    id: str
    transformation_id: str
    execution_stamp: int
    links: tuple[TraceLink, ...] = ()


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _target_to_json(t: ElementRef | CodeSpan) -> dict:
    if isinstance(t, ElementRef):
        return {"model": t.model_uri, "path": str(t.path)}
    return {
        "file": t.file_uri,
        "startByte": t.start_byte,
        "endByte": t.end_byte,
        "startLine": t.start_line,
        "startCol": t.start_col,
    }


def _target_from_json(raw: object) -> ElementRef | CodeSpan:
    if not isinstance(raw, dict):
        raise IntegrityError("trace target must be an object")
    if "model" in raw:
        return ElementRef(raw["model"], parse_path(raw["path"]))
    if "file" in raw:
        return CodeSpan(raw["file"], raw["startByte"], raw["endByte"], raw["startLine"], raw["startCol"])
    raise IntegrityError(f"unrecognized trace target: {raw!r}")


def save_trace(t: LocalTraceModel) -> str:
    links = []
    for link in t.links:
        links.append({
            "sources": [_target_to_json(s) for s in link.sources],
            "targets": [_target_to_json(x) for x in link.targets],
            "tags": dict(link.tags),
        })
    return canonical_json({
        "id": t.id,
        "transformation": t.transformation_id,
        "executionStamp": t.execution_stamp,
        "links": links,
    })


def load_trace(text: str) -> LocalTraceModel:
    data = _load_json(text)
    if not isinstance(data, dict):
        raise ParseError("trace document must be an object")
    try:
        links = []
        for raw in data.get("links", []):
            sources = tuple(_target_from_json(s) for s in raw.get("sources", []))
            if any(isinstance(s, CodeSpan) for s in sources):
                raise IntegrityError("trace link sources must be model elements")
            targets = tuple(_target_from_json(x) for x in raw.get("targets", []))
            links.append(TraceLink(sources, targets, dict(raw.get("tags", {}))))
        return LocalTraceModel(
            id=data["id"],
            transformation_id=data["transformation"],
            execution_stamp=data["executionStamp"],
            links=tuple(links),
        )
    except (KeyError, TypeError) as exc:
        raise IntegrityError(f"trace file is missing or mistypes a field: {exc}") from exc


# ---------------------------------------------------------------------------
# Trace identifier tree
# ---------------------------------------------------------------------------

class TraceTreeNode:
    """Tree node keyed by (name, index); ``terminal`` marks an inserted path end."""

    __slots__ = ("name", "index", "children", "terminal")

    def __init__(self, name: str, index: int | None):
        self.name = name
        self.index = index
        self.children: dict[tuple[str, int | None], TraceTreeNode] = {}
        self.terminal = False

    def label(self) -> str:
        return self.name if self.index is None else f"{self.name}[{self.index}]"


class TraceIdentifierTree:
    """Prefix tree over element paths extracted from annotated output."""

    def __init__(self):
        self.root = TraceTreeNode("root", None)

    def insert(self, path: ElementPath):
        if path == ROOT_PATH:
            self.root.terminal = True
            return
        node = self.root
        for seg in path.segments:
            key = (seg.name, seg.index)
            child = node.children.get(key)
            if child is None:
                child = TraceTreeNode(seg.name, seg.index)
                node.children[key] = child
            node = child
        node.terminal = True

    def paths(self) -> list[ElementPath]:
        """Re-enumerate all inserted paths, sorted."""
        out: list[ElementPath] = []
        if self.root.terminal:
            out.append(ROOT_PATH)

        def walk(node: TraceTreeNode, trail: tuple):
            from .paths import PathSegment

            for key in sorted(node.children, key=lambda k: (k[0], -1 if k[1] is None else k[1])):
                child = node.children[key]
                segs = trail + (PathSegment(child.name, child.index),)
                if child.terminal:
                    out.append(ElementPath(segs))
                walk(child, segs)

        walk(self.root, ())
        out.sort(key=lambda p: p.sort_key())
        return out


def build_identifier_tree(paths: list[ElementPath]) -> TraceIdentifierTree:
    tree = TraceIdentifierTree()
    for p in paths:
        tree.insert(p)
    return tree

"""Global trace map: the joined graph over all local trace models.

Nodes are model elements (URI plus path) and code spans; edges come
straight from local trace links, so chains join wherever one
transformation's output element is another's input element. Impact
analysis is forward BFS closure from an anchor, origin tracking the
backward closure; each node is reported once, at its minimum depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import AnchorNotFound, LocationOutsideSpans, TracelinkError
from .megamodel import Megamodel, ResourceKind
from .model import Metamodel, parse_metamodel, parse_model, resolve_path
from .paths import parse_path
from .trace import CodeSpan, ElementRef, load_trace
from .workspace import read_text


@dataclass(frozen=True)
class ElemNode:
    model_uri: str
    path: str  # canonical printed form

    def __str__(self) -> str:
        return f"{self.model_uri}:{self.path}"


@dataclass(frozen=True)
class CodeNode:
    file_uri: str
    start_byte: int
    end_byte: int
    start_line: int
    start_col: int

    def __str__(self) -> str:
        return f"{self.file_uri}:{self.start_line}:{self.start_col}"


TraceNode = ElemNode | CodeNode


@dataclass(frozen=True)
class GtmEdge:
    src: TraceNode
    dst: TraceNode
    via: str  # transformation resource id
    rule_tag: str
    dangling: bool = False


@dataclass(frozen=True)
class GlobalTraceMap:
    nodes: frozenset[TraceNode]
    edges: frozenset[GtmEdge]
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class AnalysisReport:
    kind: str  # "impact" or "origin"
    anchor: TraceNode
    layers: tuple[frozenset[TraceNode], ...]
    rendered: str


def _node_key(node: TraceNode) -> tuple:
    if isinstance(node, ElemNode):
        return (0, node.model_uri, node.path)
    return (1, node.file_uri, node.start_byte, node.end_byte)


def _as_node(target) -> TraceNode:
    if isinstance(target, ElementRef):
        return ElemNode(target.model_uri, str(target.path))
    assert isinstance(target, CodeSpan)
    return CodeNode(target.file_uri, target.start_byte, target.end_byte,
                    target.start_line, target.start_col)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_gtm(mgm: Megamodel, root: Path) -> GlobalTraceMap:
    """Join all local trace models referenced by the megamodel.

    Model-element endpoints whose path no longer resolves are reported as
    warnings; their edges stay, flagged dangling.
    """
    metamodels: dict[str, Metamodel] = {}
    for res in mgm.of_kind(ResourceKind.METAMODEL):
        mm = parse_metamodel(read_text(root, res.uri))
        metamodels[mm.name] = mm

    model_cache: dict[str, object] = {}
    resolvable_cache: dict[tuple[str, str], str | None] = {}

    def unresolvable_reason(node: ElemNode) -> str | None:
        key = (node.model_uri, node.path)
        if key in resolvable_cache:
            return resolvable_cache[key]
        reason = None
        if node.model_uri not in model_cache:
            try:
                import json

                text = read_text(root, node.model_uri)
                mm_name = json.loads(text).get("metamodel")
                mm = metamodels.get(mm_name)
                if mm is None:
                    model_cache[node.model_uri] = f"metamodel '{mm_name}' is not registered"
                else:
                    model_cache[node.model_uri] = parse_model(text, mm, uri=node.model_uri)
            except (OSError, TracelinkError, ValueError) as exc:
                model_cache[node.model_uri] = f"model not loadable: {exc}"
        cached = model_cache[node.model_uri]
        if isinstance(cached, str):
            reason = cached
        else:
            try:
                resolve_path(cached, parse_path(node.path))
            except TracelinkError:
                reason = "path does not resolve"
        resolvable_cache[key] = reason
        return reason

    nodes: set[TraceNode] = set()
    edges: set[GtmEdge] = set()
    warnings: list[str] = []
    for trace_res in mgm.of_kind(ResourceKind.TRACE_MODEL):
        trace = load_trace(read_text(root, trace_res.uri))
        for link in trace.links:
            tag = link.tags.get("rule") or link.tags.get("template") or ""
            for source in link.sources:
                src_node = _as_node(source)
                for target in link.targets:
                    dst_node = _as_node(target)
                    dangling = False
                    for endpoint in (src_node, dst_node):
                        if isinstance(endpoint, ElemNode):
                            reason = unresolvable_reason(endpoint)
                            if reason is not None:
                                dangling = True
                                message = f"dangling trace endpoint {endpoint}: {reason}"
                                if message not in warnings:
                                    warnings.append(message)
                    nodes.add(src_node)
                    nodes.add(dst_node)
                    edges.add(GtmEdge(src_node, dst_node, trace.transformation_id, tag, dangling))
    return GlobalTraceMap(frozenset(nodes), frozenset(edges), tuple(warnings))


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------

def _bfs_layers(g: GlobalTraceMap, anchor: TraceNode, forward: bool) -> tuple[frozenset[TraceNode], ...]:
    adjacency: dict[TraceNode, set[TraceNode]] = {}
    for edge in g.edges:
        a, b = (edge.src, edge.dst) if forward else (edge.dst, edge.src)
        adjacency.setdefault(a, set()).add(b)
    layers: list[frozenset[TraceNode]] = []
    seen = {anchor}
    frontier = {anchor}
    while frontier:
        nxt: set[TraceNode] = set()
        for node in frontier:
            nxt |= adjacency.get(node, set())
        nxt -= seen
        if not nxt:
            break
        layers.append(frozenset(nxt))
        seen |= nxt
        frontier = nxt
    return tuple(layers)


def _render(anchor: TraceNode, layers) -> str:
    lines = [str(anchor)]
    for depth, layer in enumerate(layers, start=1):
        for node in sorted(layer, key=_node_key):
            lines.append(f"{'=' * depth}> {node}")
    return "\n".join(lines) + "\n"


def change_impact(g: GlobalTraceMap, anchor: ElemNode) -> AnalysisReport:
    """Forward closure: everything derived from the anchor element."""
    if anchor not in g.nodes:
        raise AnchorNotFound(str(anchor))
    layers = _bfs_layers(g, anchor, forward=True)
    return AnalysisReport("impact", anchor, layers, _render(anchor, layers))


def origin_track(g: GlobalTraceMap, anchor: TraceNode | None = None,
                 location: tuple[str, int] | None = None) -> AnalysisReport:
    """Backward closure: everything the anchor was derived from.

    A raw ``location`` (fileUri, byteOffset) is anchored at the smallest
    enclosing code span.
    """
    if anchor is None:
        if location is None:
            raise AnchorNotFound("<none>")
        file_uri, offset = location
        enclosing = [
            n for n in g.nodes
            if isinstance(n, CodeNode) and n.file_uri == file_uri
            and n.start_byte <= offset < n.end_byte
        ]
        if not enclosing:
            raise LocationOutsideSpans(f"{file_uri}@{offset} is inside no traced span")
        anchor = min(enclosing, key=lambda n: (n.end_byte - n.start_byte, n.start_byte))
    if anchor not in g.nodes:
        raise AnchorNotFound(str(anchor))
    layers = _bfs_layers(g, anchor, forward=False)
    return AnalysisReport("origin", anchor, layers, _render(anchor, layers))


def report_json(report: AnalysisReport) -> dict:
    def node_json(n: TraceNode) -> dict:
        if isinstance(n, ElemNode):
            return {"kind": "element", "model": n.model_uri, "path": n.path}
        return {"kind": "code", "file": n.file_uri, "startByte": n.start_byte,
                "endByte": n.end_byte, "line": n.start_line, "col": n.start_col}

    return {
        "kind": report.kind,
        "anchor": node_json(report.anchor),
        "layers": [[node_json(n) for n in sorted(layer, key=_node_key)] for layer in report.layers],
    }


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(g: GlobalTraceMap, around: TraceNode | None = None, radius: int = 2) -> str:
    """DOT text; with ``around`` set, only the induced subgraph within
    ``radius`` undirected steps of the anchor."""
    nodes = set(g.nodes)
    edges = set(g.edges)
    if around is not None:
        if around not in g.nodes:
            raise AnchorNotFound(str(around))
        neighbors: dict[TraceNode, set[TraceNode]] = {}
        for edge in g.edges:
            neighbors.setdefault(edge.src, set()).add(edge.dst)
            neighbors.setdefault(edge.dst, set()).add(edge.src)
        keep = {around}
        frontier = {around}
        for _ in range(radius):
            frontier = {m for n in frontier for m in neighbors.get(n, set())} - keep
            if not frontier:
                break
            keep |= frontier
        nodes = keep
        edges = {e for e in g.edges if e.src in keep and e.dst in keep}

    lines = ["digraph gtm {", "  rankdir=LR;"]
    ids: dict[TraceNode, str] = {}
    for i, node in enumerate(sorted(nodes, key=_node_key)):
        ids[node] = f"n{i}"
        shape = "ellipse" if isinstance(node, ElemNode) else "note"
        lines.append(f'  n{i} [label="{_dot_escape(str(node))}" shape={shape}];')
    for edge in sorted(edges, key=lambda e: (_node_key(e.src), _node_key(e.dst), e.via, e.rule_tag)):
        style = " style=dashed" if edge.dangling else ""
        lines.append(
            f'  {ids[edge.src]} -> {ids[edge.dst]} [label="{_dot_escape(edge.rule_tag)}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"

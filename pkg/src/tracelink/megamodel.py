"""Megamodel: registry of workspace resources and their relations.

Resources (metamodels, models, transformations, process models, trace
models, generated files) are referenced by workspace-relative URI; trace
data stays in its own files. Megamodel values are immutable; registration
returns a new value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path, PurePosixPath

from .errors import AmbiguousMetamodel, DanglingRelation, DuplicateId, IntegrityError, ParseError
from .model import canonical_json


class ResourceKind(str, Enum):
    METAMODEL = "Metamodel"
    MODEL = "Model"
    TRANSFORMATION_M2M = "TransformationM2M"
    TRANSFORMATION_M2C = "TransformationM2C"
    PROCESS_MODEL = "ProcessModel"
    TRACE_MODEL = "TraceModel"
    GENERATED_FILE = "GeneratedFile"


class ResourceOrigin(str, Enum):
    USER_PROVIDED = "UserProvided"
    DISCOVERED = "Discovered"
    GENERATED = "Generated"


class RelationKind(str, Enum):
    CONFORMS_TO = "ConformsTo"
    DATA_FLOW = "DataFlow"
    TRACE_FOR = "TraceFor"
    WEAVE_BINDING = "WeaveBinding"


class FlowDirection(str, Enum):
    INPUT = "Input"
    OUTPUT = "Output"


_TRANSFORMATION_KINDS = (ResourceKind.TRANSFORMATION_M2M, ResourceKind.TRANSFORMATION_M2C)
_ARTIFACT_KINDS = (ResourceKind.MODEL, ResourceKind.GENERATED_FILE)

# File suffix -> resource kind, applied during discovery.
DISCOVERY_SUFFIXES = (
    (".mm.json", ResourceKind.METAMODEL),
    (".model.json", ResourceKind.MODEL),
    (".proc.json", ResourceKind.PROCESS_MODEL),
    (".m2m", ResourceKind.TRANSFORMATION_M2M),
    (".m2c", ResourceKind.TRANSFORMATION_M2C),
)


@dataclass(frozen=True)
class ResourceEntry:
    id: str
    kind: ResourceKind
    uri: str
    origin: ResourceOrigin
    produced_by: str | None = None  # transformation execution id, Generated only


@dataclass(frozen=True)
class Relation:
    from_id: str
    to_id: str
    kind: RelationKind
    direction: FlowDirection | None = None  # DataFlow only


@dataclass(frozen=True)
class Megamodel:
    resources: frozenset[ResourceEntry] = frozenset()
    relations: frozenset[Relation] = frozenset()

    def resource(self, resource_id: str) -> ResourceEntry | None:
        return next((r for r in self.resources if r.id == resource_id), None)

    def of_kind(self, kind: ResourceKind) -> list[ResourceEntry]:
        return sorted((r for r in self.resources if r.kind == kind), key=lambda r: r.uri)

    def relations_of(self, kind: RelationKind) -> list[Relation]:
        return sorted(
            (rel for rel in self.relations if rel.kind == kind),
            key=lambda rel: (rel.from_id, rel.to_id, rel.direction or ""),
        )


def resource_id(kind: ResourceKind, uri: str) -> str:
    """Stable, content-independent id."""
    return f"{kind.value}:{uri}"


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _validate(resources: frozenset[ResourceEntry], relations: frozenset[Relation]):
    by_id: dict[str, ResourceEntry] = {}
    for res in resources:
        if res.id in by_id:
            raise IntegrityError(f"duplicate resource id '{res.id}'")
        if not res.uri:
            raise IntegrityError(f"resource '{res.id}' has an empty uri")
        if res.origin == ResourceOrigin.GENERATED and not res.produced_by:
            raise IntegrityError(f"generated resource '{res.id}' lacks a producer")
        by_id[res.id] = res

    for rel in relations:
        src = by_id.get(rel.from_id)
        dst = by_id.get(rel.to_id)
        if src is None or dst is None:
            raise IntegrityError(f"relation endpoint missing: {rel.from_id} -> {rel.to_id}")
        if rel.kind == RelationKind.CONFORMS_TO:
            if src.kind != ResourceKind.MODEL or dst.kind != ResourceKind.METAMODEL:
                raise IntegrityError(f"ConformsTo must link Model to Metamodel: {rel.from_id} -> {rel.to_id}")
        elif rel.kind == RelationKind.TRACE_FOR:
            if src.kind != ResourceKind.TRACE_MODEL or dst.kind not in _TRANSFORMATION_KINDS:
                raise IntegrityError(f"TraceFor must link TraceModel to a transformation: {rel.from_id}")
        elif rel.kind == RelationKind.DATA_FLOW:
            if rel.direction is None:
                raise IntegrityError(f"DataFlow without direction: {rel.from_id} -> {rel.to_id}")
            if rel.direction == FlowDirection.INPUT:
                ok = src.kind in _ARTIFACT_KINDS and dst.kind in _TRANSFORMATION_KINDS
            else:
                ok = src.kind in _TRANSFORMATION_KINDS and dst.kind in _ARTIFACT_KINDS
            if not ok:
                raise IntegrityError(f"DataFlow must link artifacts and transformations: {rel.from_id}")
        elif rel.kind == RelationKind.WEAVE_BINDING:
            if src.kind != ResourceKind.PROCESS_MODEL or dst.kind not in _TRANSFORMATION_KINDS:
                raise IntegrityError(f"WeaveBinding must link ProcessModel to a transformation: {rel.from_id}")

    _check_dataflow_acyclic(relations)


def _check_dataflow_acyclic(relations: frozenset[Relation]):
    edges: dict[str, set[str]] = {}
    for rel in relations:
        if rel.kind == RelationKind.DATA_FLOW:
            edges.setdefault(rel.from_id, set()).add(rel.to_id)
    state: dict[str, int] = {}

    def visit(node: str):
        state[node] = 1
        for succ in edges.get(node, ()):
            if state.get(succ) == 1:
                raise IntegrityError(f"dataflow cycle through '{succ}'")
            if succ not in state:
                visit(succ)
        state[node] = 2

    for node in list(edges):
        if node not in state:
            visit(node)


# ---------------------------------------------------------------------------
# Registration
# ---------------------------------------------------------------------------

def register(mgm: Megamodel, entry: ResourceEntry, relations: list[Relation] = ()) -> Megamodel:
    """Add one resource plus relations; existing content is untouched."""
    if mgm.resource(entry.id) is not None:
        raise DuplicateId(entry.id)
    known = {r.id for r in mgm.resources} | {entry.id}
    for rel in relations:
        if rel.from_id not in known or rel.to_id not in known:
            raise DanglingRelation(f"relation references unknown id: {rel.from_id} -> {rel.to_id}")
    new = Megamodel(mgm.resources | {entry}, mgm.relations | set(relations))
    _validate(new.resources, new.relations)
    return new


# ---------------------------------------------------------------------------
# Discovery
# ---------------------------------------------------------------------------

def discover(workspace_root: str | Path, *, skip_dirs: tuple[str, ...] = ("out", "traces")) -> Megamodel:
    """Register every recognized file under the workspace root.

    Output and trace directories are skipped so that discovery stays
    idempotent after enactments. Ordering is lexicographic by URI.
    """
    root = Path(workspace_root)
    if not root.is_dir():
        raise FileNotFoundError(f"workspace root '{root}' is not a directory")

    found: list[tuple[str, ResourceKind]] = []
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = PurePosixPath(path.relative_to(root).as_posix())
        if any(part.startswith(".") for part in rel.parts):
            continue
        if rel.parts and rel.parts[0] in skip_dirs:
            continue
        for suffix, kind in DISCOVERY_SUFFIXES:
            if rel.name.endswith(suffix):
                found.append((str(rel), kind))
                break
    found.sort()

    resources: list[ResourceEntry] = []
    relations: list[Relation] = []
    metamodel_names: dict[str, str] = {}  # metamodel name -> resource id

    for uri, kind in found:
        resources.append(ResourceEntry(resource_id(kind, uri), kind, uri, ResourceOrigin.DISCOVERED))

    for uri, kind in found:
        if kind != ResourceKind.METAMODEL:
            continue
        name = _peek_json_field(root / uri, "name")
        if name is None:
            continue
        if name in metamodel_names:
            raise AmbiguousMetamodel(name)
        metamodel_names[name] = resource_id(kind, uri)

    for uri, kind in found:
        if kind != ResourceKind.MODEL:
            continue
        mm_name = _peek_json_field(root / uri, "metamodel")
        target = metamodel_names.get(mm_name) if mm_name else None
        if target is not None:
            relations.append(Relation(resource_id(kind, uri), target, RelationKind.CONFORMS_TO))

    # Weave bindings: process actions point at the transformations they run.
    known_ids = {r.id for r in resources}
    for uri, kind in found:
        if kind != ResourceKind.PROCESS_MODEL:
            continue
        from .process import parse_process  # local import to avoid a cycle

        process = parse_process((root / uri).read_text(encoding="utf-8"))
        pm_id = resource_id(kind, uri)
        for node in process.nodes:
            if node.transformation and node.transformation in known_ids:
                relations.append(Relation(pm_id, node.transformation, RelationKind.WEAVE_BINDING))

    mgm = Megamodel(frozenset(resources), frozenset(relations))
    _validate(mgm.resources, mgm.relations)
    return mgm


def _peek_json_field(path: Path, key: str) -> str | None:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    value = data.get(key) if isinstance(data, dict) else None
    return value if isinstance(value, str) else None


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_megamodel(mgm: Megamodel) -> str:
    resources = []
    for res in sorted(mgm.resources, key=lambda r: r.id):
        entry = {"id": res.id, "kind": res.kind.value, "origin": res.origin.value, "uri": res.uri}
        if res.produced_by:
            entry["producedBy"] = res.produced_by
        resources.append(entry)
    relations = []
    for rel in sorted(mgm.relations, key=lambda r: (r.from_id, r.kind.value, r.to_id, r.direction or "")):
        entry = {"from": rel.from_id, "kind": rel.kind.value, "to": rel.to_id}
        if rel.direction is not None:
            entry["direction"] = rel.direction.value
        relations.append(entry)
    return canonical_json({"resources": resources, "relations": relations})


def load_megamodel(text: str) -> Megamodel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict):
        raise ParseError("megamodel document must be an object")
    try:
        resources = frozenset(
            ResourceEntry(
                raw["id"],
                ResourceKind(raw["kind"]),
                raw["uri"],
                ResourceOrigin(raw["origin"]),
                raw.get("producedBy"),
            )
            for raw in data.get("resources", [])
        )
        relations = frozenset(
            Relation(
                raw["from"],
                raw["to"],
                RelationKind(raw["kind"]),
                FlowDirection(raw["direction"]) if "direction" in raw else None,
            )
            for raw in data.get("relations", [])
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise IntegrityError(f"megamodel file is malformed: {exc}") from exc
    _validate(resources, relations)
    return Megamodel(resources, relations)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

_DOT_SHAPES = {
    ResourceKind.METAMODEL: "trapezium",
    ResourceKind.MODEL: "hexagon",
    ResourceKind.TRANSFORMATION_M2M: "parallelogram",
    ResourceKind.TRANSFORMATION_M2C: "parallelogram",
    ResourceKind.PROCESS_MODEL: "box",
    ResourceKind.TRACE_MODEL: "note",
    ResourceKind.GENERATED_FILE: "folder",
}


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def megamodel_dot(mgm: Megamodel) -> str:
    """DOT rendering: transformations, models, metamodels, conformance, dataflow."""
    lines = ["digraph megamodel {", "  rankdir=LR;"]
    ids = {}
    for i, res in enumerate(sorted(mgm.resources, key=lambda r: r.id)):
        ids[res.id] = f"n{i}"
        lines.append(f'  n{i} [label="{_dot_escape(res.uri)}" shape={_DOT_SHAPES[res.kind]}];')
    styles = {
        RelationKind.CONFORMS_TO: ' [style=dashed color=purple label="conformsTo"]',
        RelationKind.TRACE_FOR: ' [style=dotted color=gray label="traceFor"]',
        RelationKind.WEAVE_BINDING: ' [style=dashed color=gray label="weave"]',
        RelationKind.DATA_FLOW: "",
    }
    for rel in sorted(mgm.relations, key=lambda r: (r.from_id, r.kind.value, r.to_id, r.direction or "")):
        lines.append(f"  {ids[rel.from_id]} -> {ids[rel.to_id]}{styles[rel.kind]};")
    lines.append("}")
    return "\n".join(lines) + "\n"

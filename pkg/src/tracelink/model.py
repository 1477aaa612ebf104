"""Typed models and metamodels: parsing, conformance checking, path resolution.

Concrete syntax is JSON (``*.mm.json`` / ``*.model.json``, see docs/formats.md).
Values are immutable after parse; engines that build models mutate fresh
elements during construction only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConformanceError, NotInModel, ParseError, PathNotFound, SchemaError
from .paths import ROOT_PATH, ElementPath, PathSegment, parse_path

PRIMITIVE_TYPES = ("string", "int", "float", "bool")


# ---------------------------------------------------------------------------
# Metamodel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeDef:
    name: str
    type: str  # one of PRIMITIVE_TYPES


@dataclass(frozen=True)
class CollectionDef:
    name: str
    element_class: str


@dataclass(frozen=True)
class ReferenceDef:
    name: str
    target_class: str
    optional: bool = False


@dataclass(frozen=True)
class ClassDef:
    name: str
    attributes: tuple[AttributeDef, ...] = ()
    collections: tuple[CollectionDef, ...] = ()
    references: tuple[ReferenceDef, ...] = ()

    def attribute(self, name: str) -> AttributeDef | None:
        return next((a for a in self.attributes if a.name == name), None)

    def collection(self, name: str) -> CollectionDef | None:
        return next((c for c in self.collections if c.name == name), None)

    def reference(self, name: str) -> ReferenceDef | None:
        return next((r for r in self.references if r.name == name), None)


@dataclass(frozen=True)
class Metamodel:
    name: str
    classes: tuple[ClassDef, ...] = ()

    def class_named(self, name: str) -> ClassDef | None:
        return next((c for c in self.classes if c.name == name), None)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class Element:
    """One node of a model tree. Collections are ordered; order is significant."""

    class_name: str
    attrs: dict[str, object] = field(default_factory=dict)
    collections: dict[str, list["Element"]] = field(default_factory=dict)
    refs: dict[str, ElementPath] = field(default_factory=dict)


@dataclass
class Model:
    uri: str
    metamodel_name: str
    root: Element


@dataclass(frozen=True)
class Violation:
    path: str
    message: str


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def _load_json(text: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc


def _require(cond: bool, message: str):
    if not cond:
        raise ParseError(message)


def canonical_json(data: object) -> str:
    """Canonical serialization: UTF-8, LF, 2-space indent, sorted keys."""
    return json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Metamodel parse / serialize
# ---------------------------------------------------------------------------

def parse_metamodel(text: str) -> Metamodel:
    data = _load_json(text)
    _require(isinstance(data, dict), "metamodel document must be an object")
    _require(isinstance(data.get("name"), str) and data["name"], "metamodel needs a string 'name'")
    _require(isinstance(data.get("classes", []), list), "'classes' must be a list")

    classes: list[ClassDef] = []
    for raw in data.get("classes", []):
        _require(isinstance(raw, dict), "each class must be an object")
        cname = raw.get("name")
        _require(isinstance(cname, str) and cname, "class needs a string 'name'")
        attrs = []
        for a in raw.get("attributes", []):
            _require(isinstance(a, dict) and isinstance(a.get("name"), str), f"bad attribute in class '{cname}'")
            if a.get("type") not in PRIMITIVE_TYPES:
                raise SchemaError(f"class '{cname}', attribute '{a['name']}': unknown type {a.get('type')!r}")
            attrs.append(AttributeDef(a["name"], a["type"]))
        colls = []
        for c in raw.get("collections", []):
            _require(isinstance(c, dict) and isinstance(c.get("name"), str) and isinstance(c.get("class"), str),
                     f"bad collection in class '{cname}'")
            colls.append(CollectionDef(c["name"], c["class"]))
        refs = []
        for r in raw.get("references", []):
            _require(isinstance(r, dict) and isinstance(r.get("name"), str) and isinstance(r.get("class"), str),
                     f"bad reference in class '{cname}'")
            refs.append(ReferenceDef(r["name"], r["class"], bool(r.get("optional", False))))
        classes.append(ClassDef(cname, tuple(attrs), tuple(colls), tuple(refs)))

    mm = Metamodel(data["name"], tuple(classes))
    _check_metamodel(mm)
    return mm


def _check_metamodel(mm: Metamodel):
    seen: set[str] = set()
    for cls in mm.classes:
        if cls.name in seen:
            raise SchemaError(f"duplicate class '{cls.name}' in metamodel '{mm.name}'")
        seen.add(cls.name)
    for cls in mm.classes:
        feature_names: set[str] = set()
        for feat in (*cls.attributes, *cls.collections, *cls.references):
            if feat.name in feature_names:
                raise SchemaError(f"class '{cls.name}': duplicate feature '{feat.name}'")
            feature_names.add(feat.name)
        for coll in cls.collections:
            if mm.class_named(coll.element_class) is None:
                raise SchemaError(
                    f"class '{cls.name}', collection '{coll.name}': unknown class '{coll.element_class}'")
        for ref in cls.references:
            if mm.class_named(ref.target_class) is None:
                raise SchemaError(
                    f"class '{cls.name}', reference '{ref.name}': unknown class '{ref.target_class}'")


def serialize_metamodel(mm: Metamodel) -> str:
    classes = []
    for cls in mm.classes:
        entry: dict[str, object] = {"name": cls.name}
        if cls.attributes:
            entry["attributes"] = [{"name": a.name, "type": a.type} for a in cls.attributes]
        if cls.collections:
            entry["collections"] = [{"class": c.element_class, "name": c.name} for c in cls.collections]
        if cls.references:
            entry["references"] = [
                {"class": r.target_class, "name": r.name, **({"optional": True} if r.optional else {})}
                for r in cls.references
            ]
        classes.append(entry)
    return canonical_json({"name": mm.name, "classes": classes})


# ---------------------------------------------------------------------------
# Model parse / serialize
# ---------------------------------------------------------------------------

_SCALARS = (str, int, float, bool)


def _parse_element(raw: object, where: str) -> Element:
    _require(isinstance(raw, dict), f"{where}: element must be an object")
    _require(isinstance(raw.get("class"), str) and raw["class"], f"{where}: element needs a string 'class'")
    attrs = raw.get("attrs", {})
    _require(isinstance(attrs, dict), f"{where}: 'attrs' must be an object")
    for key, value in attrs.items():
        _require(isinstance(value, _SCALARS), f"{where}: attribute '{key}' must be a scalar")
    collections: dict[str, list[Element]] = {}
    raw_colls = raw.get("collections", {})
    _require(isinstance(raw_colls, dict), f"{where}: 'collections' must be an object")
    for name, items in raw_colls.items():
        _require(isinstance(items, list), f"{where}: collection '{name}' must be a list")
        collections[name] = [_parse_element(item, f"{where}.{name}[{i}]") for i, item in enumerate(items)]
    refs: dict[str, ElementPath] = {}
    raw_refs = raw.get("refs", {})
    _require(isinstance(raw_refs, dict), f"{where}: 'refs' must be an object")
    for name, value in raw_refs.items():
        _require(isinstance(value, str), f"{where}: reference '{name}' must be a path string")
        refs[name] = parse_path(value)
    return Element(raw["class"], dict(attrs), collections, refs)


def parse_model(text: str, mm: Metamodel, uri: str = "") -> Model:
    """Parse and validate a model document against ``mm``."""
    data = _load_json(text)
    _require(isinstance(data, dict), "model document must be an object")
    declared = data.get("metamodel")
    _require(isinstance(declared, str) and declared, "model needs a string 'metamodel'")
    _require("root" in data, "model needs a 'root' element")
    if declared != mm.name:
        raise ConformanceError("root", f"model declares metamodel '{declared}', expected '{mm.name}'")
    model = Model(uri, declared, _parse_element(data["root"], "root"))
    violations = check_conformance(model, mm)
    if violations:
        first = violations[0]
        raise ConformanceError(first.path, first.message, tuple(violations))
    return model


def _element_to_json(e: Element) -> dict:
    out: dict[str, object] = {"class": e.class_name}
    if e.attrs:
        out["attrs"] = dict(e.attrs)
    if any(e.collections.values()):
        out["collections"] = {
            name: [_element_to_json(child) for child in children]
            for name, children in e.collections.items() if children
        }
    if e.refs:
        out["refs"] = {name: str(path) for name, path in e.refs.items()}
    return out


def serialize_model(m: Model) -> str:
    return canonical_json({"metamodel": m.metamodel_name, "root": _element_to_json(m.root)})


# ---------------------------------------------------------------------------
# Conformance
# ---------------------------------------------------------------------------

def _type_ok(declared: str, value: object) -> bool:
    if declared == "string":
        return isinstance(value, str)
    if declared == "bool":
        return isinstance(value, bool)
    if declared == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if declared == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return False


def check_conformance(m: Model, mm: Metamodel) -> list[Violation]:
    """All conformance violations, sorted by path. Empty list means conforming."""
    violations: list[Violation] = []
    seen: set[int] = set()

    def visit(e: Element, path: ElementPath):
        path_str = str(path)
        if id(e) in seen:
            violations.append(Violation(path_str, "element contained more than once"))
            return
        seen.add(id(e))
        cls = mm.class_named(e.class_name)
        if cls is None:
            violations.append(Violation(path_str, f"unknown class '{e.class_name}'"))
        else:
            for name, value in e.attrs.items():
                attr = cls.attribute(name)
                if attr is None:
                    violations.append(Violation(path_str, f"class '{cls.name}' declares no attribute '{name}'"))
                elif not _type_ok(attr.type, value):
                    violations.append(Violation(
                        path_str, f"attribute '{name}' expects {attr.type}, got {type(value).__name__}"))
            for name in e.collections:
                if cls.collection(name) is None:
                    violations.append(Violation(path_str, f"class '{cls.name}' declares no collection '{name}'"))
            for name, ref_path in e.refs.items():
                ref = cls.reference(name)
                if ref is None:
                    violations.append(Violation(path_str, f"class '{cls.name}' declares no reference '{name}'"))
                    continue
                try:
                    target = resolve_path(m, ref_path)
                except PathNotFound:
                    violations.append(Violation(path_str, f"reference '{name}' dangles: '{ref_path}'"))
                    continue
                if target.class_name != ref.target_class:
                    violations.append(Violation(
                        path_str,
                        f"reference '{name}' expects class '{ref.target_class}', got '{target.class_name}'"))
            for ref in cls.references:
                if not ref.optional and ref.name not in e.refs:
                    violations.append(Violation(path_str, f"required reference '{ref.name}' is unset"))
        for name, children in e.collections.items():
            decl = cls.collection(name) if cls else None
            for i, child in enumerate(children):
                child_path = _child_path(path, name, i)
                if decl is not None and child.class_name != decl.element_class:
                    violations.append(Violation(
                        str(child_path),
                        f"collection '{name}' holds class '{decl.element_class}', got '{child.class_name}'"))
                visit(child, child_path)

    visit(m.root, ROOT_PATH)
    violations.sort(key=lambda v: (v.path, v.message))
    return violations


def _child_path(parent: ElementPath, name: str, index: int) -> ElementPath:
    # Children of the root are addressed without a "root." prefix.
    if parent == ROOT_PATH:
        return ElementPath((PathSegment(name, index),))
    return parent.child(name, index)


# ---------------------------------------------------------------------------
# Path resolution
# ---------------------------------------------------------------------------

def resolve_path(m: Model, p: ElementPath) -> Element:
    """Walk collections/indices from the root to the addressed element."""
    segments = p.segments
    current = m.root
    start = 0
    if segments[0].index is None:
        if segments[0].name != "root":
            raise PathNotFound(str(segments[0]))
        if len(segments) == 1:
            return current
        start = 1
    for seg in segments[start:]:
        if seg.index is None:
            raise PathNotFound(str(seg))
        children = current.collections.get(seg.name)
        if children is None or seg.index >= len(children):
            raise PathNotFound(str(seg))
        current = children[seg.index]
    return current


def path_of(m: Model, e: Element) -> ElementPath:
    """Canonical containment path of ``e`` in ``m`` (identity comparison)."""
    if e is m.root:
        return ROOT_PATH

    def search(current: Element, trail: tuple[PathSegment, ...]) -> ElementPath | None:
        for name, children in current.collections.items():
            for i, child in enumerate(children):
                segs = trail + (PathSegment(name, i),)
                if child is e:
                    return ElementPath(segs)
                found = search(child, segs)
                if found is not None:
                    return found
        return None

    result = search(m.root, ())
    if result is None:
        raise NotInModel(f"element of class '{e.class_name}' is not reachable from the model root")
    return result


def iter_elements(m: Model):
    """Yield (path, element) pairs in pre-order, root first."""

    def walk(e: Element, path: ElementPath):
        yield path, e
        for name, children in e.collections.items():
            for i, child in enumerate(children):
                yield from walk(child, _child_path(path, name, i))

    yield from walk(m.root, ROOT_PATH)

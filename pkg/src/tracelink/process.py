"""Activity-style process models and their enactment.

A process is a graph of Initial/Final/Fork/Join/Action nodes with control
edges plus object edges that carry models between action pins. Scheduling
layers actions into minimal-depth stages; enactment runs each action's
transformation (augmented, so traces come out as a byproduct) and registers
every produced artifact in the megamodel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from . import m2c, m2m
from .errors import (
    ConformanceError,
    CycleError,
    MissingBinding,
    ParseError,
    TracelinkError,
    TransformationError,
    WellFormednessError,
)
from .megamodel import (
    FlowDirection,
    Megamodel,
    Relation,
    RelationKind,
    ResourceEntry,
    ResourceKind,
    ResourceOrigin,
    register,
    resource_id,
)
from .model import Metamodel, Model, check_conformance, parse_metamodel, parse_model, serialize_model
from .trace import LocalTraceModel, save_trace
from .workspace import read_text, write_text


class NodeKind(str, Enum):
    INITIAL = "Initial"
    FINAL = "Final"
    FORK = "Fork"
    JOIN = "Join"
    ACTION = "Action"


@dataclass(frozen=True)
class Pin:
    name: str
    metamodel: str


@dataclass(frozen=True)
class ProcNode:
    id: str
    kind: NodeKind
    transformation: str | None = None  # megamodel resource id, actions only
    input_pins: tuple[Pin, ...] = ()
    output_pins: tuple[Pin, ...] = ()


@dataclass(frozen=True)
class ObjectEdge:
    from_node: str
    from_pin: str
    to_node: str
    to_pin: str


@dataclass(frozen=True)
class ProcessModel:
    name: str
    nodes: tuple[ProcNode, ...]
    control_edges: tuple[tuple[str, str], ...]
    object_edges: tuple[ObjectEdge, ...]

    def node(self, node_id: str) -> ProcNode | None:
        return next((n for n in self.nodes if n.id == node_id), None)

    def actions(self) -> list[ProcNode]:
        return [n for n in self.nodes if n.kind == NodeKind.ACTION]


@dataclass(frozen=True)
class ExecutionPlan:
    stages: tuple[tuple[str, ...], ...]  # action ids, sorted within each stage


@dataclass
class EnactmentResult:
    megamodel: Megamodel
    artifacts: tuple[ResourceEntry, ...]
    traces: tuple[LocalTraceModel, ...]
    log: tuple[str, ...]


# ---------------------------------------------------------------------------
# Parsing and well-formedness
# ---------------------------------------------------------------------------

def parse_process(text: str) -> ProcessModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(data, dict) or not isinstance(data.get("name"), str):
        raise ParseError("process document needs a string 'name'")

    nodes: list[ProcNode] = []
    for raw in data.get("nodes", []):
        if not isinstance(raw, dict) or not isinstance(raw.get("id"), str):
            raise ParseError("each node needs a string 'id'")
        try:
            kind = NodeKind(raw.get("kind"))
        except ValueError:
            raise ParseError(f"node '{raw['id']}': unknown kind {raw.get('kind')!r}") from None
        pins = {}
        for side in ("inputPins", "outputPins"):
            pins[side] = tuple(
                Pin(p["name"], p["metamodel"]) for p in raw.get(side, [])
            ) if kind == NodeKind.ACTION else ()
        transformation = raw.get("transformation") if kind == NodeKind.ACTION else None
        if kind == NodeKind.ACTION and not isinstance(transformation, str):
            raise ParseError(f"action '{raw['id']}' needs a 'transformation' resource id")
        nodes.append(ProcNode(raw["id"], kind, transformation, pins["inputPins"], pins["outputPins"]))

    control_edges = tuple((e[0], e[1]) for e in data.get("controlEdges", []))
    object_edges = tuple(
        ObjectEdge(e["from"], e["fromPin"], e["to"], e["toPin"]) for e in data.get("objectEdges", [])
    )
    process = ProcessModel(data["name"], tuple(nodes), control_edges, object_edges)
    _check_process(process)
    return process


def _check_process(p: ProcessModel):
    ids = [n.id for n in p.nodes]
    if len(set(ids)) != len(ids):
        raise WellFormednessError("duplicate node ids")
    initials = [n for n in p.nodes if n.kind == NodeKind.INITIAL]
    finals = [n for n in p.nodes if n.kind == NodeKind.FINAL]
    if len(initials) != 1:
        raise WellFormednessError(f"a process needs exactly one Initial node, found {len(initials)}")
    if not finals:
        raise WellFormednessError("a process needs at least one Final node")

    known = set(ids)
    for a, b in p.control_edges:
        if a not in known or b not in known:
            raise WellFormednessError(f"control edge references unknown node: {a} -> {b}")

    out_deg: dict[str, int] = {}
    in_deg: dict[str, int] = {}
    succ: dict[str, list[str]] = {}
    for a, b in p.control_edges:
        out_deg[a] = out_deg.get(a, 0) + 1
        in_deg[b] = in_deg.get(b, 0) + 1
        succ.setdefault(a, []).append(b)
    for node in p.nodes:
        if node.kind == NodeKind.FORK and out_deg.get(node.id, 0) < 2:
            raise WellFormednessError(f"fork '{node.id}' needs out-degree >= 2")
        if node.kind == NodeKind.JOIN and in_deg.get(node.id, 0) < 2:
            raise WellFormednessError(f"join '{node.id}' needs in-degree >= 2")

    reachable = {initials[0].id}
    frontier = [initials[0].id]
    while frontier:
        current = frontier.pop()
        for nxt in succ.get(current, ()):
            if nxt not in reachable:
                reachable.add(nxt)
                frontier.append(nxt)
    unreachable = known - reachable
    if unreachable:
        raise WellFormednessError(f"nodes unreachable from Initial: {', '.join(sorted(unreachable))}")

    actions = {n.id: n for n in p.actions()}
    for node in actions.values():
        for side in (node.input_pins, node.output_pins):
            names = [pin.name for pin in side]
            if len(set(names)) != len(names):
                raise WellFormednessError(f"action '{node.id}' has duplicate pin names")
    fed: dict[tuple[str, str], int] = {}
    for edge in p.object_edges:
        src = actions.get(edge.from_node)
        dst = actions.get(edge.to_node)
        if src is None or dst is None:
            raise WellFormednessError(f"object edge references a non-action node: {edge.from_node} -> {edge.to_node}")
        if all(pin.name != edge.from_pin for pin in src.output_pins):
            raise WellFormednessError(f"action '{src.id}' has no output pin '{edge.from_pin}'")
        if all(pin.name != edge.to_pin for pin in dst.input_pins):
            raise WellFormednessError(f"action '{dst.id}' has no input pin '{edge.to_pin}'")
        key = (edge.to_node, edge.to_pin)
        fed[key] = fed.get(key, 0) + 1
        if fed[key] > 1:
            raise WellFormednessError(f"input pin '{edge.to_node}.{edge.to_pin}' is fed by more than one edge")


# ---------------------------------------------------------------------------
# Scheduling
# ---------------------------------------------------------------------------

def _action_precedence(p: ProcessModel) -> dict[str, set[str]]:
    """Direct predecessors of each action via control (through non-action
    nodes) and object flow."""
    succ: dict[str, list[str]] = {}
    for a, b in p.control_edges:
        succ.setdefault(a, []).append(b)
    action_ids = {n.id for n in p.actions()}
    preds: dict[str, set[str]] = {aid: set() for aid in action_ids}

    for aid in action_ids:
        # Walk forward from the action through non-action nodes.
        seen: set[str] = set()
        frontier = list(succ.get(aid, ()))
        while frontier:
            current = frontier.pop()
            if current in seen:
                continue
            seen.add(current)
            if current in action_ids:
                preds[current].add(aid)
            else:
                frontier.extend(succ.get(current, ()))

    for edge in p.object_edges:
        preds[edge.to_node].add(edge.from_node)
    return preds


def schedule(p: ProcessModel) -> ExecutionPlan:
    """Minimal-depth staging of actions; deterministic within a stage."""
    preds = _action_precedence(p)

    state: dict[str, int] = {}
    trail: list[str] = []

    def find_cycle(node: str) -> list[str] | None:
        state[node] = 1
        trail.append(node)
        for prev in sorted(preds[node]):
            if state.get(prev) == 1:
                return trail[trail.index(prev):] + [prev]
            if prev not in state:
                cycle = find_cycle(prev)
                if cycle is not None:
                    return cycle
        trail.pop()
        state[node] = 2
        return None

    for aid in sorted(preds):
        if aid not in state:
            cycle = find_cycle(aid)
            if cycle is not None:
                raise CycleError(cycle)

    depth: dict[str, int] = {}

    def depth_of(aid: str) -> int:
        if aid not in depth:
            depth[aid] = 1 + max((depth_of(x) for x in preds[aid]), default=0)
        return depth[aid]

    stages: dict[int, list[str]] = {}
    for aid in preds:
        stages.setdefault(depth_of(aid), []).append(aid)
    return ExecutionPlan(tuple(tuple(sorted(stages[level])) for level in sorted(stages)))


# ---------------------------------------------------------------------------
# Enactment
# ---------------------------------------------------------------------------

def _load_metamodels(mgm: Megamodel, root: Path) -> dict[str, Metamodel]:
    metamodels: dict[str, Metamodel] = {}
    for res in mgm.of_kind(ResourceKind.METAMODEL):
        mm = parse_metamodel(read_text(root, res.uri))
        metamodels[mm.name] = mm
    return metamodels


def _metamodel_resource_ids(mgm: Megamodel, root: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for res in mgm.of_kind(ResourceKind.METAMODEL):
        data = json.loads(read_text(root, res.uri))
        out[data["name"]] = res.id
    return out


def enact(
    p: ProcessModel,
    mgm: Megamodel,
    bindings: dict[str, str],
    root: Path,
    *,
    output_dir: str = "out",
    trace_dir: str = "traces",
    augment: bool = True,
    action_order: Callable[[list[str]], list[str]] | None = None,
    default_markers: tuple[str, str] = ("{{", "}}"),
) -> EnactmentResult:
    """Run every action in stage order; outputs do not depend on the order
    actions execute within a stage.

    ``bindings`` maps pin names to model URIs for input pins that no object
    edge feeds. ``action_order`` reorders execution within a stage (used to
    demonstrate order independence); registration stays in sorted order.
    """
    plan = schedule(p)
    metamodels = _load_metamodels(mgm, root)
    mm_resource_ids = _metamodel_resource_ids(mgm, root)

    actions = {n.id: n for n in p.actions()}
    fed_pins = {(e.to_node, e.to_pin) for e in p.object_edges}
    for action in sorted(actions.values(), key=lambda n: n.id):
        for pin in (*action.input_pins, *action.output_pins):
            if pin.metamodel not in metamodels:
                raise WellFormednessError(
                    f"action '{action.id}': pin '{pin.name}' names unknown metamodel '{pin.metamodel}'")
        for pin in action.input_pins:
            if (action.id, pin.name) not in fed_pins and pin.name not in bindings:
                raise MissingBinding(f"{action.id}.{pin.name}")
        if actions[action.id].transformation is None or mgm.resource(action.transformation) is None:
            raise TransformationError("transformation is not registered in the megamodel", action.id)

    # Pre-assign execution stamps in deterministic (stage, action id) order.
    stamps: dict[str, int] = {}
    counter = 0
    for stage in plan.stages:
        for aid in stage:
            counter += 1
            stamps[aid] = counter

    pin_inputs: dict[tuple[str, str], str] = {}
    for action in actions.values():
        for pin in action.input_pins:
            if (action.id, pin.name) not in fed_pins:
                pin_inputs[(action.id, pin.name)] = bindings[pin.name]

    model_cache: dict[str, Model] = {}

    def load_model(uri: str, mm_name: str, action_id: str) -> Model:
        if uri not in model_cache:
            mm = metamodels[mm_name]
            model_cache[uri] = parse_model(read_text(root, uri), mm, uri=uri)
        model = model_cache[uri]
        if model.metamodel_name != mm_name:
            raise ConformanceError("root", f"model '{uri}' conforms to '{model.metamodel_name}', "
                                           f"pin of action '{action_id}' needs '{mm_name}'")
        violations = check_conformance(model, metamodels[mm_name])
        if violations:
            raise ConformanceError(violations[0].path, violations[0].message, tuple(violations))
        return model

    current = mgm
    artifacts: list[ResourceEntry] = []
    traces: list[LocalTraceModel] = []
    log: list[str] = []

    for stage_index, stage in enumerate(plan.stages, start=1):
        order = list(stage)
        if action_order is not None:
            order = action_order(order)
            if sorted(order) != sorted(stage):
                raise TracelinkError("action_order must permute the stage")
        # Deltas keyed by action id; applied in sorted order after the stage.
        deltas: dict[str, tuple[list[tuple[ResourceEntry, list[Relation]]], LocalTraceModel | None, str]] = {}

        for aid in order:
            action = actions[aid]
            tr_res = current.resource(action.transformation)
            try:
                if tr_res.kind == ResourceKind.TRANSFORMATION_M2M:
                    deltas[aid] = _run_m2m_action(
                        action, tr_res, root, metamodels, mm_resource_ids, pin_inputs,
                        load_model, stamps[aid], output_dir, trace_dir, augment)
                elif tr_res.kind == ResourceKind.TRANSFORMATION_M2C:
                    deltas[aid] = _run_m2c_action(
                        action, tr_res, root, metamodels, pin_inputs,
                        load_model, stamps[aid], output_dir, trace_dir, augment, default_markers)
                else:
                    raise TransformationError(f"resource '{tr_res.id}' is not a transformation", aid)
            except (MissingBinding, ConformanceError, TransformationError):
                raise
            except TracelinkError as exc:
                raise TransformationError(str(exc), aid) from exc

        for aid in stage:
            registrations, trace, line = deltas[aid]
            for entry, relations in registrations:
                current = register(current, entry, relations)
                artifacts.append(entry)
            if trace is not None:
                traces.append(trace)
            log.append(f"[stage {stage_index}] {line}")

        # Propagate outputs along object edges for later stages.
        for edge in p.object_edges:
            key = (edge.from_node, edge.from_pin)
            produced = _output_uri(actions[edge.from_node], edge.from_pin, output_dir)
            if edge.from_node in deltas and produced is not None:
                pin_inputs[(edge.to_node, edge.to_pin)] = produced

    return EnactmentResult(current, tuple(artifacts), tuple(traces), tuple(log))


def _output_uri(action: ProcNode, pin_name: str, output_dir: str) -> str | None:
    for pin in action.output_pins:
        if pin.name == pin_name:
            return f"{output_dir}/{action.id}/{pin.name}.model.json"
    return None


def _run_m2m_action(action, tr_res, root, metamodels, mm_resource_ids, pin_inputs,
                    load_model, stamp, output_dir, trace_dir, augment):
    transformation = m2m.parse_m2m(read_text(root, tr_res.uri), metamodels)
    if augment:
        transformation = m2m.augment_m2m(transformation)

    declared = dict(transformation.inputs)
    inputs: dict[str, Model] = {}
    for pin in action.input_pins:
        if pin.name not in declared:
            raise TransformationError(
                f"pin '{pin.name}' matches no input alias of '{tr_res.uri}'", action.id)
        if declared[pin.name] != pin.metamodel:
            raise TransformationError(
                f"pin '{pin.name}' carries '{pin.metamodel}' but the transformation expects "
                f"'{declared[pin.name]}'", action.id)
        inputs[pin.name] = load_model(pin_inputs[(action.id, pin.name)], pin.metamodel, action.id)
    if set(inputs) != set(declared):
        missing = sorted(set(declared) - set(inputs))
        raise TransformationError(f"no pins feed input aliases: {', '.join(missing)}", action.id)
    if len(action.output_pins) != 1:
        raise TransformationError("an M2M action needs exactly one output pin", action.id)
    out_pin = action.output_pins[0]
    if transformation.output[1] != out_pin.metamodel:
        raise TransformationError(
            f"output pin carries '{out_pin.metamodel}' but the transformation produces "
            f"'{transformation.output[1]}'", action.id)

    out_uri = _output_uri(action, out_pin.name, output_dir)
    trace_uri = f"{trace_dir}/{action.id}.trace.json"

    registrations: list[tuple[ResourceEntry, list[Relation]]] = []
    if augment:
        out_model, trace = m2m.execute_augmented_m2m(
            transformation, inputs, metamodels, out_uri,
            trace_id=f"trace:{action.id}", transformation_id=tr_res.id, execution_stamp=stamp)
    else:
        out_model = m2m.execute_m2m(transformation, inputs, metamodels, out_uri)
        trace = None
    write_text(root, out_uri, serialize_model(out_model))

    model_id = resource_id(ResourceKind.MODEL, out_uri)
    model_rels = [
        Relation(model_id, mm_resource_ids[out_pin.metamodel], RelationKind.CONFORMS_TO),
        Relation(tr_res.id, model_id, RelationKind.DATA_FLOW, FlowDirection.OUTPUT),
    ]
    for pin in action.input_pins:
        in_uri = pin_inputs[(action.id, pin.name)]
        in_id = resource_id(ResourceKind.MODEL, in_uri)
        model_rels.append(Relation(in_id, tr_res.id, RelationKind.DATA_FLOW, FlowDirection.INPUT))
    registrations.append((
        ResourceEntry(model_id, ResourceKind.MODEL, out_uri, ResourceOrigin.GENERATED,
                      produced_by=f"{tr_res.id}#{stamp}"),
        model_rels,
    ))
    if trace is not None:
        write_text(root, trace_uri, save_trace(trace))
        trace_id = resource_id(ResourceKind.TRACE_MODEL, trace_uri)
        registrations.append((
            ResourceEntry(trace_id, ResourceKind.TRACE_MODEL, trace_uri, ResourceOrigin.GENERATED,
                          produced_by=f"{tr_res.id}#{stamp}"),
            [Relation(trace_id, tr_res.id, RelationKind.TRACE_FOR)],
        ))
    line = f"{action.id}: {tr_res.uri} -> {out_uri}" + (f" (trace {trace_uri})" if trace else "")
    return registrations, trace, line


def _run_m2c_action(action, tr_res, root, metamodels, pin_inputs, load_model,
                    stamp, output_dir, trace_dir, augment, default_markers):
    template = m2c.parse_template(read_text(root, tr_res.uri), metamodels, default_markers)
    if len(action.input_pins) != 1:
        raise TransformationError("an M2C action needs exactly one input pin", action.id)
    pin = action.input_pins[0]
    if template.metamodel.name != pin.metamodel:
        raise TransformationError(
            f"pin '{pin.name}' carries '{pin.metamodel}' but the template expects "
            f"'{template.metamodel.name}'", action.id)
    if action.output_pins:
        raise TransformationError("an M2C action writes files, not model pins", action.id)
    in_uri = pin_inputs[(action.id, pin.name)]
    model = load_model(in_uri, pin.metamodel, action.id)

    clean_uri = f"{output_dir}/{action.id}/{template.name}"
    registrations: list[tuple[ResourceEntry, list[Relation]]] = []
    trace = None
    trace_uri = f"{trace_dir}/{action.id}.trace.json"
    if augment:
        augmented = m2c.augment_template(template)
        annotated = m2c.render_augmented(augmented, model)
        clean, trace, _tree = m2c.extract_trace(
            annotated, in_uri, clean_uri,
            trace_id=f"trace:{action.id}", transformation_id=tr_res.id, execution_stamp=stamp)
        write_text(root, clean_uri + ".annotated", annotated.text)
    else:
        clean = m2c.render(template, model)
    write_text(root, clean_uri, clean)

    file_id = resource_id(ResourceKind.GENERATED_FILE, clean_uri)
    in_id = resource_id(ResourceKind.MODEL, in_uri)
    registrations.append((
        ResourceEntry(file_id, ResourceKind.GENERATED_FILE, clean_uri, ResourceOrigin.GENERATED,
                      produced_by=f"{tr_res.id}#{stamp}"),
        [
            Relation(in_id, tr_res.id, RelationKind.DATA_FLOW, FlowDirection.INPUT),
            Relation(tr_res.id, file_id, RelationKind.DATA_FLOW, FlowDirection.OUTPUT),
        ],
    ))
    if trace is not None:
        write_text(root, trace_uri, save_trace(trace))
        trace_res_id = resource_id(ResourceKind.TRACE_MODEL, trace_uri)
        registrations.append((
            ResourceEntry(trace_res_id, ResourceKind.TRACE_MODEL, trace_uri, ResourceOrigin.GENERATED,
                          produced_by=f"{tr_res.id}#{stamp}"),
            [Relation(trace_res_id, tr_res.id, RelationKind.TRACE_FOR)],
        ))
    line = f"{action.id}: {tr_res.uri} -> {clean_uri}" + (f" (trace {trace_uri})" if trace else "")
    return registrations, trace, line

"""tracelink: transformation chains with end-to-end trace maps.

Enacts chains of model-to-model and model-to-code transformations,
instruments them so every run emits a local trace model, joins those
traces into a global trace map inside a megamodel, and answers
change-impact and origin-tracking queries from input model elements down
to generated code spans.
"""

__version__ = "0.1.0"

from .errors import TracelinkError
from .gtm import GlobalTraceMap, build_gtm, change_impact, export_dot, origin_track
from .m2c import (
    AnnotatedOutput,
    Template,
    augment_template,
    extract_trace,
    parse_template,
    print_template,
    render,
    render_augmented,
    strip_template,
)
from .m2m import (
    TransformationM2M,
    augment_m2m,
    execute_augmented_m2m,
    execute_m2m,
    parse_m2m,
    print_m2m,
    strip_m2m,
)
from .megamodel import (
    Megamodel,
    Relation,
    ResourceEntry,
    ResourceKind,
    ResourceOrigin,
    discover,
    load_megamodel,
    register,
    save_megamodel,
)
from .model import (
    Element,
    Metamodel,
    Model,
    Violation,
    check_conformance,
    parse_metamodel,
    parse_model,
    path_of,
    resolve_path,
    serialize_metamodel,
    serialize_model,
)
from .paths import ElementPath, PathSegment, parse_path, print_path
from .process import EnactmentResult, ExecutionPlan, ProcessModel, enact, parse_process, schedule
from .trace import (
    CodeSpan,
    ElementRef,
    LocalTraceModel,
    TraceIdentifierTree,
    TraceLink,
    build_identifier_tree,
    load_trace,
    save_trace,
)

__all__ = [
    "TracelinkError",
    "ElementPath",
    "PathSegment",
    "parse_path",
    "print_path",
    "Metamodel",
    "Model",
    "Element",
    "Violation",
    "parse_metamodel",
    "serialize_metamodel",
    "parse_model",
    "serialize_model",
    "check_conformance",
    "resolve_path",
    "path_of",
    "Megamodel",
    "ResourceEntry",
    "Relation",
    "ResourceKind",
    "ResourceOrigin",
    "discover",
    "register",
    "save_megamodel",
    "load_megamodel",
    "TransformationM2M",
    "parse_m2m",
    "print_m2m",
    "execute_m2m",
    "augment_m2m",
    "strip_m2m",
    "execute_augmented_m2m",
    "Template",
    "AnnotatedOutput",
    "parse_template",
    "print_template",
    "render",
    "augment_template",
    "strip_template",
    "render_augmented",
    "extract_trace",
    "TraceLink",
    "LocalTraceModel",
    "ElementRef",
    "CodeSpan",
    "TraceIdentifierTree",
    "build_identifier_tree",
    "save_trace",
    "load_trace",
    "ProcessModel",
    "ExecutionPlan",
    "EnactmentResult",
    "parse_process",
    "schedule",
    "enact",
    "GlobalTraceMap",
    "build_gtm",
    "change_impact",
    "origin_track",
    "export_dot",
]

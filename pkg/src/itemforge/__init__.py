"""itemforge: an event-sourced, description-driven item kernel.

Every domain object is an Item whose lifecycle, data and links are defined
by versioned descriptions that are themselves Items. All writes flow
through workflow activity execution, so the full history of every item is
an append-only event log from which its state can always be replayed.
"""

from .errors import (
    ErrAccessDenied,
    ErrBadQuery,
    ErrBadRoute,
    ErrConfig,
    ErrConstraint,
    ErrDirectWriteForbidden,
    ErrEmptySlot,
    ErrInvalidTransition,
    ErrMalformedXML,
    ErrNameTaken,
    ErrNoDraft,
    ErrNotFound,
    ErrRange,
    ErrSchemaViolation,
    ErrScriptFailure,
    ErrStorage,
    ErrUnsupportedConstruct,
    ItemforgeError,
)
from .events import Event
from .kernel import Job, Kernel, KernelConfig
from .model import Collection, ItemState, Outcome, Property, Slot, Viewpoint
from .schema import SchemaDoc, ValidationReport, compile_schema, form_model, validate
from .scripting import ScriptContext, ScriptDef, run_script
from .store import Store
from .workflow import WorkflowInstance, parse_workflow, serialize_workflow

__version__ = "0.1.0"

__all__ = [
    "Kernel", "KernelConfig", "Job", "Event", "Store",
    "Collection", "ItemState", "Outcome", "Property", "Slot", "Viewpoint",
    "SchemaDoc", "ValidationReport", "compile_schema", "validate", "form_model",
    "ScriptContext", "ScriptDef", "run_script",
    "WorkflowInstance", "parse_workflow", "serialize_workflow",
    "ItemforgeError", "ErrNotFound", "ErrAccessDenied", "ErrInvalidTransition",
    "ErrSchemaViolation", "ErrConstraint", "ErrScriptFailure", "ErrBadRoute",
    "ErrNoDraft", "ErrNameTaken", "ErrEmptySlot", "ErrMalformedXML",
    "ErrUnsupportedConstruct", "ErrBadQuery", "ErrRange", "ErrStorage",
    "ErrConfig", "ErrDirectWriteForbidden",
]

"""Reading and writing the usage-model document format.

A model file is a UTF-8 JSON document; see ``docs/model-format.md`` for the
annotated schema. Serialization is canonical: fixed key order, every field
written explicitly, floats printed with 17 significant digits.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema

from .core import (
    ConditionalProbabilityTable,
    ConstraintSet,
    CPTRow,
    Diagnostic,
    EquivalenceClass,
    Parameter,
    Requirement,
    UsageModel,
    validate_model,
)
from .errors import ParseError

SCHEMA_VERSION = 1

_STR = {"type": "string", "minLength": 1}
_STR_MAP = {"type": "object", "additionalProperties": _STR}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "parameters", "chain_order", "cpts"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": _STR,
        "temperature": {"type": "number", "exclusiveMinimum": 0},
        "parameters": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "classes"],
                "properties": {
                    "id": _STR,
                    "category": _STR,
                    "classes": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["id"],
                            "properties": {
                                "id": _STR,
                                "description": {"type": "string"},
                                "range": {
                                    "type": "array",
                                    "prefixItems": [{"type": "number"}, {"type": "number"}],
                                    "minItems": 2,
                                    "maxItems": 2,
                                },
                            },
                        },
                    },
                },
            },
        },
        "chain_order": {"type": "array", "items": _STR},
        "cpts": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["param", "given", "rows"],
                "properties": {
                    "param": _STR,
                    "given": {"type": "array", "items": _STR},
                    "rows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["when", "probs"],
                            "properties": {
                                "when": _STR_MAP,
                                "probs": {"type": "object", "additionalProperties": {"type": "number"}},
                            },
                        },
                    },
                },
            },
        },
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["forbid"],
                "properties": {"forbid": {**_STR_MAP, "minProperties": 2}},
            },
        },
        "requirements": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "predicate"],
                "properties": {
                    "id": _STR,
                    "predicate": {
                        "type": "object",
                        "additionalProperties": {"type": "array", "minItems": 1, "items": _STR},
                    },
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(MODEL_SCHEMA)


def _pointer(parts):
    return "/" + "/".join(str(p) for p in parts) if parts else "/"


class _DuplicateKeys(list):
    pass


def _load_json(text, diags):
    dups = _DuplicateKeys()

    def hook(pairs):
        out = {}
        for k, v in pairs:
            if k in out:
                dups.append(k)
            out[k] = v
        return out

    try:
        doc = json.loads(text, object_pairs_hook=hook)
    except json.JSONDecodeError as exc:
        diags.append(Diagnostic("error", "/", "E_SCHEMA", f"not valid JSON: {exc}"))
        return None
    for k in dups:
        diags.append(Diagnostic("error", "/", "E_SCHEMA", f"duplicate object key {k!r}"))
    return doc


def parse_model(text: str | bytes) -> UsageModel:
    """Parse a model document.

    Raises :class:`ParseError` carrying every diagnostic found; never returns
    a partially valid model.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    diags: list[Diagnostic] = []
    doc = _load_json(text, diags)
    if doc is None:
        raise ParseError(diags)
    for e in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        diags.append(Diagnostic("error", _pointer(e.absolute_path), "E_SCHEMA", e.message))
    if diags:
        raise ParseError(diags)

    model = model_from_document(doc)
    report = validate_model(model)
    if report.errors:
        raise ParseError(report.errors)
    return model


def model_from_document(doc: dict) -> UsageModel:
    parameters = tuple(
        Parameter(
            p["id"],
            tuple(
                EquivalenceClass(
                    c["id"],
                    c.get("description"),
                    tuple(float(x) for x in c["range"]) if "range" in c else None,
                )
                for c in p["classes"]
            ),
            p.get("category"),
        )
        for p in doc["parameters"]
    )
    cpts = tuple(
        ConditionalProbabilityTable(
            t["param"],
            tuple(t["given"]),
            tuple(CPTRow(r["when"], r["probs"]) for r in t["rows"]),
        )
        for t in doc["cpts"]
    )
    constraints = ConstraintSet(tuple(c["forbid"] for c in doc.get("constraints", ())))
    requirements = tuple(
        Requirement(r["id"], {k: frozenset(v) for k, v in r["predicate"].items()})
        for r in doc.get("requirements", ())
    )
    return UsageModel(
        name=doc["name"],
        parameters=parameters,
        chain_order=tuple(doc["chain_order"]),
        cpts=cpts,
        constraints=constraints,
        requirements=requirements,
        temperature=float(doc.get("temperature", 1.0)),
    )


def model_to_document(model: UsageModel) -> dict:
    """Canonical document tree; key order here is the published order."""
    class_order = {p.id: p.class_ids for p in model.parameters}
    order_pos = {pid: k for k, pid in enumerate(model.chain_order)}

    def cls_doc(c):
        d = {"id": c.id}
        if c.description is not None:
            d["description"] = c.description
        if c.range is not None:
            d["range"] = [float(c.range[0]), float(c.range[1])]
        return d

    def sort_by_param(mapping):
        return sorted(mapping.items(), key=lambda kv: (order_pos.get(kv[0], len(order_pos)), kv[0]))

    params = []
    for p in model.parameters:
        d = {"id": p.id}
        if p.category is not None:
            d["category"] = p.category
        d["classes"] = [cls_doc(c) for c in p.classes]
        params.append(d)
    cpts = []
    for t in model.cpts:
        cids = class_order.get(t.param, ())
        rows = []
        for r in t.rows:
            probs = {c: r.probs[c] for c in cids if c in r.probs}
            probs.update({c: v for c, v in r.probs.items() if c not in probs})
            rows.append({"when": {g: r.when[g] for g in t.given if g in r.when}, "probs": probs})
        cpts.append({"param": t.param, "given": list(t.given), "rows": rows})
    constraints = [{"forbid": dict(sort_by_param(item))} for item in model.constraints.forbidden]
    requirements = []
    for r in model.requirements:
        pred = {}
        for pid, allowed in sort_by_param(r.predicate):
            cids = class_order.get(pid, ())
            pred[pid] = [c for c in cids if c in allowed] + sorted(a for a in allowed if a not in cids)
        requirements.append({"id": r.id, "predicate": pred})
    return {
        "schema_version": SCHEMA_VERSION,
        "name": model.name,
        "temperature": float(model.temperature),
        "parameters": params,
        "chain_order": list(model.chain_order),
        "cpts": cpts,
        "constraints": constraints,
        "requirements": requirements,
    }


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite number {x!r}")
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps_canonical(obj, indent=2) -> str:
    """JSON text with stable layout and 17-significant-digit floats."""

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {emit(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list, tuple)) for v in o):
                return "[" + ", ".join(emit(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + emit(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format_float(o)
        if isinstance(o, int):
            return str(o)
        return json.dumps(o, ensure_ascii=False)

    return emit(obj, 0) + "\n"


def serialize_model(model: UsageModel) -> str:
    return dumps_canonical(model_to_document(model))


def load_model(path) -> UsageModel:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


REFERENCE_MODELS = ("m_tiny", "four_param", "six_param", "day_brightness", "asymmetric_pair", "symmetric_pair", "frozen")


def reference_model(name: str) -> UsageModel:
    """Load one of the reference models shipped with the package."""
    if name not in REFERENCE_MODELS:
        raise KeyError(f"unknown reference model {name!r}; choose from {REFERENCE_MODELS}")
    text = resources.files("usage_testgen.data").joinpath(f"{name}.usage.json").read_text("utf-8")
    return parse_model(text)


def reference_model_text(name: str) -> str:
    return resources.files("usage_testgen.data").joinpath(f"{name}.usage.json").read_text("utf-8")

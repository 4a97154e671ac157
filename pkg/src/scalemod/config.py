"""Scenario documents: strict JSON schema, loading and canonical dumping."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import SchemaError
from .functions import FunctionHandle, from_doc
from .model import (
    AffineMean,
    CustomFamily,
    CustomMean,
    CustomScale,
    ExponentialFamily,
    LocationFamily,
    ProductScale,
    Scenario,
    SemilinearScale,
    ThetaPrior,
)

SHIPPED = (
    "scen_gaussian_sum",
    "scen_gaussian_product",
    "scen_cauchy_sum",
    "scen_isotropic",
    "scen_affine_mean",
)

# H requires C^2 densities in x; counting distributions are refused outright.
DISCRETE_KINDS = {"poisson", "binomial", "bernoulli", "geometric", "negative_binomial"}

_FN = {
    "type": "object",
    "properties": {
        "form": {"type": "string"},
        "params": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["form", "params"],
    "additionalProperties": False,
}
_INTERVAL = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}


def _obj(props, required=None):
    return {
        "type": "object",
        "properties": props,
        "required": list(props) if required is None else required,
        "additionalProperties": False,
    }


_KIND = {"type": "object", "properties": {"kind": {"type": "string"}}, "required": ["kind"]}

TOP_SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "prior": _obj({"form": {"type": "string"},
                       "params": {"type": "array", "items": {"type": "number"}},
                       "support": _INTERVAL}),
        "family_x": _KIND,
        "family_y": _KIND,
        "mean": _KIND,
        "scale": _KIND,
        "box": _obj({"x_support": _INTERVAL, "y_support": _INTERVAL}),
    },
    required=["prior", "family_x", "family_y", "mean", "scale", "box"],
)

_KIND_CONST = lambda k: {"const": k}  # noqa: E731

FAMILY_SCHEMAS = {
    "exponential_family": _obj({
        "kind": _KIND_CONST("exponential_family"),
        "carrier": _FN,
        "statistic": _FN,
        "natural_param": _FN,
        "log_normalizer": {"oneOf": [_FN, {"const": "numeric"}]},
    }),
    "named_location": _obj({
        "kind": _KIND_CONST("named_location"),
        "family": {"enum": ["gaussian_location", "cauchy_location"]},
        "scale": {"type": "number", "exclusiveMinimum": 0},
    }),
    "custom": _obj({"kind": _KIND_CONST("custom"), "log_density": _FN}),
}

MEAN_SCHEMAS = {
    "affine_in_scale": _obj({
        "kind": _KIND_CONST("affine_in_scale"),
        "c1": _FN, "c2": _FN, "a": _FN, "b": _FN,
    }, required=["kind", "c1", "c2"]),
    "custom": _obj({"kind": _KIND_CONST("custom"), "m": _FN}),
}

SCALE_SCHEMAS = {
    "semilinear": _obj({"kind": _KIND_CONST("semilinear"), "a": _FN, "b": _FN}),
    "product": _obj({"kind": _KIND_CONST("product")}),
    "custom": _obj({"kind": _KIND_CONST("custom"), "f": _FN}),
}


def _validate(doc, schema, prefix=""):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    err = errors[0]
    parts = [prefix] if prefix else []
    parts += [str(p) for p in err.absolute_path]
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        parts.append(extra[0])
        raise SchemaError("unknown key", "/".join(parts))
    raise SchemaError(err.message, "/".join(parts))


def _fn(doc, path, arity=None) -> FunctionHandle:
    try:
        fn = from_doc(doc)
    except SchemaError as exc:
        raise SchemaError(str(exc).split(": ", 1)[-1], path) from None
    if arity is not None and fn.arity != arity:
        raise SchemaError(f"form {fn.registry_id!r} has arity {fn.arity}, expected {arity}", path)
    return fn


def _kinded(doc, schemas, path):
    kind = doc["kind"]
    if path.startswith("family") and kind in DISCRETE_KINDS:
        raise SchemaError(
            f"discrete family {kind!r} rejected: criterion densities must be C^2", f"{path}/kind"
        )
    if kind not in schemas:
        raise SchemaError(f"unknown kind {kind!r}; expected one of {sorted(schemas)}", f"{path}/kind")
    _validate(doc, schemas[kind], path)
    return kind


def _family(doc, path, support):
    kind = _kinded(doc, FAMILY_SCHEMAS, path)
    if kind == "exponential_family":
        ln = doc["log_normalizer"]
        return ExponentialFamily(
            carrier=_fn(doc["carrier"], f"{path}/carrier", 1),
            statistic=_fn(doc["statistic"], f"{path}/statistic", 1),
            natural_param=_fn(doc["natural_param"], f"{path}/natural_param", 1),
            log_normalizer=ln if ln == "numeric" else _fn(ln, f"{path}/log_normalizer", 1),
            support=support,
        )
    if kind == "named_location":
        return LocationFamily(doc["family"], doc["scale"], support)
    return CustomFamily(_fn(doc["log_density"], f"{path}/log_density", 2), support)


def _mean(doc):
    kind = _kinded(doc, MEAN_SCHEMAS, "mean")
    if kind == "affine_in_scale":
        extra = {k: _fn(doc[k], f"mean/{k}", 1) for k in ("a", "b") if k in doc}
        return AffineMean(_fn(doc["c1"], "mean/c1", 1), _fn(doc["c2"], "mean/c2", 1), **extra)
    return CustomMean(_fn(doc["m"], "mean/m", 3))


def _scale(doc):
    kind = _kinded(doc, SCALE_SCHEMAS, "scale")
    if kind == "semilinear":
        return SemilinearScale(_fn(doc["a"], "scale/a", 1), _fn(doc["b"], "scale/b", 1))
    if kind == "product":
        return ProductScale()
    return CustomScale(_fn(doc["f"], "scale/f", 2))


def scenario_from_doc(doc: dict) -> Scenario:
    """Build a Scenario from a parsed document; SchemaError on any violation."""
    _validate(doc, TOP_SCHEMA)
    box = doc["box"]
    xs = tuple(box["x_support"])
    ys = tuple(box["y_support"])
    p = doc["prior"]
    try:
        prior = ThetaPrior(_fn({"form": p["form"], "params": p["params"]}, "prior", 1),
                           tuple(p["support"]))
    except SchemaError as exc:
        raise SchemaError(str(exc).split(": ", 1)[-1], exc.path or "prior") from None
    return Scenario(
        prior=prior,
        family_x=_family(doc["family_x"], "family_x", xs),
        family_y=_family(doc["family_y"], "family_y", ys),
        mean=_mean(doc["mean"]),
        scale=_scale(doc["scale"]),
        x_support=xs,
        y_support=ys,
        name=doc.get("name", ""),
        description=doc.get("description", ""),
    )


def _family_doc(fam) -> dict:
    if isinstance(fam, ExponentialFamily):
        ln = fam.log_normalizer
        return {
            "kind": fam.kind,
            "carrier": fam.carrier.to_doc(),
            "statistic": fam.statistic.to_doc(),
            "natural_param": fam.natural_param.to_doc(),
            "log_normalizer": ln if isinstance(ln, str) else ln.to_doc(),
        }
    if isinstance(fam, LocationFamily):
        return {"kind": fam.kind, "family": fam.family, "scale": fam.scale}
    return {"kind": fam.kind, "log_density": fam.log_density_fn.to_doc()}


def scenario_to_doc(scn: Scenario) -> dict:
    """Canonical document for a scenario (inverse of ``scenario_from_doc``)."""
    doc = {}
    if scn.name:
        doc["name"] = scn.name
    if scn.description:
        doc["description"] = scn.description
    doc["prior"] = {**scn.prior.density.to_doc(), "support": list(scn.prior.support)}
    doc["family_x"] = _family_doc(scn.family_x)
    doc["family_y"] = _family_doc(scn.family_y)
    mean = scn.mean
    if isinstance(mean, AffineMean):
        doc["mean"] = {"kind": mean.kind, "c1": mean.c1.to_doc(), "c2": mean.c2.to_doc(),
                       "a": mean.a.to_doc(), "b": mean.b.to_doc()}
    else:
        doc["mean"] = {"kind": mean.kind, "m": mean.fn.to_doc()}
    scale = scn.scale
    if isinstance(scale, SemilinearScale):
        doc["scale"] = {"kind": scale.kind, "a": scale.a.to_doc(), "b": scale.b.to_doc()}
    elif isinstance(scale, ProductScale):
        doc["scale"] = {"kind": scale.kind}
    else:
        doc["scale"] = {"kind": scale.kind, "f": scale.fn.to_doc()}
    doc["box"] = {"x_support": list(scn.x_support), "y_support": list(scn.y_support)}
    return doc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read scenario file {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return scenario_from_doc(doc)


def dump_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_doc(scn), indent=2) + "\n", encoding="utf-8")


def shipped_path(name: str) -> Path:
    """Filesystem path of a shipped scenario, e.g. ``shipped_path("scen_isotropic")``."""
    stem = name[:-5] if name.endswith(".json") else name
    if stem not in SHIPPED:
        raise KeyError(f"no shipped scenario {name!r}; known: {SHIPPED}")
    return Path(str(resources.files("scalemod") / "scenarios" / f"{stem}.json"))


def load_shipped(name: str) -> Scenario:
    return load_scenario(shipped_path(name))

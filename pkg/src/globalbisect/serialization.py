"""JSON encoding of words, scenes and results.

Floats are written with Python's shortest round-trip ``repr``, so a word
survives ``dump -> load`` bit for bit.  Schema and value errors carry the
line of the offending entry in the source text.
"""
from __future__ import annotations

import json
import os
import re
import tempfile
from json.decoder import scanstring

import jsonschema
import numpy as np

from .errors import BisectionError, SceneError
from .exponential import section_from_dict
from .geometry.manifold import Manifold
from .geometry.regions import Region, region_from_dict
from .groupoid import BisectionWord, Element, Generator, Groupoid

WORD_FORMAT = "globalbisect-word/1"
RESULT_FORMAT = "globalbisect-result/1"

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

MANIFOLD_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["box", "torus", "euclidean"]},
        "bounds": {"type": "array", "items": {"type": "array", "items": _num,
                                              "minItems": 2, "maxItems": 2}, "minItems": 1},
        "periods": _vec,
        "origin": _vec,
        "dim": {"type": "integer", "minimum": 1},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "box"}}}, "then": {"required": ["bounds"]}},
        {"if": {"properties": {"kind": {"const": "torus"}}}, "then": {"required": ["periods"]}},
        {"if": {"properties": {"kind": {"const": "euclidean"}}}, "then": {"required": ["dim"]}},
    ],
    "additionalProperties": False,
}

GROUPOID_SCHEMA = {
    "type": "object",
    "required": ["family", "manifold"],
    "properties": {
        "family": {"enum": ["pair", "frame", "action"]},
        "manifold": MANIFOLD_SCHEMA,
        "rank": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}

WORD_SCHEMA = {
    "type": "object",
    "required": ["format", "groupoid", "generators"],
    "properties": {
        "format": {"const": WORD_FORMAT},
        "groupoid": GROUPOID_SCHEMA,
        "generators": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type", "parameters", "t", "sign"],
                "properties": {
                    "type": {"enum": ["tube", "gauge", "action-bump", "bump", "constant", "section"]},
                    "parameters": {"type": "object"},
                    "t": {"type": "number", "minimum": 0},
                    "sign": {"enum": [1, -1]},
                },
                "additionalProperties": False,
            },
        },
        "meta": {"type": "object"},
    },
    "additionalProperties": False,
}

REGION_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["manifold", "ball", "box"]},
        "center": _vec,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "lo": _vec,
        "hi": _vec,
        "exclude": {"type": "array", "items": _vec},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "ball"}}, "required": ["kind"]},
         "then": {"required": ["center", "radius"]}},
        {"if": {"properties": {"kind": {"const": "box"}}, "required": ["kind"]},
         "then": {"required": ["lo", "hi"]}},
    ],
    "additionalProperties": False,
}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["manifold", "family", "elements"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "manifold": MANIFOLD_SCHEMA,
        "family": {"enum": ["pair", "frame", "action"]},
        "rank": {"type": "integer", "minimum": 1},
        "elements": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["x"],
                "properties": {"x": _vec, "y": _vec, "A": _mat, "g": _vec},
                "additionalProperties": False,
            },
        },
        "region": REGION_SCHEMA,
        "options": {
            "type": "object",
            "properties": {
                "tube_rho": {"type": "number", "exclusiveMinimum": 0},
                "gauge_r": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "tol_base": {"type": "number", "exclusiveMinimum": 0},
                "tol_fiber": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "orthogonal": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "allOf": [
        {"if": {"properties": {"family": {"const": "frame"}}}, "then": {"required": ["rank"]}},
    ],
    "additionalProperties": False,
}


# ----------------------------------------------------------- JSON plumbing

def _plain(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text (key order as built, repr floats, trailing newline)."""
    return json.dumps(obj, indent=1, default=_plain, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_WS = re.compile(r"[ \t\n\r]*")
_decoder = json.JSONDecoder()


def _skip(text, i):
    return _WS.match(text, i).end()


def locate(text: str, path) -> int:
    """1-based line of the JSON value at ``path`` (keys and list indices) in ``text``.

    Falls back to the deepest enclosing value that exists.
    """
    i = _skip(text, 0)
    try:
        for key in path:
            if text[i] == "{":
                i = _skip(text, i + 1)
                found = False
                while text[i] != "}":
                    k, i = scanstring(text, i + 1)
                    i = _skip(text, i)
                    i = _skip(text, i + 1)          # past ':'
                    if k == key:
                        found = True
                        break
                    _, i = _decoder.raw_decode(text, i)
                    i = _skip(text, i)
                    if text[i] == ",":
                        i = _skip(text, i + 1)
                if not found:
                    break
            elif text[i] == "[" and isinstance(key, int):
                i = _skip(text, i + 1)
                for _ in range(key):
                    _, i = _decoder.raw_decode(text, i)
                    i = _skip(text, i)
                    if text[i] != ",":
                        break
                    i = _skip(text, i + 1)
            else:
                break
    except (IndexError, ValueError):
        pass
    return text.count("\n", 0, i) + 1


def load_json(path, schema) -> tuple[dict, str]:
    """Read and schema-check a JSON file; errors become line-anchored :class:`SceneError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SceneError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from exc
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[-1]
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise SceneError(f"{where}: {err.message}", locate(text, list(err.absolute_path)))
    return data, text


# ------------------------------------------------------------------ words

def generator_to_dict(gen: Generator) -> dict:
    d = gen.section.to_dict()
    return {"type": d["type"], "parameters": d["parameters"], "t": gen.t, "sign": gen.sign}


def word_to_dict(word: BisectionWord) -> dict:
    return {
        "format": WORD_FORMAT,
        "groupoid": word.groupoid.to_dict(),
        "generators": [generator_to_dict(g) for g in word.generators],
        "meta": word.meta,
    }


def word_from_dict(d: dict, text: str | None = None) -> BisectionWord:
    try:
        G = Groupoid.from_dict(d["groupoid"])
    except (BisectionError, KeyError, TypeError, ValueError) as exc:
        raise SceneError(f"groupoid: {exc}", _line(text, ["groupoid"])) from exc
    gens = []
    for i, g in enumerate(d["generators"]):
        try:
            gens.append(Generator(section_from_dict(g, G), float(g["t"]), int(g["sign"])))
        except (BisectionError, KeyError, TypeError, ValueError) as exc:
            raise SceneError(f"generators/{i}: {exc}", _line(text, ["generators", i])) from exc
    return BisectionWord(G, tuple(gens), dict(d.get("meta", {})))


def word_dumps(word: BisectionWord) -> str:
    return dumps(word_to_dict(word))


def word_loads(text: str) -> BisectionWord:
    data = json.loads(text)
    jsonschema.validate(data, WORD_SCHEMA)
    return word_from_dict(data, text)


def load_word(path) -> BisectionWord:
    data, text = load_json(path, WORD_SCHEMA)
    return word_from_dict(data, text)


def _line(text, path):
    return None if text is None else locate(text, path)


# ----------------------------------------------------------------- scenes

class Scene:
    """A parsed scene: groupoid, elements, region and construction options."""

    def __init__(self, groupoid: Groupoid, elements: list[Element], region: Region, options: dict,
                 name: str = ""):
        self.groupoid = groupoid
        self.elements = elements
        self.region = region
        self.options = options
        self.name = name


def scene_from_dict(d: dict, text: str | None = None) -> Scene:
    try:
        M = Manifold.from_dict(d["manifold"])
    except (BisectionError, TypeError, ValueError) as exc:
        raise SceneError(f"manifold: {exc}", _line(text, ["manifold"])) from exc
    family = d["family"]
    try:
        G = Groupoid(family, M, int(d.get("rank", 0)))
    except BisectionError as exc:
        raise SceneError(str(exc), _line(text, ["family"])) from exc
    elements = []
    for i, e in enumerate(d["elements"]):
        where = ["elements", i]
        try:
            for key in ("x", "y", "g"):
                if key in e and len(e[key]) != M.dim:
                    raise SceneError(f"{key} must have {M.dim} coordinates", _line(text, where + [key]))
            for key in ("x", "y"):
                if key in e and not M.contains(np.asarray(e[key], float))[0]:
                    raise SceneError(f"{key} lies outside the manifold", _line(text, where + [key]))
            if family == "action":
                if "g" not in e and "y" not in e:
                    raise SceneError("action elements need g (or y)", _line(text, where))
                el = G.element(e["x"], e.get("y"), g=e.get("g"))
            else:
                if "y" not in e:
                    raise SceneError("element needs a target y", _line(text, where))
                if family == "frame":
                    A = e.get("A", np.eye(G.rank).tolist())
                    if np.shape(A) != (G.rank, G.rank):
                        raise SceneError(f"A must be {G.rank}x{G.rank}", _line(text, where + ["A"]))
                    el = G.element(e["x"], e["y"], A)
                else:
                    el = G.element(e["x"], e["y"])
        except SceneError:
            raise
        except (BisectionError, TypeError, ValueError) as exc:
            raise SceneError(f"elements/{i}: {exc}", _line(text, where)) from exc
        elements.append(el)
    try:
        region = region_from_dict(d.get("region", {"kind": "manifold"}), M)
    except (BisectionError, TypeError, ValueError) as exc:
        raise SceneError(f"region: {exc}", _line(text, ["region"])) from exc
    return Scene(G, elements, region, dict(d.get("options", {})), d.get("name", ""))


def load_scene(path) -> Scene:
    data, text = load_json(path, SCENE_SCHEMA)
    return scene_from_dict(data, text)

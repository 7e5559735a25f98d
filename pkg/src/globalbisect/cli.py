"""Command line front end: ``globalbisect construct|verify|grid``.

Exit codes: 0 success, 1 malformed input, 2 no bisection exists through the
requested elements (not concordant), 3 construction failed (planning, tube
radius, gauge fit, sampling), 4 residual or verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys

import numpy as np

from .errors import (BisectionError, ConstructionError, DegenerateSpacingError, DimensionError,
                     GaugeFitError, NotConcordantError, OrientationError, PathPlanningError,
                     SamplingError, SceneError, TubeRadiusError)
from .geometry.fields import DEFAULT_STEP
from .geometry.regions import Whole
from .groupoid import Element, element_error, evaluate, verify_bisection
from .multipoint import bisection_through_points
from .serialization import (RESULT_FORMAT, dumps, load_scene, load_word, word_to_dict,
                            write_atomic)

EXIT_OK = 0
EXIT_SCHEMA = 1
EXIT_NOT_CONCORDANT = 2
EXIT_PLANNING = 3
EXIT_RESIDUAL = 4

DEFAULT_SAMPLES = 200


def _settings(args, scene=None) -> dict:
    opts = dict(scene.options) if scene is not None else {}
    if getattr(args, "step", None) is not None:
        opts["h"] = args.step
    if getattr(args, "tol_base", None) is not None:
        opts["tol_base"] = args.tol_base
    if getattr(args, "tol_fiber", None) is not None:
        opts["tol_fiber"] = args.tol_fiber
    if getattr(args, "seed", None) is not None:
        opts["seed"] = args.seed
    if getattr(args, "samples", None) is not None:
        opts["samples"] = args.samples
    opts.setdefault("h", DEFAULT_STEP)
    opts.setdefault("tol_base", 1e-6)
    opts.setdefault("tol_fiber", 1e-8)
    opts.setdefault("seed", 0)
    opts.setdefault("samples", DEFAULT_SAMPLES)
    return opts


def residuals(word, elements, h) -> list[dict]:
    X = np.array([e.x for e in elements])
    Y, A, G = evaluate(word, X, h)
    out = []
    for i, e in enumerate(elements):
        got = Element(word.groupoid, X[i], Y[i], None if A is None else A[i],
                      None if G is None else G[i])
        base, fiber = element_error(got, e)
        out.append({"index": i, "base": base, "fiber": fiber})
    return out


def recorded_elements(word) -> list[Element]:
    """The elements a constructed word was built through, as stored in its metadata."""
    G = word.groupoid
    return [G.element(e["x"], e.get("y"), e.get("A"), e.get("g"))
            for e in word.meta.get("through", [])]


def residuals_ok(res, family, tol_base, tol_fiber) -> bool:
    tol_f = tol_fiber if family == "frame" else tol_base
    return all(r["base"] <= tol_base and r["fiber"] <= tol_f for r in res)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_construct(args) -> int:
    try:
        scene = load_scene(args.scene)
    except SceneError as exc:
        return _fail(EXIT_SCHEMA, f"{args.scene}: {exc}")
    opts = _settings(args, scene)
    build = {k: opts[k] for k in ("tube_rho", "gauge_r", "delta", "orthogonal") if k in opts}
    try:
        word = bisection_through_points(scene.elements, scene.region, seed=opts["seed"],
                                        tol_base=opts["tol_base"], tol_fiber=opts["tol_fiber"],
                                        h=opts["h"], check=False, **build)
    except (NotConcordantError, OrientationError) as exc:
        return _fail(EXIT_NOT_CONCORDANT, str(exc))
    except (PathPlanningError, TubeRadiusError, GaugeFitError, SamplingError, DimensionError,
            DegenerateSpacingError) as exc:
        return _fail(EXIT_PLANNING, str(exc))
    except ConstructionError as exc:
        return _fail(EXIT_RESIDUAL, str(exc))
    except BisectionError as exc:
        return _fail(EXIT_SCHEMA, str(exc))
    res = residuals(word, scene.elements, opts["h"])
    report = verify_bisection(word, scene.region, opts["samples"], opts["seed"], opts["h"])
    ok = residuals_ok(res, scene.groupoid.family, opts["tol_base"], opts["tol_fiber"])
    meta = word.meta
    result = {
        "format": RESULT_FORMAT,
        "scene": scene.name,
        "ok": ok,
        "word": word_to_dict(word),
        "report": report.to_dict(),
        "chains": meta.get("chains", []),
        "ordering": [o["ordering"] for o in meta.get("orderings", [])],
        "residuals": res,
        "settings": opts,
    }
    write_atomic(args.out, dumps(result))
    worst = max(max(r["base"], r["fiber"]) for r in res)
    print(f"wrote {args.out}: {len(word)} generators, worst residual {worst:.3g}, "
          f"{'ok' if ok else 'RESIDUALS EXCEED TOLERANCE'}")
    return EXIT_OK if ok else EXIT_RESIDUAL


def _load_word_arg(path):
    """Accept a bare word file or a construct result that embeds one."""
    with open(path, encoding="utf-8") as fh:
        head = fh.read()
    try:
        data = json.loads(head)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, dict) and data.get("format") == RESULT_FORMAT and "word" in data:
        from .serialization import word_from_dict
        return word_from_dict(data["word"])
    return load_word(path)


def cmd_verify(args) -> int:
    try:
        word = _load_word_arg(args.word)
        scene = load_scene(args.scene) if args.scene else None
    except (SceneError, OSError) as exc:
        return _fail(EXIT_SCHEMA, str(exc))
    except (BisectionError, KeyError, TypeError, ValueError) as exc:
        return _fail(EXIT_SCHEMA, f"{args.word}: malformed word ({exc})")
    opts = _settings(args, scene)
    if scene is not None and scene.groupoid != word.groupoid:
        return _fail(EXIT_SCHEMA, "word and scene belong to different groupoids")
    U = scene.region if scene is not None else Whole(word.groupoid.manifold)
    report = verify_bisection(word, U, opts["samples"], opts["seed"], opts["h"])
    out = {"report": report.to_dict()}
    ok = report.passed(tol_roundtrip=opts["tol_base"], tol_fiber=opts["tol_fiber"])
    anchors = scene.elements if scene is not None else recorded_elements(word)
    if anchors:
        res = residuals(word, anchors, opts["h"])
        out["residuals"] = res
        ok = ok and residuals_ok(res, word.family, opts["tol_base"], opts["tol_fiber"])
    out["ok"] = ok
    text = dumps(out)
    if args.out:
        write_atomic(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_RESIDUAL


def _grid_window(word, scene):
    M = word.groupoid.manifold
    if scene is not None:
        lo, hi = scene.region.bbox
        if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
            return lo, hi
    if M.bounded:
        return M.lo_array, M.hi_array
    boxes = [r.bbox for r in word.supports()]
    if boxes:
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        pad = 0.1 * (hi - lo)
        return lo - pad, hi + pad
    return -np.ones(M.dim), np.ones(M.dim)


def cmd_grid(args) -> int:
    try:
        word = _load_word_arg(args.word)
        scene = load_scene(args.scene) if args.scene else None
    except (SceneError, OSError) as exc:
        return _fail(EXIT_SCHEMA, str(exc))
    except (BisectionError, KeyError, TypeError, ValueError) as exc:
        return _fail(EXIT_SCHEMA, f"{args.word}: malformed word ({exc})")
    if args.resolution < 1:
        return _fail(EXIT_SCHEMA, "resolution must be at least 1")
    M = word.groupoid.manifold
    lo, hi = _grid_window(word, scene)
    R = args.resolution
    axes = [np.linspace(a, b, R, endpoint=not M.is_torus) if R > 1 else np.array([0.5 * (a + b)])
            for a, b in zip(lo, hi)]
    X = np.array([[axes[k][i] for k, i in enumerate(idx)]
                  for idx in itertools.product(range(R), repeat=M.dim)])
    h = args.step if args.step is not None else DEFAULT_STEP
    Y, A, G = evaluate(word, X, h)
    d = M.dim
    header = [f"x{i + 1}" for i in range(d)] + [f"y{i + 1}" for i in range(d)]
    cols = [X, Y]
    if A is not None:
        k = A.shape[1]
        header += [f"A{i + 1}{j + 1}" for i in range(k) for j in range(k)]
        cols.append(A.reshape(len(X), -1))
    if G is not None:
        header += [f"g{i + 1}" for i in range(d)]
        cols.append(G)
    table = np.hstack(cols)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in table:
        writer.writerow([repr(float(v)) for v in row])
    write_atomic(args.out, buf.getvalue())
    print(f"wrote {args.out}: {len(X)} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="globalbisect",
                                description="Construct and check finitely generated bisections.")
    sub = p.add_subparsers(dest="command", required=True)

    def numerics(sp):
        sp.add_argument("--step", type=float, default=None, help="RK4 step (default 1e-3)")
        sp.add_argument("--tol-base", type=float, default=None, help="base tolerance (default 1e-6)")
        sp.add_argument("--tol-fiber", type=float, default=None, help="fiber tolerance (default 1e-8)")

    c = sub.add_parser("construct", help="build a bisection through the scene's elements")
    c.add_argument("scene_pos", nargs="?", metavar="SCENE", help="scene file (or use --scene)")
    c.add_argument("--scene", default=None)
    c.add_argument("--out", required=True, help="result JSON path")
    c.add_argument("--samples", type=int, default=None, help="verification samples")
    c.add_argument("--seed", type=int, default=None)
    numerics(c)
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="re-check a serialised word")
    v.add_argument("word", help="word JSON, or a construct result")
    v.add_argument("--scene", default=None, help="scene giving U and the elements to hit")
    v.add_argument("--samples", type=int, default=None)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", default=None, help="also write the report here")
    numerics(v)
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("grid", help="push a lattice through the target map (CSV)")
    g.add_argument("word", help="word JSON, or a construct result")
    g.add_argument("--resolution", type=int, default=21, help="lattice points per axis")
    g.add_argument("--out", required=True)
    g.add_argument("--scene", default=None, help="take the lattice window from the scene region")
    g.add_argument("--step", type=float, default=None)
    g.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "construct":
        args.scene = args.scene or args.scene_pos
        if not args.scene:
            parser.error("construct needs a scene file")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

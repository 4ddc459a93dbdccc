"""``polyiso`` command line: validate, dist, embed, prolimit, export.

Exit codes: 0 success, 1 contract failure, 2 input error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import io
from .complex import ComplexError, MetricComplex, validate_complex
from .corrugation import CorrugationError, StretchConfig, embed_polyhedron
from .maps import MapError, shortness_certificate
from .metric import geodesic_graph

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
# lengths are matched up to eta on a measured pair sample, not exactly
ISOMETRY_MODEL = "eta-approximate"


class InputError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("POLYISO_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"POLYISO_SEED must be an integer, got {raw!r}") from None


def _positive(name):
    def conv(s):
        try:
            v = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not (math.isfinite(v) and v > 0):
            raise argparse.ArgumentTypeError(f"{name} must be positive and finite")
        return v
    return conv


def _nonneg_int(name):
    def conv(s):
        try:
            v = int(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if v < 0:
            raise argparse.ArgumentTypeError(f"{name} must be >= 0")
        return v
    return conv


def _load_valid_complex(path) -> MetricComplex:
    c = io.load_complex(path)
    rep = validate_complex(c)
    if not rep.ok:
        raise InputError(f"{path}: invalid complex: " + "; ".join(rep.violations))
    return c


def _echo(argv):
    return ["polyiso", *argv]


def _with_timing(report, args, t0):
    if getattr(args, "timing", False):
        report["wall_time_s"] = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    worst = EXIT_OK
    for path in args.paths:
        try:
            doc = io.read_json(path)
        except (OSError, io.FormatError) as exc:
            print(f"{path}: ERROR {exc}")
            worst = EXIT_INPUT
            continue
        try:
            problems = _validate_doc(path, doc)
        except (io.FormatError, ComplexError, MapError) as exc:
            print(f"{path}: ERROR {exc}")
            worst = EXIT_INPUT
            continue
        if problems:
            print(f"{path}: INVALID")
            for p in problems:
                print(f"  - {p}")
            worst = max(worst, EXIT_FAIL)
        else:
            print(f"{path}: OK")
    return worst


def _validate_doc(path, doc) -> list[str]:
    from .prolimit import validate_system

    if isinstance(doc, dict) and "stages" in doc:
        s = io.load_system(path)
        return list(validate_system(s).violations)
    if isinstance(doc, dict) and "vertex_images" in doc:
        f = io.load_map(path)
        out = [f"domain: {v}" for v in validate_complex(f.domain).violations]
        if f.codomain is not None:
            out += [f"codomain: {v}" for v in validate_complex(f.codomain).violations]
        if not out and f.is_ambient:
            cert = shortness_certificate(f)
            if not cert.short:
                out.append(f"map not short: max stretch {cert.max_stretch!r}")
        return out
    c = io.complex_from_dict(doc, str(path))
    return list(validate_complex(c).violations)


def cmd_dist(args) -> int:
    c = _load_valid_complex(args.complex)
    pairs = io.load_pairs(args.pairs, c)
    g = geodesic_graph(c, args.level)
    lines = ["x,y,value,level"]
    for x, y in pairs:
        v = 0.0 if x == y else float(g.point_distances([x], [y])[0, 0])
        val = "inf" if math.isinf(v) else repr(v)
        lines.append(f"{io.point_label(x)},{io.point_label(y)},{val},{args.level}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_embed(args, argv) -> int:
    t0 = time.perf_counter()
    c = _load_valid_complex(args.complex)
    f0 = io.load_map(args.init, domain=c)
    cfg = StretchConfig(eta=args.eta, epsilon=args.epsilon, seed=args.seed, max_rounds=args.max_rounds)
    res = embed_polyhedron(c, f0, cfg)
    io.save_map(res.map, args.out, domain_ref=args.complex)
    report = {
        "command": _echo(argv),
        "inputs": {"complex": io.file_digest(args.complex), "init": io.file_digest(args.init)},
        "seed": args.seed,
        "epsilon": args.epsilon,
        "eta": args.eta,
        "isometry": ISOMETRY_MODEL,
        "success": res.success,
        "message": res.message,
        "final": res.report.to_dict(),
        "rounds": res.history,
    }
    if args.report:
        io.write_json(args.report, _with_timing(report, args, t0), indent=1)
    if not res.success:
        print(f"embed failed at stage 0: {res.message}", file=sys.stderr)
        return EXIT_FAIL
    print(f"length defect {res.report.length_defect!r}, displacement {res.report.displacement!r}")
    return EXIT_OK


def cmd_prolimit(args, argv) -> int:
    from .prolimit import DeltaError, SeparationExhausted, StageFailure, run_limit_embedding, validate_system

    t0 = time.perf_counter()
    s = io.load_system(args.system)
    rep = validate_system(s, seed=args.seed)
    if not rep.ok:
        raise InputError(f"{args.system}: invalid system: " + "; ".join(rep.violations))
    f0 = io.load_map(args.init, domain=s.stages[0])
    cfg = StretchConfig(eta=args.eta, epsilon=args.eps0, seed=args.seed, max_rounds=args.max_rounds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "command": _echo(argv),
        "inputs": {"system": io.file_digest(args.system), "init": io.file_digest(args.init)},
        "seed": args.seed,
        "eps0": args.eps0,
        "eta": args.eta,
        "isometry": ISOMETRY_MODEL,
        "delta_policy": "deferred until the separation stage is embedded",
    }
    try:
        run = run_limit_embedding(s, f0, args.eps0, cfg, samples=args.samples, level=args.level)
    except (StageFailure, SeparationExhausted, DeltaError) as exc:
        report.update({"ok": False, "error": str(exc), "stage": getattr(exc, "stage", None)})
        io.write_json(out / "report.json", _with_timing(report, args, t0), indent=1)
        print(f"prolimit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    stage_refs = _stage_paths(args.system)
    for i, f in enumerate(run.maps):
        io.save_map(f, out / f"f_{i}.json", domain_ref=stage_refs[i])
    io.write_json(out / "schedule.json", run.schedule.to_dict(), indent=1)
    report.update(run.report)
    report.pop("schedule", None)
    io.write_json(out / "report.json", _with_timing(report, args, t0), indent=1)
    failed = [c for c in run.report["checks"] if not c["ok"]]
    for c in failed:
        print(f"check {c['check']} failed: {c}", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAIL


def _stage_paths(system_path):
    doc = io.read_json(system_path)
    base = Path(system_path).parent
    return [base / ref if isinstance(ref, str) else None for ref in doc["stages"]]


def cmd_export(args) -> int:
    f = io.load_map(args.map)
    fmt = args.format
    if fmt == "off":
        text = io.to_off(f)
    elif fmt == "csv":
        text = io.to_csv(f)
    else:
        text = io.dumps(io.map_to_dict(f))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser(seed: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyiso", description="Intrinsic isometric embeddings of Euclidean polyhedra.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check complexes, maps and systems")
    v.add_argument("paths", nargs="+", help="JSON files; the kind is detected from the keys")

    d = sub.add_parser("dist", help="intrinsic distance upper bounds as CSV")
    d.add_argument("--complex", required=True, help="complex JSON")
    d.add_argument("--pairs", required=True, help="JSON list of point pairs")
    d.add_argument("--level", type=_nonneg_int("level"), default=2, help="subdivision level of the chord graph")
    d.add_argument("--out", help="CSV path (default stdout)")

    e = sub.add_parser("embed", help="approximate isometric embedding near a short map")
    e.add_argument("--complex", required=True, help="domain complex JSON")
    e.add_argument("--init", required=True, help="short initial map JSON")
    e.add_argument("--epsilon", type=_positive("epsilon"), required=True, help="displacement budget")
    e.add_argument("--eta", type=_positive("eta"), required=True, help="target length defect")
    e.add_argument("--seed", type=int, default=seed, help="RNG seed (default $POLYISO_SEED or 0)")
    e.add_argument("--max-rounds", type=_nonneg_int("max-rounds"), default=12, help="stretching rounds")
    e.add_argument("--out", required=True, help="output map JSON")
    e.add_argument("--report", help="report JSON")
    e.add_argument("--timing", action="store_true", help="include wall time in the report")

    pl = sub.add_parser("prolimit", help="staged embedding of an inverse system")
    pl.add_argument("--system", required=True, help="inverse system JSON")
    pl.add_argument("--init", required=True, help="short map of stage 0")
    pl.add_argument("--eps0", type=_positive("eps0"), required=True, help="initial displacement budget")
    pl.add_argument("--eta", type=_positive("eta"), required=True, help="per-stage length defect")
    pl.add_argument("--seed", type=int, default=seed, help="RNG seed (default $POLYISO_SEED or 0)")
    pl.add_argument("--max-rounds", type=_nonneg_int("max-rounds"), default=12, help="stretching rounds per stage")
    pl.add_argument("--samples", type=_nonneg_int("samples"), default=8, help="random points per separation test")
    pl.add_argument("--level", type=_nonneg_int("level"), default=3, help="chord graph level for distances")
    pl.add_argument("--out-dir", required=True, help="directory for f_i.json, schedule and report")
    pl.add_argument("--timing", action="store_true", help="include wall time in the report")

    x = sub.add_parser("export", help="write a map as OFF, JSON or CSV")
    x.add_argument("--map", required=True, help="map JSON")
    x.add_argument("--format", choices=("off", "json", "csv"), default="json")
    x.add_argument("--out", help="output path (default stdout)")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        seed = _default_seed()
    except InputError as exc:
        print(f"polyiso: {exc}", file=sys.stderr)
        return EXIT_INPUT
    parser = build_parser(seed)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "dist":
            return cmd_dist(args)
        if args.command == "embed":
            return cmd_embed(args, argv)
        if args.command == "prolimit":
            return cmd_prolimit(args, argv)
        return cmd_export(args)
    except (InputError, io.FormatError, ComplexError, MapError, CorrugationError, OSError) as exc:
        print(f"polyiso {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

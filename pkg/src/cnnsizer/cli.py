"""Command-line entry points.

Every command writes a report file and prints a short summary; exit codes are
0 success, 2 input/format error, 3 state error, 4 internal error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

from .dataio import (builtin_model_spec, read_annotations, read_embeddings,
                     read_grouping, read_model_spec, write_report)
from .errors import CnnsizerError
from .flops import at_resolution, format_kflops, model_flops
from .scale import scale_stats
from .session import Session
from .similarity import similarity_report


def _write(report, out: Optional[str], default: str, fmt: str = "structured") -> str:
    path = out or default
    write_report(report, path, fmt=fmt)
    return path


def _load_model(ref: str):
    if os.path.exists(ref):
        return read_model_spec(ref)
    return builtin_model_spec(ref)


def cmd_similarity(args) -> int:
    emb = read_embeddings(args.embeddings)
    grouping = read_grouping(args.grouping) if args.grouping else None
    report = similarity_report(emb, grouping)
    path = _write(report, args.out, os.path.splitext(args.embeddings)[0] + ".report.json",
                  fmt=args.format)
    delta = "undefined" if report.delta_s2 is None else f"{report.delta_s2:.6f}"
    print(f"classes={len(report.classes)} s2_max={report.s2_max:.6f} "
          f"pair=({report.argmax_pair[0]},{report.argmax_pair[1]}) delta_s2={delta}")
    print(f"report written to {path}")
    return 0


def cmd_analyze_scale(args) -> int:
    ingest = read_annotations(args.annotations)
    if ingest.rejects:
        print(f"{len(ingest.rejects)} annotation(s) rejected:", file=sys.stderr)
        for r in ingest.rejects:
            print(f"  {r.instance_id}: {r.reason}", file=sys.stderr)
    grouping = read_grouping(args.grouping) if args.grouping else None
    stats = scale_stats(ingest.annotations, grouping=grouping,
                        resolution_override=args.resolution, bins=args.bins)
    payload = stats.to_dict()
    payload["rejects"] = [r.to_dict() for r in ingest.rejects]
    path = _write(payload, args.out, os.path.splitext(args.annotations)[0] + ".scale.json")
    o = stats.overall
    print(f"instances={o.count} scale min/median/max="
          f"{o.min_scale:.4f}/{o.median_scale:.4f}/{o.max_scale:.4f} b_max={o.b_max}px")
    print(f"report written to {path}")
    return 0


def cmd_estimate_flops(args) -> int:
    model = _load_model(args.model)
    if args.resolution:
        model = at_resolution(model, args.resolution)
    report = model_flops(model, args.mode)
    path = _write(report, args.out, f"{model.name}.flops.json")
    name, layer1 = report.per_layer[0]
    print(f"{model.name} {args.mode} @ {model.input_w}x{model.input_h}")
    print(f"layer-1 {name}: {format_kflops(layer1)} kFLOPS")
    print(f"total: {format_kflops(report.total)} kFLOPS "
          f"(gray/color ratio {report.gray_to_color_ratio * 100:.1f}%)")
    print(f"report written to {path}")
    return 0


def cmd_select_classes(args) -> int:
    session = Session.open(args.config)
    grouping = read_grouping(args.grouping)
    report, entry = session.evaluate_grouping(grouping, note=args.note or "")
    path = _write(report, args.out, f"{grouping.name}.report.json")
    delta = "undefined" if report.delta_s2 is None else f"{report.delta_s2:.6f}"
    marker = " (best so far)" if entry.is_best_so_far else ""
    print(f"grouping {grouping.name!r}: delta_s2={delta}{marker}")
    stop = session.config.thresholds.stop_delta
    if stop is not None and report.delta_s2 is not None and report.delta_s2 <= stop:
        print(f"delta_s2 at or below stop threshold {stop}; good point to exit")
    print(f"report written to {path}")
    return 0


def cmd_select_color(args) -> int:
    session = Session.open(args.config)
    decision = session.select_color(per_class=args.per_class)
    path = _write(decision, args.out, "color-decision.json")
    if args.per_class:
        gray = sorted(c for c, m in decision.modes.items() if m == "gray")
        print(f"per-class map: {len(gray)} class(es) go grayscale "
              f"({', '.join(gray) or 'none'}); no computation reduction by itself")
    else:
        print(f"mode={decision.mode} s2_max color={decision.s2_max_color:.6f} "
              f"gray={decision.s2_max_gray:.6f}")
    print(f"report written to {path}")
    return 0


def cmd_select_resolution(args) -> int:
    session = Session.open(args.config)
    result = session.resolution_ladder(commit=True)
    path = _write(result, args.out, "resolution-ladder.json")
    for rung in result.rungs:
        delta = "undefined" if rung.delta_s2 is None else f"{rung.delta_s2:.6f}"
        chosen = " <- chosen" if rung.resolution == result.chosen_resolution else ""
        print(f"{rung.resolution:>5}px delta_s2={delta}{chosen}")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"report written to {path}")
    return 0


def cmd_recommend(args) -> int:
    session = Session.open(args.config)
    rec = session.recommendation()
    path = _write(rec, args.out, "recommendation.json")
    cfg = rec.config
    flops = "n/a" if rec.flops_estimate is None else format_kflops(rec.flops_estimate)
    print(f"grouping={cfg.grouping_name} color={cfg.color_mode} "
          f"resolution={cfg.resolution}px")
    print(f"b_max={rec.b_max_at_resolution}px -> min conv layers {rec.min_layers}; "
          f"flops ~{flops} kFLOPS")
    for w in rec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"report written to {path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    session = Session.open(args.config)
    app = create_app(session, static_dir=args.ui)
    host = args.host or session.config.host
    port = args.port or session.config.port
    uvicorn.run(app, host=host, port=port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnnsizer",
        description="Dataset-attribute analysis for sizing lightweight CNNs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("similarity", help="similarity report for one embedding set")
    p.add_argument("--embeddings", required=True, help="embedding manifest path")
    p.add_argument("--grouping", help="grouping file to apply first")
    p.add_argument("--format", choices=("structured", "markdown"), default="structured")
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("analyze-scale", help="object-scale statistics from annotations")
    p.add_argument("--annotations", required=True, help="COCO-style instances file")
    p.add_argument("--grouping", help="grouping file to apply first")
    p.add_argument("--resolution", type=int, help="effective longer-side resolution")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_analyze_scale)

    p = sub.add_parser("estimate-flops", help="conv FLOP accounting for a model spec")
    p.add_argument("--model", required=True,
                   help="model spec path or builtin name (vgg19-32, enb0-32)")
    p.add_argument("--mode", choices=("color", "gray"), default="color")
    p.add_argument("--resolution", type=int, help="override square input size")
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_estimate_flops)

    p = sub.add_parser("select-classes", help="evaluate one class grouping")
    p.add_argument("--config", required=True)
    p.add_argument("--grouping", required=True, help="grouping file to evaluate")
    p.add_argument("--note", help="free-form note for the log entry")
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_select_classes)

    p = sub.add_parser("select-color", help="choose color or grayscale input")
    p.add_argument("--config", required=True)
    p.add_argument("--per-class", action="store_true",
                   help="per-class mode map instead of a global decision")
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_select_color)

    p = sub.add_parser("select-resolution", help="walk the resolution ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_select_resolution)

    p = sub.add_parser("recommend", help="final configuration recommendation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("serve", help="run the HTTP API for the grouping explorer")
    p.add_argument("--config", required=True)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--ui", help="directory of built UI assets to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CnnsizerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - map unexpected failures to exit 4
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())

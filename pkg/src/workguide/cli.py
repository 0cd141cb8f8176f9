"""Operator command line: run | train | eval | anova | gen | serve.

Defaults come from the built-in table in :mod:`workguide.config`; a
JSON config file (--config) overrides them and explicit flags override
both. Exit codes: 0 success (for ``run``: session completed), 1 session
did not complete or analysis failed, 2 bad invocation or missing files.
"""

from __future__ import annotations

import argparse
import glob
import json
import sys
import time
from pathlib import Path

from . import __version__, analysis, asset_path, classifier, config, data, detection
from .runtime import load_session_components, run_session


def _fail(message: str, code: int = 2) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _require_file(path: str, what: str) -> bool:
    if path and not Path(path).is_file():
        print(f"error: {what} file not found: {path}", file=sys.stderr)
        return False
    return True


def _parse_advance_at(values) -> list:
    script = []
    for value in values or []:
        if ":" in value:
            frame, flag = value.split(":", 1)
            script.append((int(frame), flag.lower() in ("forced", "force", "true", "1")))
        else:
            script.append((int(value), False))
    return script


def _build_config(args, **extra) -> config.PipelineConfig:
    file_doc = config.load_config_file(args.config) if getattr(args, "config", None) else None
    return config.config_from_sources(file_doc, **extra)


def cmd_run(args) -> int:
    for path, what in ((args.scenario, "scenario"), (args.model, "model"),
                       (args.rules, "rules"), (args.stream, "stream")):
        if not _require_file(path, what):
            return 2
    if args.stream is None and args.synthetic is None:
        return _fail("either --stream or --synthetic is required")
    cfg = _build_config(
        args,
        scenario_path=args.scenario,
        model_path=args.model,
        rules_path=args.rules,
        stream_path=args.stream,
        synthetic_action=args.synthetic,
        workers=args.workers,
        mode_tag=args.mode_tag,
        advance_at=_parse_advance_at(args.advance_at) or None,
    )
    if args.serve is not None:
        from . import server

        return server.serve(cfg, port=args.serve, host=args.host, replay=args.stream)

    try:
        components = load_session_components(cfg)
    except Exception as exc:  # noqa: BLE001 - surface load diagnostics
        return _fail(str(exc))
    if args.stream is not None:
        provider = detection.ReplayProvider(args.stream)
        header = provider.header
    else:
        spec = detection.default_spec(args.synthetic, seed=args.seed,
                                      duration_frames=args.frames)
        provider = detection.SyntheticProvider(spec)
        header = provider.header

    started = time.perf_counter()
    report = run_session(cfg, provider, header, components=components)
    elapsed = time.perf_counter() - started
    if args.report:
        analysis.write_report(report, args.report)
    print(json.dumps({
        "completed": report.completed,
        "aborted": report.aborted,
        "steps_validated": report.steps_validated,
        "error_counts": report.error_counts,
        "total_time_s": report.total_time_s,
        "frames_processed": report.frames_processed,
        "throughput_fps": round(report.frames_processed / elapsed, 1) if elapsed > 0 else None,
    }, sort_keys=True))
    return 0 if report.completed and not report.aborted else 1


def cmd_train(args) -> int:
    if not Path(args.data).is_dir():
        return _fail(f"dataset directory not found: {args.data}")
    entries = data.load_dataset_dir(args.data)
    train_entries, held_entries = data.split_streams(entries, args.holdout, args.seed)
    x_train, y_train = data.assemble(train_entries)
    classes = tuple(sorted({label for label, _, _ in entries}))
    cfg = classifier.TrainingConfig(
        learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
        seed=args.seed, hidden=tuple(args.hidden),
    )
    params = classifier.train(x_train, y_train, classes, cfg)
    classifier.save_model(params, args.out)
    summary = {
        "classes": list(classes),
        "train_windows": int(x_train.shape[0]),
        "train_accuracy": classifier.accuracy(params, x_train, y_train),
    }
    if held_entries:
        x_held, y_held = data.assemble(held_entries)
        summary["holdout_windows"] = int(x_held.shape[0])
        summary["holdout_accuracy"] = classifier.accuracy(params, x_held, y_held)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    if not _require_file(args.model, "model"):
        return 2
    if not Path(args.data).is_dir():
        return _fail(f"dataset directory not found: {args.data}")
    params = classifier.load_model(args.model)
    x, labels = data.assemble(data.load_dataset_dir(args.data))
    table = {
        "overall": classifier.accuracy(params, x, labels),
        "per_class": classifier.per_class_accuracy(params, x, labels),
        "windows": int(x.shape[0]),
    }
    print(json.dumps(table, sort_keys=True))
    return 0


def cmd_anova(args) -> int:
    groups = []
    names = []
    for spec in args.group:
        if "=" not in spec:
            return _fail(f"--group must look like NAME=file[,file...], got {spec!r}")
        name, paths = spec.split("=", 1)
        files: list[str] = []
        for pattern in paths.split(","):
            matched = glob.glob(pattern)
            if not matched:
                return _fail(f"group {name}: no files match {pattern!r}")
            files.extend(sorted(matched))
        reports = [analysis.read_report(p) for p in files]
        if args.metric == "time":
            groups.append([r.total_time_s for r in reports])
        else:
            groups.append([float(r.total_errors) for r in reports])
        names.append(name)
    try:
        result = analysis.one_way_anova(groups)
    except ValueError as exc:
        return _fail(str(exc), code=1)
    out = result.to_dict()
    out["groups"] = names
    print(json.dumps(out, sort_keys=True))
    return 0


def cmd_gen(args) -> int:
    if args.dataset:
        actions = args.action.split(",") if args.action else list(detection.ACTION_VOCABULARY)
        data.write_training_streams(
            args.out, actions, streams_per_action=args.streams,
            duration_frames=args.frames, noise_sigma=args.noise, base_seed=args.seed,
        )
        print(json.dumps({"dataset": args.out, "actions": actions, "streams": args.streams}))
        return 0
    if not args.action or "," in args.action:
        return _fail("gen needs exactly one --action unless --dataset is set")
    canonical = detection.default_spec(args.action, seed=args.seed,
                                       duration_frames=args.frames,
                                       noise_sigma=args.noise)
    spec = detection.SyntheticMotionSpec(
        action=args.action,
        amplitude=args.amplitude if args.amplitude is not None else canonical.amplitude,
        frequency_hz=args.frequency if args.frequency is not None else canonical.frequency_hz,
        noise_sigma=args.noise,
        duration_frames=args.frames,
        seed=args.seed,
        fps=args.fps,
    )
    header, frames = detection.generate_synthetic(spec)
    detection.write_stream(args.out, frames, header)
    print(json.dumps({"stream": args.out, "frames": len(frames)}))
    return 0


def cmd_serve(args) -> int:
    for path, what in ((args.scenario, "scenario"), (args.model, "model"),
                       (args.rules, "rules")):
        if not _require_file(path, what):
            return 2
    cfg = _build_config(
        args,
        scenario_path=args.scenario or str(asset_path("tableI.scenario")),
        model_path=args.model or str(asset_path("tableI_mlp.model")),
        rules_path=args.rules or str(asset_path("tableI.rules")),
        fps_cap=args.fps,
    )
    from . import server

    return server.serve(cfg, port=args.port, host=args.host, replay=args.replay,
                        static_dir=args.static)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="workguide",
        description="Real-time workflow guidance engine",
    )
    parser.add_argument("--version", action="version", version=f"workguide {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="replay or synthesize a session and report it")
    run.add_argument("--scenario", required=True)
    run.add_argument("--stream", help=".detstream replay file")
    run.add_argument("--synthetic", help="generate this action's stream instead of replaying")
    run.add_argument("--model", help="action classifier model file")
    run.add_argument("--rules", help="anchor rule file")
    run.add_argument("--report", help="write the SessionReport JSON here")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--mode-tag", default=None)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--frames", type=int, default=120)
    run.add_argument("--advance-at", action="append", metavar="FRAME[:forced]",
                     help="operator advance after this frame (repeatable)")
    run.add_argument("--serve", type=int, metavar="PORT", default=None,
                     help="serve the session to the browser console instead")
    run.add_argument("--host", default="127.0.0.1")
    run.set_defaults(func=cmd_run)

    train = sub.add_parser("train", help="train the action classifier on a dataset tree")
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--epochs", type=int, default=40)
    train.add_argument("--lr", type=float, default=0.05)
    train.add_argument("--batch", type=int, default=32)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--hidden", type=int, nargs=2, default=(64, 32))
    train.add_argument("--holdout", type=float, default=0.2)
    train.set_defaults(func=cmd_train)

    evaluate = sub.add_parser("eval", help="accuracy table of a model on a dataset tree")
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.set_defaults(func=cmd_eval)

    anova = sub.add_parser("anova", help="one-way ANOVA over session report groups")
    anova.add_argument("--group", action="append", required=True,
                       metavar="NAME=file[,glob...]")
    anova.add_argument("--metric", choices=("time", "errors"), default="time")
    anova.set_defaults(func=cmd_anova)

    gen = sub.add_parser("gen", help="generate synthetic detection streams")
    gen.add_argument("--action", help="action label (or comma list with --dataset)")
    gen.add_argument("--out", required=True)
    gen.add_argument("--frames", type=int, default=120)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=float, default=0.003)
    gen.add_argument("--amplitude", type=float, default=None)
    gen.add_argument("--frequency", type=float, default=None)
    gen.add_argument("--fps", type=float, default=30.0)
    gen.add_argument("--dataset", action="store_true",
                     help="write a label-per-subdir training tree")
    gen.add_argument("--streams", type=int, default=8, help="streams per action with --dataset")
    gen.set_defaults(func=cmd_gen)

    serve = sub.add_parser("serve", help="interactive simulated workspace for the browser console")
    serve.add_argument("--scenario", default=None)
    serve.add_argument("--model", default=None)
    serve.add_argument("--rules", default=None)
    serve.add_argument("--config", help="JSON config file")
    serve.add_argument("--port", type=int, default=8750)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--fps", type=float, default=30.0)
    serve.add_argument("--replay", help="serve this replay instead of the simulator")
    serve.add_argument("--static", help="directory of built console files to serve at /")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except detection.StreamParseError as exc:
        return _fail(f"stream parse failure: {exc}", code=1)
    except FileNotFoundError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())

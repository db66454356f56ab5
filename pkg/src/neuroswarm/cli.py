"""Command-line entry points.

Every subcommand is flag-driven and non-interactive. Exit codes: 0 on
success, 2 for usage/validation problems, 3 for numerical failures, 4 for
I/O failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__, pipeline, signal_io
from .errors import NumericalError, SimulationError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _gain_pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected 'A,B' gain pair, got {text!r}") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroswarm",
        description="Thought- and eye-movement-driven swarm control pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a thought model from a trace")
    src = train.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="input trace file")
    src.add_argument("--synth-spec", help="synthesis spec JSON (instead of a trace)")
    train.add_argument("--schedule", required=True,
                       help="thought schedule, e.g. '0-15:Disperse,15-30:Aggregate,...'")
    train.add_argument("--out", required=True, help="model file to write")
    train.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="run a control session")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--trace", help="input trace file")
    src.add_argument("--synth-spec", help="synthesis spec JSON")
    run.add_argument("--config", help="full session config JSON (other flags override)")
    run.add_argument("--model", help="trained model file")
    run.add_argument("--robots", type=int, default=None)
    run.add_argument("--preset", choices=["fixed-table", "formula"], default=None)
    run.add_argument("--gains-aggregate", type=_gain_pair, metavar="A,B")
    run.add_argument("--gains-disperse", type=_gain_pair, metavar="A,B")
    run.add_argument("--drive-speed", type=float, default=None)
    run.add_argument("--record", help="recording file to write")
    run.add_argument("--speed", type=float, default=0.0,
                     help="0 = batch (as fast as possible)")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--serve-port", type=int,
                     help="serve this session live instead of running batch")

    synth = sub.add_parser("synth", help="generate a synthetic trace")
    src = synth.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="synthesis spec JSON file")
    src.add_argument("--rectangle-mission", type=float, metavar="LEG_SECONDS",
                     help="built-in 4-leg clockwise mission spec")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--spec-out", help="also write the generated spec JSON")

    inspect = sub.add_parser("inspect", help="tabulate a recording")
    inspect.add_argument("--recording", required=True)
    inspect.add_argument("--what", required=True,
                         choices=["centroid", "nn-dist", "thought-timeline"])

    serve = sub.add_parser("serve", help="start the HTTP/WebSocket service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--console-dir", help="static console files to serve")

    return parser


def _load_spec_model(path: str) -> pipeline.SynthSpecModel:
    return pipeline.SynthSpecModel.model_validate_json(
        Path(path).read_text(encoding="utf-8"))


def cmd_train(args) -> int:
    schedule = pipeline.parse_schedule(args.schedule)
    config = pipeline.SessionConfig(
        mode="train",
        trace_path=args.trace,
        synth_spec=_load_spec_model(args.synth_spec) if args.synth_spec else None,
        model_path=args.out,
        seed=args.seed,
    )
    model, report = pipeline.run_training_session(config, schedule)
    digest = hashlib.sha256(Path(args.out).read_bytes()).hexdigest()
    print(f"model written: {args.out}")
    print(f"model sha256: {digest}")
    print(f"iterations: {report.iterations}")
    print(f"agreement: {report.agreement:.4f}")
    print(f"final log-likelihood: {report.log_likelihoods[-1]:.6f}")
    for w in report.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _run_config(args) -> pipeline.SessionConfig:
    if args.config:
        config = pipeline.load_config(args.config)
    else:
        config = pipeline.SessionConfig(mode="replay")
    updates: dict = {}
    if args.trace:
        updates["trace_path"] = args.trace
        updates["synth_spec"] = None
    if args.synth_spec:
        updates["synth_spec"] = _load_spec_model(args.synth_spec)
        updates["trace_path"] = None
    if args.model:
        updates["model_path"] = args.model
    if args.robots is not None:
        updates["robots"] = args.robots
    if args.drive_speed is not None:
        updates["drive_speed"] = args.drive_speed
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.record:
        updates["record_path"] = args.record
    preset = config.preset
    preset_updates: dict = {}
    if args.preset:
        preset_updates["mode"] = args.preset
    table = dict(preset.table)
    if args.gains_aggregate:
        table["Aggregate"] = args.gains_aggregate
    if args.gains_disperse:
        table["Disperse"] = args.gains_disperse
    if args.gains_aggregate or args.gains_disperse:
        preset_updates["table"] = table
    if preset_updates:
        updates["preset"] = preset.model_copy(update=preset_updates)
    if args.serve_port:
        updates["mode"] = "live-sim"
    return config.model_copy(update=updates)


def cmd_run(args) -> int:
    config = _run_config(args)
    if args.serve_port:
        return _serve_session(config, args.serve_port)
    if args.speed and args.speed > 0:
        import time
        start = time.monotonic()
        frames = []
        from . import hmm
        trace = pipeline.load_session_trace(config)
        model = hmm.load_model(config.model_path)
        loop = pipeline.ControlLoop(config, trace, model)
        while not loop.done:
            frames.append(loop.tick())
            target = start + loop.ticks * loop.tick_ms / 1000.0 / args.speed
            delay = target - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        if config.record_path:
            pipeline.record_frames(frames, config.record_path,
                                   pipeline.config_hash(config))
    else:
        frames = pipeline.run_control_session(config)
    print(f"frames: {len(frames)}")
    if config.record_path:
        digest = hashlib.sha256(Path(config.record_path).read_bytes()).hexdigest()
        print(f"recording written: {config.record_path}")
        print(f"recording sha256: {digest}")
    return EXIT_OK


def _serve_session(config: pipeline.SessionConfig, port: int) -> int:
    import uvicorn

    from .service import LiveSession, create_app

    app = create_app()

    @app.on_event("startup")
    async def _boot():
        session = LiveSession("s1", config)
        app.state.sessions["s1"] = session
        session.start()

    print(f"serving session on ws://127.0.0.1:{port}/ws")
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        spec_model = _load_spec_model(args.spec)
    else:
        mission = pipeline.rectangle_mission(leg_s=args.rectangle_mission)
        spec_model = pipeline.mission_to_synth_spec(mission)
    trace = signal_io.synthesize(spec_model.to_spec(), args.seed)
    signal_io.write_trace(trace, args.out)
    if args.spec_out:
        Path(args.spec_out).write_text(spec_model.model_dump_json(indent=2) + "\n",
                                       encoding="utf-8")
    print(f"trace written: {args.out}")
    print(f"eog frames: {len(trace.eog_frames)}")
    print(f"metric samples: {len(trace.metric_samples)}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    _, frames = pipeline.read_frames(args.recording)
    if args.what == "centroid":
        print("t_ms centroid_x centroid_y")
        for f in frames:
            print(f"{f.t_ms} {f.centroid[0]:.6f} {f.centroid[1]:.6f}")
    elif args.what == "nn-dist":
        from . import swarm
        print("t_ms mean_nn_dist")
        for f in frames:
            st = swarm.SwarmState(positions=f.positions,
                                  robot_radius=f.robot_radius, a=f.a, b=f.b)
            print(f"{f.t_ms} {swarm.diagnostics(st).mean_nn_dist:.6f}")
    else:
        print("t_ms state posterior thought_gains_a thought_gains_b eye")
        for f in frames:
            state = "-" if f.thought_state is None else str(f.thought_state)
            post = "-" if f.posterior is None else \
                ",".join(f"{p:.6f}" for p in f.posterior)
            print(f"{f.t_ms} {state} {post} {f.a} {f.b} {f.eye}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(console_dir=args.console_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors and 0 for --help/--version
        return int(exc.code or 0)
    handlers = {
        "train": cmd_train,
        "run": cmd_run,
        "synth": cmd_synth,
        "inspect": cmd_inspect,
        "serve": cmd_serve,
    }
    import pydantic

    try:
        return handlers[args.command](args)
    except (ValidationError, pydantic.ValidationError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, SimulationError) as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except json.JSONDecodeError as exc:
        print(f"error: validation: bad JSON: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

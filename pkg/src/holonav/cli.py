"""Command-line entry points.

Exit codes: 0 success, 2 validation error (bad flags, bad files), 1 internal
error. Results print to stdout as JSON; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys

import numpy as np

from .calibration import calibration_quality, pivot_calibrate
from .errors import HolonavError
from .geometry import FiducialSet, RigidTransform
from .registration import fit_rigid, match_correspondences
from .scene import default_phantom_grid, default_phantom_spec
from .service import NavigationService, ServiceConfig
from .session import replay_events, read_log
from .tracking_sim import load_scenario, run_scenario, write_samples_jsonl
from .volume import PhantomSpec, detect_fiducials, read_volume, synthesize_phantom, write_volume

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2


def _load_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _cmd_phantom(args) -> int:
    if args.spec == "default":
        spec = default_phantom_spec()
    else:
        spec = PhantomSpec.from_dict(_load_json(args.spec))
    dims, spacing, origin = default_phantom_grid()
    if args.dims:
        dims = tuple(args.dims)
    if args.spacing:
        spacing = tuple(args.spacing)
    if args.origin:
        origin = np.array(args.origin)
    volume = synthesize_phantom(spec, dims, spacing, origin)
    write_volume(volume, args.out)
    print(json.dumps({
        "out": args.out,
        "dims": list(volume.dims),
        "spacing_mm": list(volume.spacing),
        "origin_mm": volume.origin.tolist(),
        "fiducials": len(spec.fiducial_centers),
    }))
    return EXIT_OK


def _cmd_detect(args) -> int:
    volume = read_volume(args.volume)
    detections = detect_fiducials(
        volume, threshold=args.threshold, min_voxels=args.min_voxels, max_voxels=args.max_voxels
    )
    print(json.dumps([
        {
            "centroid_mm": d.centroid.tolist(),
            "voxel_count": d.voxel_count,
            "peak_intensity": d.peak_intensity,
        }
        for d in detections
    ], indent=2))
    return EXIT_OK


def _cmd_register(args) -> int:
    source = FiducialSet.from_dict(_load_json(args.source))
    target = FiducialSet.from_dict(_load_json(args.target))
    if args.paired:
        from .registration import Correspondences

        result = fit_rigid(Correspondences.paired_in_order(source, target))
    else:
        result = fit_rigid(match_correspondences(source, target))
    print(json.dumps(result.to_dict(), indent=2))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    doc = _load_json(args.poses)
    poses = [RigidTransform.from_dict(p) for p in doc["poses"]]
    sol = pivot_calibrate(poses)
    quality = calibration_quality(sol, args.max_residual, args.max_condition)
    out = sol.to_dict()
    out["accepted"] = quality.accepted
    out["reasons"] = list(quality.reasons)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    samples = run_scenario(scenario)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            write_samples_jsonl(samples, f)
    else:
        write_samples_jsonl(samples, sys.stdout)
    dropouts = sum(1 for s in samples if s.dropout)
    print(f"{len(samples)} samples, {dropouts} dropouts", file=sys.stderr)
    return EXIT_OK


def _cmd_replay(args) -> int:
    session = replay_events(read_log(args.log))
    print(f"state: {session.state.display_name}")
    print(json.dumps(session.snapshot(), indent=2))
    return EXIT_OK


def _cmd_serve(args) -> int:
    config = ServiceConfig.load(args.config)
    overrides = {}
    if args.port is not None:
        overrides["port"] = args.port
    if args.ws_port is not None:
        overrides["ws_port"] = args.ws_port
    if args.log is not None:
        overrides["log_path"] = args.log
    if args.tick_rate is not None:
        overrides["tick_rate_hz"] = args.tick_rate
    if overrides:
        config = ServiceConfig(**{**config.__dict__, **overrides})

    async def run():
        service = NavigationService(config)
        await service.start()
        print(
            f"listening tcp={config.host}:{service.tcp_port} ws={config.host}:{service.ws_port}",
            file=sys.stderr, flush=True,
        )
        try:
            await asyncio.Event().wait()
        finally:
            await service.stop()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holonav", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("phantom", help="synthesize a phantom volume file")
    p.add_argument("--spec", default="default", help="'default' or a phantom spec JSON file")
    p.add_argument("--out", required=True, help="output volume file")
    p.add_argument("--dims", type=int, nargs=3, metavar=("NX", "NY", "NZ"))
    p.add_argument("--spacing", type=float, nargs=3, metavar=("SX", "SY", "SZ"))
    p.add_argument("--origin", type=float, nargs=3, metavar=("OX", "OY", "OZ"))
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("detect", help="detect fiducials in a volume file")
    p.add_argument("volume")
    p.add_argument("--threshold", type=float, default=1000.0)
    p.add_argument("--min-voxels", type=int, default=1)
    p.add_argument("--max-voxels", type=int, default=None)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("register", help="fit a rigid transform between two fiducial files")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--paired", action="store_true", help="pair by order instead of matching")
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("calibrate", help="pivot-calibrate from a pose file")
    p.add_argument("poses")
    p.add_argument("--max-residual", type=float, default=0.5)
    p.add_argument("--max-condition", type=float, default=1e4)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("simulate", help="run a tracking scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", help="write samples to this JSONL file instead of stdout")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("replay", help="re-derive session state from a log")
    p.add_argument("log")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("serve", help="start the wire service")
    p.add_argument("--config", help="service config JSON file")
    p.add_argument("--port", type=int)
    p.add_argument("--ws-port", type=int)
    p.add_argument("--log", help="session log path (write-ahead)")
    p.add_argument("--tick-rate", type=float)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HolonavError, ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # pragma: no cover - defensive
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

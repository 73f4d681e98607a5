"""Command line: ``msslam run|eval|plot|worldgen``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from msslam.errors import ConfigError, MSSlamError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("msslam")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--out", default=None, help="output directory or file")
    common.add_argument("--algo", choices=("slidematch", "slidegraph", "auto"), default=None,
                        help="place-recognition algorithm")
    common.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING or ERROR")
    p = argparse.ArgumentParser(prog="msslam", description="Multi-robot object SLAM simulator and benchmark",
                                parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="simulate a scenario and export artifacts")
    r.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    r.add_argument("--no-plot", action="store_true", help="skip the SVG overview")
    e = sub.add_parser("eval", parents=[common], help="recompute metrics from a run directory")
    e.add_argument("run_dir")
    pl = sub.add_parser("plot", parents=[common], help="draw the SVG overview of a run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--robot", type=int, default=0, help="robot whose frame and map are drawn")
    pl.add_argument("--truth", action="store_true", help="draw ground-truth landmarks instead of the map")
    w = sub.add_parser("worldgen", parents=[common], help="generate a world from a world spec JSON")
    w.add_argument("spec")
    return p


def _worldgen(args) -> int:
    from msslam.worldsim.world import WorldSpec, generate_world

    try:
        data = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read world spec {args.spec}: {exc}") from exc
    data = data.get("world", data)
    try:
        spec = WorldSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid world spec: {exc}", "world") from exc
    seed = args.seed if args.seed is not None else int(data.get("seed", 0))
    world = generate_world(spec, seed)
    out = Path(args.out) if args.out else Path("world.json")
    world.save(out)
    print(f"wrote {len(world)} landmarks to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            from msslam.bench.runner import run_scenario

            res = run_scenario(args.scenario, args.out, seed=args.seed, algo=args.algo, plot=not args.no_plot)
            print(f"run written to {res.out_dir}")
            print(json.dumps(res.metrics["ate_rmse"], sort_keys=True))
        elif args.command == "eval":
            from msslam.bench.metrics import compute_metrics

            metrics = compute_metrics(args.run_dir)
            text = json.dumps(metrics, indent=1, sort_keys=True)
            if args.out:
                Path(args.out).write_text(text)
            print(text)
        elif args.command == "plot":
            from msslam.bench.plot import emit_plot

            path = emit_plot(args.run_dir, args.out, robot=args.robot, source="truth" if args.truth else "map")
            print(f"wrote {path}")
        else:
            return _worldgen(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MSSlamError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end.

Exit codes: 0 success, 1 a bound report is violated, 2 configuration error.
"""

import argparse
import json
import logging
import sys

from .config import SUITES, defaults, load_scenario, Scenario
from .errors import AddEquivError, ConfigError

log = logging.getLogger("addequiv")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _common(p):
    p.add_argument("--config", metavar="PATH", help="scenario JSON file")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent suites")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="addequiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the suites listed in the config (or --suite)")
    _common(run)
    run.add_argument("--suite", action="append", choices=SUITES, help="restrict to this suite (repeatable)")
    for name in ("regime", "operator", "risk", "equivalence", "simulate"):
        p = sub.add_parser(name, help=f"run only the {name} suite")
        _common(p)
        if name == "regime":
            p.add_argument("--beta", type=float)
            p.add_argument("--alpha", type=float)
    sub.add_parser("defaults", help="print every configuration field with its default")
    return parser


def _scenario(args, suites):
    if args.config:
        sc = load_scenario(args.config)
    elif suites == ["regime"]:
        sc = Scenario(suites=["regime"])
    else:
        raise ConfigError("--config is required for this command")
    data = sc.model_dump()
    if getattr(args, "beta", None) is not None:
        data["beta"] = args.beta
    if getattr(args, "alpha", None) is not None:
        data["alpha"] = args.alpha
    if args.seed is not None:
        data["seed"] = args.seed
    if suites:
        data["suites"] = suites
    try:
        return Scenario.model_validate(data)
    except Exception as exc:  # pydantic validation of overrides
        raise ConfigError(str(exc)) from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        print(json.dumps(defaults(), indent=2, sort_keys=True))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    from .runner import run_scenario

    suites = args.suite if args.command == "run" else [args.command]
    try:
        sc = _scenario(args, suites)
        manifest = run_scenario(sc, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AddEquivError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, ok in manifest["checks"].items():
        log.info("check %s: %s", name, "pass" if ok else "FAIL")
    print(f"wrote {len(manifest['outputs'])} artifacts to {args.out}; violations: {manifest['violations']}")
    return EXIT_VIOLATION if manifest["violations"] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

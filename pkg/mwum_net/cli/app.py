import os
import sys
import json
import logging
import argparse
from typing import List, Optional

from core.exceptions import ConfigError, MalformedConfig, SolverError
from utils.helpers import json_safe, parse_number_list

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

SUBCOMMANDS = ("capacity", "simulate", "fluid", "compare", "invariant", "balance", "lift",
               "stability")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _ArgumentParser(argparse.ArgumentParser):
    """Raise instead of exiting so usage errors share the config exit code."""

    def error(self, message):
        raise MalformedConfig(f"{self.prog}: {message}")


def _number_list(cast):
    def parse(text: str):
        try:
            return parse_number_list(text, cast)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}")
    return parse


def _eps(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")


class MwumNetApp:
    """Command-line front end: parses flags, configures logging, dispatches
    subcommands and maps errors to exit codes."""

    def __init__(self, stdout=None):
        self.stdout = stdout or sys.stdout
        self.parser = self._create_parser()

    def _create_parser(self) -> argparse.ArgumentParser:
        parser = _ArgumentParser(prog="mwum-net",
                                 description="MWUM-alpha network experiments: capacity, "
                                             "simulation, fluid model and workload analysis")
        parser.add_argument("--config", help="JSON settings file (overrides config.json)")
        parser.add_argument("--log-level", default="WARNING",
                            choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        subparsers = parser.add_subparsers(dest="command", required=True,
                                           parser_class=_ArgumentParser)
        for name in SUBCOMMANDS:
            sub = subparsers.add_parser(name)
            self._add_common_arguments(sub)
        return parser

    @staticmethod
    def _add_common_arguments(sub: argparse.ArgumentParser):
        sub.add_argument("--topology", required=True, help="network description (JSON)")
        sub.add_argument("--out", default=None, help="output directory")
        sub.add_argument("--alpha", type=float, default=None)
        sub.add_argument("--capacity", type=float, default=None, help="override C")
        sub.add_argument("--load-scale", type=float, default=None, help="multiply every nu")
        sub.add_argument("--horizon", type=float, default=None)
        sub.add_argument("--step", type=float, default=None, help="fluid step h")
        sub.add_argument("--scales", type=_number_list(float), default=[])
        sub.add_argument("--seeds", type=_number_list(int), default=[])
        sub.add_argument("--kappas", type=_number_list(float), default=[],
                         help="load multipliers for stability runs")
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--eps", type=_eps, default=0.05)
        sub.add_argument("--n0", type=_number_list(float), default=None)
        sub.add_argument("--q0", type=_number_list(float), default=None)
        sub.add_argument("--policy", default="mwum")
        sub.add_argument("--sample-every", type=int, default=1)
        sub.add_argument("--events", action="store_true", help="write the JSON-lines event log")
        sub.add_argument("--plot", action="store_true", help="write fluid.png")
        sub.add_argument("--grid-points", type=int, default=25)
        sub.add_argument("--no-reproducible", action="store_true",
                         help="allow runs without a seed (fresh entropy is recorded)")

    @staticmethod
    def _configure_logging(level: str):
        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
        root.setLevel(getattr(logging, level))

    def _build_config(self, args):
        from cli.commands import RunConfig
        out = args.out or os.path.join("runs", args.command)
        return RunConfig(
            command=args.command, topology=args.topology, out=out, alpha=args.alpha,
            capacity=args.capacity, load_scale=args.load_scale, horizon=args.horizon,
            step=args.step, scales=args.scales, seeds=args.seeds, kappas=args.kappas,
            seed=args.seed, eps=args.eps, n0=args.n0, q0=args.q0, policy=args.policy,
            sample_every=args.sample_every, events=args.events, plot=args.plot,
            grid_points=args.grid_points, reproducible=not args.no_reproducible,
        ).validate()

    def run(self, argv: Optional[List[str]] = None) -> int:
        """Run one subcommand; returns the process exit code."""
        try:
            args = self.parser.parse_args(argv)
            self._configure_logging(args.log_level)
            if args.config:
                if not os.path.isfile(args.config):
                    raise MalformedConfig(f"config file not found: {args.config}")
                os.environ["MWUM_NET_CONFIG"] = os.path.abspath(args.config)
            from utils.config import validate_configuration
            if not validate_configuration():
                raise MalformedConfig("configuration failed validation")

            from cli.commands import COMMANDS
            config = self._build_config(args)
            report = COMMANDS[args.command](config)
            self.stdout.write(json.dumps(json_safe(report), sort_keys=True, indent=2,
                                        allow_nan=False) + "\n")
            return EXIT_OK
        except ConfigError as e:
            logger.error("Configuration error: %s", e)
            return EXIT_CONFIG
        except SolverError as e:
            logger.error("Solver error: %s", e)
            return EXIT_SOLVER
        except Exception as e:
            logger.exception("Unexpected failure: %s", e)
            return EXIT_UNEXPECTED


def main(argv: Optional[List[str]] = None) -> int:
    return MwumNetApp().run(argv)

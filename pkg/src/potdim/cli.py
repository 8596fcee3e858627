"""Command-line front end.

Exit status is 0 on success, 1 for configuration errors (nothing is
written) and 2 when a run fails. Values come from flags first, then the
``--config`` JSON file, then the built-in defaults for the experiment.
Progress goes to stderr; summary metrics go to stdout as JSON.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments, systems

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: error: {message}")


# flag -> (config field, type, help); defaults are applied after merging
_FLAGS = [
    ("--system", "system", str, "registered system name (default: per subcommand, "
                                "henon for zoom/ensemble, lorenz63 for ei-sweep)"),
    ("--seed", "seed", int, "master seed (default: 0)"),
    ("--refs", "n_refs", int, "number of reference points (default: per system, "
                              "e.g. 200 for henon, 100 for lorenz63)"),
    ("--iters", "iters", int, "orbit length for maps, sample size for iid-demo "
                              "(default: per system, e.g. 1000000 for henon)"),
    ("--time", "total_time", float, "integration time per reference for flows "
                                    "(default: 100000 for lorenz63/lorenz96)"),
    ("--dt", "dt", float, "time step; for ei-sweep the reference sampling step "
                          "(default: 0.01, ei-sweep 0.0198)"),
    ("--t-len", "t_len", float, "ei-sweep reference series length (default: 1000)"),
    ("--k", "k", int, "recurrence buffer size (default: 5000; 2000 lorenz63, "
                      "1000 lorenz96/henon-heiles)"),
    ("--q", "q", float, "fixed quantile level (default: 0.99)"),
    ("--q-mode", "q_mode", str, "quantile policy for ei-sweep; omit to run both "
                                "(default: both)"),
    ("--b", "b", float, "radius factor of the ratio R (default: 0.5)"),
    ("--out", "out", str, "output directory (default: none, metrics only)"),
    ("--format", "format", str, "table format (default: csv)"),
    ("--threads", "threads", int, "worker threads for ensembles (default: 1)"),
]

_CHOICES = {"q_mode": ("fixed", "varying"), "format": ("csv", "json"),
            "system": tuple(systems.system_names())}

_SUBCOMMANDS = {
    "zoom": ("zoom", "single reference point zoom trace"),
    "ensemble": ("ensemble", "ensemble of zoom traces and their aggregate"),
    "ei-sweep": ("ei-sweep", "extremal index over sampling steps and series lengths"),
    "iid-demo": ("iid-demo", "i.i.d. series against its max-pair series"),
    "solenoid-measure": ("solenoid-measure", "analytic solenoid ball measure"),
    "cantor-oracle": ("cantor-oracle", "exact Cantor ball measure on a radius grid"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="potdim", description="Exceedance-based local dimension "
                     "estimation and regular-variation diagnostics.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, text) in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        for flag, dest, typ, helptext in _FLAGS:
            p.add_argument(flag, dest=dest, type=typ, default=None, help=helptext,
                           choices=_CHOICES.get(dest))
        p.add_argument("--config", default=None,
                       help="JSON file with ExperimentConfig fields (default: none)")
    sub.add_parser("list-systems", help="print the registered system names",
                   description="print the registered system names")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> experiments.ExperimentConfig:
    """Merge flag > config file > built-in default into one validated config."""
    merged: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                merged = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(merged, dict):
            raise ConfigError("config file must hold a JSON object")
        exp = merged.pop("experiment", command)
        if exp != command:
            raise ConfigError(f"config is for {exp!r}, not {command!r}")
    for _, dest, _, _ in _FLAGS:
        v = getattr(args, dest)
        if v is not None:
            merged[dest] = v
    try:
        cfg = experiments.ExperimentConfig.from_dict({"experiment": command, **merged})
        cfg = experiments.fill_defaults(cfg)
        cfg.validate()
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "list-systems":
            for name in systems.system_names():
                print(name)
            return EXIT_OK
        cfg = resolve_config(_SUBCOMMANDS[args.command][0], args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_CONFIG
    print(f"potdim {args.command}: config {cfg.to_json()}", file=sys.stderr)
    try:
        result, manifest = experiments.execute(cfg)
    except Exception as exc:  # noqa: BLE001 - any failure during the run
        print(f"potdim {args.command}: run failed: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_RUNTIME
    if manifest is not None:
        print(f"potdim {args.command}: wrote {sorted(manifest.outputs)} to {cfg.out}",
              file=sys.stderr)
    print(json.dumps(result.metrics, indent=2, sort_keys=True, default=experiments._jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: ``knr02 <subcommand> [--config cfg.json] [--out dir] [--seed N] [--jobs N]``.

Exit codes: 0 success, 2 configuration error, 3 physics-validation error,
4 numerical-quality error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, Knr02Error, NumericalError, PhysicsError, RejectionError
from .experiments import DEFAULTS, RUNNERS, resolve_config
from .results import to_jsonable

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_NUMERICAL = 0, 2, 3, 4

HELP = {
    "z-sweep": "infidelity of a Z(pi) rotation against gate time",
    "x-sweep": "infidelity of an X(pi) rotation against gate time",
    "cz-table": "CZ fidelity: unitary, with loss, with loss and postselection",
    "parity-pf": "process fidelity of the ancilla parity measurement",
    "ansatz-sweep": "ansatz fidelity over random parameter sets and detection placements",
    "depth-sweep": "fidelity against the number of repeated ansatz layers",
    "calibrate": "print the calibrated pulse schedules",
    "check": "perturbative and adiabaticity diagnostics",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knr02", description="Kerr-resonator 02-code experiments.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in DEFAULTS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", type=Path, help="JSON config document")
        p.add_argument("--out", help="output directory (default: results)")
        p.add_argument("--seed", type=int, help="PRNG seed")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.add_argument("--print-config", action="store_true", help="echo the resolved config and exit")
    return parser


def _load(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def _dump(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True)


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args.command, _load(args.config), out=args.out, seed=args.seed, jobs=args.jobs)
    if args.print_config:
        print(_dump(cfg))
        return EXIT_OK
    result = RUNNERS[args.command](cfg)
    out = Path(cfg["out"])
    if args.command == "calibrate":
        text = _dump(result) + "\n"
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibrate.json").write_text(text, encoding="utf-8")
        sys.stdout.write(text)
        return EXIT_OK
    csv_path, meta_path = result.write(out)
    if args.command == "check":
        sys.stdout.write(result.to_csv())
    print(f"wrote {csv_path} and {meta_path}", file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except PhysicsError as exc:
        # before ConfigError: a broken parity condition is both
        print(f"physics validation error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, RejectionError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Knr02Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

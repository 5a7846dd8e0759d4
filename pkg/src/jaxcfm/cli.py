"""
Command line interface, ``jaxcfm <experiment> [options]``.

Every experiment writes a CSV file, a ``.meta.txt`` file with the run
metadata and a ``.records.json`` file with all per-realization records. The
exit code is 1 if any realization violated an invariant.
"""

import argparse
import logging
import sys

from .config import SEED_LIMIT, SystemConfig, load_config
from .harness import ExperimentSpec, run_experiment, write_result

logger = logging.getLogger(__name__)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _seed(text: str) -> int:
    seed = int(text)
    if not 0 <= seed < SEED_LIMIT:
        raise argparse.ArgumentTypeError(
            f"{text} is not an unsigned 64 bit integer"
        )
    return seed


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="TOML file with the base system configuration"
    )
    common.add_argument(
        "--seed",
        type=_seed,
        default=None,
        help="seed of all random draws, an unsigned 64 bit integer",
    )
    common.add_argument(
        "--realizations",
        type=int,
        default=None,
        help="number of channel realizations per sweep point",
    )
    common.add_argument("--out", default=None, help="path of the CSV output")
    common.add_argument(
        "--quick",
        action="store_true",
        help="cap Q at 64 and use at most 20 realizations",
    )
    common.add_argument(
        "--workers", type=int, default=1, help="number of worker threads"
    )
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging"
    )

    parser = argparse.ArgumentParser(
        prog="jaxcfm",
        description=(
            "PA-consumption-aware zero-forcing and AP switching in cell-free "
            "massive MIMO."
        ),
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    sub.add_parser(
        "antenna-profile",
        parents=[common],
        help="per-antenna powers of all methods on one realization",
    )
    sweep = sub.add_parser(
        "subcarrier-sweep",
        parents=[common],
        help="PA consumption of the RMT method versus the optimum over Q",
    )
    sweep.add_argument(
        "--q-values", type=_int_list, default=None, help="e.g. 1,4,16,64"
    )
    load = sub.add_parser(
        "load-sweep",
        parents=[common],
        help="network power gain over the number of users and APs",
    )
    load.add_argument("--k-values", type=_int_list, default=None)
    load.add_argument("--l-values", type=_int_list, default=None)
    sub.add_parser(
        "validate", parents=[common], help="run the invariant suite"
    )
    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    config = load_config(args.config) if args.config else SystemConfig()
    spec = ExperimentSpec(
        args.kind,
        config=config,
        q_values=getattr(args, "q_values", None),
        k_values=getattr(args, "k_values", None),
        l_values=getattr(args, "l_values", None),
        realizations=args.realizations,
        out=args.out,
        seed=args.seed,
        workers=args.workers,
        progress=True,
    )
    return spec.quick() if args.quick else spec


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][
            min(args.verbose, 2)
        ],
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )
    try:
        spec = spec_from_args(args)
    except (OSError, ValueError) as err:
        parser.error(str(err))
    result = run_experiment(spec)
    write_result(result)
    if result.failures:
        logger.warning(
            f"{len(result.failures)} realizations failed, see "
            f"{spec.out}.records.json."
        )
    if result.violations:
        logger.error(
            f"{len(result.violations)} realizations violated an invariant."
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

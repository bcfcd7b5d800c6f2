# dpconsider/main.py

import argparse
import logging
import sys
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from dpconsider.errors import (
    ConfigError,
    DatasetValidationError,
    EnumerationLimitError,
    InvalidPmfError,
    InvariantBreach,
    NumericalAbort,
    UnknownSubjectError,
)
from dpconsider.routers.commands import register

logger = logging.getLogger("dpconsider")

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpconsider",
        description="Logit choice models with latent consideration sets (Dirichlet-process mixture).",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)
    register(subparsers)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    # MCMC_*/HYPER_* overrides may live in a local .env
    load_dotenv()
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except DatasetValidationError as e:
        logger.error("%s", e)
        for v in e.violations[:50]:
            logger.error("  %s", v)
        return EXIT_VALIDATION
    except (ConfigError, InvalidPmfError, EnumerationLimitError, UnknownSubjectError, ValidationError) as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except (NumericalAbort, InvariantBreach) as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error("%s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

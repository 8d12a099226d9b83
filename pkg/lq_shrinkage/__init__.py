import logging
import sys

from importlib_metadata import metadata

from lq_shrinkage.cli import build_args_parser, preparse_config
from lq_shrinkage.errors import LqShrinkageError
from lq_shrinkage.lib.experiment import load_option_defaults
from lq_shrinkage.lib.runner import run_command

__version__ = metadata("lq-shrinkage")["Version"]
logging.basicConfig(stream=sys.stdout, level=logging.INFO)


def main(argv=None):
    """main"""
    description = metadata("lq-shrinkage")["Summary"]
    version = "%(prog)s {}".format(__version__)
    defaults = {}
    if config_path := preparse_config(argv):
        try:
            defaults = load_option_defaults(config_path)
        except LqShrinkageError as e:
            logging.error(f"invalid config file: {config_path}\n  reason: {e}")
            sys.exit(e.exit_code)
    parser = build_args_parser(description=description, version=version, defaults=defaults)
    args = parser.parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
        logging.getLogger().handlers = [logging.StreamHandler(sys.stderr)]
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)
    exit_code = run_command(args)
    sys.exit(exit_code)


if __name__ == "__main__":
    main()

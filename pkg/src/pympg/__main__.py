import sys
import contextlib

from clldutils.clilib import register_subcommands, get_parser_and_subparsers, ParserError
from clldutils.loglib import Logging
from termcolor import colored

import pympg.commands
from pympg.util import ConvergenceError
from pympg.cli_util import GameFileError, EXIT_USAGE, EXIT_INPUT, EXIT_CONVERGENCE


def main(args=None, catch_all=False, parsed_args=None, log=None):
    parser, subparsers = get_parser_and_subparsers('mpg')
    for name, mod in register_subcommands(subparsers, pympg.commands).items():
        # Hyphenated names of the documented command line resolve to the same sub-parser.
        for alias in getattr(mod, 'ALIASES', []):
            subparsers.choices[alias] = subparsers.choices[name]

    try:
        args = parsed_args or parser.parse_args(args=args)
    except SystemExit as e:
        # argparse exits with status 0 after printing help and 2 on usage errors.
        return EXIT_USAGE if e.code else 0

    if not hasattr(args, "main"):
        parser.print_help()
        return EXIT_USAGE

    with contextlib.ExitStack() as stack:
        if not log:  # pragma: no cover
            stack.enter_context(Logging(args.log, level=args.log_level))
        else:
            args.log = log
        try:
            return args.main(args) or 0
        except KeyboardInterrupt:  # pragma: no cover
            return 0
        except ParserError as e:
            print(colored(str(e), 'red'))
            main([args._command, '-h'])
            return EXIT_USAGE
        except GameFileError as e:
            args.log.error('{} error in {}'.format(e.category, e.path))
            for path, msg in e.diagnostics:
                args.log.error('{}: {}'.format(path or '$', msg))
            return EXIT_INPUT
        except ConvergenceError as e:
            args.log.error(str(e))
            return EXIT_CONVERGENCE
        except Exception as e:  # pragma: no cover
            if catch_all:
                print(e)
                return 1
            raise


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main() or 0)

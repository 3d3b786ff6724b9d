"""dpe command line

The command line runs one stage of the pipeline, or all of them with `run`:

    dpe ingest --input <dir>
    dpe simulate --out <dir> [--spec <file>]
    dpe segment [--num <threads>]
    dpe cluster --eval-vehicle <id>
    dpe couple --eval-vehicle <id>
    dpe evaluate --eval-vehicle <id> [--channel fuel|emission]
    dpe report --eval-vehicle <id>
    dpe run --input <dir> --eval-vehicle <id>

Exit codes are 0 on success, 2 for usage and configuration problems, 3 for
data errors and 4 for numerical failures.
"""

import argparse
import logging
import os
import sys

from dpeval import pipeline, simulate
from dpeval.config import load_config, read_document
from dpeval.exceptions import ConfigError, DataError, DpeError
from dpeval.utils import Channel, dumps, setup_logging

COMMANDS = ['ingest', 'simulate', 'segment', 'cluster', 'couple', 'evaluate', 'report', 'run']


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser that raises ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


class DpeCommand(object):
    """The dpe program.

    Defaults of the options come from environment variables; the command line
    overrides them.
    """

    def __init__(self):
        self.args = None
        self.config = None

        # read values from environment variables, otherwise use defaults
        config_file = os.getenv('DPE_CONFIG')
        store_dir = os.getenv('DPE_STORE')
        seed = os.getenv('DPE_SEED')
        eval_vehicle = os.getenv('DPE_EVAL_VEHICLE')
        workers = os.getenv('DPE_WORKERS', "1")
        logging_config = os.getenv("LOGGING")

        self.parser = ArgumentParser(prog='dpe', description='Driving primitive based fuel and emission evaluation')
        self.parser.add_argument('command', choices=COMMANDS, help='stage to run')
        self.parser.add_argument('--config', dest='config_file', default=config_file,
                                 help='JSON or YAML configuration file (default=%s)' % config_file)
        self.parser.add_argument('--store', dest='store_dir', default=store_dir,
                                 help='directory of the artifact store (default=%s)' % (store_dir or 'store'))
        self.parser.add_argument('--seed', type=int, default=seed,
                                 help='seed of all random streams (default=%s)' % (seed or 0))
        self.parser.add_argument('--eval-vehicle', dest='eval_vehicle', default=eval_vehicle,
                                 help='vehicle to evaluate, left out of the clustering')
        self.parser.add_argument('--channel', choices=[c.value for c in Channel], default=Channel.fuel.value,
                                 help='measurement channel to evaluate (default=fuel)')
        self.parser.add_argument('--logging', '-l', nargs='?', default=logging_config,
                                 help='file or url or logging configuration (default=None)')
        self.parser.add_argument('--num', '-n', type=int, nargs='?', default=workers,
                                 help='number of segmentation threads (default=%s)' % workers)
        self.parser.add_argument('--force', action='store_true',
                                 help='accept artifacts made with another configuration')
        self.parser.add_argument('--input', dest='input_dir', help='directory with trip logs (ingest, run)')
        self.parser.add_argument('--out', dest='out_dir', help='output directory of simulate')
        self.parser.add_argument('--spec', dest='spec_file', help='JSON or YAML synthetic fleet spec (simulate)')
        self.parser.add_argument('--version', action='version', version='%(prog)s 1.0.0')

    def setup(self, argv=None):
        """Parse command line arguments, start logging and load the configuration."""
        self.args = self.parser.parse_args(argv)
        setup_logging(self.args.logging)
        self.config = load_config(self.args.config_file, store_dir=self.args.store_dir, seed=self.args.seed)
        if self.args.num is None or self.args.num < 1:
            raise ConfigError("--num must be >= 1")

    def _need(self, name, flag):
        value = getattr(self.args, name)
        if not value:
            raise ConfigError("%s needs %s" % (self.args.command, flag))
        return value

    def start(self):
        """Run the selected command; returns what the stage returned."""
        args = self.args
        force = args.force
        if args.command == 'ingest':
            summary = pipeline.cmd_ingest(self.config, self._need('input_dir', '--input'), force)
            sys.stdout.write(dumps(summary))
            return summary
        if args.command == 'simulate':
            spec = simulate.SyntheticFleetSpec.from_dict(read_document(args.spec_file) if args.spec_file else None)
            return simulate.write_fleet(spec, self._need('out_dir', '--out'), self.config.seed)
        if args.command == 'segment':
            return pipeline.cmd_segment(self.config, force, args.num)
        if args.command == 'run':
            result = pipeline.cmd_run(self.config, self._need('input_dir', '--input'),
                                      self._need('eval_vehicle', '--eval-vehicle'), args.channel, force, args.num)
            sys.stdout.write(dumps(result.to_dict()))
            return result

        eval_vehicle = self._need('eval_vehicle', '--eval-vehicle')
        if args.command == 'cluster':
            return pipeline.cmd_cluster(self.config, eval_vehicle, force)
        if args.command == 'couple':
            return pipeline.cmd_couple(self.config, eval_vehicle, force)
        if args.command == 'evaluate':
            result = pipeline.cmd_evaluate(self.config, eval_vehicle, args.channel, force)
            sys.stdout.write(dumps(result.to_dict()))
            return result
        files = pipeline.cmd_report(self.config, eval_vehicle, force)
        sys.stdout.write("\n".join(files) + "\n")
        return files


def main(argv=None):
    """Entry point of dpe, returns the exit code."""
    logger = logging.getLogger(__name__)
    command = DpeCommand()
    try:
        command.setup(argv)
        command.start()
    except DpeError as exc:
        if command.args is None:
            sys.stderr.write("dpe: error: %s\n" % exc)
        else:
            logger.error("%s failed : %s", command.args.command, exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s failed : %s", command.args.command if command.args else "dpe", exc)
        return DataError.exit_code
    except KeyboardInterrupt:
        logger.exception("interrupted")
        return 130
    return 0


if __name__ == '__main__':
    sys.exit(main())

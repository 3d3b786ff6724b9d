"""dpeval Utils

This module contains utilities shared by the pipeline stages. Amongst these
utilities is a simple way to initialize the logging system from either a file,
a url or the command line, and the canonical json encoding used for every
artifact written to the store.
"""

import json
import logging
import logging.config
import os
import tempfile

from enum import Enum

import numpy as np
import requests
import yaml


class StageStatus(Enum):
    """Value of status to be sent to the status_update function.

    Stages can still define custom content in the message field of that
    function, but the status itself must be one of these. The full string
    will be STATUS: MESSAGE.
    """

    start = "START"
    processing = "PROCESSING"
    done = "DONE"
    error = "ERROR"

    def __str__(self):
        return self.value


class Channel(Enum):
    """Measurement channel used for the evaluation."""

    fuel = "fuel"
    emission = "emission"

    @property
    def column(self):
        return "fuel_rate" if self is Channel.fuel else "emission_rate"


def setup_logging(config_info=None):
    """Given config_info setup logging.

    If config_info points to a file it will try to load it, and configure
    the logging with the values from the file. This supports yaml, json
    and ini files. A http(s) url is downloaded first and then treated as
    a file.

    If config_info is a string, it will try to parse the string as json
    and configure the logging system using the parsed data.

    Finally if config_info is None it will use a basic configuration for
    the logging.

    Args:
        config_info (string): either a file on disk, a url or a json string
            that has the logging configuration.
    """
    if config_info:
        temp_file = None
        if config_info.startswith("http://") or config_info.startswith("https://"):
            r = requests.get(config_info, timeout=30)
            r.raise_for_status()
            suffix = os.path.splitext(config_info.split('?')[0])[1]
            (fd, temp_file) = tempfile.mkstemp(suffix=suffix)
            with os.fdopen(fd, "wb") as tmp:
                for chunk in r.iter_content(chunk_size=1024):
                    tmp.write(chunk)
            config_info = temp_file

        try:
            if os.path.isfile(config_info):
                if config_info.endswith('.yml') or config_info.endswith('.yaml'):
                    with open(config_info, 'r') as configfile:
                        logging.config.dictConfig(yaml.safe_load(configfile))
                elif config_info.endswith('.json'):
                    with open(config_info, 'r') as configfile:
                        logging.config.dictConfig(json.load(configfile))
                else:
                    logging.config.fileConfig(config_info, disable_existing_loggers=False)
            else:
                logging.config.dictConfig(json.loads(config_info))
        finally:
            if temp_file:
                os.remove(temp_file)
    else:
        logging.basicConfig(format='%(asctime)-15s [%(threadName)-15s] %(levelname)-7s :'
                                   ' %(name)s - %(message)s',
                            level=logging.INFO)
        logging.getLogger('urllib3.connectionpool').setLevel(logging.WARN)


def to_jsonable(obj):
    """Convert numpy containers and scalars to plain python values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


def dumps(obj):
    """Canonical json encoding, identical input always gives identical bytes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"

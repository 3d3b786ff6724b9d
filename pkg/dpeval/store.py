"""
    ArtifactStore
    ~~~
    This module contains the on disk store that connects the pipeline stages.
"""

import json
import logging
import os
import tempfile

from dpeval.exceptions import MissingArtifact, MixedConfig, DataError
from dpeval.trips import parse_trip_file, serialize_trip
from dpeval.utils import dumps

# file layout, relative to the root of the store
FLEET = "fleet.json"
TRIPS = "trips/%s/%s.csv"
STANDARDIZATION = "standardization/%s.json"
SEGMENTATION = "segmentation/%s.json"
PRIMITIVES = "primitives/%s.json"
MODEL = "clusters/model.json"
COUPLING = "coupling/%s.json"
EVALUATION = "evaluation/%s.json"
REPORT = "report/%s/%s"


class ArtifactStore(object):
    """
    Directory of JSON and CSV artifacts written by the pipeline stages.

    Every JSON artifact embeds the hash of the configuration that produced it.
    Reading an artifact made with another configuration raises MixedConfig,
    unless the store was opened with force, in which case only a warning is
    logged.
    """
    logger = logging.getLogger(__name__)

    def __init__(self, **kwargs):
        """
        Create an instance of `ArtifactStore`.

        :param ArtifactStore store: Optional store to copy all parameters from, any additional parameters
        will override the values in this store
        :param string root: Directory of the store.
        :param string config_hash: Hash of the active configuration.
        :param boolean force: Accept artifacts made with another configuration.
        """

        # clone operator
        if 'store' in kwargs:
            store = kwargs.get('store')
            self.root = kwargs.get('root', store.root)
            self.config_hash = kwargs.get('config_hash', store.config_hash)
            self.force = kwargs.get('force', store.force)
        else:
            self.root = kwargs.get('root', 'store')
            self.config_hash = kwargs.get('config_hash', None)
            self.force = kwargs.get('force', False)

    def path(self, relpath):
        return os.path.join(self.root, *relpath.split('/'))

    def exists(self, relpath):
        return os.path.isfile(self.path(relpath))

    def write_text(self, relpath, text):
        """
        Write `text` to `relpath`, replacing the file in one step.

        :param string relpath: Path relative to the root of the store.
        :param string text: Content of the file.
        :return: the absolute filename.
        """
        filename = self.path(relpath)
        folder = os.path.dirname(filename)
        os.makedirs(folder, exist_ok=True)
        (fd, tmpname) = tempfile.mkstemp(".tmp", "dpe", folder)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as outputfile:
                outputfile.write(text)
            os.replace(tmpname, filename)
        except Exception:
            os.remove(tmpname)
            raise
        self.logger.debug("wrote %s", filename)
        return filename

    def read_text(self, stage, relpath):
        filename = self.path(relpath)
        if not os.path.isfile(filename):
            raise MissingArtifact(stage, relpath)
        with open(filename, "r", encoding="utf-8") as inputfile:
            return inputfile.read()

    def write_json(self, relpath, content):
        """
        Write `content` as canonical json with the configuration hash added.

        :param string relpath: Path relative to the root of the store.
        :param dict content: The artifact.
        :return: the absolute filename.
        """
        payload = dict(content)
        payload['config_hash'] = self.config_hash
        return self.write_text(relpath, dumps(payload))

    def read_json(self, stage, relpath):
        """
        Read a json artifact and check the configuration hash.

        :param string stage: Stage that writes the artifact, named in the error when it is missing.
        :param string relpath: Path relative to the root of the store.
        :return: the parsed artifact.
        :raises: `MissingArtifact`, `MixedConfig`
        """
        text = self.read_text(stage, relpath)
        try:
            content = json.loads(text)
        except ValueError as exc:
            raise DataError("%s is not valid json : %s" % (relpath, exc))
        found = content.get('config_hash')
        if self.config_hash is not None and found != self.config_hash:
            if not self.force:
                raise MixedConfig(relpath, self.config_hash, str(found))
            self.logger.warning("%s was produced by another configuration, continuing because of --force", relpath)
        return content

    def write_trip(self, trip):
        return self.write_text(TRIPS % (trip.vehicle_id, trip.trip_id), serialize_trip(trip))

    def read_trip(self, vehicle_id, trip_id, rate_hz, vehicle_class):
        relpath = TRIPS % (vehicle_id, trip_id)
        text = self.read_text('ingest', relpath)
        return parse_trip_file(text, vehicle_id=vehicle_id, trip_id=trip_id, rate_hz=rate_hz,
                               vehicle_class=vehicle_class)

"""Errors

All errors raised by dpeval derive from DpeError. Each class knows the exit
code the command line tool returns when the error reaches it:

* 2 : configuration or usage problems
* 3 : problems with the data or the artifact store
* 4 : numerical failures in the samplers or the divergence computation
"""


class DpeError(Exception):
    """Base class of all dpeval errors."""

    exit_code = 1


class ConfigError(DpeError, ValueError):
    """Invalid configuration or hyper-parameters."""

    exit_code = 2


class DataError(DpeError):
    """Input data or stored artifacts can not be used."""

    exit_code = 3


class NumericalError(DpeError):
    """A numerical routine could not produce a valid result."""

    exit_code = 4


class MalformedRow(DataError):
    def __init__(self, line, reason):
        super(MalformedRow, self).__init__("line %d: %s" % (line, reason))
        self.line = line


class NonMonotonicTime(DataError):
    def __init__(self, line, previous, current):
        super(NonMonotonicTime, self).__init__("line %d: time %r does not increase after %r" %
                                               (line, current, previous))
        self.line = line


class EmptyFile(DataError):
    pass


class ZeroVariance(DataError):
    def __init__(self, channel):
        super(ZeroVariance, self).__init__("channel %s has zero variance" % channel)
        self.channel = channel


class AlignmentError(DataError):
    pass


class InfeasibleConstraints(DataError):
    pass


class EmptyInput(DataError):
    pass


class MissingChannel(DataError):
    pass


class EmptyPrimitive(DataError):
    pass


class NonPositiveE(DataError):
    pass


class MissingArtifact(DataError):
    def __init__(self, stage, path):
        super(MissingArtifact, self).__init__("missing %s artifact %s, run `dpe %s` first" % (stage, path, stage))
        self.stage = stage
        self.path = path


class MixedConfig(DataError):
    def __init__(self, path, expected, found):
        super(MixedConfig, self).__init__("%s was produced by config %s, current config is %s (use --force)" %
                                          (path, found[:12], expected[:12]))
        self.path = path


class NumericalFailure(NumericalError):
    pass


class SingularCovariance(NumericalError):
    def __init__(self, what):
        super(SingularCovariance, self).__init__("covariance of %s is singular after flooring" % what)
        self.what = what

"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class TscRecError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(TscRecError, ValueError):
    pass


class DataError(TscRecError):
    """Malformed or inconsistent input data (maps to CLI exit code 2)."""


class CorpusLoadError(DataError):
    def __init__(self, message, rejects=()):
        super().__init__(message)
        self.rejects = list(rejects)


class FeatureFileError(DataError):
    pass


class MissingFeatureError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownEntityError(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class CheckpointError(DataError):
    pass


class IncompatibleCheckpointError(CheckpointError):
    pass


class ConfigurationError(TscRecError):
    pass


class TrainingDivergedError(TscRecError, RuntimeError):
    def __init__(self, message, epoch, batch, param_norms):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.param_norms = dict(param_norms)

class CandleDQNError(ValueError):
    """Base class for every error raised by candle_dqn."""

    exit_code = 1


# neural core

class DimensionError(CandleDQNError):
    pass


class RankError(CandleDQNError):
    pass


class DegenerateBatchError(CandleDQNError):
    pass


class InsufficientLengthError(CandleDQNError):
    exit_code = 3


class EmptyInputError(CandleDQNError):
    pass


class UnpopulatedGradientError(CandleDQNError):
    pass


class CheckpointFormatError(CandleDQNError):
    exit_code = 4


# market data

class DataError(CandleDQNError):
    exit_code = 3


class FormatError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class OrderingError(DataError):
    pass


class InvalidCandleError(DataError):
    pass


class DegenerateSplitError(DataError):
    pass


# environment / agent

class EpisodeFinishedError(CandleDQNError):
    pass


class AlignmentError(CandleDQNError):
    pass


class NotEnoughSamplesError(CandleDQNError):
    pass


class ConfigurationError(CandleDQNError):
    exit_code = 2


class CompatibilityError(CandleDQNError):
    exit_code = 4


# metrics

class DomainError(CandleDQNError):
    pass


class DegenerateSeriesError(CandleDQNError):
    pass


class UndefinedSharpeError(CandleDQNError):
    pass


class NumericalError(CandleDQNError):
    pass

"""Exception types. CLI exit codes hang off ``exit_code``."""


class FKControlError(Exception):
    exit_code = 1


class ParameterError(FKControlError, ValueError):
    exit_code = 2


class PreconditionError(FKControlError, ValueError):
    exit_code = 2


class DimensionError(FKControlError, ValueError):
    exit_code = 2


class ConfigError(FKControlError, ValueError):
    exit_code = 2


class FactorizationError(FKControlError, ValueError):
    exit_code = 2


class NumericalOverflowError(FKControlError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class RolloutDiverged(FKControlError):
    exit_code = 3

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class EstimationError(FKControlError):
    exit_code = 3

    def __init__(self, message, state_index=None):
        super().__init__(message)
        self.state_index = state_index


class PolicyEvaluationError(FKControlError):
    exit_code = 3


class OracleIntegrationError(FKControlError):
    exit_code = 3


class RangeError(FKControlError, ValueError):
    exit_code = 2


class MetadataMismatch(FKControlError):
    exit_code = 4


class TrainingDiverged(FKControlError):
    exit_code = 5

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch

"""
Exception hierarchy shared by the planner modules.
Planner outcomes (db-PIBT failure, NO_SOLUTION, TIMEOUT) are values, not exceptions.
"""


class DbLacamError(Exception):
    """Base class for every error raised by this package"""


class ContractViolation(DbLacamError, ValueError):
    """Caller broke a precondition: wrong dimensions, bad parameters, unsupported pair"""


class GenerationExhaustedError(DbLacamError):
    """Primitive generation could not reach the requested count"""


class CorruptPrimitiveFileError(DbLacamError):
    """Primitive file failed version, model or dynamics-residual checks"""


class InvalidGoalError(DbLacamError):
    """Goal state is in collision with the environment"""


class ScenarioError(DbLacamError):
    """Scenario file is malformed or violates scenario invariants"""


class SolutionFormatError(DbLacamError):
    """Solution file is malformed"""

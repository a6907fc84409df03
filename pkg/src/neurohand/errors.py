"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes (usage=2, parse=3, numeric=4, I/O=5).
"""


class NeurohandError(Exception):
    exit_code = 1


class InvalidArgument(NeurohandError, ValueError):
    exit_code = 2


class OutOfDomain(InvalidArgument):
    pass


class ParseError(NeurohandError, ValueError):
    """Malformed input file; ``offset`` is a byte offset, ``line`` a 1-based line number."""

    exit_code = 3

    def __init__(self, message, offset=None, line=None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} (at {', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class NumericError(NeurohandError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericError):
    """Raised when no start of an iterative solver converged; ``result`` holds the best found."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class SimulationDiverged(NumericError):
    def __init__(self, step):
        super().__init__(f"simulation diverged at step {step}")
        self.step = step

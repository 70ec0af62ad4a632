"""Base definition for saferrt components and the exceptions they raise."""

# Licensed under the MIT license.

import logging
from typing import Any, Sequence

import cvxpy as cp
from tenacity import Retrying, retry_if_exception, stop_after_attempt

from saferrt.constants import SDP_SOLVERS


class SafeRRTException(Exception):
    """All saferrt exceptions use this class."""

    message: str

    def __init__(self, message: str) -> None:
        """Create a new SafeRRTException

        :param message: A description of what went wrong
        """

        super().__init__(message)
        self.message = message

    def __str__(self) -> str:
        """Generate and return the string representation of the object.
        :return: A string representation of the object
        """
        return f"<type={type(self).__name__}, message={self.message}>"


class InvalidModelError(SafeRRTException):
    """A system description has non-finite entries or inconsistent dimensions."""


class InsufficientDataError(SafeRRTException):
    """Fewer samples were requested than the state and input dimensions require."""

    required: int
    provided: int

    def __init__(self, required: int, provided: int) -> None:
        super().__init__("Not enough samples to excite the system")
        self.required = required
        self.provided = provided

    def __str__(self) -> str:
        return (
            f"<type={type(self).__name__}, "
            + f"required={self.required}, "
            + f"provided={self.provided}>"
        )


class ExcitationError(SafeRRTException):
    """The stacked input/state data matrix does not have full row rank."""

    rank: int
    expected: int

    def __init__(self, rank: int, expected: int) -> None:
        super().__init__("Data record is not persistently exciting")
        self.rank = rank
        self.expected = expected

    def __str__(self) -> str:
        return f"<type={type(self).__name__}, rank={self.rank}, expected={self.expected}>"


class SingularSteadyStateError(SafeRRTException):
    """The data-driven steady-state map cannot be inverted."""

    condition: float

    def __init__(self, condition: float) -> None:
        super().__init__("Steady-state map is singular or ill conditioned")
        self.condition = condition

    def __str__(self) -> str:
        return f"<type={type(self).__name__}, condition={self.condition:.3e}>"


class CertificateError(SafeRRTException):
    """A certificate problem was posed with invalid inputs."""


class TreeError(SafeRRTException):
    """A search tree has a broken parent chain or a vertex without its certificate."""


class GridError(SafeRRTException):
    """A workspace query was made with invalid cells or geometry."""


class NoPathError(SafeRRTException):
    """The planner could not connect the start to the goal."""

    iterations: int

    def __init__(self, message: str, iterations: int) -> None:
        super().__init__(message)
        self.iterations = iterations

    def __str__(self) -> str:
        return (
            f"<type={type(self).__name__}, "
            + f"message={self.message}, "
            + f"iterations={self.iterations}>"
        )


class PartialPlanError(SafeRRTException):
    """The multi-agent planner ran out of layers before every agent reached its goal."""

    unfinished: list[int]
    layers: int

    def __init__(self, unfinished: list[int], layers: int) -> None:
        super().__init__("Layer budget exhausted")
        self.unfinished = unfinished
        self.layers = layers

    def __str__(self) -> str:
        return (
            f"<type={type(self).__name__}, "
            + f"unfinished={self.unfinished}, "
            + f"layers={self.layers}>"
        )


class ExecutionError(SafeRRTException):
    """Execution stopped before the goal; the partial trace is attached."""

    trace: Any

    def __init__(self, message: str, trace: Any) -> None:
        super().__init__(message)
        self.trace = trace

    def __str__(self) -> str:
        return (
            f"<type={type(self).__name__}, "
            + f"message={self.message}, "
            + f"steps={len(self.trace.outputs)}>"
        )


class ExecutionTimeoutError(ExecutionError):
    """The step budget ran out before the goal was reached."""


class SafetyViolationError(ExecutionError):
    """The output left the active certified ellipsoid and aborting was requested."""


class ScenarioError(SafeRRTException):
    """A scenario document failed validation."""

    field: str | None

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field

    def __str__(self) -> str:
        return f"<type={type(self).__name__}, field={self.field}, message={self.message}>"


class ArtifactError(SafeRRTException):
    """A run artifact is missing data or has an unsupported schema."""


class RiccatiError(SafeRRTException):
    """The Riccati recursion did not converge."""

    iterations: int

    def __init__(self, iterations: int) -> None:
        super().__init__("Riccati recursion did not converge")
        self.iterations = iterations

    def __str__(self) -> str:
        return f"<type={type(self).__name__}, iterations={self.iterations}>"


class RetryableSolveError(SafeRRTException):
    """The backend finished without a usable status."""

    status: str | None

    def __init__(self, status: str | None) -> None:
        super().__init__("Solver returned an unusable status")
        self.status = status

    def __str__(self) -> str:
        return f"<type={type(self).__name__}, status={self.status}>"


_USABLE_STATUSES = {
    cp.OPTIMAL,
    cp.OPTIMAL_INACCURATE,
    cp.INFEASIBLE,
    cp.UNBOUNDED,
}


def _is_solver_failure(exception: BaseException) -> bool:
    return isinstance(exception, (cp.error.SolverError, RetryableSolveError))


class SafeRRTDerivedComponent:
    """Base definition for saferrt components.

    :param name: The name of the derived component
    :param parent_logger: The parent logger that we will use for our own logging
    :param solvers: The conic backends to try, in order
    """

    log: logging.Logger
    solvers: tuple[str, ...]

    def __init__(
        self,
        name: str,
        parent_logger: logging.Logger,
        solvers: Sequence[str] = SDP_SOLVERS,
    ) -> None:
        self.log = parent_logger.getChild(name)
        self.solvers = tuple(solvers)

    def solve_problem(self, problem: cp.Problem) -> str:
        """Solve a conic problem, falling through the configured backends on failure.

        :param problem: The problem to solve

        :returns: The final cvxpy status string

        :raises cvxpy.error.SolverError: If every backend failed
        :raises RetryableSolveError: If every backend returned an unusable status
        """

        for attempt in Retrying(
            retry=retry_if_exception(_is_solver_failure),
            stop=stop_after_attempt(len(self.solvers)),
            reraise=True,
        ):
            with attempt:
                solver = self.solvers[attempt.retry_state.attempt_number - 1]
                self.log.debug(
                    f"Solving with {solver} (attempt {attempt.retry_state.attempt_number})"
                )
                problem.solve(solver=solver)
                if problem.status not in _USABLE_STATUSES:
                    raise RetryableSolveError(problem.status)

        return str(problem.status)

"""LQR waypoint tracking over certified paths, for comparison with the certified gains."""

# Licensed under the MIT license.

import logging
from typing import Sequence

import numpy as np
import scipy.linalg

from saferrt.constants import (
    DARE_MAX_ITERATIONS,
    DARE_TOLERANCE,
    LQR_INPUT_WEIGHT,
    LQR_STATE_WEIGHTS,
)
from saferrt.data import realization
from saferrt.derived_component import InvalidModelError, RiccatiError, SafeRRTDerivedComponent
from saferrt.executor import FleetExecution, SafeRRTExecutorClient, violation_stats
from saferrt.models import (
    CertifiedPath,
    DataRecord,
    ExecParams,
    LqrWeights,
    LtiModel,
    ViolationStats,
)


def default_weights() -> LqrWeights:
    """Q = diag(1, 1, 0.1, 0.1), R = 10 I."""
    return LqrWeights(np.diag(LQR_STATE_WEIGHTS), LQR_INPUT_WEIGHT * np.eye(2))


def riccati_residual(
    A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray
) -> float:
    """Frobenius norm of the discrete Riccati equation evaluated at P."""
    gain_term = A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return float(np.linalg.norm(Q + A.T @ P @ A - gain_term - P))


def _iterate(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    P = Q.copy()
    for _ in range(DARE_MAX_ITERATIONS):
        gain_term = A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        following = Q + A.T @ P @ A - gain_term
        following = (following + following.T) / 2
        if np.linalg.norm(following - P) <= DARE_TOLERANCE * max(1.0, float(np.linalg.norm(P))):
            return following
        P = following
    raise RiccatiError(DARE_MAX_ITERATIONS)


def dare_solve(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    scipy's Schur-based solver is used first; when it fails or its residual is too large the
    Riccati recursion is iterated from Q to a fixed point.

    :param A: The state matrix
    :param B: The input matrix
    :param Q: The state weight (positive semidefinite)
    :param R: The input weight (positive definite)

    :returns: The symmetric positive semidefinite solution

    :raises InvalidModelError: If R is not positive definite
    :raises RiccatiError: If the recursion does not converge
    """

    try:
        np.linalg.cholesky(R)
    except np.linalg.LinAlgError as ex:
        raise InvalidModelError("Input weight must be positive definite") from ex

    try:
        P = scipy.linalg.solve_discrete_are(A, B, Q, R)
        P = (P + P.T) / 2
        if riccati_residual(A, B, Q, R, P) <= 1e-8 * max(1.0, float(np.linalg.norm(P))):
            return P
    except (np.linalg.LinAlgError, ValueError):
        pass

    return _iterate(A, B, Q, R)


def lqr_gain(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Infinite-horizon gain -(R + B^T P B)^-1 B^T P A, for the law u = K x.

    :param A: The state matrix
    :param B: The input matrix
    :param Q: The state weight
    :param R: The input weight

    :returns: The gain (m x n)
    """
    P = dare_solve(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


class BaselineRun:
    """LQR traces over certified paths.

    :param fleet: The lockstep execution
    :param gains: The LQR gain used by each agent
    :param stats: Violation statistics per agent
    """

    fleet: FleetExecution
    gains: list[np.ndarray]
    stats: list[ViolationStats]

    def __init__(
        self, fleet: FleetExecution, gains: list[np.ndarray], stats: list[ViolationStats]
    ) -> None:
        self.fleet = fleet
        self.gains = gains
        self.stats = stats


class SafeRRTBaselineClient(SafeRRTDerivedComponent):
    """Executes certified paths with one LQR gain in place of the per-edge gains.

    :param parent_logger: The parent logger that we will use for our own logging
    :param executor: The executor whose stepping, handoff and monitoring are reused
    """

    executor: SafeRRTExecutorClient

    def __init__(self, parent_logger: logging.Logger, executor: SafeRRTExecutorClient) -> None:
        super().__init__("baseline", parent_logger)
        self.executor = executor

    def data_gain(self, rec: DataRecord, weights: LqrWeights) -> np.ndarray:
        """LQR gain for the open loop reconstructed from data.

        :param rec: The agent's data record
        :param weights: The LQR weights

        :returns: The gain
        """
        A, B, _ = realization(rec)
        K = lqr_gain(A, B, weights.Q, weights.R)
        radius = float(np.max(np.abs(np.linalg.eigvals(A + B @ K))))
        self.log.debug(f"LQR closed-loop spectral radius {radius:.4f}")
        return K

    # pylint: disable=too-many-arguments
    def execute_lqr_baseline(
        self,
        models: Sequence[LtiModel],
        paths: Sequence[CertifiedPath],
        T_hats: Sequence[np.ndarray],
        x0s: Sequence[np.ndarray],
        params: ExecParams | Sequence[ExecParams],
        *,
        recs: Sequence[DataRecord],
        weights: LqrWeights | None = None,
    ) -> BaselineRun:
        """Run the same paths, steady states and monitors as the certified execution.

        Only the gain differs: every segment of an agent uses that agent's LQR gain.

        :param models: The simulated agents
        :param paths: Their certified paths
        :param T_hats: Their steady-state maps
        :param x0s: Their initial states
        :param params: Execution parameters, shared or one per agent
        :param recs: Their data records, from which the LQR gains are computed
        :param weights: The LQR weights (Q = diag(1, 1, 0.1, 0.1), R = 10 I when omitted)

        :returns: The traces, gains and per-agent violation statistics
        """

        weights = weights if weights is not None else default_weights()
        self.log.info(f"Executing LQR baseline over {len(paths)} paths")

        gains = [self.data_gain(rec, weights) for rec in recs]
        fleet = self.executor.run_fleet(models, paths, T_hats, x0s, params, gains)
        stats = [violation_stats(trace, path) for trace, path in zip(fleet.traces, paths)]

        for agent, agent_stats in enumerate(stats):
            self.log.info(f"Agent {agent}: LQR violations in {agent_stats.percent}% of segments")

        return BaselineRun(fleet, gains, stats)

    # pylint: enable=too-many-arguments

"""Trajectory data: collection, excitation checks and the data-driven factorization."""

# Licensed under the MIT license.

import logging
import os

import numpy as np
import pandas as pd

from saferrt.constants import (
    CSV_FLOAT_FORMAT,
    RANK_THRESHOLD_FACTOR,
    STEADY_STATE_MAX_CONDITION,
    STEADY_STATE_RESIDUAL,
)
from saferrt.derived_component import (
    ArtifactError,
    ExcitationError,
    InsufficientDataError,
    InvalidModelError,
    SafeRRTDerivedComponent,
    SingularSteadyStateError,
)
from saferrt.lti import step
from saferrt.models import DataRecord, LtiModel, SteadyStatePair

RECORD_MATRICES = ("U0", "X0", "X1", "Y0")


def split_g(G: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Split G into G1 (first n columns) and G2 (the remaining m)."""
    return G[:, :n], G[:, n:]


def realization(rec: DataRecord) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Open-loop matrices reconstructed from data alone.

    :param rec: A persistently exciting record

    :returns: (X1 (I - G2 U0) G1, X1 G2, Y0 G1), equal to (A, B, C) for noise-free data
    """
    G = np.linalg.pinv(rec.stacked) @ _factor_rhs(np.zeros((rec.m, rec.n)), rec.n, rec.m)
    G1, G2 = split_g(G, rec.n)
    A = rec.X1 @ (np.eye(rec.N) - G2 @ rec.U0) @ G1
    return A, rec.X1 @ G2, rec.Y0 @ G1


def _factor_rhs(K: np.ndarray, n: int, m: int) -> np.ndarray:
    return np.block([[K, np.eye(m)], [np.eye(n), np.zeros((n, m))]])


class SafeRRTDataClient(SafeRRTDerivedComponent):
    """Collects experiments and derives everything the planner needs from them.

    :param parent_logger: The parent logger that we will use for our own logging
    """

    def __init__(self, parent_logger: logging.Logger) -> None:
        super().__init__("data", parent_logger)

    # pylint: disable=invalid-name
    def collect_trajectory(
        self,
        model: LtiModel,
        *,
        x0: np.ndarray,
        N: int,
        rng: np.random.Generator,
        amplitude: float,
    ) -> DataRecord:
        """Excite the model with uniform random inputs and record the data matrices.

        :param model: The simulated system
        :param x0: The initial state
        :param N: The number of samples
        :param rng: The random generator for the inputs
        :param amplitude: Inputs are drawn uniformly from [-amplitude, amplitude]

        :returns: The data record

        :raises InsufficientDataError: If N < m + n
        """

        self.log.info(f"Collecting {N} samples (amplitude={amplitude})")

        required = model.m + model.n

        if N < required:
            raise InsufficientDataError(required, N)

        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (model.n,):
            raise InvalidModelError(f"Initial state must have shape ({model.n},), got {x0.shape}")

        U0 = rng.uniform(-amplitude, amplitude, size=(model.m, N))
        states = np.zeros((model.n, N + 1))
        states[:, 0] = x0

        for j in range(N):
            states[:, j + 1] = step(model, states[:, j], U0[:, j])

        X0 = states[:, :N]
        return DataRecord(U0, X0, states[:, 1:], model.C @ X0)

    # pylint: enable=invalid-name

    def excitation_rank(self, rec: DataRecord) -> tuple[int, bool]:
        """Numerical rank of [U0; X0] and whether it is full row rank.

        :param rec: The data record

        :returns: (rank, persistently exciting)
        """

        stacked = rec.stacked
        singular_values = np.linalg.svd(stacked, compute_uv=False)

        if singular_values.size == 0 or singular_values[0] == 0:
            return 0, False

        threshold = max(stacked.shape) * singular_values[0] * RANK_THRESHOLD_FACTOR
        rank = int(np.sum(singular_values > threshold))
        expected = rec.m + rec.n

        self.log.debug(f"Excitation rank {rank}/{expected}")
        return rank, rank == expected

    def _require_excitation(self, rec: DataRecord) -> None:
        rank, excited = self.excitation_rank(rec)
        if not excited:
            raise ExcitationError(rank, rec.m + rec.n)

    # pylint: disable=invalid-name
    def right_inverse_g(self, rec: DataRecord, K: np.ndarray) -> np.ndarray:
        """Minimum-norm G with [U0; X0] G = [[K, I_m], [I_n, 0]].

        :param rec: A persistently exciting record
        :param K: A state-feedback gain (m x n)

        :returns: G (N x (n + m)); the first n columns are G1, the last m are G2

        :raises ExcitationError: If the record is not persistently exciting
        """

        self._require_excitation(rec)

        K = np.asarray(K, dtype=float)
        if K.shape != (rec.m, rec.n):
            raise InvalidModelError(f"Gain must have shape ({rec.m}, {rec.n}), got {K.shape}")

        return np.linalg.pinv(rec.stacked) @ _factor_rhs(K, rec.n, rec.m)

    # pylint: enable=invalid-name

    def steady_state_map(self, rec: DataRecord) -> np.ndarray:
        """Data form of [[A - I, B], [C, 0]].

        :param rec: A persistently exciting record

        :returns: T_hat ((n + 2) x (n + m))

        :raises ExcitationError: If the record is not persistently exciting
        :raises SingularSteadyStateError: If T_hat is not square or is ill conditioned
        """

        self.log.info(f"Building steady-state map from {rec.N} samples")

        G = self.right_inverse_g(rec, np.zeros((rec.m, rec.n)))
        G1, G2 = split_g(G, rec.n)

        top_left = rec.X1 @ (np.eye(rec.N) - G2 @ rec.U0) @ G1 - np.eye(rec.n)
        outputs = rec.Y0.shape[0]

        T_hat = np.block(
            [
                [top_left, rec.X1 @ G2],
                [rec.Y0 @ G1, np.zeros((outputs, rec.m))],
            ]
        )

        if T_hat.shape[0] != T_hat.shape[1]:
            raise SingularSteadyStateError(float("inf"))

        condition = float(np.linalg.cond(T_hat))

        if not condition < STEADY_STATE_MAX_CONDITION:
            raise SingularSteadyStateError(condition)

        return T_hat

    def steady_state(self, T_hat: np.ndarray, r: np.ndarray) -> SteadyStatePair:
        """Solve T_hat [x_bar; u_bar] = [0; r].

        :param T_hat: The steady-state map
        :param r: The output reference

        :returns: The steady-state pair

        :raises SingularSteadyStateError: If T_hat is ill conditioned or the output residual is
            large
        """

        r = np.asarray(r, dtype=float)
        outputs = r.shape[0]
        n = T_hat.shape[0] - outputs

        condition = float(np.linalg.cond(T_hat))
        if not condition < STEADY_STATE_MAX_CONDITION:
            raise SingularSteadyStateError(condition)

        solution = np.linalg.solve(T_hat, np.concatenate([np.zeros(n), r]))
        x_bar, u_bar = solution[:n], solution[n:]

        residual = float(np.linalg.norm(T_hat[n:, :n] @ x_bar - r))
        if residual > STEADY_STATE_RESIDUAL * max(1.0, float(np.linalg.norm(r))):
            raise SingularSteadyStateError(condition)

        return SteadyStatePair(x_bar, u_bar, r)

    def save_record(self, rec: DataRecord, directory: str) -> None:
        """Write the record as one CSV file per matrix.

        :param rec: The record to save
        :param directory: The destination directory (created if needed)
        """

        self.log.info(f"Saving data record to {directory}")
        os.makedirs(directory, exist_ok=True)

        for name in RECORD_MATRICES:
            pd.DataFrame(getattr(rec, name)).to_csv(
                os.path.join(directory, f"{name}.csv"),
                header=False,
                index=False,
                float_format=CSV_FLOAT_FORMAT,
            )

    def load_record(self, directory: str) -> DataRecord:
        """Read a record written by save_record.

        :param directory: The directory holding U0.csv, X0.csv, X1.csv and Y0.csv

        :returns: The data record

        :raises ArtifactError: If a matrix file is missing or the shapes disagree
        """

        self.log.info(f"Loading data record from {directory}")

        matrices = {}

        for name in RECORD_MATRICES:
            path = os.path.join(directory, f"{name}.csv")
            if not os.path.exists(path):
                raise ArtifactError(f"Missing {path}")
            matrices[name] = pd.read_csv(path, header=None).to_numpy(dtype=float)

        rec = DataRecord(**matrices)

        if len({matrix.shape[1] for matrix in matrices.values()}) != 1:
            raise ArtifactError(f"Column counts differ in {directory}")

        if rec.X1.shape[0] != rec.n:
            raise ArtifactError(f"X0 and X1 row counts differ in {directory}")

        return rec

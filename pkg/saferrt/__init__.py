#!/usr/bin/env python3

# Licensed under the MIT license.

"""Data-driven certified rapidly-exploring random trees for one or many agents."""

import logging
from typing import Sequence

from saferrt.baseline import SafeRRTBaselineClient
from saferrt.certificates import SafeRRTCertificatesClient
from saferrt.constants import SDP_SOLVERS
from saferrt.data import SafeRRTDataClient
from saferrt.derived_component import (
    ArtifactError,
    CertificateError,
    ExcitationError,
    ExecutionError,
    ExecutionTimeoutError,
    GridError,
    InsufficientDataError,
    InvalidModelError,
    NoPathError,
    PartialPlanError,
    RiccatiError,
    SafeRRTException,
    SafetyViolationError,
    ScenarioError,
    SingularSteadyStateError,
    TreeError,
)
from saferrt.executor import SafeRRTExecutorClient
from saferrt.harness import SafeRRTHarnessClient
from saferrt.models import (
    Cell,
    Certificate,
    CertificateOutcome,
    CertificateResult,
    CertifiedPath,
    DataRecord,
    ExecParams,
    ExecutionOutcome,
    ExecutionTrace,
    GridWorld,
    LqrWeights,
    LtiModel,
    Obstacle,
    OutputEllipsoid,
    PlannerParams,
    Polytope,
    RunArtifact,
    ViolationStats,
)
from saferrt.planner import SafeRRTPlannerClient

# pylint: disable=too-many-instance-attributes


class SafeRRTClient:
    """Entry point wiring every saferrt component to one logger.

    :param parent_logger: The logger to hang our own logger from. Leave as None for "saferrt"
    :param solvers: The conic backends to try, in order
    """

    log: logging.Logger

    data: SafeRRTDataClient
    certificates: SafeRRTCertificatesClient
    planner: SafeRRTPlannerClient
    executor: SafeRRTExecutorClient
    baseline: SafeRRTBaselineClient
    harness: SafeRRTHarnessClient

    def __init__(
        self,
        *,
        parent_logger: logging.Logger | None = None,
        solvers: Sequence[str] = SDP_SOLVERS,
    ) -> None:
        """Initialize the SafeRRTClient with its components."""

        if parent_logger is None:
            self.log = logging.getLogger("saferrt")
        else:
            self.log = parent_logger.getChild("saferrt")

        self.data = SafeRRTDataClient(self.log)
        self.certificates = SafeRRTCertificatesClient(self.log, solvers)
        self.planner = SafeRRTPlannerClient(self.log, self.data, self.certificates)
        self.executor = SafeRRTExecutorClient(self.log, self.data)
        self.baseline = SafeRRTBaselineClient(self.log, self.executor)
        self.harness = SafeRRTHarnessClient(
            self.log, self.data, self.planner, self.executor, self.baseline
        )


# pylint: enable=too-many-instance-attributes

__all__ = [
    "ArtifactError",
    "Cell",
    "Certificate",
    "CertificateError",
    "CertificateOutcome",
    "CertificateResult",
    "CertifiedPath",
    "DataRecord",
    "ExcitationError",
    "ExecParams",
    "ExecutionError",
    "ExecutionOutcome",
    "ExecutionTimeoutError",
    "ExecutionTrace",
    "GridError",
    "GridWorld",
    "InsufficientDataError",
    "InvalidModelError",
    "LqrWeights",
    "LtiModel",
    "NoPathError",
    "Obstacle",
    "OutputEllipsoid",
    "PartialPlanError",
    "PlannerParams",
    "Polytope",
    "RiccatiError",
    "RunArtifact",
    "SafeRRTClient",
    "SafeRRTException",
    "SafetyViolationError",
    "ScenarioError",
    "SingularSteadyStateError",
    "TreeError",
    "ViolationStats",
]

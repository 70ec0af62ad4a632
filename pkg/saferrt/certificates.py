"""Contractive ellipsoid certificates: the semidefinite program, polishing and verification."""

# Licensed under the MIT license.

import logging
from typing import Sequence

import cvxpy as cp
import numpy as np

from saferrt.constants import SDP_SOLVERS, SOLVER_CONTRACTION_MARGIN, VERIFY_TOLERANCE
from saferrt.derived_component import (
    CertificateError,
    RetryableSolveError,
    SafeRRTDerivedComponent,
)
from saferrt.models import (
    Certificate,
    CertificateOutcome,
    CertificateResult,
    DataRecord,
    OutputEllipsoid,
    Polytope,
    VerificationReport,
)


def _symmetric(expression: cp.Expression) -> cp.Expression:
    return (expression + expression.T) / 2


class CertificateProblem:
    """A posed certificate problem together with its decision variables.

    :param problem: The cvxpy problem
    :param P: The ellipsoid shape variable
    :param S: The lifted variable
    :param G2: The input selector variable
    :param facet_blocks: One 3-block PSD expression per facet
    """

    problem: cp.Problem
    P: cp.Variable
    S: cp.Variable
    G2: cp.Variable
    facet_blocks: list[cp.Expression]

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        problem: cp.Problem,
        P: cp.Variable,
        S: cp.Variable,
        G2: cp.Variable,
        facet_blocks: list[cp.Expression],
    ) -> None:
        self.problem = problem
        self.P = P
        self.S = S
        self.G2 = G2
        self.facet_blocks = facet_blocks

    # pylint: enable=too-many-arguments

    @property
    def decision_count(self) -> int:
        """Scalar decisions, counting the symmetric P once per unordered pair."""
        n = self.P.shape[0]
        return n * (n + 1) // 2 + self.S.size + self.G2.size


class SafeRRTCertificatesClient(SafeRRTDerivedComponent):
    """Poses and solves certificate problems for local admissible sets.

    :param parent_logger: The parent logger that we will use for our own logging
    :param solvers: The conic backends to try, in order
    """

    def __init__(self, parent_logger: logging.Logger, solvers: Sequence[str] = SDP_SOLVERS) -> None:
        super().__init__("certificates", parent_logger, solvers)

    def build_sdp(self, rec: DataRecord, poly: Polytope, contraction: float) -> CertificateProblem:
        """Pose the log-det maximization over (P, S, G2).

        :param rec: A persistently exciting data record
        :param poly: The admissible set in error coordinates
        :param contraction: The contraction factor, strictly between 0 and 1

        :returns: The posed problem

        :raises CertificateError: On a bad contraction factor, polytope or dimensions
        """

        if not 0 < contraction < 1:
            raise CertificateError(f"Contraction must lie in (0, 1), got {contraction}")

        if poly.F.shape[1] != rec.n:
            raise CertificateError(f"Polytope acts on {poly.F.shape[1]} states, data has {rec.n}")

        if poly.g.shape[0] != poly.q or np.any(poly.g <= 0):
            raise CertificateError("Polytope offsets must be strictly positive")

        if np.any(np.linalg.norm(poly.F, axis=1) == 0):
            raise CertificateError("Polytope has a zero facet normal")

        n, m, N = rec.n, rec.m, rec.N

        P = cp.Variable((n, n), symmetric=True)
        S = cp.Variable((N, n))
        G2 = cp.Variable((N, m))

        X1S = rec.X1 @ S
        constraints = [_symmetric(cp.bmat([[P, X1S], [X1S.T, contraction * P]])) >> 0]

        facet_blocks = []
        for row, offset in zip(poly.F, poly.g):
            PF = P @ row.reshape(n, 1)
            block = _symmetric(cp.bmat([[P, PF], [PF.T, np.array([[offset**2]])]]))
            facet_blocks.append(block)
            constraints.append(block >> 0)

        constraints += [
            rec.X0 @ S == P,
            rec.X0 @ G2 == 0,
            rec.U0 @ G2 == np.eye(m),
        ]

        problem = cp.Problem(cp.Maximize(cp.log_det(P)), constraints)
        return CertificateProblem(problem, P, S, G2, facet_blocks)

    # pylint: disable=too-many-arguments
    def solve_certificate(
        self,
        rec: DataRecord,
        poly: Polytope,
        contraction: float,
        center_state: np.ndarray,
        center_output: np.ndarray,
    ) -> CertificateResult:
        """Find and verify the largest contractive ellipsoid inside a polytope.

        The problem is posed with a slightly smaller contraction factor than requested so the
        polished certificate verifies at the requested one.

        :param rec: A persistently exciting data record
        :param poly: The admissible set in error coordinates
        :param contraction: The contraction factor to certify
        :param center_state: The steady state the error coordinates are centered on
        :param center_output: The output of that steady state

        :returns: The outcome, with a verified certificate only when FEASIBLE

        :raises CertificateError: On a bad contraction factor, polytope or dimensions
        """

        if not 0 < contraction < 1:
            raise CertificateError(f"Contraction must lie in (0, 1), got {contraction}")

        self.log.debug(f"Solving certificate around {center_output} with {poly.q} facets")

        posed_contraction = max(contraction - SOLVER_CONTRACTION_MARGIN, contraction / 2)
        posed = self.build_sdp(rec, poly, posed_contraction)

        try:
            status = self.solve_problem(posed.problem)
        except (cp.error.SolverError, RetryableSolveError) as ex:
            self.log.warning(f"Every solver failed around {center_output}: {ex}")
            return CertificateResult(CertificateOutcome.SOLVER_ERROR)

        if status in (cp.INFEASIBLE, cp.UNBOUNDED):
            self.log.debug(f"Certificate problem is {status}")
            return CertificateResult(CertificateOutcome.INFEASIBLE)

        if posed.S.value is None:
            self.log.warning(f"Solver reported {status} without a solution")
            return CertificateResult(CertificateOutcome.SOLVER_ERROR)

        try:
            certificate = polish(
                rec,
                posed.S.value,
                poly=poly,
                contraction=contraction,
                center_state=center_state,
                center_output=center_output,
            )
        except np.linalg.LinAlgError as ex:
            self.log.warning(f"Certificate polishing failed: {ex}")
            return CertificateResult(CertificateOutcome.UNVERIFIED)

        report = verify_certificate(certificate, rec)

        if not report.passed:
            self.log.warning(f"Certificate failed verification: {report}")
            return CertificateResult(CertificateOutcome.UNVERIFIED, report=report)

        return CertificateResult(CertificateOutcome.FEASIBLE, certificate, report)

    # pylint: enable=too-many-arguments


# pylint: disable=too-many-arguments
def polish(
    rec: DataRecord,
    S_value: np.ndarray,
    *,
    poly: Polytope,
    contraction: float,
    center_state: np.ndarray,
    center_output: np.ndarray,
) -> Certificate:
    """Turn a solver S into a certificate that satisfies the equalities and facets exactly.

    P is rebuilt from X0 S, S and G2 are projected onto the equality constraints and (P, S)
    are shrunk together until every facet holds. The contraction inequality is homogeneous
    in (P, S), so shrinking keeps it and leaves the gain unchanged.

    :param rec: The data record
    :param S_value: The solver's lifted variable
    :param poly: The admissible set
    :param contraction: The certified contraction factor
    :param center_state: The steady state of the center
    :param center_output: The output of the center

    :returns: The polished certificate

    :raises numpy.linalg.LinAlgError: If P is singular
    """

    pseudo_inverse = np.linalg.pinv(rec.stacked)

    P = rec.X0 @ S_value
    P = (P + P.T) / 2
    S = pseudo_inverse @ np.vstack([rec.U0 @ S_value, P])
    G2 = pseudo_inverse @ np.vstack([np.eye(rec.m), np.zeros((rec.n, rec.m))])

    support = np.einsum("ij,jk,ik->i", poly.F, P, poly.F)
    positive = support > 0
    if np.any(positive):
        scale = min(1.0, float(np.min(poly.g[positive] ** 2 / support[positive])))
        P = scale * P
        S = scale * S

    K = np.linalg.solve(P, (rec.U0 @ S).T).T

    return Certificate(
        P=P,
        S=S,
        K=K,
        G2=G2,
        contraction=contraction,
        center_state=center_state,
        center_output=center_output,
        polytope=poly,
    )


# pylint: enable=too-many-arguments


def closed_loop_matrix(cert: Certificate, rec: DataRecord) -> np.ndarray:
    """Data form X1 S P^-1 of the closed loop A + B K."""
    return np.linalg.solve(cert.P.T, (rec.X1 @ cert.S).T).T


def verify_certificate(
    cert: Certificate, rec: DataRecord, eps: float = VERIFY_TOLERANCE
) -> VerificationReport:
    """Check a certificate against the data without trusting any solver output.

    :param cert: The certificate to check
    :param rec: The data record it was computed from
    :param eps: The base tolerance

    :returns: The report; its passed flag is the acceptance decision
    """

    P = cert.P
    n = P.shape[0]

    state_residual = float(np.linalg.norm(rec.X0 @ cert.S - P))
    lift_residual = float(np.linalg.norm(rec.X0 @ cert.G2))
    input_residual = float(np.linalg.norm(rec.U0 @ cert.G2 - np.eye(rec.m)))

    slack = np.einsum("ij,jk,ik->i", cert.polytope.F, P, cert.polytope.F) - cert.polytope.g**2
    facet_ok = bool(np.all(slack <= eps * np.maximum(1.0, cert.polytope.g**2)))
    max_facet_slack = float(np.max(slack)) if slack.size else float("-inf")

    symmetric = np.allclose(P, P.T, atol=eps * max(1.0, float(np.abs(P).max())))
    floor = -eps * float(np.trace(P)) / n

    try:
        np.linalg.cholesky((P + P.T) / 2)
        X1S = rec.X1 @ cert.S
        schur = cert.contraction * P - X1S.T @ np.linalg.solve(P, X1S)
        min_eigenvalue = float(np.min(np.linalg.eigvalsh((schur + schur.T) / 2)))
        definite = True
    except np.linalg.LinAlgError:
        min_eigenvalue = float("-inf")
        definite = False

    passed = (
        definite
        and symmetric
        and min_eigenvalue >= floor
        and facet_ok
        and state_residual <= eps * max(1.0, float(np.linalg.norm(P)))
        and lift_residual <= eps
        and input_residual <= eps
    )

    return VerificationReport(
        min_contraction_eigenvalue=min_eigenvalue,
        contraction_floor=floor,
        max_facet_slack=max_facet_slack,
        state_residual=state_residual,
        lift_residual=lift_residual,
        input_residual=input_residual,
        passed=bool(passed),
    )


def sampled_invariance_check(
    cert: Certificate, rec: DataRecord, samples: int, rng: np.random.Generator
) -> float:
    """Worst one-step growth of e^T P^-1 e over random boundary points.

    :param cert: A verified certificate
    :param rec: Its data record
    :param samples: The number of boundary points
    :param rng: The random generator

    :returns: The largest (e+)^T P^-1 e+ found, at most the contraction factor up to roundoff
    """

    if samples <= 0:
        return 0.0

    n = cert.P.shape[0]
    factor = np.linalg.cholesky(cert.P)
    directions = rng.normal(size=(n, samples))
    boundary = factor @ (directions / np.linalg.norm(directions, axis=0))
    successors = closed_loop_matrix(cert, rec) @ boundary
    ratios = np.sum(successors * np.linalg.solve(cert.P, successors), axis=0)
    return float(np.max(ratios))


def project_ellipsoid(cert: Certificate, C: np.ndarray) -> OutputEllipsoid:
    """Output ellipsoid with precision C P^-1 C^T around the certificate's output center.

    :param cert: The certificate
    :param C: The output matrix

    :returns: The projected ellipsoid

    :raises CertificateError: If the projection is singular
    """

    precision = C @ np.linalg.solve(cert.P, C.T)
    precision = (precision + precision.T) / 2

    try:
        np.linalg.cholesky(precision)
        Pproj = np.linalg.inv(precision)
    except np.linalg.LinAlgError as ex:
        raise CertificateError("Projected ellipsoid is singular") from ex

    return OutputEllipsoid((Pproj + Pproj.T) / 2, cert.center_output)


def contains(ellipsoid: OutputEllipsoid, y: np.ndarray) -> bool:
    """Whether a point lies in the closed ellipsoid."""
    return ellipsoid.value(y) <= 1.0

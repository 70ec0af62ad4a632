"""Data type models"""

# Licensed under the MIT license.

import enum
from typing import Any, NamedTuple

import deserialize
import numpy as np


def matrix_json(value: np.ndarray | None) -> Any:
    """Convert an array into nested lists for JSON output.

    Python floats serialize with round-trip precision, so no digits are lost.

    :param value: The array to convert

    :returns: Nested lists (or None)
    """
    if value is None:
        return None
    return np.asarray(value, dtype=float).tolist()


def as_matrix(value: Any) -> np.ndarray:
    """Parse nested lists into a float array.

    :param value: The raw value

    :returns: A float array
    """
    return np.asarray(value, dtype=float)


def matrix_field(value: Any) -> np.ndarray | None:
    """Parse a stored matrix, keeping None so that missing values are reported as such.

    :param value: The raw value

    :returns: A float array (or None)

    :raises DeserializeException: If the value is not a rectangular array of numbers
    """
    if value is None:
        return None
    try:
        return as_matrix(value)
    except (TypeError, ValueError) as ex:
        raise deserialize.DeserializeException("Not a rectangular array of numbers") from ex


def number_field(value: Any) -> Any:
    """Promote JSON integers to floats; anything else is left for type checking."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


# pylint: disable=missing-docstring


class Cell(NamedTuple):
    row: int  # index along y, 0 at the bottom
    col: int  # index along x, 0 at the left

    def json(self) -> list[int]:
        return [self.row, self.col]


class Obstacle:
    center: tuple[float, float]
    half_width: float

    def __init__(self, center: tuple[float, float], half_width: float) -> None:
        self.center = (float(center[0]), float(center[1]))
        self.half_width = float(half_width)

    def json(self) -> dict[str, Any]:
        return {"center": list(self.center), "half_width": self.half_width}


class ContinuousModel:
    Ac: np.ndarray
    Bc: np.ndarray
    C: np.ndarray

    def __init__(self, Ac: np.ndarray, Bc: np.ndarray, C: np.ndarray) -> None:
        self.Ac = np.asarray(Ac, dtype=float)
        self.Bc = np.asarray(Bc, dtype=float)
        self.C = np.asarray(C, dtype=float)


class LtiModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Ts: float

    def __init__(self, A: np.ndarray, B: np.ndarray, C: np.ndarray, Ts: float) -> None:
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.Ts = float(Ts)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


class DataRecord:
    U0: np.ndarray  # m x N
    X0: np.ndarray  # n x N
    X1: np.ndarray  # n x N, one-step successors of X0
    Y0: np.ndarray  # 2 x N

    def __init__(self, U0: np.ndarray, X0: np.ndarray, X1: np.ndarray, Y0: np.ndarray) -> None:
        self.U0 = np.asarray(U0, dtype=float)
        self.X0 = np.asarray(X0, dtype=float)
        self.X1 = np.asarray(X1, dtype=float)
        self.Y0 = np.asarray(Y0, dtype=float)

    @property
    def n(self) -> int:
        return self.X0.shape[0]

    @property
    def m(self) -> int:
        return self.U0.shape[0]

    @property
    def N(self) -> int:  # pylint: disable=invalid-name
        return self.X0.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.U0, self.X0])

    def json(self) -> dict[str, Any]:
        return {
            "U0": matrix_json(self.U0),
            "X0": matrix_json(self.X0),
            "X1": matrix_json(self.X1),
            "Y0": matrix_json(self.Y0),
        }


class SteadyStatePair:
    x_bar: np.ndarray
    u_bar: np.ndarray
    r: np.ndarray

    def __init__(self, x_bar: np.ndarray, u_bar: np.ndarray, r: np.ndarray) -> None:
        self.x_bar = np.asarray(x_bar, dtype=float)
        self.u_bar = np.asarray(u_bar, dtype=float)
        self.r = np.asarray(r, dtype=float)


class Polytope:
    F: np.ndarray  # q x d
    g: np.ndarray  # q, strictly positive

    def __init__(self, F: np.ndarray, g: np.ndarray) -> None:
        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        self.g = np.asarray(g, dtype=float).reshape(-1)

    @property
    def q(self) -> int:
        return self.F.shape[0]

    def json(self) -> dict[str, Any]:
        return {"F": matrix_json(self.F), "g": matrix_json(self.g)}


class Certificate:
    P: np.ndarray  # n x n shape matrix
    S: np.ndarray  # N x n lifted variable
    K: np.ndarray  # m x n gain
    G2: np.ndarray  # N x m
    contraction: float
    center_state: np.ndarray
    center_output: np.ndarray
    polytope: Polytope

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        P: np.ndarray,
        S: np.ndarray,
        K: np.ndarray,
        G2: np.ndarray,
        contraction: float,
        center_state: np.ndarray,
        center_output: np.ndarray,
        polytope: Polytope,
    ) -> None:
        self.P = np.asarray(P, dtype=float)
        self.S = np.asarray(S, dtype=float)
        self.K = np.asarray(K, dtype=float)
        self.G2 = np.asarray(G2, dtype=float)
        self.contraction = float(contraction)
        self.center_state = np.asarray(center_state, dtype=float)
        self.center_output = np.asarray(center_output, dtype=float)
        self.polytope = polytope

    # pylint: enable=too-many-arguments

    def json(self) -> dict[str, Any]:
        return {
            "P": matrix_json(self.P),
            "S": matrix_json(self.S),
            "K": matrix_json(self.K),
            "G2": matrix_json(self.G2),
            "lambda": self.contraction,
            "center_state": matrix_json(self.center_state),
            "center_output": matrix_json(self.center_output),
            "polytope": self.polytope.json(),
        }


class OutputEllipsoid:
    Pproj: np.ndarray  # 2 x 2
    center: np.ndarray

    def __init__(self, Pproj: np.ndarray, center: np.ndarray) -> None:
        self.Pproj = np.asarray(Pproj, dtype=float)
        self.center = np.asarray(center, dtype=float)

    def value(self, y: np.ndarray) -> float:
        delta = np.asarray(y, dtype=float) - self.center
        return float(delta @ np.linalg.solve(self.Pproj, delta))

    def json(self) -> dict[str, Any]:
        return {"Pproj": matrix_json(self.Pproj), "center": matrix_json(self.center)}


class VerificationReport:
    min_contraction_eigenvalue: float
    contraction_floor: float
    max_facet_slack: float
    state_residual: float
    lift_residual: float
    input_residual: float
    passed: bool

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        min_contraction_eigenvalue: float,
        contraction_floor: float,
        max_facet_slack: float,
        state_residual: float,
        lift_residual: float,
        input_residual: float,
        passed: bool,
    ) -> None:
        self.min_contraction_eigenvalue = min_contraction_eigenvalue
        self.contraction_floor = contraction_floor
        self.max_facet_slack = max_facet_slack
        self.state_residual = state_residual  # ||X0 S - P||_F
        self.lift_residual = lift_residual  # ||X0 G2||_F
        self.input_residual = input_residual  # ||U0 G2 - I||_F
        self.passed = passed

    # pylint: enable=too-many-arguments

    def __str__(self) -> str:
        return (
            f"<passed={self.passed}, "
            + f"min_eig={self.min_contraction_eigenvalue:.3e}, "
            + f"floor={self.contraction_floor:.3e}, "
            + f"facet_slack={self.max_facet_slack:.3e}, "
            + f"residuals=({self.state_residual:.1e}, {self.lift_residual:.1e}, "
            + f"{self.input_residual:.1e})>"
        )

    def json(self) -> dict[str, Any]:
        return {
            "min_contraction_eigenvalue": self.min_contraction_eigenvalue,
            "contraction_floor": self.contraction_floor,
            "max_facet_slack": self.max_facet_slack,
            "state_residual": self.state_residual,
            "lift_residual": self.lift_residual,
            "input_residual": self.input_residual,
            "passed": self.passed,
        }


class CertificateOutcome(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    SOLVER_ERROR = "solver_error"
    UNVERIFIED = "unverified"


class CertificateResult:
    outcome: CertificateOutcome
    certificate: Certificate | None
    report: VerificationReport | None

    def __init__(
        self,
        outcome: CertificateOutcome,
        certificate: Certificate | None = None,
        report: VerificationReport | None = None,
    ) -> None:
        self.outcome = outcome
        self.certificate = certificate
        self.report = report

    @property
    def feasible(self) -> bool:
        return self.outcome == CertificateOutcome.FEASIBLE


class GridWorld:
    bounds: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    cell: float
    blocked: np.ndarray  # rows x cols booleans

    def __init__(
        self, bounds: tuple[float, float, float, float], cell: float, blocked: np.ndarray
    ) -> None:
        self.bounds = (float(bounds[0]), float(bounds[1]), float(bounds[2]), float(bounds[3]))
        self.cell = float(cell)
        self.blocked = np.asarray(blocked, dtype=bool)

    @property
    def dims(self) -> tuple[int, int]:
        return (self.blocked.shape[0], self.blocked.shape[1])

    def in_bounds(self, c: Cell) -> bool:
        rows, cols = self.dims
        return 0 <= c.row < rows and 0 <= c.col < cols

    def is_blocked(self, c: Cell) -> bool:
        return bool(self.blocked[c.row, c.col])

    def free_cells(self) -> list[Cell]:
        rows, cols = self.dims
        return [
            Cell(row, col)
            for row in range(rows)
            for col in range(cols)
            if not self.blocked[row, col]
        ]

    def json(self) -> dict[str, Any]:
        return {
            "bounds": list(self.bounds),
            "cell": self.cell,
            "blocked": self.blocked.astype(int).tolist(),
        }


class TreeNode:
    cell: Cell
    parent: "TreeNode | None"
    depth: int
    cert: Certificate | None
    proj: OutputEllipsoid | None
    index: int  # insertion order within the tree

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        cell: Cell,
        parent: "TreeNode | None",
        depth: int,
        cert: Certificate | None,
        proj: OutputEllipsoid | None,
        index: int,
    ) -> None:
        self.cell = cell
        self.parent = parent
        self.depth = depth
        self.cert = cert
        self.proj = proj
        self.index = index

    # pylint: enable=too-many-arguments


class Proposal:
    agent: int
    c_near: Cell
    c_new: Cell
    layer: int  # depth(c_near) + 1
    cert: Certificate
    proj: OutputEllipsoid
    heuristic: int  # l1 cells from c_new to the agent's goal

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        agent: int,
        c_near: Cell,
        c_new: Cell,
        layer: int,
        cert: Certificate,
        proj: OutputEllipsoid,
        heuristic: int,
    ) -> None:
        self.agent = agent
        self.c_near = c_near
        self.c_new = c_new
        self.layer = layer
        self.cert = cert
        self.proj = proj
        self.heuristic = heuristic

    # pylint: enable=too-many-arguments

    def __repr__(self) -> str:
        return (
            f"<agent={self.agent}, near={tuple(self.c_near)}, "
            + f"new={tuple(self.c_new)}, layer={self.layer}>"
        )


class CertifiedPath:
    cells: list[Cell]
    waypoints: list[np.ndarray]
    edge_certs: list[Certificate]  # edge l = 1..Nw stored at index l-1
    root_cert: Certificate | None
    terminal_cert: Certificate | None  # over the goal cell, centered on the goal

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        cells: list[Cell],
        waypoints: list[np.ndarray],
        edge_certs: list[Certificate],
        root_cert: Certificate | None = None,
        terminal_cert: Certificate | None = None,
    ) -> None:
        self.cells = cells
        self.waypoints = [np.asarray(point, dtype=float) for point in waypoints]
        self.edge_certs = edge_certs
        self.root_cert = root_cert
        self.terminal_cert = terminal_cert

    # pylint: enable=too-many-arguments

    @property
    def edge_count(self) -> int:
        return len(self.cells) - 1

    @property
    def segment_certs(self) -> list[Certificate | None]:
        """Root, edges 1..Nw, then the terminal certificate when there is one."""
        certs: list[Certificate | None] = [self.root_cert]
        certs.extend(self.edge_certs)
        if self.terminal_cert is not None:
            certs.append(self.terminal_cert)
        return certs

    def segment_certificate(self, segment: int) -> Certificate | None:
        """Segment 0 is the root certificate, segment l >= 1 is edge l, then the terminal."""
        return self.segment_certs[segment]

    def json(self) -> dict[str, Any]:
        return {
            "cells": [cell.json() for cell in self.cells],
            "waypoints": [matrix_json(point) for point in self.waypoints],
            "root_cert": self.root_cert.json() if self.root_cert is not None else None,
            "edge_certs": [cert.json() for cert in self.edge_certs],
            "terminal_cert": (
                self.terminal_cert.json() if self.terminal_cert is not None else None
            ),
        }


class PlannerParams:
    beta: float
    contraction: float
    max_iters: int
    seed: int
    layer_budget: int
    F_extra: np.ndarray | None  # additional full-state rows
    g_extra: np.ndarray | None

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        beta: float,
        contraction: float,
        max_iters: int,
        seed: int,
        layer_budget: int,
        F_extra: np.ndarray | None = None,
        g_extra: np.ndarray | None = None,
    ) -> None:
        self.beta = beta
        self.contraction = contraction
        self.max_iters = max_iters
        self.seed = seed
        self.layer_budget = layer_budget
        self.F_extra = F_extra
        self.g_extra = g_extra

    # pylint: enable=too-many-arguments


class ExecParams:
    r_f: float
    max_steps: int
    abort_on_violation: bool

    def __init__(self, *, r_f: float, max_steps: int, abort_on_violation: bool = False) -> None:
        self.r_f = r_f
        self.max_steps = max_steps
        self.abort_on_violation = abort_on_violation


class ExecutionOutcome(enum.Enum):
    RUNNING = "running"
    FINISHED = "finished"
    TIMEOUT = "timeout"
    ABORTED = "aborted"


class ExecutionTrace:
    states: list[np.ndarray]
    outputs: list[np.ndarray]
    inputs: list[np.ndarray]
    active_segment: list[int]
    membership: list[float]  # quadratic-form value against the active ellipsoid
    violations: list[tuple[int, float]]
    finished_step: int | None
    outcome: ExecutionOutcome

    def __init__(self) -> None:
        self.states = []
        self.outputs = []
        self.inputs = []
        self.active_segment = []
        self.membership = []
        self.violations = []
        self.finished_step = None
        self.outcome = ExecutionOutcome.RUNNING

    @property
    def max_input_norm(self) -> float:
        if not self.inputs:
            return 0.0
        return float(max(np.linalg.norm(u) for u in self.inputs))


class ViolationStats:
    violating_segments: int
    total_segments: int
    percent: float

    def __init__(self, violating_segments: int, total_segments: int, percent: float) -> None:
        self.violating_segments = violating_segments
        self.total_segments = total_segments
        self.percent = percent

    def json(self) -> dict[str, Any]:
        return {
            "violating_segments": self.violating_segments,
            "total_segments": self.total_segments,
            "percent": self.percent,
        }


class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __init__(self, Q: np.ndarray, R: np.ndarray) -> None:
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)


class RunArtifact:
    summary: dict[str, Any]  # the deterministic JSON document
    frames: dict[str, Any]  # trace file stem -> pandas DataFrame
    timing: dict[str, float]
    directory: str | None

    def __init__(
        self,
        summary: dict[str, Any],
        frames: dict[str, Any],
        timing: dict[str, float] | None = None,
        directory: str | None = None,
    ) -> None:
        self.summary = summary
        self.frames = frames
        self.timing = timing if timing is not None else {}
        self.directory = directory

    @property
    def agent_names(self) -> list[str]:
        return [agent["name"] for agent in self.summary.get("agents", [])]


@deserialize.parser("U0", matrix_field)
@deserialize.parser("X0", matrix_field)
@deserialize.parser("X1", matrix_field)
@deserialize.parser("Y0", matrix_field)
class RecordDocument:
    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    Y0: np.ndarray

    def record(self) -> DataRecord:
        return DataRecord(self.U0, self.X0, self.X1, self.Y0)


@deserialize.parser("F", matrix_field)
@deserialize.parser("g", matrix_field)
class PolytopeDocument:
    F: np.ndarray
    g: np.ndarray


@deserialize.key("contraction", "lambda")
@deserialize.parser("P", matrix_field)
@deserialize.parser("S", matrix_field)
@deserialize.parser("K", matrix_field)
@deserialize.parser("G2", matrix_field)
@deserialize.parser("lambda", number_field)
@deserialize.parser("center_state", matrix_field)
@deserialize.parser("center_output", matrix_field)
class CertificateDocument:
    P: np.ndarray
    S: np.ndarray
    K: np.ndarray
    G2: np.ndarray
    contraction: float
    center_state: np.ndarray
    center_output: np.ndarray
    polytope: PolytopeDocument

    def certificate(self) -> Certificate:
        return Certificate(
            P=self.P,
            S=self.S,
            K=self.K,
            G2=self.G2,
            contraction=self.contraction,
            center_state=self.center_state,
            center_output=self.center_output,
            polytope=Polytope(self.polytope.F, self.polytope.g),
        )

"""Scenario documents: typed loading, defaults and validation."""

# Licensed under the MIT license.

import copy
import enum
import re
from typing import Any, List

import deserialize
import numpy as np
import yaml

from saferrt.constants import (
    CELL_SIZE,
    CW_MEAN_MOTION,
    CW_SAMPLING_PERIOD,
    DEBRIS_HALF_WIDTH,
    DEFAULT_CONTRACTION,
    DEFAULT_GOAL_BIAS,
    DEFAULT_GOAL_TOLERANCE,
    DEFAULT_LAYER_BUDGET,
    DEFAULT_MAX_ITERS,
    DEFAULT_MAX_STEPS,
    LQR_INPUT_WEIGHT,
    LQR_STATE_WEIGHTS,
    WORKSPACE_BOUNDS,
)
from saferrt.derived_component import GridError, InvalidModelError, ScenarioError
from saferrt.lti import cw_inplane_model, discretize_zoh, double_integrator_model
from saferrt.models import (
    Cell,
    ContinuousModel,
    ExecParams,
    GridWorld,
    LqrWeights,
    LtiModel,
    Obstacle,
    PlannerParams,
)
from saferrt import workspace


# Deserialized fields are annotated with typing.List: on Python 3.10 deserialize mistakes
# builtin generics such as list[float] for classes.


def _float(value: Any) -> Any:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    return value


def _floats(value: Any) -> Any:
    if isinstance(value, list):
        return [_float(item) for item in value]
    return value


def _matrix(value: Any) -> Any:
    if isinstance(value, list):
        return [_floats(row) for row in value]
    return value


class DynamicsKind(enum.Enum):
    """How the simulated agents are described."""

    CW = "cw"
    DOUBLE_INTEGRATOR = "double_integrator"
    EXPLICIT = "explicit"


@deserialize.default("kind", DynamicsKind.CW)
@deserialize.default("mean_motion", CW_MEAN_MOTION)
@deserialize.default("sampling_period", CW_SAMPLING_PERIOD)
@deserialize.parser("mean_motion", _float)
@deserialize.parser("sampling_period", _float)
@deserialize.parser("Ac", _matrix)
@deserialize.parser("Bc", _matrix)
@deserialize.parser("C", _matrix)
class DynamicsConfig:
    """Continuous-time dynamics, discretized with a zero-order hold."""

    kind: DynamicsKind
    mean_motion: float
    sampling_period: float
    Ac: List[List[float]] | None
    Bc: List[List[float]] | None
    C: List[List[float]] | None

    def continuous(self) -> ContinuousModel:
        """The continuous-time model this configuration describes."""
        if self.kind == DynamicsKind.CW:
            return cw_inplane_model(self.mean_motion)
        if self.kind == DynamicsKind.DOUBLE_INTEGRATOR:
            return double_integrator_model()
        if self.Ac is None or self.Bc is None or self.C is None:
            raise ScenarioError("Explicit dynamics need Ac, Bc and C", "dynamics")
        return ContinuousModel(np.array(self.Ac), np.array(self.Bc), np.array(self.C))

    def json(self) -> dict[str, Any]:
        """Plain dictionary form for the config echo."""
        return {
            "kind": self.kind.value,
            "mean_motion": self.mean_motion,
            "sampling_period": self.sampling_period,
            "Ac": self.Ac,
            "Bc": self.Bc,
            "C": self.C,
        }


@deserialize.default("half_width", DEBRIS_HALF_WIDTH)
@deserialize.parser("center", _floats)
@deserialize.parser("half_width", _float)
class ObstacleConfig:
    """One axis-aligned square of debris."""

    center: List[float]
    half_width: float


@deserialize.default("bounds", list(WORKSPACE_BOUNDS))
@deserialize.default("cell_size", CELL_SIZE)
@deserialize.default("obstacles", [])
@deserialize.parser("bounds", _floats)
@deserialize.parser("cell_size", _float)
class WorkspaceConfig:
    """Workspace rectangle, cell size and debris."""

    bounds: List[float]
    cell_size: float
    obstacles: List[ObstacleConfig]

    def json(self) -> dict[str, Any]:
        """Plain dictionary form for the config echo."""
        return {
            "bounds": self.bounds,
            "cell_size": self.cell_size,
            "obstacles": [
                {"center": obstacle.center, "half_width": obstacle.half_width}
                for obstacle in self.obstacles
            ],
        }


@deserialize.default("samples", 20)
@deserialize.default("amplitude", 1.0)
@deserialize.parser("amplitude", _float)
class DataConfig:
    """The open-loop experiment collected for one agent."""

    seed: int | None
    samples: int
    amplitude: float


@deserialize.parser("start", _floats)
@deserialize.parser("goal", _floats)
@deserialize.parser("initial_state", _floats)
class AgentConfig:
    """Start and goal outputs of one agent and its data experiment."""

    name: str | None
    start: List[float]
    goal: List[float]
    data: DataConfig | None
    initial_state: List[float] | None


@deserialize.default("beta", DEFAULT_GOAL_BIAS)
@deserialize.default("contraction", DEFAULT_CONTRACTION)
@deserialize.default("seed", 0)
@deserialize.default("max_iters", DEFAULT_MAX_ITERS)
@deserialize.default("layer_budget", DEFAULT_LAYER_BUDGET)
@deserialize.key("contraction", "lambda")
@deserialize.parser("beta", _float)
@deserialize.parser("lambda", _float)
@deserialize.parser("contraction", _float)
@deserialize.parser("state_facets", _matrix)
@deserialize.parser("state_offsets", _floats)
class PlannerConfig:
    """Tree growth parameters.

    `state_facets` and `state_offsets` add rows F x <= g on the full state (velocity limits,
    for example) to every certificate's polytope.
    """

    beta: float
    contraction: float
    seed: int
    max_iters: int
    layer_budget: int
    state_facets: List[List[float]] | None
    state_offsets: List[float] | None


@deserialize.default("goal_tolerance", DEFAULT_GOAL_TOLERANCE)
@deserialize.default("max_steps", DEFAULT_MAX_STEPS)
@deserialize.default("abort_on_violation", False)
@deserialize.key("goal_tolerance", "r_f")
@deserialize.parser("r_f", _float)
@deserialize.parser("goal_tolerance", _float)
class ExecutionConfig:
    """Closed-loop execution parameters."""

    goal_tolerance: float
    max_steps: int
    abort_on_violation: bool


@deserialize.default("enabled", False)
@deserialize.default("state_weights", list(LQR_STATE_WEIGHTS))
@deserialize.default("input_weight", LQR_INPUT_WEIGHT)
@deserialize.parser("state_weights", _floats)
@deserialize.parser("input_weight", _float)
class BaselineConfig:
    """Whether and how to run the LQR comparison."""

    enabled: bool
    state_weights: List[float]
    input_weight: float


@deserialize.default("name", "scenario")
class Scenario:
    """A complete, validated run description.

    Nested sections left out of the document are filled with their defaults by
    `parse_scenario`, so they are never None afterwards.
    """

    # pylint: disable=too-many-instance-attributes

    name: str
    dynamics: DynamicsConfig | None
    workspace: WorkspaceConfig | None
    agents: List[AgentConfig]
    planner: PlannerConfig | None
    execution: ExecutionConfig | None
    baseline: BaselineConfig | None

    # pylint: enable=too-many-instance-attributes

    def _section(self, value: Any, name: str) -> Any:
        if value is None:
            raise ScenarioError("Scenario has not been validated", name)
        return value

    @property
    def agent_count(self) -> int:
        """Number of agents."""
        return len(self.agents)

    def model(self) -> LtiModel:
        """The discrete-time simulator shared by every agent."""
        dynamics: DynamicsConfig = self._section(self.dynamics, "dynamics")
        return discretize_zoh(dynamics.continuous(), dynamics.sampling_period)

    def grid(self) -> GridWorld:
        """The blocked-cell grid."""
        space: WorkspaceConfig = self._section(self.workspace, "workspace")
        obstacles = [
            Obstacle((item.center[0], item.center[1]), item.half_width)
            for item in space.obstacles
        ]
        bounds = (space.bounds[0], space.bounds[1], space.bounds[2], space.bounds[3])
        return workspace.build_grid(bounds, space.cell_size, obstacles)

    def start_cells(self, grid: GridWorld) -> list[Cell]:
        """Cells containing the agents' start outputs."""
        return [workspace.locate(grid, np.array(agent.start)) for agent in self.agents]

    def goal_cells(self, grid: GridWorld) -> list[Cell]:
        """Cells containing the agents' goal outputs."""
        return [workspace.locate(grid, np.array(agent.goal)) for agent in self.agents]

    def planner_params(self) -> PlannerParams:
        """Planner parameters for this scenario."""
        planner: PlannerConfig = self._section(self.planner, "planner")
        extra = planner.state_facets is not None and planner.state_offsets is not None
        return PlannerParams(
            beta=planner.beta,
            contraction=planner.contraction,
            max_iters=planner.max_iters,
            seed=planner.seed,
            layer_budget=planner.layer_budget,
            F_extra=np.array(planner.state_facets) if extra else None,
            g_extra=np.array(planner.state_offsets) if extra else None,
        )

    def exec_params(self) -> ExecParams:
        """Execution parameters shared by every agent."""
        execution: ExecutionConfig = self._section(self.execution, "execution")
        return ExecParams(
            r_f=execution.goal_tolerance,
            max_steps=execution.max_steps,
            abort_on_violation=execution.abort_on_violation,
        )

    def lqr_weights(self) -> LqrWeights:
        """Q and R of the LQR comparison."""
        baseline: BaselineConfig = self._section(self.baseline, "baseline")
        return LqrWeights(
            np.diag(baseline.state_weights),
            baseline.input_weight * np.eye(self.model().m),
        )

    def with_seed(self, seed: int) -> "Scenario":
        """A copy planning with another seed."""
        clone = copy.deepcopy(self)
        self._section(clone.planner, "planner").seed = seed
        return clone

    def json(self) -> dict[str, Any]:
        """The resolved configuration, defaults included."""
        planner: PlannerConfig = self._section(self.planner, "planner")
        execution: ExecutionConfig = self._section(self.execution, "execution")
        baseline: BaselineConfig = self._section(self.baseline, "baseline")
        return {
            "name": self.name,
            "dynamics": self._section(self.dynamics, "dynamics").json(),
            "workspace": self._section(self.workspace, "workspace").json(),
            "agents": [
                {
                    "name": agent.name,
                    "start": agent.start,
                    "goal": agent.goal,
                    "data": {
                        "seed": agent.data.seed,
                        "samples": agent.data.samples,
                        "amplitude": agent.data.amplitude,
                    }
                    if agent.data is not None
                    else None,
                    "initial_state": agent.initial_state,
                }
                for agent in self.agents
            ],
            "planner": {
                "beta": planner.beta,
                "lambda": planner.contraction,
                "seed": planner.seed,
                "max_iters": planner.max_iters,
                "layer_budget": planner.layer_budget,
                "state_facets": planner.state_facets,
                "state_offsets": planner.state_offsets,
            },
            "execution": {
                "r_f": execution.goal_tolerance,
                "max_steps": execution.max_steps,
                "abort_on_violation": execution.abort_on_violation,
            },
            "baseline": {
                "enabled": baseline.enabled,
                "state_weights": baseline.state_weights,
                "input_weight": baseline.input_weight,
            },
        }


def _default_section(class_reference: type) -> Any:
    return deserialize.deserialize(class_reference, {})


def _field_path(message: str) -> str | None:
    match = re.search(r"([A-Za-z_][\w]*(?:\.[A-Za-z_]\w*|\[\d+\])+)", message)
    return match.group(1) if match else None


def _check_point(value: list[float], field: str) -> None:
    if len(value) != 2:
        raise ScenarioError(f"Expected an (x, y) pair, got {len(value)} values", field)


def _check_state_rows(planner: PlannerConfig, n: int) -> None:
    facets, offsets = planner.state_facets, planner.state_offsets

    if facets is None and offsets is None:
        return

    if facets is None or offsets is None:
        raise ScenarioError("State facets and offsets come together", "planner.state_facets")

    if not facets or any(len(row) != n for row in facets):
        raise ScenarioError(f"Every state facet needs {n} entries", "planner.state_facets")

    if len(offsets) != len(facets):
        raise ScenarioError("One offset per state facet", "planner.state_offsets")


def _fill_defaults(scenario: Scenario) -> None:
    if scenario.dynamics is None:
        scenario.dynamics = _default_section(DynamicsConfig)
    if scenario.workspace is None:
        scenario.workspace = _default_section(WorkspaceConfig)
    if scenario.planner is None:
        scenario.planner = _default_section(PlannerConfig)
    if scenario.execution is None:
        scenario.execution = _default_section(ExecutionConfig)
    if scenario.baseline is None:
        scenario.baseline = _default_section(BaselineConfig)

    for index, agent in enumerate(scenario.agents):
        if agent.name is None:
            agent.name = chr(ord("A") + index) if index < 26 else f"agent{index}"
        if agent.data is None:
            agent.data = _default_section(DataConfig)
        if agent.data.seed is None:
            agent.data.seed = index + 1


# pylint: disable=too-many-branches
def validate_scenario(scenario: Scenario) -> Scenario:
    """Fill defaults and check every cross-field invariant.

    :param scenario: A freshly deserialized scenario

    :returns: The same scenario, completed

    :raises ScenarioError: If any invariant fails; the field path names the culprit
    """

    _fill_defaults(scenario)

    planner: PlannerConfig = scenario.planner  # type: ignore[assignment]
    execution: ExecutionConfig = scenario.execution  # type: ignore[assignment]

    if not 0.0 <= planner.beta <= 1.0:
        raise ScenarioError(f"Goal bias must lie in [0, 1], got {planner.beta}", "planner.beta")

    if not 0.0 < planner.contraction < 1.0:
        raise ScenarioError(
            f"Contraction must lie in (0, 1), got {planner.contraction}", "planner.lambda"
        )

    if planner.max_iters <= 0 or planner.layer_budget <= 0:
        raise ScenarioError("Planner budgets must be positive", "planner")

    if execution.goal_tolerance <= 0:
        raise ScenarioError("Goal tolerance must be positive", "execution.r_f")

    if execution.max_steps <= 0:
        raise ScenarioError("Step budget must be positive", "execution.max_steps")

    if len(scenario.workspace.bounds) != 4:  # type: ignore[union-attr]
        raise ScenarioError("Bounds are (xmin, xmax, ymin, ymax)", "workspace.bounds")

    try:
        model = scenario.model()
    except InvalidModelError as ex:
        raise ScenarioError(ex.message, "dynamics") from ex

    if model.C.shape[0] != 2:
        raise ScenarioError("Outputs must be planar positions", "dynamics.C")

    _check_state_rows(planner, model.n)

    try:
        grid = scenario.grid()
    except GridError as ex:
        raise ScenarioError(ex.message, "workspace") from ex

    if not scenario.agents:
        raise ScenarioError("At least one agent is required", "agents")

    for index, agent in enumerate(scenario.agents):
        for field in ("start", "goal"):
            point = getattr(agent, field)
            path = f"agents[{index}].{field}"
            _check_point(point, path)
            try:
                cell = workspace.locate(grid, np.array(point))
            except GridError as ex:
                raise ScenarioError(ex.message, path) from ex
            if grid.is_blocked(cell):
                raise ScenarioError(f"{field.capitalize()} {point} lies in blocked cell", path)

        if agent.initial_state is not None and len(agent.initial_state) != model.n:
            raise ScenarioError(
                f"Initial state needs {model.n} entries", f"agents[{index}].initial_state"
            )

    endpoints = (("start", scenario.start_cells(grid)), ("goal", scenario.goal_cells(grid)))
    for field, cells in endpoints:
        if len(set(cells)) != len(cells):
            raise ScenarioError(f"Agents share a {field} cell", "agents")

    return scenario


# pylint: enable=too-many-branches


def parse_scenario(text: str) -> Scenario:
    """Load a scenario from a YAML document.

    :param text: The document

    :returns: The validated scenario with defaults applied

    :raises ScenarioError: On malformed YAML, schema violations or failed invariants
    """

    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as ex:
        raise ScenarioError(f"Malformed document: {ex}") from ex

    if not isinstance(raw, dict):
        raise ScenarioError("A scenario document must be a mapping")

    try:
        scenario = deserialize.deserialize(Scenario, raw, throw_on_unhandled=True)
    except deserialize.DeserializeException as ex:
        raise ScenarioError(str(ex), _field_path(str(ex))) from ex

    return validate_scenario(scenario)


def load_scenario(path: str) -> Scenario:
    """Read and parse a scenario file.

    :param path: The path to the YAML file

    :returns: The validated scenario
    """
    with open(path, "r", encoding="utf-8") as scenario_file:
        return parse_scenario(scenario_file.read())

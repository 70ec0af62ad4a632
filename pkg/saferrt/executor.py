"""Closed-loop execution of certified paths with output-space safety monitoring."""

# Licensed under the MIT license.

import itertools
import logging
from typing import Any, Sequence

import numpy as np
import pandas as pd

from saferrt.certificates import contains, project_ellipsoid
from saferrt.data import SafeRRTDataClient
from saferrt.derived_component import (
    ExecutionTimeoutError,
    InvalidModelError,
    SafeRRTDerivedComponent,
    SafetyViolationError,
)
from saferrt.lti import step
from saferrt.models import (
    Certificate,
    CertifiedPath,
    ExecParams,
    ExecutionOutcome,
    ExecutionTrace,
    LtiModel,
    OutputEllipsoid,
    ViolationStats,
)


class Segment:
    """What the controller needs while one certificate is active.

    :param cert: The active certificate (None only for an uncertified root)
    :param K: The feedback gain in use
    :param x_bar: The steady state of the segment's waypoint
    :param u_bar: The steady input of the segment's waypoint
    :param target: The segment's waypoint
    :param proj: The certificate's projected ellipsoid
    """

    cert: Certificate | None
    K: np.ndarray
    x_bar: np.ndarray
    u_bar: np.ndarray
    target: np.ndarray
    proj: OutputEllipsoid | None

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        cert: Certificate | None,
        K: np.ndarray,
        x_bar: np.ndarray,
        u_bar: np.ndarray,
        target: np.ndarray,
        proj: OutputEllipsoid | None,
    ) -> None:
        self.cert = cert
        self.K = K
        self.x_bar = x_bar
        self.u_bar = u_bar
        self.target = target
        self.proj = proj

    # pylint: enable=too-many-arguments

    def control(self, x: np.ndarray) -> np.ndarray:
        """Affine law K (x - x_bar) + u_bar."""
        return self.K @ (x - self.x_bar) + self.u_bar


def violation_percent(violating: int, total: int) -> float:
    """Share of violating segments in percent, rounded to one decimal."""
    if total == 0:
        return 0.0
    return round(100.0 * violating / total, 1)


def violation_stats(trace: ExecutionTrace, path: CertifiedPath) -> ViolationStats:
    """Count segments during which the output ever left the active ellipsoid.

    :param trace: A completed or aborted trace
    :param path: The path the trace followed

    :returns: Violating segments, certified segments and their percentage
    """

    total = sum(1 for cert in path.segment_certs if cert is not None)
    violating = len({trace.active_segment[k] for k, _ in trace.violations})
    return ViolationStats(violating, total, violation_percent(violating, total))


def trace_frame(trace: ExecutionTrace, agent: int = 0) -> pd.DataFrame:
    """One row per observed step: state, output, applied input, segment and membership value.

    The input columns of the final observed step are empty when no input followed it.

    :param trace: The trace
    :param agent: The agent index written into the agent column

    :returns: The trace table
    """

    rows = []

    for k, (x, y) in enumerate(zip(trace.states, trace.outputs)):
        row: dict[str, Any] = {"step": k, "agent": agent}
        row.update({f"x{i}": value for i, value in enumerate(x)})
        row.update({f"y{i}": value for i, value in enumerate(y)})
        if k < len(trace.inputs):
            row.update({f"u{i}": value for i, value in enumerate(trace.inputs[k])})
        row["segment"] = trace.active_segment[k]
        row["membership"] = trace.membership[k]
        rows.append(row)

    frame = pd.DataFrame(rows)

    if trace.inputs:
        for i in range(len(trace.inputs[0])):
            if f"u{i}" not in frame.columns:
                frame[f"u{i}"] = np.nan

    return frame


def trace_summary(trace: ExecutionTrace, stats: ViolationStats) -> dict[str, Any]:
    """Outcome, timing and safety figures of one trace."""
    return {
        "outcome": trace.outcome.value,
        "finished_step": trace.finished_step,
        "steps": len(trace.outputs),
        "violations": len(trace.violations),
        "max_input_norm": trace.max_input_norm,
        "violation_stats": stats.json(),
    }


class FleetExecution:
    """Traces of agents executed in lockstep.

    :param traces: One trace per agent
    :param min_distances: The smallest pairwise output distance at every global step
    """

    traces: list[ExecutionTrace]
    min_distances: list[float]

    def __init__(self, traces: list[ExecutionTrace], min_distances: list[float]) -> None:
        self.traces = traces
        self.min_distances = min_distances

    @property
    def min_pairwise_distance(self) -> float:
        """Smallest separation over the whole run (inf for a single agent)."""
        return min(self.min_distances, default=float("inf"))


class _AgentRun:
    """State machine stepping one agent along its segments."""

    # pylint: disable=too-many-instance-attributes

    def __init__(
        self, model: LtiModel, segments: list[Segment], x0: np.ndarray, params: ExecParams
    ) -> None:
        self.model = model
        self.segments = segments
        self.params = params
        self.x = np.asarray(x0, dtype=float)
        self.segment = 0
        self.trace = ExecutionTrace()
        self.handoffs: list[int] = []

    @property
    def done(self) -> bool:
        """Whether the agent has stopped stepping."""
        return self.trace.outcome != ExecutionOutcome.RUNNING

    @property
    def output(self) -> np.ndarray:
        """The latest observed output."""
        return self.trace.outputs[-1] if self.trace.outputs else self.model.C @ self.x

    def advance(self, k: int) -> None:
        """Observe, hand off, monitor, check the goal, then apply one control step."""

        y = self.model.C @ self.x
        self.trace.states.append(self.x.copy())
        self.trace.outputs.append(y)

        last = len(self.segments) - 1

        if self.segment < last:
            following = self.segments[self.segment + 1].proj
            if following is not None and contains(following, y):
                self.segment += 1
                self.handoffs.append(k)

        active = self.segments[self.segment]
        self.trace.active_segment.append(self.segment)

        if active.proj is None:
            value = float("nan")
        else:
            value = active.proj.value(y)
        self.trace.membership.append(value)

        if value > 1.0:
            self.trace.violations.append((k, value))
            if self.params.abort_on_violation:
                self.trace.outcome = ExecutionOutcome.ABORTED
                return

        if self.segment == last and np.linalg.norm(y - active.target) <= self.params.r_f:
            self.trace.finished_step = k
            self.trace.outcome = ExecutionOutcome.FINISHED
            return

        if k >= self.params.max_steps:
            self.trace.outcome = ExecutionOutcome.TIMEOUT
            return

        u = active.control(self.x)
        self.trace.inputs.append(u)
        self.x = step(self.model, self.x, u)

    # pylint: enable=too-many-instance-attributes


class SafeRRTExecutorClient(SafeRRTDerivedComponent):
    """Runs certified paths on the simulator.

    :param parent_logger: The parent logger that we will use for our own logging
    :param data: The data component used for waypoint steady states
    """

    data: SafeRRTDataClient

    def __init__(
        self, parent_logger: logging.Logger, data: SafeRRTDataClient, name: str = "executor"
    ) -> None:
        super().__init__(name, parent_logger)
        self.data = data

    def segments(
        self, path: CertifiedPath, T_hat: np.ndarray, gain: np.ndarray | None = None
    ) -> list[Segment]:
        """Segment 0 is the root certificate, segment l the certificate of edge l and the last
        segment the terminal certificate over the goal cell, when the path has one.

        Each segment steers to the steady state of its own waypoint and is monitored against
        its certificate's projected ellipsoid. The root and terminal certificates are centered
        on their waypoints, so those segments steer about their own certificate centers. An
        edge segment is left once the output enters the next ellipsoid, which contains the
        edge's waypoint.

        :param path: The certified path
        :param T_hat: The agent's steady-state map
        :param gain: A gain to use on every segment instead of the certified ones

        :returns: One segment per path cell, plus one for the terminal certificate
        """

        n = T_hat.shape[0] - 2
        C = T_hat[n:, :n]
        certs = path.segment_certs
        waypoints = list(path.waypoints)
        if path.terminal_cert is not None:
            waypoints.append(path.waypoints[-1])
        result = []

        for index, (cert, waypoint) in enumerate(zip(certs, waypoints)):
            pair = self.data.steady_state(T_hat, waypoint)

            if gain is not None:
                K = gain
            elif cert is not None:
                K = cert.K
            elif index + 1 < len(certs) and certs[index + 1] is not None:
                K = certs[index + 1].K  # type: ignore[union-attr]
            else:
                K = np.zeros((pair.u_bar.shape[0], n))

            result.append(
                Segment(
                    cert=cert,
                    K=K,
                    x_bar=pair.x_bar,
                    u_bar=pair.u_bar,
                    target=np.asarray(waypoint, dtype=float),
                    proj=project_ellipsoid(cert, C) if cert is not None else None,
                )
            )

        return result

    # pylint: disable=too-many-arguments
    def run_fleet(
        self,
        models: Sequence[LtiModel],
        paths: Sequence[CertifiedPath],
        T_hats: Sequence[np.ndarray],
        x0s: Sequence[np.ndarray],
        params: ExecParams | Sequence[ExecParams],
        gains: Sequence[np.ndarray] | None = None,
    ) -> FleetExecution:
        """Step every agent on a shared clock until each has finished, timed out or aborted.

        :param models: The simulated agents
        :param paths: Their certified paths
        :param T_hats: Their steady-state maps
        :param x0s: Their initial states
        :param params: Execution parameters, shared or one per agent
        :param gains: Per-agent gains to use on every segment instead of the certified ones

        :returns: The traces and the per-step minimum pairwise output distance
        """

        count = len(paths)

        if not count == len(models) == len(T_hats) == len(x0s):
            raise InvalidModelError("Every agent needs a model, a path, a map and a start state")

        per_agent = [params] * count if isinstance(params, ExecParams) else list(params)

        runs = [
            _AgentRun(
                models[i],
                self.segments(paths[i], T_hats[i], gains[i] if gains is not None else None),
                x0s[i],
                per_agent[i],
            )
            for i in range(count)
        ]

        min_distances = []
        k = 0

        while not all(run.done for run in runs):
            for run in runs:
                if not run.done:
                    run.advance(k)

            if count > 1:
                outputs = [run.output for run in runs]
                min_distances.append(
                    min(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(outputs, 2))
                )
            k += 1

        for index, run in enumerate(runs):
            trace = run.trace
            if trace.violations:
                self.log.warning(
                    f"Agent {index}: {len(trace.violations)} steps outside the active ellipsoid"
                )
            self.log.info(
                f"Agent {index}: {trace.outcome.value} after {len(trace.outputs)} steps, "
                + f"{len(run.handoffs)} handoffs"
            )

        return FleetExecution([run.trace for run in runs], min_distances)

    def execute_single(
        self,
        model: LtiModel,
        path: CertifiedPath,
        T_hat: np.ndarray,
        x0: np.ndarray,
        params: ExecParams,
    ) -> ExecutionTrace:
        """Run one certified path.

        :param model: The simulated agent
        :param path: The certified path
        :param T_hat: The agent's steady-state map
        :param x0: The initial state
        :param params: The execution parameters

        :returns: The finished trace

        :raises ExecutionTimeoutError: If the step budget runs out first
        :raises SafetyViolationError: If the output leaves the active ellipsoid and aborting is on
        """

        self.log.info(f"Executing path with {path.edge_count} edges")

        trace = self.run_fleet([model], [path], [T_hat], [x0], params).traces[0]

        if trace.outcome == ExecutionOutcome.TIMEOUT:
            raise ExecutionTimeoutError(f"Goal not reached within {params.max_steps} steps", trace)

        if trace.outcome == ExecutionOutcome.ABORTED:
            step_index, value = trace.violations[-1]
            raise SafetyViolationError(
                f"Output left the active ellipsoid at step {step_index} (value {value:.4f})", trace
            )

        return trace

    def execute_multi(
        self,
        models: Sequence[LtiModel],
        paths: Sequence[CertifiedPath],
        T_hats: Sequence[np.ndarray],
        x0s: Sequence[np.ndarray],
        params: ExecParams | Sequence[ExecParams],
    ) -> FleetExecution:
        """Run several certified paths in lockstep; outcomes are reported per agent.

        :param models: The simulated agents
        :param paths: Their certified paths
        :param T_hats: Their steady-state maps
        :param x0s: Their initial states
        :param params: Execution parameters, shared or one per agent

        :returns: One trace per agent and the per-step minimum pairwise distance
        """

        self.log.info(f"Executing {len(paths)} paths in lockstep")
        return self.run_fleet(models, paths, T_hats, x0s, params)

    # pylint: enable=too-many-arguments

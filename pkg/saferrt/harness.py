"""Scenario runs end to end: data, planning, execution, baseline and artifacts."""

# Licensed under the MIT license.

import json
import logging
import os
import time
from typing import Any, Sequence

import deserialize
import numpy as np
import pandas as pd

from saferrt.baseline import BaselineRun, SafeRRTBaselineClient
from saferrt.certificates import project_ellipsoid, verify_certificate
from saferrt.constants import ARTIFACT_SCHEMA_VERSION, CSV_FLOAT_FORMAT
from saferrt.data import SafeRRTDataClient
from saferrt.derived_component import (
    ArtifactError,
    NoPathError,
    PartialPlanError,
    SafeRRTDerivedComponent,
)
from saferrt.executor import (
    FleetExecution,
    SafeRRTExecutorClient,
    trace_frame,
    trace_summary,
    violation_stats,
)
from saferrt.models import (
    Certificate,
    CertificateDocument,
    CertifiedPath,
    DataRecord,
    ExecutionOutcome,
    RecordDocument,
    RunArtifact,
    VerificationReport,
    matrix_json,
)
from saferrt.planner import PlanResult, SafeRRTPlannerClient
from saferrt.render import RENDER_KINDS, render_svg
from saferrt.scenario import Scenario

SUMMARY_FILE = "summary.json"
TIMING_FILE = "timing.json"


def record_from_json(raw: Any) -> DataRecord:
    """Rebuild a data record embedded in an artifact.

    :raises ArtifactError: If the record is not a mapping of numeric matrices
    """
    try:
        return deserialize.deserialize(RecordDocument, raw).record()
    except deserialize.DeserializeException as ex:
        raise ArtifactError(f"Malformed data record: {ex}") from ex


def certificate_from_json(raw: Any) -> Certificate:
    """Rebuild a certificate embedded in an artifact.

    :raises ArtifactError: If a matrix, the contraction factor or the polytope is malformed
    """
    try:
        return deserialize.deserialize(CertificateDocument, raw).certificate()
    except deserialize.DeserializeException as ex:
        raise ArtifactError(f"Malformed certificate: {ex}") from ex


def write_artifact(artifact: RunArtifact, directory: str) -> None:
    """Write summary, timing, traces and figures under one directory.

    :param artifact: The artifact to write
    :param directory: The destination (created if needed)
    """

    os.makedirs(os.path.join(directory, "traces"), exist_ok=True)
    os.makedirs(os.path.join(directory, "figures"), exist_ok=True)

    with open(os.path.join(directory, SUMMARY_FILE), "w", encoding="utf-8") as summary_file:
        summary_file.write(json.dumps(artifact.summary, indent=2, sort_keys=True))
        summary_file.write("\n")

    with open(os.path.join(directory, TIMING_FILE), "w", encoding="utf-8") as timing_file:
        timing_file.write(json.dumps(artifact.timing, indent=2, sort_keys=True))
        timing_file.write("\n")

    for stem, frame in sorted(artifact.frames.items()):
        frame.to_csv(
            os.path.join(directory, "traces", f"{stem}.csv"),
            index=False,
            float_format=CSV_FLOAT_FORMAT,
        )

    for kind in RENDER_KINDS:
        with open(
            os.path.join(directory, "figures", f"{kind}.svg"), "w", encoding="utf-8"
        ) as figure_file:
            figure_file.write(render_svg(artifact, kind))

    artifact.directory = directory


def load_artifact(directory: str) -> RunArtifact:
    """Read an artifact written by write_artifact.

    :param directory: The artifact directory

    :returns: The artifact

    :raises ArtifactError: If the summary is missing or has another schema version
    """

    path = os.path.join(directory, SUMMARY_FILE)
    if not os.path.exists(path):
        raise ArtifactError(f"Missing {path}")

    with open(path, "r", encoding="utf-8") as summary_file:
        summary = json.load(summary_file)

    version = summary.get("schema_version")
    if version != ARTIFACT_SCHEMA_VERSION:
        raise ArtifactError(f"Unsupported artifact schema version {version}")

    frames = {}
    traces = os.path.join(directory, "traces")
    if os.path.isdir(traces):
        for name in sorted(os.listdir(traces)):
            if name.endswith(".csv"):
                frames[name[: -len(".csv")]] = pd.read_csv(os.path.join(traces, name))

    timing = {}
    timing_path = os.path.join(directory, TIMING_FILE)
    if os.path.exists(timing_path):
        with open(timing_path, "r", encoding="utf-8") as timing_file:
            timing = json.load(timing_file)

    return RunArtifact(summary, frames, timing, directory)


def _ellipsoids(path: CertifiedPath, T_hat: np.ndarray) -> list[dict[str, Any] | None]:
    n = T_hat.shape[0] - 2
    C = T_hat[n:, :n]
    return [
        project_ellipsoid(cert, C).json() if cert is not None else None
        for cert in path.segment_certs
    ]


class SafeRRTHarnessClient(SafeRRTDerivedComponent):
    """Runs scenarios and checks the artifacts they leave behind.

    :param parent_logger: The parent logger that we will use for our own logging
    :param data: Collects records and steady-state maps
    :param planner: Plans the certified paths
    :param executor: Runs the certified paths
    :param baseline: Runs the LQR comparison
    """

    data: SafeRRTDataClient
    planner: SafeRRTPlannerClient
    executor: SafeRRTExecutorClient
    baseline: SafeRRTBaselineClient

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        parent_logger: logging.Logger,
        data: SafeRRTDataClient,
        planner: SafeRRTPlannerClient,
        executor: SafeRRTExecutorClient,
        baseline: SafeRRTBaselineClient,
    ) -> None:
        super().__init__("harness", parent_logger)
        self.data = data
        self.planner = planner
        self.executor = executor
        self.baseline = baseline

    # pylint: enable=too-many-arguments

    # pylint: disable=too-many-locals
    def run_scenario(self, scenario: Scenario, out_dir: str | None = None) -> RunArtifact:
        """Collect data, plan, execute and optionally run the LQR baseline.

        :param scenario: A validated scenario
        :param out_dir: Where to write the artifact (nothing is written when None)

        :returns: The artifact

        :raises NoPathError: If a single agent finds no path
        :raises PartialPlanError: If some agent of a multi-agent plan does not finish
        """

        self.log.info(f"Running scenario {scenario.name} with {scenario.agent_count} agents")
        timing: dict[str, float] = {}
        started = time.perf_counter()

        model = scenario.model()
        grid = scenario.grid()
        starts = scenario.start_cells(grid)
        goals = scenario.goal_cells(grid)

        recs = []
        T_hats = []
        for agent in scenario.agents:
            assert agent.data is not None and agent.data.seed is not None
            rec = self.data.collect_trajectory(
                model,
                x0=np.zeros(model.n),
                N=agent.data.samples,
                rng=np.random.default_rng(agent.data.seed),
                amplitude=agent.data.amplitude,
            )
            recs.append(rec)
            T_hats.append(self.data.steady_state_map(rec))
        timing["data"] = time.perf_counter() - started

        mark = time.perf_counter()
        params = scenario.planner_params()
        plan: PlanResult
        if scenario.agent_count == 1:
            plan = self.planner.grow_single(grid, starts[0], goals[0], recs[0], T_hats[0], params)
        else:
            plan = self.planner.grow_multi(grid, starts, goals, recs, T_hats, params)
        timing["plan"] = time.perf_counter() - mark

        x0s = []
        for agent, T_hat in zip(scenario.agents, T_hats):
            if agent.initial_state is not None:
                x0s.append(np.array(agent.initial_state))
            else:
                x0s.append(self.data.steady_state(T_hat, np.array(agent.start)).x_bar)

        mark = time.perf_counter()
        models = [model] * scenario.agent_count
        exec_params = scenario.exec_params()
        fleet = self.executor.execute_multi(models, plan.paths, T_hats, x0s, exec_params)
        timing["execute"] = time.perf_counter() - mark

        lqr: BaselineRun | None = None
        assert scenario.baseline is not None
        if scenario.baseline.enabled:
            mark = time.perf_counter()
            lqr = self.baseline.execute_lqr_baseline(
                models,
                plan.paths,
                T_hats,
                x0s,
                exec_params,
                recs=recs,
                weights=scenario.lqr_weights(),
            )
            timing["baseline"] = time.perf_counter() - mark

        timing["total"] = time.perf_counter() - started

        summary = self._summary(scenario, plan, recs, T_hats, x0s, fleet, lqr)
        summary["grid"] = grid.json()
        for entry, start, goal in zip(summary["agents"], starts, goals):
            entry["start_cell"] = start.json()
            entry["goal_cell"] = goal.json()

        frames = {}
        for index, trace in enumerate(fleet.traces):
            frames[f"agent{index}_certified"] = trace_frame(trace, index)
        if lqr is not None:
            for index, trace in enumerate(lqr.fleet.traces):
                frames[f"agent{index}_lqr"] = trace_frame(trace, index)

        artifact = RunArtifact(summary, frames, timing)

        if out_dir is not None:
            write_artifact(artifact, out_dir)
            for index, rec in enumerate(recs):
                self.data.save_record(rec, os.path.join(out_dir, "records", f"agent{index}"))
            self.log.info(f"Wrote artifact to {out_dir}")

        return artifact

    # pylint: enable=too-many-locals

    # pylint: disable=too-many-arguments
    def _summary(
        self,
        scenario: Scenario,
        plan: PlanResult,
        recs: Sequence[DataRecord],
        T_hats: Sequence[np.ndarray],
        x0s: Sequence[np.ndarray],
        fleet: FleetExecution,
        lqr: BaselineRun | None,
    ) -> dict[str, Any]:
        agents = []

        for index, agent in enumerate(scenario.agents):
            path = plan.paths[index]
            trace = fleet.traces[index]
            entry: dict[str, Any] = {
                "index": index,
                "name": agent.name,
                "start": agent.start,
                "goal": agent.goal,
                "record": recs[index].json(),
                "T_hat": matrix_json(T_hats[index]),
                "x0": matrix_json(x0s[index]),
                "path": path.json(),
                "ellipsoids": _ellipsoids(path, T_hats[index]),
                "tree": plan.trees[index].json(),
                "certificate_attempts": plan.trees[index].attempts,
                "certified": trace_summary(trace, violation_stats(trace, path)),
                "lqr": None,
            }
            if lqr is not None:
                entry["lqr"] = trace_summary(lqr.fleet.traces[index], lqr.stats[index])
                entry["lqr"]["gain"] = matrix_json(lqr.gains[index])
                entry["lqr"]["baseline"] = "lqr"
            agents.append(entry)

        outcomes = [trace.outcome for trace in fleet.traces]
        distance = fleet.min_pairwise_distance if len(fleet.traces) > 1 else None

        return {
            "schema_version": ARTIFACT_SCHEMA_VERSION,
            "scenario": scenario.json(),
            "plan": {
                "rounds": plan.rounds,
                "reservations": plan.table.json() if plan.table is not None else None,
            },
            "agents": agents,
            "execution": {
                "all_finished": all(outcome == ExecutionOutcome.FINISHED for outcome in outcomes),
                "aborted": any(outcome == ExecutionOutcome.ABORTED for outcome in outcomes),
                "min_pairwise_distance": distance,
            },
        }

    # pylint: enable=too-many-arguments

    def verify_artifact(self, artifact: RunArtifact) -> list[tuple[str, int, VerificationReport]]:
        """Re-check every stored certificate against the agent's embedded data record.

        :param artifact: The artifact

        :returns: (agent name, segment, report) for every certificate, segment 0 being the root and
            the terminal certificate, when stored, coming last

        :raises ArtifactError: If the artifact lacks records or paths
        """

        results = []

        for agent in artifact.summary.get("agents", []):
            if "record" not in agent or "path" not in agent:
                raise ArtifactError(f"Agent {agent.get('name')} lacks a record or a path")

            rec = record_from_json(agent["record"])
            stored = agent["path"]
            raw_certs = [stored["root_cert"], *stored["edge_certs"]]
            if stored.get("terminal_cert") is not None:
                raw_certs.append(stored["terminal_cert"])

            for segment, raw in enumerate(raw_certs):
                if raw is None:
                    continue
                report = verify_certificate(certificate_from_json(raw), rec)
                if not report.passed:
                    self.log.warning(f"Agent {agent['name']} segment {segment} failed: {report}")
                results.append((agent["name"], segment, report))

        passed = sum(1 for _, _, report in results if report.passed)
        self.log.info(f"Verified {passed} of {len(results)} certificates")
        return results

    def sweep(self, scenario: Scenario, seeds: Sequence[int]) -> pd.DataFrame:
        """Repeat a scenario over planner seeds with the LQR baseline enabled.

        :param scenario: The scenario to repeat
        :param seeds: The planner seeds

        :returns: One row per seed and agent with certified and LQR violation percentages
        """

        self.log.info(f"Sweeping {scenario.name} over {len(seeds)} seeds")
        rows = []

        for seed in seeds:
            run = scenario.with_seed(seed)
            assert run.baseline is not None
            run.baseline.enabled = True

            try:
                artifact = self.run_scenario(run)
            except (NoPathError, PartialPlanError) as ex:
                self.log.warning(f"Seed {seed}: {ex}")
                for agent in run.agents:
                    rows.append({"seed": seed, "agent": agent.name, "status": "no_path"})
                continue

            for agent in artifact.summary["agents"]:
                rows.append(
                    {
                        "seed": seed,
                        "agent": agent["name"],
                        "status": "ok",
                        "edges": len(agent["path"]["edge_certs"]),
                        "certified_percent": agent["certified"]["violation_stats"]["percent"],
                        "lqr_percent": agent["lqr"]["violation_stats"]["percent"],
                        "certified_outcome": agent["certified"]["outcome"],
                        "lqr_outcome": agent["lqr"]["outcome"],
                    }
                )

        return pd.DataFrame(rows)


"""Certified rapidly-exploring random trees for one agent or many agents in lockstep."""

# Licensed under the MIT license.

import logging
from typing import Any, Sequence

import numpy as np

from saferrt.certificates import SafeRRTCertificatesClient, contains, project_ellipsoid
from saferrt.constants import DEFAULT_PROPOSAL_ATTEMPTS
from saferrt.data import SafeRRTDataClient
from saferrt.derived_component import (
    GridError,
    NoPathError,
    PartialPlanError,
    SafeRRTDerivedComponent,
    TreeError,
)
from saferrt.models import (
    Cell,
    Certificate,
    CertificateOutcome,
    CertificateResult,
    CertifiedPath,
    DataRecord,
    GridWorld,
    OutputEllipsoid,
    PlannerParams,
    Proposal,
    TreeNode,
)
from saferrt.reservations import ReservationTable
from saferrt import workspace


class SearchTree:
    """One agent's tree, its data and the certificates it has already solved for.

    :param agent: The agent index
    :param grid: The workspace
    :param start: The root cell
    :param goal: The goal cell
    :param rec: The agent's data record
    :param T_hat: The agent's steady-state map
    :param rng: The agent's random generator
    """

    # pylint: disable=too-many-instance-attributes

    agent: int
    grid: GridWorld
    start: Cell
    goal: Cell
    rec: DataRecord
    T_hat: np.ndarray
    rng: np.random.Generator

    nodes: list[TreeNode]
    by_cell: dict[Cell, TreeNode]
    goal_node: TreeNode | None
    terminal: Certificate | None
    memo: dict[tuple[Cell, Cell], tuple[CertificateResult, OutputEllipsoid | None]]
    attempts: int

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        *,
        agent: int,
        grid: GridWorld,
        start: Cell,
        goal: Cell,
        rec: DataRecord,
        T_hat: np.ndarray,
        rng: np.random.Generator,
    ) -> None:
        self.agent = agent
        self.grid = grid
        self.start = start
        self.goal = goal
        self.rec = rec
        self.T_hat = T_hat
        self.rng = rng
        self.nodes = []
        self.by_cell = {}
        self.goal_node = None
        self.terminal = None
        self.memo = {}
        self.attempts = 0

    # pylint: enable=too-many-arguments

    @property
    def C(self) -> np.ndarray:  # pylint: disable=invalid-name
        """Output matrix as reconstructed from data."""
        return self.T_hat[self.rec.n :, : self.rec.n]

    @property
    def root(self) -> TreeNode:
        """The first vertex."""
        return self.nodes[0]

    @property
    def frontier(self) -> TreeNode:
        """The most recently committed vertex."""
        return self.nodes[-1]

    def add(
        self, cell: Cell, parent: TreeNode | None, result: CertificateResult | None
    ) -> TreeNode:
        """Insert a vertex; the root is the vertex without a parent."""
        cert = result.certificate if result is not None else None
        node = TreeNode(
            cell=cell,
            parent=parent,
            depth=0 if parent is None else parent.depth + 1,
            cert=cert,
            proj=project_ellipsoid(cert, self.C) if cert is not None else None,
            index=len(self.nodes),
        )
        self.nodes.append(node)
        self.by_cell[cell] = node
        if cell == self.goal:
            self.goal_node = node
        return node

    def nearest(self, target: Cell) -> TreeNode:
        """Vertex closest to target in l1 distance, earliest inserted on ties."""
        best = self.nodes[0]
        best_distance = workspace.manhattan(best.cell, target)
        for node in self.nodes[1:]:
            distance = workspace.manhattan(node.cell, target)
            if distance < best_distance:
                best, best_distance = node, distance
        return best

    def json(self) -> dict[str, Any]:
        """Vertices with their parents, for drawing."""
        return {
            "agent": self.agent,
            "vertices": [
                {
                    "cell": node.cell.json(),
                    "parent": node.parent.cell.json() if node.parent is not None else None,
                    "depth": node.depth,
                }
                for node in self.nodes
            ],
        }

    # pylint: enable=too-many-instance-attributes


class PlanResult:
    """Paths together with the trees and reservations that produced them.

    :param paths: One certified path per agent
    :param trees: One search tree per agent
    :param table: The reservation table (multi-agent plans only)
    :param rounds: Synchronized rounds (multi-agent) or iterations (single agent) used
    """

    paths: list[CertifiedPath]
    trees: list[SearchTree]
    table: ReservationTable | None
    rounds: int

    def __init__(
        self,
        paths: list[CertifiedPath],
        trees: list[SearchTree],
        table: ReservationTable | None,
        rounds: int,
    ) -> None:
        self.paths = paths
        self.trees = trees
        self.table = table
        self.rounds = rounds


def backtrack(tree: SearchTree, goal_node: TreeNode) -> CertifiedPath:
    """Walk parents from a vertex back to the root.

    :param tree: The tree holding the vertex
    :param goal_node: The last vertex of the path

    :returns: The path from the root with one certificate per edge and the tree's terminal
        certificate

    :raises TreeError: If the chain leaves the tree, skips a depth or lacks a certificate
    """

    chain = []
    node: TreeNode | None = goal_node

    while node is not None:
        if tree.by_cell.get(node.cell) is not node:
            raise TreeError(f"Vertex {tuple(node.cell)} is not in the tree")
        if node.parent is not None and node.depth != node.parent.depth + 1:
            raise TreeError(f"Depth jumps at vertex {tuple(node.cell)}")
        chain.append(node)
        node = node.parent

    chain.reverse()

    if chain[0] is not tree.root:
        raise TreeError("Parent chain does not reach the root")

    edge_certs = []
    for vertex in chain[1:]:
        if vertex.cert is None:
            raise TreeError(f"Edge into {tuple(vertex.cell)} has no certificate")
        edge_certs.append(vertex.cert)

    cells = [vertex.cell for vertex in chain]
    return CertifiedPath(
        cells=cells,
        waypoints=[workspace.center(tree.grid, cell) for cell in cells],
        edge_certs=edge_certs,
        root_cert=chain[0].cert,
        terminal_cert=tree.terminal if goal_node.cell == tree.goal else None,
    )


def _prefer(a: Proposal, b: Proposal, rng: np.random.Generator) -> Proposal:
    if a.heuristic != b.heuristic:
        return a if a.heuristic < b.heuristic else b
    return a if rng.integers(2) == 0 else b


def resolve_conflicts(
    proposals: Sequence[Proposal], table: ReservationTable, rng: np.random.Generator
) -> list[Proposal]:
    """Prune proposals so the survivors can be committed together.

    Proposals are handled per target layer in ascending order. Within a layer, proposals into
    slots held by other agents are dropped, then same-cell duplicates and head-on swaps are
    settled in favour of the smaller l1 distance to goal with random tie-breaks. A proposal
    reaching its goal parks it, which also blocks later layers. The table is not modified.

    :param proposals: At most one proposal per agent
    :param table: The current reservations
    :param rng: The random generator for tie-breaks

    :returns: The accepted proposals, by layer then agent
    """

    parked: dict[Cell, int] = {}
    accepted: list[Proposal] = []

    for layer in sorted({proposal.layer for proposal in proposals}):
        group = [proposal for proposal in proposals if proposal.layer == layer]

        survivors = [
            proposal
            for proposal in group
            if table.is_free(layer, proposal.c_new, proposal.agent)
            and not table.is_swap(layer, proposal.c_near, proposal.c_new, proposal.agent)
            and parked.get(proposal.c_new, layer + 1) > layer
            and (proposal.heuristic != 0 or table.can_park(proposal.c_new, proposal.agent, layer))
        ]

        by_cell: dict[Cell, Proposal] = {}
        for proposal in sorted(survivors, key=lambda p: (p.c_new, p.agent)):
            held = by_cell.get(proposal.c_new)
            by_cell[proposal.c_new] = proposal if held is None else _prefer(held, proposal, rng)

        kept = sorted(by_cell.values(), key=lambda p: p.agent)

        rejected: set[int] = set()
        for i, first in enumerate(kept):
            for second in kept[i + 1 :]:
                if first.agent in rejected or second.agent in rejected:
                    continue
                if first.c_near == second.c_new and first.c_new == second.c_near:
                    loser = second if _prefer(first, second, rng) is first else first
                    rejected.add(loser.agent)

        for proposal in kept:
            if proposal.agent in rejected:
                continue
            accepted.append(proposal)
            if proposal.heuristic == 0:
                parked[proposal.c_new] = layer

    return accepted


class SafeRRTPlannerClient(SafeRRTDerivedComponent):
    """Grows certified trees over the workspace.

    :param parent_logger: The parent logger that we will use for our own logging
    :param data: The data component used for steady states
    :param certificates: The certificate component used for every edge
    """

    data: SafeRRTDataClient
    certificates: SafeRRTCertificatesClient

    def __init__(
        self,
        parent_logger: logging.Logger,
        data: SafeRRTDataClient,
        certificates: SafeRRTCertificatesClient,
    ) -> None:
        super().__init__("planner", parent_logger)
        self.data = data
        self.certificates = certificates

    def _certify(
        self,
        tree: SearchTree,
        key: tuple[Cell, Cell],
        rect: workspace.Rect,
        params: PlannerParams,
    ) -> tuple[CertificateResult, OutputEllipsoid | None]:
        """Certificate for a rectangle centered on its own midpoint, memoized per cell pair."""

        if key in tree.memo:
            return tree.memo[key]

        Fxy, gxy_world = workspace.rect_halfspace(rect)
        middle = workspace.box_center(rect)
        pair = self.data.steady_state(tree.T_hat, middle)

        try:
            poly = workspace.lift_to_state(
                Fxy, gxy_world, pair.x_bar, tree.C, params.F_extra, params.g_extra
            )
        except GridError as ex:
            self.log.debug(f"Agent {tree.agent}: no polytope around {middle}: {ex.message}")
            tree.memo[key] = (CertificateResult(CertificateOutcome.INFEASIBLE), None)
            return tree.memo[key]

        result = self.certificates.solve_certificate(
            tree.rec, poly, params.contraction, pair.x_bar, middle
        )

        projection = None
        if result.certificate is not None:
            projection = project_ellipsoid(result.certificate, tree.C)

        tree.memo[key] = (result, projection)
        return tree.memo[key]

    def _cell_certificate(
        self, tree: SearchTree, cell: Cell, role: str, params: PlannerParams
    ) -> CertificateResult | None:
        """Certificate over a single cell centered on it, or None with a warning."""

        rect = workspace.cell_rect(tree.grid, cell)
        result, _ = self._certify(tree, (cell, cell), rect, params)

        if not result.feasible:
            self.log.warning(
                f"Agent {tree.agent}: no {role} certificate at {tuple(cell)} "
                + f"({result.outcome.value})"
            )
            return None

        return result

    def _plant(self, tree: SearchTree, params: PlannerParams) -> None:
        """Insert the root and solve for the terminal certificate over the goal cell.

        Either cell certificate may be missing; execution then runs that stretch unmonitored
        (root) or finishes on the last edge (terminal).
        """

        tree.add(tree.start, None, self._cell_certificate(tree, tree.start, "root", params))

        terminal = self._cell_certificate(tree, tree.goal, "terminal", params)
        tree.terminal = terminal.certificate if terminal is not None else None

    def _sample(self, tree: SearchTree, beta: float) -> Cell:
        if tree.rng.random() < beta:
            return tree.goal
        xmin, xmax, ymin, ymax = tree.grid.bounds
        point = np.array([tree.rng.uniform(xmin, xmax), tree.rng.uniform(ymin, ymax)])
        return workspace.snap(tree.grid, point)

    def _propose(self, tree: SearchTree, params: PlannerParams) -> Proposal | None:
        """Run one sample through the single-agent pipeline.

        :returns: A certified proposal, or None if this sample was rejected
        """

        tree.attempts += 1

        c_rand = self._sample(tree, params.beta)
        near = tree.nearest(c_rand)
        c_new = workspace.best_neighbour(tree.grid, near.cell, c_rand)

        if c_new is None or c_new in tree.by_cell:
            return None

        _, _, rect = workspace.box_halfspace(tree.grid, near.cell, c_new)
        result, projection = self._certify(tree, (near.cell, c_new), rect, params)

        if result.certificate is None or projection is None:
            self.log.debug(
                f"Agent {tree.agent}: edge {tuple(near.cell)}->{tuple(c_new)} "
                + f"{result.outcome.value}"
            )
            return None

        if near.parent is None:
            c_mid = workspace.center(tree.grid, near.cell)
        else:
            c_mid = workspace.center(tree.grid, workspace.shared_cell(near.parent.cell, near.cell))

        if not contains(projection, c_mid) or (
            near.proj is not None and not contains(near.proj, c_mid)
        ):
            self.log.debug(
                f"Agent {tree.agent}: edge {tuple(near.cell)}->{tuple(c_new)} fails overlap"
            )
            return None

        return Proposal(
            agent=tree.agent,
            c_near=near.cell,
            c_new=c_new,
            layer=near.depth + 1,
            cert=result.certificate,
            proj=projection,
            heuristic=workspace.manhattan(c_new, tree.goal),
        )

    def _commit(self, tree: SearchTree, proposal: Proposal) -> TreeNode:
        near = tree.by_cell[proposal.c_near]
        return tree.add(proposal.c_new, near, tree.memo[(proposal.c_near, proposal.c_new)][0])

    def _check_endpoints(self, grid: GridWorld, start: Cell, goal: Cell) -> None:
        workspace.check_cell(grid, start)
        workspace.check_cell(grid, goal)

        if grid.is_blocked(goal):
            raise NoPathError(f"Goal {tuple(goal)} is blocked", 0)

        if grid.is_blocked(start):
            raise GridError(f"Start {tuple(start)} is blocked")

    # pylint: disable=too-many-arguments
    def grow_single(
        self,
        grid: GridWorld,
        start: Cell,
        goal: Cell,
        rec: DataRecord,
        T_hat: np.ndarray,
        params: PlannerParams,
    ) -> PlanResult:
        """Grow one tree until it contains the goal.

        :param grid: The workspace
        :param start: The start cell
        :param goal: The goal cell
        :param rec: The agent's data record
        :param T_hat: The agent's steady-state map
        :param params: The planner parameters

        :returns: The plan with its single path and tree

        :raises NoPathError: If the goal is blocked or the iteration budget runs out
        """

        self.log.info(
            f"Planning single agent {tuple(start)} -> {tuple(goal)} "
            + f"(beta={params.beta}, lambda={params.contraction}, seed={params.seed})"
        )

        self._check_endpoints(grid, start, goal)

        tree = SearchTree(
            agent=0,
            grid=grid,
            start=start,
            goal=goal,
            rec=rec,
            T_hat=T_hat,
            rng=np.random.default_rng(params.seed),
        )
        self._plant(tree, params)

        while tree.goal_node is None:
            if tree.attempts >= params.max_iters:
                raise NoPathError("Iteration budget exhausted", tree.attempts)

            proposal = self._propose(tree, params)
            if proposal is not None:
                self._commit(tree, proposal)

        path = backtrack(tree, tree.goal_node)
        self.log.info(
            f"Found path with {path.edge_count} edges after {tree.attempts} iterations "
            + f"({len(tree.nodes)} vertices)"
        )
        return PlanResult([path], [tree], None, tree.attempts)

    def plan_single(
        self,
        grid: GridWorld,
        start: Cell,
        goal: Cell,
        rec: DataRecord,
        T_hat: np.ndarray,
        params: PlannerParams,
    ) -> CertifiedPath:
        """Plan a certified path for one agent.

        :returns: The certified path

        :raises NoPathError: If the goal is blocked or the iteration budget runs out
        """
        return self.grow_single(grid, start, goal, rec, T_hat, params).paths[0]

    def grow_multi(
        self,
        grid: GridWorld,
        starts: Sequence[Cell],
        goals: Sequence[Cell],
        recs: Sequence[DataRecord],
        T_hats: Sequence[np.ndarray],
        params: PlannerParams,
    ) -> PlanResult:
        """Grow one tree per agent in synchronized rounds against a shared reservation table.

        :param grid: The workspace
        :param starts: Pairwise distinct start cells
        :param goals: Pairwise distinct goal cells
        :param recs: Per-agent data records
        :param T_hats: Per-agent steady-state maps
        :param params: The planner parameters (the seed is shared and spawned per agent)

        :returns: The plan with one path and tree per agent plus the reservation table

        :raises PartialPlanError: If the layer budget runs out first
        """

        count = len(starts)
        self.log.info(f"Planning {count} agents (layer budget {params.layer_budget})")

        if not count == len(goals) == len(recs) == len(T_hats):
            raise GridError("Every agent needs a start, a goal, a record and a map")

        if len(set(starts)) != count or len(set(goals)) != count:
            raise GridError("Starts and goals must be pairwise distinct")

        for start, goal in zip(starts, goals):
            self._check_endpoints(grid, start, goal)

        seeds = np.random.SeedSequence(params.seed).spawn(count + 1)
        arbiter = np.random.default_rng(seeds[count])
        table = ReservationTable(grid.dims)
        trees = []

        for agent in range(count):
            tree = SearchTree(
                agent=agent,
                grid=grid,
                start=starts[agent],
                goal=goals[agent],
                rec=recs[agent],
                T_hat=T_hats[agent],
                rng=np.random.default_rng(seeds[agent]),
            )
            self._plant(tree, params)
            table.reserve(0, starts[agent], agent)
            trees.append(tree)

        for tree in trees:
            if tree.goal_node is not None:
                table.park(tree.goal, tree.agent, 0)

        rounds = 0
        while any(tree.goal_node is None for tree in trees):
            if rounds >= params.layer_budget:
                unfinished = [tree.agent for tree in trees if tree.goal_node is None]
                raise PartialPlanError(unfinished, rounds)

            rounds += 1
            self._round(trees, table, arbiter, params)

        self.log.info(f"All {count} agents reached their goals after {rounds} rounds")
        return PlanResult(
            [backtrack(tree, tree.goal_node) for tree in trees if tree.goal_node is not None],
            trees,
            table,
            rounds,
        )

    def plan_multi(
        self,
        grid: GridWorld,
        starts: Sequence[Cell],
        goals: Sequence[Cell],
        recs: Sequence[DataRecord],
        T_hats: Sequence[np.ndarray],
        params: PlannerParams,
    ) -> list[CertifiedPath]:
        """Plan conflict-free certified paths for several agents.

        :returns: One certified path per agent

        :raises PartialPlanError: If the layer budget runs out first
        """
        return self.grow_multi(grid, starts, goals, recs, T_hats, params).paths

    # pylint: enable=too-many-arguments

    def _round(
        self,
        trees: list[SearchTree],
        table: ReservationTable,
        arbiter: np.random.Generator,
        params: PlannerParams,
    ) -> None:
        """One synchronized round: propose, resolve, commit, then hold waiting agents in place."""

        proposals = []

        for tree in trees:
            if tree.goal_node is not None:
                continue
            for _ in range(DEFAULT_PROPOSAL_ATTEMPTS):
                if tree.attempts >= params.max_iters:
                    break
                proposal = self._propose(tree, params)
                if proposal is not None:
                    proposals.append(proposal)
                    break

        accepted = resolve_conflicts(proposals, table, arbiter)
        moved = set()

        for proposal in accepted:
            tree = trees[proposal.agent]
            self._commit(tree, proposal)
            table.reserve(proposal.layer, proposal.c_new, proposal.agent)
            table.reserve_move(proposal.layer, proposal.c_near, proposal.c_new, proposal.agent)
            if proposal.c_new == tree.goal:
                table.park(tree.goal, tree.agent, proposal.layer)
            moved.add(proposal.agent)

        for proposal in proposals:
            if proposal.agent not in moved:
                self.log.debug(f"Rejected {proposal}")

        for tree in trees:
            if tree.goal_node is not None or tree.agent in moved:
                continue
            frontier = tree.frontier
            table.reserve(frontier.depth + 1, frontier.cell, tree.agent)

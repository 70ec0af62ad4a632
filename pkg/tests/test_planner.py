#!/usr/bin/env python3

"""Tests for single- and multi-agent certified tree growth."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import saferrt
from saferrt import lti, workspace
from saferrt.certificates import (
    contains,
    project_ellipsoid,
    sampled_invariance_check,
    verify_certificate,
)
from saferrt.models import (
    Cell,
    Certificate,
    CertificateOutcome,
    CertificateResult,
    DataRecord,
    GridWorld,
    Obstacle,
    OutputEllipsoid,
    PlannerParams,
    Polytope,
    Proposal,
    TreeNode,
)
from saferrt.planner import SearchTree, backtrack, resolve_conflicts
from saferrt.reservations import ReservationTable

# pylint: disable=redefined-outer-name


def unit_certificate() -> Certificate:
    """A placeholder certificate for bookkeeping tests."""
    return Certificate(
        P=np.eye(4),
        S=np.zeros((6, 4)),
        K=np.zeros((2, 4)),
        G2=np.zeros((6, 2)),
        contraction=0.94,
        center_state=np.zeros(4),
        center_output=np.zeros(2),
        polytope=Polytope(np.eye(4), np.ones(4)),
    )


def bookkeeping_tree(grid: GridWorld) -> SearchTree:
    """A tree whose data is never solved against."""
    T_hat = np.zeros((6, 6))
    T_hat[4:, :2] = np.eye(2)
    rec = DataRecord(np.zeros((2, 6)), np.zeros((4, 6)), np.zeros((4, 6)), np.zeros((2, 6)))
    return SearchTree(
        agent=0,
        grid=grid,
        start=Cell(0, 0),
        goal=Cell(2, 2),
        rec=rec,
        T_hat=T_hat,
        rng=np.random.default_rng(0),
    )


def proposal(agent: int, near: Cell, new: Cell, layer: int, heuristic: int) -> Proposal:
    """A proposal with a placeholder certificate."""
    return Proposal(
        agent=agent,
        c_near=near,
        c_new=new,
        layer=layer,
        cert=unit_certificate(),
        proj=OutputEllipsoid(np.eye(2), np.zeros(2)),
        heuristic=heuristic,
    )


@pytest.fixture(scope="session")
def client() -> saferrt.SafeRRTClient:
    """Get the client.

    :returns: A default client
    """
    return saferrt.SafeRRTClient()


@pytest.fixture(scope="session")
def small_grid() -> GridWorld:
    """Get a 3 x 3 obstacle-free grid.

    :returns: The grid
    """
    return workspace.build_grid((0.0, 30.0, 0.0, 30.0), 10.0, [])


@pytest.fixture(scope="session")
def cw_grid() -> GridWorld:
    """Get a 5 x 5 spacecraft workspace with one debris square in the middle.

    :returns: The grid
    """
    return workspace.build_grid((0.0, 50.0, 0.0, 50.0), 10.0, [Obstacle((25.0, 25.0), 4.0)])


@pytest.fixture(scope="session")
def cw_data(client):
    """Get two agents' records and steady-state maps from the spacecraft model.

    :returns: ([rec_a, rec_b], [T_hat_a, T_hat_b])
    """
    model = lti.discretize_zoh(lti.cw_inplane_model(0.11), 30.0)
    recs = [
        client.data.collect_trajectory(
            model, x0=np.zeros(4), N=20, rng=np.random.default_rng(seed), amplitude=0.01
        )
        for seed in (1, 2)
    ]
    return recs, [client.data.steady_state_map(rec) for rec in recs]


def params(seed: int = 0, **overrides) -> PlannerParams:
    """Planner parameters with the default search settings."""
    values = {"beta": 0.2, "contraction": 0.94, "max_iters": 10_000, "layer_budget": 500}
    values.update(overrides)
    return PlannerParams(seed=seed, **values)


def test_backtrack(small_grid):
    """Backtracking returns root-to-goal cells with one certificate per edge."""
    tree = bookkeeping_tree(small_grid)
    root = tree.add(Cell(0, 0), None, None)
    result = CertificateResult(CertificateOutcome.FEASIBLE, unit_certificate())
    middle = tree.add(Cell(0, 1), root, result)
    tree.add(Cell(1, 0), root, result)
    leaf = tree.add(Cell(1, 1), middle, result)

    path = backtrack(tree, leaf)
    assert path.cells == [Cell(0, 0), Cell(0, 1), Cell(1, 1)]
    assert path.edge_count == 2
    assert len(path.edge_certs) == 2
    assert path.root_cert is None
    assert np.allclose(path.waypoints[2], [15.0, 15.0])
    assert leaf.depth == 2


def test_backtrack_foreign_vertex(small_grid):
    """A vertex outside the tree is refused."""
    tree = bookkeeping_tree(small_grid)
    root = tree.add(Cell(0, 0), None, None)
    stray = TreeNode(Cell(0, 1), root, 1, unit_certificate(), None, 7)
    with pytest.raises(saferrt.TreeError):
        backtrack(tree, stray)


def test_nearest_prefers_earliest(small_grid):
    """Ties in l1 distance go to the earliest inserted vertex."""
    tree = bookkeeping_tree(small_grid)
    result = CertificateResult(CertificateOutcome.FEASIBLE, unit_certificate())
    root = tree.add(Cell(1, 1), None, None)
    first = tree.add(Cell(1, 2), root, result)
    tree.add(Cell(2, 1), root, result)
    assert tree.nearest(Cell(2, 2)) is first
    assert tree.nearest(Cell(1, 1)) is root
    assert tree.frontier.cell == Cell(2, 1)


def test_resolve_same_cell_prefers_closer():
    """Two agents aiming at one slot leave the one nearer its goal."""
    table = ReservationTable((10, 10))
    survivors = resolve_conflicts(
        [proposal(0, Cell(1, 1), Cell(1, 2), 2, 5), proposal(1, Cell(1, 3), Cell(1, 2), 2, 3)],
        table,
        np.random.default_rng(0),
    )
    assert [p.agent for p in survivors] == [1]


def test_resolve_same_cell_tie():
    """Equal distances keep exactly one proposal."""
    table = ReservationTable((10, 10))
    survivors = resolve_conflicts(
        [proposal(0, Cell(1, 1), Cell(1, 2), 2, 4), proposal(1, Cell(1, 3), Cell(1, 2), 2, 4)],
        table,
        np.random.default_rng(0),
    )
    assert len(survivors) == 1


def test_resolve_swap():
    """A head-on exchange keeps exactly one mover."""
    table = ReservationTable((10, 10))
    survivors = resolve_conflicts(
        [proposal(0, Cell(1, 1), Cell(1, 2), 3, 6), proposal(1, Cell(1, 2), Cell(1, 1), 3, 2)],
        table,
        np.random.default_rng(0),
    )
    assert [p.agent for p in survivors] == [1]


def test_resolve_against_table():
    """Held slots and committed opposite moves reject proposals."""
    table = ReservationTable((10, 10))
    table.reserve(2, Cell(5, 5), 1)
    table.reserve_move(4, Cell(7, 7), Cell(7, 8), 1)
    survivors = resolve_conflicts(
        [
            proposal(0, Cell(5, 4), Cell(5, 5), 2, 3),
            proposal(2, Cell(7, 8), Cell(7, 7), 4, 3),
            proposal(3, Cell(0, 0), Cell(0, 1), 1, 9),
        ],
        table,
        np.random.default_rng(0),
    )
    assert [p.agent for p in survivors] == [3]


def test_resolve_parked_goal_blocks_later_layers():
    """A goal reached at one layer blocks other agents at later layers."""
    table = ReservationTable((10, 10))
    survivors = resolve_conflicts(
        [proposal(0, Cell(2, 1), Cell(2, 2), 2, 0), proposal(1, Cell(2, 3), Cell(2, 2), 3, 4)],
        table,
        np.random.default_rng(0),
    )
    assert [p.agent for p in survivors] == [0]


def test_resolve_goal_needs_parking():
    """A goal held by another agent later cannot be reached now."""
    table = ReservationTable((10, 10))
    table.reserve(6, Cell(2, 2), 1)
    survivors = resolve_conflicts(
        [proposal(0, Cell(2, 1), Cell(2, 2), 2, 0)], table, np.random.default_rng(0)
    )
    assert not survivors


def test_plan_single(client, cw_grid, cw_data):
    """A certified path connects start and goal through free neighbouring cells."""
    recs, T_hats = cw_data
    start, goal = Cell(0, 0), Cell(4, 4)
    plan = client.planner.grow_single(cw_grid, start, goal, recs[0], T_hats[0], params(3))
    path = plan.paths[0]
    C = T_hats[0][4:, :4]

    assert path.cells[0] == start
    assert path.cells[-1] == goal
    assert len(path.edge_certs) == len(path.cells) - 1
    for a, b in zip(path.cells, path.cells[1:]):
        assert workspace.manhattan(a, b) == 1
        assert not cw_grid.is_blocked(b)
    for cert in path.edge_certs:
        assert verify_certificate(cert, recs[0]).passed
    for index in range(1, len(path.cells)):
        cert = path.edge_certs[index - 1]
        assert np.allclose(C @ cert.center_state, cert.center_output, atol=1e-6)

    tree = plan.trees[0]
    for node in tree.nodes[1:]:
        assert node.depth == node.parent.depth + 1


def test_plan_single_overlap(client, cw_grid, cw_data):
    """Every edge's ellipsoid contains the center of the cell it leaves."""
    recs, T_hats = cw_data
    plan = client.planner.grow_single(
        cw_grid, Cell(0, 0), Cell(0, 4), recs[0], T_hats[0], params(5)
    )
    tree = plan.trees[0]
    for node in tree.nodes[1:]:
        leaving = workspace.center(cw_grid, node.parent.cell)
        assert contains(node.proj, leaving)


def test_plan_single_deterministic(client, cw_grid, cw_data):
    """The same seed grows the same path."""
    recs, T_hats = cw_data
    first = client.planner.plan_single(
        cw_grid, Cell(0, 0), Cell(4, 0), recs[0], T_hats[0], params(11)
    )
    second = client.planner.plan_single(
        cw_grid, Cell(0, 0), Cell(4, 0), recs[0], T_hats[0], params(11)
    )
    assert first.cells == second.cells


def test_blocked_goal(client, cw_grid, cw_data):
    """A goal inside debris is reported before any search."""
    recs, T_hats = cw_data
    with pytest.raises(saferrt.NoPathError) as error:
        client.planner.plan_single(cw_grid, Cell(0, 0), Cell(2, 2), recs[0], T_hats[0], params())
    assert error.value.iterations == 0


def test_blocked_start(client, cw_grid, cw_data):
    """A start inside debris is refused."""
    recs, T_hats = cw_data
    with pytest.raises(saferrt.GridError):
        client.planner.plan_single(cw_grid, Cell(2, 2), Cell(0, 0), recs[0], T_hats[0], params())


def test_iteration_budget(client, cw_grid, cw_data):
    """A budget of one sample cannot reach a distant goal."""
    recs, T_hats = cw_data
    with pytest.raises(saferrt.NoPathError) as error:
        client.planner.plan_single(
            cw_grid, Cell(0, 0), Cell(4, 4), recs[0], T_hats[0], params(max_iters=1)
        )
    assert error.value.iterations == 1


def test_plan_multi(client, cw_grid, cw_data):
    """Crossing agents finish without sharing a slot or swapping cells."""
    recs, T_hats = cw_data
    starts = [Cell(0, 0), Cell(4, 0)]
    goals = [Cell(4, 4), Cell(0, 4)]
    plan = client.planner.grow_multi(cw_grid, starts, goals, recs, T_hats, params(7))

    assert len(plan.paths) == 2
    for agent, path in enumerate(plan.paths):
        assert path.cells[0] == starts[agent]
        assert path.cells[-1] == goals[agent]
        for layer, cell in enumerate(path.cells):
            assert plan.table.owner(layer, cell) == agent

    moves = {(layer, a, b): agent for layer, a, b, agent in plan.table.moves()}
    for (layer, a, b), agent in moves.items():
        assert moves.get((layer, b, a), agent) == agent

    slots = [(layer, cell) for layer, cell, _ in plan.table.entries()]
    assert len(slots) == len(set(slots))


def test_plan_multi_deterministic(client, cw_grid, cw_data):
    """The same seed produces the same paths for every agent."""
    recs, T_hats = cw_data
    starts = [Cell(0, 0), Cell(0, 4)]
    goals = [Cell(4, 0), Cell(4, 4)]
    first = client.planner.plan_multi(cw_grid, starts, goals, recs, T_hats, params(2))
    second = client.planner.plan_multi(cw_grid, starts, goals, recs, T_hats, params(2))
    assert [path.cells for path in first] == [path.cells for path in second]


def test_plan_multi_layer_budget(client, cw_grid, cw_data):
    """Running out of rounds names the unfinished agents."""
    recs, T_hats = cw_data
    with pytest.raises(saferrt.PartialPlanError) as error:
        client.planner.plan_multi(
            cw_grid,
            [Cell(0, 0), Cell(4, 0)],
            [Cell(4, 4), Cell(0, 4)],
            recs,
            T_hats,
            params(layer_budget=1),
        )
    assert error.value.unfinished == [0, 1]
    assert error.value.layers == 1


def test_plan_multi_distinct_starts(client, cw_grid, cw_data):
    """Agents may not share a start cell."""
    recs, T_hats = cw_data
    with pytest.raises(saferrt.GridError):
        client.planner.plan_multi(
            cw_grid, [Cell(0, 0), Cell(0, 0)], [Cell(4, 4), Cell(0, 4)], recs, T_hats, params()
        )


def test_plan_single_terminal(client, cw_grid, cw_data):
    """The goal cell has its own certificate and the last edge's ellipsoid reaches the goal."""
    recs, T_hats = cw_data
    goal = Cell(4, 4)
    path = client.planner.plan_single(cw_grid, Cell(0, 0), goal, recs[0], T_hats[0], params(3))
    goal_center = workspace.center(cw_grid, goal)
    C = T_hats[0][4:, :4]

    assert path.terminal_cert is not None
    assert np.allclose(path.terminal_cert.center_output, goal_center)
    assert verify_certificate(path.terminal_cert, recs[0]).passed
    assert project_ellipsoid(path.edge_certs[-1], C).value(goal_center) <= 1.0 + 1e-9
    assert path.segment_certs[-1] is path.terminal_cert
    assert len(path.segment_certs) == len(path.cells) + 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planned_certificates_contract(client, cw_grid, cw_data, seed):
    """Boundary points of every planned ellipsoid shrink by at least the contraction factor."""
    recs, T_hats = cw_data
    path = client.planner.plan_single(
        cw_grid, Cell(0, 0), Cell(4, 4), recs[0], T_hats[0], params(seed)
    )
    rng = np.random.default_rng(seed)
    for cert in path.segment_certs:
        if cert is None:
            continue
        assert sampled_invariance_check(cert, recs[0], 200, rng) <= 0.94 + 1e-6


def test_plan_with_velocity_rows(client, cw_grid, cw_data):
    """Extra state rows reach every certificate's polytope."""
    recs, T_hats = cw_data
    F_extra = np.hstack([np.zeros((4, 2)), workspace.AXIS_FACETS])
    g_extra = np.full(4, 5.0)
    path = client.planner.plan_single(
        cw_grid,
        Cell(0, 0),
        Cell(0, 4),
        recs[0],
        T_hats[0],
        params(5, F_extra=F_extra, g_extra=g_extra),
    )
    for cert in path.edge_certs:
        assert cert.polytope.q == 8
        assert np.array_equal(cert.polytope.F[4:], F_extra)


def test_state_rows_exclude_region(client, cw_grid, cw_data):
    """Cells whose steady states break the extra rows are never certified."""
    recs, T_hats = cw_data
    F_extra = np.array([[1.0, 0.0, 0.0, 0.0]])
    with pytest.raises(saferrt.NoPathError):
        client.planner.plan_single(
            cw_grid,
            Cell(0, 0),
            Cell(0, 4),
            recs[0],
            T_hats[0],
            params(5, max_iters=300, F_extra=F_extra, g_extra=np.array([25.0])),
        )

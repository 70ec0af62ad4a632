#!/usr/bin/env python3

"""Tests for the grid workspace."""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import saferrt
from saferrt import workspace
from saferrt.models import Cell, GridWorld, Obstacle

# pylint: disable=redefined-outer-name

BOUNDS = (-50.0, 50.0, -50.0, 50.0)

DEBRIS = [(-30, 40), (-40, -30), (30, 30), (40, -20), (-30, 10), (10, -30), (0, 0)]


@pytest.fixture(scope="session")
def open_grid() -> GridWorld:
    """Get an obstacle-free grid.

    :returns: The 10 x 10 grid
    """
    return workspace.build_grid(BOUNDS, 10.0, [])


@pytest.fixture(scope="session")
def debris_grid() -> GridWorld:
    """Get the seven debris grid.

    :returns: The cluttered grid
    """
    return workspace.build_grid(BOUNDS, 10.0, [Obstacle(c, 8.0) for c in DEBRIS])


def test_grid_dimensions(open_grid):
    """A 100 m square with 10 m cells has 100 cells."""
    assert open_grid.dims == (10, 10)
    assert len(open_grid.free_cells()) == 100


def test_single_debris_blocks_four_cells():
    """A 16 m square at the origin blocks the central 2 x 2 cells."""
    grid = workspace.build_grid(BOUNDS, 10.0, [Obstacle((0.0, 0.0), 8.0)])
    blocked = {Cell(int(r), int(c)) for r, c in zip(*np.nonzero(grid.blocked))}
    assert blocked == {Cell(4, 4), Cell(4, 5), Cell(5, 4), Cell(5, 5)}


def test_touching_boundary_blocks():
    """Closed rectangles intersecting on a boundary count as blocked."""
    grid = workspace.build_grid(BOUNDS, 10.0, [Obstacle((5.0, 5.0), 5.0)])
    assert grid.is_blocked(Cell(5, 5))
    assert grid.is_blocked(Cell(4, 4))
    assert grid.is_blocked(Cell(6, 6))
    assert not grid.is_blocked(Cell(7, 7))


def test_non_divisible_bounds():
    """Bounds must hold a whole number of cells."""
    with pytest.raises(saferrt.GridError):
        workspace.build_grid((0.0, 25.0, 0.0, 20.0), 10.0, [])


def test_debris_keeps_scenario_endpoints_free(debris_grid):
    """The starts and goals of both agents are free."""
    for point in [(-45, -45), (45, 45), (-45, 45), (45, -45)]:
        c = workspace.snap(debris_grid, np.array(point, dtype=float))
        assert np.allclose(workspace.center(debris_grid, c), point)


def test_center(open_grid):
    """Cell centers follow the lower-left origin convention."""
    assert np.allclose(workspace.center(open_grid, Cell(0, 0)), [-45.0, -45.0])
    assert np.allclose(workspace.center(open_grid, Cell(9, 9)), [45.0, 45.0])
    assert np.allclose(workspace.center(open_grid, Cell(2, 7)), [25.0, -25.0])
    for row in range(10):
        for col in range(10):
            mirrored = Cell(9 - row, 9 - col)
            assert np.allclose(
                workspace.center(open_grid, mirrored), -workspace.center(open_grid, Cell(row, col))
            )
    with pytest.raises(saferrt.GridError):
        workspace.center(open_grid, Cell(10, 0))


def test_snap(debris_grid):
    """Snapping goes to the nearest free cell."""
    for c in debris_grid.free_cells():
        assert workspace.snap(debris_grid, workspace.center(debris_grid, c)) == c

    snapped = workspace.snap(debris_grid, np.array([5.0, 5.0]))
    assert not debris_grid.is_blocked(snapped)
    assert workspace.manhattan(snapped, Cell(5, 5)) == 1

    assert workspace.snap(debris_grid, np.array([500.0, 500.0])) == Cell(9, 9)


def test_snap_tie_breaks_row_major(open_grid):
    """A point equidistant from four centers snaps to the lowest row then column."""
    assert workspace.snap(open_grid, np.array([0.0, 0.0])) == Cell(4, 4)


def test_snap_without_free_cells():
    """A fully blocked grid cannot snap."""
    grid = workspace.build_grid((0.0, 10.0, 0.0, 10.0), 10.0, [Obstacle((5.0, 5.0), 1.0)])
    with pytest.raises(saferrt.GridError):
        workspace.snap(grid, np.array([5.0, 5.0]))


def test_neighbors4(open_grid):
    """Interior, edge and corner cells have 4, 3 and 2 neighbours."""
    assert workspace.neighbors4(open_grid, Cell(5, 5)) == [
        Cell(6, 5),
        Cell(5, 6),
        Cell(4, 5),
        Cell(5, 4),
    ]
    assert len(workspace.neighbors4(open_grid, Cell(0, 5))) == 3
    assert len(workspace.neighbors4(open_grid, Cell(0, 0))) == 2


def test_best_neighbour(open_grid):
    """The neighbour strictly closer to the target wins."""
    assert workspace.best_neighbour(open_grid, Cell(2, 2), Cell(2, 5)) == Cell(2, 3)
    assert workspace.best_neighbour(open_grid, Cell(2, 2), Cell(6, 2)) == Cell(3, 2)


def test_best_neighbour_tie_order(open_grid):
    """Diagonal targets tie between two neighbours and N comes before E."""
    assert workspace.best_neighbour(open_grid, Cell(2, 2), Cell(5, 5)) == Cell(3, 2)
    assert workspace.best_neighbour(open_grid, Cell(2, 2), Cell(0, 5)) == Cell(2, 3)
    assert workspace.best_neighbour(open_grid, Cell(2, 2), Cell(0, 0)) == Cell(1, 2)


def test_best_neighbour_all_blocked():
    """A walled-in cell has no neighbour."""
    centers = [(15.0, 25.0), (25.0, 15.0), (15.0, 5.0), (5.0, 15.0)]
    walls = [Obstacle(center, 1.0) for center in centers]
    grid = workspace.build_grid((0.0, 30.0, 0.0, 30.0), 10.0, walls)
    assert workspace.best_neighbour(grid, Cell(1, 1), Cell(2, 2)) is None


def test_best_neighbour_never_blocked(debris_grid):
    """Returned neighbours are always free."""
    rng = np.random.default_rng(11)
    free = debris_grid.free_cells()
    for _ in range(300):
        c_near = free[rng.integers(len(free))]
        c_rand = Cell(int(rng.integers(10)), int(rng.integers(10)))
        chosen = workspace.best_neighbour(debris_grid, c_near, c_rand)
        if chosen is not None:
            assert debris_grid.in_bounds(chosen)
            assert not debris_grid.is_blocked(chosen)


def test_shared_cell(open_grid):
    """The shared cell is the edge destination and lies in the previous box."""
    assert workspace.shared_cell(Cell(2, 2), Cell(2, 3)) == Cell(2, 3)
    with pytest.raises(saferrt.GridError):
        workspace.shared_cell(Cell(2, 2), Cell(3, 3))

    c0, c1, c2 = Cell(2, 2), Cell(2, 3), Cell(3, 3)
    shared = workspace.shared_cell(c1, c2)
    _, _, rect = workspace.box_halfspace(open_grid, c0, c1)
    x, y = workspace.center(open_grid, workspace.shared_cell(c0, c1))
    assert rect[0] <= x <= rect[1] and rect[2] <= y <= rect[3]
    assert shared == c2


def test_box_halfspace(open_grid):
    """Horizontal edges produce 20 m x 10 m rectangles."""
    Fxy, gxy, rect = workspace.box_halfspace(open_grid, Cell(0, 0), Cell(0, 1))
    assert rect == (-50.0, -30.0, -50.0, -40.0)
    assert np.array_equal(np.abs(Fxy).sum(axis=1), np.ones(4))
    assert np.array_equal(gxy, [-30.0, 50.0, -40.0, 50.0])
    for c in (Cell(0, 0), Cell(0, 1)):
        assert np.all(Fxy @ workspace.center(open_grid, c) <= gxy)
    with pytest.raises(saferrt.GridError):
        workspace.box_halfspace(open_grid, Cell(0, 0), Cell(1, 1))


def test_lift_child_center_margins(open_grid):
    """The child center is h/2 from three faces and 3h/2 from the far face."""
    h = 10.0
    C = np.hstack([np.eye(2), np.zeros((2, 2))])
    Fxy, gxy, _ = workspace.box_halfspace(open_grid, Cell(4, 4), Cell(4, 5))
    child = workspace.center(open_grid, Cell(4, 5))
    poly = workspace.lift_to_state(Fxy, gxy, np.concatenate([child, [0.0, 0.0]]), C)
    assert poly.q == 4
    assert sorted(poly.g.tolist()) == [h / 2, h / 2, h / 2, 3 * h / 2]
    assert np.array_equal(poly.F, Fxy @ C)


def test_lift_extra_velocity_rows(open_grid):
    """Velocity bounds are unchanged around a zero-velocity steady state."""
    C = np.hstack([np.eye(2), np.zeros((2, 2))])
    Fxy, gxy, rect = workspace.box_halfspace(open_grid, Cell(4, 4), Cell(5, 4))
    x_bar = np.concatenate([workspace.box_center(rect), [0.0, 0.0]])
    F_extra = np.hstack([np.zeros((4, 2)), workspace.AXIS_FACETS])
    g_extra = np.full(4, 0.5)
    poly = workspace.lift_to_state(Fxy, gxy, x_bar, C, F_extra, g_extra)
    assert poly.q == 8
    assert np.array_equal(poly.g[4:], g_extra)
    assert np.all(poly.g > 0)


def test_lift_rejects_outside_center(open_grid):
    """A center on the boundary is refused."""
    C = np.hstack([np.eye(2), np.zeros((2, 2))])
    Fxy, gxy, _ = workspace.box_halfspace(open_grid, Cell(0, 0), Cell(0, 1))
    with pytest.raises(saferrt.GridError):
        workspace.lift_to_state(Fxy, gxy, np.array([-50.0, -45.0, 0.0, 0.0]), C)

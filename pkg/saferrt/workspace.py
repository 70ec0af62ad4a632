"""Grid workspace geometry: blocking, cell queries and local admissible sets."""

# Licensed under the MIT license.

import math
from typing import Sequence

import numpy as np

from saferrt.derived_component import GridError
from saferrt.models import Cell, GridWorld, Obstacle, Polytope

Rect = tuple[float, float, float, float]

# Rows of Fxy, paired with the rectangle bounds (xmax, -xmin, ymax, -ymin)
AXIS_FACETS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


def build_grid(
    bounds: tuple[float, float, float, float], cell: float, obstacles: Sequence[Obstacle]
) -> GridWorld:
    """Partition the workspace into square cells and mark blocked ones.

    A cell is blocked when its closed rectangle intersects any closed obstacle square, so
    a touching boundary blocks.

    :param bounds: (xmin, xmax, ymin, ymax) in meters
    :param cell: The cell edge length in meters
    :param obstacles: The axis-aligned square obstacles

    :returns: The grid

    :raises GridError: If the bounds are not a whole number of cells
    """

    xmin, xmax, ymin, ymax = bounds

    if cell <= 0:
        raise GridError(f"Cell size must be positive, got {cell}")

    cols = _whole_cells(xmax - xmin, cell)
    rows = _whole_cells(ymax - ymin, cell)

    blocked = np.zeros((rows, cols), dtype=bool)

    for obstacle in obstacles:
        if obstacle.half_width <= 0:
            raise GridError(f"Obstacle half width must be positive, got {obstacle.half_width}")

        ox, oy = obstacle.center
        w = obstacle.half_width

        for row in range(rows):
            y0 = ymin + row * cell
            if y0 > oy + w or oy - w > y0 + cell:
                continue
            for col in range(cols):
                x0 = xmin + col * cell
                if x0 <= ox + w and ox - w <= x0 + cell:
                    blocked[row, col] = True

    return GridWorld(bounds, cell, blocked)


def _whole_cells(length: float, cell: float) -> int:
    count = length / cell
    rounded = int(round(count))
    if rounded < 1 or not math.isclose(count, rounded, rel_tol=1e-9, abs_tol=1e-9):
        raise GridError(f"Extent {length} is not a whole number of {cell} m cells")
    return rounded


def check_cell(grid: GridWorld, c: Cell) -> None:
    """Raise if the cell lies outside the grid."""
    if not grid.in_bounds(c):
        raise GridError(f"Cell {tuple(c)} is outside the {grid.dims} grid")


def center(grid: GridWorld, c: Cell) -> np.ndarray:
    """Geometric center of a cell.

    :param grid: The grid
    :param c: The cell

    :returns: The (x, y) center in meters

    :raises GridError: If the cell is out of range
    """
    check_cell(grid, c)
    xmin, _, ymin, _ = grid.bounds
    return np.array([xmin + (c.col + 0.5) * grid.cell, ymin + (c.row + 0.5) * grid.cell])


def cell_rect(grid: GridWorld, c: Cell) -> Rect:
    """The closed rectangle of one cell."""
    check_cell(grid, c)
    xmin, _, ymin, _ = grid.bounds
    x0 = xmin + c.col * grid.cell
    y0 = ymin + c.row * grid.cell
    return (x0, x0 + grid.cell, y0, y0 + grid.cell)


def locate(grid: GridWorld, q: np.ndarray) -> Cell:
    """The cell containing a point; points on the upper or right edge belong to the last cell.

    :raises GridError: If the point is outside the workspace
    """
    xmin, xmax, ymin, ymax = grid.bounds
    x, y = float(q[0]), float(q[1])

    if not (xmin <= x <= xmax and ymin <= y <= ymax):
        raise GridError(f"Point ({x}, {y}) is outside the workspace")

    rows, cols = grid.dims
    col = min(int((x - xmin) // grid.cell), cols - 1)
    row = min(int((y - ymin) // grid.cell), rows - 1)
    return Cell(row, col)


def snap(grid: GridWorld, q: np.ndarray) -> Cell:
    """Nearest free cell to a point, ties going to the first cell in row-major order.

    :param grid: The grid
    :param q: The point to snap

    :returns: The nearest free cell

    :raises GridError: If every cell is blocked
    """

    free = grid.free_cells()

    if not free:
        raise GridError("Grid has no free cells")

    centers = np.array([center(grid, c) for c in free])
    distances = np.linalg.norm(centers - np.asarray(q, dtype=float), axis=1)
    return free[int(np.argmin(distances))]


def manhattan(a: Cell, b: Cell) -> int:
    """l1 distance in cells."""
    return abs(a.row - b.row) + abs(a.col - b.col)


def neighbors4(grid: GridWorld, c: Cell) -> list[Cell]:
    """In-bounds cells sharing an edge with c, in N, E, S, W order.

    Blocked cells are included.
    """
    check_cell(grid, c)
    candidates = [
        Cell(c.row + 1, c.col),
        Cell(c.row, c.col + 1),
        Cell(c.row - 1, c.col),
        Cell(c.row, c.col - 1),
    ]
    return [candidate for candidate in candidates if grid.in_bounds(candidate)]


def best_neighbour(grid: GridWorld, c_near: Cell, c_rand: Cell) -> Cell | None:
    """The free neighbour of c_near closest to c_rand in l1 distance.

    Ties are broken in N, E, S, W order.

    :param grid: The grid
    :param c_near: The cell being extended
    :param c_rand: The sampled target cell

    :returns: The chosen neighbour, or None if every neighbour is blocked
    """

    best: Cell | None = None
    best_distance = 0

    for candidate in neighbors4(grid, c_near):
        if grid.is_blocked(candidate):
            continue
        distance = manhattan(candidate, c_rand)
        if best is None or distance < best_distance:
            best = candidate
            best_distance = distance

    return best


def _require_adjacent(c_a: Cell, c_b: Cell) -> None:
    if manhattan(c_a, c_b) != 1:
        raise GridError(f"Cells {tuple(c_a)} and {tuple(c_b)} are not adjacent")


def shared_cell(c_a: Cell, c_b: Cell) -> Cell:
    """The cell common to the box of edge (c_a -> c_b) and the box of the edge leaving c_b.

    :param c_a: The edge origin
    :param c_b: The edge destination

    :returns: c_b

    :raises GridError: If the cells are not adjacent
    """
    _require_adjacent(c_a, c_b)
    return c_b


def rect_halfspace(rect: Rect) -> tuple[np.ndarray, np.ndarray]:
    """Half-space form Fxy y <= gxy of an axis-aligned rectangle."""
    xmin, xmax, ymin, ymax = rect
    return AXIS_FACETS.copy(), np.array([xmax, -xmin, ymax, -ymin])


def box_halfspace(grid: GridWorld, c_a: Cell, c_b: Cell) -> tuple[np.ndarray, np.ndarray, Rect]:
    """Smallest axis-aligned rectangle covering two adjacent cells.

    :param grid: The grid
    :param c_a: The first cell
    :param c_b: The second cell

    :returns: (Fxy, gxy_world, rect) with Fxy y <= gxy_world describing rect

    :raises GridError: If the cells are not adjacent or out of range
    """

    _require_adjacent(c_a, c_b)

    rect_a = cell_rect(grid, c_a)
    rect_b = cell_rect(grid, c_b)

    rect = (
        min(rect_a[0], rect_b[0]),
        max(rect_a[1], rect_b[1]),
        min(rect_a[2], rect_b[2]),
        max(rect_a[3], rect_b[3]),
    )

    Fxy, gxy_world = rect_halfspace(rect)
    return Fxy, gxy_world, rect


def box_center(rect: Rect) -> np.ndarray:
    """Center point of a rectangle."""
    return np.array([(rect[0] + rect[1]) / 2.0, (rect[2] + rect[3]) / 2.0])


# pylint: disable=too-many-arguments
def lift_to_state(
    Fxy: np.ndarray,
    gxy_world: np.ndarray,
    x_bar: np.ndarray,
    C: np.ndarray,
    F_extra: np.ndarray | None = None,
    g_extra: np.ndarray | None = None,
) -> Polytope:
    """Express position bounds and optional state bounds in error coordinates around x_bar.

    :param Fxy: Position facet normals (q x 2)
    :param gxy_world: Position facet offsets in world coordinates
    :param x_bar: The steady state the error coordinates are centered on
    :param C: The output matrix
    :param F_extra: Optional full-state facet normals
    :param g_extra: Optional full-state facet offsets

    :returns: The polytope {e | F e <= g}

    :raises GridError: If C x_bar is not strictly inside the rectangle or an extra row excludes
        x_bar
    """

    x_bar = np.asarray(x_bar, dtype=float)
    position_margin = np.asarray(gxy_world, dtype=float) - Fxy @ (C @ x_bar)

    if np.any(position_margin <= 0):
        raise GridError(f"Center {C @ x_bar} is not strictly inside the rectangle")

    F = Fxy @ C
    g = position_margin

    if F_extra is not None and g_extra is not None:
        F_extra = np.atleast_2d(np.asarray(F_extra, dtype=float))
        extra_margin = np.asarray(g_extra, dtype=float).reshape(-1) - F_extra @ x_bar
        if np.any(extra_margin <= 0):
            raise GridError("Steady state violates the extra state constraints")
        F = np.vstack([F, F_extra])
        g = np.concatenate([g, extra_margin])

    return Polytope(F, g)


# pylint: enable=too-many-arguments

"""Space-time reservation table shared by all agents during multi-agent planning."""

# Licensed under the MIT license.

from typing import Any

import numpy as np

from saferrt.models import Cell


class ReservationTable:
    """Per-layer cell ownership, directed moves and parked goals.

    A (layer, cell) slot has at most one owner. An agent's own reservations never block it.
    A parked cell belongs to its agent at every layer from the parking layer onward.

    :param dims: The (rows, cols) of the grid
    """

    dims: tuple[int, int]

    _cells: dict[int, dict[Cell, int]]
    _moves: dict[int, dict[tuple[Cell, Cell], int]]
    _parked: dict[Cell, tuple[int, int]]

    def __init__(self, dims: tuple[int, int]) -> None:
        self.dims = dims
        self._cells = {}
        self._moves = {}
        self._parked = {}

    def owner(self, layer: int, cell: Cell) -> int | None:
        """The agent holding a slot, or None if it is free."""
        direct = self._cells.get(layer, {}).get(cell)
        if direct is not None:
            return direct

        parked = self._parked.get(cell)
        if parked is not None and layer >= parked[1]:
            return parked[0]

        return None

    def is_free(self, layer: int, cell: Cell, agent: int) -> bool:
        """Whether an agent may take a slot."""
        return self.owner(layer, cell) in (None, agent)

    def reserve(self, layer: int, cell: Cell, agent: int) -> bool:
        """Claim a slot.

        :param layer: The time layer
        :param cell: The cell
        :param agent: The claiming agent

        :returns: False if another agent already holds the slot
        """
        if not self.is_free(layer, cell, agent):
            return False
        self._cells.setdefault(layer, {})[cell] = agent
        return True

    def reserve_move(self, layer: int, source: Cell, target: Cell, agent: int) -> None:
        """Record a one-cell move arriving at the given layer."""
        self._moves.setdefault(layer, {})[(source, target)] = agent

    def is_swap(self, layer: int, source: Cell, target: Cell, agent: int) -> bool:
        """Whether another agent moves target -> source arriving at the same layer."""
        other = self._moves.get(layer, {}).get((target, source))
        return other is not None and other != agent

    def can_park(self, cell: Cell, agent: int, layer: int) -> bool:
        """Whether no other agent holds the cell at this or any later layer."""
        parked = self._parked.get(cell)
        if parked is not None and parked[0] != agent:
            return False

        for held_layer, cells in self._cells.items():
            if held_layer >= layer and cells.get(cell, agent) != agent:
                return False

        return True

    def park(self, cell: Cell, agent: int, layer: int) -> bool:
        """Keep a goal cell for an agent from a layer onward.

        :returns: False if the cell is held by another agent at a later layer
        """
        if not self.can_park(cell, agent, layer):
            return False
        self._parked[cell] = (agent, layer)
        self.reserve(layer, cell, agent)
        return True

    @property
    def layer_count(self) -> int:
        """One more than the highest layer with an explicit reservation."""
        return max(self._cells.keys(), default=-1) + 1

    def reserved_cells(self, layer: int) -> dict[Cell, int]:
        """Cells held at a layer, parked goals included, mapped to their owners."""
        held = dict(self._cells.get(layer, {}))
        for cell, (agent, from_layer) in self._parked.items():
            if layer >= from_layer:
                held.setdefault(cell, agent)
        return held

    def layer_grid(self, layer: int) -> np.ndarray:
        """Boolean occupancy grid of a layer."""
        grid = np.zeros(self.dims, dtype=bool)
        for cell in self.reserved_cells(layer):
            grid[cell.row, cell.col] = True
        return grid

    def entries(self) -> list[tuple[int, Cell, int]]:
        """Every explicit (layer, cell, agent) reservation in layer then cell order."""
        return sorted(
            (layer, cell, agent)
            for layer, cells in self._cells.items()
            for cell, agent in cells.items()
        )

    def moves(self) -> list[tuple[int, Cell, Cell, int]]:
        """Every recorded move as (layer, source, target, agent)."""
        return sorted(
            (layer, source, target, agent)
            for layer, moves in self._moves.items()
            for (source, target), agent in moves.items()
        )

    def json(self) -> dict[str, Any]:
        """Plain dictionary form for the run artifact."""
        return {
            "dims": list(self.dims),
            "reservations": [
                {"layer": layer, "cell": cell.json(), "agent": agent}
                for layer, cell, agent in self.entries()
            ],
            "moves": [
                {"layer": layer, "from": source.json(), "to": target.json(), "agent": agent}
                for layer, source, target, agent in self.moves()
            ],
            "parked": [
                {"cell": cell.json(), "agent": agent, "from_layer": layer}
                for cell, (agent, layer) in sorted(self._parked.items())
            ],
        }

"""SVG figures drawn from run artifacts alone."""

# Licensed under the MIT license.

import io
from typing import Any, Callable

import matplotlib
import numpy as np
from matplotlib.axes import Axes
from matplotlib.figure import Figure
from matplotlib.patches import Ellipse, Rectangle

from saferrt.derived_component import ArtifactError
from saferrt.models import RunArtifact, as_matrix

AGENT_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:purple", "tab:orange", "tab:brown")

RENDER_KINDS = ("trees", "ellipses", "paths", "executed")


def agent_color(index: int) -> str:
    """Stable color per agent index."""
    return AGENT_COLORS[index % len(AGENT_COLORS)]


def ellipse_axes(Pproj: np.ndarray) -> tuple[float, float, float]:
    """Semi-axis lengths and orientation of {y | y^T Pproj^-1 y <= 1}.

    :param Pproj: The 2 x 2 shape matrix

    :returns: (major, minor, angle in degrees of the major axis)
    """
    eigenvalues, eigenvectors = np.linalg.eigh(as_matrix(Pproj))
    major = float(np.sqrt(max(eigenvalues[1], 0.0)))
    minor = float(np.sqrt(max(eigenvalues[0], 0.0)))
    angle = float(np.degrees(np.arctan2(eigenvectors[1, 1], eigenvectors[0, 1])))
    return major, minor, angle


def _cell_center(grid: dict[str, Any], cell: list[int]) -> tuple[float, float]:
    xmin, _, ymin, _ = grid["bounds"]
    size = grid["cell"]
    return (xmin + (cell[1] + 0.5) * size, ymin + (cell[0] + 0.5) * size)


def _draw_grid(ax: Axes, grid: dict[str, Any]) -> None:
    xmin, xmax, ymin, ymax = grid["bounds"]
    size = grid["cell"]
    blocked = np.asarray(grid["blocked"], dtype=bool)

    for row, col in zip(*np.nonzero(blocked)):
        ax.add_patch(
            Rectangle(
                (xmin + col * size, ymin + row * size),
                size,
                size,
                facecolor="0.6",
                edgecolor="none",
                gid="blocked",
            )
        )

    ax.set_xticks(np.arange(xmin, xmax + size / 2, size))
    ax.set_yticks(np.arange(ymin, ymax + size / 2, size))
    ax.grid(True, linewidth=0.4, color="0.85")
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _draw_endpoints(ax: Axes, agent: dict[str, Any], color: str) -> None:
    start = agent["start"]
    goal = agent["goal"]
    ax.plot(start[0], start[1], "o", color=color)
    ax.plot(goal[0], goal[1], "*", color=color, markersize=10)


def _draw_trees(ax: Axes, artifact: RunArtifact) -> None:
    grid = artifact.summary["grid"]
    for index, agent in enumerate(artifact.summary["agents"]):
        tree = agent.get("tree")
        if tree is None:
            raise ArtifactError(f"Agent {agent['name']} has no tree")
        for vertex in tree["vertices"]:
            if vertex["parent"] is None:
                continue
            a = _cell_center(grid, vertex["parent"])
            b = _cell_center(grid, vertex["cell"])
            ax.plot([a[0], b[0]], [a[1], b[1]], "-", color=agent_color(index), linewidth=0.8)
        _draw_endpoints(ax, agent, agent_color(index))


def _draw_paths(ax: Axes, artifact: RunArtifact) -> None:
    for index, agent in enumerate(artifact.summary["agents"]):
        path = agent.get("path")
        if path is None:
            raise ArtifactError(f"Agent {agent['name']} has no path")
        points = np.asarray(path["waypoints"], dtype=float)
        ax.plot(points[:, 0], points[:, 1], "-o", color=agent_color(index), markersize=3)
        _draw_endpoints(ax, agent, agent_color(index))


def _draw_ellipses(ax: Axes, artifact: RunArtifact) -> None:
    for index, agent in enumerate(artifact.summary["agents"]):
        ellipsoids = agent.get("ellipsoids")
        if ellipsoids is None:
            raise ArtifactError(f"Agent {agent['name']} has no projected certificates")
        for ellipsoid in ellipsoids:
            if ellipsoid is None:
                continue
            major, minor, angle = ellipse_axes(ellipsoid["Pproj"])
            ax.add_patch(
                Ellipse(
                    tuple(ellipsoid["center"]),
                    2 * major,
                    2 * minor,
                    angle=angle,
                    facecolor="none",
                    edgecolor=agent_color(index),
                    linewidth=0.8,
                    gid=f"ellipse-{index}",
                )
            )
    _draw_paths(ax, artifact)


def _draw_executed(ax: Axes, artifact: RunArtifact) -> None:
    if not artifact.frames:
        raise ArtifactError("Artifact has no execution traces")

    for index, agent in enumerate(artifact.summary["agents"]):
        certified = artifact.frames.get(f"agent{index}_certified")
        if certified is None:
            raise ArtifactError(f"Agent {agent['name']} has no certified trace")
        ax.plot(certified["y0"], certified["y1"], "-", color=agent_color(index), linewidth=1.2)

        lqr = artifact.frames.get(f"agent{index}_lqr")
        if lqr is not None:
            ax.plot(lqr["y0"], lqr["y1"], "--", color=agent_color(index), linewidth=0.8)

        _draw_endpoints(ax, agent, agent_color(index))


_DRAWERS: dict[str, Callable[[Axes, RunArtifact], None]] = {
    "trees": _draw_trees,
    "ellipses": _draw_ellipses,
    "paths": _draw_paths,
    "executed": _draw_executed,
}


def render_svg(artifact: RunArtifact, kind: str) -> str:
    """Draw one figure of a run.

    :param artifact: The run artifact
    :param kind: One of trees, ellipses, paths or executed

    :returns: The SVG document

    :raises ArtifactError: If the kind is unknown or the artifact lacks its data
    """

    drawer = _DRAWERS.get(kind)
    if drawer is None:
        raise ArtifactError(f"Unknown figure kind {kind!r}; expected one of {RENDER_KINDS}")

    if "grid" not in artifact.summary or "agents" not in artifact.summary:
        raise ArtifactError("Artifact has no grid or agents")

    figure = Figure(figsize=(6, 6))
    ax = figure.add_subplot()
    _draw_grid(ax, artifact.summary["grid"])
    drawer(ax, artifact)
    ax.set_title(f"{artifact.summary.get('scenario', {}).get('name', '')}: {kind}")

    buffer = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "saferrt", "svg.fonttype": "none"}):
        figure.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()

"""Field evaluation away from the scatterer and in the far zone.

The solved density is a weighted sum of element indicators, so every field
value is a weighted sum of single-layer integrals over mesh elements.  Those
integrals reuse the barycentre quadrature nodes cached by the assembly; the
evaluation is one blocked kernel sweep per batch of observation points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .galerkin import NODE_BLOCK, DensitySolution
from .ifs import barycentre_cloud
from .io import atomic_write_text, format_float
from .kernels import farfield_kernel, fundamental_solution, plane_wave

FLAG_CLOUD_DEPTH = 6


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Field samples plus per-point trust flags.

    For far-field grids `points` holds unit directions and `angles` their
    angular coordinates (polar angle in 2D; polar/azimuthal pair in 3D).
    """

    kind: str  # "near", "total" or "far"
    points: np.ndarray
    values: np.ndarray
    accuracy: np.ndarray
    angles: np.ndarray | None = None


def _element_potentials(solution: DensitySolution, points: np.ndarray) -> np.ndarray:
    """Matrix of single-layer integrals: rows are observation points."""
    system = solution.system
    quad = system.quad
    k, dim = system.wave.k, system.wave.dim
    starts = quad.starts
    out = np.empty((len(points), len(starts) - 1), dtype=complex)
    step = max(1, NODE_BLOCK // max(1, quad.n_nodes))
    for lo in range(0, len(points), step):
        r = cdist(points[lo : lo + step], quad.points)
        on_node = r == 0.0
        r[on_node] = 1.0
        vals = fundamental_solution(r, k, dim)
        vals[on_node] = 0.0
        vals *= quad.weights[None, :]
        out[lo : lo + step] = np.add.reduceat(vals, starts[:-1], axis=1)
    return out


def _accuracy_flags(solution: DensitySolution, points: np.ndarray) -> np.ndarray:
    """Trust a point only when it keeps distance h_Q from the scatterer.

    Proximity is judged against a depth-6 barycentre cloud of every part, the
    same resolution scale the quadrature itself can distinguish.
    """
    clouds = [barycentre_cloud(p, FLAG_CLOUD_DEPTH) for p in solution.mesh.parts]
    tree = cKDTree(np.concatenate(clouds, axis=0))
    dist, _ = tree.query(points)
    return dist >= solution.system.h_q


def near_field(solution: DensitySolution, points: np.ndarray) -> FieldGrid:
    """Scattered field at the given observation points."""
    points = np.asarray(points, dtype=float)
    values = _element_potentials(solution, points) @ solution.density_weights()
    return FieldGrid(
        kind="near",
        points=points,
        values=values,
        accuracy=_accuracy_flags(solution, points),
    )


def total_field(solution: DensitySolution, points: np.ndarray) -> FieldGrid:
    """Scattered plus incident field (vanishes on the scatterer in the limit)."""
    near = near_field(solution, points)
    wave = solution.wave
    inc = plane_wave(near.points, wave.k, wave.theta)
    return FieldGrid(
        kind="total",
        points=near.points,
        values=near.values + inc,
        accuracy=near.accuracy,
    )


def far_field(
    solution: DensitySolution,
    directions: np.ndarray,
    angles: np.ndarray | None = None,
) -> FieldGrid:
    """Far-field pattern in the given unit directions."""
    directions = np.asarray(directions, dtype=float)
    norms = np.linalg.norm(directions, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise ValueError("far-field directions must be unit vectors")
    system = solution.system
    quad = system.quad
    k, dim = system.wave.k, system.wave.dim
    kern = farfield_kernel(directions, quad.points, k, dim) * quad.weights[None, :]
    per_element = np.add.reduceat(kern, quad.starts[:-1], axis=1)
    values = per_element @ solution.density_weights()
    if angles is None:
        angles = angles_of_directions(directions)
    return FieldGrid(
        kind="far",
        points=directions,
        values=values,
        accuracy=np.ones(len(directions), dtype=bool),
        angles=angles,
    )


# ---------------------------------------------------------------------------
# direction grids and angle conventions
# ---------------------------------------------------------------------------

def angles_of_directions(directions: np.ndarray) -> np.ndarray:
    """Polar angle in 2D; (polar, azimuthal) pairs in 3D."""
    directions = np.asarray(directions, dtype=float)
    if directions.shape[-1] == 2:
        return np.arctan2(directions[:, 1], directions[:, 0])
    theta = np.arccos(np.clip(directions[:, 2], -1.0, 1.0))
    phi = np.arctan2(directions[:, 1], directions[:, 0])
    return np.stack([theta, phi], axis=-1)


def circle_directions(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n equispaced unit vectors on the circle, with their polar angles."""
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1), phi


def sphere_directions(n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Regular polar/azimuthal product grid of unit vectors (poles excluded)."""
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = np.arange(n_phi) * 2.0 * np.pi / n_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack(
        [np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)], axis=-1
    ).reshape(-1, 3)
    return dirs, np.stack([tt.ravel(), pp.ravel()], axis=-1)


def rectangle_ring_points(
    bounds: tuple[float, float, float, float], per_edge: int
) -> np.ndarray:
    """Points along the boundary of the axis-aligned box (x0, x1, y0, y1)."""
    x0, x1, y0, y1 = bounds
    right = np.linspace(x0, x1, per_edge, endpoint=False)
    up = np.linspace(y0, y1, per_edge, endpoint=False)
    left = np.linspace(x1, x0, per_edge, endpoint=False)
    down = np.linspace(y1, y0, per_edge, endpoint=False)
    edges = [
        np.stack([right, np.full(per_edge, y0)], axis=-1),
        np.stack([np.full(per_edge, x1), up], axis=-1),
        np.stack([left, np.full(per_edge, y1)], axis=-1),
        np.stack([np.full(per_edge, x0), down], axis=-1),
    ]
    return np.concatenate(edges, axis=0)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_field_csv(grid: FieldGrid, path: str) -> None:
    """One row per point: coordinates (near/total) or angles (far), then
    real part, imaginary part, and the accuracy flag as 0/1."""
    if grid.kind == "far":
        ang = np.atleast_2d(grid.angles.T).T
        header = ["phi"] if ang.shape[1] == 1 else ["theta", "phi"]
        coords = ang
    else:
        coords = grid.points
        header = ["x", "y", "z"][: coords.shape[1]]
    header += ["re", "im", "accurate"]
    lines = [",".join(header)]
    for row, val, ok in zip(coords, grid.values, grid.accuracy):
        cells = [format_float(c) for c in row]
        cells += [format_float(val.real), format_float(val.imag), str(int(ok))]
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")

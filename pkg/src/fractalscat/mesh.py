"""Quasi-uniform meshes on IFS attractors.

A mesh is the family of sub-copies picked by recursive subdivision: starting
from the whole attractor, any piece wider than the target width h is replaced
by its children.  Every resulting element m then satisfies
diam(m) <= h < diam(parent of m), except when the whole attractor already fits
inside h.  Elements carry their measure, barycentre and composed map; unions
of several attractors get per-part block tags.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io as fio
from .ifs import (
    IFSAttractor,
    Index,
    Similarity,
    attractor_barycentre,
    index_to_str,
    koch_curve,
    rotation_2d,
    transform_attractor,
)


@dataclass(frozen=True, eq=False)
class MeshElement:
    index: Index
    block: int
    mu: float
    diam: float
    bary: np.ndarray
    map: Similarity
    rho: float


@dataclass(frozen=True, eq=False)
class ScattererUnion:
    """Several attractors treated as one scatterer (e.g. a closed fractal curve
    assembled from congruent open arcs)."""

    parts: tuple[IFSAttractor, ...]
    label: str = ""

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("union needs at least one part")
        dims = {p.ambient_dim for p in self.parts}
        if len(dims) != 1:
            raise ValueError("all parts must share the ambient dimension")

    @property
    def ambient_dim(self) -> int:
        return self.parts[0].ambient_dim

    @property
    def diameter_max(self) -> float:
        return max(p.diameter for p in self.parts)


@dataclass(frozen=True, eq=False)
class Mesh:
    scatterer: object  # IFSAttractor or ScattererUnion
    h: float
    elements: tuple[MeshElement, ...]

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def parts(self) -> tuple[IFSAttractor, ...]:
        if isinstance(self.scatterer, ScattererUnion):
            return self.scatterer.parts
        return (self.scatterer,)

    @property
    def total_measure(self) -> float:
        return float(sum(e.mu for e in self.elements))

    @property
    def diam_ratio(self) -> float:
        """Quasi-uniformity indicator: widest element over narrowest."""
        diams = [e.diam for e in self.elements]
        return max(diams) / min(diams)

    def mu_vector(self) -> np.ndarray:
        return np.array([e.mu for e in self.elements])

    def bary_matrix(self) -> np.ndarray:
        return np.array([e.bary for e in self.elements])


def subdivision_indices(ifs: IFSAttractor, h: float, base: Index = ()) -> list[Index]:
    """Minimal indices below `base` whose pieces have diameter <= h.

    Lexicographic order.  If the base piece already fits, returns [base].
    """
    if h <= 0:
        raise ValueError("h must be positive")
    out: list[Index] = []
    rho_base = ifs.rho_for(base)
    # relative slack so h = rho^level * diam reproduces the uniform level
    # exactly even when powering and repeated products differ by an ulp
    cutoff = h * (1.0 + 1e-12)

    def rec(idx: Index, rho: float):
        if rho * ifs.diameter <= cutoff:
            out.append(idx)
            return
        for m, s in enumerate(ifs.maps, start=1):
            rec(idx + (m,), rho * s.rho)

    rec(base, rho_base)
    return out


def _elements_for(
    ifs: IFSAttractor, indices: list[Index], block: int
) -> list[MeshElement]:
    x0 = attractor_barycentre(ifs)
    out = []
    for idx in indices:
        smap = ifs.map_for(idx)
        rho = ifs.rho_for(idx)
        out.append(
            MeshElement(
                index=idx,
                block=block,
                mu=ifs.measure_for(idx),
                diam=rho * ifs.diameter,
                bary=smap(x0),
                map=smap,
                rho=rho,
            )
        )
    return out


def build_mesh(scatterer, h: float) -> Mesh:
    """Mesh with target width h; for unions, parts are meshed independently."""
    parts = (
        scatterer.parts if isinstance(scatterer, ScattererUnion) else (scatterer,)
    )
    if h <= 0:
        raise ValueError("h must be positive")
    for p in parts:
        if h > p.diameter * (1 + 1e-12):
            raise ValueError(
                f"h={h} exceeds attractor diameter {p.diameter}; no mesh defined"
            )
    elements: list[MeshElement] = []
    for b, p in enumerate(parts):
        elements.extend(_elements_for(p, subdivision_indices(p, h), b))
    return Mesh(scatterer=scatterer, h=h, elements=tuple(elements))


def uniform_mesh(ifs: IFSAttractor, level: int) -> Mesh:
    """All level-`level` sub-copies of a homogeneous attractor (M^level elements)."""
    if not ifs.is_homogeneous:
        raise ValueError("uniform meshes require a homogeneous attractor")
    if level < 0:
        raise ValueError("level must be nonnegative")
    rho = ifs.maps[0].rho
    indices: list[Index] = [()]
    for _ in range(level):
        indices = [idx + (m,) for idx in indices for m in range(1, ifs.n_maps + 1)]
    h = rho**level * ifs.diameter
    return Mesh(
        scatterer=ifs, h=h, elements=tuple(_elements_for(ifs, indices, 0))
    )


def snowflake_boundary() -> ScattererUnion:
    """Closed snowflake-shaped curve: three congruent fractal arcs around an
    equilateral triangle, each bulging outward, joined at the corners."""
    base = transform_attractor(
        koch_curve(),
        rotation=np.array([[1.0, 0.0], [0.0, -1.0]]),
        label="snowflake_edge_1",
    )
    centre = np.array([0.5, np.sqrt(3.0) / 6.0])
    parts = [base]
    for j in (1, 2):
        rot = rotation_2d(-2.0 * np.pi * j / 3.0)
        parts.append(
            transform_attractor(
                base,
                rotation=rot,
                translation=centre - rot @ centre,
                label=f"snowflake_edge_{j + 1}",
            )
        )
    return ScattererUnion(parts=tuple(parts), label="snowflake_boundary")


def write_mesh_csv(mesh: Mesh, path: str) -> None:
    dim = mesh.parts[0].ambient_dim
    header = ["block", "index", "mu", "diam"] + [f"bary{ax}" for ax in "xyz"[:dim]]
    rows = []
    for e in mesh.elements:
        rows.append([e.block, index_to_str(e.index), e.mu, e.diam, *e.bary])
    fio.write_csv(path, header, rows)

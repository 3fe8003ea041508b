"""Iterated function systems of contracting similarities and their attractors.

An attractor here is the unique compact set invariant under a finite family of
contracting similarity maps.  The module provides the map algebra (composition,
inversion, sub-copy indexing), geometric metadata (fractal dimension, measure
weights, barycentres, diameters), a small library of standard attractors, and
JSON serialization.

Vector indices are tuples of 1-based map ids; the empty tuple denotes the whole
attractor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

Index = tuple[int, ...]

ROOT_INDEX: Index = ()

DIM_TOL = 1e-13
ORTHO_TOL = 1e-12


def index_to_str(m: Index) -> str:
    """Dash-separated rendering of a vector index; the root index prints as 0."""
    if len(m) == 0:
        return "0"
    return "-".join(str(e) for e in m)


def parse_index(s: str) -> Index:
    s = s.strip()
    if s in ("", "0"):
        return ()
    return tuple(int(p) for p in s.split("-"))


@dataclass(frozen=True, eq=False)
class Similarity:
    """Map x -> rho * rotation @ x + translation with 0 < rho, orthogonal rotation."""

    rho: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        tra = np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", tra)
        if not self.rho > 0:
            raise ValueError(f"contraction factor must be positive, got {self.rho}")
        err = np.max(np.abs(rot.T @ rot - np.eye(rot.shape[0])))
        if err > ORTHO_TOL:
            raise ValueError(f"rotation not orthogonal (deviation {err:.2e})")

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.rho * x @ self.rotation.T + self.translation

    def compose(self, other: "Similarity") -> "Similarity":
        """self after other: (self o other)(x) = self(other(x))."""
        return Similarity(
            rho=self.rho * other.rho,
            rotation=self.rotation @ other.rotation,
            translation=self.rho * self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "Similarity":
        rot_inv = self.rotation.T
        return Similarity(
            rho=1.0 / self.rho,
            rotation=rot_inv,
            translation=-(1.0 / self.rho) * rot_inv @ self.translation,
        )

    def linear_part(self) -> np.ndarray:
        return self.rho * self.rotation

    def agrees_with(self, other: "Similarity", tol: float = 1e-10) -> bool:
        """Coefficient-wise agreement of the two affine maps."""
        return (
            np.max(np.abs(self.linear_part() - other.linear_part())) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )


def identity_map(dim: int) -> Similarity:
    return Similarity(1.0, np.eye(dim), np.zeros(dim))


def isometry(rotation: np.ndarray, translation: np.ndarray) -> Similarity:
    """A distance-preserving Similarity (rho = 1)."""
    return Similarity(1.0, rotation, translation)


def rotation_2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def reflection_2d(axis_angle: float) -> np.ndarray:
    """Reflection matrix across the line through the origin at the given angle."""
    c, s = math.cos(2 * axis_angle), math.sin(2 * axis_angle)
    return np.array([[c, s], [s, -c]])


def _fixed_point_isometry(rotation: np.ndarray, centre: np.ndarray) -> Similarity:
    """Isometry acting as the given linear map about the given fixed point."""
    centre = np.asarray(centre, dtype=float)
    return isometry(rotation, centre - rotation @ centre)


DISJOINT = "disjoint"
HULL_DISJOINT = "hull-disjoint"
NON_DISJOINT = "non-disjoint"


@dataclass(frozen=True, eq=False)
class IFSAttractor:
    """An IFS attractor with its solver-relevant geometric metadata.

    measure_total normalizes the fractal measure of the whole attractor;
    every output of the scattering pipeline is invariant under rescaling it.
    symmetry_group lists isometries mapping the attractor onto itself
    (identity always included).  disjointness is declared, then sanity-checked
    for the library shapes.
    """

    maps: tuple[Similarity, ...]
    ambient_dim: int
    hausdorff_dim: float
    diameter: float
    measure_total: float = 1.0
    symmetry_group: tuple[Similarity, ...] = ()
    disjointness: str = NON_DISJOINT
    label: str = ""

    def __post_init__(self):
        if len(self.maps) < 2:
            raise ValueError("need at least two maps")
        if self.ambient_dim not in (2, 3):
            raise ValueError("ambient dimension must be 2 or 3")
        for s in self.maps:
            if not (0 < s.rho < 1):
                raise ValueError("all maps must be strict contractions")
            if s.dim != self.ambient_dim:
                raise ValueError("map dimension does not match ambient dimension")
        if self.disjointness not in (DISJOINT, HULL_DISJOINT, NON_DISJOINT):
            raise ValueError(f"unknown disjointness class {self.disjointness!r}")
        total = sum(s.rho**self.hausdorff_dim for s in self.maps)
        if abs(total - 1.0) > 1e-11:
            raise ValueError(
                f"dimension inconsistent: sum rho^d = {total!r} differs from 1"
            )
        if not self.diameter > 0:
            raise ValueError("diameter must be positive")
        if not self.symmetry_group:
            object.__setattr__(
                self, "symmetry_group", (identity_map(self.ambient_dim),)
            )

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def rhos(self) -> np.ndarray:
        return np.array([s.rho for s in self.maps])

    @property
    def is_homogeneous(self) -> bool:
        r = self.rhos
        return bool(np.max(np.abs(r - r[0])) < 1e-14)

    @property
    def is_disjoint(self) -> bool:
        return self.disjointness in (DISJOINT, HULL_DISJOINT)

    def with_measure(self, measure_total: float) -> "IFSAttractor":
        return replace(self, measure_total=measure_total)

    def map_for(self, m: Index) -> Similarity:
        """Composed similarity carrying the whole attractor onto sub-copy m."""
        s = identity_map(self.ambient_dim)
        for e in m:
            if not 1 <= e <= self.n_maps:
                raise ValueError(f"index entry {e} out of range 1..{self.n_maps}")
            s = s.compose(self.maps[e - 1])
        return s

    def rho_for(self, m: Index) -> float:
        out = 1.0
        for e in m:
            out *= self.maps[e - 1].rho
        return out

    def measure_for(self, m: Index) -> float:
        out = self.measure_total
        for e in m:
            out *= self.maps[e - 1].rho ** self.hausdorff_dim
        return out


def hausdorff_dimension(rhos) -> float:
    """Exponent d with sum(rho_m^d) = 1, by bisection (exact if homogeneous)."""
    rhos = [float(r) for r in rhos]
    if len(rhos) < 2:
        raise ValueError("need at least two contraction factors")
    for r in rhos:
        if not 0 < r < 1:
            raise ValueError(f"contraction factor {r} outside (0,1)")
    if max(rhos) - min(rhos) < 1e-15:
        return math.log(len(rhos)) / math.log(1.0 / rhos[0])

    def f(d):
        return sum(r**d for r in rhos) - 1.0

    lo, hi = 0.0, 4.0
    # f is strictly decreasing in d; f(0) = M-1 > 0.
    while f(hi) > 0:
        hi *= 2
    while hi - lo > DIM_TOL:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def subattractor(ifs: IFSAttractor, m: Index) -> tuple[Similarity, float, float]:
    """(composed map, contraction factor, measure) of sub-copy m."""
    return ifs.map_for(m), ifs.rho_for(m), ifs.measure_for(m)


def attractor_barycentre(ifs: IFSAttractor) -> np.ndarray:
    """Measure-weighted centroid: the fixed point of the weighted map average."""
    n = ifs.ambient_dim
    lhs = np.eye(n)
    rhs = np.zeros(n)
    for s in ifs.maps:
        p = s.rho**ifs.hausdorff_dim
        lhs -= p * s.rho * s.rotation
        rhs += p * s.translation
    # The weighted linear parts have spectral radius < 1, so this cannot be
    # singular; assert rather than handle.
    bary = np.linalg.solve(lhs, rhs)
    assert np.all(np.isfinite(bary))
    return bary


def barycentre(ifs: IFSAttractor, m: Index = ROOT_INDEX) -> np.ndarray:
    """Centroid of sub-copy m under the normalized fractal measure."""
    return ifs.map_for(m)(attractor_barycentre(ifs))


def barycentre_cloud(ifs: IFSAttractor, depth: int) -> np.ndarray:
    """Barycentres of all depth-`depth` sub-copies, in lexicographic index order.

    Map-major concatenation at each refinement step keeps the rows aligned with
    tuples (m1, ..., m_depth) sorted lexicographically.
    """
    pts = attractor_barycentre(ifs)[None, :]
    for _ in range(depth):
        pts = np.concatenate([s(pts) for s in ifs.maps], axis=0)
    return pts


def enclosing_radius(ifs: IFSAttractor) -> tuple[np.ndarray, float]:
    """Centre c and radius R with the attractor inside ball(c, R)."""
    c = attractor_barycentre(ifs)
    shift = max(float(np.linalg.norm(s(c) - c)) for s in ifs.maps)
    rho_max = float(np.max(ifs.rhos))
    return c, shift / (1.0 - rho_max)


def diameter_bracket(ifs: IFSAttractor, depth: int) -> tuple[float, float]:
    """Certified [lower, upper] bracket for the attractor diameter."""
    c, R0 = enclosing_radius(ifs)
    rho_max = float(np.max(ifs.rhos))
    pts = c[None, :]
    for _ in range(depth):
        pts = np.concatenate([s(pts) for s in ifs.maps], axis=0)
    lower = _farthest_pair_distance(pts)
    # every attractor point lies within rho_max^depth * R0 of some cloud point
    return lower, lower + 2.0 * rho_max**depth * R0


def _farthest_pair_distance(pts: np.ndarray) -> float:
    if len(pts) <= 5000:
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))
    try:
        from scipy.spatial import ConvexHull

        hull = ConvexHull(pts)
        v = pts[hull.vertices]
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))
    except Exception:
        # nearly degenerate cloud: keep extreme points along each axis and
        # along the principal direction, then compare pairwise
        cand = []
        centred = pts - pts.mean(axis=0)
        dirs = list(np.eye(pts.shape[1]))
        w, vecs = np.linalg.eigh(centred.T @ centred)
        dirs.extend(vecs.T)
        for d in dirs:
            proj = centred @ d
            order = np.argsort(proj)
            cand.extend(order[:100])
            cand.extend(order[-100:])
        v = pts[sorted(set(int(i) for i in cand))]
        d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
        return float(np.sqrt(d2.max()))


def diameter_estimate(ifs: IFSAttractor, tol: float = 1e-6, max_depth: int = 26) -> float:
    """Bracketed numerical diameter, independent of the stored analytic value."""
    return diameter_bracket_estimate(ifs, tol=tol, max_depth=max_depth)[0]


def build_attractor(
    maps,
    *,
    measure_total: float = 1.0,
    symmetry_group=(),
    disjointness: str = NON_DISJOINT,
    diameter: float | None = None,
    label: str = "",
    diameter_tol: float = 1e-6,
) -> IFSAttractor:
    """Assemble an attractor, estimating the diameter when no analytic value is given."""
    maps = tuple(maps)
    if not maps:
        raise ValueError("need at least two maps")
    dim = maps[0].dim
    d = hausdorff_dimension([s.rho for s in maps])
    if diameter is None:
        probe = IFSAttractor(
            maps=maps, ambient_dim=dim, hausdorff_dim=d, diameter=1.0
        )
        diameter = diameter_bracket_estimate(probe, tol=diameter_tol)[0]
    return IFSAttractor(
        maps=maps,
        ambient_dim=dim,
        hausdorff_dim=d,
        diameter=diameter,
        measure_total=measure_total,
        symmetry_group=tuple(symmetry_group),
        disjointness=disjointness,
        label=label,
    )


def diameter_bracket_estimate(
    ifs: IFSAttractor, tol: float = 1e-6, max_depth: int = 26
) -> tuple[float, float, float]:
    """(estimate, lower, upper) with upper-lower <= tol if reachable."""
    rho_max = float(np.max(ifs.rhos))
    lo = hi = 0.0
    for depth in range(2, max_depth + 1):
        if ifs.n_maps**depth > 4_000_000:
            break
        lo, hi = diameter_bracket(ifs, depth)
        if hi - lo <= tol:
            break
        # skip ahead: required depth is predictable from the geometric decay
        needed = math.log(max(tol, 1e-300) / max(hi - lo, 1e-300)) / math.log(rho_max)
        if needed > 2:
            depth += int(needed) - 1
    return 0.5 * (lo + hi), lo, hi


# ---------------------------------------------------------------------------
# attractor library
# ---------------------------------------------------------------------------

def cantor_set(rho: float = 1.0 / 3.0) -> IFSAttractor:
    """Middle-gap Cantor set on [0,1], embedded in the plane as y = 0."""
    if not 0 < rho <= 0.5:
        raise ValueError("cantor_set requires 0 < rho <= 1/2")
    eye = np.eye(2)
    maps = (
        Similarity(rho, eye, np.zeros(2)),
        Similarity(rho, eye, np.array([1.0 - rho, 0.0])),
    )
    centre = np.array([0.5, 0.0])
    sym = (
        identity_map(2),
        _fixed_point_isometry(reflection_2d(math.pi / 2), centre),  # x -> 1-x
        _fixed_point_isometry(reflection_2d(0.0), centre),          # y -> -y
        _fixed_point_isometry(-np.eye(2), centre),
    )
    return IFSAttractor(
        maps=maps,
        ambient_dim=2,
        hausdorff_dim=hausdorff_dimension([rho, rho]),
        diameter=1.0,
        symmetry_group=sym,
        disjointness=HULL_DISJOINT if rho < 0.5 else NON_DISJOINT,
        label=f"cantor_set({rho:g})",
    )


def cantor_dust(rho: float = 1.0 / 3.0, dim: int = 2) -> IFSAttractor:
    """Cartesian product of `dim` Cantor sets: the corner-anchored dust in [0,1]^dim."""
    if not 0 < rho <= 0.5:
        raise ValueError("cantor_dust requires 0 < rho <= 1/2")
    if dim not in (2, 3):
        raise ValueError("cantor_dust supports dim 2 or 3")
    eye = np.eye(dim)
    corners = [np.array(bits, dtype=float) for bits in np.ndindex(*([2] * dim))]
    maps = tuple(Similarity(rho, eye, (1.0 - rho) * c) for c in corners)
    centre = 0.5 * np.ones(dim)
    sym = tuple(
        _fixed_point_isometry(rot, centre) for rot in _signed_permutations(dim)
    )
    return IFSAttractor(
        maps=maps,
        ambient_dim=dim,
        hausdorff_dim=hausdorff_dimension([rho] * len(maps)),
        diameter=math.sqrt(dim),
        symmetry_group=sym,
        disjointness=HULL_DISJOINT if rho < 0.5 else NON_DISJOINT,
        label=f"cantor_dust({rho:g},{dim})",
    )


def _signed_permutations(dim: int) -> list[np.ndarray]:
    """All signed permutation matrices (the symmetry group of the cube)."""
    from itertools import permutations, product

    out = []
    for perm in permutations(range(dim)):
        for signs in product((1.0, -1.0), repeat=dim):
            mat = np.zeros((dim, dim))
            for i, j in enumerate(perm):
                mat[i, j] = signs[i]
            out.append(mat)
    return out


def koch_curve() -> IFSAttractor:
    """Quartic Koch curve from (0,0) to (1,0), bulging into y > 0."""
    third = 1.0 / 3.0
    rot_p = rotation_2d(math.pi / 3)
    rot_m = rotation_2d(-math.pi / 3)
    eye = np.eye(2)
    maps = (
        Similarity(third, eye, np.zeros(2)),
        Similarity(third, rot_p, np.array([third, 0.0])),
        Similarity(third, rot_m, np.array([0.5, 0.5 / math.sqrt(3.0)])),
        Similarity(third, eye, np.array([2.0 * third, 0.0])),
    )
    sym = (
        identity_map(2),
        _fixed_point_isometry(reflection_2d(math.pi / 2), np.array([0.5, 0.0])),
    )
    return IFSAttractor(
        maps=maps,
        ambient_dim=2,
        hausdorff_dim=math.log(4.0) / math.log(3.0),
        diameter=1.0,
        symmetry_group=sym,
        disjointness=NON_DISJOINT,
        label="koch_curve",
    )


SNOWFLAKE_CENTRE = np.array([0.5, math.sqrt(3.0) / 6.0])
SNOWFLAKE_RADIUS = 1.0 / math.sqrt(3.0)


def koch_snowflake() -> IFSAttractor:
    """Filled Koch snowflake on the triangle (0,0), (1,0), (1/2, sqrt3/2).

    Seven-piece self-tiling: one centre copy scaled 1/sqrt(3) and rotated
    30 degrees about the centroid, plus six copies scaled 1/3 whose centroids
    sit two thirds of the way out to the six tips.  The tiling property is
    exercised numerically in the test suite.
    """
    g = SNOWFLAKE_CENTRE
    R = SNOWFLAKE_RADIUS
    rho_c = 1.0 / math.sqrt(3.0)
    rot_c = rotation_2d(math.pi / 6)
    maps = [Similarity(rho_c, rot_c, g - rho_c * rot_c @ g)]
    eye = np.eye(2)
    for j in range(6):
        ang = math.pi / 6 + j * math.pi / 3
        cj = g + (2.0 * R / 3.0) * np.array([math.cos(ang), math.sin(ang)])
        maps.append(Similarity(1.0 / 3.0, eye, cj - g / 3.0))
    sym = [identity_map(2)]
    for j in range(1, 6):
        sym.append(_fixed_point_isometry(rotation_2d(j * math.pi / 3), g))
    for j in range(6):
        sym.append(_fixed_point_isometry(reflection_2d(j * math.pi / 6), g))
    return IFSAttractor(
        maps=tuple(maps),
        ambient_dim=2,
        hausdorff_dim=2.0,
        diameter=2.0 * R,
        symmetry_group=tuple(sym),
        disjointness=NON_DISJOINT,
        label="koch_snowflake",
    )


TETRA_VERTICES = np.array(
    [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, math.sqrt(3.0) / 2.0, 0.0],
        [0.5, 0.5 / math.sqrt(2.0), math.sqrt(5.0) / (2.0 * math.sqrt(2.0))],
    ]
)


def sierpinski_tetrahedron(rho: float = 0.5) -> IFSAttractor:
    """Four-map pyramid fractal with maps contracting toward the vertices."""
    if not 0 < rho <= 0.5:
        raise ValueError("sierpinski_tetrahedron requires 0 < rho <= 1/2")
    eye = np.eye(3)
    maps = tuple(
        Similarity(rho, eye, (1.0 - rho) * v) for v in TETRA_VERTICES
    )
    mirror = np.diag([-1.0, 1.0, 1.0])
    sym = (
        identity_map(3),
        isometry(mirror, np.array([1.0, 0.0, 0.0])),  # swaps the two base vertices
    )
    return IFSAttractor(
        maps=maps,
        ambient_dim=3,
        hausdorff_dim=hausdorff_dimension([rho] * 4),
        diameter=1.0,
        symmetry_group=sym,
        disjointness=HULL_DISJOINT if rho < 0.5 else NON_DISJOINT,
        label=f"sierpinski_tetrahedron({rho:g})",
    )


def lift(ifs: IFSAttractor) -> IFSAttractor:
    """Embed a planar attractor into 3-space as the slice z = 0.

    Each map picks up a z-contraction by its own factor, which keeps the
    contraction factors, dimension, diameter and disjointness unchanged.
    """
    if ifs.ambient_dim != 2:
        raise ValueError("lift expects a planar attractor")

    def lift_lin(mat: np.ndarray, zsign: float = 1.0) -> np.ndarray:
        out = np.zeros((3, 3))
        out[:2, :2] = mat
        out[2, 2] = zsign
        return out

    maps = tuple(
        Similarity(s.rho, lift_lin(s.rotation), np.append(s.translation, 0.0))
        for s in ifs.maps
    )
    sym = []
    for t in ifs.symmetry_group:
        for zsign in (1.0, -1.0):
            sym.append(
                isometry(lift_lin(t.rotation, zsign), np.append(t.translation, 0.0))
            )
    return IFSAttractor(
        maps=maps,
        ambient_dim=3,
        hausdorff_dim=ifs.hausdorff_dim,
        diameter=ifs.diameter,
        measure_total=ifs.measure_total,
        symmetry_group=tuple(sym),
        disjointness=ifs.disjointness,
        label=f"lift({ifs.label})" if ifs.label else "lift",
    )


def transform_attractor(
    ifs: IFSAttractor,
    scale: float = 1.0,
    rotation: np.ndarray | None = None,
    translation: np.ndarray | None = None,
    label: str = "",
) -> IFSAttractor:
    """Image of an attractor under the similarity x -> scale * Q x + v.

    The image is itself an attractor: each map and each symmetry conjugates
    by the transform, keeping contraction factors, dimension, disjointness and
    total measure while scaling the diameter.  Q may include a reflection.
    """
    n = ifs.ambient_dim
    Q = np.eye(n) if rotation is None else np.asarray(rotation, dtype=float)
    v = np.zeros(n) if translation is None else np.asarray(translation, dtype=float)
    if not scale > 0:
        raise ValueError("scale must be positive")
    if Q.shape != (n, n) or not np.allclose(Q @ Q.T, np.eye(n), atol=1e-12):
        raise ValueError("rotation must be an orthogonal matrix of the ambient dim")

    def conjugate(s: Similarity) -> Similarity:
        lin = Q @ s.rotation @ Q.T
        delta = scale * (Q @ s.translation) + v - s.rho * (lin @ v)
        return Similarity(s.rho, lin, delta)

    return IFSAttractor(
        maps=tuple(conjugate(s) for s in ifs.maps),
        ambient_dim=n,
        hausdorff_dim=ifs.hausdorff_dim,
        diameter=scale * ifs.diameter,
        measure_total=ifs.measure_total,
        symmetry_group=tuple(conjugate(t) for t in ifs.symmetry_group),
        disjointness=ifs.disjointness,
        label=label or (f"moved({ifs.label})" if ifs.label else "moved"),
    )


LIBRARY = {
    "cantor_set": cantor_set,
    "cantor_dust": cantor_dust,
    "koch_curve": koch_curve,
    "koch_snowflake": koch_snowflake,
    "sierpinski_tetrahedron": sierpinski_tetrahedron,
}


def library_attractor(name: str, *, lift_to_3d: bool = False, **params) -> IFSAttractor:
    """Construct a library attractor by name, optionally lifted into 3-space."""
    if name not in LIBRARY:
        raise ValueError(
            f"unknown attractor {name!r}; choose from {sorted(LIBRARY)}"
        )
    out = LIBRARY[name](**params)
    if lift_to_3d:
        out = lift(out)
    return out


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def attractor_to_dict(ifs: IFSAttractor) -> dict:
    return {
        "maps": [
            {
                "rho": s.rho,
                "rotation": s.rotation.tolist(),
                "translation": s.translation.tolist(),
            }
            for s in ifs.maps
        ],
        "ambient_dim": ifs.ambient_dim,
        "measure_total": ifs.measure_total,
        "diameter": ifs.diameter,
        "symmetries": [
            {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}
            for t in ifs.symmetry_group
        ],
        "disjointness": ifs.disjointness,
        "label": ifs.label,
    }


def attractor_from_dict(doc: dict) -> IFSAttractor:
    maps = tuple(
        Similarity(
            float(m["rho"]), np.array(m["rotation"]), np.array(m["translation"])
        )
        for m in doc["maps"]
    )
    sym = tuple(
        isometry(np.array(t["rotation"]), np.array(t["translation"]))
        for t in doc.get("symmetries", [])
    )
    diam = doc.get("diameter")
    return build_attractor(
        maps,
        measure_total=float(doc.get("measure_total", 1.0)),
        symmetry_group=sym,
        disjointness=doc.get("disjointness", NON_DISJOINT),
        diameter=float(diam) if diam is not None else None,
        label=doc.get("label", ""),
    )


def attractor_hash(ifs: IFSAttractor) -> str:
    """Stable content hash used to key cached quadrature data."""
    import hashlib

    doc = attractor_to_dict(ifs)
    payload = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]

"""Galerkin discretization of the wave kernel on attractor meshes.

Basis functions are indicator functions of mesh elements scaled by
mu^(-1/2), so the matrix is A_ij = (mu_i mu_j)^(-1/2) double-integral of the
kernel over the element pair, and the right-hand side is b_i = -mu_i^(-1/2)
times the integral of the incident wave over element i.  Off-diagonal pairs at
positive distance get the plain tensor barycentre rule, evaluated in blocked
vectorized sweeps over all quadrature nodes; touching pairs are overwritten by
the singularity-subtracted path.  The matrix is complex-symmetric and is
mirrored from its upper triangle, making A = A^T hold bitwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from . import io as fio
from .ifs import Index, attractor_barycentre, enclosing_radius
from .kernels import SINGULAR_EXPONENT, fundamental_solution, plane_wave
from .mesh import Mesh, subdivision_indices
from .singquad import (
    FundamentalSet,
    PairClassifier,
    galerkin_singular_entry,
    similarity_reduce,
)

LOG = logging.getLogger(__name__)

NODE_BLOCK = 2**23  # max node-pair kernel evaluations held at once
SOLVER_RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14


class SingularMatrixError(RuntimeError):
    """Raised when elimination hits a negligible pivot.

    Usually means the wavenumber sits at or near an interior resonance of the
    scatterer's complement (the continuous operator loses injectivity there),
    or the mesh is degenerate.
    """


@dataclass(frozen=True, eq=False)
class WaveParams:
    k: float
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        if abs(np.linalg.norm(self.theta) - 1.0) > 1e-14:
            raise ValueError("incidence direction must be a unit vector")

    @property
    def dim(self) -> int:
        return len(self.theta)


@dataclass(frozen=True, eq=False)
class QuadratureCache:
    """Stacked composite barycentre rules for every mesh element."""

    points: np.ndarray  # (T, dim) all element nodes
    weights: np.ndarray  # (T,)
    starts: np.ndarray  # (N+1,) slice offsets per element

    @property
    def n_nodes(self) -> int:
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    mesh: Mesh
    wave: WaveParams
    h_q: float
    matrix: np.ndarray
    rhs: np.ndarray
    fundamentals: tuple[FundamentalSet | None, ...]
    quad: QuadratureCache

    @property
    def n(self) -> int:
        return len(self.rhs)


@dataclass(frozen=True, eq=False)
class DensitySolution:
    system: GalerkinSystem
    coeffs: np.ndarray
    residual: float

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh

    @property
    def wave(self) -> WaveParams:
        return self.system.wave

    def density_weights(self) -> np.ndarray:
        """c_j mu_j^(-1/2): the factors multiplying plain element integrals."""
        return self.coeffs / np.sqrt(self.system.mesh.mu_vector())


def default_cq(scatterer, high_k: bool = False) -> float:
    """Quadrature refinement ratio h_Q / h: square of the largest contraction
    (fourth power under the high-wavenumber policy)."""
    parts = getattr(scatterer, "parts", None) or (scatterer,)
    rho_max = max(float(np.max(p.rhos)) for p in parts)
    return rho_max**4 if high_k else rho_max**2


def quadrature_cache(mesh: Mesh, h_q: float) -> QuadratureCache:
    parts = mesh.parts
    barys = [attractor_barycentre(p) for p in parts]
    pts, wts, starts = [], [], [0]
    for e in mesh.elements:
        ifs = parts[e.block]
        sub = subdivision_indices(ifs, h_q, base=e.index)
        pts.append(np.array([ifs.map_for(q)(barys[e.block]) for q in sub]))
        wts.append(np.array([ifs.measure_for(q) for q in sub]))
        starts.append(starts[-1] + len(sub))
    return QuadratureCache(
        points=np.concatenate(pts, axis=0),
        weights=np.concatenate(wts),
        starts=np.array(starts),
    )


def _raw_double_integrals(
    rows: QuadratureCache, cols: QuadratureCache, kernel
) -> np.ndarray:
    """Matrix of tensor-rule double integrals for all element pairs.

    Exactly coincident nodes contribute zero; entries of touching pairs are
    meant to be replaced by the singular path afterwards.  Rows are marched
    in groups of whole elements so the segment reductions stay aligned.
    When both rules are the same object only the upper triangle is computed,
    the lower being its mirror.
    """
    symmetric = rows is cols
    T = cols.n_nodes
    rs, cs = rows.starts, cols.starts
    n_rows = len(rs) - 1
    out = np.zeros((n_rows, len(cs) - 1), dtype=complex)
    row_el = 0
    while row_el < n_rows:
        col_el = row_el if symmetric else 0
        clo = cs[col_el]
        width = T - clo
        stop_el = row_el
        while (
            stop_el < n_rows
            and (rs[stop_el + 1] - rs[row_el]) * width <= NODE_BLOCK
        ):
            stop_el += 1
        stop_el = max(stop_el, row_el + 1)
        lo, hi = rs[row_el], rs[stop_el]
        r = cdist(rows.points[lo:hi], cols.points[clo:])
        coincident = r == 0.0
        r[coincident] = 1.0
        vals = kernel(r)
        vals[coincident] = 0.0
        vals *= cols.weights[None, clo:]
        col_red = np.add.reduceat(vals, cs[col_el:-1] - clo, axis=1)
        col_red *= rows.weights[lo:hi, None]
        out[row_el:stop_el, col_el:] = np.add.reduceat(
            col_red, rs[row_el:stop_el] - lo, axis=0
        )
        row_el = stop_el
    if symmetric:
        upper = np.triu(out, 1)
        out += upper.T
    return out


def _element_radii(mesh: Mesh) -> np.ndarray:
    radii = np.empty(mesh.n_elements)
    cache = {}
    for i, e in enumerate(mesh.elements):
        if e.block not in cache:
            cache[e.block] = enclosing_radius(mesh.parts[e.block])[1]
        radii[i] = e.rho * cache[e.block]
    return radii


def find_singular_pairs(
    mesh: Mesh, classifiers: dict[int, PairClassifier]
) -> list[tuple[int, int]]:
    """Unordered element pairs (i <= j) not certified disjoint.

    Candidates are prefiltered by enclosing-ball overlap on barycentres;
    cross-block pairs are excluded by convention (at most measure-zero
    contact between distinct parts).
    """
    barys = mesh.bary_matrix()
    radii = _element_radii(mesh)
    pairs = [(i, i) for i in range(mesh.n_elements)]
    tree = cKDTree(barys)
    rmax = 2.0 * float(radii.max())
    for i, j in sorted(tree.query_pairs(r=rmax * (1 + 1e-12))):
        ei, ej = mesh.elements[i], mesh.elements[j]
        if ei.block != ej.block:
            continue
        if np.linalg.norm(ei.bary - ej.bary) > radii[i] + radii[j]:
            continue
        if not classifiers[ei.block].certified_disjoint(ei.index, ej.index):
            pairs.append((i, j))
    return pairs


def assemble(
    mesh: Mesh,
    wave: WaveParams,
    c_q: float | None = None,
    high_k: bool = False,
    fundamentals: tuple[FundamentalSet | None, ...] | None = None,
) -> GalerkinSystem:
    """Build the Galerkin matrix and right-hand side at h_Q = C_Q h."""
    dim = mesh.parts[0].ambient_dim
    if wave.dim != dim:
        raise ValueError("wave direction dimension does not match the scatterer")
    if c_q is None:
        c_q = default_cq(mesh.scatterer, high_k=high_k)
    if c_q > 1.0 + 1e-12:
        raise ValueError("quadrature width h_Q must not exceed the mesh width h")
    h_q = c_q * mesh.h
    k = wave.k
    t = SINGULAR_EXPONENT[dim]

    classifiers = {b: PairClassifier(p) for b, p in enumerate(mesh.parts)}
    if fundamentals is None:
        fundamentals = tuple(
            similarity_reduce(p, t, h_q, classifier=classifiers[b])
            for b, p in enumerate(mesh.parts)
        )

    quad = quadrature_cache(mesh, h_q)
    raw = _raw_double_integrals(
        quad, quad, lambda r: fundamental_solution(r, k, dim)
    )

    mu = mesh.mu_vector()
    scale = 1.0 / np.sqrt(mu)
    A = raw * scale[:, None] * scale[None, :]

    for i, j in find_singular_pairs(mesh, classifiers):
        e_i, e_j = mesh.elements[i], mesh.elements[j]
        fs = fundamentals[e_i.block]
        entry = galerkin_singular_entry(
            fs, k, dim, e_i.index, e_j.index, h_q
        ) * (scale[i] * scale[j])
        A[i, j] = entry
        A[j, i] = entry
    A = np.triu(A) + np.triu(A, 1).T

    u_inc = plane_wave(quad.points, k, wave.theta)
    b = -scale * np.add.reduceat(quad.weights * u_inc, quad.starts[:-1])

    LOG.info(
        "assembled N=%d system (h=%.3g, h_Q=%.3g, %d quadrature nodes)",
        len(b), mesh.h, h_q, quad.n_nodes,
    )
    return GalerkinSystem(
        mesh=mesh, wave=wave, h_q=h_q, matrix=A, rhs=b,
        fundamentals=fundamentals, quad=quad,
    )


def solve(system: GalerkinSystem) -> DensitySolution:
    """Direct dense solve with pivot screening and a residual guarantee."""
    A, b = system.matrix, system.rhs
    lu, piv = lu_factor(A)
    pivots = np.abs(np.diag(lu))
    threshold = PIVOT_TOL * np.linalg.norm(A, 1)
    if pivots.min() <= threshold:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {threshold:.3e}; the wavenumber "
            f"k={system.wave.k:g} may sit near an interior resonance"
        )
    c = lu_solve((lu, piv), b)
    c = c + lu_solve((lu, piv), b - A @ c)  # one step of refinement
    residual = float(np.linalg.norm(A @ c - b) / np.linalg.norm(b))
    if residual > SOLVER_RESIDUAL_TOL:
        raise SingularMatrixError(
            f"solver residual {residual:.3e} exceeds {SOLVER_RESIDUAL_TOL:g}"
        )
    return DensitySolution(system=system, coeffs=c, residual=residual)


# ---------------------------------------------------------------------------
# boundary condition diagnostic
# ---------------------------------------------------------------------------

def boundary_residual(solution: DensitySolution, sample_depth: int = 6) -> float:
    """How far the reconstructed field is from cancelling the incident wave.

    The trace condition is tested in averaged form: for every depth-
    `sample_depth` piece, average the scattered-plus-incident field against
    the piece's normalized indicator.  Averages over pieces finer than the
    mesh are not annihilated by Galerkin orthogonality, so this decreases as
    the mesh resolves the density.  Touching piece/element double integrals
    reuse the singular machinery; the rest is one blocked tensor sweep.
    """
    system = solution.system
    mesh = system.mesh
    if len(mesh.parts) != 1:
        raise ValueError("boundary residual implemented for single-part scatterers")
    ifs = mesh.parts[0]
    k, dim = system.wave.k, system.wave.dim
    fs = system.fundamentals[0]
    h_q = system.h_q

    samples: list[Index] = [()]
    for _ in range(sample_depth):
        samples = [s + (m,) for s in samples for m in range(1, ifs.n_maps + 1)]

    x0 = attractor_barycentre(ifs)
    pts, wts, starts = [], [], [0]
    for q in samples:
        sub = subdivision_indices(ifs, h_q, base=q)
        pts.append(np.array([ifs.map_for(s)(x0) for s in sub]))
        wts.append(np.array([ifs.measure_for(s) for s in sub]))
        starts.append(starts[-1] + len(sub))
    squad = QuadratureCache(
        points=np.concatenate(pts, axis=0),
        weights=np.concatenate(wts),
        starts=np.array(starts),
    )

    quad = system.quad
    cross = _raw_double_integrals(
        squad, quad, lambda r: fundamental_solution(r, k, dim)
    )

    # replace entries of piece/element pairs that are not certified disjoint
    mu_q = np.array([ifs.measure_for(q) for q in samples])
    _, base_radius = enclosing_radius(ifs)
    q_radii = np.array([ifs.rho_for(q) for q in samples]) * base_radius
    q_barys = np.array([ifs.map_for(q)(x0) for q in samples])
    el_radii = _element_radii(mesh)
    tree = cKDTree(mesh.bary_matrix())
    classifier = fs.classifier
    rmax = float(q_radii.max() + el_radii.max())
    for qi, hits in enumerate(tree.query_ball_point(q_barys, r=rmax * (1 + 1e-12))):
        for j in hits:
            e = mesh.elements[j]
            gap = np.linalg.norm(q_barys[qi] - e.bary)
            if gap > q_radii[qi] + el_radii[j]:
                continue
            if classifier.certified_disjoint(samples[qi], e.index):
                continue
            cross[qi, j] = galerkin_singular_entry(
                fs, k, dim, samples[qi], e.index, h_q
            )

    inc_avg = (
        np.add.reduceat(
            squad.weights * plane_wave(squad.points, k, system.wave.theta),
            squad.starts[:-1],
        )
        / mu_q
    )
    scattered_avg = (cross @ solution.density_weights()) / mu_q
    return float(np.max(np.abs(scattered_avg + inc_avg)))


# ---------------------------------------------------------------------------
# binary system dump (regression artifacts)
# ---------------------------------------------------------------------------

def write_system_binary(system: GalerkinSystem, path: str) -> None:
    """Little-endian dump: uint64 N, then A row-major and b, re/im doubles."""
    n = system.n
    buf = bytearray()
    buf += np.array(n, dtype="<u8").tobytes()
    inter = np.empty((n, n, 2))
    inter[:, :, 0] = system.matrix.real
    inter[:, :, 1] = system.matrix.imag
    buf += inter.astype("<f8").tobytes()
    rhs = np.empty((n, 2))
    rhs[:, 0] = system.rhs.real
    rhs[:, 1] = system.rhs.imag
    buf += rhs.astype("<f8").tobytes()
    fio.atomic_write_bytes(path, bytes(buf))


def read_system_binary(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        a = np.frombuffer(fh.read(16 * n * n), dtype="<f8").reshape(n, n, 2)
        b = np.frombuffer(fh.read(16 * n), dtype="<f8").reshape(n, 2)
    return a[:, :, 0] + 1j * a[:, :, 1], b[:, 0] + 1j * b[:, 1]

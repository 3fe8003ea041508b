"""Galerkin assembly and solve behaviour on small meshes.

Individual matrix and right-hand-side entries are re-computed by hand from
the quadrature cache to pin the discretization layout; the rest covers
symmetry, measure-scaling covariance, solver guarantees, singular-pair
detection and the binary dump format.
"""

import dataclasses
import struct
import warnings

import numpy as np
import pytest

from fractalscat.galerkin import (
    SingularMatrixError,
    WaveParams,
    assemble,
    boundary_residual,
    default_cq,
    find_singular_pairs,
    quadrature_cache,
    read_system_binary,
    solve,
    write_system_binary,
)
from fractalscat.ifs import cantor_dust, cantor_set, koch_curve, koch_snowflake
from fractalscat.kernels import fundamental_solution, plane_wave
from fractalscat.mesh import build_mesh, snowflake_boundary, uniform_mesh
from fractalscat.singquad import PairClassifier, similarity_reduce

THETA2 = np.array([0.0, -1.0])


def cantor_system(level=2, k=2.0, **kw):
    mesh = uniform_mesh(cantor_set(1.0 / 3.0), level)
    return assemble(mesh, WaveParams(k, THETA2), **kw)


def test_wave_params_validation():
    wave = WaveParams(2.0, [0.0, 1.0])
    assert wave.dim == 2
    assert wave.theta.dtype == np.float64
    with pytest.raises(ValueError):
        WaveParams(0.0, [0.0, 1.0])
    with pytest.raises(ValueError):
        WaveParams(-3.0, [0.0, 1.0])
    with pytest.raises(ValueError):
        WaveParams(1.0, [0.5, 0.5])
    assert WaveParams(1.0, [0.0, 0.0, 1.0]).dim == 3


def test_default_cq_policies():
    """Ratio is the square of the largest contraction, fourth power at high k."""
    cantor = cantor_set(1.0 / 3.0)
    assert default_cq(cantor) == pytest.approx(1.0 / 9.0)
    assert default_cq(cantor, high_k=True) == pytest.approx(1.0 / 81.0)
    # the snowflake's central map contracts by 1/sqrt(3)
    assert default_cq(koch_snowflake()) == pytest.approx(1.0 / 3.0)
    assert default_cq(snowflake_boundary()) == pytest.approx(1.0 / 9.0)


def test_quadrature_cache_structure():
    ifs = cantor_set(1.0 / 3.0)
    mesh = uniform_mesh(ifs, 1)
    cache = quadrature_cache(mesh, 1.0 / 9.0)
    # each half splits into its two width-1/9 grandchildren
    assert cache.starts.tolist() == [0, 2, 4]
    assert cache.n_nodes == 4
    np.testing.assert_allclose(
        np.add.reduceat(cache.weights, cache.starts[:-1]), mesh.mu_vector()
    )
    assert cache.points.shape == (4, 2)
    assert np.all(cache.points[:, 1] == 0.0)


def test_far_entry_matches_manual_tensor_rule():
    mesh = uniform_mesh(cantor_set(1.0 / 3.0), 2)
    wave = WaveParams(2.0, THETA2)
    system = assemble(mesh, wave)
    cache = system.quad
    lo0, hi0 = cache.starts[0], cache.starts[1]
    lo3, hi3 = cache.starts[3], cache.starts[4]
    p, q = cache.points[lo0:hi0], cache.points[lo3:hi3]
    r = np.linalg.norm(p[:, None, :] - q[None, :, :], axis=-1)
    manual = np.sum(
        cache.weights[lo0:hi0, None]
        * cache.weights[None, lo3:hi3]
        * fundamental_solution(r, wave.k, 2)
    )
    mu = mesh.mu_vector()
    manual /= np.sqrt(mu[0] * mu[3])
    assert system.matrix[0, 3] == pytest.approx(manual, rel=1e-13)


def test_rhs_matches_manual_integral():
    mesh = uniform_mesh(cantor_set(1.0 / 3.0), 2)
    wave = WaveParams(3.0, THETA2)
    system = assemble(mesh, wave)
    cache = system.quad
    mu = mesh.mu_vector()
    for i in (0, 2):
        lo, hi = cache.starts[i], cache.starts[i + 1]
        manual = -np.sum(
            cache.weights[lo:hi]
            * plane_wave(cache.points[lo:hi], wave.k, wave.theta)
        ) / np.sqrt(mu[i])
        assert system.rhs[i] == pytest.approx(manual, rel=1e-13)


def test_matrix_bitwise_symmetric_2d():
    system = cantor_system(level=3)
    assert np.array_equal(system.matrix, system.matrix.T)
    assert np.all(np.isfinite(system.matrix.view(float)))


def test_matrix_bitwise_symmetric_3d():
    mesh = uniform_mesh(cantor_dust(1.0 / 3.0, 3), 1)
    system = assemble(mesh, WaveParams(1.5, [0.0, 0.0, -1.0]))
    assert system.n == 8
    assert np.array_equal(system.matrix, system.matrix.T)
    assert np.all(np.isfinite(system.matrix.view(float)))


def test_quadrature_ratio_guard():
    mesh = uniform_mesh(cantor_set(1.0 / 3.0), 1)
    wave = WaveParams(2.0, THETA2)
    with pytest.raises(ValueError):
        assemble(mesh, wave, c_q=1.2)
    system = assemble(mesh, wave, c_q=0.5)
    assert system.h_q == pytest.approx(0.5 * mesh.h)
    assert assemble(mesh, wave).h_q == pytest.approx(mesh.h / 9.0)


def test_dimension_mismatch_rejected():
    mesh = uniform_mesh(cantor_set(1.0 / 3.0), 1)
    with pytest.raises(ValueError):
        assemble(mesh, WaveParams(2.0, [0.0, 0.0, 1.0]))


def test_wrong_exponent_fundamentals_rejected():
    ifs = cantor_set(1.0 / 3.0)
    mesh = uniform_mesh(ifs, 1)
    bad = (similarity_reduce(ifs, 0.5, mesh.h / 9.0),)
    with pytest.raises(ValueError, match="exponent"):
        assemble(mesh, WaveParams(2.0, THETA2), fundamentals=bad)


def test_solve_residual_guarantee():
    system = cantor_system(level=3, k=5.0)
    sol = solve(system)
    assert sol.residual <= 1e-10
    recomputed = np.linalg.norm(system.matrix @ sol.coeffs - system.rhs)
    assert recomputed / np.linalg.norm(system.rhs) == pytest.approx(
        sol.residual, abs=1e-12
    )
    assert sol.mesh is system.mesh
    assert sol.wave is system.wave
    np.testing.assert_allclose(
        sol.density_weights(), sol.coeffs / np.sqrt(system.mesh.mu_vector())
    )


def test_degenerate_matrix_reports_resonance():
    system = cantor_system(level=1)
    broken = dataclasses.replace(system, matrix=np.zeros_like(system.matrix))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # scipy flags the zero diagonal too
        with pytest.raises(SingularMatrixError, match="resonance"):
            solve(broken)


def test_measure_rescale_covariance():
    """A scales by alpha, b by sqrt(alpha), density weights by 1/alpha."""
    wave = WaveParams(2.0, THETA2)
    base = assemble(uniform_mesh(cantor_set(1.0 / 3.0), 2), wave)
    alpha = 2.0
    scaled = assemble(
        uniform_mesh(cantor_set(1.0 / 3.0).with_measure(alpha), 2), wave
    )
    np.testing.assert_allclose(scaled.matrix, alpha * base.matrix, rtol=1e-12)
    np.testing.assert_allclose(scaled.rhs, np.sqrt(alpha) * base.rhs, rtol=1e-12)
    np.testing.assert_allclose(
        solve(scaled).density_weights(),
        solve(base).density_weights() / alpha,
        rtol=1e-10,
    )


def test_binary_dump_layout_and_roundtrip(tmp_path):
    system = cantor_system(level=2)
    path = tmp_path / "system.bin"
    write_system_binary(system, str(path))
    blob = path.read_bytes()
    n = system.n
    assert blob[:8] == struct.pack("<Q", n)
    assert len(blob) == 8 + 16 * n * n + 16 * n
    re00, im00 = struct.unpack("<2d", blob[8:24])
    assert re00 == system.matrix[0, 0].real
    assert im00 == system.matrix[0, 0].imag
    a, b = read_system_binary(str(path))
    assert np.array_equal(a, system.matrix)
    assert np.array_equal(b, system.rhs)


def test_singular_pairs_detected():
    cantor = cantor_set(1.0 / 3.0)
    mesh = uniform_mesh(cantor, 3)
    assert find_singular_pairs(mesh, {0: PairClassifier(cantor)}) == [
        (i, i) for i in range(8)
    ]
    # along the curve every consecutive element pair shares an endpoint
    koch = koch_curve()
    kmesh = uniform_mesh(koch, 2)
    kpairs = find_singular_pairs(kmesh, {0: PairClassifier(koch)})
    expected = [(i, i) for i in range(16)] + [(i, i + 1) for i in range(15)]
    assert sorted(kpairs) == sorted(expected)


def test_union_assembly_and_solve():
    union = snowflake_boundary()
    mesh = build_mesh(union, (1.0 / 3.0) * (1 + 1e-9))
    assert mesh.n_elements == 12
    system = assemble(mesh, WaveParams(2.0, THETA2))
    assert np.array_equal(system.matrix, system.matrix.T)
    classifiers = {b: PairClassifier(p) for b, p in enumerate(mesh.parts)}
    pairs = find_singular_pairs(mesh, classifiers)
    assert len(pairs) == 3 * (4 + 3)
    for i, j in pairs:
        assert mesh.elements[i].block == mesh.elements[j].block
    assert solve(system).residual <= 1e-10


def test_boundary_residual_decreases_with_level():
    wave = WaveParams(5.0, THETA2)
    values = []
    for level in (1, 2, 3):
        mesh = uniform_mesh(cantor_set(1.0 / 3.0), level)
        values.append(boundary_residual(solve(assemble(mesh, wave))))
    assert values[0] > values[1] > values[2]


def test_boundary_residual_union_unsupported():
    mesh = build_mesh(snowflake_boundary(), 1.0)
    sol = solve(assemble(mesh, WaveParams(2.0, THETA2)))
    with pytest.raises(ValueError):
        boundary_residual(sol)

"""Singular double integrals: barycentre rules, scaling identities, closure.

The fast engine is cross-checked three ways: hand-derived closed forms for
the quartic curve, the never-touching closed form, and (in the acceptance
suite) brute-force extrapolation.  Here the unit-level algebra is pinned.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fractalscat.ifs import (
    IFSAttractor,
    Similarity,
    attractor_barycentre,
    cantor_dust,
    cantor_set,
    koch_curve,
    koch_snowflake,
    sierpinski_tetrahedron,
)
from fractalscat.kernels import SINGULAR_COEFF, smooth_part
from fractalscat.singquad import (
    NoFiniteClosure,
    PairClassifier,
    barycentre_rule,
    double_regular,
    energy_disjoint,
    fundamental_set_from_dict,
    fundamental_set_to_dict,
    galerkin_singular_entry,
    koch_fundamental,
    proportional_value,
    resolve_singular_integral,
    similarity_check,
    similarity_reduce,
    tensor_rule_sum,
)

H_Q = 3.0**-6


def unit_interval() -> IFSAttractor:
    """[0,1] x {0} as a two-map attractor; energies have textbook values."""
    maps = (
        Similarity(0.5, np.eye(2), np.zeros(2)),
        Similarity(0.5, np.eye(2), np.array([0.5, 0.0])),
    )
    return IFSAttractor(
        maps=maps,
        ambient_dim=2,
        hausdorff_dim=1.0,
        diameter=1.0,
        symmetry_group=(
            Similarity(1.0, np.eye(2), np.zeros(2)),
            Similarity(1.0, np.diag([-1.0, 1.0]), np.array([1.0, 0.0])),
        ),
        disjointness="non-disjoint",
        label="interval",
    )


# ---------------------------------------------------------------------------
# barycentre rules
# ---------------------------------------------------------------------------

def test_rule_weights_sum_to_piece_measure():
    for ifs in (cantor_set(1.0 / 3.0), koch_snowflake()):
        for index in ((), (1,), (2, 1)):
            rule = barycentre_rule(ifs, index, 0.05)
            assert np.sum(rule.weights) == pytest.approx(
                ifs.measure_for(index), abs=1e-12
            )


def test_rule_collapses_to_single_node():
    ifs = koch_curve()
    rule = barycentre_rule(ifs, (3,), 1.0)
    assert len(rule.weights) == 1
    assert rule.weights[0] == pytest.approx(0.25)
    assert np.allclose(rule.points[0], ifs.map_for((3,))(attractor_barycentre(ifs)))


def test_rule_affine_exactness():
    ifs = cantor_dust(1.0 / 3.0, 2)
    rule = barycentre_rule(ifs, (2,), 0.02)
    A = np.array([[2.0, -1.0], [0.5, 3.0]])
    b = np.array([0.3, -0.7])
    integral = np.sum(rule.weights[:, None] * (rule.points @ A.T + b), axis=0)
    mu = ifs.measure_for((2,))
    bary = ifs.map_for((2,))(attractor_barycentre(ifs))
    assert np.allclose(integral, mu * (A @ bary + b), atol=1e-13)


def test_tensor_rule_matches_nested_loops():
    ifs = cantor_set(1.0 / 3.0)
    ra = barycentre_rule(ifs, (1,), 0.12)
    rb = barycentre_rule(ifs, (2,), 0.04)
    kern = lambda r: 1.0 / (1.0 + r**2)
    manual = sum(
        wa * wb * kern(np.linalg.norm(pa - pb))
        for pa, wa in zip(ra.points, ra.weights)
        for pb, wb in zip(rb.points, rb.weights)
    )
    assert tensor_rule_sum(
        ra.points, ra.weights, rb.points, rb.weights, kern
    ) == pytest.approx(manual, rel=1e-13)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def test_classifier_on_library_pairs():
    cls = PairClassifier(cantor_set(1.0 / 3.0))
    assert cls.certified_disjoint((1,), (2,))
    assert cls.certified_disjoint((1, 2), (2, 1))
    assert not cls.certified_disjoint((1,), (1, 2))  # nested

    kcls = PairClassifier(koch_curve())
    assert not kcls.certified_disjoint((1,), (2,))  # share an endpoint
    assert not kcls.certified_disjoint((1, 4), (2, 1))
    assert kcls.certified_disjoint((1,), (3,))
    assert kcls.certified_disjoint((2, 1), (2, 3))


def test_classifier_symmetric_and_cached():
    cls = PairClassifier(koch_curve())
    for pair in (((1,), (2,)), ((1,), (4,))):
        assert cls.certified_disjoint(*pair) == cls.certified_disjoint(*pair[::-1])
        assert cls.certified_disjoint(*pair) == cls.certified_disjoint(*pair)


def test_classifier_map_variant_agrees():
    ifs = koch_curve()
    cls = PairClassifier(ifs)
    for a, b in (((1,), (2,)), ((1,), (3,)), ((2, 2), (3, 1))):
        assert cls.certified_disjoint_maps(
            ifs.map_for(a), ifs.map_for(b)
        ) == cls.certified_disjoint(a, b)


# ---------------------------------------------------------------------------
# scaling identities
# ---------------------------------------------------------------------------

def test_similarity_check_finds_sibling_scale():
    ifs = koch_curve()
    ident = ifs.symmetry_group[0]
    varrho = similarity_check(ifs, (1, 1), (1, 2), (1,), (2,), ident, ident)
    assert varrho == pytest.approx(1.0 / 3.0)
    assert similarity_check(ifs, (1, 1), (1, 3), (1,), (2,), ident, ident) is None


def test_interval_diagonal_log_identity():
    """Sub-square value of the interval log energy, against the exact law."""
    ifs = unit_interval()
    fs = similarity_reduce(ifs, 0.0, 2.0**-9)
    whole = fs.values[0]
    sub = resolve_singular_integral(fs, (1,), (1,))
    law = proportional_value(ifs, whole, 0.5, 0.0, (1,), (1,))
    assert sub == pytest.approx(law, rel=1e-12)
    # analytic: quarter of (whole - log 2)
    assert sub == pytest.approx(0.25 * (-1.5 - math.log(2.0)), rel=1e-5)


def test_interval_energy_closed_forms():
    ifs = unit_interval()
    fs0 = similarity_reduce(ifs, 0.0, 2.0**-9)
    assert fs0.values[0] == pytest.approx(-1.5, rel=1e-5)
    fs_half = similarity_reduce(ifs, 0.5, 2.0**-9)
    assert fs_half.values[0] == pytest.approx(8.0 / 3.0, rel=1e-4)


def test_energy_disjoint_equals_reduce_on_cantor():
    for rho in (0.25, 1.0 / 3.0):
        ifs = cantor_set(rho)
        direct = energy_disjoint(ifs, 0.0, H_Q)
        fs = similarity_reduce(ifs, 0.0, H_Q)
        assert len(fs.pairs) == 1
        assert fs.values[0] == pytest.approx(direct, rel=1e-13)


def test_koch_reduce_reproduces_closed_forms():
    for t in (0.0, 1.0):
        closed = koch_fundamental(t, H_Q)
        fs = similarity_reduce(koch_curve(), t, H_Q)
        assert len(fs.pairs) == 3
        assert fs.pairs[0] == ((), ())
        for pair, val in zip(closed.pairs, closed.values):
            assert resolve_singular_integral(fs, *pair) == pytest.approx(
                val, rel=1e-12, abs=1e-12
            )


def test_snowflake_reduce_terminates():
    fs = similarity_reduce(koch_snowflake(), 0.0, 0.02)
    assert len(fs.pairs) >= 2
    assert all(np.isfinite(v) for v in fs.values)


def test_reduce_depth_overflow_raises():
    with pytest.raises(NoFiniteClosure):
        similarity_reduce(koch_curve(), 0.0, H_Q, max_depth=1)


def test_resolve_handles_unequal_depths():
    """A fine piece against its coarse ancestor splits the ancestor only."""
    ifs = cantor_set(1.0 / 3.0)
    fs = similarity_reduce(ifs, 0.0, H_Q)
    val = resolve_singular_integral(fs, (1, 1, 1), (1,))
    by_parts = sum(
        resolve_singular_integral(fs, (1, 1, 1), (1, j)) for j in (1, 2)
    )
    assert val == pytest.approx(by_parts, rel=1e-12)
    whole = sum(
        resolve_singular_integral(fs, (i,), (j,))
        for i in (1, 2)
        for j in (1, 2)
    )
    assert whole == pytest.approx(fs.values[0], rel=1e-12)


def test_tetrahedron_reduce_single_fundamental():
    ifs = sierpinski_tetrahedron(3.0 / 8.0)
    fs = similarity_reduce(ifs, 1.0, 0.05)
    assert len(fs.pairs) == 1
    assert fs.values[0] == pytest.approx(
        energy_disjoint(ifs, 1.0, 0.05), rel=1e-13
    )


# ---------------------------------------------------------------------------
# wave-kernel entries
# ---------------------------------------------------------------------------

def test_galerkin_entry_composition():
    fs = koch_fundamental(0.0, H_Q)
    k = 5.0
    entry = galerkin_singular_entry(fs, k, 2, (1,), (2,), H_Q)
    smooth = double_regular(
        fs.ifs, (1,), (2,), H_Q, lambda r: smooth_part(r, k, 2)
    )
    singular = SINGULAR_COEFF[2] * resolve_singular_integral(fs, (1,), (2,))
    assert entry == smooth + singular


def test_galerkin_entry_exponent_mismatch():
    fs = koch_fundamental(1.0, H_Q)  # exponent for 3D kernels
    with pytest.raises(ValueError):
        galerkin_singular_entry(fs, 5.0, 2, (1,), (2,), H_Q)


# ---------------------------------------------------------------------------
# cache round trip
# ---------------------------------------------------------------------------

def test_fundamental_set_json_roundtrip():
    ifs = koch_curve()
    fs = similarity_reduce(ifs, 1.0, H_Q)
    blob = fundamental_set_to_dict(fs)
    back = fundamental_set_from_dict(blob, ifs)
    assert back.pairs == fs.pairs
    assert back.values == pytest.approx(fs.values)
    assert resolve_singular_integral(back, (2,), (3,)) == pytest.approx(
        resolve_singular_integral(fs, (2,), (3,))
    )
    with pytest.raises(ValueError):
        fundamental_set_from_dict(blob, cantor_set(1.0 / 3.0))


# ---------------------------------------------------------------------------
# property-based checks
# ---------------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(rho=st.floats(min_value=0.2, max_value=0.45))
def test_disjoint_energy_scaling_property(rho):
    """The closed form satisfies its own defining balance equation."""
    ifs = cantor_set(rho)
    t = 0.0
    h_q = 0.01
    val = energy_disjoint(ifs, t, h_q)
    d = ifs.hausdorff_dim
    lhs = val * (1.0 - 2.0 * rho ** (2.0 * d))
    regular = 2.0 * double_regular(
        ifs, (1,), (2,), h_q, lambda r: np.log(r)
    )
    correction = 2.0 * (rho**d) ** 2 * math.log(rho)
    assert lhs == pytest.approx(regular + correction, rel=1e-9, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(
    rho=st.floats(min_value=0.3, max_value=0.4),
    t=st.sampled_from([0.0, 0.5]),
)
def test_proportional_value_consistency(rho, t):
    # log2/log(1/rho) > 0.5 on this rho range, so t stays integrable
    """Scaling law agrees with direct evaluation on certified-disjoint pairs."""
    ifs = cantor_set(rho)
    h_q = 0.002
    base = double_regular(ifs, (1, 2), (2, 1), h_q, lambda r: r**-t if t else np.log(r))
    shrunk = double_regular(
        ifs, (1, 1, 2), (1, 2, 1), h_q * rho, lambda r: r**-t if t else np.log(r)
    )
    law = proportional_value(ifs, base, rho, t, (1, 1, 2), (1, 2, 1))
    # both factors shrink by rho: the law rescales value and adds log term
    assert shrunk == pytest.approx(law, rel=1e-10, abs=1e-10)

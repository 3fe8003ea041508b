"""Quadrature on attractors: composite barycentre rules and singular integrals.

Regular integrals use the composite barycentre rule: subdivide a piece until
every sub-piece is narrower than h_Q, then sum kernel values at sub-piece
barycentres weighted by their measures.  Double integrals take the tensor
product of two such rules.

Singular double integrals of the model kernels (log distance for exponent
t = 0, inverse distance power for t > 0) over touching pairs of pieces cannot
be integrated that way.  They are reduced instead through the scaling law

    I(a, a') = varrho^(2d-t) I(n, n') + [t = 0] mu_a mu_a' log(varrho),

valid whenever an ambient similarity of ratio varrho carries the pair (n, n')
onto (a, a').  Breadth-first subdivision plus matching against previously seen
pairs closes the system on a finite set of "fundamental" integrals, which are
then solved for through a small linear system with regular right-hand sides.

The only geometric predicate needed is certified disjointness of two pieces,
decided by comparing point-cloud distances against covering radii.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.spatial import cKDTree

from .ifs import (
    IFSAttractor,
    Index,
    ROOT_INDEX,
    Similarity,
    attractor_barycentre,
    attractor_hash,
    barycentre_cloud,
    enclosing_radius,
    index_to_str,
    parse_index,
)
from .kernels import SINGULAR_COEFF, SINGULAR_EXPONENT, model_kernel, smooth_part
from .mesh import subdivision_indices

LOG = logging.getLogger(__name__)

TENSOR_BLOCK = 2**24  # max simultaneous kernel evaluations in a tensor sum
MATCH_TOL = 1e-10


class NoFiniteClosure(RuntimeError):
    """Similarity reduction failed to close on a finite fundamental set."""


# ---------------------------------------------------------------------------
# composite barycentre rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BarycentreRule:
    owner: Index
    h_q: float
    points: np.ndarray  # (P, ambient_dim)
    weights: np.ndarray  # (P,)

    @property
    def n_nodes(self) -> int:
        return len(self.weights)

    def integrate(self, f) -> complex:
        return np.sum(self.weights * f(self.points))


def barycentre_rule(ifs: IFSAttractor, m: Index, h_q: float) -> BarycentreRule:
    """Composite barycentre rule on piece m with sub-pieces of diameter <= h_q."""
    if h_q <= 0:
        raise ValueError("h_q must be positive")
    indices = subdivision_indices(ifs, h_q, base=m)
    x0 = attractor_barycentre(ifs)
    points = np.array([ifs.map_for(idx)(x0) for idx in indices])
    weights = np.array([ifs.measure_for(idx) for idx in indices])
    return BarycentreRule(owner=m, h_q=h_q, points=points, weights=weights)


def tensor_rule_sum(points_a, weights_a, points_b, weights_b, kernel):
    """sum_i sum_j w_i w_j kernel(|x_i - y_j|), blocked to bound memory."""
    pa = np.asarray(points_a)
    pb = np.asarray(points_b)
    P, Q = len(pa), len(pb)
    if Q == 0 or P == 0:
        return 0.0
    rows = max(1, TENSOR_BLOCK // Q)
    total = 0.0
    for start in range(0, P, rows):
        stop = min(start + rows, P)
        diff = pa[start:stop, None, :] - pb[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        vals = kernel(r)
        total = total + weights_a[start:stop] @ vals @ weights_b
    return total


def double_regular(ifs: IFSAttractor, m: Index, m_p: Index, h_q: float, kernel):
    """Tensor-product barycentre rule for a kernel regular on the pair (m, m')."""
    ra = barycentre_rule(ifs, m, h_q)
    rb = barycentre_rule(ifs, m_p, h_q)
    return tensor_rule_sum(ra.points, ra.weights, rb.points, rb.weights, kernel)


# ---------------------------------------------------------------------------
# certified disjointness of pairs of pieces
# ---------------------------------------------------------------------------

def _similarity_key(s: Similarity, digits: int = 9) -> tuple:
    arr = np.concatenate([s.linear_part().ravel(), s.translation])
    return tuple(np.round(arr, digits))


class PairClassifier:
    """Decides whether two pieces are provably separated.

    The pair (a, a') is normalized by the inverse of the first map, leaving the
    attractor against a transformed copy tau(attractor).  Point clouds of
    depth-L barycentres cover each set to within a known radius, so a cloud
    distance exceeding the sum of covering radii certifies disjointness.
    Touching pairs shrink at the same rate as the radii and are never
    certified; they are reported as potentially touching.
    """

    def __init__(self, ifs: IFSAttractor, max_cloud: int = 250_000, max_depth: int = 10):
        self.ifs = ifs
        self.max_cloud = max_cloud
        self.max_depth = max_depth
        self.centre, self.radius = enclosing_radius(ifs)
        self._clouds: dict[int, np.ndarray] = {}
        self._trees: dict[int, cKDTree] = {}
        self._cache: dict[tuple, bool] = {}
        self.rho_max = float(np.max(ifs.rhos))

    def _cloud(self, depth: int) -> np.ndarray:
        if depth not in self._clouds:
            self._clouds[depth] = barycentre_cloud(self.ifs, depth)
        return self._clouds[depth]

    def _tree(self, depth: int) -> cKDTree:
        if depth not in self._trees:
            self._trees[depth] = cKDTree(self._cloud(depth))
        return self._trees[depth]

    def certified_disjoint(self, a: Index, b: Index) -> bool:
        """True only if pieces a and b are provably at positive distance."""
        if a == b:
            return False
        return self.certified_disjoint_maps(
            self.ifs.map_for(a), self.ifs.map_for(b)
        )

    def certified_disjoint_maps(self, sa: Similarity, sb: Similarity) -> bool:
        """Same predicate with the composed piece maps supplied by the caller."""
        tau = sa.inverse().compose(sb)
        key = _similarity_key(tau)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = self._classify(tau)
        self._cache[key] = out
        self._cache[_similarity_key(tau.inverse())] = out
        return out

    def _classify(self, tau: Similarity) -> bool:
        # ball-to-ball prefilter at depth 0
        c2 = tau(self.centre)
        if np.linalg.norm(c2 - self.centre) > (1.0 + tau.rho) * self.radius:
            return True
        depth = 1
        while depth <= self.max_depth and self.ifs.n_maps**depth <= self.max_cloud:
            cover = self.rho_max**depth * self.radius
            threshold = (1.0 + tau.rho) * cover
            moved = tau(self._cloud(depth))
            dmin = np.min(self._tree(depth).query(moved, k=1)[0])
            if dmin > threshold:
                return True
            # touching pairs have dmin of the same order as the covering radii;
            # once dmin is far below threshold no deeper cloud will certify
            if dmin < 0.25 * threshold and depth >= 3:
                return False
            depth += 1
        return False


# ---------------------------------------------------------------------------
# similarity matching and the proportionality law
# ---------------------------------------------------------------------------

def similarity_check(
    ifs: IFSAttractor,
    m: Index,
    m_p: Index,
    n: Index,
    n_p: Index,
    T: Similarity,
    T_p: Similarity,
    tol: float = MATCH_TOL,
):
    """Ratio varrho if an ambient similarity carries (n, n') onto (m, m').

    The substitution x = s_m(T(s_n^-1(x~))), y = s_m'(T'(s_n'^-1(y~))) rescales
    all mutual distances by a single factor exactly when the two composed maps
    coincide; then varrho = rho_m / rho_n.  Returns None when they differ.
    """
    chi = ifs.map_for(m).compose(T).compose(ifs.map_for(n).inverse())
    psi = ifs.map_for(m_p).compose(T_p).compose(ifs.map_for(n_p).inverse())
    if chi.agrees_with(psi, tol):
        return chi.rho
    return None


def proportional_value(
    ifs: IFSAttractor,
    known_value: float,
    varrho: float,
    t: float,
    m: Index,
    m_p: Index,
) -> float:
    """Value of the singular integral over (m, m') from a similar known pair."""
    d = ifs.hausdorff_dim
    if t >= d:
        raise ValueError(f"kernel exponent t={t} must be below dimension {d}")
    out = varrho ** (2.0 * d - t) * known_value
    if t == 0.0:
        out += ifs.measure_for(m) * ifs.measure_for(m_p) * math.log(varrho)
    return out


def _theta(ifs: IFSAttractor, t: float) -> float:
    """Coefficient of the additive log term: measure squared at t=0, else 0."""
    return ifs.measure_total**2 if t == 0.0 else 0.0


# ---------------------------------------------------------------------------
# energy integral on a disjoint attractor
# ---------------------------------------------------------------------------

def energy_disjoint(ifs: IFSAttractor, t: float, h_q: float) -> float:
    """Double integral of the model kernel over a disjoint attractor.

    Splitting over level-1 pairs, the diagonal terms are scaled copies of the
    whole integral, so it satisfies a scalar fixed-point identity with the
    off-diagonal (regular) integrals as data.
    """
    d = ifs.hausdorff_dim
    if not 0.0 <= t < d:
        raise ValueError(f"need 0 <= t < d = {d}, got t = {t}")
    if not ifs.is_disjoint:
        raise ValueError("energy_disjoint requires a (hull-)disjoint attractor")
    kernel = lambda r: model_kernel(r, t)
    M = ifs.n_maps
    regular = 0.0
    for i in range(1, M + 1):
        for j in range(1, M + 1):
            if i != j:
                regular += double_regular(ifs, (i,), (j,), h_q, kernel)
    denom = 1.0 - sum(s.rho ** (2.0 * d - t) for s in ifs.maps)
    correction = _theta(ifs, t) * sum(
        s.rho ** (2.0 * d) * math.log(s.rho) for s in ifs.maps
    )
    return (regular + correction) / denom


# ---------------------------------------------------------------------------
# fundamental sets via similarity reduction
# ---------------------------------------------------------------------------

@dataclass
class FundamentalSet:
    """Finite closure of singular pair integrals for one attractor and kernel.

    pairs[0] is always ((), ()), the integral over the whole attractor squared.
    rules maps every singular pair met during reduction (or later resolution)
    to (fundamental id, varrho); values are in the same order as pairs.
    """

    ifs: IFSAttractor
    t: float
    h_q: float
    pairs: list[tuple[Index, Index]]
    values: np.ndarray
    rules: dict[tuple[Index, Index], tuple[int, float]]
    classifier: PairClassifier = field(repr=False, default=None)
    _resolved: dict[tuple[Index, Index], float] = field(default_factory=dict, repr=False)

    @property
    def n_fundamental(self) -> int:
        return len(self.pairs)

    def rule_value(self, pair: tuple[Index, Index]) -> float:
        fid, varrho = self.rules[pair]
        return proportional_value(
            self.ifs, self.values[fid], varrho, self.t, pair[0], pair[1]
        )


def _match_against_fundamentals(
    ifs: IFSAttractor,
    pair: tuple[Index, Index],
    pairs: list[tuple[Index, Index]],
    sym: tuple[Similarity, ...],
):
    """First fundamental similar to `pair`, scanning in discovery order.

    Tries each fundamental both as stored and transposed (the kernel is
    symmetric in its arguments) over all pairs of symmetries.
    """
    a, a_p = pair
    for fid, (n, n_p) in enumerate(pairs):
        variants = [(n, n_p)] if n == n_p else [(n, n_p), (n_p, n)]
        for vn, vn_p in variants:
            for T in sym:
                for T_p in sym:
                    varrho = similarity_check(ifs, a, a_p, vn, vn_p, T, T_p)
                    if varrho is not None:
                        return fid, varrho
    return None


def similarity_reduce(
    ifs: IFSAttractor,
    t: float,
    h_q: float,
    max_depth: int = 8,
    classifier: PairClassifier | None = None,
) -> FundamentalSet:
    """Close the singular pair integrals under subdivision and similarity.

    Breadth-first from the pair (whole, whole): subdividing a pair gives
    M x M child pairs; certified-disjoint children are integrated by the
    tensor barycentre rule, the rest are either matched to an existing
    fundamental pair (contributing a scaled coefficient) or enrolled as new
    fundamentals.  The resulting linear system is solved for the values.
    """
    d = ifs.hausdorff_dim
    if not 0.0 <= t < d:
        raise ValueError(f"need 0 <= t < d = {d}, got t = {t}")
    if classifier is None:
        classifier = PairClassifier(ifs)
    kernel = lambda r: model_kernel(r, t)
    M = ifs.n_maps
    sym = ifs.symmetry_group

    pairs: list[tuple[Index, Index]] = [(ROOT_INDEX, ROOT_INDEX)]
    rules: dict[tuple[Index, Index], tuple[int, float]] = {
        (ROOT_INDEX, ROOT_INDEX): (0, 1.0)
    }
    coeff_entries: list[tuple[int, int, float]] = []
    rhs: list[float] = []
    processed = 0

    while processed < len(pairs):
        fid = processed
        n, n_p = pairs[fid]
        processed += 1
        if len(n) + 1 > max_depth:
            raise NoFiniteClosure(
                f"no closure within depth {max_depth}: still discovering new "
                f"singular pairs at {index_to_str(n)},{index_to_str(n_p)}"
            )
        regular = 0.0
        correction = 0.0
        for i, j in product(range(1, M + 1), repeat=2):
            child = (n + (i,), n_p + (j,))
            if classifier.certified_disjoint(*child):
                regular += double_regular(ifs, child[0], child[1], h_q, kernel)
                continue
            hit = _match_against_fundamentals(ifs, child, pairs, sym)
            if hit is None:
                pairs.append(child)
                hit = (len(pairs) - 1, 1.0)
            cid, varrho = hit
            rules[child] = (cid, varrho)
            coeff_entries.append((fid, cid, varrho ** (2.0 * d - t)))
            if t == 0.0:
                correction += (
                    ifs.measure_for(child[0])
                    * ifs.measure_for(child[1])
                    * math.log(varrho)
                )
        rhs.append(regular + correction)

    n_s = len(pairs)
    system = np.eye(n_s)
    for row, col, c in coeff_entries:
        system[row, col] -= c
    values = np.linalg.solve(system, np.array(rhs))
    residual = np.max(np.abs(system @ values - np.array(rhs)))
    if not np.all(np.isfinite(values)):
        raise NoFiniteClosure("singular system produced non-finite values")
    LOG.debug(
        "similarity_reduce: n_s=%d, t=%g, h_q=%g, residual=%.2e",
        n_s, t, h_q, residual,
    )
    return FundamentalSet(
        ifs=ifs, t=t, h_q=h_q, pairs=pairs, values=values, rules=rules,
        classifier=classifier,
    )


def resolve_singular_integral(
    fs: FundamentalSet, m: Index, m_p: Index, max_extra_depth: int = 12
) -> float:
    """Model-kernel double integral over an arbitrary pair of pieces.

    Certified-disjoint pairs fall back to the regular tensor rule; touching
    pairs are matched against the fundamental set, subdividing further when no
    direct match exists.  Values are cached and symmetric in the pair.
    """
    key = (m, m_p) if (m, m_p) <= (m_p, m) else (m_p, m)
    cached = fs._resolved.get(key)
    if cached is not None:
        return cached
    value = _resolve_rec(fs, key[0], key[1], 0, max_extra_depth)
    fs._resolved[key] = value
    return value


def _resolve_rec(
    fs: FundamentalSet, m: Index, m_p: Index, depth: int, max_extra_depth: int
) -> float:
    ifs = fs.ifs
    rule = fs.rules.get((m, m_p)) or fs.rules.get((m_p, m))
    if rule is not None:
        fid, varrho = rule
        return proportional_value(ifs, fs.values[fid], varrho, fs.t, m, m_p)
    if fs.classifier.certified_disjoint(m, m_p):
        return double_regular(
            ifs, m, m_p, fs.h_q, lambda r: model_kernel(r, fs.t)
        )
    hit = _match_against_fundamentals(ifs, (m, m_p), fs.pairs, ifs.symmetry_group)
    if hit is not None:
        fid, varrho = hit
        fs.rules[(m, m_p)] = hit
        return proportional_value(ifs, fs.values[fid], varrho, fs.t, m, m_p)
    if depth >= max_extra_depth:
        raise NoFiniteClosure(
            f"pair {index_to_str(m)},{index_to_str(m_p)} not reducible to the "
            f"fundamental set within {max_extra_depth} extra subdivisions"
        )
    # unequal depths (one piece nested in or beside a coarser one): refine the
    # coarser side alone so the recursion reaches comparable scales
    total = 0.0
    if len(m) > len(m_p):
        for j in range(1, ifs.n_maps + 1):
            total += _resolve_rec(fs, m, m_p + (j,), depth + 1, max_extra_depth)
        return total
    if len(m_p) > len(m):
        for i in range(1, ifs.n_maps + 1):
            total += _resolve_rec(fs, m + (i,), m_p, depth + 1, max_extra_depth)
        return total
    for i, j in product(range(1, ifs.n_maps + 1), repeat=2):
        total += _resolve_rec(
            fs, m + (i,), m_p + (j,), depth + 1, max_extra_depth
        )
    return total


# ---------------------------------------------------------------------------
# hand-assembled closed forms for the quartic curve (independent route)
# ---------------------------------------------------------------------------

def koch_fundamental(t: float, h_q: float) -> FundamentalSet:
    """Fundamental integrals of the quartic curve by explicit closed forms.

    Level-1 pieces 1..4 run left to right; pieces (1,2), (2,3), (3,4) touch at
    single points and all other level-1 pairs are separated.  Exploiting the
    point-contact structure one level deeper gives three scalar identities:

        sigma2 I_12 = R_12 - theta log(3)/256
        sigma2 I_23 = R_23 - theta log(3)/256
        sigma1 I    = R    + 4 I_12 + 2 I_23 - theta log(3)/4

    with sigma1 = 1 - 3^t/4, sigma2 = 1 - 3^t/16, theta the t=0 indicator (for
    unit total measure), and R-terms the sums of regular tensor integrals.
    """
    from .ifs import koch_curve

    ifs = koch_curve()
    d = ifs.hausdorff_dim
    if not 0.0 <= t < d:
        raise ValueError(f"need 0 <= t < d = {d}, got t = {t}")
    kernel = lambda r: model_kernel(r, t)
    theta = 1.0 if t == 0.0 else 0.0
    log3 = math.log(3.0)

    def reg(pairs):
        return sum(double_regular(ifs, a, b, h_q, kernel) for a, b in pairs)

    # All level-2 pairs inside (1, 2) except the touching corner (14, 21),
    # and inside (2, 3) except (24, 31).
    pairs_12 = [
        ((1, a), (2, b))
        for a, b in product(range(1, 5), repeat=2)
        if (a, b) != (4, 1)
    ]
    pairs_23 = [
        ((2, a), (3, b))
        for a, b in product(range(1, 5), repeat=2)
        if (a, b) != (4, 1)
    ]
    # Separated level-1 pairs.
    pairs_far = [
        ((i,), (j,))
        for i, j in product(range(1, 5), repeat=2)
        if abs(i - j) >= 2
    ]

    sigma1 = 1.0 - 3.0**t / 4.0
    sigma2 = 1.0 - 3.0**t / 16.0
    i_12 = (reg(pairs_12) - theta * log3 / 256.0) / sigma2
    i_23 = (reg(pairs_23) - theta * log3 / 256.0) / sigma2
    i_full = (reg(pairs_far) + 4.0 * i_12 + 2.0 * i_23 - theta * log3 / 4.0) / sigma1

    pairs = [(ROOT_INDEX, ROOT_INDEX), ((1,), (2,)), ((2,), (3,))]
    rules = {
        (ROOT_INDEX, ROOT_INDEX): (0, 1.0),
        ((1,), (2,)): (1, 1.0),
        ((2,), (3,)): (2, 1.0),
        ((3,), (4,)): (1, 1.0),
        ((1, 4), (2, 1)): (1, 1.0 / 3.0),
        ((2, 4), (3, 1)): (2, 1.0 / 3.0),
    }
    return FundamentalSet(
        ifs=ifs,
        t=t,
        h_q=h_q,
        pairs=pairs,
        values=np.array([i_full, i_12, i_23]),
        rules=rules,
        classifier=PairClassifier(ifs),
    )


# ---------------------------------------------------------------------------
# full Galerkin entries for singular element pairs
# ---------------------------------------------------------------------------

def galerkin_singular_entry(
    fs: FundamentalSet, k: float, dim: int, m: Index, m_p: Index, h_q: float
) -> complex:
    """Double integral of the wave kernel over a touching pair of pieces.

    Splits the kernel into its smooth remainder (tensor rule, finite at zero
    distance) plus the closed-form singular model part.
    """
    if abs(fs.t - SINGULAR_EXPONENT[dim]) > 1e-14:
        raise ValueError(
            f"fundamental set has exponent {fs.t}, dimension {dim} needs "
            f"{SINGULAR_EXPONENT[dim]}"
        )
    smooth = double_regular(
        fs.ifs, m, m_p, h_q, lambda r: smooth_part(r, k, dim)
    )
    singular = SINGULAR_COEFF[dim] * resolve_singular_integral(fs, m, m_p)
    return smooth + singular


# ---------------------------------------------------------------------------
# caching fundamental sets as JSON
# ---------------------------------------------------------------------------

def fundamental_cache_key(ifs: IFSAttractor, t: float, h_q: float) -> str:
    return f"{attractor_hash(ifs)}_t{t:.12g}_hq{h_q:.12g}"


def fundamental_set_to_dict(fs: FundamentalSet) -> dict:
    pair_str = lambda p: [index_to_str(p[0]), index_to_str(p[1])]
    return {
        "attractor_hash": attractor_hash(fs.ifs),
        "t": fs.t,
        "h_q": fs.h_q,
        "pairs": [pair_str(p) for p in fs.pairs],
        "values": [float(v) for v in fs.values],
        "rules": [
            {"pair": pair_str(p), "fundamental": fid, "varrho": varrho}
            for p, (fid, varrho) in sorted(fs.rules.items())
        ],
    }


def fundamental_set_from_dict(doc: dict, ifs: IFSAttractor) -> FundamentalSet:
    if doc.get("attractor_hash") != attractor_hash(ifs):
        raise ValueError("cached fundamental set belongs to a different attractor")
    to_pair = lambda p: (parse_index(p[0]), parse_index(p[1]))
    return FundamentalSet(
        ifs=ifs,
        t=float(doc["t"]),
        h_q=float(doc["h_q"]),
        pairs=[to_pair(p) for p in doc["pairs"]],
        values=np.array(doc["values"], dtype=float),
        rules={
            to_pair(r["pair"]): (int(r["fundamental"]), float(r["varrho"]))
            for r in doc["rules"]
        },
        classifier=PairClassifier(ifs),
    )

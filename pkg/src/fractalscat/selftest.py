"""Slow reference computations that double-check the singular integrals.

The brute-force oracle never uses the scaling identities the fast engine is
built on: it sums plain one-point tensor products over all certified
non-touching pairs of depth-L pieces and extrapolates the geometric tail in L
by iterated Aitken acceleration.  Touching pairs are enumerated by recursive
descent (children of touching parents only), with the geometric classifier as
the only shared component.  The test suite and the CLI's quad-selftest both
drive their verdicts from this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .ifs import IFSAttractor, Index, attractor_barycentre, cantor_dust, cantor_set, koch_curve
from .kernels import model_kernel
from .singquad import (
    PairClassifier,
    energy_disjoint,
    koch_fundamental,
    resolve_singular_integral,
    tensor_rule_sum,
)


def masked_model_kernel(t: float):
    """Model kernel with zero at exactly coincident points (diagonal masking)."""

    def kern(r):
        safe = np.where(r > 0.0, r, 1.0)
        return np.where(r > 0.0, model_kernel(safe, t), 0.0)

    return kern


def cloud_with_weights(ifs: IFSAttractor, base: Index, depth: int):
    """Barycentres and measures of all depth-`depth` descendants of `base`.

    The relative cloud is built under the whole attractor first and then
    pushed through the base map, since descendants of `base` compose the base
    map on the left.
    """
    pts = attractor_barycentre(ifs)[None, :]
    wts = np.array([1.0])
    d = ifs.hausdorff_dim
    for _ in range(depth):
        pts = np.concatenate([s(pts) for s in ifs.maps], axis=0)
        wts = np.concatenate([s.rho**d * wts for s in ifs.maps])
    return ifs.map_for(base)(pts), ifs.measure_for(base) * wts


class _TouchLedger:
    """Per-level lists of touching pairs, built by one incremental descent.

    Each entry carries the composed maps, barycentres and measures so deeper
    levels extend cheaply from their parents.
    """

    def __init__(self, ifs: IFSAttractor, classifier: PairClassifier,
                 base: tuple[Index, Index]):
        self.ifs = ifs
        self.classifier = classifier
        self.x0 = attractor_barycentre(ifs)
        sa = ifs.map_for(base[0])
        sb = ifs.map_for(base[1])
        self.levels = [
            [(sa, sb, ifs.measure_for(base[0]), ifs.measure_for(base[1]))]
        ]

    def level(self, depth: int):
        ifs = self.ifs
        d = ifs.hausdorff_dim
        while len(self.levels) <= depth:
            nxt = []
            for sa, sb, mua, mub in self.levels[-1]:
                kids_a = [(sa.compose(s), mua * s.rho**d) for s in ifs.maps]
                kids_b = [(sb.compose(s), mub * s.rho**d) for s in ifs.maps]
                for ka, wa in kids_a:
                    for kb, wb in kids_b:
                        if not self.classifier.certified_disjoint_maps(ka, kb):
                            nxt.append((ka, kb, wa, wb))
            self.levels.append(nxt)
        return self.levels[depth]

    def excluded_contribution(self, depth: int, t: float) -> float:
        """One-point contribution of off-diagonal touching pairs at this depth."""
        total = 0.0
        for sa, sb, mua, mub in self.level(depth):
            r = float(np.linalg.norm(sa(self.x0) - sb(self.x0)))
            if r > 0.0:
                total += mua * mub * model_kernel(r, t)
        return total


def partial_sum(
    ifs: IFSAttractor,
    t: float,
    depth: int,
    ledger: _TouchLedger,
    base: tuple[Index, Index] = ((), ()),
) -> float:
    """One-point tensor sum over non-touching depth-`depth` pairs under base."""
    pa, wa = cloud_with_weights(ifs, base[0], depth)
    if base[0] == base[1]:
        pb, wb = pa, wa
    else:
        pb, wb = cloud_with_weights(ifs, base[1], depth)
    kern = masked_model_kernel(t)
    total = tensor_rule_sum(pa, wa, pb, wb, kern)
    return float(total - ledger.excluded_contribution(depth, t))


def aitken_extrapolate(seq) -> float:
    """Iterated Aitken delta-squared; returns the deepest accelerated value."""
    s = np.array(seq, dtype=float)
    while len(s) >= 3:
        nxt = []
        for i in range(len(s) - 2):
            d1 = s[i + 1] - s[i]
            d2 = s[i + 2] - s[i + 1]
            denom = d2 - d1
            if abs(denom) < 1e-15 * max(1.0, abs(s[i + 2])):
                nxt.append(s[i + 2])
            else:
                nxt.append(s[i + 2] - d2 * d2 / denom)
        s = np.array(nxt)
    return float(s[-1])


def brute_force_energy(
    ifs: IFSAttractor,
    t: float,
    depths,
    base: tuple[Index, Index] = ((), ()),
    classifier: PairClassifier | None = None,
) -> tuple[float, list[float]]:
    """Reference singular integral over `base` by depth sweep + extrapolation."""
    if classifier is None:
        classifier = PairClassifier(ifs)
    ledger = _TouchLedger(ifs, classifier, base)
    seq = [partial_sum(ifs, t, L, ledger, base) for L in depths]
    return aitken_extrapolate(seq), seq


# ---------------------------------------------------------------------------
# pass/fail self-test harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    engine: float
    reference: float
    rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.rel_err <= self.tol


def _check(name, engine, reference, tol) -> CheckResult:
    rel = abs(engine - reference) / abs(reference)
    return CheckResult(name, float(engine), float(reference), float(rel), tol)


def run_quad_selftest(deep: bool = False) -> list[CheckResult]:
    """Verify the singular-integral machinery against independent routes.

    Covers the closed-form decomposition identity of the quartic curve, its
    brute-force values for both kernel exponents, and the never-touching
    closed forms for the middle-third set and planar dust.  `deep` extends the
    brute-force depth sweep by one level (slower, tighter reference).
    """
    out: list[CheckResult] = []
    h_q = 3.0**-6

    koch = koch_curve()
    kd = 2.0 * koch.hausdorff_dim
    for t in (0.0, 1.0):
        fs = koch_fundamental(t, h_q)
        whole = fs.values[0]
        recomposed = sum(
            resolve_singular_integral(fs, (i,), (j,))
            for i, j in product(range(1, 5), repeat=2)
        )
        out.append(
            _check(f"koch decomposition identity t={t:g}", recomposed, whole, 1e-8)
        )
        # the algebraic kernel needs one extra level for a sub-tolerance tail
        last = (8 if t > 0 else 7) + (1 if deep else 0)
        oracle, _ = brute_force_energy(koch, t, range(3, last))
        out.append(_check(f"koch vs brute force t={t:g}", whole, oracle, 1e-3))

    cantor = cantor_set(1.0 / 3.0)
    engine = energy_disjoint(cantor, 0.0, h_q)
    oracle, _ = brute_force_energy(cantor, 0.0, range(6, 15 if deep else 13))
    out.append(_check("cantor_set closed form t=0", engine, oracle, 1e-3))

    dust = cantor_dust(1.0 / 3.0, 2)
    engine = energy_disjoint(dust, 0.0, h_q)
    oracle, _ = brute_force_energy(dust, 0.0, range(3, 8 if deep else 7))
    out.append(_check("cantor_dust closed form t=0", engine, oracle, 1e-3))
    return out


def format_selftest(results: list[CheckResult]) -> str:
    lines = [
        f"{'check':<38} {'engine':>15} {'reference':>15} {'rel err':>10}  verdict"
    ]
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{r.name:<38} {r.engine:>15.9g} {r.reference:>15.9g} "
            f"{r.rel_err:>10.2e}  {verdict}"
        )
    n_bad = sum(not r.passed for r in results)
    lines.append(
        f"{len(results) - n_bad}/{len(results)} checks passed"
        + ("" if n_bad == 0 else f" ({n_bad} FAILED)")
    )
    return "\n".join(lines)

"""Helmholtz kernels and the Bessel/Hankel functions they are built on.

Everything is expressed through the distance r = |x - y|, so kernels are
functions of r (plus wavenumber and ambient dimension).  The fundamental
solution is split as

    full = singular part + smooth part,

where the singular part is the distance power (3-d case) or logarithm (2-d
case) that the singular quadrature integrates in closed form, and the smooth
remainder is evaluated without cancellation down to r = 0.

Bessel functions are computed in-repo: ascending series up to the seam
argument, Hankel-type asymptotic expansion with optimal truncation beyond it.
Both orders 0 and 1 are provided so the cross-product identity
J1*Y0 - J0*Y1 = 2/(pi z) can serve as an internal consistency check.
"""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.5772156649015329

# Seam between the ascending series and the large-argument expansion.  At this
# argument the series loses ~3 digits to cancellation and the asymptotic
# expansion bottoms out below 1e-11, so both sides stay inside the accuracy
# budget of the kernel contract.
SERIES_ASYMPTOTIC_SEAM = 12.0

_N_SERIES_TERMS = 36


def _harmonic_numbers(n: int) -> list[float]:
    h = [0.0]
    for m in range(1, n + 1):
        h.append(h[-1] + 1.0 / m)
    return h


def _build_series_coefficients():
    """Taylor coefficients in u = (z/2)^2 for the four ascending series."""
    nm = _N_SERIES_TERMS
    harm = _harmonic_numbers(nm + 2)
    fact = [math.factorial(m) for m in range(nm + 2)]
    j0 = [(-1.0) ** m / (fact[m] ** 2) for m in range(nm + 1)]
    # Y0 = (2/pi)[(log(z/2)+gamma) J0 + sum_{m>=1} (-1)^{m+1} H_m u^m / (m!)^2]
    y0_aux = [0.0] + [
        (-1.0) ** (m + 1) * harm[m] / (fact[m] ** 2) for m in range(1, nm + 1)
    ]
    # J1 = (z/2) sum (-1)^m u^m / (m! (m+1)!)
    j1 = [(-1.0) ** m / (fact[m] * fact[m + 1]) for m in range(nm + 1)]
    # Y1 = (2/pi)(log(z/2)+gamma) J1 - 2/(pi z)
    #      - (z/(2 pi)) sum (-1)^m (H_m + H_{m+1}) u^m / (m! (m+1)!)
    y1_aux = [
        (-1.0) ** m * (harm[m] + harm[m + 1]) / (fact[m] * fact[m + 1])
        for m in range(nm + 1)
    ]
    as_arr = lambda c: np.array(c[::-1])  # reversed for Horner evaluation
    return as_arr(j0), as_arr(y0_aux), as_arr(j1), as_arr(y1_aux)


_J0_COEF, _Y0_AUX_COEF, _J1_COEF, _Y1_AUX_COEF = _build_series_coefficients()


def _horner(coef: np.ndarray, u: np.ndarray) -> np.ndarray:
    acc = np.full_like(u, coef[0])
    for c in coef[1:]:
        acc = acc * u + c
    return acc


def _j0_series(z):
    return _horner(_J0_COEF, 0.25 * z * z)


def _j0_minus_one_series(z):
    """J0(z) - 1 without cancellation at small z."""
    u = 0.25 * z * z
    return u * _horner(_J0_COEF[:-1], u)


def _y0_series(z):
    u = 0.25 * z * z
    with np.errstate(divide="ignore"):
        lg = np.log(0.5 * z) + EULER_GAMMA
    return (2.0 / math.pi) * (lg * _horner(_J0_COEF, u) + _horner(_Y0_AUX_COEF, u))


def _j1_series(z):
    return 0.5 * z * _horner(_J1_COEF, 0.25 * z * z)


def _y1_series(z):
    u = 0.25 * z * z
    with np.errstate(divide="ignore"):
        lg = np.log(0.5 * z) + EULER_GAMMA
    j1 = 0.5 * z * _horner(_J1_COEF, u)
    return (
        (2.0 / math.pi) * lg * j1
        - 2.0 / (math.pi * z)
        - (z / (2.0 * math.pi)) * _horner(_Y1_AUX_COEF, u)
    )


def _hankel_asymptotic(z: np.ndarray, order: int) -> np.ndarray:
    """H_order^(1)(z) for z past the seam, by optimally truncated expansion.

    H ~ sqrt(2/(pi z)) e^{i(z - order pi/2 - pi/4)} sum_k i^k a_k / z^k with
    a_k = a_{k-1} (4 order^2 - (2k-1)^2) / (8k).  Terms are accumulated per
    element while their magnitude still decreases; the first omitted term
    bounds the truncation error.
    """
    omega = z - order * math.pi / 2.0 - math.pi / 4.0
    prefac = np.sqrt(2.0 / (math.pi * z)) * np.exp(1j * omega)
    total = np.ones(z.shape, dtype=complex)
    inv_z = 1.0 / z
    term = np.ones(z.shape, dtype=complex)
    prev_mag = np.ones(z.shape)
    active = np.ones(z.shape, dtype=bool)
    a_k = 1.0
    for k in range(1, 60):
        a_k *= (4.0 * order * order - (2 * k - 1) ** 2) / (8.0 * k)
        term = term * (1j * inv_z)
        mag = abs(a_k) * np.abs(term)
        active &= mag < prev_mag
        if not active.any():
            break
        total = np.where(active, total + a_k * term, total)
        prev_mag = np.where(active, mag, prev_mag)
    return prefac * total


def _dispatch(z, series_fn, order: int, part: str):
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z_arr < 0):
        raise ValueError("argument must be nonnegative")
    out = np.empty(z_arr.shape, dtype=float)
    small = z_arr <= SERIES_ASYMPTOTIC_SEAM
    if small.any():
        out[small] = series_fn(z_arr[small])
    if (~small).any():
        h = _hankel_asymptotic(z_arr[~small], order)
        out[~small] = h.real if part == "re" else h.imag
    if np.asarray(z).ndim == 0:
        return float(out[0])
    return out


def bessel_j0(z):
    return _dispatch(z, _j0_series, 0, "re")


def bessel_y0(z):
    """Y0(z) for z > 0 (negative infinity as z -> 0)."""
    return _dispatch(z, _y0_series, 0, "im")


def bessel_j1(z):
    return _dispatch(z, _j1_series, 1, "re")


def bessel_y1(z):
    return _dispatch(z, _y1_series, 1, "im")


def hankel1_first_kind(z, order: int = 0):
    """H_order^(1)(z) = J + iY for real z > 0, order 0 or 1."""
    if order not in (0, 1):
        raise ValueError("only orders 0 and 1 are implemented")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty(z_arr.shape, dtype=complex)
    small = z_arr <= SERIES_ASYMPTOTIC_SEAM
    if small.any():
        zs = z_arr[small]
        if order == 0:
            out[small] = _j0_series(zs) + 1j * _y0_series(zs)
        else:
            out[small] = _j1_series(zs) + 1j * _y1_series(zs)
    if (~small).any():
        out[~small] = _hankel_asymptotic(z_arr[~small], order)
    if np.asarray(z).ndim == 0:
        return complex(out[0])
    return out


def hankel0(z):
    return hankel1_first_kind(z, order=0)


# ---------------------------------------------------------------------------
# Helmholtz kernels as functions of distance
# ---------------------------------------------------------------------------

SINGULAR_COEFF = {2: -1.0 / (2.0 * math.pi), 3: 1.0 / (4.0 * math.pi)}
SINGULAR_EXPONENT = {2: 0.0, 3: 1.0}


def model_kernel(r, t: float):
    """The singular model kernel: r^-t for t > 0, log r for t = 0."""
    r = np.asarray(r, dtype=float)
    if t < 0:
        raise ValueError("exponent must be nonnegative")
    with np.errstate(divide="ignore"):
        if t == 0.0:
            return np.log(r)
        return r ** (-t)


def fundamental_solution(r, k: float, dim: int):
    """Outgoing free-space kernel as a function of distance r > 0."""
    r = np.asarray(r, dtype=float)
    if dim == 2:
        return 0.25j * hankel0(k * r)
    if dim == 3:
        return np.exp(1j * k * r) / (4.0 * math.pi * r)
    raise ValueError("dim must be 2 or 3")


def singular_part(r, dim: int):
    """Static singular piece matching the kernel's r -> 0 blow-up."""
    return SINGULAR_COEFF[dim] * model_kernel(r, SINGULAR_EXPONENT[dim])


def smooth_part(r, k: float, dim: int):
    """fundamental_solution - singular_part, stable down to r = 0.

    The 2-d case groups the kernel's logarithm with the one being subtracted,
    so only the cancellation-free combination (log(z/2)+gamma)(J0(z)-1) and an
    entire series remain.  The 3-d case rewrites cos(kr)-1 as -2 sin^2(kr/2).
    """
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ValueError("distance must be nonnegative")
    k = float(k)
    if dim == 3:
        out = np.empty(r_arr.shape, dtype=complex)
        zero = r_arr == 0.0
        out[zero] = 1j * k / (4.0 * math.pi)
        rp = r_arr[~zero]
        z = k * rp
        out[~zero] = (-2.0 * np.sin(0.5 * z) ** 2 + 1j * np.sin(z)) / (
            4.0 * math.pi * rp
        )
    elif dim == 2:
        out = np.empty(r_arr.shape, dtype=complex)
        z = k * r_arr
        const = 0.25j - (math.log(0.5 * k) + EULER_GAMMA) / (2.0 * math.pi)
        zero = z == 0.0
        out[zero] = const
        small = (~zero) & (z <= SERIES_ASYMPTOTIC_SEAM)
        if small.any():
            zs = z[small]
            u = 0.25 * zs * zs
            j0m1 = _j0_minus_one_series(zs)
            lg = np.log(0.5 * zs) + EULER_GAMMA
            aux = _horner(_Y0_AUX_COEF, u)
            out[small] = (
                0.25j * (1.0 + j0m1)
                - (lg * j0m1 + aux) / (2.0 * math.pi)
                - (math.log(0.5 * k) + EULER_GAMMA) / (2.0 * math.pi)
            )
        big = z > SERIES_ASYMPTOTIC_SEAM
        if big.any():
            rb = r_arr[big]
            out[big] = 0.25j * hankel0(k * rb) + np.log(rb) / (2.0 * math.pi)
    else:
        raise ValueError("dim must be 2 or 3")
    if np.asarray(r).ndim == 0:
        return complex(out[0])
    return out


def smooth_part_at_zero(k: float, dim: int) -> complex:
    if dim == 3:
        return 1j * k / (4.0 * math.pi)
    if dim == 2:
        return 0.25j - (math.log(0.5 * k) + EULER_GAMMA) / (2.0 * math.pi)
    raise ValueError("dim must be 2 or 3")


def farfield_prefactor(k: float, dim: int) -> complex:
    """Coefficient c with far-field kernel c * exp(-i k xhat . y)."""
    if dim == 3:
        return 1.0 / (4.0 * math.pi) + 0.0j
    if dim == 2:
        return np.exp(0.25j * math.pi) / (2.0 * math.sqrt(2.0 * math.pi * k))
    raise ValueError("dim must be 2 or 3")


def farfield_kernel(xhat: np.ndarray, y: np.ndarray, k: float, dim: int) -> np.ndarray:
    """Matrix of far-field kernel values, directions along rows, points along columns."""
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    phase = np.exp(-1j * k * (xhat @ y.T))
    return farfield_prefactor(k, dim) * phase


def plane_wave(points: np.ndarray, k: float, direction: np.ndarray) -> np.ndarray:
    """Incident field exp(i k direction . x) at unit-vector direction."""
    direction = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(direction)
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    points = np.asarray(points, dtype=float)
    return np.exp(1j * k * (points @ direction))

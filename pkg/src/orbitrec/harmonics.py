"""Special functions for harmonic analysis on the sphere and the rotation group.

Associated Legendre polynomials, complex and real spherical harmonics,
Wigner d/D-matrices, the complex-to-real change of basis, and
Clebsch-Gordan coupling coefficients.

Conventions used throughout: z-y-z Euler angles in a right-handed frame,
Legendre polynomials without the Condon-Shortley phase, a (-1)^m prefactor
on the complex spherical harmonics, and D-matrix entries
``exp(-i*m*alpha) * d_mn(beta) * exp(-i*n*gamma)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Frequencies above this overflow the cached double-precision factorials in
# the d-matrix sum before the square root tames them.
L_MAX = 16

_FACT = [float(math.factorial(k)) for k in range(4 * L_MAX + 2)]

# Test hook: when set to (l, i, j), q_matrix(l) flips the sign of entry
# (i, j).  Used by the self-test suite to prove mutation sensitivity.
_q_test_corruption = None


@dataclass(frozen=True)
class Euler:
    """z-y-z Euler angles: alpha, gamma in [0, 2*pi), beta in [0, pi]."""

    alpha: float
    beta: float
    gamma: float


def _check_lm(l, m):
    if l < 0 or l > L_MAX:
        raise ValueError(f"frequency l={l} outside [0, {L_MAX}]")
    if abs(m) > l:
        raise ValueError(f"order m={m} outside [-{l}, {l}]")


def assoc_legendre(l: int, m: int, x: float) -> float:
    """Associated Legendre polynomial P_lm(x) without Condon-Shortley phase.

    Upward recurrence in l starting from the closed-form diagonal
    P_mm(x) = (2m-1)!! (1-x^2)^(m/2).  Negative orders use
    P_{l,-m} = (-1)^m (l-m)!/(l+m)! P_lm.
    """
    _check_lm(l, m)
    if abs(x) > 1.0 + 1e-12:
        raise ValueError(f"argument x={x} outside [-1, 1]")
    x = min(1.0, max(-1.0, x))
    if m < 0:
        m = -m
        scale = (-1.0) ** m * _FACT[l - m] / _FACT[l + m]
    else:
        scale = 1.0
    # P_mm, then climb l -> l+1 at fixed m.
    s = math.sqrt(max(0.0, 1.0 - x * x))
    pmm = 1.0
    for k in range(1, m + 1):
        pmm *= (2 * k - 1) * s
    if l == m:
        return scale * pmm
    pm1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return scale * pm1
    for ll in range(m + 2, l + 1):
        pmm, pm1 = pm1, (x * (2 * ll - 1) * pm1 - (ll + m - 1) * pmm) / (ll - m)
    return scale * pm1


def sph_harm_complex(l: int, m: int, phi1: float, phi2: float) -> complex:
    """Complex spherical harmonic y_lm at latitude phi1, longitude phi2."""
    _check_lm(l, m)
    norm = (-1.0) ** m * math.sqrt(
        (2 * l + 1) / (4.0 * math.pi) * _FACT[l - m] / _FACT[l + m]
    )
    return norm * assoc_legendre(l, m, math.cos(phi1)) * np.exp(1j * m * phi2)


def sph_harm_real(l: int, m: int, phi1: float, phi2: float) -> float:
    """Real spherical harmonic: the q_matrix combination of y_{l,+-m}."""
    _check_lm(l, m)
    if m == 0:
        val = sph_harm_complex(l, 0, phi1, phi2)
    elif m < 0:
        yp = sph_harm_complex(l, m, phi1, phi2)
        ym = sph_harm_complex(l, -m, phi1, phi2)
        val = 1j / math.sqrt(2.0) * (yp - (-1.0) ** m * ym)
    else:
        yp = sph_harm_complex(l, m, phi1, phi2)
        ym = sph_harm_complex(l, -m, phi1, phi2)
        val = 1.0 / math.sqrt(2.0) * (ym + (-1.0) ** m * yp)
    if abs(val.imag) > 1e-12:
        raise AssertionError(
            f"real harmonic ({l},{m}) has imaginary residue {val.imag:.3e}"
        )
    return float(val.real)


def wigner_small_d(l: int, m: int, n: int, beta: float) -> float:
    """Wigner small d-matrix entry d^l_mn(beta) by the factorial sum."""
    _check_lm(l, m)
    _check_lm(l, n)
    c = math.cos(beta / 2.0)
    s = math.sin(beta / 2.0)
    pref = math.sqrt(_FACT[l + m] * _FACT[l - m] * _FACT[l + n] * _FACT[l - n])
    total = 0.0
    for k in range(max(0, n - m), min(l - m, l + n) + 1):
        total += (
            (-1.0) ** k
            * c ** (2 * l - 2 * k - m + n)
            * s ** (2 * k + m - n)
            / (_FACT[k] * _FACT[l - m - k] * _FACT[l + n - k] * _FACT[m - n + k])
        )
    return pref * total


def wigner_D_complex(l: int, g: Euler) -> np.ndarray:
    """Complex Wigner D-matrix at frequency l; rows/cols ordered m = -l..l."""
    _check_lm(l, 0)
    ms = np.arange(-l, l + 1)
    d = np.array(
        [[wigner_small_d(l, m, n, g.beta) for n in ms] for m in ms]
    )
    return np.exp(-1j * ms[:, None] * g.alpha) * d * np.exp(-1j * ms[None, :] * g.gamma)


def wigner_small_d_stack(l: int, betas: np.ndarray) -> np.ndarray:
    """Small d-matrices for an array of beta angles, shape (len(betas), 2l+1, 2l+1)."""
    _check_lm(l, 0)
    betas = np.asarray(betas, dtype=float)
    c = np.cos(betas / 2.0)
    s = np.sin(betas / 2.0)
    out = np.empty((betas.size, 2 * l + 1, 2 * l + 1))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            pref = math.sqrt(
                _FACT[l + m] * _FACT[l - m] * _FACT[l + n] * _FACT[l - n]
            )
            acc = np.zeros_like(c)
            for k in range(max(0, n - m), min(l - m, l + n) + 1):
                coef = (-1.0) ** k / (
                    _FACT[k]
                    * _FACT[l - m - k]
                    * _FACT[l + n - k]
                    * _FACT[m - n + k]
                )
                acc += coef * c ** (2 * l - 2 * k - m + n) * s ** (2 * k + m - n)
            out[:, m + l, n + l] = pref * acc
    return out


def wigner_D_complex_stack(
    l: int, alphas: np.ndarray, betas: np.ndarray, gammas: np.ndarray
) -> np.ndarray:
    """Complex D-matrices for arrays of Euler angles, shape (N, 2l+1, 2l+1)."""
    alphas = np.asarray(alphas, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    d = wigner_small_d_stack(l, betas)
    ms = np.arange(-l, l + 1)
    return (
        np.exp(-1j * alphas[:, None, None] * ms[None, :, None])
        * d
        * np.exp(-1j * gammas[:, None, None] * ms[None, None, :])
    )


def wigner_D_real_stack(
    l: int, alphas: np.ndarray, betas: np.ndarray, gammas: np.ndarray
) -> np.ndarray:
    """Real D-matrices for arrays of Euler angles, shape (N, 2l+1, 2l+1)."""
    q = q_matrix(l)
    dc = wigner_D_complex_stack(l, alphas, betas, gammas)
    return _realify(
        np.einsum("ab,nbc,dc->nad", q.conj(), dc, q), f"real D^({l}) stack"
    )


def q_matrix(l: int) -> np.ndarray:
    """Unitary change of basis from complex to real harmonics at frequency l.

    Nonzero entries sit on the diagonal and anti-diagonal only; row index is
    the real order, column index the complex order, both offset by l.
    """
    _check_lm(l, 0)
    n = 2 * l + 1
    q = np.zeros((n, n), dtype=complex)
    rt = 1.0 / math.sqrt(2.0)
    for m in range(-l, l + 1):
        if m < 0:
            q[m + l, m + l] = 1j * rt
            q[-m + l, m + l] = rt
        elif m == 0:
            q[l, l] = 1.0
        else:
            q[m + l, m + l] = (-1.0) ** m * rt
            q[-m + l, m + l] = -((-1.0) ** m) * 1j * rt
    if _q_test_corruption is not None and _q_test_corruption[0] == l:
        _, i, j = _q_test_corruption
        q[i, j] = -q[i, j]
    return q


def _realify(mat: np.ndarray, what: str) -> np.ndarray:
    resid = np.abs(mat.imag).max()
    if resid > 1e-10:
        raise AssertionError(f"{what} has imaginary residue {resid:.3e}")
    return np.ascontiguousarray(mat.real)


def wigner_D_real(l: int, g: Euler) -> np.ndarray:
    """Real Wigner D-matrix: conj(Q) D Q^T, orthogonal with real entries."""
    q = q_matrix(l)
    return _realify(q.conj() @ wigner_D_complex(l, g) @ q.T, f"real D^({l})")


def clebsch_gordan(l1: int, l2: int, l3: int, m1: int, m2: int, m3: int) -> float:
    """Clebsch-Gordan coefficient <l1 m1 l2 m2 | l3 m3> by the Racah sum.

    Returns 0 outside the selection rules m3 = m1 + m2, |m3| <= l3, and
    |l1 - l2| <= l3 <= l1 + l2.
    """
    _check_lm(l1, m1)
    _check_lm(l2, m2)
    _check_lm(l3, 0)
    if abs(m3) > l3 or m3 != m1 + m2 or l3 < abs(l1 - l2) or l3 > l1 + l2:
        return 0.0
    pref = math.sqrt(
        (2 * l3 + 1)
        * _FACT[l1 + l2 - l3]
        * _FACT[l1 - l2 + l3]
        * _FACT[-l1 + l2 + l3]
        / _FACT[l1 + l2 + l3 + 1]
    ) * math.sqrt(
        _FACT[l1 + m1]
        * _FACT[l1 - m1]
        * _FACT[l2 + m2]
        * _FACT[l2 - m2]
        * _FACT[l3 + m3]
        * _FACT[l3 - m3]
    )
    kmin = max(0, l2 - l3 - m1, l1 - l3 + m2)
    kmax = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    total = 0.0
    for k in range(kmin, kmax + 1):
        total += (-1.0) ** k / (
            _FACT[k]
            * _FACT[l1 + l2 - l3 - k]
            * _FACT[l1 - m1 - k]
            * _FACT[l2 + m2 - k]
            * _FACT[l3 - l2 + m1 + k]
            * _FACT[l3 - l1 - m2 + k]
        )
    return pref * total


def real_coupled_orders(q: int, qp: int) -> list[int]:
    """Real orders that a product of real orders q, q' can couple into."""
    return sorted({q + qp, q - qp, qp - q, -q - qp})


def real_clebsch_gordan(
    l1: int, l2: int, l3: int, q1: int, q2: int, q3: int
) -> complex:
    """Coupling coefficient for products of real Wigner D-matrix entries.

    Contraction of the complex coefficient with q_matrix rows; the result is
    always purely real or purely imaginary.
    """
    for l, q in ((l1, q1), (l2, q2), (l3, q3)):
        _check_lm(l, q)
    qa, qb, qc = q_matrix(l1), q_matrix(l2), q_matrix(l3)
    total = 0.0 + 0.0j
    for p1 in {q1, -q1}:
        for p2 in {q2, -q2}:
            p3 = p1 + p2
            if abs(p3) > l3:
                continue
            total += (
                qa[q1 + l1, p1 + l1].conjugate()
                * qb[q2 + l2, p2 + l2].conjugate()
                * qc[q3 + l3, p3 + l3]
                * clebsch_gordan(l1, l2, l3, p1, p2, p3)
            )
    if abs(total.real) > 1e-10 and abs(total.imag) > 1e-10:
        raise AssertionError(
            f"real coupling ({l1},{l2},{l3},{q1},{q2},{q3}) is neither real "
            f"nor imaginary: {total}"
        )
    return total


class CGTable:
    """Cache of Clebsch-Gordan coefficients up to a frequency cap.

    Built once, then read-only; lookups outside the selection rules return 0.
    """

    def __init__(self, l_max: int):
        if l_max > L_MAX // 2:
            raise ValueError(f"l_max={l_max} too large for cached factorials")
        self.l_max = l_max
        self._table = {}
        for l1 in range(l_max + 1):
            for l2 in range(l_max + 1):
                for l3 in range(abs(l1 - l2), min(l1 + l2, 2 * l_max) + 1):
                    for m1 in range(-l1, l1 + 1):
                        for m2 in range(-l2, l2 + 1):
                            m3 = m1 + m2
                            if abs(m3) > l3:
                                continue
                            val = clebsch_gordan(l1, l2, l3, m1, m2, m3)
                            if val != 0.0:
                                self._table[(l1, l2, l3, m1, m2, m3)] = val

    def __call__(self, l1, l2, l3, m1, m2, m3):
        return self._table.get((l1, l2, l3, m1, m2, m3), 0.0)


# -- 3x3 rotation matrices and Euler extraction ------------------------------


def rot3_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot3_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot3_from_euler(g: Euler) -> np.ndarray:
    """3x3 rotation matrix of the z-y-z Euler triple.

    The chain is Rz(alpha) Ry(-beta) Rz(gamma); the sign of the middle
    factor is chosen so that the Wigner D-matrices are exactly the induced
    action of this matrix on spherical-harmonic coefficients:
    f(r^{-1} x) expands with coefficients D(g) u when f expands with u.
    """
    return rot3_z(g.alpha) @ rot3_y(-g.beta) @ rot3_z(g.gamma)


def euler_from_rot3(r: np.ndarray) -> Euler:
    """Extract z-y-z Euler angles from a 3x3 rotation matrix."""
    beta = math.acos(min(1.0, max(-1.0, r[2, 2])))
    if math.sin(beta) > 1e-9:
        alpha = math.atan2(-r[1, 2], -r[0, 2])
        gamma = math.atan2(-r[2, 1], r[2, 0])
    elif r[2, 2] > 0.0:
        # beta ~ 0: only alpha + gamma matters
        alpha = math.atan2(r[1, 0], r[0, 0])
        gamma = 0.0
    else:
        # beta ~ pi: only alpha - gamma matters
        alpha = math.atan2(-r[1, 0], -r[0, 0])
        gamma = 0.0
    return Euler(alpha % (2 * math.pi), beta, gamma % (2 * math.pi))


def compose_euler(g1: Euler, g2: Euler) -> Euler:
    """Euler angles of the composition g1 * g2 (via 3x3 matrices)."""
    return euler_from_rot3(rot3_from_euler(g1) @ rot3_from_euler(g2))

"""Group parameterizations, representations, measures, and quadrature.

The acting groups are the sign group {+1, -1}, the circle SO(2), and the
rotation group SO(3).  Group elements are carried around as lightweight
parameters (int sign, float angle, Euler triple, or axis-angle triple);
representations turn them into orthogonal matrices acting on coefficient
vectors.  Probability measures on a group are either Haar, a named family
(Bernoulli, wrapped normal), a discrete atom list, or a density expanded
in real Wigner D-matrix entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import harmonics as hm
from .harmonics import Euler

TWO_PI = 2.0 * math.pi

DEFAULT_RESOLUTION = {"z2": 1, "so2": 256, "so3": 8}


class CertificateError(RuntimeError):
    """A quadrature rule failed its exactness certificate."""


@dataclass(frozen=True)
class AxisAngle:
    """Rotation by `theta` about the unit axis at latitude phi1, longitude phi2."""

    theta: float
    phi1: float
    phi2: float


# A group parameter is an int sign (z2), a float angle (so2), an Euler or
# AxisAngle (so3), or a (g1, g2) float pair for the two-circle test group.


def rot3_from_axis_angle(p: AxisAngle) -> np.ndarray:
    """3x3 rotation matrix for an axis-angle parameter (Rodrigues form)."""
    v1 = math.sin(p.phi1) * math.cos(p.phi2)
    v2 = math.sin(p.phi1) * math.sin(p.phi2)
    v3 = math.cos(p.phi1)
    c, s = math.cos(p.theta), math.sin(p.theta)
    k = 1.0 - c
    return np.array(
        [
            [v1 * v1 * k + c, v1 * v2 * k - v3 * s, v1 * v3 * k + v2 * s],
            [v1 * v2 * k + v3 * s, v2 * v2 * k + c, v2 * v3 * k - v1 * s],
            [v1 * v3 * k - v2 * s, v2 * v3 * k + v1 * s, v3 * v3 * k + c],
        ]
    )


def euler_from_axis_angle(p: AxisAngle) -> Euler:
    return hm.euler_from_rot3(rot3_from_axis_angle(p))


def as_euler(g) -> Euler:
    if isinstance(g, Euler):
        return g
    if isinstance(g, AxisAngle):
        return euler_from_axis_angle(g)
    raise TypeError(f"not an SO(3) parameter: {g!r}")


def identity_param(group: str):
    if group == "z2":
        return 1
    if group == "so2":
        return 0.0
    if group == "so3":
        return Euler(0.0, 0.0, 0.0)
    if group == "so2xso2":
        return (0.0, 0.0)
    raise ValueError(f"unknown group {group!r}")


def circle_dist(a: float, b: float) -> float:
    d = abs(a - b) % TWO_PI
    return min(d, TWO_PI - d)


def param_distance(group: str, a, b) -> float:
    """Distance between two group parameters, used for separation filters."""
    if group == "z2":
        return 0.0 if a == b else 2.0
    if group == "so2":
        return circle_dist(a, b)
    if group == "so3":
        ra = hm.rot3_from_euler(as_euler(a))
        rb = hm.rot3_from_euler(as_euler(b))
        return float(np.linalg.norm(ra - rb))
    if group == "so2xso2":
        return math.hypot(circle_dist(a[0], b[0]), circle_dist(a[1], b[1]))
    raise ValueError(f"unknown group {group!r}")


# -- representations ----------------------------------------------------------


def rep_so2(L: int, angle: float) -> np.ndarray:
    """Block-diagonal circle representation on d = 2L+1 Fourier coefficients."""
    if L < 1:
        raise ValueError("band limit must be >= 1")
    d = 2 * L + 1
    out = np.zeros((d, d))
    out[0, 0] = 1.0
    for l in range(1, L + 1):
        c, s = math.cos(l * angle), math.sin(l * angle)
        i = 2 * l - 1
        out[i, i] = c
        out[i, i + 1] = -s
        out[i + 1, i] = s
        out[i + 1, i + 1] = c
    return out


def rep_so2_stack(L: int, angles: np.ndarray) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    d = 2 * L + 1
    out = np.zeros((angles.size, d, d))
    out[:, 0, 0] = 1.0
    for l in range(1, L + 1):
        c, s = np.cos(l * angles), np.sin(l * angles)
        i = 2 * l - 1
        out[:, i, i] = c
        out[:, i, i + 1] = -s
        out[:, i + 1, i] = s
        out[:, i + 1, i + 1] = c
    return out


def _euler_arrays(params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    es = [as_euler(g) for g in params]
    return (
        np.array([e.alpha for e in es]),
        np.array([e.beta for e in es]),
        np.array([e.gamma for e in es]),
    )


def rep_spherical(L: int, g) -> np.ndarray:
    """Block-diagonal real Wigner representation of dimension (L+1)^2."""
    return rep_spherical_stack(L, [g])[0]


def rep_spherical_stack(L: int, params) -> np.ndarray:
    if L < 1:
        raise ValueError("band limit must be >= 1")
    al, be, ga = _euler_arrays(params)
    d = (L + 1) ** 2
    out = np.zeros((al.size, d, d))
    off = 0
    for l in range(L + 1):
        blk = 2 * l + 1
        out[:, off : off + blk, off : off + blk] = hm.wigner_D_real_stack(
            l, al, be, ga
        )
        off += blk
    return out


def q_check(l: int) -> np.ndarray:
    """Unitary basis change for one radial shell of a volume at frequency l.

    Maps real shell coefficients to complex ones via u = q_check(l)^T theta;
    differs from q_matrix by i^l phases that keep the real-space basis real.
    """
    n = 2 * l + 1
    q = np.zeros((n, n), dtype=complex)
    rt = 1.0 / math.sqrt(2.0)
    for m in range(-l, l + 1):
        if m < 0:
            q[-m + l, m + l] = rt
            q[m + l, m + l] = 1j * rt
        elif m == 0:
            q[l, l] = 1j**l
        else:
            ph = (-1.0) ** (l + m)
            q[m + l, m + l] = ph * rt
            q[-m + l, m + l] = -1j * ph * rt
    return q


def rep_cryo(L: int, S: tuple[int, ...], g) -> np.ndarray:
    """Block-diagonal rotation action on volume coefficients, one block per (l, s)."""
    return rep_cryo_stack(L, S, [g])[0]


def rep_cryo_stack(L: int, S: tuple[int, ...], params) -> np.ndarray:
    if len(S) != L + 1 or any(s < 1 for s in S):
        raise ValueError("need one radial band limit >= 1 per frequency")
    al, be, ga = _euler_arrays(params)
    d = sum((2 * l + 1) * S[l] for l in range(L + 1))
    out = np.zeros((al.size, d, d))
    off = 0
    for l in range(L + 1):
        q = q_check(l)
        dc = hm.wigner_D_complex_stack(l, al, be, ga)
        blk = hm._realify(
            np.einsum("ab,nbc,dc->nad", q.conj(), dc, q), f"cryo block l={l}"
        )
        for _ in range(S[l]):
            w = 2 * l + 1
            out[:, off : off + w, off : off + w] = blk
            off += w
    return out


# -- measures -----------------------------------------------------------------


@dataclass(frozen=True)
class WignerCoeffs:
    """Coefficients of a rotation density in real Wigner D-matrix entries.

    `coeffs` maps (p, u, v) -> value for a full expansion, or (p, u) -> value
    when `inplane` is set (only the v = 0 column survives in-plane averaging).
    The constant coefficient is pinned to 1 so the density integrates to one.
    """

    band_limit: int
    inplane: bool
    coeffs: dict
    bound_b: float = 2.0

    def __post_init__(self):
        key0 = (0, 0) if self.inplane else (0, 0, 0)
        c0 = self.coeffs.get(key0, None)
        if c0 is None or abs(c0 - 1.0) > 1e-12:
            raise ValueError("constant coefficient must be exactly 1")
        for key, val in self.coeffs.items():
            p = key[0]
            if p > self.band_limit or any(abs(i) > p for i in key[1:]):
                raise ValueError(f"coefficient index {key} out of range")
            if abs(val) > self.bound_b + 1e-12:
                raise ValueError(f"coefficient {key} exceeds bound {self.bound_b}")

    def vector(self) -> tuple[list, np.ndarray]:
        keys = sorted(self.coeffs)
        return keys, np.array([self.coeffs[k] for k in keys])


@dataclass(frozen=True)
class Haar:
    group: str


@dataclass(frozen=True)
class Bernoulli:
    """Measure on {+1, -1} with probability p on +1."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


@dataclass(frozen=True)
class WrappedNormal:
    """Normal law with mean mu and variance s2 wrapped onto the circle."""

    mu: float
    s2: float

    def __post_init__(self):
        if self.s2 <= 0.0:
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class Discrete:
    group: str
    params: tuple
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.params) != w.size:
            raise ValueError("params and weights must match in length")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")


@dataclass(frozen=True)
class WignerDensity:
    coeffs: WignerCoeffs


GroupMeasure = Haar | Bernoulli | WrappedNormal | Discrete | WignerDensity


def measure_group(measure: GroupMeasure) -> str:
    if isinstance(measure, Haar):
        return measure.group
    if isinstance(measure, Bernoulli):
        return "z2"
    if isinstance(measure, WrappedNormal):
        return "so2"
    if isinstance(measure, Discrete):
        return measure.group
    if isinstance(measure, WignerDensity):
        return "so3"
    raise TypeError(f"not a group measure: {measure!r}")


def wrapped_normal_pdf(alpha, mu: float, s2: float):
    """Density on [0, 2*pi) of a normal law wrapped around the circle."""
    if s2 <= 0.0:
        raise ValueError("variance must be positive")
    alpha = np.asarray(alpha, dtype=float)
    s = math.sqrt(s2)
    kmax = math.ceil(6.0 * s / TWO_PI) + 2
    ks = np.arange(-kmax, kmax + 1)
    z = alpha[..., None] - mu + TWO_PI * ks
    out = np.exp(-(z**2) / (2.0 * s2)).sum(axis=-1) / (math.sqrt(TWO_PI) * s)
    return out if out.ndim else float(out)


def wigner_density_eval(coeffs: WignerCoeffs, g) -> float:
    return float(wigner_density_at(coeffs, [g])[0])


def wigner_density_at(coeffs: WignerCoeffs, params) -> np.ndarray:
    """Density values at a list of SO(3) parameters."""
    al, be, ga = _euler_arrays(params)
    out = np.zeros(al.size)
    stacks = {
        p: hm.wigner_D_real_stack(p, al, be, ga)
        for p in range(coeffs.band_limit + 1)
    }
    for key, val in coeffs.coeffs.items():
        if coeffs.inplane:
            p, u = key
            v = 0
        else:
            p, u, v = key
        out += val * stacks[p][:, u + p, v + p]
    return out


def project_to_inplane(coeffs: WignerCoeffs) -> tuple[WignerCoeffs, float]:
    """Drop v != 0 coefficients; returns the in-plane form and the dropped L2 mass."""
    if coeffs.inplane:
        return coeffs, 0.0
    kept = {}
    dropped = 0.0
    for (p, u, v), val in coeffs.coeffs.items():
        if v == 0:
            kept[(p, u)] = val
        else:
            dropped += val * val / (2 * p + 1)
    return (
        WignerCoeffs(coeffs.band_limit, True, kept, coeffs.bound_b),
        dropped,
    )


# -- quadrature ---------------------------------------------------------------


@dataclass
class QuadratureRule:
    """Nodes and probability weights approximating integration over a measure."""

    group: str
    nodes: list
    weights: np.ndarray
    resolution: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if (self.weights < -1e-15).any():
            raise ValueError("quadrature weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")

    def __len__(self):
        return len(self.nodes)


def _certify_haar(rule: QuadratureRule, l_check: int, tol: float = 1e-8):
    for l in range(1, l_check + 1):
        if rule.group == "so2":
            angles = np.asarray(rule.nodes)
            resid = abs(np.sum(rule.weights * np.exp(-1j * l * angles)))
        else:
            al, be, ga = _euler_arrays(rule.nodes)
            stack = hm.wigner_D_real_stack(l, al, be, ga)
            resid = np.abs(
                np.tensordot(rule.weights, stack, axes=(0, 0))
            ).max()
        if resid > tol:
            raise CertificateError(
                f"{rule.group} Haar rule at resolution {rule.resolution} is "
                f"inexact at frequency {l}: residual {resid:.3e}"
            )


def haar_quadrature(group: str, resolution: int, l_check: int | None = None) -> QuadratureRule:
    """Quadrature for the uniform measure, certified by representation means.

    SO(2) uses uniform angles; SO(3) a tensor Euler grid with Gauss-Legendre
    in cos(beta), an even node count keeping beta off the equator.
    """
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if group == "z2":
        return QuadratureRule("z2", [1, -1], np.array([0.5, 0.5]), resolution)
    if group == "so2":
        angles = TWO_PI * np.arange(resolution) / resolution
        rule = QuadratureRule(
            "so2", list(angles), np.full(resolution, 1.0 / resolution), resolution
        )
        _certify_haar(rule, min(6, resolution - 1) if l_check is None else l_check)
        return rule
    if group == "so3":
        nb = resolution + resolution % 2
        na = 2 * resolution
        xs, wb = np.polynomial.legendre.leggauss(nb)
        betas = np.arccos(xs)
        alphas = TWO_PI * np.arange(na) / na
        nodes, weights = [], []
        for b, w in zip(betas, wb):
            for a in alphas:
                for c in alphas:
                    nodes.append(Euler(a, b, c))
                    weights.append(w / 2.0 / na / na)
        rule = QuadratureRule("so3", nodes, np.array(weights), resolution)
        _certify_haar(
            rule,
            min(4, na - 1, 2 * nb - 1) if l_check is None else l_check,
        )
        return rule
    if group == "so2xso2":
        angles = TWO_PI * np.arange(resolution) / resolution
        nodes = [(a, b) for a in angles for b in angles]
        n = len(nodes)
        return QuadratureRule("so2xso2", nodes, np.full(n, 1.0 / n), resolution)
    raise ValueError(f"unknown group {group!r}")


def measure_quadrature(
    measure: GroupMeasure, resolution: int | None = None
) -> QuadratureRule:
    """Quadrature against a measure: Haar nodes reweighted by its density.

    Discrete and Bernoulli measures pass their atoms through verbatim.
    """
    group = measure_group(measure)
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[group]
    if isinstance(measure, Haar):
        return haar_quadrature(group, resolution)
    if isinstance(measure, Bernoulli):
        return QuadratureRule(
            "z2", [1, -1], np.array([measure.p, 1.0 - measure.p]), resolution
        )
    if isinstance(measure, Discrete):
        return QuadratureRule(
            group, list(measure.params), np.asarray(measure.weights, float), resolution
        )
    base = haar_quadrature(group, resolution)
    if isinstance(measure, WrappedNormal):
        dens = wrapped_normal_pdf(np.asarray(base.nodes), measure.mu, measure.s2)
        dens = dens * TWO_PI  # density w.r.t. normalized Haar
    elif isinstance(measure, WignerDensity):
        dens = wigner_density_at(measure.coeffs, base.nodes)
        if dens.min() < -1e-9:
            raise ValueError(
                f"density is negative at a quadrature node: {dens.min():.3e}"
            )
        dens = np.clip(dens, 0.0, None)
    else:
        raise TypeError(f"not a group measure: {measure!r}")
    w = base.weights * dens
    total = w.sum()
    if total <= 0.0:
        raise ValueError("measure has no mass on the quadrature grid")
    return QuadratureRule(group, base.nodes, w / total, resolution)


# -- sampling -----------------------------------------------------------------


def _haar_so3_eulers(rng: np.random.Generator, n: int) -> list[Euler]:
    # uniform quaternions -> rotation matrices -> Euler angles
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    rots = np.empty((n, 3, 3))
    rots[:, 0, 0] = 1 - 2 * (y * y + z * z)
    rots[:, 0, 1] = 2 * (x * y - z * w)
    rots[:, 0, 2] = 2 * (x * z + y * w)
    rots[:, 1, 0] = 2 * (x * y + z * w)
    rots[:, 1, 1] = 1 - 2 * (x * x + z * z)
    rots[:, 1, 2] = 2 * (y * z - x * w)
    rots[:, 2, 0] = 2 * (x * z - y * w)
    rots[:, 2, 1] = 2 * (y * z + x * w)
    rots[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return [hm.euler_from_rot3(r) for r in rots]


def sample_measure(measure: GroupMeasure, n: int, rng) -> list:
    """Draw n i.i.d. group parameters; deterministic for a seeded generator."""
    if n < 1:
        raise ValueError("need at least one draw")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if isinstance(measure, Bernoulli):
        return list(np.where(rng.random(n) < measure.p, 1, -1))
    if isinstance(measure, Discrete):
        idx = rng.choice(len(measure.params), size=n, p=np.asarray(measure.weights))
        return [measure.params[i] for i in idx]
    if isinstance(measure, WrappedNormal):
        draws = rng.normal(measure.mu, math.sqrt(measure.s2), size=n)
        return list(draws % TWO_PI)
    if isinstance(measure, Haar):
        if measure.group == "z2":
            return list(np.where(rng.random(n) < 0.5, 1, -1))
        if measure.group == "so2":
            return list(rng.uniform(0.0, TWO_PI, size=n))
        if measure.group == "so3":
            return _haar_so3_eulers(rng, n)
        if measure.group == "so2xso2":
            u = rng.uniform(0.0, TWO_PI, size=(n, 2))
            return [tuple(row) for row in u]
        raise ValueError(f"unknown group {measure.group!r}")
    if isinstance(measure, WignerDensity):
        grid = haar_quadrature("so3", 2 * DEFAULT_RESOLUTION["so3"])
        envelope = 1.1 * wigner_density_at(measure.coeffs, grid.nodes).max()
        out = []
        while len(out) < n:
            batch = max(64, int(1.5 * (n - len(out)) * envelope))
            cand = _haar_so3_eulers(rng, batch)
            dens = wigner_density_at(measure.coeffs, cand)
            if dens.max() > envelope:
                raise RuntimeError(
                    "rejection envelope violated; density grid too coarse "
                    f"({dens.max():.4f} > {envelope:.4f})"
                )
            accept = rng.uniform(0.0, envelope, size=batch) < dens
            out.extend(g for g, a in zip(cand, accept) if a)
        return out[:n]
    raise TypeError(f"not a group measure: {measure!r}")


# -- serialization ------------------------------------------------------------


def _param_to_json(group: str, p):
    if group == "z2":
        return int(p)
    if group == "so2":
        return float(p)
    if group == "so3":
        e = as_euler(p)
        return [e.alpha, e.beta, e.gamma]
    if group == "so2xso2":
        return [float(p[0]), float(p[1])]
    raise ValueError(f"unknown group {group!r}")


def _param_from_json(group: str, obj):
    if group == "z2":
        return int(obj)
    if group == "so2":
        return float(obj)
    if group == "so3":
        return Euler(*obj)
    if group == "so2xso2":
        return (float(obj[0]), float(obj[1]))
    raise ValueError(f"unknown group {group!r}")


def wigner_coeffs_to_json(c: WignerCoeffs) -> dict:
    return {
        "band_limit": c.band_limit,
        "inplane": c.inplane,
        "coeffs": [[list(key), val] for key, val in sorted(c.coeffs.items())],
        "bound_b": c.bound_b,
    }


def wigner_coeffs_from_json(obj: dict) -> WignerCoeffs:
    return WignerCoeffs(
        band_limit=int(obj["band_limit"]),
        inplane=bool(obj["inplane"]),
        coeffs={tuple(key): float(val) for key, val in obj["coeffs"]},
        bound_b=float(obj.get("bound_b", 2.0)),
    )


def measure_to_json(measure: GroupMeasure) -> dict:
    if isinstance(measure, Haar):
        return {"kind": "haar", "group": measure.group}
    if isinstance(measure, Bernoulli):
        return {"kind": "bernoulli", "p": measure.p}
    if isinstance(measure, WrappedNormal):
        return {"kind": "wrapped_normal", "mu": measure.mu, "s2": measure.s2}
    if isinstance(measure, Discrete):
        return {
            "kind": "discrete",
            "group": measure.group,
            "params": [_param_to_json(measure.group, p) for p in measure.params],
            "weights": list(measure.weights),
        }
    if isinstance(measure, WignerDensity):
        return {"kind": "wigner_density", **wigner_coeffs_to_json(measure.coeffs)}
    raise TypeError(f"not a group measure: {measure!r}")


def measure_from_json(obj: dict) -> GroupMeasure:
    kind = obj["kind"]
    if kind == "haar":
        return Haar(obj["group"])
    if kind == "bernoulli":
        return Bernoulli(float(obj["p"]))
    if kind == "wrapped_normal":
        return WrappedNormal(float(obj["mu"]), float(obj["s2"]))
    if kind == "discrete":
        group = obj["group"]
        return Discrete(
            group,
            tuple(_param_from_json(group, p) for p in obj["params"]),
            tuple(float(w) for w in obj["weights"]),
        )
    if kind == "wigner_density":
        return WignerDensity(wigner_coeffs_from_json(obj))
    raise ValueError(f"unknown measure kind {kind!r}")

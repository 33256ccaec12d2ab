"""Forward models: (representation, projection) pairs and synthetic data.

Each model couples a group, an orthogonal representation on coefficient
vectors in R^d, and a linear map P into the observation space R^d_tilde.
Observations are Y = P g theta + sigma * eps with g drawn from a group
measure and eps standard Gaussian.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import groups as gp
from . import harmonics as hm


@dataclass
class ModelSpec:
    """A group representation together with a projection to observation space."""

    group: str
    d: int
    d_tilde: int
    projection: np.ndarray
    rep_stack: callable  # list of params -> (N, d, d)
    name: str
    L: int | None = None
    S: tuple[int, ...] | None = None
    projected: bool = False
    meta: dict = field(default_factory=dict)

    def rep(self, g) -> np.ndarray:
        return self.rep_stack([g])[0]

    def haar_rule(self, resolution: int | None = None) -> gp.QuadratureRule:
        if resolution is None:
            resolution = gp.DEFAULT_RESOLUTION.get(self.group, 64)
        return gp.haar_quadrature(self.group, resolution)

    def projection_norm(self) -> float:
        if "pnorm" not in self.meta:
            self.meta["pnorm"] = float(np.linalg.norm(self.projection, 2))
        return self.meta["pnorm"]

    def descriptor(self) -> dict:
        out = {"kind": self.name}
        if self.name == "z2":
            out["d"] = self.d
        elif self.name in ("mra", "cryo"):
            out["L"] = self.L
            out["projected"] = self.projected
            if self.name == "cryo":
                out["S"] = list(self.S)
        elif self.name in ("spherical", "torus"):
            out["L"] = self.L
        return out


def projected_stack(model: ModelSpec, params) -> np.ndarray:
    """Matrices P g for a list of group parameters, shape (N, d_tilde, d)."""
    reps = model.rep_stack(params)
    return np.einsum("ij,njk->nik", model.projection, reps)


def model_z2(d: int) -> ModelSpec:
    """Sign-flip model: g theta = +-theta, no projection."""
    if d < 1:
        raise ValueError("dimension must be >= 1")

    def stack(params):
        signs = np.asarray(params, dtype=float)
        return signs[:, None, None] * np.eye(d)[None, :, :]

    return ModelSpec("z2", d, d, np.eye(d), stack, "z2")


def model_mra(L: int, projected: bool = False) -> ModelSpec:
    """Bandlimited function on the circle under random rotation.

    Without projection P is the identity on the 2L+1 Fourier coefficients;
    with the two-fold projection only the constant and cosine coefficients
    survive, scaled by sqrt(2).
    """
    if L < 1:
        raise ValueError("band limit must be >= 1")
    d = 2 * L + 1
    if projected:
        p = np.zeros((L + 1, d))
        p[0, 0] = math.sqrt(2.0)
        for l in range(1, L + 1):
            p[l, 2 * l - 1] = math.sqrt(2.0)
    else:
        p = np.eye(d)

    def stack(params):
        return gp.rep_so2_stack(L, np.asarray(params, dtype=float))

    return ModelSpec(
        "so2", d, p.shape[0], p, stack, "mra", L=L, projected=projected
    )


def model_spherical(L: int) -> ModelSpec:
    """Bandlimited function on the sphere under random rotation, no projection."""
    d = (L + 1) ** 2

    def stack(params):
        return gp.rep_spherical_stack(L, params)

    return ModelSpec("so3", d, d, np.eye(d), stack, "spherical", L=L)


def _legendre_at_zero(l: int, m: int) -> float:
    return hm.assoc_legendre(l, m, 0.0)


def slice_constant(l: int, m: int) -> float:
    """Weight of frequency-l content in the equatorial slice at order m."""
    return (
        (-1.0) ** m
        * math.sqrt((2 * l + 1) / 2.0 * math.factorial(l - m) / math.factorial(l + m))
        * _legendre_at_zero(l, m)
    )


@dataclass
class CryoProjection:
    """Tomographic projection assembled from the complex slice matrix."""

    L: int
    S: tuple[int, ...]
    complex_slice: np.ndarray  # P^C, (d_tilde, d) complex
    q_vol: np.ndarray  # block-diagonal basis change on the volume side
    q_img: np.ndarray  # block-diagonal basis change on the image side
    real: np.ndarray  # conj(q_img) P^C q_vol^T, real

    @property
    def constants(self) -> dict:
        return {
            (l, m): slice_constant(l, m)
            for l in range(self.L + 1)
            for m in range(-l, l + 1)
        }


def volume_index(L: int, S: tuple[int, ...]):
    """Coefficient ordering for volumes: lexicographic in (l, s, m)."""
    idx = []
    for l in range(L + 1):
        for s in range(1, S[l] + 1):
            for m in range(-l, l + 1):
                idx.append((l, s, m))
    return idx


def image_index(L: int, S_max: int):
    """Coefficient ordering for projections: lexicographic in (s, m)."""
    return [(s, m) for s in range(1, S_max + 1) for m in range(-L, L + 1)]


def cryo_projection(L: int, S: tuple[int, ...]) -> CryoProjection:
    vol_idx = volume_index(L, S)
    s_max = max(S)
    img_idx = image_index(L, s_max)
    d, dt = len(vol_idx), len(img_idx)

    pc = np.zeros((dt, d), dtype=complex)
    row = {key: i for i, key in enumerate(img_idx)}
    for j, (l, s, m) in enumerate(vol_idx):
        pc[row[(s, m)], j] = slice_constant(l, m)

    q_vol = np.zeros((d, d), dtype=complex)
    off = 0
    for l in range(L + 1):
        blk = gp.q_check(l)
        for _ in range(S[l]):
            w = 2 * l + 1
            q_vol[off : off + w, off : off + w] = blk
            off += w

    q_img = np.zeros((dt, dt), dtype=complex)
    blk = hm.q_matrix(L)
    for s in range(s_max):
        w = 2 * L + 1
        q_img[s * w : (s + 1) * w, s * w : (s + 1) * w] = blk

    real = hm._realify(q_img.conj() @ pc @ q_vol.T, "cryo projection")
    return CryoProjection(L, S, pc, q_vol, q_img, real)


def model_cryo(L: int, S: tuple[int, ...] | int, projected: bool = False) -> ModelSpec:
    """Bandlimited volume under random rotation, optionally tomographically projected."""
    if isinstance(S, int):
        S = tuple([S] * (L + 1))
    S = tuple(S)
    if L < 1:
        raise ValueError("band limit must be >= 1")
    d = sum((2 * l + 1) * S[l] for l in range(L + 1))
    if projected:
        p = cryo_projection(L, S).real
    else:
        p = np.eye(d)

    def stack(params):
        return gp.rep_cryo_stack(L, S, params)

    return ModelSpec(
        "so3", d, p.shape[0], p, stack, "cryo", L=L, S=S, projected=projected
    )


def inplane_rotation_on_image(L: int, S_max: int, alpha: float) -> np.ndarray:
    """Rotation of projected coefficients induced by an in-plane rotation."""
    q = hm.q_matrix(L)
    phases = np.exp(-1j * np.arange(-L, L + 1) * alpha)
    blk = hm._realify(q.conj() @ np.diag(phases) @ q.T, "in-plane image block")
    dt = S_max * (2 * L + 1)
    out = np.zeros((dt, dt))
    w = 2 * L + 1
    for s in range(S_max):
        out[s * w : (s + 1) * w, s * w : (s + 1) * w] = blk
    return out


def model_torus(L: int) -> ModelSpec:
    """Two independent circle actions with a coordinate-summing projection.

    The first 2L coordinates rotate under g1 and are collapsed by summing
    matching components; the rest rotate under g2 and pass through.  The
    projected orbit self-intersects for generic signals once L >= 2.
    """
    if L < 1:
        raise ValueError("band limit must be >= 1")
    d = 4 * L
    dt = 2 * L + 2
    p = np.zeros((dt, d))
    for l in range(L):
        p[0, 2 * l] = 1.0
        p[1, 2 * l + 1] = 1.0
    p[2:, 2 * L :] = np.eye(2 * L)

    def stack(params):
        g1 = np.array([g[0] for g in params])
        g2 = np.array([g[1] for g in params])
        b1 = gp.rep_so2_stack(L, g1)[:, 1:, 1:]
        b2 = gp.rep_so2_stack(L, g2)[:, 1:, 1:]
        out = np.zeros((len(params), d, d))
        out[:, : 2 * L, : 2 * L] = b1
        out[:, 2 * L :, 2 * L :] = b2
        return out

    return ModelSpec("so2xso2", d, dt, p, stack, "torus", L=L)


def model_from_descriptor(desc: dict) -> ModelSpec:
    kind = desc["kind"]
    if kind == "z2":
        return model_z2(int(desc["d"]))
    if kind == "mra":
        return model_mra(int(desc["L"]), bool(desc.get("projected", False)))
    if kind == "spherical":
        return model_spherical(int(desc["L"]))
    if kind == "cryo":
        return model_cryo(
            int(desc["L"]),
            tuple(desc["S"]) if "S" in desc else 1,
            bool(desc.get("projected", False)),
        )
    if kind == "torus":
        return model_torus(int(desc["L"]))
    raise ValueError(f"unknown model kind {kind!r}")


# -- data generation ----------------------------------------------------------


@dataclass
class Dataset:
    """Observations with the configuration that generated them."""

    y: np.ndarray  # (n, d_tilde)
    sigma: float
    model: dict  # model descriptor
    measure: dict  # measure descriptor
    seed: int | None = None
    theta_star: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.y.shape[0]


def generate_data(
    model: ModelSpec,
    theta_star: np.ndarray,
    measure: gp.GroupMeasure,
    sigma: float,
    n: int,
    seed,
) -> Dataset:
    """Draw n observations Y = P g theta + sigma * eps, deterministic per seed."""
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    if n < 1:
        raise ValueError("need at least one observation")
    if gp.measure_group(measure) != model.group:
        raise ValueError(
            f"measure on {gp.measure_group(measure)!r} cannot drive a "
            f"{model.group!r} model"
        )
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (model.d,):
        raise ValueError(f"signal must have length {model.d}")
    rng = np.random.default_rng(seed)
    params = gp.sample_measure(measure, n, rng)
    means = np.einsum(
        "nij,j->ni", projected_stack(model, params), theta_star
    )
    y = means + sigma * rng.standard_normal((n, model.d_tilde))
    return Dataset(
        y=y,
        sigma=sigma,
        model=model.descriptor(),
        measure=gp.measure_to_json(measure),
        seed=seed if isinstance(seed, int) else None,
        theta_star=theta_star,
    )


def save_dataset(ds: Dataset, path):
    """One file: a JSON header line, then CSV rows with 17 significant digits."""
    header = {
        "model": ds.model,
        "sigma": ds.sigma,
        "n": int(ds.n),
        "measure": ds.measure,
        "seed": ds.seed,
    }
    if ds.theta_star is not None:
        header["theta_star"] = [float(v) for v in ds.theta_star]
    cols = ",".join(f"y_{j+1}" for j in range(ds.y.shape[1]))
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(cols + "\n")
        for row in ds.y:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()  # column names
        y = np.loadtxt(fh, delimiter=",", ndmin=2)
    theta = header.get("theta_star")
    return Dataset(
        y=y,
        sigma=float(header["sigma"]),
        model=header["model"],
        measure=header["measure"],
        seed=header.get("seed"),
        theta_star=None if theta is None else np.asarray(theta, dtype=float),
    )

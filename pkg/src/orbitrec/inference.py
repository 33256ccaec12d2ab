"""Likelihood evaluation and fitting for rotation-mixture observations.

Sample and population negative log-likelihoods under an arbitrary prior
measure on the group, their analytic gradients, EM fitting, and joint
estimation of the signal together with a parameterized rotation density.
All mixture sums run in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp, ndtri

from . import groups as gp
from .groups import QuadratureRule
from .models import Dataset, ModelSpec, projected_stack

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class FitConfig:
    """Knobs for EM and joint fits."""

    tol: float = 1e-6
    max_iter: int = 500
    resolution: int | None = None
    restarts: int = 5
    seed: int = 0
    max_outer: int = 30  # joint fits: outer alternations
    em_sweep_iters: int = 50  # joint fits: EM iterations per theta step

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class FitResult:
    theta_hat: np.ndarray
    B_hat: dict | None
    iters: int
    converged: bool
    nll_trace: list
    config_echo: dict = field(default_factory=dict)

    @property
    def nll(self) -> float:
        return self.nll_trace[-1]

    def to_json(self) -> dict:
        out = {
            "theta_hat": [float(v) for v in self.theta_hat],
            "B_hat": None,
            "iters": self.iters,
            "converged": self.converged,
            "nll_trace": [float(v) for v in self.nll_trace],
            "config_echo": self.config_echo,
        }
        if self.B_hat is not None:
            out["B_hat"] = [[list(k), float(v)] for k, v in sorted(self.B_hat.items())]
        return out


@dataclass
class PopulationEvalConfig:
    """How to evaluate the population objective.

    `quadrature` composes a Gauss-Hermite grid over observations with group
    quadrature (small observation dimensions only); `mc` averages over
    common-random-number draws so scans over signals and generating measures
    share their noise.
    """

    mode: str = "mc"
    n_outer: int = 10_000
    resolution: int | None = None
    outer_resolution: int | None = None
    gh_nodes: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("mc", "quadrature"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_outer < 1:
            raise ValueError("need at least one outer sample")


@dataclass
class PopulationResult:
    value: float
    stderr: float
    samples: np.ndarray | None = None


def _data_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.y
    return np.atleast_2d(np.asarray(data, dtype=float))


class MixtureEngine:
    """Precomputed projected representations over a quadrature rule.

    Holds P g_j for every node j plus the Gram blocks used by the EM
    normal equations; everything downstream is matrix algebra on these.
    """

    def __init__(self, model: ModelSpec, rule: QuadratureRule):
        if rule.group != model.group:
            raise ValueError("rule and model act on different groups")
        self.model = model
        self.rule = rule
        self.mats = projected_stack(model, rule.nodes)  # (N, dt, d)
        self.gram = np.einsum("nij,nik->njk", self.mats, self.mats)  # (N, d, d)
        with np.errstate(divide="ignore"):
            self.logw = np.log(rule.weights)

    @property
    def d_tilde(self) -> int:
        return self.model.d_tilde

    def log_kernel(self, theta, sigma2, y) -> np.ndarray:
        """log w_j - ||y_i - P g_j theta||^2 / (2 sigma2), shape (n, N)."""
        mus = self.mats @ theta  # (N, dt)
        d2 = (
            (y**2).sum(axis=1)[:, None]
            + (mus**2).sum(axis=1)[None, :]
            - 2.0 * y @ mus.T
        )
        return self.logw[None, :] - np.clip(d2, 0.0, None) / (2.0 * sigma2)

    def logpdf(self, theta, sigma2, y) -> np.ndarray:
        lk = self.log_kernel(theta, sigma2, y)
        return logsumexp(lk, axis=1) - 0.5 * self.d_tilde * (
            LOG_2PI + math.log(sigma2)
        )

    def posteriors(self, theta, sigma2, y):
        """Per-observation log-density and posterior node weights."""
        lk = self.log_kernel(theta, sigma2, y)
        lse = logsumexp(lk, axis=1)
        posts = np.exp(lk - lse[:, None])
        logp = lse - 0.5 * self.d_tilde * (LOG_2PI + math.log(sigma2))
        return logp, posts

    def drift(self, posts, theta, y) -> np.ndarray:
        """Posterior-weighted sum of g^T P^T (P g theta - y) per observation."""
        gtheta = self.gram @ theta  # (N, d)
        out = posts @ gtheta
        for t in range(self.d_tilde):
            out -= (posts @ self.mats[:, t, :]) * y[:, t : t + 1]
        return out


def _engine(model, prior_rule) -> MixtureEngine:
    if isinstance(prior_rule, MixtureEngine):
        return prior_rule
    return MixtureEngine(model, prior_rule)


def mixture_logpdf(model, theta, prior_rule, sigma2, y) -> float:
    eng = _engine(model, prior_rule)
    return float(eng.logpdf(np.asarray(theta, float), sigma2, np.atleast_2d(y))[0])


def mixture_density(model, theta, prior_rule, sigma2, y) -> float:
    """Mixture density of one observation under the prior rule."""
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    return math.exp(mixture_logpdf(model, theta, prior_rule, sigma2, y))


def neg_loglik_sample(model, theta, prior_rule, sigma2, data) -> float:
    """Average negative log-likelihood of the data under the mixture."""
    y = _data_matrix(data)
    if y.size == 0:
        raise ValueError("empty data")
    eng = _engine(model, prior_rule)
    return float(-eng.logpdf(np.asarray(theta, float), sigma2, y).mean())


def grad_neg_loglik(model, theta, prior_rule, sigma2, data) -> np.ndarray:
    """Analytic gradient of neg_loglik_sample in the signal."""
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    y = _data_matrix(data)
    theta = np.asarray(theta, dtype=float)
    eng = _engine(model, prior_rule)
    _, posts = eng.posteriors(theta, sigma2, y)
    return eng.drift(posts, theta, y).mean(axis=0) / sigma2


def h_function(
    model, u, theta, tau2, prior_rule, n_samples: int = 100_000, seed: int = 0
) -> PopulationResult:
    """Mean posterior drift under observations centered at one group element.

    Draws y ~ N(P g(u) theta, tau2 I) and averages the posterior-weighted
    drift with the uniform prior; the inner integral runs on `prior_rule`.
    Returns the vector estimate with a per-component standard error.
    """
    if tau2 <= 0:
        raise ValueError("noise variance must be positive")
    theta = np.asarray(theta, dtype=float)
    eng = _engine(model, prior_rule)
    mu0 = model.projection @ (model.rep(u) @ theta)
    rng = np.random.default_rng(seed)
    y = mu0[None, :] + math.sqrt(tau2) * rng.standard_normal(
        (n_samples, model.d_tilde)
    )
    _, posts = eng.posteriors(theta, tau2, y)
    per_sample = eng.drift(posts, theta, y)
    return PopulationResult(
        value=per_sample.mean(axis=0),
        stderr=per_sample.std(axis=0, ddof=1) / math.sqrt(n_samples),
        samples=None,
    )


# -- population objective -----------------------------------------------------


def _quantile_draws(measure, uniforms, rng):
    """Group draws coupled through shared uniforms where a quantile map exists."""
    if isinstance(measure, gp.Haar):
        if measure.group == "z2":
            return list(np.where(uniforms < 0.5, 1, -1))
        if measure.group == "so2":
            return list(gp.TWO_PI * uniforms)
        return gp.sample_measure(measure, uniforms.size, rng)
    if isinstance(measure, gp.Bernoulli):
        return list(np.where(uniforms < measure.p, 1, -1))
    if isinstance(measure, gp.WrappedNormal):
        draws = measure.mu + math.sqrt(measure.s2) * ndtri(uniforms)
        return list(draws % gp.TWO_PI)
    if isinstance(measure, gp.Discrete):
        cum = np.cumsum(measure.weights)
        idx = np.searchsorted(cum, uniforms, side="right")
        idx = np.clip(idx, 0, len(measure.params) - 1)
        return [measure.params[i] for i in idx]
    return gp.sample_measure(measure, uniforms.size, rng)


def neg_loglik_population(
    model,
    theta,
    theta_star,
    prior: gp.GroupMeasure,
    generating: gp.GroupMeasure,
    sigma2: float,
    cfg: PopulationEvalConfig,
) -> PopulationResult:
    """Expected negative log-likelihood under data generated from theta_star.

    The model marginalizes rotations with `prior`; the data follow
    `generating`.  Monte Carlo draws are coupled across calls sharing a seed:
    noise comes from one dedicated stream, rotations from quantile transforms
    of another, and for unprojected models the noise is co-rotated with the
    signal so the value is invariant to `generating` exactly, not just in
    expectation.
    """
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    prior_rule = gp.measure_quadrature(
        prior, cfg.resolution or gp.DEFAULT_RESOLUTION.get(model.group)
    )
    eng = MixtureEngine(model, prior_rule)
    if cfg.mode == "quadrature":
        if model.d_tilde > 3:
            raise ValueError(
                "quadrature mode supports observation dimension <= 3; "
                f"got {model.d_tilde}"
            )
        gen_rule = gp.measure_quadrature(
            generating,
            cfg.outer_resolution
            or cfg.resolution
            or gp.DEFAULT_RESOLUTION.get(model.group),
        )
        nh = cfg.gh_nodes or {1: 64, 2: 24, 3: 12}[model.d_tilde]
        xs, ws = np.polynomial.hermite.hermgauss(nh)
        grids = np.meshgrid(*([xs] * model.d_tilde), indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)  # (nh^dt, dt)
        wgrid = np.ones(pts.shape[0])
        for k in range(model.d_tilde):
            wgrid *= np.take(ws, np.indices([nh] * model.d_tilde)[k].ravel())
        wgrid /= math.pi ** (model.d_tilde / 2.0)
        centers = projected_stack(model, gen_rule.nodes) @ theta_star
        scale = math.sqrt(2.0 * sigma2)
        total = 0.0
        for ck, vk in zip(centers, gen_rule.weights):
            if vk == 0.0:
                continue
            logp = eng.logpdf(theta, sigma2, ck[None, :] + scale * pts)
            total += vk * float(wgrid @ logp)
        return PopulationResult(value=-total, stderr=0.0, samples=None)

    ss = np.random.SeedSequence(cfg.seed)
    rng_eps, rng_u, rng_extra = (np.random.default_rng(s) for s in ss.spawn(3))
    eps = rng_eps.standard_normal((cfg.n_outer, model.d))
    uniforms = rng_u.random(cfg.n_outer)
    params = _quantile_draws(generating, uniforms, rng_extra)
    if model.projected:
        y = np.einsum("nij,j->ni", projected_stack(model, params), theta_star)
        y = y + math.sqrt(sigma2) * eps[:, : model.d_tilde]
    else:
        # co-rotate signal and noise together: same law, and the value is
        # then exactly independent of the generating measure
        y = np.einsum(
            "nij,nj->ni", model.rep_stack(params), theta_star + math.sqrt(sigma2) * eps
        )
    per_sample = -eng.logpdf(theta, sigma2, y)
    return PopulationResult(
        value=float(per_sample.mean()),
        stderr=float(per_sample.std(ddof=1) / math.sqrt(cfg.n_outer)),
        samples=per_sample,
    )


# -- EM -----------------------------------------------------------------------


def _m_step(eng: MixtureEngine, posts, y) -> np.ndarray:
    n = y.shape[0]
    col = posts.sum(axis=0) / n  # (N,)
    a = np.tensordot(col, eng.gram, axes=(0, 0))  # (d, d)
    s = posts.T @ y / n  # (N, dt)
    b = np.einsum("ntd,nt->d", eng.mats, s)
    try:
        return scipy.linalg.solve(a, b, assume_a="pos")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        rank = np.linalg.matrix_rank(a)
        raise RuntimeError(
            f"EM normal equations are singular (rank {rank} < {a.shape[0]}); "
            "the prior leaves some projected directions unexcited"
        ) from exc


def _em_single(eng, y, sigma2, theta0, tol, max_iter):
    theta = theta0.copy()
    trace = []
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        logp, posts = eng.posteriors(theta, sigma2, y)
        trace.append(float(-logp.mean()))
        new = _m_step(eng, posts, y)
        step = np.linalg.norm(new - theta)
        theta = new
        if step < tol:
            converged = True
            break
    trace.append(float(-eng.logpdf(theta, sigma2, y).mean()))
    return theta, trace, converged, iters


def em_fit(
    model,
    data,
    prior: gp.GroupMeasure,
    sigma2: float,
    cfg: FitConfig | None = None,
    engine: MixtureEngine | None = None,
) -> FitResult:
    """Fit the signal by EM under a fixed prior measure on the group.

    E-step: posterior node weights per observation.  M-step: weighted
    least-squares solve of the normal equations.  Random restarts keep the
    best final objective; the likelihood trace of the winner is returned
    and is non-increasing.
    """
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    cfg = cfg or FitConfig()
    y = _data_matrix(data)
    if engine is None:
        rule = gp.measure_quadrature(prior, cfg.resolution)
        engine = MixtureEngine(model, rule)
    scale = math.sqrt((y**2).sum(axis=1).mean() / model.d_tilde)
    best = None
    for r in range(max(1, cfg.restarts)):
        rng = np.random.default_rng([cfg.seed, r])
        theta0 = scale * rng.standard_normal(model.d)
        theta, trace, converged, iters = _em_single(
            engine, y, sigma2, theta0, cfg.tol, cfg.max_iter
        )
        if best is None or trace[-1] < best[1][-1]:
            best = (theta, trace, converged, iters)
    theta, trace, converged, iters = best
    return FitResult(
        theta_hat=theta,
        B_hat=None,
        iters=iters,
        converged=converged,
        nll_trace=trace,
        config_echo={
            "estimator": "em",
            "sigma2": sigma2,
            "prior": gp.measure_to_json(prior),
            "tol": cfg.tol,
            "max_iter": cfg.max_iter,
            "restarts": cfg.restarts,
            "seed": cfg.seed,
            "resolution": engine.rule.resolution,
        },
    )


# -- joint estimation of signal and rotation density --------------------------


class DensityBasis:
    """Orthonormal density basis on the group, evaluated on quadrature nodes.

    On the rotation group these are the in-plane-invariant real Wigner
    entries at each frequency; on the circle the analogous truncated Fourier
    modes.  The constant mode is pinned to coefficient 1 and excluded.
    """

    def __init__(self, group: str, band_limit: int, rule, val_rule):
        self.group = group
        self.band_limit = band_limit
        if group == "so3":
            self.keys = [
                (p, u) for p in range(1, band_limit + 1) for u in range(-p, p + 1)
            ]
        elif group == "so2":
            self.keys = [
                (k, part) for k in range(1, band_limit + 1) for part in ("c", "s")
            ]
        else:
            raise ValueError(f"no density basis for group {group!r}")
        self.values = self._evaluate(rule.nodes)
        self.val_values = self._evaluate(val_rule.nodes)

    def _evaluate(self, nodes) -> np.ndarray:
        if self.group == "so3":
            al, be, ga = gp._euler_arrays(nodes)
            cols = []
            from . import harmonics as hm

            for p in range(1, self.band_limit + 1):
                stack = hm.wigner_D_real_stack(p, al, be, ga)
                for u in range(-p, p + 1):
                    cols.append(stack[:, u + p, p])
            return np.stack(cols, axis=1)
        angles = np.asarray(nodes, dtype=float)
        cols = []
        for k in range(1, self.band_limit + 1):
            cols.append(math.sqrt(2.0) * np.cos(k * angles))
            cols.append(math.sqrt(2.0) * np.sin(k * angles))
        return np.stack(cols, axis=1)

    def density(self, coef, values=None) -> np.ndarray:
        vals = self.values if values is None else values
        return 1.0 + vals @ coef

    def project_feasible(
        self, coef, bound: float, max_alternations: int = 200
    ) -> np.ndarray:
        """Alternate box clipping with grid-nonnegativity corrections."""
        coef = coef.copy()
        for _ in range(max_alternations):
            coef = np.clip(coef, -bound, bound)
            rho = self.density(coef, self.val_values)
            worst = int(np.argmin(rho))
            if rho[worst] >= -1e-12:
                return coef
            row = self.val_values[worst]
            coef -= rho[worst] * row / (row @ row)
        raise RuntimeError(
            "could not project the density coefficients onto the feasible set"
        )

    def as_dict(self, coef) -> dict:
        out = {key: float(v) for key, v in zip(self.keys, coef)}
        out[(0, 0) if self.group == "so3" else (0, "c")] = 1.0
        return out


def _b_objective_factory(eng, theta, sigma2, y, basis):
    # kernel without prior weights: -||y - mu_j||^2 / (2 sigma2)
    mus = eng.mats @ theta
    d2 = (
        (y**2).sum(axis=1)[:, None]
        + (mus**2).sum(axis=1)[None, :]
        - 2.0 * y @ mus.T
    )
    logphi = -np.clip(d2, 0.0, None) / (2.0 * sigma2)
    shift = logphi.max(axis=1, keepdims=True)
    t = np.exp(logphi - shift) * eng.rule.weights[None, :]  # (n, N)
    t_basis = t @ basis.values  # (n, K)
    t_total = t.sum(axis=1)  # (n,) = denominator at uniform density

    def objective(coef):
        denom = t_total + t_basis @ coef
        if (denom <= 0).any():
            return math.inf
        return float(-np.log(denom).mean())

    def gradient(coef):
        denom = t_total + t_basis @ coef
        return -(t_basis / denom[:, None]).mean(axis=0)

    return objective, gradient


def joint_mle(
    model,
    data,
    sigma2: float,
    cfg: FitConfig | None = None,
    band_limit: int = 1,
    bound_b: float = 2.0,
    init: FitResult | None = None,
) -> FitResult:
    """Block-coordinate descent over the signal and the rotation density.

    Starts from the uniform-prior EM solution (pass a previous fit as `init`
    to reuse one), then alternates EM sweeps under the current density with
    projected-gradient updates of the density coefficients; the objective
    never increases, so the final value is at most the uniform-prior EM
    objective on the same data.  Reports objective values and coefficients
    only; it makes no uniqueness claims.
    """
    if model.group not in ("so3", "so2"):
        raise ValueError("joint estimation needs a rotation or circle model")
    cfg = cfg or FitConfig()
    y = _data_matrix(data)
    rule = gp.haar_quadrature(
        model.group, cfg.resolution or gp.DEFAULT_RESOLUTION[model.group]
    )
    eng = MixtureEngine(model, rule)
    val_rule = gp.haar_quadrature(model.group, 2 * rule.resolution)
    basis = DensityBasis(model.group, band_limit, rule, val_rule)

    if init is None:
        init = em_fit(model, y, gp.Haar(model.group), sigma2, cfg, engine=eng)
    theta = init.theta_hat.copy()
    coef = np.zeros(len(basis.keys))
    trace = [float(-eng.logpdf(theta, sigma2, y).mean())]
    converged = False
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        theta_prev, coef_prev = theta.copy(), coef.copy()

        # density step at fixed signal
        objective, gradient = _b_objective_factory(eng, theta, sigma2, y, basis)
        fval = objective(coef)
        step = 1.0
        for _ in range(80):
            g = gradient(coef)
            cand = basis.project_feasible(coef - step * g, bound_b)
            fcand = objective(cand)
            decrease = float(g @ (coef - cand))
            if fcand <= fval - 1e-4 * decrease and fcand < fval:
                coef, fval = cand, fcand
                step = min(1.0, step * 2.0)
            else:
                step *= 0.5
                if step < 1e-12:
                    break
        rho = np.clip(basis.density(coef), 0.0, None)
        w = eng.rule.weights * rho
        dens_rule = QuadratureRule(
            rule.group, rule.nodes, w / w.sum(), rule.resolution
        )
        dens_eng = MixtureEngine(model, dens_rule)
        trace.append(float(-dens_eng.logpdf(theta, sigma2, y).mean()))

        # signal step at fixed density
        theta, sweep_trace, _, _ = _em_single(
            dens_eng, y, sigma2, theta, cfg.tol, cfg.em_sweep_iters
        )
        trace.append(sweep_trace[-1])

        change = max(
            np.linalg.norm(theta - theta_prev), np.linalg.norm(coef - coef_prev)
        )
        if change < cfg.tol:
            converged = True
            break
    return FitResult(
        theta_hat=theta,
        B_hat=basis.as_dict(coef),
        iters=outer,
        converged=converged,
        nll_trace=trace,
        config_echo={
            "estimator": "joint",
            "sigma2": sigma2,
            "band_limit": band_limit,
            "bound_b": bound_b,
            "tol": cfg.tol,
            "seed": cfg.seed,
            "resolution": rule.resolution,
            "em_objective": trace[0],
        },
    )

"""Experiment drivers behind the command-line interface.

Every command is a pure function of its configuration: all randomness flows
from explicit seeds, files are written atomically, and reruns produce
byte-identical delimited output.  Commands emit plot-ready CSV plus, when
figures are enabled, rendered images alongside.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import geometry as ge
from . import groups as gp
from . import inference as inf
from . import models as md

DEFAULT_SIGMA_GRID = (0.05, 0.1, 0.2, 0.25, 0.5, 1.0)

FIG5_CURVES = (
    ("blue-dashed", False, {"kind": "haar", "group": "so2"}),
    ("red-dashed", False, {"kind": "wrapped_normal", "mu": 0.0, "s2": 0.01}),
    ("blue-solid", True, {"kind": "haar", "group": "so2"}),
    ("red-solid", True, {"kind": "wrapped_normal", "mu": 0.0, "s2": 0.01}),
    ("green-solid", True, {"kind": "wrapped_normal", "mu": 0.0, "s2": 0.1}),
    ("pink-solid", True, {"kind": "wrapped_normal", "mu": 0.0, "s2": 0.5}),
    ("brown-solid", True, {"kind": "wrapped_normal", "mu": 0.0, "s2": 0.8}),
)


@dataclass
class ExperimentConfig:
    model: dict
    out_dir: str = "out"
    seed: int = 0
    n: int = 1000
    trials: int = 10
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    theta_star: object = "random-uniform"
    theta_seed: int = 7
    measure: dict = field(default_factory=lambda: {"kind": "haar", "group": "so2"})
    prior: dict = field(default_factory=lambda: {"kind": "haar", "group": "so2"})
    resolution: int | None = None
    cloud_resolution: int = 512
    restarts: int = 3
    tol: float = 1e-6
    max_iter: int = 500
    threads: int = 1
    figures: bool = True
    landscape: dict = field(default_factory=dict)
    population: dict = field(default_factory=dict)
    joint: dict = field(default_factory=dict)
    bias_s_values: tuple = (0.05, 0.1, 0.2, 0.5)

    def __post_init__(self):
        self.sigma_grid = tuple(float(s) for s in self.sigma_grid)
        if any(s <= 0 for s in self.sigma_grid):
            raise ValueError("noise grid must be strictly positive")
        if self.trials < 1 or self.n < 1:
            raise ValueError("need at least one trial and one observation")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "model" not in obj:
            raise ValueError("config needs a model descriptor")
        return cls(**obj)

    def build_model(self) -> md.ModelSpec:
        return md.model_from_descriptor(self.model)

    def truth_for_trial(self, model: md.ModelSpec, trial: int) -> np.ndarray:
        if isinstance(self.theta_star, str):
            if self.theta_star != "random-uniform":
                raise ValueError(f"unknown signal spec {self.theta_star!r}")
            rng = np.random.default_rng([self.theta_seed, trial])
            return rng.uniform(0.0, 1.0, size=model.d)
        theta = np.asarray(self.theta_star, dtype=float)
        if theta.shape != (model.d,):
            raise ValueError(f"signal must have length {model.d}")
        return theta

    def fit_config(self, seed_key) -> inf.FitConfig:
        return inf.FitConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            resolution=self.resolution,
            restarts=self.restarts,
            seed=_mix_seed(self.seed, seed_key),
        )

    def echo(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if isinstance(val, tuple):
                val = list(val)
            out[name] = val
        return out


def _mix_seed(root: int, key) -> int:
    blob = json.dumps([root, key], sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        obj = toml.loads(raw.decode())
    else:
        obj = json.loads(raw.decode())
    return ExperimentConfig.from_dict(obj)


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path: str, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    write_atomic(path, "\n".join(lines) + "\n")


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dataset_name(si: int, trial: int) -> str:
    return f"data_s{si:02d}_t{trial:03d}.csv"


def _map_jobs(fn, keys, threads: int):
    if threads <= 1:
        return [fn(k) for k in keys]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, keys))


# -- commands -----------------------------------------------------------------


def cmd_gen_data(config: ExperimentConfig) -> str:
    """Write one dataset file per (noise level, trial) plus a checksum manifest."""
    model = config.build_model()
    measure = gp.measure_from_json(config.measure)
    os.makedirs(config.out_dir, exist_ok=True)

    def one(key):
        si, trial = key
        sigma = config.sigma_grid[si]
        theta = config.truth_for_trial(model, trial)
        ds = md.generate_data(
            model, theta, measure, sigma, config.n,
            _mix_seed(config.seed, ["data", si, trial]),
        )
        path = os.path.join(config.out_dir, _dataset_name(si, trial))
        fd, tmp = tempfile.mkstemp(dir=config.out_dir, suffix=".tmp")
        os.close(fd)
        md.save_dataset(ds, tmp)
        os.replace(tmp, path)
        return path

    keys = [(si, t) for si in range(len(config.sigma_grid)) for t in range(config.trials)]
    paths = _map_jobs(one, keys, config.threads)
    manifest = {
        "config": config.echo(),
        "files": {os.path.basename(p): sha256_file(p) for p in sorted(paths)},
        "rows_per_file": config.n,
    }
    mpath = os.path.join(config.out_dir, "manifest.json")
    write_atomic(mpath, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def cmd_fit(config: ExperimentConfig, estimator: str = "em", data_dir: str | None = None) -> str:
    """Fit every dataset; write per-fit JSON and a summary CSV of orbit errors."""
    if estimator not in ("em", "joint"):
        raise ValueError(f"unknown estimator {estimator!r}")
    model = config.build_model()
    prior = gp.measure_from_json(config.prior)
    data_dir = data_dir or config.out_dir
    os.makedirs(config.out_dir, exist_ok=True)

    def one(key):
        si, trial = key
        path = os.path.join(data_dir, _dataset_name(si, trial))
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset missing: {path}")
        ds = md.load_dataset(path)
        cfg = config.fit_config(["fit", estimator, si, trial])
        if estimator == "em":
            fit = inf.em_fit(model, ds, prior, ds.sigma**2, cfg)
        else:
            jcfg = config.joint
            fit = inf.joint_mle(
                model, ds, ds.sigma**2, cfg,
                band_limit=int(jcfg.get("band_limit", 1)),
                bound_b=float(jcfg.get("bound_b", 2.0)),
            )
        err = math.nan
        if ds.theta_star is not None:
            err = ge.orbit_rel_error(
                model, fit.theta_hat, ds.theta_star, config.cloud_resolution
            )
        out = fit.to_json()
        out["orbit_rel_error"] = err
        out["sigma"] = ds.sigma
        out["trial"] = trial
        write_atomic(
            os.path.join(config.out_dir, f"fit_{estimator}_s{si:02d}_t{trial:03d}.json"),
            json.dumps(out, indent=2, sort_keys=True) + "\n",
        )
        return si, trial, err, fit.nll_trace[-1]

    keys = [(si, t) for si in range(len(config.sigma_grid)) for t in range(config.trials)]
    results = _map_jobs(one, keys, config.threads)
    rows = []
    for si, sigma in enumerate(config.sigma_grid):
        errs = np.array([r[2] for r in results if r[0] == si])
        rows.append(
            [sigma, float(errs.mean()), float(errs.std(ddof=1)) if len(errs) > 1 else 0.0, len(errs)]
        )
    out_csv = os.path.join(config.out_dir, f"fit_{estimator}_summary.csv")
    write_csv(out_csv, ["sigma", "mean_rel_error", "stddev", "trials"], rows)
    return out_csv


def _landscape_spec(config: ExperimentConfig, model: md.ModelSpec) -> dict:
    spec = dict(config.landscape)
    spec.setdefault("coords", [1, 2])
    spec.setdefault("lo", [-3.0, -3.0])
    spec.setdefault("hi", [3.0, 3.0])
    spec.setdefault("num", [41, 41])
    spec.setdefault("base_theta", [0.0] * model.d)
    if len(spec["coords"]) > 2:
        raise ValueError("landscape grids support at most two coordinates")
    return spec


def cmd_landscape(config: ExperimentConfig) -> str:
    """Population objective over a signal grid; records the argmin.

    With a uniform prior the objective is constant on group orbits, so on a
    two-dimensional frequency slice the minimum set is a circle and the
    recorded argmin is one representative of it (lowest scan index wins).
    """
    model = config.build_model()
    prior = gp.measure_from_json(config.prior)
    generating = gp.measure_from_json(config.measure)
    spec = _landscape_spec(config, model)
    pop = dict(config.population)
    cfg = inf.PopulationEvalConfig(
        mode=pop.get("mode", "mc"),
        n_outer=int(pop.get("n_outer", 10_000)),
        resolution=pop.get("resolution", config.resolution),
        outer_resolution=pop.get("outer_resolution"),
        gh_nodes=pop.get("gh_nodes"),
        seed=_mix_seed(config.seed, "landscape"),
    )
    sigma = config.sigma_grid[0]
    model_for_truth = config.truth_for_trial(model, 0)
    coords = spec["coords"]
    axes = [
        np.linspace(spec["lo"][k], spec["hi"][k], spec["num"][k])
        for k in range(len(coords))
    ]
    base = np.asarray(spec["base_theta"], dtype=float)

    rows = []
    best = None
    mesh = [(i, j) for i in range(len(axes[0])) for j in range(len(axes[1] if len(axes) > 1 else [0.0]))]

    def one(key):
        i, j = key
        theta = base.copy()
        theta[coords[0]] = axes[0][i]
        if len(coords) > 1:
            theta[coords[1]] = axes[1][j]
        res = inf.neg_loglik_population(
            model, theta, model_for_truth, prior, generating, sigma**2, cfg
        )
        return (i, j, res.value, res.stderr)

    results = _map_jobs(one, mesh, config.threads)
    for i, j, val, se in sorted(results):
        row = [axes[0][i]]
        if len(coords) > 1:
            row.append(axes[1][j])
        row.extend([val, se])
        rows.append(row)
        if best is None or val < best[0]:
            best = (val, row[: len(coords)])
    header = [f"theta_{c}" for c in coords] + ["nll", "mc_stderr"]
    out_csv = os.path.join(config.out_dir, "landscape.csv")
    write_csv(out_csv, header, rows)
    write_atomic(
        os.path.join(config.out_dir, "landscape_argmin.json"),
        json.dumps(
            {
                "argmin": [float(v) for v in best[1]],
                "value": best[0],
                "coords": coords,
                "grid": {"lo": spec["lo"], "hi": spec["hi"], "num": spec["num"]},
                "sigma": sigma,
                "mode": cfg.mode,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    if config.figures:
        from . import figures

        figures.render_landscape(out_csv, os.path.join(config.out_dir, "landscape.png"))
    return out_csv


def fig5_curve_jobs(config: ExperimentConfig):
    for label, projected, measure in FIG5_CURVES:
        for si in range(len(config.sigma_grid)):
            for trial in range(config.trials):
                yield label, projected, measure, si, trial


def cmd_fig5(config: ExperimentConfig) -> str:
    """Relative-error curves for the uniform-prior EM under seven data laws.

    Trials share signals, rotations (through quantile coupling), and noise
    across curves so the comparisons are paired.
    """
    L = int(config.model.get("L", 3))
    models = {False: md.model_mra(L, False), True: md.model_mra(L, True)}
    prior = gp.Haar("so2")
    resolution = config.resolution or 128

    def one(job):
        label, projected, measure_desc, si, trial = job
        model = models[projected]
        sigma = config.sigma_grid[si]
        theta = config.truth_for_trial(model, trial)
        rng = np.random.default_rng(_mix_seed(config.seed, ["fig5", si, trial]))
        uniforms = rng.random(config.n)
        eps = rng.standard_normal((config.n, 2 * L + 1))
        measure = gp.measure_from_json(measure_desc)
        params = inf._quantile_draws(measure, uniforms, rng)
        mats = md.projected_stack(model, params)
        y = np.einsum("nij,j->ni", mats, theta) + sigma * eps[:, : model.d_tilde]
        cfg = config.fit_config(["fig5", label, si, trial])
        cfg.resolution = resolution
        fit = inf.em_fit(model, y, prior, sigma**2, cfg)
        err = ge.orbit_rel_error(model, fit.theta_hat, theta, config.cloud_resolution)
        return label, si, trial, err

    results = _map_jobs(one, list(fig5_curve_jobs(config)), config.threads)
    rows = []
    for label, _, _ in FIG5_CURVES:
        for si, sigma in enumerate(config.sigma_grid):
            errs = np.array(
                [r[3] for r in results if r[0] == label and r[1] == si]
            )
            rows.append(
                [
                    label,
                    sigma,
                    float(errs.mean()),
                    float(errs.std(ddof=1)) if len(errs) > 1 else 0.0,
                ]
            )
    out_csv = os.path.join(config.out_dir, "error_curves.csv")
    write_csv(out_csv, ["curve", "sigma", "mean_rel_error", "stddev"], rows)
    if config.figures:
        from . import figures

        figures.render_curves(out_csv, os.path.join(config.out_dir, "error_curves.png"))
    return out_csv


def cmd_bias_metrics(config: ExperimentConfig) -> str:
    """Misspecified fits per noise level with orbit-geometry distances."""
    model = config.build_model()
    if not model.projected:
        raise ValueError("bias metrics need a projected model")
    measure = gp.measure_from_json(config.measure)
    prior = gp.measure_from_json(config.prior)
    theta_star = config.truth_for_trial(model, 0)
    res = config.cloud_resolution
    star_cloud = ge.orbit_cloud(model, theta_star, res)
    cell = star_cloud.max_spacing()

    def one(si):
        sigma = config.sigma_grid[si]
        ds = md.generate_data(
            model, theta_star, measure, sigma, config.n,
            _mix_seed(config.seed, ["bias", si]),
        )
        fit = inf.em_fit(
            model, ds, prior, sigma**2, config.fit_config(["bias-fit", si])
        )
        hat_cloud = ge.orbit_cloud(model, fit.theta_hat, res)
        one_sided = ge.hausdorff_one_sided(star_cloud, hat_cloud)
        full = max(one_sided, ge.hausdorff_one_sided(hat_cloud, star_cloud))
        ms = [
            ge.m_measure(s, theta_star, fit.theta_hat, model, res)
            for s in config.bias_s_values
        ]
        return [sigma, one_sided, full] + ms

    rows = _map_jobs(one, range(len(config.sigma_grid)), config.threads)
    header = ["sigma", "hausdorff_one_sided", "hausdorff"] + [
        f"m_at_{s:g}" for s in config.bias_s_values
    ]
    out_csv = os.path.join(config.out_dir, "bias_metrics.csv")
    write_csv(out_csv, header, rows)
    write_atomic(
        os.path.join(config.out_dir, "bias_metrics_meta.json"),
        json.dumps(
            {"grid_cell": cell, "cloud_resolution": res, "config": config.echo()},
            indent=2,
            sort_keys=True,
        )
        + "\n",
    )
    if config.figures:
        from . import figures

        figures.render_bias(out_csv, os.path.join(config.out_dir, "bias_metrics.png"))
    return out_csv


def cmd_orbit_export(config: ExperimentConfig) -> str:
    """Dump the projected orbit cloud of the configured signal to CSV."""
    model = config.build_model()
    theta = config.truth_for_trial(model, 0)
    cloud = ge.orbit_cloud(model, theta, config.cloud_resolution)
    out_csv = os.path.join(config.out_dir, "orbit.csv")
    os.makedirs(config.out_dir, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=config.out_dir, suffix=".tmp")
    os.close(fd)
    cloud.to_csv(tmp)
    os.replace(tmp, out_csv)
    if config.figures:
        from . import figures

        figures.render_orbit(out_csv, os.path.join(config.out_dir, "orbit.png"))
    return out_csv

"""Group parameterizations, representations, measures, and quadrature."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from orbitrec import groups as gp
from orbitrec import harmonics as hm


def rand_euler(rng):
    return hm.Euler(
        rng.uniform(0, 2 * np.pi),
        math.acos(rng.uniform(-1, 1)),
        rng.uniform(0, 2 * np.pi),
    )


# -- representations -----------------------------------------------------------


def test_rep_so2():
    assert np.allclose(gp.rep_so2(3, 0.0), np.eye(7))
    m = gp.rep_so2(1, np.pi)
    assert np.allclose(m, np.diag([1.0, -1.0, -1.0]), atol=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, b = rng.uniform(0, 2 * np.pi, 2)
        lhs = gp.rep_so2(4, a) @ gp.rep_so2(4, b)
        rhs = gp.rep_so2(4, (a + b) % (2 * np.pi))
        assert np.abs(lhs - rhs).max() < 1e-12


def test_rot3_from_axis_angle():
    assert np.allclose(gp.rot3_from_axis_angle(gp.AxisAngle(0.0, 1.0, 2.0)), np.eye(3))
    z_quarter = gp.rot3_from_axis_angle(gp.AxisAngle(np.pi / 2, 0.0, 0.0))
    assert np.allclose(z_quarter, hm.rot3_z(np.pi / 2), atol=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = gp.AxisAngle(
            rng.uniform(0, 2 * np.pi),
            math.acos(rng.uniform(-1, 1)),
            rng.uniform(0, 2 * np.pi),
        )
        r = gp.rot3_from_axis_angle(p)
        assert np.abs(r.T @ r - np.eye(3)).max() < 1e-12
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
        # round trip through Euler angles
        back = hm.rot3_from_euler(gp.euler_from_axis_angle(p))
        assert np.abs(back - r).max() < 1e-9


def test_rep_spherical():
    rng = np.random.default_rng(2)
    assert np.allclose(gp.rep_spherical(2, hm.Euler(0, 0, 0)), np.eye(9), atol=1e-12)
    for _ in range(5):
        g1, g2 = rand_euler(rng), rand_euler(rng)
        d1 = gp.rep_spherical(2, g1)
        assert np.abs(d1.T @ d1 - np.eye(9)).max() < 1e-10
        d3 = gp.rep_spherical(2, hm.compose_euler(g1, g2))
        assert np.abs(d3 - d1 @ gp.rep_spherical(2, g2)).max() < 1e-9


def test_rep_cryo():
    rng = np.random.default_rng(3)
    s = (2, 2)
    assert np.allclose(gp.rep_cryo(1, s, hm.Euler(0, 0, 0)), np.eye(8), atol=1e-12)
    g = rand_euler(rng)
    m = gp.rep_cryo(1, s, g)
    assert np.abs(m.T @ m - np.eye(8)).max() < 1e-10
    # the frequency-1 blocks for both radial shells coincide
    assert np.abs(m[2:5, 2:5] - m[5:8, 5:8]).max() < 1e-12


def test_representation_determinants():
    rng = np.random.default_rng(4)
    for make, g in (
        (lambda q: gp.rep_so2(3, q), rng.uniform(0, 2 * np.pi)),
        (lambda q: gp.rep_spherical(2, q), rand_euler(rng)),
        (lambda q: gp.rep_cryo(2, (1, 1, 1), q), rand_euler(rng)),
    ):
        m = make(g)
        assert abs(np.linalg.det(m) - 1.0) < 1e-8


# -- quadrature ----------------------------------------------------------------


def test_haar_quadrature_so2():
    rule = gp.haar_quadrature("so2", 8)
    angles = np.asarray(rule.nodes)
    assert abs(np.sum(rule.weights * np.cos(angles))) < 1e-14
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_haar_quadrature_so3_moments():
    rule = gp.haar_quadrature("so3", 6)
    al, be, ga = gp._euler_arrays(rule.nodes)
    d1 = hm.wigner_D_real_stack(1, al, be, ga)
    assert np.abs(np.tensordot(rule.weights, d1, axes=(0, 0))).max() < 1e-8
    second = float(np.sum(rule.weights * d1[:, 1, 1] ** 2))
    assert second == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_haar_quadrature_certificate_failure():
    with pytest.raises(gp.CertificateError):
        gp.haar_quadrature("so2", 4, l_check=6)


def test_quadrature_weight_validation():
    with pytest.raises(ValueError):
        gp.QuadratureRule("so2", [0.0, 1.0], np.array([0.7, 0.7]), 2)
    with pytest.raises(ValueError):
        gp.QuadratureRule("so2", [0.0, 1.0], np.array([1.5, -0.5]), 2)


# -- measures ------------------------------------------------------------------


def test_measure_quadrature_haar_passthrough():
    rule = gp.measure_quadrature(gp.Haar("so2"), 16)
    assert np.allclose(rule.weights, 1.0 / 16)


def test_measure_quadrature_wrapped_normal_mass():
    rule = gp.measure_quadrature(gp.WrappedNormal(0.0, 0.01), 4096)
    angles = np.asarray(rule.nodes)
    dist = np.minimum(angles, 2 * np.pi - angles)
    # numeric normal CDF oracle: mass within +-0.5 is essentially 1
    within = rule.weights[dist < 0.5].sum()
    oracle = norm.cdf(5.0) - norm.cdf(-5.0)
    assert within >= 0.99
    assert within == pytest.approx(oracle, abs=1e-3)
    # and the concentration scale matches the CDF at half a standard deviation
    within_half_sd = rule.weights[dist < 0.05].sum()
    assert within_half_sd == pytest.approx(norm.cdf(0.5) - norm.cdf(-0.5), abs=0.02)


def test_measure_quadrature_uniform_density_is_haar():
    c = gp.WignerCoeffs(1, True, {(0, 0): 1.0})
    rule = gp.measure_quadrature(gp.WignerDensity(c), 4)
    base = gp.haar_quadrature("so3", 4)
    assert np.abs(rule.weights - base.weights).max() < 1e-14


def test_measure_quadrature_negative_density_error():
    c = gp.WignerCoeffs(1, True, {(0, 0): 1.0, (1, 0): 1.6})
    with pytest.raises(ValueError):
        gp.measure_quadrature(gp.WignerDensity(c), 4)


def test_wrapped_normal_pdf():
    val, _ = quad(lambda a: gp.wrapped_normal_pdf(a, 0.3, 0.5), 0, 2 * np.pi, limit=200)
    assert val == pytest.approx(1.0, abs=1e-10)
    # symmetry about the mean
    assert gp.wrapped_normal_pdf(1.0 + 0.7, 1.0, 0.2) == pytest.approx(
        gp.wrapped_normal_pdf(1.0 - 0.7, 1.0, 0.2), abs=1e-14
    )
    # wide wrapping flattens to uniform; theta-series oracle gives the exact
    # gap, largest at the mean
    for s2 in (10.0, 25.0):
        dev = abs(gp.wrapped_normal_pdf(1.0, 1.0, s2) - 1 / (2 * np.pi))
        series_gap = (
            math.exp(-s2 / 2.0) + math.exp(-2.0 * s2) + math.exp(-4.5 * s2)
        ) / math.pi
        assert dev == pytest.approx(series_gap, rel=1e-9)
    xs = np.linspace(0, 2 * np.pi, 101)
    assert np.abs(gp.wrapped_normal_pdf(xs, 1.0, 25.0) - 1 / (2 * np.pi)).max() < 1e-4


def test_wigner_density_eval():
    rng = np.random.default_rng(5)
    c0 = gp.WignerCoeffs(2, True, {(0, 0): 1.0})
    assert gp.wigner_density_eval(c0, rand_euler(rng)) == pytest.approx(1.0)
    c = gp.WignerCoeffs(1, True, {(0, 0): 1.0, (1, 0): 0.9})
    # invariance to in-plane rotations
    g = rand_euler(rng)
    for alpha in rng.uniform(0, 2 * np.pi, 5):
        gz = hm.euler_from_rot3(
            hm.rot3_from_euler(g) @ hm.rot3_from_euler(hm.Euler(0.0, 0.0, alpha))
        )
        assert gp.wigner_density_eval(c, gz) == pytest.approx(
            gp.wigner_density_eval(c, g), abs=1e-10
        )
    # unit mass against the uniform rule
    rule = gp.haar_quadrature("so3", 6)
    dens = gp.wigner_density_at(c, rule.nodes)
    assert float(np.sum(rule.weights * dens)) == pytest.approx(1.0, abs=1e-6)


def test_project_to_inplane():
    c = gp.WignerCoeffs(1, True, {(0, 0): 1.0, (1, 1): 0.4})
    out, dropped = gp.project_to_inplane(c)
    assert out is c and dropped == 0.0

    # averaging a generic density over in-plane rotations kills v != 0 modes
    rng = np.random.default_rng(6)
    full = {(0, 0, 0): 1.0}
    for p in (1, 2):
        for u in range(-p, p + 1):
            for v in range(-p, p + 1):
                full[(p, u, v)] = 0.2 * rng.normal()
    coeffs = gp.WignerCoeffs(2, False, full, bound_b=3.0)
    rule = gp.haar_quadrature("so3", 8)
    n_inplane = 32
    alphas = 2 * np.pi * np.arange(n_inplane) / n_inplane
    avg = np.zeros(len(rule.nodes))
    for a in alphas:
        za = hm.rot3_from_euler(hm.Euler(0.0, 0.0, a))
        shifted = [
            hm.euler_from_rot3(hm.rot3_from_euler(gp.as_euler(g)) @ za)
            for g in rule.nodes
        ]
        avg += gp.wigner_density_at(coeffs, shifted)
    avg /= n_inplane
    al, be, ga = gp._euler_arrays(rule.nodes)
    for p in (1, 2):
        dp = hm.wigner_D_real_stack(p, al, be, ga)
        for u in range(-p, p + 1):
            for v in range(-p, p + 1):
                coef = (2 * p + 1) * float(
                    np.sum(rule.weights * avg * dp[:, u + p, v + p])
                )
                if v != 0:
                    assert abs(coef) < 1e-8
    inplane, dropped = gp.project_to_inplane(coeffs)
    assert inplane.inplane
    assert dropped > 0.0
    # drop again: no mass left
    again, zero = gp.project_to_inplane(inplane)
    assert zero == 0.0


def test_wigner_coeffs_validation():
    with pytest.raises(ValueError):
        gp.WignerCoeffs(1, True, {(0, 0): 0.9})
    with pytest.raises(ValueError):
        gp.WignerCoeffs(1, True, {(0, 0): 1.0, (2, 0): 0.1})
    with pytest.raises(ValueError):
        gp.WignerCoeffs(1, True, {(0, 0): 1.0, (1, 0): 5.0}, bound_b=2.0)


# -- sampling ------------------------------------------------------------------


def test_sample_bernoulli_degenerate():
    draws = gp.sample_measure(gp.Bernoulli(1.0), 50, 0)
    assert all(d == 1 for d in draws)


def test_sample_wrapped_normal_mean():
    draws = np.asarray(gp.sample_measure(gp.WrappedNormal(0.0, 0.01), 100_000, 1))
    mean = np.angle(np.mean(np.exp(1j * draws)))
    assert abs(mean) < 0.01


def test_sample_haar_so3_mean():
    n = 20_000
    draws = gp.sample_measure(gp.Haar("so3"), n, 2)
    al, be, ga = gp._euler_arrays(draws)
    d1 = hm.wigner_D_real_stack(1, al, be, ga)
    assert np.abs(d1.mean(axis=0)).max() < 3.0 / math.sqrt(n) * 2.0


def test_sample_determinism():
    a = gp.sample_measure(gp.Haar("so3"), 10, 42)
    b = gp.sample_measure(gp.Haar("so3"), 10, 42)
    assert a == b


def test_sample_wigner_density_statistics():
    c = gp.WignerCoeffs(1, True, {(0, 0): 1.0, (1, 0): 0.9})
    draws = gp.sample_measure(gp.WignerDensity(c), 4000, 3)
    al, be, ga = gp._euler_arrays(draws)
    # E cos(beta) under 1 + 0.9 cos(beta) is 0.9 / 3
    assert np.mean(np.cos(be)) == pytest.approx(0.3, abs=0.04)


# -- serialization -------------------------------------------------------------


def test_measure_json_round_trip():
    c = gp.WignerCoeffs(2, True, {(0, 0): 1.0, (1, 1): -0.5, (2, 0): 0.25})
    measures = [
        gp.Haar("so3"),
        gp.Bernoulli(0.25),
        gp.WrappedNormal(0.5, 0.01),
        gp.Discrete("so2", (0.0, 2.0), (0.3, 0.7)),
        gp.WignerDensity(c),
    ]
    for m in measures:
        back = gp.measure_from_json(gp.measure_to_json(m))
        assert back == m


def test_param_distance():
    assert gp.param_distance("so2", 0.1, 2 * np.pi - 0.1) == pytest.approx(0.2)
    assert gp.param_distance("z2", 1, -1) == 2.0
    g = hm.Euler(0.3, 0.9, 1.2)
    assert gp.param_distance("so3", g, g) < 1e-12

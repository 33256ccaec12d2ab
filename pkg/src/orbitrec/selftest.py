"""Built-in verification suites for the special-function and model layers.

Each suite returns (name, passed, detail) rows; the CLI renders them as a
table and exits nonzero on any failure.  Thresholds mirror the tightest
tolerances the library promises elsewhere.
"""

from __future__ import annotations

import math

import numpy as np

from . import groups as gp
from . import harmonics as hm
from . import models as md


def _rand_euler(rng) -> hm.Euler:
    return hm.Euler(
        rng.uniform(0.0, gp.TWO_PI),
        math.acos(rng.uniform(-1.0, 1.0)),
        rng.uniform(0.0, gp.TWO_PI),
    )


def harmonics_suite(seed: int = 0, n_random: int = 100) -> list[tuple]:
    rng = np.random.default_rng(seed)
    rows = []

    worst_u = worst_o = 0.0
    for _ in range(n_random):
        g = _rand_euler(rng)
        for l in range(5):
            dc = hm.wigner_D_complex(l, g)
            worst_u = max(
                worst_u, np.abs(dc.conj().T @ dc - np.eye(2 * l + 1)).max()
            )
            dr = hm.wigner_D_real(l, g)
            worst_o = max(worst_o, np.abs(dr.T @ dr - np.eye(2 * l + 1)).max())
    rows.append(("unitarity (complex)", worst_u < 1e-10, f"max residual {worst_u:.2e}"))
    rows.append(("orthogonality (real)", worst_o < 1e-10, f"max residual {worst_o:.2e}"))

    worst = 0.0
    for _ in range(20):
        g1, g2 = _rand_euler(rng), _rand_euler(rng)
        g3 = hm.compose_euler(g1, g2)
        for l in range(4):
            err = np.abs(
                hm.wigner_D_complex(l, g3)
                - hm.wigner_D_complex(l, g1) @ hm.wigner_D_complex(l, g2)
            ).max()
            worst = max(worst, err)
    rows.append(("homomorphism", worst < 1e-9, f"max residual {worst:.2e}"))

    worst = 0.0
    for _ in range(20):
        g = _rand_euler(rng)
        p1, p2 = math.acos(rng.uniform(-1, 1)), rng.uniform(0, gp.TWO_PI)
        for l in range(4):
            for m in range(-l, l + 1):
                err = abs(
                    np.conj(hm.sph_harm_complex(l, m, p1, p2))
                    - (-1.0) ** m * hm.sph_harm_complex(l, -m, p1, p2)
                )
                worst = max(worst, err)
    rows.append(("conjugation symmetry", worst < 1e-12, f"max residual {worst:.2e}"))

    worst = 0.0
    for l in range(5):
        q = hm.q_matrix(l)
        worst = max(worst, np.abs(q @ q.conj().T - np.eye(2 * l + 1)).max())
    rows.append(("basis change unitary", worst < 1e-12, f"max residual {worst:.2e}"))

    rule = gp.haar_quadrature("so3", 8)
    al, be, ga = gp._euler_arrays(rule.nodes)
    worst_mean = worst_orth = worst_orth_c = 0.0
    stacks_r = {l: hm.wigner_D_real_stack(l, al, be, ga) for l in range(4)}
    stacks_c = {l: hm.wigner_D_complex_stack(l, al, be, ga) for l in range(4)}
    w = rule.weights
    for l in range(1, 4):
        worst_mean = max(
            worst_mean, np.abs(np.tensordot(w, stacks_r[l], axes=(0, 0))).max()
        )
    for l in range(4):
        for lp in range(4):
            second = np.einsum(
                "n,nab,ncd->abcd", w, stacks_r[l], stacks_r[lp]
            )
            expect = np.zeros_like(second)
            if l == lp:
                for a in range(2 * l + 1):
                    for b in range(2 * l + 1):
                        expect[a, b, a, b] = 1.0 / (2 * l + 1)
            worst_orth = max(worst_orth, np.abs(second - expect).max())
            second_c = np.einsum(
                "n,nab,ncd->abcd", w, stacks_c[l], stacks_c[lp]
            )
            expect_c = np.zeros_like(second_c)
            if l == lp:
                for qi in range(-l, l + 1):
                    for mi in range(-l, l + 1):
                        expect_c[qi + l, mi + l, -qi + l, -mi + l] = (
                            -1.0
                        ) ** (mi + qi) / (2 * l + 1)
            worst_orth_c = max(worst_orth_c, np.abs(second_c - expect_c).max())
    rows.append(("Haar mean", worst_mean < 1e-6, f"max residual {worst_mean:.2e}"))
    rows.append(
        ("Haar orthogonality (real)", worst_orth < 1e-6, f"max residual {worst_orth:.2e}")
    )
    rows.append(
        (
            "Haar orthogonality (complex)",
            worst_orth_c < 1e-6,
            f"max residual {worst_orth_c:.2e}",
        )
    )

    # third-order identity against the coupling closed form
    worst = 0.0
    cg = hm.CGTable(2)
    for l in range(3):
        for lp in range(3):
            for ldp in range(3):
                for _ in range(4):
                    q, m = rng.integers(-l, l + 1), rng.integers(-l, l + 1)
                    qp, mp = rng.integers(-lp, lp + 1), rng.integers(-lp, lp + 1)
                    qdp, mdp = rng.integers(-ldp, ldp + 1), rng.integers(
                        -ldp, ldp + 1
                    )
                    triple = float(
                        np.real(
                            np.sum(
                                w
                                * stacks_c[l][:, q + l, m + l]
                                * stacks_c[lp][:, qp + lp, mp + lp]
                                * stacks_c[ldp][:, qdp + ldp, mdp + ldp]
                            )
                        )
                    )
                    expect = 0.0
                    if (
                        q + qp == -qdp
                        and m + mp == -mdp
                        and abs(l - lp) <= ldp <= l + lp
                    ):
                        expect = (
                            (-1.0) ** (mdp + qdp)
                            / (2 * ldp + 1)
                            * cg(l, lp, ldp, q, qp, -qdp)
                            * cg(l, lp, ldp, m, mp, -mdp)
                        )
                    worst = max(worst, abs(triple - expect))
    rows.append(("third-order identity", worst < 1e-6, f"max residual {worst:.2e}"))

    # product identities, complex and real, pointwise
    worst_c = worst_r = 0.0
    for _ in range(6):
        g = _rand_euler(rng)
        dc = {l: hm.wigner_D_complex(l, g) for l in range(5)}
        dr = {l: hm.wigner_D_real(l, g) for l in range(5)}
        for l in (1, 2):
            for lp in (1, 2):
                q, m = rng.integers(-l, l + 1), rng.integers(-l, l + 1)
                qp, mp = rng.integers(-lp, lp + 1), rng.integers(-lp, lp + 1)
                lhs = dc[l][q + l, m + l] * dc[lp][qp + lp, mp + lp]
                rhs = 0.0
                for ldp in range(abs(l - lp), l + lp + 1):
                    if abs(q + qp) <= ldp and abs(m + mp) <= ldp:
                        rhs += (
                            hm.clebsch_gordan(l, lp, ldp, q, qp, q + qp)
                            * hm.clebsch_gordan(l, lp, ldp, m, mp, m + mp)
                            * dc[ldp][q + qp + ldp, m + mp + ldp]
                        )
                worst_c = max(worst_c, abs(lhs - rhs))
                lhs = dr[l][q + l, m + l] * dr[lp][qp + lp, mp + lp]
                rhs = 0.0
                for ldp in range(abs(l - lp), l + lp + 1):
                    for qdp in hm.real_coupled_orders(q, qp):
                        if abs(qdp) > ldp:
                            continue
                        for mdp in hm.real_coupled_orders(m, mp):
                            if abs(mdp) > ldp:
                                continue
                            rhs += (
                                hm.real_clebsch_gordan(l, lp, ldp, q, qp, qdp)
                                * np.conj(
                                    hm.real_clebsch_gordan(l, lp, ldp, m, mp, mdp)
                                )
                                * dr[ldp][qdp + ldp, mdp + ldp]
                            )
                worst_r = max(worst_r, abs(lhs - rhs))
    rows.append(("product identity (complex)", worst_c < 1e-8, f"max residual {worst_c:.2e}"))
    rows.append(("product identity (real)", worst_r < 1e-8, f"max residual {worst_r:.2e}"))
    return rows


def groups_suite(seed: int = 0) -> list[tuple]:
    rng = np.random.default_rng(seed)
    rows = []
    worst_orth = worst_det = 0.0
    for model in (
        md.model_mra(3),
        md.model_spherical(2),
        md.model_cryo(1, (2, 2)),
    ):
        params = gp.sample_measure(gp.Haar(model.group), 25, rng)
        reps = model.rep_stack(params)
        eye = np.eye(model.d)
        for r in reps:
            worst_orth = max(worst_orth, np.abs(r.T @ r - eye).max())
            worst_det = max(worst_det, abs(np.linalg.det(r) - 1.0))
    rows.append(("representations orthogonal", worst_orth < 1e-10, f"{worst_orth:.2e}"))
    rows.append(("representations special", worst_det < 1e-8, f"{worst_det:.2e}"))

    worst = 0.0
    for _ in range(50):
        p = gp.AxisAngle(
            rng.uniform(0, gp.TWO_PI),
            math.acos(rng.uniform(-1, 1)),
            rng.uniform(0, gp.TWO_PI),
        )
        r = gp.rot3_from_axis_angle(p)
        worst = max(
            worst, np.abs(hm.rot3_from_euler(gp.euler_from_axis_angle(p)) - r).max()
        )
    rows.append(("axis-angle round trip", worst < 1e-9, f"{worst:.2e}"))

    try:
        gp.haar_quadrature("so2", 64)
        gp.haar_quadrature("so3", 6)
        rows.append(("quadrature certificates", True, "uniform rules certified"))
    except gp.CertificateError as exc:
        rows.append(("quadrature certificates", False, str(exc)))
    return rows


def cryo_suite() -> list[tuple]:
    rows = []
    cp = md.cryo_projection(2, (2, 2, 2))
    resid = np.abs((cp.q_img.conj() @ cp.complex_slice @ cp.q_vol.T).imag).max()
    rows.append(("projection real", resid < 1e-12, f"imag residual {resid:.2e}"))
    rank = np.linalg.matrix_rank(cp.real)
    rows.append(
        ("projection surjective", rank == cp.real.shape[0], f"rank {rank}/{cp.real.shape[0]}")
    )
    ok = True
    for m in range(4):
        dd = float(np.prod(np.arange(1, 2 * m, 2))) if m > 0 else 1.0
        c = md.slice_constant(m, m)
        expect = (-1.0) ** m * math.sqrt(
            (2 * m + 1) / 2.0 * math.factorial(0) / math.factorial(2 * m)
        ) * dd
        ok = ok and abs(c - expect) < 1e-12 and abs(c) > 1e-12
    rows.append(("equatorial diagonal nonzero", ok, "double-factorial identity"))

    rng = np.random.default_rng(3)
    worst = 0.0
    vol_idx = md.volume_index(2, (2, 2, 2))
    pos = {key: i for i, key in enumerate(vol_idx)}
    img_idx = md.image_index(2, 2)
    for _ in range(20):
        u = np.zeros(len(vol_idx), dtype=complex)
        for l, s, m in vol_idx:
            if m < 0:
                z = rng.normal() + 1j * rng.normal()
                u[pos[(l, s, m)]] = z
                u[pos[(l, s, -m)]] = (-1.0) ** (l + m) * np.conj(z)
            elif m == 0:
                u[pos[(l, s, 0)]] = rng.normal() * 1j**l
        theta = hm._realify((cp.q_vol.conj() @ u)[None, :], "volume coefficients")[0]
        ut = np.zeros(len(img_idx), dtype=complex)
        for i, (s, m) in enumerate(img_idx):
            for l in range(abs(m), 3):
                ut[i] += md.slice_constant(l, m) * u[pos[(l, s, m)]]
        theta_t = hm._realify((cp.q_img.conj() @ ut)[None, :], "image coefficients")[0]
        worst = max(worst, np.abs(cp.real @ theta - theta_t).max())
    rows.append(("slice coefficient relation", worst < 1e-10, f"{worst:.2e}"))
    return rows


def tail_bound_suite(seed: int = 0, n: int = 200_000) -> list[tuple]:
    d, t = 5, 5.0
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, d))
    freq = float((np.sum(z**2, axis=1) >= 5.0 * t).mean())
    bound = math.exp(-t)
    stderr = math.sqrt(max(freq, 1.0 / n) * (1.0 - min(freq, 1.0)) / n)
    ok = freq - bound <= 3.0 * stderr
    return [
        (
            "Gaussian norm tail bound",
            ok,
            f"freq {freq:.2e} vs bound {bound:.2e} (3se {3*stderr:.2e})",
        )
    ]


def run_all(seed: int = 0) -> list[tuple]:
    rows = []
    for name, suite in (
        ("harmonics", harmonics_suite),
        ("groups", groups_suite),
        ("cryo projection", cryo_suite),
        ("tail bound", tail_bound_suite),
    ):
        for row in suite(seed) if suite is not cryo_suite else suite():
            rows.append((f"{name}: {row[0]}", row[1], row[2]))
    return rows


def render(rows: list[tuple]) -> str:
    width = max(len(r[0]) for r in rows) + 2
    lines = []
    for name, ok, detail in rows:
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name:<{width}} {detail}")
    n_fail = sum(1 for r in rows if not r[1])
    lines.append(
        f"{len(rows) - n_fail}/{len(rows)} checks passed"
        + (f", {n_fail} FAILED" if n_fail else "")
    )
    return "\n".join(lines)

"""The fourteen acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, echoed in the terminal summary.
"""
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import j0

from conftest import record_acceptance
from ergomix.grid import GridDensity, grid_from_function, half_nodes, seed_density, unit_nodes
from ergomix.laminar import (build_laminar, check_partition_comparability, check_v_ode,
                             estimate_distortion)
from ergomix.limits import (birkhoff_distribution, build_hitting_partition,
                            characteristic_target, continued_fraction, farey_itinerary,
                            hitting_time, itinerary_from_digits, residue_observable,
                            simulate_residue_distribution)
from ergomix.maps import build_builtin, verify_invariant_density
from ergomix.mixing import (monte_carlo_duality, run_ggm_counterexample, run_glm2, run_llm,
                            slicing_decomposition)
from ergomix.observables import estimate_av, sin_phi
from ergomix.transfer import TransferOperator, apply_transfer, iterate_transfer

pytestmark = pytest.mark.acceptance
SEED = 20180901
UNIT = [("farey", {}), ("t_alpha", {"alpha": 0.3}), ("t_alpha", {"alpha": 0.7}),
        ("pm_quadratic", {})]
ALL = UNIT + [("pm_halfline", {})]


def _label(name, params):
    return name + "".join(f"({v})" for v in params.values())


def test_criterion_01_invariant_density():
    details, ok = [], True
    for name, params in ALL:
        m = build_builtin(name, **params)
        t0 = time.perf_counter()
        res = verify_invariant_density(m, 4096)
        dt = time.perf_counter() - t0
        tol = 1e-10 if m.kind == "unit_interval" else 1e-8
        ok &= res <= tol and dt < 1.0
        details.append(f"{_label(name, params)} {res:.1e} ({dt:.2f}s)")
    record_acceptance(1, ok, "; ".join(details))
    assert ok


def test_criterion_02_mass_conservation():
    rng = np.random.default_rng(SEED)
    worst_one, worst_drift = 0.0, 0.0
    for name, params in ALL:
        m = build_builtin(name, **params)
        nodes = unit_nodes() if m.kind == "unit_interval" else half_nodes()
        worst_one = max(worst_one, float(np.max(np.abs(
            TransferOperator(m, nodes).apply_array(np.ones_like(nodes)) - 1.0))))
        for _ in range(2):
            c = rng.uniform(0.1, 1.0, 3)
            if m.kind == "unit_interval":
                fn = lambda x, c=c: c[0] + c[1] * x + c[2] * np.sqrt(x)  # noqa: E731
            else:
                fn = lambda s, c=c: c[0] * np.exp(-s) + c[1] * np.exp(-2 * s) + c[2] * np.exp(-s / 2)  # noqa: E731,E501
            g = grid_from_function(m, fn)
            _, rep = iterate_transfer(m, g, 200, track_shape=False)
            worst_drift = max(worst_drift, max(rep.mass_drift))
    ok = worst_one <= 1e-10 and worst_drift <= 1e-5
    record_acceptance(2, ok, f"|P1 - 1| = {worst_one:.1e}, worst per-step mass drift {worst_drift:.1e}")
    assert ok


def test_criterion_03_farey_oracle():
    m = build_builtin("farey")
    t0 = time.perf_counter()
    g = grid_from_function(m, lambda x: x, normalize=False)
    pg = apply_transfer(m, g)
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(pg.values - 2 * g.nodes / (1 + g.nodes) ** 2)))
    ok = err <= 1e-9 and dt < 1.0
    record_acceptance(3, ok, f"max error {err:.1e} ({dt:.2f}s)")
    assert ok


def test_criterion_04_persistent_monotonicity():
    t0 = time.perf_counter()
    details, ok = [], True
    for name, params in ALL:
        m = build_builtin(name, **params)
        _, rep = iterate_transfer(m, seed_density(m), 50, dd_tol=1e-8)
        good = rep.monotone_up_to == 50 and (m.kind != "unit_interval" or rep.concave_up_to == 50)
        ok &= good
        details.append(f"{_label(name, params)} mono {rep.monotone_up_to} conc {rep.concave_up_to}")
    dt = time.perf_counter() - t0
    ok &= dt < 30
    record_acceptance(4, ok, "; ".join(details) + f" ({dt:.1f}s)")
    assert ok


def test_criterion_05_glm2_trend():
    t0 = time.perf_counter()
    details, ok = [], True
    for name, params in [("farey", {}), ("t_alpha", {"alpha": 0.3}), ("pm_halfline", {})]:
        m = build_builtin(name, **params)
        observables = [sin_phi(m)]
        if m.kind == "unit_interval":
            observables.append(residue_observable(3, build_hitting_partition(m, 2 ** 16)))
        seeds = ["linear", "quadratic"] if m.kind == "unit_interval" else ["exp", "exp2"]
        for F in observables:
            for sd in seeds:
                s = run_glm2(m, F, seed_density(m, sd), 200)
                r1, r200 = s.residual_at(1), s.residual_at(200)
                good = r200 <= 0.05 and r200 <= r1 / 4
                ok &= good
                details.append(f"{_label(name, params)}/{F.name}/{sd} r200={r200:.3f} r1={r1:.3f}")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    record_acceptance(5, ok, "; ".join(details) + f" ({dt:.0f}s)")
    assert ok


def test_criterion_06_zero_type():
    m = build_builtin("farey")
    s = run_llm(m, 0.5, seed_density(m), 200)
    ratio = float(s.c_n[200] / s.c_n[0])
    ok = ratio <= 0.1
    record_acceptance(6, ok, f"c_200/c_0 = {s.c_n[200]:.4f}/{s.c_n[0]:.4f} = {ratio:.3f} (target <= 0.1)")
    assert ok


def test_criterion_07_ggm_failure():
    m = build_builtin("farey")
    rows = run_ggm_counterexample(m, sin_phi(m), [1, 5, 20])
    ok = all(abs(r.value - 0.5) <= 0.03 for r in rows) and rows[0].av_f_squared == 0.0
    record_acceptance(7, ok, ", ".join(f"n={r.n}: {r.value:.4f}" for r in rows) + "; Av(F)^2 = 0")
    assert ok


def test_criterion_08_duality():
    details, ok = [], True
    for name, params in ALL:
        m = build_builtin(name, **params)
        rows = monte_carlo_duality(m, sin_phi(m), seed_density(m), 30, 100000, SEED,
                                   f_of_log=np.sin)
        zmax = max(r.z for r in rows)
        ok &= zmax <= 3.0
        details.append(f"{_label(name, params)} max z {zmax:.2f}")
    record_acceptance(8, ok, "; ".join(details))
    assert ok


def test_criterion_09_hitting_residues():
    m = build_builtin("farey")
    t0 = time.perf_counter()
    dist = simulate_residue_distribution(m, seed_density(m), 3, 1000, 100000, SEED)
    dt = time.perf_counter() - t0
    tv = dist.tv_to_uniform()
    est = estimate_av(m, residue_observable(3, build_hitting_partition(m, 2 ** 21)))
    av = float(np.real(est.extrapolated))
    ok = tv <= 0.02 and abs(av - 1.0) <= 0.05 and dt < 120
    record_acceptance(9, ok, f"TV {tv:.4f} (target <= 0.02), Av(H_3) {av:.3f} (1 +- 0.05), "
                             f"pmf {np.round(dist.pmf, 4).tolist()} ({dt:.0f}s)")
    assert ok


def test_criterion_10_farey_identities():
    m = build_builtin("farey")
    P = build_hitting_partition(m, 10 ** 4)
    k = np.arange(10 ** 4 + 2)
    beta_err = float(np.max(np.abs(P.beta[1:] - 1.0 / (k[1:] + 1))))
    r_err = float(np.max(np.abs(P.r - np.log((k[:-1] + 2) / (k[:-1] + 1)))))
    rng = np.random.default_rng(SEED)
    xs = rng.random(10 ** 4)
    xs = xs[xs > 0]
    hits_equal = all(hitting_time(m, x) == hitting_time(m, x, accelerate=False) for x in xs)
    symbols_equal, checked = True, 0
    while checked < 1000:
        q = int(rng.integers(2 ** 62)) << 200 | int(rng.integers(2 ** 62))
        p = int(rng.integers(1, 2 ** 62)) * q // 2 ** 62
        if not 0 < p < q:
            continue
        x = Fraction(p, q)
        digits = continued_fraction(x, 10 ** 4)
        if sum(digits[:-1]) < 100:
            continue
        symbols_equal &= farey_itinerary(x, 100) == itinerary_from_digits(digits, 100)
        checked += 1
    ok = beta_err <= 1e-12 and r_err <= 1e-10 and hits_equal and symbols_equal
    record_acceptance(10, ok, f"beta err {beta_err:.1e}, r err {r_err:.1e}, hitting times equal "
                              f"{hits_equal} ({len(xs)} pts), itineraries equal {symbols_equal}")
    assert ok


def test_criterion_11_birkhoff():
    m = build_builtin("farey")
    F = sin_phi(m)
    thetas = np.linspace(-5, 5, 41)
    oracle = float(np.max(np.abs(characteristic_target(m, F, thetas) - j0(thetas))))
    t0 = time.perf_counter()
    errs = {}
    for ks in (1, 10, "sqrt"):
        tab = birkhoff_distribution(m, F, ks, 500, seed_density(m), 100000, thetas, SEED,
                                    target=j0(thetas), f_of_log=np.sin)
        errs[ks] = tab.sup_error
    dt = time.perf_counter() - t0
    ok = oracle <= 0.02 and all(e <= 0.05 for e in errs.values()) and dt < 300
    record_acceptance(11, ok, f"Av(e^(i theta F)) vs J0 {oracle:.3f}; sup errors at n=500 "
                              + ", ".join(f"k={k}: {e:.3f}" for k, e in errs.items())
                              + f" (target <= 0.05, {dt:.0f}s)")
    assert ok


def test_criterion_12_laminar():
    t0 = time.perf_counter()
    m = build_builtin("pm_halfline")
    ls = build_laminar(m, 200)
    ode = check_v_ode(ls)
    ident = float(np.max(np.abs(ls.lambda_I() - ls.u(ls.b[1:]))))
    c1 = check_partition_comparability(ls)
    r = ls.ratios()
    no_growth = r[-50:].max() <= 1.1 * r.max()
    rep = estimate_distortion(m, ls, range(1, 101), 1000, SEED)
    j = rep.j_values
    lo, hi = rep.c_prime_by_j[j <= 50].max(), rep.c_prime_by_j[j >= 50].max()
    dt = time.perf_counter() - t0
    ok = ode <= 1e-6 and ident <= 1e-10 and no_growth and abs(hi - lo) <= 0.2 * lo and dt < 120
    record_acceptance(12, ok, f"v' - u(v) {ode:.1e}; lambda(I) - u(b) {ident:.1e}; C1_hat {c1:.3f}; "
                              f"C' max j<=50 {lo:.4f}, j>=50 {hi:.4f} ({dt:.1f}s)")
    assert ok


def test_criterion_13_slicing():
    m = build_builtin("farey")
    F, g = sin_phi(m), seed_density(m)
    details, ok = [], True
    for delta in (math.exp(-20), math.exp(-40)):
        for n in (10, 50):
            rep = slicing_decomposition(m, F, g, delta, n, strict=False)
            ok &= rep.holds
            details.append(f"(e^{round(math.log(delta))}, {n}): {rep.actual:.4f} <= "
                           f"{rep.I1_bound:.4f} + {rep.I2_value:.4f}")
    record_acceptance(13, ok, "; ".join(details))
    assert ok


def test_criterion_14_determinism(tmp_path):
    cfgs = {
        "glm2": "[map]\nfamily = farey\n[experiment]\nname = glm2\n[numerics]\nn_max = 50\n",
        "hitting_residues": "[map]\nfamily = farey\n[experiment]\nname = hitting_residues\n"
                            "[numerics]\nN_samples = 20000\nn_max = 100\n",
        "birkhoff": "[map]\nfamily = t_alpha\nalpha = 0.3\n[experiment]\nname = birkhoff\n"
                    "[numerics]\nN_samples = 20000\nn_max = 50\ntheta_grid = -5:5:21\n",
    }
    same = True
    for name, text in cfgs.items():
        cfg = tmp_path / f"{name}.ini"
        cfg.write_text(text)
        bodies = []
        for run in ("a", "b"):
            out = tmp_path / f"{name}_{run}"
            subprocess.run([sys.executable, "-m", "ergomix.cli", "--config", str(cfg),
                            "--output", str(out), "--seed", "12345"], check=False)
            bodies.append((out / f"{name}.csv").read_bytes())
        same &= bodies[0] == bodies[1]
    record_acceptance(14, same, f"byte-identical CSVs for {', '.join(cfgs)}")
    assert same

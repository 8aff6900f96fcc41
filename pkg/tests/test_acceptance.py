"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import math
import time

import numpy as np

from momex.dynamics import (CavityState, bessel_field_firstorder, cavity_field_frozen,
                            evolve_full_cavity, evolve_two_ensemble)
from momex.experiments import (exp_echo_family, exp_gap_protection, exp_phase_vs_delay,
                               exp_phase_vs_jz, local_maxima, oat_phase_sequence,
                               oscillation_frequency, rates_for_ratio, transfer_rate,
                               transfer_rate_scan, echo_imbalance_sequence,
                               gap_protection_prefix, gap_protection_readout)
from momex.integrate import IntegratorConfig
from momex.oracle import (ExactState, collective_recoil_check, exact_evolve,
                          meanfield_vs_exact, oat_closed_form)
from momex.physics import (TWO_PI, CouplingRates, PhysicsParams, chi_detuning_curve,
                           compute_alpha0, compute_rates, count_sign_changes,
                           symmetric_detuning_grid)
from momex.sequence import (Bragg, Dressing, PulseSequence, apply_bragg, fringe_scan,
                            make_engine, phase_shift, run_sequence, wrap_phase)
from momex.state import InhomogeneityProfile, collective_J, init_state

P = PhysicsParams()


def test_criterion_01_coupling_structure(report):
    t0 = time.perf_counter()
    grid = symmetric_detuning_grid(2 * P.omega_z, 801)
    chi = np.array([row[1] for row in chi_detuning_curve(P, grid)])
    crossings = count_sign_changes(chi)
    odd = float(np.max(np.abs(chi + chi[::-1])))
    dt = time.perf_counter() - t0
    ok = crossings == 3 and odd < 1e-18 and dt < 1
    report(1, ok, f"{crossings} zero crossings, max|chi(d)+chi(-d)| = {odd:.1e} rad/s, "
                  f"{dt:.2f} s")
    assert ok


def test_criterion_02_oat_phase_law(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        chi = rng.uniform(-5.0, 5.0)
        theta0 = rng.uniform(0.2, math.pi - 0.2)
        t_x = rng.uniform(10e-6, 150e-6)
        rates = CouplingRates(0j, chi, 0.0, 0.0, 0.0, 0.0)
        eng, st = make_engine(P, 1, "effective", superradiance=False, rates=rates,
                              homogeneous=True)
        seq = oat_phase_sequence(theta0, 25e-6, t_x)
        jz = collective_J(apply_bragg(st, seq.events[0]))[2]
        dphi, _ = phase_shift(seq, eng, st)
        expected = wrap_phase(2 * chi * jz * seq.dressing_time)
        worst = max(worst, abs(wrap_phase(dphi - expected)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-6 and dt < 10
    report(2, ok, f"max |dphi - 2 chi Jz t| over 20 draws = {worst:.1e} rad, {dt:.2f} s")
    assert ok


def test_criterion_03_linearity_and_sign_flip(report):
    t0 = time.perf_counter()
    fractions = np.linspace(-0.8, 0.8, 9)
    above = exp_phase_vs_jz(P.replace(delta_d=TWO_PI * 250e3), fractions)
    below = exp_phase_vs_jz(P.replace(delta_d=TWO_PI * 150e3), fractions)
    r2 = min(above.meta["r_squared"], below.meta["r_squared"])
    flips = above.meta["slope"] * below.meta["slope"] < 0
    dt = time.perf_counter() - t0
    ok = r2 > 0.9999 and flips and dt < 30
    report(3, ok, f"R^2 >= {r2:.8f}, slopes {above.meta['slope']:.3e} (250 kHz) / "
                  f"{below.meta['slope']:.3e} (150 kHz) rad per atom, {dt:.2f} s")
    assert ok


def test_criterion_04_doppler_baseline(report):
    t0 = time.perf_counter()
    eng, st = make_engine(P, 48, superradiance=False)
    eng.rates = eng.rates.scaled(0.0)
    sigma = eng.profile.sigma_in
    worst = 0.0
    for t in np.linspace(0, 180e-6, 19):
        seq = PulseSequence([Bragg(math.pi / 2), Dressing(float(t)),
                             Bragg(math.pi / 2, scan=True)])
        c = fringe_scan(seq, eng, st).contrast
        worst = max(worst, abs(c / math.exp(-0.5 * sigma**2 * t**2) - 1))
    t_e = math.sqrt(2) / sigma
    dt = time.perf_counter() - t0
    ok = worst < 0.01 and abs(sigma - TWO_PI * 2e3) < 1e-9 * sigma and dt < 5
    report(4, ok, f"max relative deviation from exp(-s^2 t^2/2) up to 180 us = {worst:.1e}, "
                  f"1/e at {t_e * 1e6:.1f} us, 48 bins, {dt:.2f} s")
    assert ok


def test_criterion_05_exchange_vs_oat(report):
    t0 = time.perf_counter()
    grid = np.linspace(0, 3 / P.sigma_in, 13)
    tab = exp_phase_vs_delay(P, grid, n_bins=64)
    ex, oat = tab.column("delta_phi_exchange"), tab.column("delta_phi_oat")
    decay = abs(ex[-1]) / abs(ex[0])
    spread = float(np.ptp(oat))
    dt = time.perf_counter() - t0
    ok = decay < 0.1 and spread < 1e-6 and dt < 30
    report(5, ok, f"exchange dphi(3/sigma)/dphi(0) = {decay:.3f}, OAT variation "
                  f"{spread:.1e} rad, {dt:.2f} s")
    assert ok


def test_criterion_06_gap_protection(report):
    t0 = time.perf_counter()
    tx = np.arange(0, 601, 2) * 1e-6
    ratios = [0.5, 1.7, 2.8, 4.0]
    tab = exp_gap_protection(P, tx, ratios, extra_delay=40e-6, n_bins=64)
    checks, notes = [], []
    for col in ("contrast_no_sr", "contrast"):
        curves = {r: tab.where("ratio", r).column(col) for r in ratios}
        n_max = {r: local_maxima(curves[r]).size for r in ratios}
        freq = [oscillation_frequency(tx, curves[r]) for r in (1.7, 2.8, 4.0)]
        checks += [n_max[0.5] == 0, n_max[1.7] >= 2, n_max[2.8] >= 2, n_max[4.0] >= 2,
                   freq[0] < freq[1] < freq[2]]
        label = "no SR" if col == "contrast_no_sr" else "SR"
        notes.append(f"{label}: maxima {[n_max[r] for r in ratios]} at ratios {ratios}, "
                     f"freq {[round(f) for f in freq]} Hz")
    dt = time.perf_counter() - t0
    checks.append(dt < 120)
    ok = all(checks)
    report(6, ok, "; ".join(notes) + f"; need 0 maxima at 0.5 and >= 2 at 1.7/2.8/4, {dt:.1f} s")
    assert ok


def test_criterion_07_echo_shift(report):
    t0 = time.perf_counter()
    grid = np.round(np.arange(-60, 20.5, 1.0), 9) * 1e-6
    ratios = (1.0, 2.0, 4.0)
    tab = exp_echo_family(P, grid, ratios=ratios)
    early = [tab.meta[f"argmax_after_first_pulse_{r:g}"] for r in ratios]
    late = tab.meta[f"argmax_late_{max(ratios):g}"]
    none = tab.meta["argmax_none_0"]
    step = grid[1] - grid[0]
    dt = time.perf_counter() - t0
    ok = (all(a < 0 for a in early) and abs(early[0]) < abs(early[1]) < abs(early[2])
          and abs(late) <= step / 2 and abs(none) <= step / 2 and dt < 120)
    report(7, ok, f"early argmax {[round(a * 1e6, 1) for a in early]} us at ratios "
                  f"{list(ratios)}, late {late * 1e6:.1f} us, none {none * 1e6:.1f} us, {dt:.1f} s")
    assert ok


CROSS_SETS = [
    dict(n_atoms=20),
    dict(n_atoms=20, flux_d=1.4e9, delta_d=TWO_PI * 1e6, omega_z=TWO_PI * 500e3),
    dict(n_atoms=50, delta_d=-TWO_PI * 1e6, omega_z=TWO_PI * 500e3),
    dict(n_atoms=40, delta_d=-TWO_PI * 700e3, omega_z=TWO_PI * 400e3, flux_d=1e9),
    dict(n_atoms=25, delta_d=TWO_PI * 900e3, omega_z=TWO_PI * 300e3, flux_d=2e9),
]


def test_criterion_08_model_cross_validation(report):
    t0 = time.perf_counter()
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    seq = oat_phase_sequence(math.pi / 4, 25e-6, 100e-6)
    rel, perts = [], []
    for kw in CROSS_SETS:
        params = P.replace(**kw)
        perts.append(compute_rates(params, warn=False).pert_ratio)
        phases = []
        for model in ("effective", "full_cavity"):
            eng, st = make_engine(params, 1, model, cfg, superradiance=True, homogeneous=True)
            phases.append(phase_shift(seq, eng, st)[0])
        rel.append(abs(phases[1] - phases[0]) / abs(phases[0]))
    # empty cavity: steady state is stationary and matches alpha0
    empty = P.replace(n_atoms=0)
    s0 = init_state(empty, 1, 0.0)
    prof = InhomogeneityProfile.homogeneous(1, empty)
    a0 = compute_alpha0(empty)
    _, cav = evolve_full_cavity(s0, None, empty, prof, 5 / P.kappa, cfg)
    _, cav_vac = evolve_full_cavity(s0, CavityState(), empty, prof, 30 / P.kappa, cfg)
    steady = max(abs(cav.a_mean - a0), abs(cav_vac.a_mean - a0)) / abs(a0)
    # first-order Bessel field against the frozen-atom ODE field
    bp = P.replace(omega_z=TWO_PI * 500e3, delta_d=TWO_PI * 700e3)
    J = 0.005 * bp.omega_z / bp.dispersive_shift * np.exp(0.3j)
    times = 40 / bp.kappa + np.linspace(0, 4 * TWO_PI / bp.omega_z, 81)
    _, field = cavity_field_frozen(bp, J, times[-1], cfg, t_eval=times,
                                   a_init=compute_alpha0(bp))
    bessel = float(np.max(np.abs(field - bessel_field_firstorder(bp, J, times)))
                   / abs(compute_alpha0(bp)))
    dt = time.perf_counter() - t0
    ok = (max(perts) < 0.05 and max(rel) < 0.05 and steady < 1e-6 and bessel < 0.01
          and dt < 120)
    report(8, ok, f"full vs effective dphi rel. diff {[f'{r:.1e}' for r in rel]} "
                  f"(pert <= {max(perts):.3f}), empty-cavity steady state {steady:.1e}, "
                  f"Bessel field {bessel:.1e}, {dt:.1f} s")
    assert ok


def _conservation_sequences():
    return [
        oat_phase_sequence(math.pi / 4, 25e-6, 100e-6),
        PulseSequence(gap_protection_prefix(70e-6, 40e-6).events + [Dressing(300e-6)]
                      + gap_protection_readout(70e-6).events),
        echo_imbalance_sequence(1.1e-3, -10e-6, 25e-6),
    ]


def test_criterion_09_conservation(report):
    t0 = time.perf_counter()
    worst_jz, worst_len = 0.0, 0.0
    for model in ("effective", "pure_oat"):
        eng, st = make_engine(P, 16, model, superradiance=False, rates=rates_for_ratio(P, 4.0))
        for seq in _conservation_sequences():
            s = st
            for ev in seq.split_scan()[0].events:
                nxt, _ = run_sequence(PulseSequence([ev]), eng, s, record=False)
                if not isinstance(ev, Bragg):
                    worst_jz = max(worst_jz, abs(nxt.jz.sum() - s.jz.sum()) / (s.n_atoms / 2))
                s = nxt
            worst_len = max(worst_len, float(np.max(np.abs(s.bin_lengths / st.bin_lengths - 1))))
    rng = np.random.default_rng(9)
    cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    worst_ex, worst_oat = 0.0, 0.0
    for _ in range(10):
        v = rng.normal(size=(2, 3))
        J1, J2 = v[0] / np.linalg.norm(v[0]), v[1] / np.linalg.norm(v[1])
        chi, delta = rng.uniform(-3, 3), rng.uniform(-3, 3)
        a1, a2 = evolve_two_ensemble(J1, J2, chi, delta, "exchange", 3.0, cfg)
        worst_ex = max(worst_ex, abs(a1[2] + a2[2] - J1[2] - J2[2]))
        b1, b2 = evolve_two_ensemble(J1, J2, chi, delta, "oat", 3.0, cfg)
        worst_oat = max(worst_oat, abs(b1[2] - J1[2]), abs(b2[2] - J2[2]))
    dt = time.perf_counter() - t0
    ok = worst_jz < 1e-8 and worst_len < 1e-8 and worst_ex < 1e-9 and worst_oat < 1e-9 \
        and dt < 10
    report(9, ok, f"Jz drift {worst_jz:.1e}, per-bin |j| drift {worst_len:.1e} (relative); "
                  f"two-ensemble exchange J1z+J2z {worst_ex:.1e}, OAT J1z,J2z {worst_oat:.1e}, "
                  f"{dt:.2f} s")
    assert ok


def test_criterion_10_exact_oracle(report):
    t0 = time.perf_counter()
    n_grid = list(range(4, 13))
    rows = meanfield_vs_exact(n_grid, "homogeneous")
    errs = [r[2] for r in rows]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    scaled = [e * n for e, n in zip(errs, n_grid)]
    one_over_n = max(scaled) <= 1.1 * scaled[0]
    # the oracle itself against the OAT closed form at N = 12
    times = np.linspace(0, 1, 11)
    ex = exact_evolve(ExactState.coherent(12, math.pi / 3), 0.5 / 12, 0.5 / 12, t_eval=times)
    cf = oat_closed_form(12, math.pi / 3, 0.0, 1 / 12, times)
    closed = float(np.max(np.abs(np.array([s.collective()[0] for s in ex]) - cf)))
    dicke = max(collective_recoil_check(n)["max_probability_deviation"] for n in (2, 4, 6, 8, 10))
    dt = time.perf_counter() - t0
    ok = monotone and one_over_n and closed < 1e-9 and dicke < 1e-12 and dt < 60
    report(10, ok, f"phase error N=4..12 {[round(e, 4) for e in errs]} rad "
                   f"(N*err {scaled[0]:.3f}..{max(scaled):.3f}), exact vs closed form "
                   f"{closed:.1e}, Dicke |p - 1/N| {dicke:.1e}, {dt:.2f} s")
    assert ok


def test_criterion_11_superradiant_transfer(report):
    t0 = time.perf_counter()
    base = P.replace(delta_d=P.omega_z, n_atoms=500)
    r1 = transfer_rate(base)
    r2 = transfer_rate(base.replace(n_atoms=1000))
    ratio = r2 / r1
    scan = transfer_rate_scan(P.replace(n_atoms=1000), TWO_PI * np.arange(100e3, 300e3 + 1, 10e3))
    best = scan.column("delta_d")[int(np.argmax(scan.column("transfer_rate")))]
    dt = time.perf_counter() - t0
    ok = abs(ratio - 2.0) <= 0.05 and abs(best - P.omega_z) < TWO_PI * 1.0 and dt < 30
    report(11, ok, f"rate ratio for N 500 -> 1000 = {ratio:.4f}, argmax over 100-300 kHz "
                   f"(10 kHz grid) at {best / TWO_PI / 1e3:.0f} kHz, {dt:.2f} s")
    assert ok

"""Figure-reproduction experiments built on the sequence executor.

Every experiment returns a `Table`: named columns in SI units (rad/s, s, rad)
plus a small metadata dict. Unit conversion for output happens in the CLI.
"""
from __future__ import annotations

import inspect
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .dynamics import evolve_free
from .integrate import IntegratorConfig
from .physics import TWO_PI, CouplingRates, PhysicsParams, compute_rates
from .sequence import (Bragg, Dressing, Engine, Free, PulseSequence, apply_bragg,
                       fringe_from_state, make_engine, phase_shift, run_sequence,
                       unwrap_nearest)
from .state import collective_J, packet_populations


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def where(self, name, value):
        i = self.columns.index(name)
        return Table(self.columns, [r for r in self.rows if r[i] == value], dict(self.meta))


def map_ordered(fn, items, workers=1):
    """Map over items, optionally in worker processes; results keep item order."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def rates_for_ratio(params: PhysicsParams, ratio, sigma_in=None) -> CouplingRates:
    """Rates at the current detuning with the flux scaled so chi N / sigma_in = ratio.

    The sign of chi is set by the detuning; `ratio` fixes the magnitude.
    """
    base = compute_rates(params, warn=False)
    sigma = params.sigma_in if sigma_in is None else sigma_in
    if ratio == 0:
        return base.scaled(0.0)
    if base.chi == 0 or params.n_atoms == 0:
        raise ValueError("chi vanishes at this detuning; cannot reach the target ratio")
    return base.scaled(abs(ratio) * sigma / (abs(base.chi) * params.n_atoms))


def _pulse(theta, phi=0.0, mode="instantaneous", scan=False):
    return Bragg(theta, phi, mode, scan=scan)


# -- sequences --------------------------------------------------------------

def oat_phase_sequence(theta0=math.pi / 4, t_d=25e-6, t_x=25e-6, mode="instantaneous"):
    """Tip, wait t_d, dress t_x, pi, dress t_x, wait t_d, analysis pi/2.

    The arms are symmetric so Doppler phases are echoed away and the dressing
    time totals 2 t_x.
    """
    return PulseSequence([
        _pulse(theta0, 0.0, mode), Free(t_d), Dressing(t_x), _pulse(math.pi, 0.0, mode),
        Dressing(t_x), Free(t_d), _pulse(math.pi / 2, 0.0, mode, scan=True),
    ], "oat_phase")


def gap_protection_prefix(T=70e-6, extra_delay=0.0, mode="instantaneous"):
    """pi/2, T, pi, T (packets back at maximum overlap), optional extra delay."""
    events = [_pulse(math.pi / 2, 0.0, mode), Free(T), _pulse(math.pi, 0.0, mode), Free(T)]
    if extra_delay:
        events.append(Free(extra_delay))
    return PulseSequence(events, "gap_prefix")


def gap_protection_readout(T_star=70e-6, mode="instantaneous"):
    return PulseSequence([Free(T_star), _pulse(math.pi, 0.0, mode), Free(T_star),
                          _pulse(math.pi / 2, 0.0, mode, scan=True)], "gap_readout")


def echo_imbalance_sequence(T, delta_T, dress_start, t_x=25e-6, flux_scale=1.0,
                            dressing=True, mode="instantaneous"):
    """pi/2, dressing in [dress_start, dress_start + t_x], pi at T, free T + delta_T, pi/2."""
    if dress_start + t_x > T:
        raise ValueError("dressing must end before the pi pulse")
    d = Dressing(t_x, flux_scale) if dressing else Free(t_x)
    return PulseSequence([
        _pulse(math.pi / 2, 0.0, mode), Free(dress_start), d, Free(T - dress_start - t_x),
        _pulse(math.pi, 0.0, mode), Free(T + delta_T), _pulse(math.pi / 2, 0.0, mode, scan=True),
    ], "echo_imbalance")


# -- Fig. 2A ----------------------------------------------------------------

def exp_superradiant_transfer(params: PhysicsParams, duration_grid, n_bins=1,
                              superradiance=True, cfg=None, rates=None):
    """Populations after a pi/2 pulse while the dressing light is on.

    Columns: time_s, n_up, n_down, leaked.
    """
    rates = compute_rates(params, warn=False) if rates is None else rates
    eng, st = make_engine(params, n_bins, "effective", cfg, superradiance, rates,
                          homogeneous=n_bins == 1)
    st = apply_bragg(st, _pulse(math.pi / 2))
    grid = np.asarray(duration_grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("duration grid must be non-empty, non-negative and increasing")
    _, snaps = eng.dress(st, float(grid[-1]), 1.0, t_eval=grid)
    table = Table(["time_s", "n_up", "n_down", "leaked"], meta={"rates": rates.as_dict()})
    for s in snaps:
        up, dn = packet_populations(s)
        table.rows.append((s.time, float(up.sum()), float(dn.sum()), s.leaked))
    return table


def transfer_rate(params: PhysicsParams, t_probe=None, superradiance=True, cfg=None):
    """Early-time rate of change of the up-packet fraction, 1/s.

    The probe time defaults to 1e-3 of the collective time 1 / (N |dGamma|),
    deep inside the linear regime.
    """
    rates = compute_rates(params, warn=False)
    if not superradiance:
        return 0.0
    scale = params.n_atoms * abs(rates.gamma_diff)
    if t_probe is None:
        t_probe = 1e-3 / scale if scale > 0 else 1e-6
    tab = exp_superradiant_transfer(params, [0.0, t_probe], 1, True, cfg, rates)
    up = tab.column("n_up") / params.n_atoms
    return float((up[1] - up[0]) / t_probe)


def transfer_rate_scan(params: PhysicsParams, detuning_grid, cfg=None):
    """Rows (delta_d, rate) at fixed flux."""
    grid = np.asarray(detuning_grid, dtype=float)
    table = Table(["delta_d", "transfer_rate"])
    for dd in grid:
        table.rows.append((float(dd), transfer_rate(params.replace(delta_d=float(dd)), cfg=cfg)))
    return table


# -- Fig. 2D ----------------------------------------------------------------

@dataclass(frozen=True)
class _DetuningJob:
    params: PhysicsParams
    n_bins: int
    model: str
    superradiance: bool
    t_d: float
    t_x: float
    theta0: float
    cfg: IntegratorConfig


def _detuning_point(job: _DetuningJob):
    rates = compute_rates(job.params, warn=False)
    eng, st = make_engine(job.params, job.n_bins, job.model, job.cfg, job.superradiance,
                          rates, homogeneous=job.n_bins == 1)
    dphi, fr = phase_shift(oat_phase_sequence(job.theta0, job.t_d, job.t_x), eng, st)
    return job.params.delta_d, dphi, rates.chi, fr.contrast


def exp_phase_vs_detuning(params: PhysicsParams, detuning_grid, n_bins=1, model="effective",
                          superradiance=False, t_d=25e-6, t_x=25e-6, theta0=math.pi / 4,
                          cfg=None, workers=1):
    """Fringe phase at fixed incident flux as the dressing detuning is scanned.

    Columns: delta_d, delta_phi, chi, contrast.
    """
    cfg = cfg or IntegratorConfig()
    jobs = [_DetuningJob(params.replace(delta_d=float(dd)), n_bins, model, superradiance,
                         t_d, t_x, theta0, cfg) for dd in detuning_grid]
    if not jobs:
        raise ValueError("detuning grid is empty")
    rows = map_ordered(_detuning_point, jobs, workers)
    phases = unwrap_nearest([r[1] for r in rows])
    return Table(["delta_d", "delta_phi", "chi", "contrast"],
                 [(r[0], float(p), r[2], r[3]) for r, p in zip(rows, phases)])


# -- Fig. 2E ----------------------------------------------------------------

def exp_phase_vs_jz(params: PhysicsParams, jz_fractions, n_bins=1, model="effective",
                    superradiance=False, t_d=25e-6, t_x=25e-6, cfg=None, rates=None):
    """Phase shift versus the initial spin projection (set by the first pulse area).

    Columns: jz, delta_phi. Metadata holds the fitted slope, intercept and R^2.
    """
    rates = compute_rates(params, warn=False) if rates is None else rates
    eng, st = make_engine(params, n_bins, model, cfg, superradiance, rates,
                          homogeneous=n_bins == 1)
    table = Table(["jz", "delta_phi"])
    for f in jz_fractions:
        theta0 = math.acos(-float(f))
        seq = oat_phase_sequence(theta0, t_d, t_x)
        tipped = apply_bragg(st, seq.events[0], eng.profile)
        dphi, _ = phase_shift(seq, eng, st)
        table.rows.append((collective_J(tipped)[2], dphi))
    jz, ph = table.column("jz"), table.column("delta_phi")
    slope, icpt = np.polyfit(jz, ph, 1)
    ss_res = float(np.sum((ph - (slope * jz + icpt)) ** 2))
    ss_tot = float(np.sum((ph - ph.mean()) ** 2))
    table.meta.update(slope=float(slope), intercept=float(icpt),
                      r_squared=1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0,
                      chi=rates.chi, dressing_time=2 * t_x)
    return table


# -- Fig. 3A ----------------------------------------------------------------

def exp_phase_vs_delay(params: PhysicsParams, delay_grid, n_bins=64, superradiance=False,
                       t_x=25e-6, theta0=math.pi / 4, cfg=None, rates=None):
    """Phase shift versus the delay before dressing, exchange and pure-OAT models.

    Columns: t_d_s, delta_phi_exchange, delta_phi_oat.
    """
    rates = compute_rates(params, warn=False) if rates is None else rates
    ex, st = make_engine(params, n_bins, "effective", cfg, superradiance, rates)
    oat = Engine(ex.params, ex.profile, ex.rates, "pure_oat", ex.cfg, superradiance)
    table = Table(["t_d_s", "delta_phi_exchange", "delta_phi_oat"])
    for t_d in delay_grid:
        seq = oat_phase_sequence(theta0, float(t_d), t_x)
        table.rows.append((float(t_d), phase_shift(seq, ex, st)[0], phase_shift(seq, oat, st)[0]))
    return table


# -- Figs. 3C / 4A ------------------------------------------------------------

def exp_gap_protection(params: PhysicsParams, tx_grid, ratios, extra_delay=0.0, T=70e-6,
                       T_star=70e-6, n_bins=64, cfg=None, mode="instantaneous"):
    """Contrast after dressing for t_x, started at maximum reoverlap (plus an
    optional extra delay), for each chi N / sigma_in in `ratios`.

    Columns: ratio, t_x_s, contrast, contrast_no_sr.
    """
    tx = np.asarray(tx_grid, dtype=float)
    if tx.size == 0 or np.any(tx < 0) or np.any(np.diff(tx) <= 0):
        raise ValueError("t_x grid must be non-empty, non-negative and increasing")
    table = Table(["ratio", "t_x_s", "contrast", "contrast_no_sr"])
    readout = gap_protection_readout(T_star, mode)
    scan = readout.events[-1]
    readout_prefix, _ = readout.split_scan()
    for ratio in ratios:
        rates = rates_for_ratio(params, float(ratio))
        curves = []
        for sr in (True, False):
            eng, st = make_engine(params, n_bins, "effective", cfg, sr, rates)
            start, _ = run_sequence(gap_protection_prefix(T, extra_delay, mode), eng, st, False)
            _, snaps = eng.dress(start, float(tx[-1]), 1.0, t_eval=tx)
            c = []
            for s in snaps:
                s, _ = run_sequence(readout_prefix, eng, s, False)
                c.append(fringe_from_state(s, scan, eng, strict=False).contrast)
            curves.append(c)
        for t, c_sr, c_no in zip(tx, *curves):
            table.rows.append((float(ratio), float(t), c_sr, c_no))
    table.meta.update(extra_delay=extra_delay, T=T, T_star=T_star, sigma_in=params.sigma_in)
    return table


def local_maxima(values, prominence=0.01):
    """Indices of interior local maxima with at least the given prominence."""
    peaks, _ = find_peaks(np.asarray(values, dtype=float), prominence=prominence)
    return peaks


def oscillation_frequency(times, values, prominence=0.01):
    """Mean frequency (Hz) from the spacing of successive prominent maxima.

    With a single maximum the first-peak time stands in for one period.
    """
    peaks = local_maxima(values, prominence)
    t = np.asarray(times, dtype=float)
    if peaks.size == 0:
        return 0.0
    if peaks.size == 1:
        return 1.0 / (t[peaks[0]] - t[0])
    return 1.0 / float(np.mean(np.diff(t[peaks])))


def reoverlap_time(params: PhysicsParams, T=70e-6, n_bins=64):
    """Time after the first pulse at which the packet separation returns to zero."""
    eng, st = make_engine(params, n_bins)
    st = apply_bragg(st, _pulse(math.pi / 2))
    st = evolve_free(st, eng.profile, T)
    x_turn = st.rel_position
    st = apply_bragg(st, _pulse(math.pi))
    # after the pi pulse the separation closes at the same relative speed
    return T + abs(st.rel_position) / (abs(x_turn) / T) if x_turn else T


# -- Fig. 4E ----------------------------------------------------------------

def exp_echo_imbalance(params: PhysicsParams, delta_T_grid, placement="after_first_pulse",
                       ratio=2.0, T=1.1e-3, t_x=25e-6, early_delay=25e-6, late_start=1e-3,
                       n_bins=128, superradiance=True, cfg=None, mode="instantaneous"):
    """Contrast versus arm imbalance for a Mach-Zehnder with a dressing pulse.

    placement: "after_first_pulse", "late" or "none". Columns: delta_T_s, contrast.
    """
    if placement not in ("after_first_pulse", "late", "none"):
        raise ValueError(f"unknown placement {placement!r}")
    rates = rates_for_ratio(params, ratio)
    eng, st = make_engine(params, n_bins, "effective", cfg, superradiance, rates)
    start = late_start if placement == "late" else early_delay
    seq = echo_imbalance_sequence(T, 0.0, start, t_x, dressing=placement != "none", mode=mode)
    # everything up to and including the pi pulse is shared by all delta_T
    head = PulseSequence(seq.events[:5])
    mid, _ = run_sequence(head, eng, st, False)
    scan = seq.events[-1]
    table = Table(["delta_T_s", "contrast"], meta={"placement": placement, "ratio": ratio})
    for dT in delta_T_grid:
        if T + dT < 0:
            raise ValueError("T + delta_T must be non-negative")
        s = evolve_free(mid, eng.profile, T + float(dT))
        table.rows.append((float(dT), fringe_from_state(s, scan, eng, strict=False).contrast))
    return table


def exp_echo_family(params: PhysicsParams, delta_T_grid, ratios=(2.0, 4.0), **kw):
    """No dressing, early dressing at each power, and late dressing at the highest.

    Columns: placement, ratio, delta_T_s, contrast.
    """
    kw.pop("placement", None)
    kw.pop("ratio", None)
    runs = [("none", 0.0)] + [("after_first_pulse", float(r)) for r in ratios]
    runs.append(("late", float(max(ratios))))
    table = Table(["placement", "ratio", "delta_T_s", "contrast"])
    for placement, ratio in runs:
        sub = exp_echo_imbalance(params, delta_T_grid, placement, ratio=ratio, **kw)
        table.rows.extend((placement, ratio, dT, c) for dT, c in sub.rows)
        table.meta[f"argmax_{placement}_{ratio:g}"] = argmax_position(sub)
    return table


def argmax_position(table: Table, x="delta_T_s", y="contrast"):
    xs, ys = table.column(x), table.column(y)
    return float(xs[int(np.argmax(ys))])


# -- presets ----------------------------------------------------------------

def _us(a, b, step):
    return np.round(np.arange(a, b + step / 2, step), 12) * 1e-6


PRESETS = {
    "fig2a": dict(fn="exp_superradiant_transfer", detuning="omega_z",
                  kwargs=dict(duration_grid=_us(0, 100, 2))),
    "fig2d": dict(fn="exp_phase_vs_detuning",
                  kwargs=dict(detuning_grid=TWO_PI * np.arange(-400e3, 400e3 + 1, 10e3))),
    "fig2e": dict(fn="exp_phase_vs_jz", kwargs=dict(jz_fractions=np.linspace(-0.8, 0.8, 9))),
    "fig3a": dict(fn="exp_phase_vs_delay", kwargs=dict(delay_grid=_us(0, 300, 10))),
    "fig3c": dict(fn="exp_gap_protection",
                  kwargs=dict(tx_grid=_us(0, 600, 5), ratios=[0.0, 0.5, 1.7, 2.8, 4.0])),
    "fig4a": dict(fn="exp_gap_protection",
                  kwargs=dict(tx_grid=_us(0, 600, 5), ratios=[0.0, 0.5, 0.9, 1.7, 2.8, 4.0],
                              extra_delay=40e-6)),
    "fig4e": dict(fn="exp_echo_family", kwargs=dict(delta_T_grid=_us(-60, 20, 1))),
}


def preset_parameters(name):
    """Keyword arguments accepted by a preset's experiment function."""
    fn = globals()[PRESETS[name]["fn"]]
    names = set(inspect.signature(fn).parameters) - {"params", "kw"}
    if fn is exp_echo_family:
        names |= set(inspect.signature(exp_echo_imbalance).parameters) - {"params", "placement", "ratio"}
    return names


def run_preset(name, params: PhysicsParams, overrides=None, keep_detuning=False, **common):
    """Run a named figure preset.

    `overrides` are experiment keywords (grids, timings) and must be accepted by
    the preset; `common` settings (cfg, n_bins, model, superradiance, mode,
    workers) are passed only where the experiment takes them. fig2a moves the
    detuning onto omega_z unless `keep_detuning`.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    spec = PRESETS[name]
    accepted = preset_parameters(name)
    kwargs = dict(spec["kwargs"])
    for key, value in (overrides or {}).items():
        if key not in accepted:
            raise ValueError(f"{name}: option {key!r} does not apply to this experiment")
        kwargs[key] = value
    for key, value in common.items():
        if value is not None and key in accepted:
            kwargs[key] = value
    if spec.get("detuning") == "omega_z" and not keep_detuning:
        params = params.replace(delta_d=params.omega_z)
    return globals()[spec["fn"]](params, **kwargs)

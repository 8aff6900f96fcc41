"""Pulse sequences, the sequence executor and interferometer fringe fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (CavityState, evolve_effective, evolve_free, evolve_full_cavity,
                       evolve_pure_oat)
from .integrate import IntegrationError, IntegratorConfig
from .physics import TWO_PI, CouplingRates, PhysicsParams, compute_rates
from .state import InhomogeneityProfile, SpinField, collective_J, init_state, partial_J

DEFAULT_RABI = TWO_PI * 8.3e3
MODELS = ("effective", "full_cavity", "pure_oat")


class SequenceError(RuntimeError):
    def __init__(self, index, cause):
        super().__init__(f"event {index}: {cause}")
        self.index = index


class FitDegenerateError(ValueError):
    pass


@dataclass(frozen=True)
class Bragg:
    theta: float
    phi: float = 0.0
    mode: str = "instantaneous"  # or "finite"
    rabi: float = DEFAULT_RABI
    scan: bool = False  # the fringe-scan pulse

    @property
    def duration(self):
        return 0.0 if self.mode == "instantaneous" else abs(self.theta) / self.rabi


@dataclass(frozen=True)
class Free:
    duration: float


@dataclass(frozen=True)
class Dressing:
    duration: float
    flux_scale: float = 1.0


@dataclass(frozen=True)
class Mark:
    label: str


@dataclass
class PulseSequence:
    events: list
    name: str = ""
    description: str = ""

    def __post_init__(self):
        for ev in self.events:
            if isinstance(ev, (Free, Dressing)) and ev.duration < 0:
                raise ValueError("event durations must be non-negative")
            if isinstance(ev, Dressing) and ev.flux_scale < 0:
                raise ValueError("flux_scale must be non-negative")
            if isinstance(ev, Bragg) and ev.mode not in ("instantaneous", "finite"):
                raise ValueError(f"unknown Bragg mode {ev.mode!r}")
        scans = [i for i, ev in enumerate(self.events) if isinstance(ev, Bragg) and ev.scan]
        if len(scans) > 1 or (scans and scans[0] != len(self.events) - 1):
            raise ValueError("only the final event may be the fringe-scan pulse")

    @property
    def total_duration(self):
        return sum(getattr(ev, "duration", 0.0) for ev in self.events)

    @property
    def dressing_time(self):
        return sum(ev.duration for ev in self.events if isinstance(ev, Dressing))

    def split_scan(self):
        """(prefix sequence, scan pulse or None)."""
        if self.events and isinstance(self.events[-1], Bragg) and self.events[-1].scan:
            return PulseSequence(self.events[:-1], self.name), self.events[-1]
        return self, None

    def without_dressing(self):
        events = [Free(ev.duration) if isinstance(ev, Dressing) else ev for ev in self.events]
        return PulseSequence(events, self.name + " (reference)", self.description)

    def with_final_phase(self, phi):
        prefix, scan = self.split_scan()
        if scan is None:
            raise ValueError("sequence has no fringe-scan pulse")
        last = Bragg(scan.theta, phi, scan.mode, scan.rabi, scan=False)
        return PulseSequence(prefix.events + [last], self.name)


def _rotate(vx, vy, vz, kx, ky, kz, angle):
    """Rodrigues rotation of vectors v about unit axes k by `angle` (broadcasting)."""
    c = np.cos(angle)
    s = np.sin(angle)
    dot = kx * vx + ky * vy + kz * vz
    cx = ky * vz - kz * vy
    cy = kz * vx - kx * vz
    cz = kx * vy - ky * vx
    return (vx * c + cx * s + kx * dot * (1 - c),
            vy * c + cy * s + ky * dot * (1 - c),
            vz * c + cz * s + kz * dot * (1 - c))


def apply_bragg(state: SpinField, event: Bragg, profile: InhomogeneityProfile | None = None,
                cfg: IntegratorConfig | None = None) -> SpinField:
    """Rotate every bin by theta about (cos phi, sin phi, 0).

    Finite mode propagates each bin exactly under the Rabi field plus its own
    detuning omega_in for theta / rabi seconds.
    """
    out = state.copy()
    vx, vy, vz = state.jp.real, state.jp.imag, state.jz
    if event.mode == "instantaneous" or profile is None:
        kx, ky, kz = math.cos(event.phi), math.sin(event.phi), 0.0
        angle = event.theta
    else:
        t = event.duration
        ox = event.rabi * math.cos(event.phi) * np.ones_like(vx)
        oy = event.rabi * math.sin(event.phi) * np.ones_like(vx)
        oz = profile.omega_in
        norm = np.sqrt(ox**2 + oy**2 + oz**2)
        kx, ky, kz = ox / norm, oy / norm, oz / norm
        angle = norm * t * np.sign(event.theta)
        out.time += t
    x, y, z = _rotate(vx, vy, vz, kx, ky, kz, angle)
    out.jp = x + 1j * y
    out.jz = np.asarray(z, dtype=float)
    # up/down packets swap with probability sin^2(theta/2)
    out.rel_position = state.rel_position * math.cos(event.theta)
    return out


def trace_row(state: SpinField, label="", cavity: CavityState | None = None):
    jx, jy, jz = collective_J(state)
    px, py, pz = partial_J(state, +1)
    mx, my, mz = partial_J(state, -1)
    return {
        "time_s": state.time, "label": label, "jx": jx, "jy": jy, "jz": jz,
        "jpos_x": px, "jpos_y": py, "jpos_z": pz,
        "jneg_x": mx, "jneg_y": my, "jneg_z": mz,
        "leaked": state.leaked, "rel_position_m": state.rel_position,
        "photon_number": math.nan if cavity is None else cavity.photon_number,
    }


@dataclass
class Engine:
    """Bundles what the executor needs to evolve through dressing intervals."""
    params: PhysicsParams
    profile: InhomogeneityProfile
    rates: CouplingRates
    model: str = "effective"
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)
    superradiance: bool = True
    cavity_start: str = "steady"  # or "vacuum"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")

    def dress(self, state, duration, flux_scale=1.0, t_eval=None):
        rates = self.rates.scaled(flux_scale)
        if not self.superradiance:
            rates = rates.without_superradiance()
        if self.model == "effective":
            return evolve_effective(state, rates, self.profile, duration, self.cfg, t_eval)
        if self.model == "pure_oat":
            if t_eval is not None:
                snaps = [evolve_pure_oat(state, rates.chi, self.profile, float(t)) for t in t_eval]
                return evolve_pure_oat(state, rates.chi, self.profile, duration), snaps
            return evolve_pure_oat(state, rates.chi, self.profile, duration, self.cfg)
        cav = None if self.cavity_start == "steady" else CavityState()
        res = evolve_full_cavity(state, cav, self.params, self.profile, duration, self.cfg,
                                 flux_scale, t_eval)
        if t_eval is None:
            return res[0]
        (final, _), snaps = res
        return final, [s for s, _ in snaps]


def make_engine(params: PhysicsParams, n_bins=64, model="effective", cfg=None,
                superradiance=True, rates=None, homogeneous=False):
    """Engine plus the matching fresh pole state (all atoms in the down packet)."""
    state = init_state(params, 1 if homogeneous else n_bins, -1.0)
    if homogeneous:
        profile = InhomogeneityProfile.homogeneous(state.grid.n_bins, params)
    else:
        profile = InhomogeneityProfile.from_grid(state.grid, params)
    if rates is None:
        rates = compute_rates(params, warn=False)
    engine = Engine(params, profile, rates, model, cfg or IntegratorConfig(), superradiance)
    return engine, state


def run_sequence(seq: PulseSequence, engine: Engine, state: SpinField, record=True):
    """Fold the events over the state. Returns (final state, trace rows)."""
    trace = [trace_row(state, "start")] if record else []
    for i, ev in enumerate(seq.events):
        try:
            if isinstance(ev, Bragg):
                state = apply_bragg(state, ev, engine.profile, engine.cfg)
                label = f"bragg({ev.theta:.6g},{ev.phi:.6g})"
            elif isinstance(ev, Free):
                state = evolve_free(state, engine.profile, ev.duration)
                label = "free"
            elif isinstance(ev, Dressing):
                state = engine.dress(state, ev.duration, ev.flux_scale)
                label = "dressing"
            elif isinstance(ev, Mark):
                label = ev.label
            else:
                raise TypeError(f"unknown event {ev!r}")
        except (IntegrationError, FloatingPointError) as exc:
            raise SequenceError(i, exc) from exc
        if record:
            trace.append(trace_row(state, label))
    return state, trace


@dataclass(frozen=True)
class FringeResult:
    amplitude: float
    phase: float
    offset: float
    contrast: float
    residual_population: float
    fit_rms: float


def wrap_phase(x):
    """Map to (-pi, pi]."""
    y = math.remainder(x, TWO_PI)
    return math.pi if y == -math.pi else y


def fit_fringe(phi, jz, n_atoms, leaked=0.0, strict=True):
    """Least-squares fit jz(phi) = A cos(phi - phase) + B.

    The model is linear in (A cos phase, A sin phase, B); on the uniform grid
    the solution coincides with the first discrete Fourier component.
    With strict=False a vanishing fringe is returned (contrast ~ 0) instead of
    raising; that is what contrast-vs-time curves want.
    """
    phi = np.asarray(phi, dtype=float)
    jz = np.asarray(jz, dtype=float)
    if phi.size < 5 or np.ptp(phi) < TWO_PI * (1 - 1 / phi.size) - 1e-12:
        raise ValueError("need at least 5 phase points spanning a full period")
    basis = np.column_stack([np.cos(phi), np.sin(phi), np.ones_like(phi)])
    (a, b, offset), *_ = np.linalg.lstsq(basis, jz, rcond=None)
    amp = math.hypot(a, b)
    if strict and amp < 1e-6 * n_atoms:
        raise FitDegenerateError(f"fringe amplitude {amp:.3g} below 1e-6 N")
    resid = jz - basis @ np.array([a, b, offset])
    residual = n_atoms - leaked
    return FringeResult(amp, wrap_phase(math.atan2(b, a)), float(offset),
                        2 * amp / residual, residual, float(np.sqrt(np.mean(resid**2))))


def default_phi_grid(n=16):
    return TWO_PI * np.arange(n) / n


def fringe_from_state(state: SpinField, scan: Bragg, engine: Engine, phi_grid=None,
                      strict=True):
    phi_grid = default_phi_grid() if phi_grid is None else np.asarray(phi_grid)
    jz = []
    for phi in phi_grid:
        final = apply_bragg(state, Bragg(scan.theta, float(phi), scan.mode, scan.rabi),
                            engine.profile, engine.cfg)
        jz.append(final.jz.sum())
    return fit_fringe(phi_grid, jz, state.n_atoms, state.leaked, strict)


def fringe_scan(seq: PulseSequence, engine: Engine, state: SpinField, phi_grid=None):
    """Run the sequence once up to the scan pulse, then sweep its phase and fit."""
    prefix, scan = seq.split_scan()
    if scan is None:
        raise ValueError("sequence has no fringe-scan pulse")
    final, _ = run_sequence(prefix, engine, state, record=False)
    return fringe_from_state(final, scan, engine, phi_grid)


def phase_shift(seq: PulseSequence, engine: Engine, state: SpinField, phi_grid=None):
    """Interaction-induced fringe phase: fit phase minus that of the dressing-free
    reference sequence, wrapped to (-pi, pi]. Returns (delta_phi, FringeResult)."""
    res = fringe_scan(seq, engine, state, phi_grid)
    ref = fringe_scan(seq.without_dressing(), engine, state, phi_grid)
    return wrap_phase(res.phase - ref.phase), res


def unwrap_nearest(phases):
    """Unwrap a sweep of phases by nearest continuation."""
    return list(np.unwrap(np.asarray(phases, dtype=float))) if len(phases) else []

"""Time evolution of a SpinField.

Four engines share the per-bin state layout:

* effective exchange + superradiance (rotating frame at omega_z)
* full atom + cavity mean field (lab frame spins, dressing-frame field)
* pure one-axis twisting reference
* the two-ensemble minimal model

Conventions: d/dt O = i[H, O]; a free bin precesses as j+ -> j+ exp(i omega_in t).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .integrate import IntegratorConfig, integrate
from .physics import CouplingRates, PhysicsParams, compute_alpha0
from .state import InhomogeneityProfile, SpinField

DEFAULT_CFG = IntegratorConfig()


@dataclass
class CavityState:
    a_mean: complex = 0j
    photon_number: float = 0.0

    def __post_init__(self):
        if self.photon_number < -1e-9:
            raise ValueError("photon_number must be non-negative")

    @classmethod
    def steady(cls, params: PhysicsParams, flux_scale=1.0):
        a0 = compute_alpha0(params) * math.sqrt(flux_scale)
        return cls(a0, abs(a0) ** 2)


def _drift_velocity(jz, half, bins, recoil_velocity):
    n_up = half + jz
    n_dn = half - jz
    s_up = n_up.sum()
    s_dn = n_dn.sum()
    if s_up <= 0 or s_dn <= 0:
        return 0.0
    return recoil_velocity * (2.0 + np.dot(n_up, bins) / s_up - np.dot(n_dn, bins) / s_dn)


def _unpack(state: SpinField, y):
    n = state.jp.size
    out = state.copy()
    out.jp = np.array(y[:n], dtype=complex)
    out.jz = np.array(y[n:2 * n].real, dtype=float)
    return out


def evolve_free(state: SpinField, profile: InhomogeneityProfile, duration) -> SpinField:
    """Exact non-interacting precession for `duration` seconds."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    out = state.copy()
    out.jp = state.jp * np.exp(1j * profile.omega_in * duration)
    half = state.grid.weights * state.n_atoms / 2
    out.rel_position += duration * _drift_velocity(state.jz, half, state.grid.bins,
                                                   profile.recoil_velocity)
    out.time += duration
    return out


def effective_rhs(rates: CouplingRates, profile: InhomogeneityProfile, state: SpinField):
    n = state.jp.size
    omega = profile.omega_in
    chi = rates.chi
    gd = rates.gamma_diff
    coup = 2 * chi + 1j * gd
    half = state.grid.weights * state.n_atoms / 2
    bins = state.grid.bins
    v_rec = profile.recoil_velocity

    def rhs(t, y):
        jp = y[:n]
        jz = y[n:2 * n].real
        Jp = jp.sum()
        overlap = Jp * np.conj(jp)
        dy = np.empty_like(y)
        dy[:n] = 1j * omega * jp - 1j * coup * Jp * jz
        dy[n:2 * n] = -2 * chi * overlap.imag - gd * overlap.real
        dy[2 * n] = abs(gd) * abs(Jp) ** 2
        dy[2 * n + 1] = _drift_velocity(jz, half, bins, v_rec)
        return dy

    return rhs


def evolve_effective(state: SpinField, rates: CouplingRates, profile: InhomogeneityProfile,
                     duration, cfg: IntegratorConfig = DEFAULT_CFG, t_eval=None):
    """Integrate the bin-resolved exchange + superradiance mean-field equations.

    Per bin, with collective J+ = sum_i j+_i:
        dj+_i/dt = i w_i j+_i - i (2 chi + i dG) J+ jz_i
        djz_i/dt = -2 chi Im(J+ conj j+_i) - dG Re(J+ conj j+_i)
    where dG = Gamma_+ - Gamma_-. The collective sums reproduce the
    homogeneous equations; jz of each bin is coupled by the exchange term.

    With `t_eval` (times relative to the start), also returns the list of
    intermediate states.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = state.jp.size
    y0 = np.concatenate([state.jp, state.jz.astype(complex), [state.leaked, state.rel_position]])
    y1, samples = integrate(effective_rhs(rates, profile, state), y0, 0.0, duration, cfg, t_eval)

    def build(y, dt):
        s = _unpack(state, y)
        s.leaked = float(y[2 * n].real)
        s.rel_position = float(y[2 * n + 1].real)
        s.time = state.time + dt
        return s

    out = build(y1, duration)
    if t_eval is None:
        return out
    return out, [build(y, float(t)) for y, t in zip(samples, t_eval)]


def evolve_pure_oat(state: SpinField, chi, profile: InhomogeneityProfile, duration,
                    cfg: IntegratorConfig = DEFAULT_CFG) -> SpinField:
    """OAT reference H = -chi Jz^2: every jz frozen, so the solution is closed form."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    Jz = state.jz.sum()
    out = evolve_free(state, profile, duration)
    out.jp = out.jp * np.exp(-2j * chi * Jz * duration)
    return out


def full_cavity_rhs(params: PhysicsParams, profile: InhomogeneityProfile, state: SpinField,
                    flux_scale=1.0):
    n = state.jp.size
    G = params.dispersive_shift
    w = params.omega_z + profile.omega_in
    drive = math.sqrt(params.flux_d * flux_scale) * math.sqrt(params.kappa1)
    cav = 1j * (params.delta_d + 0.5j * params.kappa)
    kappa = params.kappa
    half = state.grid.weights * state.n_atoms / 2
    bins = state.grid.bins
    v_rec = profile.recoil_velocity

    def rhs(t, y):
        jp = y[:n]
        jz = y[n:2 * n].real
        a = y[2 * n]
        nph = y[2 * n + 1].real
        Jp = jp.sum()
        dy = np.empty_like(y)
        dy[:n] = 1j * w * jp - 2j * G * nph * jz
        dy[n:2 * n] = 2 * G * nph * jp.imag
        dy[2 * n] = cav * a - 1j * drive - 2j * G * Jp.real * a
        dy[2 * n + 1] = -2 * drive * a.imag - kappa * nph
        dy[2 * n + 2] = _drift_velocity(jz, half, bins, v_rec)
        return dy

    return rhs


def evolve_full_cavity(state: SpinField, cavity: CavityState | None, params: PhysicsParams,
                       profile: InhomogeneityProfile, duration,
                       cfg: IntegratorConfig = DEFAULT_CFG, flux_scale=1.0, t_eval=None):
    """Co-integrate the bins and the driven cavity mode without eliminating the field.

    Spins are propagated in the lab frame (the state's rotating-frame coherences
    are taken as the lab values at the start of the interval and rotated back at
    the end). `cavity=None` starts the field at its empty-cavity steady state.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if cavity is None:
        cavity = CavityState.steady(params, flux_scale)
    n = state.jp.size
    y0 = np.concatenate([state.jp, state.jz.astype(complex),
                         [cavity.a_mean, cavity.photon_number, state.rel_position]])
    rhs = full_cavity_rhs(params, profile, state, flux_scale)
    y1, samples = integrate(rhs, y0, 0.0, duration, cfg, t_eval)
    n_ss = abs(compute_alpha0(params)) ** 2 * flux_scale

    def build(y, dt):
        s = _unpack(state, y)
        s.jp = s.jp * np.exp(-1j * params.omega_z * dt)
        s.rel_position = float(y[2 * n + 2].real)
        s.time = state.time + dt
        nph = float(y[2 * n + 1].real)
        if nph < 0:
            if nph < -1e-9:
                warnings.warn(f"photon number {nph:.3g} driven negative; clamped", stacklevel=3)
            nph = 0.0
        if n_ss > 0 and nph > 10 * n_ss:
            warnings.warn("photon number exceeds 10x the empty-cavity value", stacklevel=3)
        return s, CavityState(complex(y[2 * n]), nph)

    out = build(y1, duration)
    if t_eval is None:
        return out
    return out, [build(y, float(t)) for y, t in zip(samples, t_eval)]


def cavity_field_frozen(params: PhysicsParams, J_plus_tilde, duration,
                        cfg: IntegratorConfig = DEFAULT_CFG, t_eval=None, a_init=0j):
    """Cavity field driven with the collective coherence frozen at J_plus_tilde."""
    G = params.dispersive_shift
    drive = math.sqrt(params.flux_d) * math.sqrt(params.kappa1)
    cav = 1j * (params.delta_d + 0.5j * params.kappa)
    wz = params.omega_z
    Jt = complex(J_plus_tilde)

    def rhs(t, y):
        modulation = 2 * (Jt * np.exp(1j * wz * t)).real
        return np.array([cav * y[0] - 1j * drive - 1j * G * modulation * y[0]])

    y1, samples = integrate(rhs, np.array([a_init]), 0.0, duration, cfg, t_eval)
    if t_eval is None:
        return complex(y1[0])
    return complex(y1[0]), np.array([complex(s[0]) for s in samples])


def sideband_coefficients(params: PhysicsParams, J_plus_tilde):
    """Relative amplitudes (upper, lower) multiplying exp(+i wz t) and exp(-i wz t)
    inside the bracket of the first-order field expansion."""
    G = params.dispersive_shift
    wz = params.omega_z
    carrier = complex(params.delta_d, params.kappa / 2)
    Jt = complex(J_plus_tilde)
    upper = G * Jt / wz * carrier / complex(params.delta_d - wz, params.kappa / 2)
    lower = -G * Jt.conjugate() / wz * carrier / complex(params.delta_d + wz, params.kappa / 2)
    return upper, lower


def bessel_field_firstorder(params: PhysicsParams, J_plus_tilde, t):
    """Long-time cavity field to first order in g0^2 |J+| / (4 delta_a omega_z).

    alpha0 * exp(i Theta(t)) * [1 + upper e^{i wz t} + lower e^{-i wz t}], with
    Theta(t) = -(g0^2 / (2 delta_a wz)) Im(J+ e^{i wz t}) the phase modulation.
    """
    a0 = compute_alpha0(params)
    G = params.dispersive_shift
    wz = params.omega_z
    rot = np.exp(1j * wz * np.asarray(t, dtype=float))
    theta = -(2 * G / wz) * (complex(J_plus_tilde) * rot).imag
    upper, lower = sideband_coefficients(params, J_plus_tilde)
    return a0 * np.exp(1j * theta) * (1 + upper * rot + lower / rot)


def evolve_two_ensemble(J1, J2, chi, delta, model="exchange", duration=0.0,
                        cfg: IntegratorConfig = DEFAULT_CFG, t_eval=None):
    """Two sub-ensembles with differential frequency delta.

    J1, J2 are (Jx, Jy, Jz). model="exchange" uses H = chi J+ J- + (delta/2)(J1z - J2z);
    model="oat" uses H = -chi Jz^2 + (delta/2)(J1z - J2z).
    Returns the final (J1, J2) as numpy 3-vectors, plus samples if t_eval is given.
    """
    if model not in ("exchange", "oat"):
        raise ValueError(f"unknown model {model!r}")
    J1 = np.asarray(J1, dtype=float)
    J2 = np.asarray(J2, dtype=float)
    y0 = np.array([J1[0] + 1j * J1[1], J2[0] + 1j * J2[1], J1[2], J2[2]], dtype=complex)

    def rhs(t, y):
        p1, p2 = y[0], y[1]
        z1, z2 = y[2].real, y[3].real
        dy = np.zeros(4, dtype=complex)
        if model == "exchange":
            P = p1 + p2
            dy[0] = -2j * chi * P * z1 + 1j * delta * p1
            dy[1] = -2j * chi * P * z2 - 1j * delta * p2
            cross = 1j * chi * (np.conj(p1) * p2 - p1 * np.conj(p2))
            dy[2] = cross.real
            dy[3] = -cross.real
        else:
            Z = z1 + z2
            dy[0] = -2j * chi * Z * p1 + 1j * delta * p1
            dy[1] = -2j * chi * Z * p2 - 1j * delta * p2
        return dy

    def split(y):
        return (np.array([y[0].real, y[0].imag, y[2].real]),
                np.array([y[1].real, y[1].imag, y[3].real]))

    y1, samples = integrate(rhs, y0, 0.0, duration, cfg, t_eval)
    if t_eval is None:
        return split(y1)
    return split(y1), [split(y) for y in samples]

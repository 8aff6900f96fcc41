"""Physical constants and the derived couplings of the atom-only model.

All frequencies are angular (rad/s). Conversion from linear frequency
happens at the config/CLI boundary only.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import constants as sc

TWO_PI = 2.0 * math.pi

# 87Rb, D2 line
RB87_MASS = 86.909180527 * sc.atomic_mass
WAVELENGTH = 780e-9
K_WAVENUMBER = TWO_PI / WAVELENGTH

PERT_RATIO_WARN = 0.1


class DegenerateDenominatorError(ValueError):
    pass


def doppler_slope(k_wavenumber=K_WAVENUMBER, mass=RB87_MASS):
    """d(omega_in)/dp for p measured in units of hbar*k: 2*hbar*k^2/m."""
    return 2.0 * sc.hbar * k_wavenumber**2 / mass


def sigma_p_for_sigma_in(sigma_in, k_wavenumber=K_WAVENUMBER, mass=RB87_MASS):
    return sigma_in / doppler_slope(k_wavenumber, mass)


@dataclass(frozen=True)
class PhysicsParams:
    g0: float = TWO_PI * 0.48e6
    kappa: float = TWO_PI * 56e3
    kappa1: float | None = None  # None -> kappa / 2
    delta_a: float = TWO_PI * 500e6
    delta_d: float = TWO_PI * 400e3
    flux_d: float = 350e6
    omega_z: float = TWO_PI * 200e3
    n_atoms: float = 1000
    sigma_p: float = sigma_p_for_sigma_in(TWO_PI * 2e3)
    k_wavenumber: float = K_WAVENUMBER
    mass: float = RB87_MASS
    gamma_excited: float = TWO_PI * 6e6

    def __post_init__(self):
        if self.kappa1 is None:
            object.__setattr__(self, "kappa1", self.kappa / 2)
        for name in ("g0", "kappa", "kappa1", "flux_d", "sigma_p", "gamma_excited"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")
        for name in ("delta_a", "omega_z", "k_wavenumber", "mass"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be non-negative")
        if self.sigma_p >= 1:
            raise ValueError("sigma_p must be below 1 (units of hbar*k)")
        if self.delta_a < 10 * self.kappa or self.delta_a < 10 * self.gamma_excited:
            warnings.warn("delta_a is not large compared to kappa / gamma_excited; "
                          "the dispersive approximation is questionable", stacklevel=3)

    def replace(self, **changes) -> "PhysicsParams":
        if "kappa" in changes and "kappa1" not in changes and self.kappa1 == self.kappa / 2:
            changes["kappa1"] = None
        return replace(self, **changes)

    @property
    def dispersive_shift(self):
        """Single-atom shift g0^2 / (4 delta_a), rad/s."""
        return self.g0**2 / (4 * self.delta_a)

    @property
    def sigma_in(self):
        """Continuum rms of omega_in for a Gaussian momentum distribution."""
        return doppler_slope(self.k_wavenumber, self.mass) * self.sigma_p

    @property
    def recoil_velocity(self):
        """hbar*k/m, m/s."""
        return sc.hbar * self.k_wavenumber / self.mass


@dataclass(frozen=True)
class CouplingRates:
    alpha0: complex
    chi_plus: float
    chi_minus: float
    gamma_plus: float
    gamma_minus: float
    pert_ratio: float

    @property
    def chi(self):
        return self.chi_plus + self.chi_minus

    @property
    def gamma_diff(self):
        return self.gamma_plus - self.gamma_minus

    def scaled(self, factor) -> "CouplingRates":
        """Rates at `factor` times the dressing power (alpha0 scales with sqrt)."""
        return CouplingRates(
            alpha0=self.alpha0 * math.sqrt(factor),
            chi_plus=self.chi_plus * factor,
            chi_minus=self.chi_minus * factor,
            gamma_plus=self.gamma_plus * factor,
            gamma_minus=self.gamma_minus * factor,
            pert_ratio=self.pert_ratio * math.sqrt(factor),
        )

    def without_superradiance(self) -> "CouplingRates":
        return replace(self, gamma_plus=0.0, gamma_minus=0.0)

    def as_dict(self):
        return {
            "alpha0_re": self.alpha0.real,
            "alpha0_im": self.alpha0.imag,
            "chi_plus": self.chi_plus,
            "chi_minus": self.chi_minus,
            "chi": self.chi,
            "gamma_plus": self.gamma_plus,
            "gamma_minus": self.gamma_minus,
            "pert_ratio": self.pert_ratio,
        }


def compute_alpha0(params: PhysicsParams) -> complex:
    """Intracavity dressing amplitude sqrt(flux) sqrt(kappa1) / (delta_d + i kappa/2)."""
    denom = complex(params.delta_d, params.kappa / 2)
    if denom == 0:
        raise DegenerateDenominatorError("delta_d and kappa are both zero")
    return math.sqrt(params.flux_d) * math.sqrt(params.kappa1) / denom


def _lorentz_pair(delta, kappa):
    d2 = delta * delta + kappa * kappa / 4
    return delta / d2, kappa / d2


def compute_rates(params: PhysicsParams, warn=True) -> CouplingRates:
    alpha0 = compute_alpha0(params)
    n_cav = params.flux_d * params.kappa1 / (params.delta_d**2 + params.kappa**2 / 4)
    pref = params.dispersive_shift**2 * n_cav
    disp_p, abs_p = _lorentz_pair(params.delta_d + params.omega_z, params.kappa)
    disp_m, abs_m = _lorentz_pair(params.delta_d - params.omega_z, params.kappa)
    nearest = min(abs(params.delta_d + params.omega_z), abs(params.delta_d - params.omega_z))
    scale = math.sqrt(params.n_atoms) * abs(alpha0) * params.dispersive_shift
    pert = math.inf if nearest == 0 and scale > 0 else (scale / nearest if scale else 0.0)
    rates = CouplingRates(
        alpha0=alpha0,
        chi_plus=pref * disp_p,
        chi_minus=pref * disp_m,
        gamma_plus=pref * abs_p,
        gamma_minus=pref * abs_m,
        pert_ratio=pert,
    )
    if warn and pert > PERT_RATIO_WARN:
        warnings.warn(f"perturbative ratio {pert:.3g} exceeds {PERT_RATIO_WARN}; "
                      "the adiabatic elimination is outside its validity range", stacklevel=2)
    return rates


def chi_detuning_curve(params: PhysicsParams, detuning_grid):
    """Rows (delta_d, chi, chi_plus, chi_minus, gamma_plus, gamma_minus) over the grid."""
    grid = np.asarray(detuning_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("detuning grid is empty")
    rows = []
    for dd in grid:
        r = compute_rates(params.replace(delta_d=float(dd)), warn=False)
        rows.append((float(dd), r.chi, r.chi_plus, r.chi_minus, r.gamma_plus, r.gamma_minus))
    return rows


def symmetric_detuning_grid(span, n_points):
    """n_points detunings over [-span, span] that are exact mirror images of each other."""
    if n_points < 2:
        raise ValueError("need at least 2 points")
    half = np.linspace(0.0, span, n_points // 2 + 1)
    if n_points % 2:
        return np.concatenate([-half[:0:-1], half])
    # even count: shift half a step so zero is not on the grid
    pos = span * (2 * np.arange(n_points // 2) + 1) / (n_points - 1)
    pos[-1] = span
    return np.concatenate([-pos[::-1], pos])


def count_sign_changes(values):
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))

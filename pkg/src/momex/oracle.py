"""Exact small-N solver for the collective exchange Hamiltonian.

H = chi_+ J+J- + chi_- J-J+ + sum_i (delta_i / 2) sigma_z^i on the full 2^N space,
with optional collective jumps sqrt(Gamma_+) J- and sqrt(Gamma_-) J+ (Lindblad).
Used as a test fixture for the mean-field engine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .dynamics import evolve_effective
from .integrate import IntegratorConfig
from .physics import CouplingRates
from .state import InhomogeneityProfile, MomentumGrid, SpinField

MAX_PURE = 12
MAX_MIXED = 7
DENSE_LIMIT = 8


class DimensionError(ValueError):
    pass


def _check_n(n, mixed=False):
    cap = MAX_MIXED if mixed else MAX_PURE
    if not 1 <= n <= cap:
        kind = "density-matrix" if mixed else "state-vector"
        raise DimensionError(f"{kind} oracle supports 1 <= N <= {cap}, got {n}")


@lru_cache(maxsize=None)
def spin_operators(n):
    """Sparse (Jz, J+, [sigma_z^i]) for n spins; basis bit i set = atom i up."""
    _check_n(n)
    dim = 1 << n
    idx = np.arange(dim)
    sz = [sp.diags(np.where((idx >> i) & 1, 1.0, -1.0)).tocsr() for i in range(n)]
    jz = sp.diags(0.5 * sum(np.where((idx >> i) & 1, 1.0, -1.0) for i in range(n))).tocsr()
    rows, cols = [], []
    for i in range(n):
        down = idx[((idx >> i) & 1) == 0]
        rows.append(down | (1 << i))
        cols.append(down)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    jp = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(dim, dim))
    return jz, jp, tuple(sz)


def hamiltonian(n, chi_plus, chi_minus, detunings=None):
    jz, jp, sz = spin_operators(n)
    jm = jp.T.tocsr()
    h = chi_plus * (jp @ jm) + chi_minus * (jm @ jp)
    if detunings is not None:
        d = np.asarray(detunings, dtype=float)
        if d.size != n:
            raise ValueError("need one detuning per atom")
        h = h + sum(0.5 * d[i] * sz[i] for i in range(n))
    return sp.csr_matrix(h, dtype=complex)


@dataclass
class ExactState:
    n_atoms: int
    detunings: np.ndarray
    psi: np.ndarray | None = None  # state vector
    rho: np.ndarray | None = None  # density matrix

    def __post_init__(self):
        self.detunings = np.zeros(self.n_atoms) if self.detunings is None else \
            np.asarray(self.detunings, dtype=float)
        if self.detunings.size != self.n_atoms:
            raise ValueError("need one detuning per atom")
        if (self.psi is None) == (self.rho is None):
            raise ValueError("give exactly one of psi / rho")
        _check_n(self.n_atoms, mixed=self.rho is not None)

    @classmethod
    def coherent(cls, n, theta, phi=0.0, detunings=None):
        """Product state with every atom at polar angle theta from the down pole."""
        single = np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])
        psi = np.ones(1, dtype=complex)
        for _ in range(n):
            psi = np.kron(single, psi)
        return cls(n, detunings, psi=psi)

    @classmethod
    def dicke(cls, n, excitations, detunings=None):
        """Symmetric Dicke state with the given number of up atoms."""
        idx = np.arange(1 << n)
        mask = np.array([bin(i).count("1") == excitations for i in idx])
        psi = mask.astype(complex) / math.sqrt(mask.sum())
        return cls(n, detunings, psi=psi)

    def to_mixed(self):
        if self.rho is not None:
            return self
        return ExactState(self.n_atoms, self.detunings, rho=np.outer(self.psi, self.psi.conj()))

    def expect(self, op):
        if self.psi is not None:
            return complex(np.vdot(self.psi, op @ self.psi))
        return complex(np.trace((op @ self.rho) if sp.issparse(op) else op @ self.rho))

    def collective(self):
        """(<J+>, <Jz>); <J+> = <Jx> + i<Jy> matches the mean-field coherence."""
        jz, jp, _ = spin_operators(self.n_atoms)
        return self.expect(jp), self.expect(jz).real

    def norm_error(self):
        if self.psi is not None:
            return abs(np.vdot(self.psi, self.psi).real - 1)
        return abs(np.trace(self.rho).real - 1)

    def min_eigenvalue(self):
        if self.rho is None:
            return 0.0
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T)).min())

    def excitation_probabilities(self):
        """Per-atom probability of being in the up state."""
        n = self.n_atoms
        idx = np.arange(1 << n)
        p = np.abs(self.psi) ** 2 if self.psi is not None else np.diag(self.rho).real
        return np.array([p[((idx >> i) & 1) == 1].sum() for i in range(n)])


def _lindblad_rhs(h, jumps, dim):
    hd = h.toarray()
    ls = [l.toarray() for l in jumps]
    lds = [l.conj().T for l in ls]
    ldl = sum((ld @ l for l, ld in zip(ls, lds)), np.zeros((dim, dim), dtype=complex))

    def rhs(_t, y):
        rho = y.reshape(dim, dim)
        d = -1j * (hd @ rho - rho @ hd)
        for l, ld in zip(ls, lds):
            d += l @ rho @ ld
        d -= 0.5 * (ldl @ rho + rho @ ldl)
        return d.ravel()
    return rhs


def exact_evolve(state: ExactState, chi_plus, chi_minus, gammas=(0.0, 0.0), duration=0.0,
                 t_eval=None, rtol=1e-11, atol=1e-13):
    """Propagate exactly. Returns the final ExactState, or a list at `t_eval` times.

    Closed systems: dense expm for N <= 8, Krylov expm_multiply above.
    Any nonzero gamma switches to the density-matrix master equation (N <= 7).
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    n = state.n_atoms
    h = hamiltonian(n, chi_plus, chi_minus, state.detunings)
    g_plus, g_minus = gammas
    times = [duration] if t_eval is None else [float(t) for t in t_eval]
    if any(t < 0 for t in times):
        raise ValueError("evaluation times must be non-negative")
    dissipative = g_plus != 0 or g_minus != 0
    out = []
    if dissipative or state.rho is not None:
        _check_n(n, mixed=True)
        _, jp, _ = spin_operators(n)
        jumps = []
        if g_plus:
            jumps.append(math.sqrt(g_plus) * jp.T.tocsr())
        if g_minus:
            jumps.append(math.sqrt(g_minus) * jp)
        dim = 1 << n
        rho0 = state.to_mixed().rho
        order = np.argsort(times)
        ts = np.array(times)[order]
        if ts[-1] == 0:
            sols = [rho0.copy() for _ in ts]
        else:
            sol = solve_ivp(_lindblad_rhs(h, jumps, dim), (0.0, ts[-1]), rho0.ravel(),
                            method="DOP853", t_eval=ts, rtol=rtol, atol=atol)
            if sol.status != 0:
                raise RuntimeError(f"master equation failed: {sol.message}")
            sols = [sol.y[:, i].reshape(dim, dim) for i in range(ts.size)]
        res = [None] * len(times)
        for k, i in enumerate(order):
            res[i] = ExactState(n, state.detunings, rho=sols[k])
        out = res
    elif n <= DENSE_LIMIT:
        hd = h.toarray()
        w, v = sla.eigh(hd)
        c = v.conj().T @ state.psi
        for t in times:
            out.append(ExactState(n, state.detunings, psi=v @ (np.exp(-1j * w * t) * c)))
    else:
        a = (-1j * h).tocsc()
        for t in times:
            out.append(ExactState(n, state.detunings, psi=expm_multiply(a * t, state.psi)))
    return out[-1] if t_eval is None else out


# -- closed forms ---------------------------------------------------------------

def oat_closed_form(n, theta, phi, chi, t):
    """<J+(t)> for H = -chi Jz^2 from a coherent state.

    sigma_+^i picks up exp(-i chi t sigma_z^j) from every other spin j; averaging
    over the product state gives (cos chi t - 2 i s_z sin chi t)^(N-1), with
    s_z = -cos(theta)/2 the per-spin projection.
    """
    t = np.asarray(t, dtype=float)
    s_z = -0.5 * math.cos(theta)
    jp0 = 0.5 * math.sin(theta) * np.exp(-1j * phi)
    return n * jp0 * (np.cos(chi * t) - 2j * s_z * np.sin(chi * t)) ** (n - 1)


# -- mean-field counterpart -------------------------------------------------------

def _meanfield_state(n, theta, phi, groups):
    """SpinField with one bin per detuning group (weights = group fractions)."""
    k = len(groups)
    bins = np.linspace(-0.5, 0.5, k) if k > 1 else np.zeros(1)
    weights = np.array([g[1] for g in groups], dtype=float)
    weights = weights / weights.sum()
    grid = MomentumGrid(bins, weights)
    half = weights * n / 2
    jp = half * math.sin(theta) * np.exp(-1j * phi)
    jz = -half * math.cos(theta)
    return SpinField(grid, jp.astype(complex), jz, float(n))


def meanfield_trajectory(n, theta, phi, chi_plus, chi_minus, gammas, groups, times,
                         cfg=None):
    """(<J+>(t), <Jz>(t)) from the production mean-field engine.

    The exact Hamiltonian carries a single-particle term (chi_+ - chi_-) Jz that
    the interferometer engine leaves out; it is added here as a uniform detuning.
    """
    st = _meanfield_state(n, theta, phi, groups)
    omega = np.array([g[0] for g in groups], dtype=float) + (chi_plus - chi_minus)
    profile = InhomogeneityProfile(omega, 0.0)
    rates = CouplingRates(0j, chi_plus, chi_minus, gammas[0], gammas[1], 0.0)
    cfg = cfg or IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13)
    times = np.asarray(times, dtype=float)
    _, snaps = evolve_effective(st, rates, profile, float(times[-1]), cfg, t_eval=times)
    return (np.array([s.jp.sum() for s in snaps]), np.array([s.jz.sum() for s in snaps]))


def _groups_for(scenario, n, delta):
    if scenario in ("homogeneous", "dissipative"):
        return [(0.0, n)], np.zeros(n)
    if scenario == "two_group":
        if n % 2:
            raise ValueError("two_group scenario needs even N")
        det = np.array([delta / 2] * (n // 2) + [-delta / 2] * (n // 2))
        return [(-delta / 2, n // 2), (delta / 2, n // 2)], det
    raise ValueError(f"unknown scenario {scenario!r}")


def scenario_run(scenario, n, c=1.0, theta=math.pi / 3, t_max=1.0, n_t=41, delta=1.0,
                 gamma_c=0.05):
    """Exact and mean-field trajectories for one (scenario, N).

    Couplings scale as c / N so the mean-field dynamics is N independent. Time is
    in units where c = 1 sets the collective rate.
    """
    chi_p, chi_m = c / n, 0.0
    gammas = (0.0, 0.0)
    if scenario == "dissipative":
        gammas = (gamma_c / n, 0.0)
    groups, det = _groups_for(scenario, n, delta)
    times = np.linspace(0.0, t_max, n_t)
    ex = exact_evolve(ExactState.coherent(n, theta, 0.0, det), chi_p, chi_m, gammas,
                      t_eval=times)
    jp_ex = np.array([s.collective()[0] for s in ex])
    jz_ex = np.array([s.collective()[1] for s in ex])
    jp_mf, jz_mf = meanfield_trajectory(n, theta, 0.0, chi_p, chi_m, gammas, groups, times)
    return times, (jp_ex, jz_ex), (jp_mf, jz_mf)


def meanfield_vs_exact(n_grid, scenario="homogeneous", **kw):
    """Error table rows: (N, scenario, max phase error of <J+> in rad,
    max |<Jz> error| / (N/2), max |<J+>| relative error)."""
    rows = []
    for n in n_grid:
        _, (jp_e, jz_e), (jp_m, jz_m) = scenario_run(scenario, int(n), **kw)
        dphase = np.angle(jp_e * np.conj(jp_m))
        jz_err = np.max(np.abs(jz_e - jz_m)) / (n / 2)
        amp_err = np.max(np.abs(np.abs(jp_e) - np.abs(jp_m)) / np.maximum(np.abs(jp_m), 1e-300))
        rows.append((int(n), scenario, float(np.max(np.abs(dphase))), float(jz_err),
                     float(amp_err)))
    return rows


ERROR_TABLE_COLUMNS = ("n_atoms", "scenario", "max_phase_error_rad", "max_jz_error_rel",
                       "max_amplitude_error_rel")


# -- collective recoil ----------------------------------------------------------------

def collective_recoil_check(n, chi=1.0, detunings=None, t_grid=None):
    """One-excitation Dicke state under H = chi J+J- (+ detunings).

    Reports the largest deviation of any per-atom excitation probability from 1/N,
    the spread of those probabilities, and the minimum fidelity with the initial
    symmetric state over the time grid.
    """
    if n > 10:
        raise DimensionError("collective_recoil_check supports N <= 10")
    t_grid = np.linspace(0.0, 10.0, 51) if t_grid is None else np.asarray(t_grid)
    psi0 = ExactState.dicke(n, 1, detunings)
    states = exact_evolve(psi0, chi, 0.0, t_eval=t_grid)
    dev, var, fid = 0.0, 0.0, 1.0
    for s in states:
        p = s.excitation_probabilities()
        dev = max(dev, float(np.max(np.abs(p - 1.0 / n))))
        var = max(var, float(np.var(p)))
        fid = min(fid, float(abs(np.vdot(psi0.psi, s.psi)) ** 2))
    return {"n_atoms": n, "chi": chi, "max_probability_deviation": dev,
            "max_probability_variance": var, "min_symmetric_fidelity": fid,
            "residual_norm": float(np.linalg.norm(
                hamiltonian(n, chi, 0.0) @ psi0.psi - chi * n * psi0.psi))}


# -- invariants ---------------------------------------------------------------------

def hermiticity_error(h):
    d = h - h.conj().T
    return float(abs(d).max()) if d.nnz else 0.0


def j2_operator(n):
    jz, jp, _ = spin_operators(n)
    jm = jp.T.tocsr()
    return (0.5 * (jp @ jm + jm @ jp) + jz @ jz).tocsr()


def j2_sector_populations(state: ExactState):
    """Populations of each total-J sector, keyed by j."""
    w, v = np.linalg.eigh(j2_operator(state.n_atoms).toarray())
    j = np.round(0.5 * (-1 + np.sqrt(1 + 4 * np.clip(w, 0, None))) * 2) / 2
    if state.psi is not None:
        amp = np.abs(v.conj().T @ state.psi) ** 2
    else:
        amp = np.einsum("ij,jk,ki->i", v.conj().T, state.rho, v).real
    out = {}
    for jj, a in zip(j, amp):
        out[float(jj)] = out.get(float(jj), 0.0) + float(a)
    return out

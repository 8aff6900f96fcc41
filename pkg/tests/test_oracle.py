import math

import numpy as np
import pytest

from momex.oracle import (ERROR_TABLE_COLUMNS, DimensionError, ExactState,
                          collective_recoil_check, exact_evolve, hamiltonian, hermiticity_error,
                          j2_operator, j2_sector_populations, meanfield_vs_exact,
                          oat_closed_form, scenario_run, spin_operators)

RNG = np.random.default_rng(7)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_hamiltonian_hermitian(n):
    h = hamiltonian(n, 0.7, -0.3, RNG.normal(size=n))
    assert hermiticity_error(h) == 0.0


def test_operator_algebra():
    jz, jp, _ = spin_operators(4)
    jm = jp.T.tocsr()
    comm = (jp @ jm - jm @ jp).toarray()
    assert np.allclose(comm, 2 * jz.toarray())


def test_exchange_identity():
    n = 5
    jz, jp, _ = spin_operators(n)
    h = hamiltonian(n, 0.8, 0.3).toarray()
    j2 = j2_operator(n).toarray()
    alt = 1.1 * (j2 - (jz @ jz).toarray()) + (0.8 - 0.3) * jz.toarray()
    assert np.allclose(h, alt)


def test_coherent_state_collective_values():
    s = ExactState.coherent(6, 1.1, 0.4)
    jp, jz = s.collective()
    assert jp == pytest.approx(6 * 0.5 * math.sin(1.1) * np.exp(-0.4j))
    assert jz == pytest.approx(-3 * math.cos(1.1))
    assert s.norm_error() < 1e-14


def test_norm_and_energy_conserved():
    n = 6
    det = RNG.normal(size=n)
    s = ExactState.coherent(n, 1.0, 0.2, det)
    h = hamiltonian(n, 0.5, 0.1, det)
    e0 = s.expect(h).real
    for out in exact_evolve(s, 0.5, 0.1, t_eval=[0.5, 2.0, 7.0]):
        assert out.norm_error() < 1e-12
        assert out.expect(h).real == pytest.approx(e0, abs=1e-10)


def test_j2_sectors_conserved_without_detunings():
    s = ExactState.coherent(5, 0.9)
    pops0 = j2_sector_populations(s)
    pops1 = j2_sector_populations(exact_evolve(s, 0.6, 0.2, duration=3.0))
    assert pops0 == pytest.approx(pops1, abs=1e-10)
    assert pops0[2.5] == pytest.approx(1.0)


def test_dense_and_krylov_paths_agree(monkeypatch):
    import momex.oracle as oracle

    n = 6
    s = ExactState.coherent(n, 1.2, 0.3, RNG.normal(size=n))
    dense = exact_evolve(s, 0.4, 0.1, duration=2.0)
    monkeypatch.setattr(oracle, "DENSE_LIMIT", 0)
    krylov = exact_evolve(s, 0.4, 0.1, duration=2.0)
    assert np.allclose(dense.psi, krylov.psi, atol=1e-10)


def test_oat_closed_form_matches_exact_n12():
    n, theta, chi = 12, math.pi / 3, 0.4
    # chi_+ = chi_- = chi/2 gives H = chi (J^2 - Jz^2), i.e. -chi Jz^2 on the symmetric sector
    s = ExactState.coherent(n, theta)
    times = np.linspace(0, 5, 11)
    states = exact_evolve(s, chi / 2, chi / 2, t_eval=times)
    ex = np.array([x.collective()[0] for x in states])
    cf = oat_closed_form(n, theta, 0.0, chi, times)
    assert np.max(np.abs(ex - cf)) < 1e-9


def test_lindblad_trace_and_positivity():
    s = ExactState.coherent(4, 1.0)
    for out in exact_evolve(s, 0.3, 0.0, gammas=(0.2, 0.05), t_eval=[0.5, 3.0]):
        assert out.norm_error() < 1e-9
        assert out.min_eigenvalue() > -1e-9
        assert np.allclose(out.rho, out.rho.conj().T, atol=1e-12)


def test_lindblad_without_jumps_matches_pure():
    s = ExactState.coherent(4, 0.8, 0.1, RNG.normal(size=4))
    a = exact_evolve(s.to_mixed(), 0.3, 0.1, duration=2.0)
    b = exact_evolve(s, 0.3, 0.1, duration=2.0)
    assert np.allclose(a.rho, np.outer(b.psi, b.psi.conj()), atol=1e-9)


def test_gamma_plus_moves_population_down():
    s = ExactState.coherent(4, math.pi / 2)
    out = exact_evolve(s, 0.0, 0.0, gammas=(0.5, 0.0), duration=1.0)
    assert out.collective()[1] < s.collective()[1]


def test_dimension_limits():
    with pytest.raises(DimensionError):
        ExactState.coherent(13, 1.0)
    with pytest.raises(DimensionError):
        exact_evolve(ExactState.coherent(8, 1.0), 0.1, 0.0, gammas=(0.1, 0.0), duration=1.0)
    with pytest.raises(ValueError):
        exact_evolve(ExactState.coherent(2, 1.0), 0.1, 0.0, duration=-1.0)


def test_dicke_uniform_probabilities():
    res = collective_recoil_check(6, chi=1.0)
    assert res["max_probability_deviation"] < 1e-12
    assert res["residual_norm"] < 1e-12
    res = collective_recoil_check(6, chi=0.0, detunings=RNG.normal(size=6))
    # single-particle phases cannot move population
    assert res["max_probability_deviation"] < 1e-12
    assert res["min_symmetric_fidelity"] < 0.9


def test_gap_protects_symmetric_state():
    det = RNG.normal(size=6)
    weak = collective_recoil_check(6, chi=0.0, detunings=det)["min_symmetric_fidelity"]
    strong = collective_recoil_check(6, chi=10.0, detunings=det)["min_symmetric_fidelity"]
    assert strong > 0.99 > weak


def test_error_table_shape_and_trend():
    rows = meanfield_vs_exact([4, 8], "homogeneous")
    assert len(rows[0]) == len(ERROR_TABLE_COLUMNS)
    assert rows[1][2] < rows[0][2]


def test_scenarios_run():
    for scen in ("two_group", "dissipative"):
        t, ex, mf = scenario_run(scen, 4, n_t=5)
        assert len(t) == 5 and ex[0].shape == mf[0].shape
    with pytest.raises(ValueError):
        scenario_run("two_group", 3)

import math

import numpy as np
import pytest

from momex.experiments import (PRESETS, Table, echo_imbalance_sequence, exp_gap_protection,
                               exp_phase_vs_jz, exp_superradiant_transfer, local_maxima,
                               map_ordered, oat_phase_sequence, oscillation_frequency,
                               preset_parameters, rates_for_ratio, reoverlap_time, run_preset)
from momex.physics import TWO_PI, PhysicsParams

P = PhysicsParams()


def _square(x):
    return x * x


def test_table_helpers():
    t = Table(["a", "b"], [(1, 2.0), (2, 3.0), (1, 4.0)])
    assert np.array_equal(t.column("b"), [2.0, 3.0, 4.0])
    assert len(t.where("a", 1).rows) == 2


def test_map_ordered_keeps_order():
    assert map_ordered(_square, range(6), workers=2) == [0, 1, 4, 9, 16, 25]
    assert map_ordered(_square, [3]) == [9]


@pytest.mark.parametrize("ratio", [0.5, 1.7, 4.0])
def test_rates_for_ratio(ratio):
    r = rates_for_ratio(P, ratio)
    assert abs(r.chi) * P.n_atoms / P.sigma_in == pytest.approx(ratio, rel=1e-12)
    assert rates_for_ratio(P, 0.0).chi == 0


def test_rates_for_ratio_keeps_sign():
    neg = rates_for_ratio(P.replace(delta_d=-P.delta_d), 2.0)
    assert neg.chi < 0


def test_oat_sequence_total_dressing():
    seq = oat_phase_sequence(math.pi / 4, 10e-6, 30e-6)
    assert seq.dressing_time == pytest.approx(60e-6)
    assert seq.events[-1].scan


def test_echo_sequence_validation():
    with pytest.raises(ValueError):
        echo_imbalance_sequence(100e-6, 0.0, 90e-6, 25e-6)
    seq = echo_imbalance_sequence(1.1e-3, -5e-6, 25e-6)
    assert seq.total_duration == pytest.approx(2.2e-3 - 5e-6)


def test_local_maxima_and_frequency():
    t = np.linspace(0, 1e-3, 501)
    y = np.exp(-t / 5e-4) * (1 + 0.3 * np.cos(TWO_PI * 4e3 * t))
    assert local_maxima(y).size >= 2
    assert oscillation_frequency(t, y) == pytest.approx(4e3, rel=0.05)
    assert local_maxima(np.exp(-t / 1e-4)).size == 0
    assert oscillation_frequency(t, np.exp(-t / 1e-4)) == 0.0


def test_superradiant_transfer_conserves_atoms():
    params = P.replace(delta_d=P.omega_z)
    t = exp_superradiant_transfer(params, np.linspace(0, 20e-6, 5))
    total = t.column("n_up") + t.column("n_down")
    assert np.allclose(total, P.n_atoms)
    assert t.column("n_up")[0] == pytest.approx(P.n_atoms / 2)
    assert np.all(np.diff(t.column("n_up")) > 0)
    with pytest.raises(ValueError):
        exp_superradiant_transfer(params, [2e-6, 1e-6])


def test_phase_vs_jz_linear():
    t = exp_phase_vs_jz(P, np.linspace(-0.5, 0.5, 5))
    assert t.meta["r_squared"] > 0.9999
    expected = 2 * t.meta["chi"] * t.meta["dressing_time"]
    # delta_phi = 2 chi Jz t  with the Jz convention used by the sequence
    assert abs(t.meta["slope"]) == pytest.approx(abs(expected), rel=1e-6)


def test_gap_protection_zero_ratio_is_pure_dephasing():
    t = exp_gap_protection(P, np.linspace(0, 100e-6, 6), [0.0], n_bins=48)
    c = t.column("contrast_no_sr")
    assert np.all(np.diff(c) < 0)
    assert np.allclose(t.column("contrast"), c)
    with pytest.raises(ValueError):
        exp_gap_protection(P, [1e-6, 0.0], [1.0])


def test_reoverlap_time_is_echo_time():
    assert reoverlap_time(P, 70e-6) == pytest.approx(140e-6, rel=1e-6)


def test_presets_registry():
    assert set(PRESETS) == {"fig2a", "fig2d", "fig2e", "fig3a", "fig3c", "fig4a", "fig4e"}
    assert "tx_grid" in preset_parameters("fig4a")
    with pytest.raises(KeyError):
        run_preset("fig9", P)
    with pytest.raises(ValueError):
        run_preset("fig2e", P, {"tx_grid": [0.0]})

"""
Tests for link metrics and the power model.
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from errors import ConfigurationError, UndefinedMetricError
from geometry_channel import ChannelSet, PhaseConfig, effective_channel, noise_covariance, whiten
from metrics import (
    MetricsReport,
    PowerModel,
    SystemParams,
    bs_power,
    capacity,
    energy_efficiency,
    evaluate_report,
    icdf_at,
    rank_proxy,
    received_snr_db,
    reciprocal_condition,
    ris_power,
    total_power,
)

REL = 1e-9

POWER = PowerModel(upsilon_bs=3.0, p_c_bs=6.0, upsilon_lna=3.0, p_ps=1e-6, p_s_aris=0.48)
SYSTEM = SystemParams(p_t=1.0, sigma_v2=1e-12, bandwidth_hz=1e6)


def power_model(**kwargs):
    return POWER.model_copy(update=kwargs)


class TestCapacity:
    def test_identity(self):
        assert capacity(np.eye(2)) == pytest.approx(2.0, rel=REL)

    def test_scalar(self):
        assert capacity(np.array([[3.0]])) == pytest.approx(math.log2(10), rel=REL)

    def test_zero(self):
        assert capacity(np.zeros((2, 3))) == 0.0

    def test_matches_log_det(self, rng):
        h = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        _, logdet = np.linalg.slogdet(np.eye(3) + h @ h.conj().T)
        assert capacity(h) == pytest.approx(logdet / math.log(2), rel=REL)


class TestReciprocalCondition:
    def test_identity(self):
        assert reciprocal_condition(np.eye(3)) == pytest.approx(1.0, rel=REL)

    def test_diagonal(self):
        assert reciprocal_condition(np.diag([2.0, 1.0])) == pytest.approx(0.5, rel=REL)

    def test_rank_one(self):
        h = np.outer([1.0, 2.0, 3.0], [1.0, -1.0])
        assert reciprocal_condition(h) == pytest.approx(0.0, abs=1e-12)

    def test_zero_matrix(self):
        with pytest.raises(UndefinedMetricError):
            reciprocal_condition(np.zeros((2, 2)))


class TestRankProxy:
    @pytest.mark.parametrize("h,expected", [
        (np.eye(4), 4),
        (np.diag([10.0, 0.5]), 1),
        (np.diag([10.0, 2.0, 1.0]), 3),
    ])
    def test_examples(self, h, expected):
        assert rank_proxy(h, 0.1) == expected

    def test_zero_matrix(self):
        with pytest.raises(UndefinedMetricError):
            rank_proxy(np.zeros((2, 2)))

    def test_bad_tau(self):
        with pytest.raises(ConfigurationError):
            rank_proxy(np.eye(2), 1.5)


def test_received_snr_db():
    assert received_snr_db(np.full((2, 1), math.sqrt(10.0))) == pytest.approx(10.0)
    assert received_snr_db(np.zeros((2, 2))) == -math.inf


class TestPower:
    def test_bs_power(self):
        assert bs_power(POWER, SYSTEM, 4) == pytest.approx(18.0, rel=REL)

    def test_bs_power_lossless(self):
        pm = power_model(upsilon_bs=1.0, p_c_bs=0.0)
        sp = SYSTEM.model_copy(update={"p_t": 2.0})
        assert bs_power(pm, sp, 1) == pytest.approx(2.0, rel=REL)

    def test_bs_power_tiny_tx(self):
        sp = SYSTEM.model_copy(update={"p_t": 1e-30})
        assert bs_power(POWER, sp, 4) == pytest.approx(6.0, rel=REL)

    def test_ris_static_terms(self, make_panel):
        panel = make_panel(rows=4, cols=4, noise=0.0)
        value = ris_power(POWER, SYSTEM, panel, np.zeros((16, 4)), PhaseConfig.zeros(panel))
        assert value == pytest.approx(0.480016, rel=REL)

    def test_ris_scalar(self, make_panel):
        panel = make_panel(c=2.0, noise=0.1)
        pm = power_model(p_ps=0.0, p_s_aris=0.0)
        value = ris_power(pm, SYSTEM, panel, np.ones((1, 1)), PhaseConfig.zeros(panel))
        assert value == pytest.approx(13.2, rel=REL)

    def test_ris_phase_invariant(self, make_panel, rng):
        panel = make_panel(rows=2, cols=2, c=5.0, bits=2, noise=1e-3)
        f = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        a = ris_power(POWER, SYSTEM, panel, f, PhaseConfig(panel_id="P1", indices=(0, 1, 2, 3)))
        b = ris_power(POWER, SYSTEM, panel, f, PhaseConfig(panel_id="P1", indices=(3, 3, 0, 1)))
        assert a == pytest.approx(b, rel=REL)

    def test_ris_requires_isotropy(self, make_panel):
        panel = make_panel()
        with pytest.raises(ConfigurationError):
            ris_power(power_model(tx_isotropy=False), SYSTEM, panel, np.ones((1, 1)), PhaseConfig.zeros(panel))

    def test_total_without_panels(self):
        assert total_power(POWER, SYSTEM, [], [], [], 4) == pytest.approx(18.0, rel=REL)

    def test_total_is_additive(self, make_panel, rng):
        a, b = make_panel(id="A", rows=2, cols=2, c=3.0), make_panel(id="B", rows=2, cols=2, c=3.0)
        f = rng.standard_normal((4, 4))
        configs = [PhaseConfig.zeros(a), PhaseConfig.zeros(b)]
        single = ris_power(POWER, SYSTEM, a, f, configs[0])
        assert total_power(POWER, SYSTEM, [a, b], [f, f], configs, 4) == pytest.approx(18.0 + 2 * single, rel=REL)

    def test_single_panel_field_values(self, make_panel):
        panel = make_panel(rows=4, cols=4)
        value = total_power(POWER, SYSTEM, [panel], [np.zeros((16, 4))], [PhaseConfig.zeros(panel)], 4)
        assert value == pytest.approx(18.480016, rel=REL)

    def test_upsilon_below_one_rejected(self):
        with pytest.raises(ValidationError):
            PowerModel(upsilon_bs=0.5, p_c_bs=6.0, upsilon_lna=3.0, p_ps=0.0, p_s_aris=0.0)


class TestEnergyEfficiency:
    def test_arithmetic(self):
        assert energy_efficiency(10.0, SYSTEM, 10.0) == pytest.approx(1e6, rel=REL)

    def test_zero_capacity(self):
        assert energy_efficiency(0.0, SYSTEM, 10.0) == 0.0

    def test_non_positive_power(self):
        with pytest.raises(ConfigurationError):
            energy_efficiency(1.0, SYSTEM, 0.0)


class TestIcdf:
    def test_hundred_samples(self):
        assert icdf_at(range(1, 101), 0.68) == 33

    def test_constant(self):
        assert icdf_at([4.5] * 7, 0.68) == 4.5

    def test_near_one_gives_minimum(self):
        assert icdf_at([3.0, 1.0, 2.0], 1 - 1e-12) == 1.0

    def test_coverage_property(self, rng):
        samples = rng.standard_normal(37)
        v = icdf_at(samples, 0.68)
        assert np.mean(samples >= v) >= 0.68
        assert np.mean(samples > v) < 0.68

    def test_empty(self):
        with pytest.raises(ConfigurationError):
            icdf_at([], 0.68)


def test_capacity_grows_with_transmit_power(make_panel):
    rng = np.random.default_rng(5)
    panel = make_panel(rows=2, cols=2, c=4.0, bits=2, noise=0.05)
    cs = ChannelSet(
        h_direct=rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)),
        g_list=(rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4)),),
        f_list=(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)),),
        wavelength=0.1,
    )
    config = [PhaseConfig(panel_id="P1", indices=(0, 3, 1, 2))]
    r_n = noise_covariance(cs, [panel], 0.5)
    values = [capacity(whiten(effective_channel(cs, [panel], config, p_t), r_n))
              for p_t in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert values == sorted(values)


def test_equal_singular_values_give_unit_epsilon(rng):
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    assert reciprocal_condition(2.5 * q) == pytest.approx(1.0, rel=REL)
    assert reciprocal_condition(q @ np.diag([2.5, 2.5, 2.0])) < 1.0


def test_energy_efficiency_scales_with_bandwidth():
    wide = SYSTEM.model_copy(update={"bandwidth_hz": 3e6})
    assert energy_efficiency(4.0, wide, 7.0) == pytest.approx(3 * energy_efficiency(4.0, SYSTEM, 7.0), rel=REL)


def test_icdf_nonincreasing_in_level(rng):
    samples = rng.exponential(size=50)
    values = [icdf_at(samples, level) for level in np.linspace(0.05, 0.95, 19)]
    assert values == sorted(values, reverse=True)


def test_evaluate_report():
    report = evaluate_report(np.eye(2), 10.0, SYSTEM)
    assert isinstance(report, MetricsReport)
    assert report.capacity_bpshz == pytest.approx(2.0)
    assert report.epsilon == pytest.approx(1.0)
    assert report.ee_bits_per_joule == pytest.approx(2e5)
    assert report.rank_proxy == 2
    assert report.csv_row()[-1] == "2"

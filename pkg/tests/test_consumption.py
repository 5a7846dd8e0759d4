import jax
import jax.numpy as jnp
import numpy as onp
import pytest

from jaxcfm.config import SystemConfig
from jaxcfm.consumption import (
    ConsumptionParameters,
    ConsumptionReport,
    achievable_rates,
    active_antenna_counts,
    ap_average_powers,
    effective_snr,
    fronthaul_coefficients,
    gain,
    network_power,
    pa_consumed_power,
    total_transmit_power,
)
from jaxcfm.precoding import AntennaPowerVector, PrecoderSet, zf_precoder
from jaxcfm.scenario import TargetProfile

from .helpers import iid_channel, unit_targets

params = ConsumptionParameters()


def test_parameters_from_config():
    cfg = SystemConfig(pa_max_power="6 W", p_fix="10 W")
    from_config = ConsumptionParameters.from_config(cfg)
    assert from_config.pa_max_power == 6.0
    assert from_config.p_fix == 10.0
    assert from_config.p_circuit == 0.7
    with pytest.raises(ValueError):
        ConsumptionParameters(pa_max_efficiency=1.5)


def test_transmit_power():
    assert jnp.isclose(total_transmit_power(jnp.array([0.25, 0.25])), 0.5)
    assert total_transmit_power(jnp.zeros(4)) == 0


def test_pa_consumption():
    assert jnp.isclose(
        pa_consumed_power(jnp.array([1.0]), params), 5.0942, rtol=1e-4
    )
    assert pa_consumed_power(jnp.zeros(3), params) == 0
    # Splitting the power over two antennas costs sqrt(2) more
    assert jnp.isclose(
        pa_consumed_power(jnp.array([0.5, 0.5]), params),
        jnp.sqrt(2.0) * pa_consumed_power(jnp.array([1.0, 0.0]), params),
    )


def test_pa_consumption_is_monotone():
    p = jnp.array([0.1, 0.0, 2.0])
    assert pa_consumed_power(p, params) <= pa_consumed_power(
        p + jnp.array([0.0, 0.3, 0.1]), params
    )


def test_inactive_antennas_do_not_count():
    p = AntennaPowerVector(
        jnp.array([1.0, 1.0]), active_mask=jnp.array([True, False])
    )
    assert jnp.isclose(total_transmit_power(p), 1.0)
    assert (active_antenna_counts(p, (1, 1)) == onp.array([1, 0])).all()


def test_network_power_single_active_ap():
    p = jnp.concatenate([jnp.full(8, 1 / 64), jnp.zeros(8)])
    report = network_power(p, (8, 8), params)
    assert jnp.isclose(report.p_pas, 5.0942, rtol=1e-4)
    assert jnp.isclose(report.p_net, 25.694, rtol=1e-4)
    assert report.active_ap_count == 1
    assert (report.active_antenna_counts == onp.array([8, 0])).all()


def test_network_power_fixed_part():
    antennas = (4, 4, 4)
    report = network_power(jnp.full(12, 1e-6), antennas, params)
    assert jnp.isclose(report.p_net - report.p_pas, 3 * (15.0 + 0.7 * 4))
    assert network_power(jnp.zeros(12), antennas, params).p_net == 0
    with pytest.raises(ValueError):
        network_power(jnp.ones(5), antennas, params)


def test_fronthaul():
    assert fronthaul_coefficients((8, 4, 8), (0, 2), 3, 16) == 16 * 3 * 16
    report = network_power(
        jnp.array([1.0, 1.0, 0.0, 0.0]), (2, 2), params, unit_targets(2, 4)
    )
    assert report.fronthaul == 2 * 2 * 4


def test_ap_average_powers():
    mean = ap_average_powers(jnp.array([1.0, 3.0, 0.5]), (2, 1))
    assert jnp.isclose(mean, jnp.array([2.0, 0.5])).all()


def test_achievable_rates():
    assert jnp.isclose(achievable_rates(unit_targets(3, 16)), 1.0).all()
    targets = TargetProfile(jnp.array([100.0]), 256)
    assert jnp.isclose(achievable_rates(targets), 0.4757, rtol=1e-4).all()
    band = achievable_rates(targets, band_total=True)
    assert jnp.isclose(band, 256 * 0.4757, rtol=1e-4).all()
    # More subcarriers carry more rate for the same band SNR, bounded by
    # gamma / ln 2
    fewer = achievable_rates(TargetProfile(jnp.array([100.0]), 16), True)
    assert (fewer < band).all()
    assert (band < 100.0 / jnp.log(2.0)).all()


def test_effective_snr_of_zf():
    ch = iid_channel(jax.random.PRNGKey(0), 4, 2, (3, 3))
    targets = TargetProfile(jnp.array([20.0, 3.0]), 4)
    noise = 0.1
    ws = zf_precoder(ch, targets, noise)
    snr = effective_snr(ch, ws, noise)
    assert snr.shape == (2, 4)
    assert jnp.isclose(
        snr, targets.d_tilde_gamma[:, None], rtol=1e-9
    ).all()
    perturbed = PrecoderSet(ws.w.at[:, 0, :].add(0.3), "conventional")
    assert not jnp.isclose(
        effective_snr(ch, perturbed, noise), snr, rtol=1e-3
    ).all()
    silent = PrecoderSet(jnp.zeros_like(ws.w), "conventional")
    assert (effective_snr(ch, silent, noise) == 0).all()


def test_gain():
    report = ConsumptionReport(1.0, 2.0, 10.0, onp.array([2]), 0)
    assert gain(report, report) == (1.0, 1.0)
    baseline = ConsumptionReport(2.0, 4.0, 30.0, onp.array([2]), 0)
    assert gain(report, baseline) == (3.0, 2.0)
    report.with_baseline(baseline)
    assert report.to_dict()["gain_net"] == 3.0
    silent = ConsumptionReport(0.0, 0.0, 0.0, onp.array([0]), 0)
    with pytest.raises(ValueError):
        gain(silent, baseline)


def test_report_dict():
    p = jnp.array([0.25, 0.25, 0.0, 0.0])
    report = network_power(p, (2, 2), params, unit_targets(2, 4))
    out = report.to_dict()
    assert out["active_aps"] == 1
    assert out["active_antennas"] == 2
    assert jnp.isclose(out["sum_rate"], 8.0)
    assert "gain_net" not in out

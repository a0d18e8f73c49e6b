import math
import warnings

import numpy as np
import pytest

from channel import ChannelParams, entanglement_of_formation, choi_state
from errors import ClosedFormMismatchWarning, NonPhysicalStateError
from gaussian_core import EPRSpec, db_to_r
from teleporter import (
    SQRT2,
    OutputMoments,
    TeleporterConfig,
    channel_params,
    closed_form_tv,
    closed_form_tv_lossy,
    conditional_variance_epr,
    conditional_variances,
    deterministic_curve,
    fidelity,
    heralded_curve,
    input_moments,
    output_moments,
    teleporter_state,
    transfer_gains,
    tv_parameters,
    unity_gain_phi,
    unity_gain_phis,
)

R_3DB = db_to_r(3.0)


def _beta(r, efficiency=1.0):
    return math.sqrt(2.0 * efficiency) * math.tanh(r)


def test_config_validation():
    with pytest.raises(ValueError):
        TeleporterConfig.symmetric(0.3, g=0.9)
    with pytest.raises(ValueError):
        TeleporterConfig.symmetric(0.3, efficiency=0.0)
    with pytest.raises(ValueError):
        TeleporterConfig(EPRSpec.symmetric(0.3), input_var=(0.5, 1.0))
    assert TeleporterConfig.symmetric(0.3).is_symmetric
    assert not TeleporterConfig.symmetric(0.3).replace(phi_y=1.0).is_symmetric


def test_teleporter_state_is_physical():
    assert teleporter_state(TeleporterConfig.symmetric(1.0, efficiency=0.8)).is_physical()


@pytest.mark.parametrize("r", [0.0, 0.3454, 1.0])
def test_unity_gain_reproduces_input_mean(r):
    cfg = TeleporterConfig.symmetric(r, input_mean=(0.7, -1.3))
    out = output_moments(cfg)
    assert out.mean_x == pytest.approx(0.7, abs=1e-10)
    assert out.mean_y == pytest.approx(-1.3, abs=1e-10)


def test_classical_teleportation_adds_two_units_of_noise():
    cfg = TeleporterConfig.symmetric(0.0)
    out = output_moments(cfg)
    assert out.var_x == pytest.approx(3.0, abs=1e-10)
    assert out.var_y == pytest.approx(3.0, abs=1e-10)
    tv = tv_parameters(cfg)
    assert tv.t_q == pytest.approx(2.0 / 3.0, abs=1e-10)
    assert tv.v_q == pytest.approx(4.0, abs=1e-10)


def test_strong_squeezing_approaches_ideal_transfer():
    tv = tv_parameters(TeleporterConfig.symmetric(6.0))
    assert tv.t_q > 1.9999
    assert tv.v_q < 1e-9


def test_zero_input_has_no_tv():
    with pytest.raises(ValueError):
        tv_parameters(TeleporterConfig.symmetric(0.5, input_mean=(0.0, 0.0)))


def test_classical_bound_without_squeezing():
    for phi in np.linspace(0.1, 3.0, 30):
        tv = tv_parameters(TeleporterConfig.symmetric(0.0, phi))
        assert tv.t_q < 1.0 + 1e-9 or tv.v_q > 1.0 - 1e-9


def test_conditional_variance_epr():
    assert conditional_variance_epr(0.0) == 1.0
    assert conditional_variance_epr(8.0) < 1e-6
    assert conditional_variance_epr(0.3454) == pytest.approx(0.80115, abs=1e-4)
    for r in np.linspace(0.0, 2.0, 20):
        assert conditional_variance_epr(r) == pytest.approx(1.0 / math.cosh(2 * r), rel=1e-12)
    with pytest.raises(ValueError):
        conditional_variance_epr(-0.1)


def test_fidelity():
    state = OutputMoments(0.5, -0.5, 1.0, 1.0)
    assert fidelity(state, state) == pytest.approx(1.0)
    assert fidelity(state, OutputMoments(0.5, -0.5, 3.0, 3.0)) == pytest.approx(0.5)
    shifted = [fidelity(state, OutputMoments(0.5 + d, -0.5, 1.0, 1.0)) for d in (0.1, 0.5, 1.0)]
    assert shifted[0] > shifted[1] > shifted[2]


def test_classical_fidelity_is_one_half():
    cfg = TeleporterConfig.symmetric(0.0)
    assert fidelity(input_moments(cfg), output_moments(cfg)) == pytest.approx(0.5)


@pytest.mark.parametrize("r", [0.0, 0.5, 1.3])
def test_unity_gain_phi_at_g1_is_sqrt2(r):
    assert unity_gain_phi(r) == pytest.approx(SQRT2, abs=1e-10)


@pytest.mark.parametrize("r,g,efficiency", [(0.5, 1.2, 1.0), (R_3DB, 1.4, 1.0), (0.8, 1.3, 0.9)])
def test_unity_gain_phi_root(r, g, efficiency):
    phi = unity_gain_phi(r, g, efficiency)
    beta = _beta(r, efficiency)
    assert phi == pytest.approx(beta + (SQRT2 - beta) / g ** 2, abs=1e-10)
    k = transfer_gains(TeleporterConfig.symmetric(r, phi, g, efficiency))
    assert k == pytest.approx((1.0, 1.0), abs=1e-10)


def test_unity_gain_phis_per_quadrature():
    cfg = TeleporterConfig(EPRSpec(0.4, 0.6, 0.4, 0.6), g=1.2)
    phi_x, phi_y = unity_gain_phis(cfg)
    k = transfer_gains(cfg.replace(phi_x=phi_x, phi_y=phi_y))
    assert k == pytest.approx((1.0, 1.0), abs=1e-10)


def test_output_is_continuous_at_unit_gain():
    cfg = TeleporterConfig.symmetric(0.6, 1.1)
    a = output_moments(cfg)
    b = output_moments(cfg.replace(g=1.0 + 1e-8))
    assert (b.mean_x, b.var_x) == pytest.approx((a.mean_x, a.var_x), abs=1e-6)


def test_loss_increases_output_noise_at_unity_gain():
    variances = [output_moments(TeleporterConfig.symmetric(0.5, efficiency=t)).var_x
                 for t in (1.0, 0.95, 0.9, 0.8, 0.6)]
    assert all(b > a for a, b in zip(variances, variances[1:]))


def test_closed_forms_match_covariance_pipeline():
    rng = np.random.default_rng(29)
    for _ in range(50):
        r, g, phi = rng.uniform(0.0, 1.5), rng.uniform(1.0, 2.0), rng.uniform(0.2, 2.5)
        tv = tv_parameters(TeleporterConfig.symmetric(r, phi, g))
        closed = closed_form_tv(r, g, phi)
        assert tv.t_q == pytest.approx(closed.t_q, rel=1e-8, abs=1e-12)
        assert tv.v_q == pytest.approx(closed.v_q, rel=1e-8, abs=1e-12)


def test_closed_form_carries_input_amplitude():
    closed = closed_form_tv(0.0, 1.0, SQRT2, x_in=2.0)
    assert closed.t_q == pytest.approx(16.0 / 6.0)


def test_lossy_closed_form_reduces_to_lossless():
    rng = np.random.default_rng(31)
    for _ in range(50):
        r, g, phi = rng.uniform(0.0, 1.5), rng.uniform(1.0, 2.0), rng.uniform(0.2, 2.5)
        lossless = closed_form_tv(r, g, phi)
        lossy = closed_form_tv_lossy(r, g, phi, 1.0)
        assert lossy.t_q == pytest.approx(lossless.t_q, rel=1e-8, abs=1e-12)
        assert lossy.v_q == pytest.approx(lossless.v_q, rel=1e-8, abs=1e-12)


def test_cross_check_is_silent_when_lossless():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        tv_parameters(TeleporterConfig.symmetric(0.7, 1.2, 1.3), cross_check=True)
    assert not [w for w in caught if issubclass(w.category, ClosedFormMismatchWarning)]


def test_channel_params_classical():
    px, py = channel_params(TeleporterConfig.symmetric(0.0))
    assert (px.tau, px.nu) == pytest.approx((1.0, 2.0))
    assert (py.tau, py.nu) == pytest.approx((1.0, 2.0))


def test_channel_params_match_conditional_variances():
    cfg = TeleporterConfig.symmetric(0.5, 1.3, 1.1, 0.9)
    px, _ = channel_params(cfg)
    kx, _ = transfer_gains(cfg)
    vx, _ = conditional_variances(cfg)
    assert (px.tau, px.nu) == pytest.approx((kx * kx, vx))


def test_channel_params_reject_negative_noise():
    with pytest.raises(NonPhysicalStateError):
        channel_params(TeleporterConfig.symmetric(R_3DB, SQRT2, 1.6))


def test_deterministic_curve_3db_stays_classical():
    for point in deterministic_curve(R_3DB, np.linspace(0.05, 3.0, 300)):
        assert point.tv.t_q <= 1.0 or point.tv.v_q >= 1.0


def test_deterministic_curve_15db_enters_quantum_region():
    point = deterministic_curve(db_to_r(15.0), [SQRT2])[0]
    assert point.params.tau == pytest.approx(1.0, abs=1e-9)
    assert point.params.nu == pytest.approx(2.0 * math.exp(-2.0 * db_to_r(15.0)), rel=1e-8)
    assert point.params.nu < 1.0


def test_loss_raises_noise_along_deterministic_curve():
    r = db_to_r(15.0)
    phis = np.linspace(1.35, 2.0, 14)
    clean = deterministic_curve(r, phis)
    lossy = deterministic_curve(r, phis, efficiency=0.95)
    for a, b in zip(clean, lossy):
        assert b.params.tau == pytest.approx(a.params.tau, rel=1e-9)
        assert b.params.nu > a.params.nu


def test_heralded_curve_3db():
    gains = np.linspace(1.0, 1.45, 10)
    curve = heralded_curve(R_3DB, SQRT2, gains)
    taus = [p.params.tau for p in curve]
    nus = [p.params.nu for p in curve]
    assert all(b > a for a, b in zip(taus, taus[1:]))
    assert all(b < a for a, b in zip(nus, nus[1:]))
    for g, p in zip(gains, curve):
        if g >= 1.25:
            assert p.params.nu < p.params.tau - 1.0


def test_heralded_curve_beats_deterministic_curve():
    for point in heralded_curve(R_3DB, SQRT2, [1.1, 1.2, 1.3]):
        tau = point.params.tau
        det = deterministic_curve(R_3DB, [math.sqrt(2.0 * tau)])[0]
        assert det.params.tau == pytest.approx(tau, rel=1e-9)
        assert point.params.nu < det.params.nu


NOISE_SUPPRESSION = dict(r=db_to_r(4.25), phi=1.0, efficiency=0.895)


@pytest.mark.parametrize("g,tau,nu", [
    (1.0, 0.5, 0.6946),
    (1.2, 0.6879, 0.5923),
    (1.4, 0.9486, 0.4328),
    (1.5, 1.1121, 0.3257),
])
def test_noise_suppression_operating_points(g, tau, nu):
    cfg = TeleporterConfig.symmetric(NOISE_SUPPRESSION["r"], NOISE_SUPPRESSION["phi"], g,
                                     NOISE_SUPPRESSION["efficiency"])
    px, py = channel_params(cfg)
    assert (px.tau, px.nu) == pytest.approx((tau, nu), abs=1e-3)
    assert (py.tau, py.nu) == pytest.approx((px.tau, px.nu), rel=1e-9)


@pytest.mark.filterwarnings("ignore::errors.AsymmetricStateWarning")
def test_heralding_raises_choi_entanglement():
    r, phi, t = NOISE_SUPPRESSION["r"], NOISE_SUPPRESSION["phi"], NOISE_SUPPRESSION["efficiency"]
    gains = [1.0, 1.2, 1.4, 1.5]
    heralded = [entanglement_of_formation(choi_state(p.params)) for p in heralded_curve(r, phi, gains, t)]
    deterministic = [entanglement_of_formation(choi_state(p.params))
                     for p in deterministic_curve(r, [g * phi for g in gains], t)]
    assert all(b > a for a, b in zip(heralded, heralded[1:]))
    assert heralded[0] == pytest.approx(deterministic[0], rel=1e-9)
    for h, d in zip(heralded[1:], deterministic[1:]):
        assert h > d
    assert heralded[-1] - heralded[0] > 3.0 * (deterministic[-1] - deterministic[0])


def test_curve_point_without_taunu():
    # nu has changed sign here, V_q alone cannot tell
    point = heralded_curve(R_3DB, SQRT2, [1.6])[0]
    assert point.tv.t_q > 2.0
    assert point.params is None

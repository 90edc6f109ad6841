import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import configs, phase
from timebin.optics import (
    BASIS,
    ConfigError,
    Geometry,
    InterferometerConfig,
    analytic_visibility,
    classify_regimes,
    coincidence_rate_analytic,
    expected_singles_rates,
    pair_outcome_distribution,
    prepare_state,
    satellites_in_window,
)
from timebin.oracle import enumerate_outcomes, photon_routes

FRANSON = Geometry.FRANSON_DUAL
SWAP = Geometry.MICHELSON_SWAP
BALANCED = Geometry.MICHELSON_BALANCED


class TestConfig:
    def test_transmissivity_is_complement(self):
        cfg = InterferometerConfig(bs_reflectivity_R=0.47)
        assert cfg.bs_transmissivity_T == 1 - 0.47

    def test_imbalance_factor_two_for_michelson(self):
        kw = dict(arm_short_s=0.1, arm_long_l=0.7)
        assert InterferometerConfig(geometry=FRANSON, **kw).imbalance_dx == pytest.approx(0.6)
        assert InterferometerConfig(geometry=SWAP, **kw).imbalance_dx == pytest.approx(1.2)
        assert InterferometerConfig(geometry=BALANCED, **kw).imbalance_dx == pytest.approx(1.2)

    def test_geometry_from_string(self):
        assert InterferometerConfig(geometry="FransonDual").geometry is FRANSON

    @pytest.mark.parametrize("field, value", [
        ("bs_reflectivity_R", 1.2),
        ("bs_reflectivity_R", -0.1),
        ("detection_efficiency_A", 1.5),
        ("mode_match_visibility", -0.01),
        ("pair_rate", -1.0),
        ("coincidence_window", -1e-9),
        ("pump_coherence_time", -1.0),
        ("arm_short_s", -0.1),
        ("geometry", "Sagnac"),
        ("pair_rate", float("nan")),
    ])
    def test_invalid_field_is_named(self, field, value):
        with pytest.raises(ConfigError) as exc:
            InterferometerConfig(**{field: value})
        assert exc.value.field == field

    def test_long_arm_shorter_than_short_arm(self):
        with pytest.raises(ConfigError, match="arm_long_l"):
            InterferometerConfig(arm_short_s=1.0, arm_long_l=0.5)


class TestPrepareState:
    def test_coherent_pump_zero_imbalance_gives_product_state(self):
        cfg = InterferometerConfig(arm_short_s=0.3, arm_long_l=0.3, pump_coherence_time=math.inf)
        psi0 = np.full(4, 0.5)
        np.testing.assert_allclose(prepare_state(cfg).rho, np.outer(psi0, psi0), atol=1e-15)

    def test_coherent_pump_large_imbalance_keeps_only_two_photon_coherence(self):
        cfg = InterferometerConfig(arm_long_l=0.6, pump_coherence_time=math.inf)
        st_ = prepare_state(cfg)
        np.testing.assert_allclose(np.diag(st_.rho).real, 0.25)
        assert st_.element("ss", "ll") == pytest.approx(0.25)
        assert abs(st_.element("ss", "sl")) < 1e-300

    def test_full_dephasing(self):
        cfg = InterferometerConfig(arm_long_l=0.6, pump_coherence_time=1e-15)
        np.testing.assert_allclose(prepare_state(cfg).rho, np.eye(4) / 4, atol=1e-300)

    def test_pump_coherence_at_metre_imbalance(self):
        # exp(-1.2 / 29.98) with the 120 cm imbalance and 0.1 us pump coherence
        cfg = InterferometerConfig(geometry=SWAP, arm_short_s=0.1, arm_long_l=0.7, pump_coherence_time=1e-7)
        assert cfg.mu_pump == pytest.approx(0.9608, abs=5e-5)
        assert prepare_state(cfg).element("ss", "ll").real == pytest.approx(0.25 * cfg.mu_pump, rel=1e-14)

    @settings(max_examples=1000, deadline=None)
    @given(configs())
    def test_density_matrix_invariants(self, cfg):
        st_ = prepare_state(cfg)
        assert st_.is_hermitian(1e-12)
        assert abs(st_.trace() - 1) <= 1e-12
        assert st_.eigenvalues().min() >= -1e-10


class TestOracle:
    def test_routes_symmetric_bs_magnitudes(self):
        for geo in Geometry:
            for mode in (0, 1):
                for _, port, amp in photon_routes(geo, 0.5, 0.3, mode):
                    assert abs(amp) == pytest.approx(0.5)

    @pytest.mark.parametrize("geo", list(Geometry))
    def test_oracle_sums_to_one(self, geo):
        out = enumerate_outcomes(geo, 0.37, 0.4, -1.1, 0.8, 0.7, 0.9)
        assert sum(out.values()) == pytest.approx(1.0, abs=1e-14)


def _oracle_for(cfg, phi):
    if cfg.geometry is BALANCED:
        mu = cfg.mode_match_visibility * cfg.mu_single
        pa, pb = phi + cfg.phase_A, phi + cfg.phase_B
    else:
        mu = cfg.mode_match_visibility * cfg.mu_pump
        pa, pb = phi / 2 + cfg.phase_A, phi / 2 + cfg.phase_B
    return enumerate_outcomes(cfg.geometry, cfg.bs_reflectivity_R, pa, pb, mu,
                              cfg.detection_efficiency_A, cfg.detection_efficiency_B)


class TestPairOutcomes:
    def test_franson_constructive(self):
        # |1/4 + 1/4|^2 = 1/4 from the four 1/4 amplitudes
        p = pair_outcome_distribution(InterferometerConfig(geometry=FRANSON, pump_coherence_time=math.inf), 0.0)
        assert p.p_coincidence_central == pytest.approx(0.25, abs=1e-15)
        assert p.p_satellite_early == pytest.approx(1 / 16, abs=1e-15)
        assert p.p_satellite_late == pytest.approx(1 / 16, abs=1e-15)
        oracle = _oracle_for(InterferometerConfig(geometry=FRANSON, pump_coherence_time=math.inf), 0.0)
        assert oracle["p_coincidence_central"] == pytest.approx(0.25, abs=1e-15)

    def test_franson_destructive(self):
        p = pair_outcome_distribution(InterferometerConfig(geometry=FRANSON, pump_coherence_time=math.inf), math.pi)
        assert p.p_coincidence_central == pytest.approx(0.0, abs=1e-15)
        assert p.p_satellite_early == pytest.approx(1 / 16, abs=1e-15)

    @given(st.floats(-50, 50))
    def test_swap_has_no_satellites(self, phi):
        p = pair_outcome_distribution(InterferometerConfig(geometry=SWAP), phi)
        assert p.p_satellite_early == 0.0
        assert p.p_satellite_late == 0.0

    def test_swap_mixed_paths_go_to_one_detector(self):
        p = pair_outcome_distribution(InterferometerConfig(geometry=SWAP), 0.7)
        assert p.p_same_detector == pytest.approx(1 / 8)

    def test_swap_singles_do_not_oscillate(self, lab_swap):
        cfg = lab_swap.with_(pair_rate=1e4, mode_match_visibility=0.9)
        rates = [expected_singles_rates(cfg, phi) for phi in np.linspace(0, 2 * np.pi, 9)]
        np.testing.assert_allclose(rates, [(5000.0, 5000.0)] * 9, rtol=1e-13)

    def test_balanced_product_law(self):
        cfg = InterferometerConfig(geometry=BALANCED, arm_long_l=0.0, phase_A=0.4, phase_B=2.0)
        p = pair_outcome_distribution(cfg, 0.0)
        assert p.p_coincidence_central == pytest.approx(math.cos(0.2) ** 2 * math.cos(1.0) ** 2, rel=1e-14)

    @settings(max_examples=1000, deadline=None)
    @given(configs(), phase)
    def test_matches_amplitude_enumeration(self, cfg, phi):
        p = pair_outcome_distribution(cfg, phi)
        oracle = _oracle_for(cfg, phi)
        for name, value in oracle.items():
            assert getattr(p, name) == pytest.approx(value, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(configs(), phase)
    def test_probabilities_normalised(self, cfg, phi):
        p = pair_outcome_distribution(cfg, phi)
        arr = p.as_array()
        assert np.all(arr >= -1e-15) and np.all(arr <= 1 + 1e-15)
        assert p.total() == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(configs(), phase)
    def test_two_pi_periodic(self, cfg, phi):
        a = pair_outcome_distribution(cfg, phi).as_array()
        b = pair_outcome_distribution(cfg, phi + 2 * math.pi).as_array()
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestCoincidenceRate:
    @pytest.mark.parametrize("mu", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_franson_ceiling(self, mu):
        cfg = InterferometerConfig(geometry=FRANSON, pump_coherence_time=math.inf, mode_match_visibility=mu,
                                   pair_rate=1e4)
        assert analytic_visibility(cfg, True) == pytest.approx(mu / 2, abs=1e-12)
        assert analytic_visibility(cfg, False) == pytest.approx(mu, abs=1e-12)

    def test_franson_half_from_closed_form(self):
        cfg = InterferometerConfig(geometry=FRANSON, pump_coherence_time=math.inf, pair_rate=8.0)
        hi = coincidence_rate_analytic(cfg, 0.0, True)
        lo = coincidence_rate_analytic(cfg, math.pi, True)
        # rate * (central + satellites): 8 (1/4 + 1/8) and 8 (0 + 1/8)
        assert (hi, lo) == (pytest.approx(3.0, abs=1e-12), pytest.approx(1.0, abs=1e-12))
        assert (hi - lo) / (hi + lo) == pytest.approx(0.5)

    def test_swap_visibility_window_independent(self, lab_swap):
        cfg = lab_swap.with_(mode_match_visibility=0.949 / lab_swap.mu_pump, pair_rate=1e4)
        vs = [analytic_visibility(cfg.with_(coincidence_window=w)) for w in (1.5e-9, 21.5e-9, 1e-3)]
        assert vs[0] == pytest.approx(0.949, abs=1e-12)
        assert max(vs) - min(vs) <= 1e-12

    def test_satellite_inclusion_follows_window(self):
        cfg = InterferometerConfig(geometry=FRANSON, arm_long_l=1.2)
        assert not satellites_in_window(cfg.with_(coincidence_window=1.5e-9))
        assert satellites_in_window(cfg.with_(coincidence_window=21.5e-9))

    def test_default_inclusion_used(self):
        cfg = InterferometerConfig(geometry=FRANSON, arm_long_l=1.2, coincidence_window=21.5e-9,
                                   pump_coherence_time=math.inf, pair_rate=1.0)
        assert analytic_visibility(cfg) == pytest.approx(0.5)


class TestRegimes:
    def _metre_franson(self, window):
        return InterferometerConfig(geometry=FRANSON, arm_short_s=0.0, arm_long_l=1.2, pump_coherence_time=1e-7,
                                    single_photon_coherence_time=1e-13, coincidence_window=window)

    def test_short_window(self):
        r = classify_regimes(self._metre_franson(1.5e-9))
        assert r.cond_single_ok and r.cond_pump_ok and r.cond_window_ok
        assert r.franson_entanglement_feasible and r.swap_entanglement_feasible

    def test_long_window_violates_postselection(self):
        r = classify_regimes(self._metre_franson(21.5e-9))
        assert not r.cond_window_ok
        assert not r.franson_entanglement_feasible
        assert r.swap_entanglement_feasible

    def test_minimum_imbalance(self):
        # c * 1.5 ns = 0.45 m, below the 60 cm quoted as sufficient
        r = classify_regimes(self._metre_franson(1.5e-9))
        assert r.min_imbalance_for_postselection == pytest.approx(0.4497, abs=1e-4)
        assert r.min_imbalance_for_postselection < 0.60

    def test_strict_inequalities(self):
        cfg = self._metre_franson(1.5e-9)
        edge = cfg.with_(coincidence_window=cfg.imbalance_dx / cfg.speed_of_light)
        assert not classify_regimes(edge).cond_window_ok

    @settings(max_examples=300, deadline=None)
    @given(configs())
    def test_report_invariants(self, cfg):
        r = classify_regimes(cfg)
        assert r.franson_entanglement_feasible == (r.cond_single_ok and r.cond_pump_ok and r.cond_window_ok)
        if r.cond_pump_ok and r.cond_window_ok:
            assert r.cond_tau_gt_window

    def test_basis_order(self):
        assert BASIS == ("ss", "sl", "ls", "ll")

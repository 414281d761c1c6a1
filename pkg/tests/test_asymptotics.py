import math

import numpy as np
import pytest

from bubblegap import asymptotics as asy
from bubblegap import greens, solver
from bubblegap.config import CrystalConfig
from bubblegap.greens import LatticeGreensEvaluator

DILUTE = CrystalConfig()
DILUTE_DEFECT = CrystalConfig(epsilon=-0.01)
PI = math.pi


class TestCapacitance:
    def test_positive_at_random_alpha(self):
        rng = np.random.default_rng(7)
        for a in rng.uniform(0.05, 2 * PI - 0.05, size=(8, 2)):
            assert asy.capacitance(tuple(a), 0.05, 5).value > 0

    def test_time_reversal_invariance(self):
        a = asy.capacitance((1.1, 2.3), 0.05, 5).value
        b = asy.capacitance((2 * PI - 1.1, 2 * PI - 2.3), 0.05, 5).value
        assert abs(a - b) < 1e-9 * a

    def test_decreases_toward_origin(self):
        vals = [asy.capacitance((t * PI, t * PI), 0.05, 5).value for t in (1, 0.5, 0.2, 0.05)]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert vals[-1] < 0.1 * vals[0]

    def test_origin_rejected(self):
        with pytest.raises(greens.GreensFunctionError):
            asy.capacitance((0.0, 0.0), 0.05, 5)

    @pytest.mark.xfail(strict=True, reason="leading-log estimate is 26% low at R = 0.05; see the refined check below")
    def test_leading_log_estimate(self):
        R = 0.05
        assert asy.capacitance((PI, PI), R, 5).value == pytest.approx(-2 * PI / math.log(R), rel=0.2)

    def test_log_estimate_with_lattice_constant(self):
        # monopole balance with the lattice remainder at the origin kept
        R = 0.05
        rem0 = LatticeGreensEvaluator(0.0, (PI, PI)).remainder((0.0, 0.0)).real
        refined = -2 * PI / (math.log(R) + 2 * PI * rem0)
        assert asy.capacitance((PI, PI), R, 5).value == pytest.approx(refined, rel=1e-2)

    def test_truncation_converged(self):
        a = asy.capacitance((PI, 1.0), 0.05, 5).value
        b = asy.capacitance((PI, 1.0), 0.05, 7).value
        assert abs(a - b) < 1e-10 * a

    def test_psi_norm_matches_quadrature(self):
        cap = asy.capacitance((PI, 2.0), 0.1, 4)
        th = 2 * PI * np.arange(64) / 64
        psi = np.exp(1j * np.outer(th, np.arange(-4, 5))) @ cap.psi
        assert cap.psi_norm2 == pytest.approx(np.sum(np.abs(psi) ** 2) * 0.1 * 2 * PI / 64, rel=1e-12)


class TestOmega1Asymptotic:
    def test_scales_with_sqrt_delta(self):
        a = asy.omega1_asymptotic((PI, PI), DILUTE)
        b = asy.omega1_asymptotic((PI, PI), DILUTE.replace(rho_w=20000.0, kappa_w=20000.0))
        assert a / b == pytest.approx(2.0, rel=1e-12)

    def test_close_to_operator_band(self):
        a = asy.omega1_asymptotic((PI, PI), DILUTE)
        assert abs(solver.band_omega1((PI, PI), DILUTE) - a) < 0.05 * a

    def test_error_shrinks_with_delta(self):
        errs = []
        for rho in (5000.0, 20000.0):
            cfg = DILUTE.replace(rho_w=rho, kappa_w=rho)
            a = asy.omega1_asymptotic((PI, PI), cfg)
            errs.append(abs(solver.band_omega1((PI, PI), cfg) - a) / a)
        assert 2.5 <= errs[0] / errs[1] <= 6


class TestBandIntegral:
    @pytest.fixture(scope="class")
    @classmethod
    def table(cls):
        return asy.band_table(PI, DILUTE)

    def test_samples_nonnegative(self, table):
        assert np.all(table.omega_sq >= 0)
        assert table.omega_max == pytest.approx(solver.band_omega1((PI, PI), DILUTE), rel=1e-12)

    def test_high_frequency_limit(self, table):
        w = 50 * table.omega_max
        assert table.inv_I(w) / (w**2 / table.omega0_sq) == pytest.approx(1.0, rel=0.02)

    def test_inverse_increasing(self, table):
        ws = table.omega_max * np.linspace(1.001, 3.0, 20)
        assert np.all(np.diff(table.inv_I(ws)) > 0)

    def test_inverse_vanishes_at_edge(self, table):
        w = table.omega_max
        assert table.inv_I(1.1 * w) > 3 * table.inv_I(1.001 * w)

    def test_pole_rejected(self, table):
        with pytest.raises(asy.PoleError):
            table.I(0.9 * table.omega_max)

    def test_mirror_symmetric_samples(self, table):
        w = table.omega_alpha
        np.testing.assert_array_equal(w[1:], w[1:][::-1])


class TestDilute:
    def test_root_in_gap_with_small_residual(self):
        w = asy.dilute_defect_omega(PI, DILUTE_DEFECT)
        assert w > asy.band_table(PI, DILUTE).omega_max
        assert abs(asy.dilute_residual(w, PI, DILUTE_DEFECT)) < 1e-10

    def test_unique_sign_change(self):
        assert asy.dilute_sign_changes(PI, DILUTE_DEFECT) == 1

    def test_approaches_band_edge(self):
        edge = asy.band_table(PI, DILUTE).omega_max
        near = asy.dilute_defect_omega(PI, DILUTE.replace(epsilon=-0.01 * DILUTE.R))
        far = asy.dilute_defect_omega(PI, DILUTE.replace(epsilon=-0.2 * DILUTE.R))
        assert edge < near < far

    @pytest.mark.parametrize("eps", [0.0, 0.01])
    def test_no_root_for_larger_defect(self, eps):
        with pytest.raises(asy.NoRootError):
            asy.dilute_defect_omega(PI, DILUTE.replace(epsilon=eps))

    def test_quadrature_refinement(self):
        a = asy.dilute_defect_omega(PI, DILUTE_DEFECT)
        b = asy.dilute_defect_omega(PI, DILUTE_DEFECT.replace(Q=2 * DILUTE.Q))
        assert abs(a - b) < 1e-6 * a


class TestCriticalEpsilon:
    def test_range_and_residual(self):
        cfg = CrystalConfig(rho_w=10000.0, kappa_w=10000.0)
        r = asy.critical_epsilon_result(cfg)
        assert 0.10 <= abs(r.epsilon) / cfg.R <= 0.30
        assert r.epsilon < 0
        assert r.residual < 1e-10


class TestSmallPerturbation:
    @pytest.fixture(scope="class")
    @classmethod
    def curvature(cls):
        return solver.curvature_c_delta(PI, DILUTE)

    def test_zero_perturbation(self, curvature):
        assert asy.small_perturbation_defect_omega(PI, DILUTE, c_delta=curvature.c) == curvature.omega_star

    @pytest.mark.parametrize("eps", [-0.002, 0.002])
    def test_correction_positive(self, curvature, eps):
        w = asy.small_perturbation_defect_omega(PI, DILUTE.replace(epsilon=eps), c_delta=curvature.c)
        assert w > curvature.omega_star

    def test_quadratic_in_epsilon(self, curvature):
        def corr(eps):
            cfg = DILUTE.replace(epsilon=eps)
            return asy.small_perturbation_defect_omega(PI, cfg, c_delta=curvature.c) - curvature.omega_star

        assert corr(-0.002) / corr(-0.001) == pytest.approx(4.0, rel=1e-9)

    def test_agrees_with_dilute_for_small_defects(self, curvature):
        ratios = []
        for frac in (0.02, 0.01):
            cfg = DILUTE.replace(epsilon=-frac * DILUTE.R)
            small = asy.small_perturbation_defect_omega(PI, cfg, c_delta=curvature.c) - curvature.omega_star
            dilute = asy.dilute_defect_omega(PI, cfg) - curvature.omega_star
            ratios.append(abs(small / dilute - 1))
        assert ratios[0] < 0.3
        assert ratios[1] < ratios[0]

    def test_bracket_composition(self, curvature):
        r = asy.small_perturbation_result(PI, DILUTE.replace(epsilon=-0.001), c_delta=curvature.c)
        cap = asy.capacitance((PI, PI), DILUTE.R, DILUTE.N)
        assert r.bracket == pytest.approx(DILUTE.R * cap.psi_norm2 - 2 * cap.value, rel=1e-12)


def test_bracket_sign_change_is_reported():
    changes = asy.bracket_sign_changes([0.05, 0.2, 0.3, 0.4, 0.45])
    assert len(changes) == 1
    lo, hi = changes[0]
    assert asy.perturbation_bracket((PI, PI), lo, 5) * asy.perturbation_bracket((PI, PI), hi, 5) < 0

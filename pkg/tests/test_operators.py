import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblegap import greens, operators as op, specfun
from bubblegap.config import CrystalConfig
from bubblegap.greens import LatticeGreensEvaluator

DILUTE = CrystalConfig()
DILUTE_DEFECT = CrystalConfig(epsilon=-0.01)
OMEGA_STAR_PI = 0.2591406424701659  # top of the first band at alpha1 = pi (dilute crystal)


def _entry(mat, m, n, N):
    return mat[m + N, n + N]


class TestBlockOperator:
    def test_full_round_trip(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        b = op.BlockOperator.from_full(a)
        np.testing.assert_array_equal(b.full(), a)
        assert b.size == 3 and b.N == 1

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            op.BlockOperator(np.eye(3), np.eye(3), np.eye(2), np.eye(3))

    def test_product_and_restrict(self):
        rng = np.random.default_rng(1)
        a = op.BlockOperator.from_full(rng.normal(size=(10, 10)))
        b = op.BlockOperator.from_full(rng.normal(size=(10, 10)))
        np.testing.assert_allclose((a @ b).full(), a.full() @ b.full(), atol=1e-13)
        r = a.restrict(1)
        assert r.size == 3
        np.testing.assert_array_equal(r.a12, a.a12[1:4, 1:4])


class TestFreeMatrices:
    def test_single_layer_example(self):
        k, R = 0.1, 0.05
        x = k * R
        expect = -(1j * math.pi * R / 2) * sp.jv(0, x) * sp.hankel1(0, x)
        assert abs(_entry(op.single_layer_free_matrix(k, R, 3), 0, 0, 3) - expect) < 1e-15

    def test_single_layer_diagonal(self):
        S = op.single_layer_free_matrix(0.3, 0.1, 4)
        assert np.all(S[~np.eye(9, dtype=bool)] == 0)

    def test_single_layer_small_k_limit(self):
        k, R = 1e-4, 0.1
        value = _entry(op.single_layer_free_matrix(k, R, 2), 0, 0, 2)
        assert abs(value - (R * math.log(R) + 2 * math.pi * R * specfun.eta(k))) < 1e-6

    def test_single_layer_rejects_static(self):
        with pytest.raises(ValueError):
            op.single_layer_free_matrix(0.0, 0.1, 2)

    def test_static_entries(self):
        S = op.static_single_layer_free_matrix(0.05, 3)
        assert _entry(S, 1, 1, 3) == pytest.approx(-0.025)
        assert _entry(S, 0, 0, 3) == pytest.approx(0.05 * math.log(0.05))
        np.testing.assert_array_equal(np.diag(S), np.diag(S)[::-1])

    def test_neumann_poincare_small_omega_monopole(self):
        w, R = 0.01, 0.05
        value = _entry(op.neumann_poincare_free_matrix(w, R, 2), 0, 0, 2) - 0.5
        expect = -(R * R / 2) * w * w * (2 * math.pi * specfun.eta(w) + math.log(R))
        assert abs(value - expect) < 1e-3 * abs(expect)

    def test_neumann_poincare_small_omega_higher_mode(self):
        value = _entry(op.neumann_poincare_free_matrix(1e-5, 0.05, 3), 2, 2, 3) - 0.5
        assert abs(value + 0.5) < 1e-4

    def test_neumann_poincare_parity(self):
        d = np.diag(op.neumann_poincare_free_matrix(0.4, 0.2, 4))
        np.testing.assert_allclose(d, d[::-1], rtol=1e-14)

    def test_neumann_poincare_static(self):
        d = np.diag(op.neumann_poincare_free_matrix(0, 0.2, 2))
        np.testing.assert_array_equal(d, [0, 0, 0.5, 0, 0])


class TestQuasiPeriodicMatrices:
    def test_remainder_decomposition(self):
        k, alpha, R, N = 0.3, (1.0, 2.0), 0.1, 3
        proj = op.get_projector(R, N)
        S_rem, K_rem = proj.remainder_matrices(k, [alpha])
        S = op.quasi_single_layer_matrix(k, alpha, R, N, proj)
        K = op.quasi_neumann_poincare_matrix(k, alpha, R, N, proj)
        np.testing.assert_allclose(S - S_rem[0], op.single_layer_free_matrix(k, R, N), rtol=1e-14, atol=1e-18)
        np.testing.assert_allclose(K - K_rem[0], op.neumann_poincare_free_matrix(k, R, N), rtol=1e-14, atol=1e-18)

    def test_projector_matches_pointwise_quadrature(self):
        # independent path: evaluator remainder at every node pair
        k, alpha, R, N, M = 0.4, (0.7, 2.9), 0.15, 2, 24
        proj = op.CircleRemainderProjector(R, N, M_q=M)
        S_rem, K_rem = proj.remainder_matrices(k, [alpha])
        ev = LatticeGreensEvaluator(k, alpha)
        th = 2 * math.pi * np.arange(M) / M
        x = R * np.stack([np.cos(th), np.sin(th)], axis=1)
        z = (x[:, None, :] - x[None, :, :]).reshape(-1, 2)
        G = ev.remainder(z).reshape(M, M)
        dG = ev.remainder_grad(z).reshape(M, M, 2)
        nuG = np.einsum("ik,ijk->ij", x / R, dG)
        E = np.exp(1j * np.outer(th, op.fourier_orders(N)))
        w = 2 * math.pi * R / M**2
        np.testing.assert_allclose(S_rem[0], w * E.conj().T @ G @ E, atol=1e-13)
        np.testing.assert_allclose(K_rem[0], w * E.conj().T @ nuG @ E, atol=1e-13)

    def test_against_windowed_direct_sum(self):
        # full single-layer matrix from a tapered direct lattice sum on staggered grids
        k, alpha, R, N, M = 0.05, (math.pi, math.pi), 0.2, 2, 16
        th = 2 * math.pi * np.arange(M) / M
        ts = th + math.pi / M
        x = R * np.stack([np.cos(th), np.sin(th)], axis=1)
        y = R * np.stack([np.cos(ts), np.sin(ts)], axis=1)
        z = (x[:, None, :] - y[None, :, :]).reshape(-1, 2)
        r = np.hypot(z[:, 0], z[:, 1])
        rem = greens.gamma_direct_windowed(k, alpha, z, radius=60.0) + 0.25j * sp.hankel1(0, k * r)
        orders = op.fourier_orders(N)
        Ex = np.exp(1j * np.outer(th, orders))
        Ey = np.exp(1j * np.outer(ts, orders))
        brute = 2 * math.pi * R / M**2 * Ex.conj().T @ rem.reshape(M, M) @ Ey
        brute = brute + op.single_layer_free_matrix(k, R, N)
        np.testing.assert_allclose(op.quasi_single_layer_matrix(k, alpha, R, N), brute, atol=1e-6)

    def test_static_monopole_sign(self):
        S = op.quasi_single_layer_matrix(0, (math.pi, math.pi), 0.05, 3)
        assert _entry(S, 0, 0, 3).real < 0

    def test_static_origin_rejected(self):
        with pytest.raises(greens.GreensFunctionError):
            op.quasi_single_layer_matrix(0, (0.0, 0.0), 0.05, 2)


def _layer_potential(k, alpha, R, N, phi, points, M=64):
    """S^{alpha,k}[phi] off the circle: free part by the addition theorem, remainder by quadrature."""
    orders = op.fourier_orders(N)
    rho = np.hypot(points[:, 0], points[:, 1])
    ang = np.arctan2(points[:, 1], points[:, 0])
    inside = rho < R
    J_R, H_R = sp.jv(orders, k * R), sp.hankel1(orders, k * R)
    radial = np.where(
        inside[:, None],
        sp.jv(orders, k * rho[:, None]) * H_R,
        J_R * sp.hankel1(orders, k * rho[:, None]),
    )
    free = (-0.5j * math.pi * R) * np.sum(radial * phi * np.exp(1j * np.outer(ang, orders)), axis=1)
    th = 2 * math.pi * np.arange(M) / M
    y = R * np.stack([np.cos(th), np.sin(th)], axis=1)
    dens = np.exp(1j * np.outer(th, orders)) @ phi
    ev = LatticeGreensEvaluator(k, alpha)
    z = (points[:, None, :] - y[None, :, :]).reshape(-1, 2)
    rem = ev.remainder(z).reshape(len(points), M)
    return free + (2 * math.pi * R / M) * rem @ dens


class TestJumpRelations:
    k, alpha, R, N = 0.05, (2.0, 3.0), 0.2, 2

    def _traces(self, phi, angles, h=1e-4):
        # one-sided second-order differences of the potential in the radial direction
        def u(rad):
            pts = rad * np.stack([np.cos(angles), np.sin(angles)], axis=1)
            return _layer_potential(self.k, self.alpha, self.R, self.N, phi, pts)

        R = self.R
        u0 = u(R)
        outer = (-3 * u0 + 4 * u(R + h) - u(R + 2 * h)) / (2 * h)
        inner = (3 * u0 - 4 * u(R - h) + u(R - 2 * h)) / (2 * h)
        return outer, inner

    def test_traces_match_matrix(self):
        # the matrix holds the |m| <= N modes of the traces, so project the differences
        rng = np.random.default_rng(3)
        phi = rng.normal(size=5) + 1j * rng.normal(size=5)
        P = 32
        angles = 2 * math.pi * np.arange(P) / P
        outer, inner = self._traces(phi, angles)
        E = np.exp(1j * np.outer(angles, op.fourier_orders(self.N)))
        outer_m, inner_m = E.conj().T @ outer / P, E.conj().T @ inner / P
        K = op.quasi_neumann_poincare_matrix(self.k, self.alpha, self.R, self.N)
        eye = np.eye(5)
        np.testing.assert_allclose(outer_m, (0.5 * eye + K) @ phi, atol=1e-5)
        np.testing.assert_allclose(inner_m, (-0.5 * eye + K) @ phi, atol=1e-5)
        np.testing.assert_allclose(outer_m - inner_m, phi, atol=1e-5)


class TestAAlpha:
    def test_block_structure(self):
        w = 0.2
        A = op.assemble_A_alpha(w, DILUTE, (1.0, 2.0))
        N = DILUTE.N
        S_free = op.single_layer_free_matrix(w, DILUTE.R, N)
        assert _entry(A.a11, 0, 0, N) == S_free[N, N]
        np.testing.assert_array_equal(A.a11, S_free)
        np.testing.assert_allclose(
            A.a12, -op.quasi_single_layer_matrix(w, (1.0, 2.0), DILUTE.R, N, op.get_projector(DILUTE.R, N)), atol=1e-15
        )

    def test_invertible_in_gap(self):
        for a2 in (0.0, 1.0, math.pi):
            A = op.assemble_A_alpha(0.4, DILUTE, (math.pi, a2)).full()
            assert np.linalg.cond(A) < 1e12

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(ValueError):
            op.assemble_A_alpha(0.0, DILUTE, (1.0, 1.0))

    def test_truncation_stability(self):
        # action on low modes is unchanged when N grows
        a = op.assemble_A_alpha(0.3, DILUTE, (1.0, 2.5))
        b = op.assemble_A_alpha(0.3, DILUTE.replace(N=DILUTE.N + 2), (1.0, 2.5))
        n = DILUTE.N - 2
        ra, rb = a.restrict(n).full(), b.restrict(n).full()
        assert np.max(np.abs(ra - rb)) < 1e-8 * np.max(np.abs(ra))


class TestPerturbation:
    def test_zero_for_unperturbed(self):
        P = op.assemble_perturbation(0.3, DILUTE)
        assert not np.any(P.full())

    def test_first_column_zero(self):
        P = op.assemble_perturbation(0.3, DILUTE_DEFECT)
        assert not np.any(P.a11) and not np.any(P.a21)

    def test_small_omega_limits(self):
        cfg = CrystalConfig(epsilon=-0.01)
        P = op.assemble_perturbation(1e-4, cfg)
        N, R, Rd, d = cfg.N, cfg.R, cfg.R_d, cfg.delta
        e1 = _entry(P.a12, 0, 0, N)
        e2 = _entry(P.a22, 0, 0, N)
        assert abs(e1 - R * math.log(R / Rd)) < 1e-3 * abs(R * math.log(R / Rd))
        assert abs(e2 - d * (1 - R**2 / Rd**2)) < 1e-3 * abs(d * (1 - R**2 / Rd**2))

    @pytest.mark.parametrize("eps", [-0.01, 0.02])
    def test_matches_effective_source_maps(self, eps):
        cfg = DILUTE.replace(epsilon=eps)
        a = op.assemble_perturbation(0.35, cfg).full()
        b = op.assemble_perturbation_from_maps(0.35, cfg).full()
        np.testing.assert_allclose(a, b, atol=1e-12 * np.max(np.abs(a)))

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(ValueError):
            op.assemble_perturbation(0.0, DILUTE_DEFECT)


class TestM:
    def test_identity_without_defect(self):
        M = op.assemble_M(0.3, DILUTE, math.pi)
        np.testing.assert_array_equal(M.full(), np.eye(2 * DILUTE.size))

    def test_first_block_column(self):
        M = op.assemble_M(0.3, DILUTE_DEFECT, math.pi, omega_star=OMEGA_STAR_PI)
        np.testing.assert_array_equal(M.a11, np.eye(DILUTE.size))
        assert np.linalg.norm(M.a21) == 0.0

    def test_inside_band_rejected(self):
        with pytest.raises(op.QuadratureSingularityError):
            op.assemble_M(0.25, DILUTE_DEFECT, math.pi, omega_star=OMEGA_STAR_PI)

    def test_det_changes_sign_in_gap(self):
        # the defect root sits near 0.3012 at alpha1 = pi
        lo = np.linalg.det(op.assemble_M(0.29, DILUTE_DEFECT, math.pi).full())
        hi = np.linalg.det(op.assemble_M(0.32, DILUTE_DEFECT, math.pi).full())
        assert abs(lo.imag) < 1e-6 * abs(lo) and abs(hi.imag) < 1e-6 * abs(hi)
        assert np.sign(lo.real) != np.sign(hi.real)

    def test_quadrature_stability(self):
        w = 1.05 * OMEGA_STAR_PI
        a = op.assemble_M(w, DILUTE_DEFECT, math.pi).full()
        b = op.assemble_M(w, DILUTE_DEFECT.replace(Q=2 * DILUTE_DEFECT.Q), math.pi).full()
        assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))

    def test_truncation_stability(self):
        w = 0.3
        a = op.assemble_M(w, DILUTE_DEFECT, math.pi)
        b = op.assemble_M(w, DILUTE_DEFECT.replace(N=DILUTE.N + 2), math.pi)
        n = DILUTE.N - 2
        ra, rb = a.restrict(n).full(), b.restrict(n).full()
        assert np.max(np.abs(ra - rb)) < 1e-8 * np.max(np.abs(ra))


@settings(max_examples=15, deadline=None)
@given(
    w=st.floats(0.05, 1.0),
    a1=st.floats(0.1, 6.1),
    a2=st.floats(0.1, 6.1),
)
def test_time_reversal_determinant(w, a1, a2):
    # det A^alpha and det A^{-alpha} coincide on the real axis
    A = op.assemble_A_alpha(w, DILUTE, (a1, a2)).full()
    B = op.assemble_A_alpha(w, DILUTE, (2 * math.pi - a1, 2 * math.pi - a2)).full()
    sa = np.linalg.svd(A, compute_uv=False)
    sb = np.linalg.svd(B, compute_uv=False)
    np.testing.assert_allclose(sa, sb, rtol=1e-8, atol=1e-14 * sa[0])

"""Boundary-integral operators as matrices in the Fourier basis on circles.

A density ``phi = sum_n phi_n exp(i n theta)`` on the circle of radius R is
stored as the vector ``(phi_{-N}, ..., phi_N)``.  An operator T maps it to
``sum_m (T phi)_m exp(i m theta)`` with ``(T phi)_m = sum_n T_mn phi_n``.

Free-space operators are diagonal with Bessel/Hankel entries.  Quasi-periodic
operators add the lattice remainder ``Gamma^{alpha,k} - Gamma^k``, which is
smooth on the circle, so its matrix elements come from the trapezoid rule
with ``M_q`` nodes.  The Ewald tables behind the remainder are projected onto
the Fourier modes once per geometry (:class:`CircleRemainderProjector`);
after that every Bloch vector and wavenumber costs a few small contractions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import greens, specfun
from .config import ConfigError, CrystalConfig  # noqa: F401  (re-exported)
from .greens import BlochVector, GreensFunctionError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class DegenerateFrequencyError(ArithmeticError):
    """A Bessel function in a denominator vanishes at this frequency."""


class QuadratureSingularityError(ArithmeticError):
    """The alpha2 integrand has a pole: omega lies inside the first band."""


class LinearSolveError(ArithmeticError):
    """A^alpha could not be inverted at one of the quadrature nodes."""

    def __init__(self, message: str, alpha2: float):
        super().__init__(message)
        self.alpha2 = alpha2


@dataclass(frozen=True)
class BlockOperator:
    """2x2 block matrix acting on density pairs (phi, psi)."""

    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray

    def __post_init__(self):
        shapes = {b.shape for b in (self.a11, self.a12, self.a21, self.a22)}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent block shapes {shapes}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1] or shape[0] % 2 != 1:
            raise ValueError(f"blocks must be square of odd size, got {shape}")

    @property
    def size(self) -> int:
        return self.a11.shape[0]

    @property
    def N(self) -> int:
        return (self.size - 1) // 2

    def full(self) -> np.ndarray:
        return np.block([[self.a11, self.a12], [self.a21, self.a22]])

    @classmethod
    def from_full(cls, mat: np.ndarray) -> "BlockOperator":
        s = mat.shape[0] // 2
        return cls(mat[:s, :s], mat[:s, s:], mat[s:, :s], mat[s:, s:])

    @classmethod
    def diagonal(cls, d11, d12, d21, d22) -> "BlockOperator":
        return cls(np.diag(d11), np.diag(d12), np.diag(d21), np.diag(d22))

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(self.a11 - other.a11, self.a12 - other.a12, self.a21 - other.a21, self.a22 - other.a22)

    def __matmul__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator.from_full(self.full() @ other.full())

    def restrict(self, n: int) -> "BlockOperator":
        """Sub-operator on the modes |m|, |n| <= n."""
        c = self.N
        sl = slice(c - n, c + n + 1)
        return BlockOperator(self.a11[sl, sl], self.a12[sl, sl], self.a21[sl, sl], self.a22[sl, sl])


def fourier_orders(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


# ---------------------------------------------------------------------------
# free-space operators on a circle
# ---------------------------------------------------------------------------


def _require_positive_k(k):
    if np.real(k) <= 0:
        raise ValueError("free Helmholtz operators need k > 0; use the static versions for k = 0")


def single_layer_free_matrix(k, R: float, N: int) -> np.ndarray:
    """Single layer potential S^k on the circle: diag -(i pi R/2) J_n(kR) H_n(kR)."""
    _require_positive_k(k)
    _, J, _, H, _ = specfun.bessel_table(N, k * R)
    return np.diag(-0.5j * math.pi * R * J * H)


def static_single_layer_free_matrix(R: float, N: int) -> np.ndarray:
    """Laplace single layer potential on the circle: R ln R for n = 0, -R/(2|n|) otherwise."""
    n = np.abs(fourier_orders(N)).astype(float)
    d = np.where(n == 0, R * math.log(R), -R / (2 * np.maximum(n, 1)))
    return np.diag(d)


def neumann_poincare_free_matrix(k, R: float, N: int) -> np.ndarray:
    """Neumann-Poincare operator K^{k,*}: diag -(i pi R k/4)(H_n J_n' + H_n' J_n).

    ``k = 0`` gives the Laplace operator on the circle, diag(1/2 at n = 0).
    """
    if k == 0:
        return np.diag(np.where(fourier_orders(N) == 0, 0.5, 0.0)).astype(complex)
    _require_positive_k(k)
    _, J, Jp, H, Hp = specfun.bessel_table(N, k * R)
    return np.diag(-0.25j * math.pi * R * k * (H * Jp + Hp * J))


# ---------------------------------------------------------------------------
# lattice remainder on a circle
# ---------------------------------------------------------------------------


class CircleRemainderProjector:
    """Fourier matrices of the lattice remainder kernel on one circle.

    For the remainder ``G = Gamma^{alpha,k} - Gamma^k`` this produces

    * ``S_mn = (1/2pi) int int e^{-im t} G(x(t) - x(s)) e^{ins} R ds dt`` and
    * ``K_mn``, the same with ``nu(t) . grad G`` (normal derivative in x),

    by the trapezoid rule with ``M_q`` nodes.  The Ewald spatial tables are
    projected onto the modes once; Bloch phases and wavenumbers enter later
    through contractions over lattice vectors and series indices.

    Instances are immutable after construction and can be shared.

    Parameters
    ----------
    R : float
    N : int
    M_q : int
    ewald : float
    jmax : int
        Spatial series terms kept; enough for ``|k|`` up to about 2.5.
    """

    def __init__(self, R: float, N: int, M_q: int = 64, ewald: float = greens.DEFAULT_EWALD, jmax: int = 16):
        self.R = float(R)
        self.N = int(N)
        self.M_q = int(M_q)
        self.ewald = float(ewald)
        self.jmax = int(jmax)
        M = self.M_q
        theta = TWO_PI * np.arange(M) / M
        self.nodes = self.R * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        self.normals = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        self._E = np.exp(1j * np.outer(theta, fourier_orders(self.N)))  # (M, S)
        self._EH = self._E.conj().T
        self._weight = TWO_PI * self.R / M**2
        z = self.nodes[:, None, :] - self.nodes[None, :, :]  # (M, M, 2)
        self._pair_r = np.hypot(z[..., 0], z[..., 1])
        self._pair_nz = np.einsum("ik,ijk->ij", self.normals, z)  # nu_i . z_ij
        e2 = self.ewald**2
        self.lattice = greens.spatial_lattice(round(2 * self.R, 6), self.ewald)
        self.modes = greens.spectral_modes(self.ewald)
        L, S, J = len(self.lattice), 2 * self.N + 1, self.jmax + 1
        self._FS = np.empty((L, J, S, S), dtype=complex)
        self._FK = np.empty((L, J, S, S), dtype=complex)
        for l, n in enumerate(self.lattice):
            d = z - n
            x = e2 * np.einsum("ijk,ijk->ij", d, d)
            En = greens.expn_stack(self.jmax + 1, x)
            nd = np.einsum("ik,ijk->ij", self.normals, d)
            for j in range(J):
                self._FS[l, j] = self._project(En[j + 1])
                self._FK[l, j] = self._project(nd * En[j])
        self._FS *= -1 / (4 * math.pi)
        self._FK *= 2 * e2 / (4 * math.pi)
        rs = np.where(self._pair_r < 1e-9, 1.0, self._pair_r)
        self._En0 = greens.expn_stack(self.jmax + 1, e2 * rs * rs)
        self._mode_phase = np.exp(1j * TWO_PI * (self.nodes @ self.modes.T))  # (M, Lm)

    def _project(self, G: np.ndarray) -> np.ndarray:
        return self._weight * (self._EH @ G @ self._E)

    def _coeffs(self, k) -> np.ndarray:
        c = greens.ewald_coefficients(k, self.ewald)
        if len(c) > self.jmax + 1:
            raise GreensFunctionError(f"|k| = {abs(k):.3g} exceeds the tabulated Ewald series")
        return c

    @lru_cache(maxsize=32)
    def local(self, k):
        """Projected n = 0 bracket (alpha independent), returns (S, K)."""
        val, dr = greens.local_bracket(k, self._pair_r, self.ewald, self._En0, derivative=True)
        rs = np.where(self._pair_r < 1e-9, 1.0, self._pair_r)
        return self._project(val), self._project(dr / rs * self._pair_nz)

    def remainder_matrices(self, k, alphas):
        """Remainder matrices for a batch of Bloch vectors.

        Parameters
        ----------
        k : float or complex
        alphas : sequence of BlochVector or pairs

        Returns
        -------
        S, K : arrays of shape (len(alphas), 2N+1, 2N+1)
        """
        avs = [BlochVector.of(a) for a in alphas]
        if k == 0 and any(a.is_origin() for a in avs):
            raise GreensFunctionError("Gamma^{alpha,0} does not exist at alpha = (0, 0)")
        a = np.array([b.as_array() for b in avs])  # (Q, 2)
        c = self._coeffs(k)
        nj = len(c)
        ph = np.exp(1j * (a @ self.lattice.T))  # (Q, L)
        S = np.einsum("ql,j,ljab->qab", ph, c, self._FS[:, :nj], optimize=True)
        K = np.einsum("ql,j,ljab->qab", ph, c, self._FK[:, :nj], optimize=True)
        # spectral part, separable in x and y
        e2 = self.ewald**2
        beta = a[:, None, :] + TWO_PI * self.modes[None, :, :]  # (Q, Lm, 2)
        b2 = np.einsum("qmi,qmi->qm", beta, beta)
        denom = k * k - b2
        if np.any(np.abs(denom) < 1e-14):
            raise GreensFunctionError("k lies on a Rayleigh anomaly |alpha + 2 pi m| = k")
        w = np.exp(denom / (4 * e2)) / denom  # (Q, Lm)
        plane = np.exp(1j * np.einsum("qi,ni->qn", a, self.nodes))  # (Q, M)
        ex = plane[:, :, None] * self._mode_phase[None, :, :]  # exp(i beta.x): (Q, M, Lm)
        u = np.einsum("an,qnm->qma", self._EH, ex)  # (Q, Lm, S)
        v = np.einsum("qnm,nb->qmb", ex.conj(), self._E)
        nb = 1j * np.einsum("ni,qmi->qnm", self.normals, beta)  # i nu.beta
        uk = np.einsum("an,qnm->qma", self._EH, nb * ex)
        S = S + self._weight * np.einsum("qm,qma,qmb->qab", w, u, v, optimize=True)
        K = K + self._weight * np.einsum("qm,qma,qmb->qab", w, uk, v, optimize=True)
        s_loc, k_loc = self.local(k)
        return S + s_loc, K + k_loc


@lru_cache(maxsize=16)
def get_projector(R: float, N: int, M_q: int = 64, ewald: float = greens.DEFAULT_EWALD) -> CircleRemainderProjector:
    """Shared projector per geometry."""
    return CircleRemainderProjector(R, N, M_q, ewald)


def _projector_for(config: CrystalConfig) -> CircleRemainderProjector:
    return get_projector(config.R, config.N, config.M_q, config.ewald)


def quasi_single_layer_matrix(k, alpha, R: float, N: int, projector: CircleRemainderProjector | None = None) -> np.ndarray:
    """Matrix of the quasi-periodic single layer potential S^{alpha,k} on the circle."""
    proj = projector or get_projector(R, N)
    S_rem, _ = proj.remainder_matrices(k, [alpha])
    free = static_single_layer_free_matrix(R, N) if k == 0 else single_layer_free_matrix(k, R, N)
    return free + S_rem[0]


def quasi_neumann_poincare_matrix(k, alpha, R: float, N: int, projector: CircleRemainderProjector | None = None) -> np.ndarray:
    """Matrix of (K^{-alpha,k})*: normal derivative (in x) of S^{alpha,k}, principal value."""
    proj = projector or get_projector(R, N)
    _, K_rem = proj.remainder_matrices(k, [alpha])
    return neumann_poincare_free_matrix(k, R, N) + K_rem[0]


# ---------------------------------------------------------------------------
# crystal and defect operators
# ---------------------------------------------------------------------------


def assemble_A_alpha_batch(omega, config: CrystalConfig, alphas) -> np.ndarray:
    """Full matrices of A^alpha(omega) for several Bloch vectors, shape (Q, 2S, 2S)."""
    S_rem, K_rem = _projector_for(config).remainder_matrices(omega, alphas)
    R, N, d = config.R, config.N, config.delta
    S_free = single_layer_free_matrix(omega, R, N)
    K_free = neumann_poincare_free_matrix(omega, R, N)
    eye = np.eye(config.size)
    n = len(S_rem)
    top = np.concatenate([np.broadcast_to(S_free, S_rem.shape), -(S_free + S_rem)], axis=2)
    bottom = np.concatenate(
        [np.broadcast_to(-0.5 * eye + K_free, K_rem.shape), -d * (0.5 * eye + K_free + K_rem)], axis=2
    )
    out = np.concatenate([top, bottom], axis=1)
    assert out.shape[0] == n
    return out


def assemble_A_alpha(omega, config: CrystalConfig, alpha) -> BlockOperator:
    """A^alpha(omega) = [[S^w, -S^{alpha,w}], [-1/2 + K^{w,*}, -delta (1/2 + (K^{-alpha,w})*)]]."""
    if np.real(omega) <= 0:
        raise ValueError("assemble_A_alpha needs omega > 0")
    return BlockOperator.from_full(assemble_A_alpha_batch(omega, config, [alpha])[0])


def assemble_A_D(omega, radius: float, delta: float, N: int) -> BlockOperator:
    """Single-bubble operator on a circle of the given radius (free-space kernels)."""
    _, J, Jp, H, Hp = specfun.bessel_table(N, omega * radius)
    c = -0.5j * math.pi * radius
    return BlockOperator.diagonal(c * J * H, -c * J * H, c * omega * Jp * H, -c * delta * omega * J * Hp)


def effective_source_maps(omega, config: CrystalConfig):
    """The diagonal maps P1, P2 relating densities on the two circles.

    ``A_D^eps = P2^{-1} A_{D_d} P1`` reproduces the defect bubble's response
    on the unperturbed circle.
    """
    N, R, Rd = config.N, config.R, config.R_d
    _, J, Jp, H, _ = specfun.bessel_table(N, omega * R)
    _, Jd, Jpd, Hd, _ = specfun.bessel_table(N, omega * Rd)
    _guard_denominators(Jd, Jpd, Hd)
    zero = np.zeros(config.size)
    P1 = BlockOperator.diagonal((R / Rd) * H / Hd, zero, zero, (R / Rd) * J / Jd)
    P2 = BlockOperator.diagonal(Jd / J, zero, zero, Jpd / Jp)
    return P1, P2


def _guard_denominators(*arrays):
    for a in arrays:
        if np.any(np.abs(a) < 1e-300):
            raise DegenerateFrequencyError("Bessel function vanishes in a denominator")


def assemble_perturbation(omega, config: CrystalConfig) -> BlockOperator:
    """A_D^eps - A_D = [[0, E1], [0, E2]] from the closed-form diagonal entries."""
    if np.real(omega) <= 0:
        raise ValueError("assemble_perturbation needs omega > 0")
    N, R, Rd, d = config.N, config.R, config.R_d, config.delta
    _, J, Jp, H, Hp = specfun.bessel_table(N, omega * R)
    _, Jd, Jpd, Hd, Hpd = specfun.bessel_table(N, omega * Rd)
    _guard_denominators(Jd, Jpd)
    c = -0.5j * math.pi * R
    # numerators written as cross differences so that they vanish exactly at R_d = R
    e1 = c * (J / Jd) * (H * Jd - J * Hd)
    e2 = c * J * d * omega * (Hp * Jpd - Jp * Hpd) / Jpd
    zero = np.zeros(config.size, dtype=complex)
    return BlockOperator.diagonal(zero, e1, zero, e2)


def assemble_perturbation_from_maps(omega, config: CrystalConfig) -> BlockOperator:
    """Same as :func:`assemble_perturbation`, built as P2^{-1} A_{D_d} P1 - A_D."""
    P1, P2 = effective_source_maps(omega, config)
    A_d = assemble_A_D(omega, config.R_d, config.delta, config.N)
    A = assemble_A_D(omega, config.R, config.delta, config.N)
    P2inv = BlockOperator.from_full(np.linalg.inv(P2.full()))
    return (P2inv @ A_d @ P1) - A


def alpha2_nodes(Q: int) -> np.ndarray:
    return TWO_PI * np.arange(Q) / Q


def assemble_M(omega, config: CrystalConfig, alpha1: float, omega_star: float | None = None) -> BlockOperator:
    """M = I + ((1/2pi) int A^alpha(omega)^{-1} d alpha2) (A_D^eps - A_D).

    The alpha2 integral uses the trapezoid rule with ``config.Q`` nodes.
    Only the second block column of the perturbation is nonzero, so the
    first block column of M is (I; 0) by construction.

    Parameters
    ----------
    omega_star : float, optional
        Top of the first band at this alpha1.  When given, frequencies at or
        below it are rejected because the integrand has poles there.
    """
    if omega_star is not None and np.real(omega) <= omega_star:
        raise QuadratureSingularityError(
            f"omega = {np.real(omega):.6g} is inside the first band (edge {omega_star:.6g})"
        )
    S = config.size
    eye = np.eye(S, dtype=complex)
    zero = np.zeros((S, S), dtype=complex)
    pert = assemble_perturbation(omega, config)
    if not (np.any(pert.a12) or np.any(pert.a22)):
        return BlockOperator(eye, zero, zero.copy(), eye.copy())
    nodes = alpha2_nodes(config.Q)
    A = assemble_A_alpha_batch(omega, config, [(alpha1, a2) for a2 in nodes])
    rhs = np.concatenate([pert.a12, pert.a22], axis=0)
    try:
        Y = np.linalg.solve(A, np.broadcast_to(rhs, (len(nodes),) + rhs.shape))
    except np.linalg.LinAlgError:
        for a2, Aq in zip(nodes, A):
            try:
                np.linalg.solve(Aq, rhs)
            except np.linalg.LinAlgError as exc:
                raise LinearSolveError(f"A^alpha singular at alpha2 = {a2:.6g}", a2) from exc
        raise
    X = np.sum(Y, axis=0) / len(nodes)
    return BlockOperator(eye, X[:S], zero, eye + X[S:])

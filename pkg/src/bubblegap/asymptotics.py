"""Closed-form and quadrature-based asymptotics for the bubble crystal.

Quantities:

* ``Cap_{D,alpha} = -<(S^{alpha,0})^{-1}[1], 1>`` and the first-band estimate
  ``omega_1^alpha ~ sqrt(delta Cap / (pi R^2))``;
* the band integral ``I(omega, alpha1) = (1/2pi) int (w_a)^2 / (omega^2 - w_a^2) d alpha2``
  over the first band ``w_a = omega_1^{(alpha1, alpha2)}``;
* the dilute defect equation
  ``1 + (omega^2 R^2/(2 delta) ln(R/R_d) + 1 - R^2/R_d^2) I(omega, alpha1) = 0``;
* the critical perturbation, root in ``R_d`` of
  ``R^2/R_d^2 - ln R_d / ln R = 1 / I(omega_*, 0)``;
* the small-perturbation defect frequency
  ``omega_* + (1/2c) (delta eps (R ||psi||^2 - 2 Cap) / (2 pi omega_* R^3))^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import operators as op
from . import solver
from .config import CrystalConfig
from .greens import BlochVector, GreensFunctionError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class NoRootError(ArithmeticError):
    """The scalar equation has no root in the admissible range."""


class PoleError(ArithmeticError):
    """The band integral is evaluated inside the first band."""


@dataclass(frozen=True)
class CapacitanceValue:
    alpha: BlochVector
    value: float
    N: int
    psi: np.ndarray  # Fourier coefficients of (S^{alpha,0})^{-1}[1]
    R: float

    @property
    def psi_norm2(self) -> float:
        """||psi||^2 on the circle: 2 pi R sum |psi_n|^2."""
        return float(TWO_PI * self.R * np.sum(np.abs(self.psi) ** 2))


def capacitance(alpha, R: float, N: int, projector: op.CircleRemainderProjector | None = None) -> CapacitanceValue:
    """Cap_{D,alpha} = -2 pi R psi_0 with psi = (S^{alpha,0})^{-1}[1]."""
    a = BlochVector.of(alpha)
    if a.is_origin():
        raise GreensFunctionError("capacitance does not exist at alpha = (0, 0)")
    S = op.quasi_single_layer_matrix(0, a, R, N, projector)
    rhs = np.zeros(2 * N + 1)
    rhs[N] = 1.0
    psi = np.linalg.solve(S, rhs)
    value = -TWO_PI * R * psi[N]
    if abs(value.imag) > 1e-10 * abs(value.real):
        logger.warning("capacitance has imaginary part %.3g", value.imag)
    return CapacitanceValue(a, float(value.real), N, psi, R)


def _cap_for(alpha, config: CrystalConfig) -> CapacitanceValue:
    proj = op.get_projector(config.R, config.N, config.M_q, config.ewald)
    return capacitance(alpha, config.R, config.N, proj)


def omega1_asymptotic(alpha, config: CrystalConfig) -> float:
    """sqrt(delta Cap_{D,alpha} / (pi R^2))."""
    cap = _cap_for(alpha, config).value
    return math.sqrt(config.delta * cap / (math.pi * config.R**2))


# ---------------------------------------------------------------------------
# band integral
# ---------------------------------------------------------------------------


class BandIntegralTable:
    """First band sampled on the alpha2 trapezoid nodes at fixed alpha1.

    The band is symmetric under alpha2 -> 2 pi - alpha2 (mirror symmetry of
    the crystal), so only nodes in [0, pi] are solved.
    """

    def __init__(self, alpha1: float, config: CrystalConfig, Q: int | None = None):
        self.alpha1 = float(alpha1)
        self.Q = int(Q or config.Q)
        self.nodes = op.alpha2_nodes(self.Q)
        half = {}
        seed = None
        order = sorted(range(self.Q), key=lambda q: min(self.nodes[q], TWO_PI - self.nodes[q]), reverse=True)
        for q in order:
            key = round(min(self.nodes[q], TWO_PI - self.nodes[q]), 12)
            if key not in half:
                a = BlochVector(self.alpha1, key)
                half[key] = solver.band_omega1(a, config, seed=seed) if not a.is_origin() else 0.0
                seed = half[key] if half[key] > 0 else None
        self.omega_alpha = np.array([half[round(min(x, TWO_PI - x), 12)] for x in self.nodes])
        self.omega_sq = self.omega_alpha**2
        if np.any(self.omega_sq < 0):
            raise ValueError("negative band samples")

    @property
    def omega_max(self) -> float:
        return float(self.omega_alpha.max())

    @property
    def omega0_sq(self) -> float:
        """Average of (omega^alpha)^2 over alpha2."""
        return float(np.mean(self.omega_sq))

    def I(self, omega):
        w = np.asarray(omega, dtype=float)
        if np.any(w <= self.omega_max):
            raise PoleError(f"omega must exceed the band maximum {self.omega_max:.10g}")
        return np.mean(self.omega_sq / (w[..., None] ** 2 - self.omega_sq), axis=-1)

    def inv_I(self, omega):
        return 1.0 / self.I(omega)


_TABLES: dict = {}


def band_table(alpha1: float, config: CrystalConfig, Q: int | None = None) -> BandIntegralTable:
    """Cached :class:`BandIntegralTable` (keyed on alpha1, config, Q)."""
    # the band does not depend on the defect
    key = (round(float(alpha1) % TWO_PI, 12), config.replace(epsilon=0.0), Q or config.Q)
    t = _TABLES.get(key)
    if t is None:
        t = BandIntegralTable(alpha1, config, Q)
        _TABLES[key] = t
    return t


def band_integral_I(omega: float, alpha1: float, config: CrystalConfig) -> float:
    return float(band_table(alpha1, config).I(omega))


# ---------------------------------------------------------------------------
# dilute defect equation
# ---------------------------------------------------------------------------


def _dilute_lhs(table: BandIntegralTable, config: CrystalConfig):
    """G(omega) = 1/I + omega^2 R^2/(2 delta) ln(R/R_d) + 1 - R^2/R_d^2, increasing in omega."""
    R, Rd, d = config.R, config.R_d, config.delta
    lin = R * R / (2 * d) * math.log(R / Rd)
    const = 1 - R * R / (Rd * Rd)

    def G(w):
        return table.inv_I(w) + w * w * lin + const

    return G


def dilute_residual(omega: float, alpha1: float, config: CrystalConfig) -> float:
    """Left side of the dilute equation, 1 + (...) I(omega)."""
    R, Rd, d = config.R, config.R_d, config.delta
    I = band_integral_I(omega, alpha1, config)
    return 1 + (omega**2 * R**2 / (2 * d) * math.log(R / Rd) + (1 - R**2 / Rd**2)) * I


def _bisect(fn, lo, hi, iters=200, xtol=1e-15):
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= xtol * hi:
            break
    return 0.5 * (lo + hi)


def dilute_defect_omega(alpha1: float, config: CrystalConfig, omega_star: float | None = None) -> float:
    """Root above the band of the dilute defect equation.

    Bisection (the left side is monotone) followed by Muller polishing.

    Raises
    ------
    NoRootError
        If ``R_d >= R``; the equation then has no root above the band.
    """
    if config.R_d >= config.R:
        raise NoRootError("dilute equation has no root above the band when R_d >= R")
    table = band_table(alpha1, config)
    wmax = table.omega_max
    if omega_star is not None and omega_star < wmax * (1 - 1e-8):
        logger.debug("band edge %.10g below the sampled maximum %.10g", omega_star, wmax)
    G = _dilute_lhs(table, config)
    lo = wmax * (1 + 1e-12)
    if G(lo) >= 0:
        raise NoRootError("dilute left side is already positive at the band edge")
    hi = 2 * wmax
    while G(hi) <= 0:
        hi *= 2
        if hi > 1e6 * wmax:
            raise NoRootError("no sign change of the dilute equation")
    w = _bisect(G, lo, hi)
    try:
        root = solver.muller_find_root(lambda z: G(z.real), (w * (1 - 1e-6), w * (1 + 1e-6), w), tol=1e-15, max_iter=20)
        if lo < root.real < hi and abs(G(root.real)) <= abs(G(w)):
            w = root.real
    except solver.NonConvergenceError:
        pass
    return float(w)


def dilute_sign_changes(alpha1: float, config: CrystalConfig, n: int = 200, upper: float | None = None) -> int:
    """Sign changes of the dilute left side on an n-point grid above the band."""
    table = band_table(alpha1, config)
    G = _dilute_lhs(table, config)
    wmax = table.omega_max
    hi = upper or 10 * wmax
    grid = wmax * (1 + 1e-9) + (hi - wmax) * np.linspace(0, 1, n) ** 2
    vals = np.array([G(w) for w in grid[1:]])
    return int(np.sum(np.signbit(vals[1:]) != np.signbit(vals[:-1])))


# ---------------------------------------------------------------------------
# critical perturbation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalEpsilon:
    epsilon: float
    R_d: float
    omega_star: float
    inv_I: float
    residual: float


def _eps0_lhs(R: float):
    lnR = math.log(R)
    return lambda Rd: R * R / (Rd * Rd) - math.log(Rd) / lnR


def critical_epsilon_result(config: CrystalConfig, omega_star: float | None = None) -> CriticalEpsilon:
    """Critical radius change from the dilute criterion at alpha1 = 0."""
    R = config.R
    if omega_star is None:
        omega_star = solver.band_omega1((math.pi, math.pi), config)
    target = float(band_table(0.0, config).inv_I(omega_star))
    h = _eps0_lhs(R)

    def f(log_rd):
        return h(math.exp(log_rd)) - target

    lo, hi = math.log(R) - 40.0, math.log(R)
    if not (f(lo) > 0 > f(hi - 1e-15) or f(hi) < 0):
        raise NoRootError("critical-epsilon equation is not bracketed")
    x = _bisect(f, lo, hi, xtol=1e-16)
    Rd = math.exp(x)
    return CriticalEpsilon(Rd - R, Rd, omega_star, target, abs(h(Rd) - target))


def critical_epsilon(config: CrystalConfig, omega_star: float | None = None) -> float:
    """eps_0 = R_d - R (negative) solving R^2/R_d^2 - ln R_d / ln R = 1/I(omega_*, 0)."""
    return critical_epsilon_result(config, omega_star).epsilon


# ---------------------------------------------------------------------------
# small-perturbation formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmallPerturbation:
    omega: float
    omega_star: float
    c_delta: float
    bracket: float  # R ||psi||^2 - 2 Cap


def small_perturbation_result(alpha1: float, config: CrystalConfig, c_delta: float | None = None,
                              omega_star: float | None = None) -> SmallPerturbation:
    R, d, eps = config.R, config.delta, config.epsilon
    cap = _cap_for((alpha1, math.pi), config)
    if omega_star is None:
        omega_star = solver.band_omega1((alpha1, math.pi), config)
    if c_delta is None:
        c_delta = solver.curvature_c_delta(alpha1, config).c
    bracket = R * cap.psi_norm2 - 2 * cap.value
    shift = (d * eps * bracket / (TWO_PI * omega_star * R**3)) ** 2 / (2 * c_delta)
    return SmallPerturbation(omega_star + shift, omega_star, c_delta, bracket)


def small_perturbation_defect_omega(alpha1: float, config: CrystalConfig, c_delta: float | None = None,
                                    omega_star: float | None = None) -> float:
    """Leading-order defect frequency for small |epsilon|, at alpha* = (alpha1, pi)."""
    return small_perturbation_result(alpha1, config, c_delta, omega_star).omega


def perturbation_bracket(alpha, R: float, N: int, M_q: int = 128) -> float:
    """R ||psi_alpha||^2 - 2 Cap_{D,alpha}, the sign-carrying factor of the small-perturbation shift."""
    cap = capacitance(alpha, R, N, op.get_projector(R, N, M_q))
    return R * cap.psi_norm2 - 2 * cap.value


def bracket_sign_changes(radii, alpha1: float = math.pi, N: int = 5, M_q: int = 128):
    """Intervals ``(R_i, R_{i+1})`` of the given radii across which the bracket changes sign.

    The sign decides whether shrinking or enlarging bubbles pulls the defect
    frequency out of the band at leading order; only its changes are
    reported, no threshold is asserted.
    """
    radii = sorted(float(r) for r in radii)
    vals = [perturbation_bracket((alpha1, math.pi), r, N, M_q) for r in radii]
    out = []
    for (r0, v0), (r1, v1) in zip(zip(radii, vals), zip(radii[1:], vals[1:])):
        if np.sign(v0) != np.sign(v1):
            logger.info("bracket changes sign between R = %.4g (%.4g) and R = %.4g (%.4g)", r0, v0, r1, v1)
            out.append((r0, r1))
    return out

"""Quasi-periodic Green's functions on the unit square lattice.

``Gamma^{alpha,k}`` solves ``(Delta + k^2) G = sum_n delta(x - n) exp(i n.alpha)``,
so ``G(z + p) = exp(i p.alpha) G(z)`` for lattice vectors ``p``.  The free
Green's functions are ``-(i/4) H_0^(1)(k r)`` for ``k != 0`` and
``ln(r) / (2 pi)`` for ``k = 0``.

Production evaluation uses the Ewald split with parameter ``E``::

    G = sum_m exp(i b.z) exp((k^2 - |b|^2) / 4E^2) / (k^2 - |b|^2)          (spectral)
      - 1/(4 pi) sum_n exp(i n.alpha) sum_j (k/2E)^{2j}/j! E_{j+1}(|z-n|^2 E^2)   (spatial)

with ``b = alpha + 2 pi m``.  The Laplace case ``k = 0`` keeps only ``j = 0``
and differs from Helmholtz only in the free-space function that the smooth
remainder subtracts.

Two independent oracles live here as well: a spectral series resummed in one
direction (with Kummer subtraction at the origin) and a smoothly windowed
direct lattice sum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special as sp

from . import specfun

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_EWALD = math.sqrt(math.pi)

# E_n(x) <= exp(-x)/x; x = 40 puts every neglected term near 1e-19.
_SPATIAL_EXPONENT = 40.0
_MAX_CELLS = 12
_MAX_MODES = 24
_COINCIDENT = 1e-12
_ORIGIN_SMALL = 1e-9


class GreensFunctionError(ValueError):
    """Quasi-periodic Green's function does not exist for the given (k, alpha)."""


@dataclass(frozen=True)
class BlochVector:
    """Quasi-momentum in the Brillouin zone, components reduced into [0, 2 pi)."""

    alpha1: float
    alpha2: float

    def __post_init__(self):
        object.__setattr__(self, "alpha1", float(self.alpha1) % TWO_PI)
        object.__setattr__(self, "alpha2", float(self.alpha2) % TWO_PI)

    @classmethod
    def of(cls, alpha) -> "BlochVector":
        if isinstance(alpha, BlochVector):
            return alpha
        a1, a2 = alpha
        return cls(a1, a2)

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2])

    def reversed(self) -> "BlochVector":
        """Time-reversed partner (2 pi - alpha1, 2 pi - alpha2)."""
        return BlochVector(-self.alpha1, -self.alpha2)

    def is_origin(self, tol: float = 1e-14) -> bool:
        d1 = min(self.alpha1, TWO_PI - self.alpha1)
        d2 = min(self.alpha2, TWO_PI - self.alpha2)
        return d1 < tol and d2 < tol

    def centered(self) -> np.ndarray:
        """Components mapped into (-pi, pi]."""
        a = self.as_array()
        return np.where(a > math.pi, a - TWO_PI, a)


def _check_existence(k, alpha: BlochVector) -> None:
    if k == 0 and alpha.is_origin():
        raise GreensFunctionError("Gamma^{alpha,0} does not exist at alpha = (0, 0)")


def ewald_coefficients(k, ewald: float, tol: float = 1e-17) -> np.ndarray:
    """Coefficients c_j = (k/2E)^{2j} / j! of the spatial series."""
    if k == 0:
        return np.array([1.0])
    s = (k / (2 * ewald)) ** 2
    coeffs = [1.0 + 0j]
    j = 0
    while True:
        j += 1
        c = coeffs[-1] * s / j
        coeffs.append(c)
        if abs(c) < tol or j > 60:
            break
    return np.array(coeffs)


@lru_cache(maxsize=64)
def spatial_lattice(reach: float, ewald: float) -> np.ndarray:
    """Lattice vectors n != 0 that can contribute for |z| <= reach."""
    radius = reach + math.sqrt(_SPATIAL_EXPONENT) / ewald
    cells = int(math.ceil(radius))
    if cells > _MAX_CELLS:
        logger.warning("Ewald spatial cutoff %.1f exceeds cap; sum truncated at %d cells", radius, _MAX_CELLS)
        cells = _MAX_CELLS
        radius = float(cells)
    g = np.arange(-cells, cells + 1)
    n = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2).astype(float)
    norm = np.hypot(n[:, 0], n[:, 1])
    keep = (norm > 0) & (norm <= radius + 1e-12)
    return n[keep]


@lru_cache(maxsize=64)
def spectral_modes(ewald: float) -> np.ndarray:
    """Integer vectors m with non-negligible spectral Ewald weight."""
    # exp(-|b|^2/4E^2)/|b|^2 < 1e-19 for |b|^2 > 4 E^2 * 42.
    bmax = 2 * ewald * math.sqrt(42.0) + TWO_PI
    modes = int(math.ceil(bmax / TWO_PI))
    if modes > _MAX_MODES:
        logger.warning("Ewald spectral cutoff exceeds cap; sum truncated at %d modes", _MAX_MODES)
        modes = _MAX_MODES
        bmax = TWO_PI * modes
    g = np.arange(-modes, modes + 1)
    m = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2).astype(float)
    return m[TWO_PI * np.hypot(m[:, 0], m[:, 1]) <= bmax + 1e-12]


def expn_stack(order_max: int, x: np.ndarray) -> np.ndarray:
    """E_0..E_order_max at x >= 0 (entries at x == 0 are inf)."""
    out = np.empty((order_max + 1,) + x.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ex = np.exp(-x)
        out[0] = ex / x
        if order_max >= 1:
            out[1] = sp.exp1(x)
        # upward recurrence n E_{n+1} = exp(-x) - x E_n is stable for x <~ n;
        # scipy.expn handles the rest
        for n in range(2, order_max + 1):
            out[n] = sp.expn(n, x)
    return out


def local_bracket(k, r, ewald: float, En0=None, derivative: bool = False):
    """The n = 0 spatial Ewald term minus the free Green's function.

    Returns ``(value, d value / dr)`` at distances ``r``; the derivative is
    ``None`` unless requested.  Both are smooth in ``r``, and ``r = 0``
    (anything below 1e-9) gets the exact limit.

    Parameters
    ----------
    En0 : array, optional
        Precomputed ``E_0 .. E_jmax+1`` at ``r^2 E^2`` (as built by
        :func:`expn_stack`), reused across wavenumbers.
    """
    r = np.asarray(r, dtype=float)
    origin = r < _ORIGIN_SMALL
    rs = np.where(origin, 1.0, r)
    c = ewald_coefficients(k, ewald)
    e2 = ewald * ewald
    if En0 is None:
        En0 = expn_stack(len(c), e2 * rs * rs)
    if len(c) + 1 > len(En0):
        raise GreensFunctionError(f"|k| = {abs(k):.3g} needs more spatial series terms than tabulated")
    ewald_part = -np.tensordot(c, En0[1 : len(c) + 1], axes=1) / (4 * math.pi)
    if k == 0:
        free = np.log(rs) / TWO_PI
        at_origin = specfun.EULER_GAMMA / (4 * math.pi) + math.log(ewald) / TWO_PI
    else:
        free = -0.25j * specfun.hankel1(0, k * rs)
        tail = sum(c[j] / j for j in range(1, len(c)))
        at_origin = (
            np.log(2 * ewald / k) / TWO_PI - specfun.EULER_GAMMA / (4 * math.pi) + 0.25j - tail / (4 * math.pi)
        )
    value = np.where(origin, at_origin, ewald_part - free)
    if not derivative:
        return value, None
    dr = np.zeros(rs.shape, dtype=complex)
    for j in range(1, len(c)):
        dr = dr + c[j] * En0[j]
    dr = dr * (2 * rs * e2) / (4 * math.pi)
    # j = 0 piece combined with the free term to avoid cancellation
    if k == 0:
        dr = dr + np.expm1(-e2 * rs * rs) / (TWO_PI * rs)
    else:
        dr = dr + np.exp(-e2 * rs * rs) / (TWO_PI * rs) - 0.25j * k * specfun.hankel1(1, k * rs)
    return value, np.where(origin, 0.0, dr)


class EwaldTable:
    """Ewald data for a fixed set of displacement points.

    Everything that depends only on geometry and the split parameter is
    tabulated once; :meth:`bind` folds in the Bloch phases, after which each
    wavenumber costs a handful of small dense contractions.  Instances are
    treated as immutable after construction.

    Parameters
    ----------
    points : array, shape (P, 2)
        Displacements ``z`` at which the lattice remainder is wanted.  They
        should lie in the open unit cell around the origin.
    ewald : float
        Split parameter ``E``.
    jmax : int
        Highest spatial series index tabulated (``E_{jmax+1}``).
    """

    def __init__(self, points, ewald: float = DEFAULT_EWALD, jmax: int = 12):
        z = np.asarray(points, dtype=float).reshape(-1, 2)
        self.points = z
        self.ewald = float(ewald)
        self.jmax = int(jmax)
        reach = float(np.max(np.hypot(z[:, 0], z[:, 1]))) if len(z) else 0.0
        self.lattice = spatial_lattice(round(reach, 6), self.ewald)
        self.modes = spectral_modes(self.ewald)
        e2 = self.ewald**2
        d = z[None, :, :] - self.lattice[:, None, :]  # (L, P, 2)
        x = e2 * np.einsum("lpi,lpi->lp", d, d)
        # E_0..E_{jmax+1} for every lattice vector n != 0
        self._En = expn_stack(self.jmax + 1, x)  # (J+2, L, P)
        self._d = d
        # n = 0 term, regularized at the origin by the callers
        r = np.hypot(z[:, 0], z[:, 1])
        self.r = r
        self._origin = r < _ORIGIN_SMALL
        r_safe = np.where(self._origin, 1.0, r)
        self._r_safe = r_safe
        self._En0 = expn_stack(self.jmax + 1, e2 * r_safe**2)
        self._modes_phase = np.exp(1j * TWO_PI * (z @ self.modes.T)).T  # (Lm, P)

    def bind(self, alpha) -> "BoundEwald":
        return BoundEwald(self, BlochVector.of(alpha))


class BoundEwald:
    """An :class:`EwaldTable` with Bloch phases folded in."""

    def __init__(self, table: EwaldTable, alpha: BlochVector):
        self.table = table
        self.alpha = alpha
        a = alpha.as_array()
        t = table
        ph = np.exp(1j * (t.lattice @ a))  # (L,)
        # S_j[p] = sum_n ph_n E_j(n, p)
        self._S = np.tensordot(ph, t._En, axes=([0], [1]))  # (J+2, P)
        # gradient pieces: sum_n ph_n (z - n) E_j
        self._Sd = np.einsum("l,jlp,lpi->jpi", ph, t._En, t._d, optimize=True)  # (J+2, P, 2)
        self._plane = np.exp(1j * (t.points @ a))  # exp(i alpha.z)
        self._beta = a[None, :] + TWO_PI * t.modes  # (Lm, 2)
        self._beta2 = np.einsum("mi,mi->m", self._beta, self._beta)

    # spectral part -----------------------------------------------------
    def _spectral_weights(self, k):
        e2 = self.table.ewald**2
        denom = k * k - self._beta2
        if np.any(np.abs(denom) < 1e-14):
            raise GreensFunctionError("k lies on a Rayleigh anomaly |alpha + 2 pi m| = k")
        return np.exp(denom / (4 * e2)) / denom

    def _spectral(self, k):
        w = self._spectral_weights(k)
        return self._plane * (w @ self.table._modes_phase)

    def _spectral_grad(self, k):
        w = self._spectral_weights(k)
        wb = 1j * w[:, None] * self._beta  # (Lm, 2)
        return self._plane[:, None] * (self.table._modes_phase.T @ wb)

    # spatial part ------------------------------------------------------
    def _coeffs(self, k):
        c = ewald_coefficients(k, self.table.ewald)
        if len(c) > self.table.jmax + 1:
            raise GreensFunctionError(
                f"|k| = {abs(k):.3g} needs {len(c) - 1} spatial series terms; table holds {self.table.jmax}"
            )
        return c

    def _spatial(self, k):
        c = self._coeffs(k)
        return -(c @ self._S[1 : len(c) + 1]) / (4 * math.pi)

    def _spatial_grad(self, k):
        c = self._coeffs(k)
        e2 = self.table.ewald**2
        return (2 * e2 / (4 * math.pi)) * np.tensordot(c, self._Sd[: len(c)], axes=([0], [0]))

    # n = 0 term minus the free Green's function ---------------------------
    def _local(self, k):
        t = self.table
        return local_bracket(k, t.r, t.ewald, t._En0)[0]

    def _local_grad(self, k):
        t = self.table
        dr = local_bracket(k, t.r, t.ewald, t._En0, derivative=True)[1]
        return (dr / t._r_safe)[:, None] * t.points

    # public -----------------------------------------------------------
    def remainder(self, k):
        """Gamma^{alpha,k}(z) - Gamma^k(z) at the table points."""
        _check_existence(k, self.alpha)
        return self._spectral(k) + self._spatial(k) + self._local(k)

    def remainder_grad(self, k):
        """Spatial gradient of the remainder, shape (P, 2)."""
        _check_existence(k, self.alpha)
        return self._spectral_grad(k) + self._spatial_grad(k) + self._local_grad(k)


def free_green(k, r):
    """Free-space Green's function at distance r (Laplace for k == 0)."""
    r = np.asarray(r, dtype=float)
    if k == 0:
        return np.log(r) / TWO_PI
    return -0.25j * specfun.hankel1(0, k * r)


class LatticeGreensEvaluator:
    """Evaluate Gamma^{alpha,k} and its smooth remainder at arbitrary points.

    Parameters
    ----------
    k : float or complex
        Wavenumber (``k >= 0``).  Complex values near the real axis are
        accepted for off-axis root iteration.
    alpha : BlochVector or pair
    ewald : float
        Ewald split parameter, default ``sqrt(pi)``.
    """

    def __init__(self, k, alpha, ewald: float = DEFAULT_EWALD):
        self.k = k
        self.alpha = BlochVector.of(alpha)
        self.ewald = float(ewald)
        if not self.ewald > 0:
            raise ValueError("Ewald parameter must be positive")
        _check_existence(k, self.alpha)
        self._jmax = max(4, len(ewald_coefficients(k, self.ewald)))

    def _reduce(self, z):
        """Shift z into the unit cell around 0; return (z0, phase)."""
        z = np.asarray(z, dtype=float)
        shift = np.round(z)
        z0 = z - shift
        phase = np.exp(1j * (shift @ self.alpha.as_array()))
        return z0, phase

    def _bound(self, points):
        return EwaldTable(points, self.ewald, jmax=self._jmax).bind(self.alpha)

    def gamma(self, z):
        """Gamma^{alpha,k}(z) for z off the lattice."""
        zz = np.atleast_2d(np.asarray(z, dtype=float))
        z0, phase = self._reduce(zz)
        r = np.hypot(z0[:, 0], z0[:, 1])
        if np.any(r < _COINCIDENT):
            raise GreensFunctionError("z coincides with a lattice point; use the remainder")
        out = phase * (self._bound(z0).remainder(self.k) + free_green(self.k, r))
        return out[0] if np.ndim(z) == 1 else out

    def remainder(self, z):
        """Gamma^{alpha,k}(z) - Gamma^k(z) for z inside the open unit cell."""
        zz = np.atleast_2d(np.asarray(z, dtype=float))
        if np.any(np.abs(zz) >= 1.0):
            raise ValueError("remainder is only smooth for z inside the unit cell around 0")
        out = self._bound(zz).remainder(self.k)
        return out[0] if np.ndim(z) == 1 else out

    def remainder_grad(self, z):
        zz = np.atleast_2d(np.asarray(z, dtype=float))
        out = self._bound(zz).remainder_grad(self.k)
        return out[0] if np.ndim(z) == 1 else out


def gamma_quasi(evaluator: LatticeGreensEvaluator, z):
    return evaluator.gamma(z)


def gamma_remainder(evaluator: LatticeGreensEvaluator, z):
    return evaluator.remainder(z)


# --------------------------------------------------------------------------
# alpha-gradient of the static lattice sum at the origin
# --------------------------------------------------------------------------


def _lattice_moment_1d(beta1: np.ndarray, a2: float) -> np.ndarray:
    """sum_{m2} 1/(beta1^2 + (a2 + 2 pi m2)^2)^2, minus its 1/(4|beta1|^3) tail."""
    kap = np.abs(beta1)
    out = np.empty_like(kap)
    small = kap < 1e-2
    if np.any(~small):
        kb = kap[~small]
        c = math.cos(a2)
        # g = sinh/(cosh - c) and its kappa-derivative, in terms of u = 1/cosh
        # so that nothing overflows and g - 1 keeps its precision
        u = 1.0 / np.cosh(kb)
        g_minus_1 = (c - np.exp(-kb)) * u / (1 - c * u)
        dg = u * (u - c) / (1 - c * u) ** 2
        out[~small] = g_minus_1 / (4 * kb**3) - dg / (4 * kb**2)
    if np.any(small):
        m2 = np.arange(-400, 401)
        b2 = a2 + TWO_PI * m2
        ks = kap[small][:, None]
        direct = np.sum(1.0 / (ks**2 + b2[None, :] ** 2) ** 2, axis=1)
        with np.errstate(divide="ignore"):
            out[small] = direct - np.where(ks[:, 0] > 0, 1 / (4 * ks[:, 0] ** 3), 0.0)
    return out


def _first_component(a1: float, a2: float) -> float:
    """sum_m beta1 / |beta|^4 for beta = alpha + 2 pi m."""
    a1 = a1 % TWO_PI
    if a1 == 0.0 or a1 == math.pi:
        return 0.0
    m1 = np.arange(-60, 61)
    beta1 = a1 + TWO_PI * m1
    smooth = float(np.sum(beta1 * _lattice_moment_1d(beta1, a2)))
    # sum_m1 sign(beta1) / (4 beta1^2), in closed form with trigamma
    s = a1 / TWO_PI
    tail = (sp.polygamma(1, s) - sp.polygamma(1, 1 - s)) / (4 * TWO_PI**2)
    return smooth + float(tail)


def grad_alpha_gamma0(alpha) -> np.ndarray:
    """Lattice sum ``sum_m (alpha + 2 pi m) / |alpha + 2 pi m|^4``.

    This is the direction of the alpha-gradient of ``Gamma^{alpha,0}(0)``;
    the exact gradient of ``-sum 1/|alpha + 2 pi m|^2`` is twice this vector.
    The sum over one index is done in closed form, which makes the result
    exact up to rounding.

    Raises
    ------
    GreensFunctionError
        At alpha = (0, 0), where the sum is singular.
    """
    a = BlochVector.of(alpha)
    if a.is_origin():
        raise GreensFunctionError("gradient sum is singular at alpha = (0, 0)")
    return np.array([_first_component(a.alpha1, a.alpha2), _first_component(a.alpha2, a.alpha1)])


def _grad_box_sum(a: np.ndarray, cutoff: int) -> np.ndarray:
    g = np.arange(-cutoff, cutoff + 1)
    b1 = a[0] + TWO_PI * g[:, None]
    b2 = a[1] + TWO_PI * g[None, :]
    w = 1.0 / (b1**2 + b2**2) ** 2
    return np.array([np.sum(b1 * w), np.sum(b2 * w)])


def grad_alpha_gamma0_direct(alpha, cutoff: int = 400) -> np.ndarray:
    """Oracle: the same sum over square boxes of lattice vectors.

    Alpha is mapped into (-pi, pi]^2 first.  Box truncation leaves a tail
    proportional to cutoff^-2, which one Richardson step (boxes of size
    cutoff and 2 cutoff) removes.
    """
    a = BlochVector.of(alpha)
    if a.is_origin():
        raise GreensFunctionError("gradient sum is singular at alpha = (0, 0)")
    c = a.centered()
    s1 = _grad_box_sum(c, cutoff)
    s2 = _grad_box_sum(c, 2 * cutoff)
    return (4 * s2 - s1) / 3


# --------------------------------------------------------------------------
# oracles
# --------------------------------------------------------------------------


def _periodic_exp_sum(kappa, a2: float, t: float):
    """sum_n exp(i n a2) exp(-kappa |t - n|) for t in [0, 1]."""
    q_minus = np.exp(-kappa - 1j * a2)
    q_plus = np.exp(-kappa + 1j * a2)
    return np.exp(-kappa * t) / (1 - q_minus) + np.exp(kappa * t) * q_plus / (1 - q_plus)


def _mixed_sum(k, a_par: float, a_perp: float, s: float, t: float) -> complex:
    """Spectral sum resummed in the perpendicular direction, 0 <= t < 1."""
    d = max(min(t, 1 - t), 1e-3)
    mmax = int(math.ceil(42.0 / (TWO_PI * d))) + 3
    m = np.arange(-mmax, mmax + 1)
    b = a_par + TWO_PI * m
    kappa = np.sqrt(b.astype(complex) ** 2 - complex(k) ** 2)
    zero = np.abs(kappa) < 1e-12
    if np.any(zero) and a_perp % TWO_PI == 0.0:
        raise GreensFunctionError("spectral oracle hits kappa = 0")
    safe = np.where(zero, 1.0, kappa)
    f = (-1 / (2 * safe)) * _periodic_exp_sum(safe, a_perp, t)
    if np.any(zero):
        # kappa -> 0 limit: -(1/2) dS/dkappa, S being the periodic sum (S(0) = 0)
        um, up = np.exp(-1j * a_perp), np.exp(1j * a_perp)
        ds = -t / (1 - um) - um / (1 - um) ** 2 + t * up / (1 - up) - up / (1 - up) ** 2
        f = np.where(zero, -0.5 * ds, f)
    return complex(np.sum(np.exp(1j * b * s) * f))


def gamma_spectral_oracle(k, alpha, z) -> complex:
    """Gamma^{alpha,k}(z) from the spectral series, summed in closed form over one index.

    The remaining sum converges like exp(-2 pi |m| d), d being the distance
    of the resummed coordinate to the nearest lattice line; the coordinate
    with the larger such distance is resummed.
    """
    a = BlochVector.of(alpha)
    z = np.asarray(z, dtype=float)
    cell = np.floor(z)
    t = z - cell
    d1 = min(t[0], 1 - t[0])
    d2 = min(t[1], 1 - t[1])
    if max(d1, d2) < 1e-3:
        raise GreensFunctionError("point too close to a lattice point for the spectral oracle")
    # resumming along axis 2 needs kappa = sqrt(beta1^2 - k^2) != 0 for all modes
    along2 = d2 >= d1
    if k == 0 and a.is_origin():
        raise GreensFunctionError("Gamma^{alpha,0} does not exist at alpha = (0, 0)")
    if k == 0 and along2 and a.alpha2 == 0.0 and d1 >= 1e-3:
        along2 = False
    elif k == 0 and not along2 and a.alpha1 == 0.0 and d2 >= 1e-3:
        along2 = True
    # the closed form is relative to t in [0, 1); the cell shift in the
    # resummed coordinate contributes a Bloch phase
    if along2:
        val = _mixed_sum(k, a.alpha1, a.alpha2, z[0], t[1])
        return val * np.exp(1j * cell[1] * a.alpha2)
    val = _mixed_sum(k, a.alpha2, a.alpha1, z[1], t[0])
    return val * np.exp(1j * cell[0] * a.alpha1)


def remainder_origin_spectral_oracle(k, alpha, terms: int = 2000) -> complex:
    """Limit of Gamma^{alpha,k}(z) - Gamma^k(z) at z = 0 from the spectral series.

    Sums over one index in closed form, subtracts the logarithmic part
    analytically (Kummer) and adds the m^-3 tail through zeta(3).
    """
    a = BlochVector.of(alpha)
    a1, a2 = a.centered()
    if abs(a1) < abs(a2):
        # the result is symmetric under swapping the axes; resum along the
        # direction whose zero mode stays away from kappa = 0
        a1, a2 = a2, a1
    m = np.arange(-terms, terms + 1)
    b = a1 + TWO_PI * m
    kappa = np.sqrt(b.astype(complex) ** 2 - complex(k) ** 2)
    if np.any(np.abs(kappa) < 1e-10):
        raise GreensFunctionError("spectral oracle hits kappa = 0")
    A = (-1 / (2 * kappa)) * _periodic_exp_sum(kappa, a2, 0.0)
    B = np.where(m != 0, -1.0 / (4 * math.pi * np.maximum(np.abs(m), 1)), 0.0)
    c3 = -(a1**2 + complex(k) ** 2 / 2) / TWO_PI**3
    p = np.arange(1, terms + 1)
    tail = c3 * (sp.zeta(3) - np.sum(1.0 / p**3.0))
    total = np.sum(A - B) + tail + math.log(TWO_PI) / TWO_PI
    if k != 0:
        total -= specfun.eta(k)
    return complex(total)


def _window(t):
    """Smooth window: 1 at t = 0, 0 for t >= 1, C-infinity in between."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t <= 0.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    u = t[mid]
    with np.errstate(over="ignore"):
        out[mid] = np.exp(2 * np.exp(-1 / u) / (u - 1))
    return out


def gamma_direct_windowed(k: float, alpha, z, radius: float = 800.0) -> np.ndarray:
    """Oracle: windowed direct lattice sum of -(i/4) H_0(k |z - n|) e^{i n.alpha}.

    Converges super-algebraically in ``radius`` for real ``k > 0`` away
    from Rayleigh anomalies; the error scales with the number of
    wavelengths that fit into ``radius``.  Uses scipy's Hankel function so
    it shares no code with the production path.

    Parameters
    ----------
    z : array, shape (2,) or (P, 2)
    """
    if not k > 0:
        raise ValueError("windowed direct sum needs k > 0")
    a = BlochVector.of(alpha).as_array()
    pts = np.atleast_2d(np.asarray(z, dtype=float))
    c = int(math.ceil(radius)) + 2
    g = np.arange(-c, c + 1)
    n1, n2 = np.meshgrid(g, g, indexing="ij")
    n = np.stack([n1.ravel(), n2.ravel()], axis=1).astype(float)
    out = np.empty(len(pts), dtype=complex)
    for i, p in enumerate(pts):
        d = np.hypot(p[0] - n[:, 0], p[1] - n[:, 1])
        w = _window(d / radius)
        keep = w > 0
        phase = np.exp(1j * (n[keep] @ a))
        out[i] = np.sum(-0.25j * sp.hankel1(0, k * d[keep]) * phase * w[keep])
    return out[0] if np.ndim(z) == 1 else out

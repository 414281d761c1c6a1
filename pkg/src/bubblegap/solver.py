"""Characteristic values: Bloch bands, the line-defect band and band-edge curvature.

Every frequency here is a root of ``det T(omega)`` for some analytic matrix
function T (``A^alpha`` for Bloch bands, ``I + M0`` for the defect band).  The
determinant is taken after fixed row/column balancing, computed once at the
seed, so that it neither over- nor underflows and stays analytic in omega.
Roots come from Muller's method in the complex plane; a root is accepted
only when it is real to 1e-8 and the smallest singular value of T is below
``residual_tol * ||T||``.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import asymptotics
from . import operators as op
from .config import CrystalConfig
from .greens import BlochVector

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
IMAG_TOL = 1e-8


class NonConvergenceError(ArithmeticError):
    """Iteration cap reached; ``best`` holds the iterate with the smallest |f|."""

    def __init__(self, message: str, best: complex):
        super().__init__(message)
        self.best = best


class RootNotFoundError(ArithmeticError):
    """No acceptable characteristic value in the search region."""


class InconsistencyError(ArithmeticError):
    """A computed quantity contradicts a structural property (e.g. band maximum location)."""


# ---------------------------------------------------------------------------
# Muller's method
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MullerInfo:
    iterations: int
    last_step: float
    fval: complex


def muller_find_root(
    f: Callable[[complex], complex],
    seeds: Sequence[complex],
    tol: float = 1e-12,
    max_iter: int = 50,
    ftol: float = 0.0,
    full_output: bool = False,
):
    """Muller's method: iterate the root of the interpolating parabola.

    Parameters
    ----------
    f : callable
        Analytic function of one complex variable.
    seeds : three distinct complex numbers
    tol : float
        Stop when the step is below ``tol * max(1, |z|)``.
    ftol : float
        Also stop when ``|f(z)| <= ftol`` (an exact zero always stops).
    full_output : bool
        Return ``(root, MullerInfo)`` instead of the root alone.

    Raises
    ------
    NonConvergenceError
        After ``max_iter`` steps without meeting the tolerance.
    """
    x0, x1, x2 = (complex(s) for s in seeds)
    if len({x0, x1, x2}) != 3:
        raise ValueError("Muller seeds must be distinct")
    try:
        f0, f1, f2 = complex(f(x0)), complex(f(x1)), complex(f(x2))
    except ZeroDivisionError as exc:
        raise ValueError("f is not finite at the seeds") from exc
    for v in (f0, f1, f2):
        if not cmath.isfinite(v):
            raise ValueError("f is not finite at the seeds")
    best, fbest = min(((x0, f0), (x1, f1), (x2, f2)), key=lambda p: abs(p[1]))
    if fbest == 0:
        return (best, MullerInfo(0, 0.0, fbest)) if full_output else best
    step = math.inf
    for it in range(1, max_iter + 1):
        h1, h2 = x1 - x0, x2 - x1
        d1, d2 = (f1 - f0) / h1, (f2 - f1) / h2
        a = (d2 - d1) / (h2 + h1)
        b = a * h2 + d2
        disc = cmath.sqrt(b * b - 4 * a * f2)
        den = b + disc if abs(b + disc) >= abs(b - disc) else b - disc
        if den == 0:
            dx = (abs(x2) + 1.0) * 1e-3
        else:
            dx = -2 * f2 / den
        x3 = x2 + dx
        f3 = complex(f(x3))
        if not cmath.isfinite(f3):
            # back off toward the last good iterate
            x3 = x2 + 0.5 * dx
            f3 = complex(f(x3))
            if not cmath.isfinite(f3):
                raise NonConvergenceError("f is not finite along the Muller path", best)
        step = abs(dx)
        if abs(f3) < abs(fbest):
            best, fbest = x3, f3
        x0, x1, x2 = x1, x2, x3
        f0, f1, f2 = f1, f2, f3
        if f3 == 0 or step <= tol * max(1.0, abs(x3)) or (ftol > 0 and abs(f3) <= ftol):
            info = MullerInfo(it, step, f3)
            return (x3, info) if full_output else x3
    raise NonConvergenceError(f"Muller did not converge in {max_iter} iterations (last step {step:.3g})", best)


# ---------------------------------------------------------------------------
# determinant objectives
# ---------------------------------------------------------------------------


def balancing(mat: np.ndarray):
    """Row and column scalings that bring every row and column to unit max-modulus."""
    a = np.abs(mat)
    r = 1.0 / np.maximum(a.max(axis=1), 1e-300)
    c = 1.0 / np.maximum((a * r[:, None]).max(axis=0), 1e-300)
    return r, c


def balanced_det(matrix_fn: Callable[[complex], np.ndarray], omega0: complex):
    """Scalar objective ``det(Dr T(omega) Dc)`` with scalings frozen at omega0."""
    r, c = balancing(matrix_fn(omega0))

    def f(w):
        return np.linalg.det(r[:, None] * matrix_fn(w) * c[None, :])

    return f


def sigma_ratio(mat: np.ndarray) -> float:
    s = np.linalg.svd(mat, compute_uv=False)
    return float(s[-1] / s[0])


@dataclass(frozen=True)
class RootResult:
    """A real characteristic value with its acceptance data."""

    omega: float
    residual: float
    imag: float
    iterations: int


def _solve_characteristic(matrix_fn, seed: float, config: CrystalConfig, spread: float = 0.02, accept=None) -> RootResult:
    f = balanced_det(matrix_fn, seed)
    seeds = (seed * (1 - spread), seed * (1 + spread), seed)
    root, info = muller_find_root(f, seeds, tol=config.root_tol, max_iter=config.max_iter, full_output=True)
    if abs(root.imag) >= IMAG_TOL:
        raise RootNotFoundError(f"spurious complex root {root:.6g}")
    if root.real <= 0:
        raise RootNotFoundError(f"non-positive root {root.real:.6g}")
    w = root.real
    res = sigma_ratio(matrix_fn(w))
    if res >= config.residual_tol:
        raise RootNotFoundError(f"residual {res:.3g} at omega = {w:.6g} above threshold")
    if accept is not None and not accept(w):
        raise RootNotFoundError(f"root {w:.6g} outside the admissible range")
    return RootResult(w, res, root.imag, info.iterations)


def _scan_minima(matrix_fn, grid: np.ndarray):
    """Local minima of sigma_min/sigma_max on a frequency grid, best first."""
    vals = []
    for w in grid:
        try:
            vals.append(sigma_ratio(matrix_fn(w)))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            vals.append(np.inf)
    vals = np.array(vals)
    idx = [i for i in range(1, len(grid) - 1) if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]]
    return [(grid[i], vals[i], (grid[i + 1] - grid[i - 1]) / 2) for i in sorted(idx, key=lambda i: vals[i])]


def _root_with_fallback(matrix_fn, seed, config, lo, hi, accept=None, n_scan=80) -> RootResult:
    try:
        return _solve_characteristic(matrix_fn, seed, config, accept=accept)
    except (RootNotFoundError, NonConvergenceError, ValueError, np.linalg.LinAlgError) as exc:
        logger.debug("seeded solve from %.6g failed (%s); scanning", seed, exc)
    grid = np.linspace(lo, hi, n_scan)
    candidates = []
    for w, _, width in _scan_minima(matrix_fn, grid):
        try:
            candidates.append(_solve_characteristic(matrix_fn, w, config, spread=0.25 * width / w, accept=accept))
        except (RootNotFoundError, NonConvergenceError, ValueError, np.linalg.LinAlgError):
            continue
    if not candidates:
        raise RootNotFoundError(f"no characteristic value found in [{lo:.6g}, {hi:.6g}]")
    return min(candidates, key=lambda r: r.omega)


# ---------------------------------------------------------------------------
# Bloch bands
# ---------------------------------------------------------------------------


def _A_fn(config: CrystalConfig, alpha: BlochVector):
    def fn(w):
        return op.assemble_A_alpha_batch(w, config, [alpha])[0]

    return fn


_BAND_CACHE: dict = {}


def band_omega1_result(alpha, config: CrystalConfig, seed: float | None = None) -> RootResult:
    """First Bloch band with residual data; see :func:`band_omega1`.

    Results are memoized per (alpha, crystal); the defect size plays no role.
    """
    a = BlochVector.of(alpha)
    if a.is_origin():
        return RootResult(0.0, 0.0, 0.0, 0)
    key = (round(a.alpha1, 13), round(a.alpha2, 13), config.replace(epsilon=0.0))
    hit = _BAND_CACHE.get(key)
    if hit is not None:
        return hit
    if seed is None:
        seed = asymptotics.omega1_asymptotic(a, config)
    fn = _A_fn(config, a)
    r = _root_with_fallback(fn, seed, config, 0.2 * seed, 3.0 * seed)
    _BAND_CACHE[key] = r
    return r


def band_omega1(alpha, config: CrystalConfig, seed: float | None = None) -> float:
    """Smallest positive characteristic value omega_1^alpha of A^alpha.

    Seeded by the capacitance asymptotics (or ``seed``); falls back to a
    singular-value scan when the seeded iteration fails.  Returns 0 at
    alpha = (0, 0).
    """
    return band_omega1_result(alpha, config, seed).omega


def band_edge_omega_star(alpha1: float, config: CrystalConfig, check: bool = True) -> float:
    """Top of the first band at fixed alpha1, attained at alpha2 = pi.

    With ``check`` the value is compared against alpha2 = pi +- 0.3.
    """
    w = band_omega1((alpha1, math.pi), config)
    if check:
        for a2 in (math.pi - 0.3, math.pi + 0.3):
            other = band_omega1((alpha1, a2), config, seed=w)
            if other > w * (1 + 1e-10):
                raise InconsistencyError(f"band at alpha2 = {a2:.3f} exceeds the value at pi")
    return w


def band_omega2(alpha, config: CrystalConfig, omega1: float, omega_max: float, n_scan: int = 120) -> float:
    """Next characteristic value above ``omega1`` (below ``omega_max``), by scan and Muller."""
    a = BlochVector.of(alpha)
    fn = _A_fn(config, a)
    lo = omega1 * 1.02 if omega1 > 0 else omega_max / n_scan
    grid = np.linspace(lo, omega_max, n_scan)
    found = []
    for w, _, width in _scan_minima(fn, grid):
        try:
            r = _solve_characteristic(fn, w, config, spread=0.25 * width / w, accept=lambda x: x > omega1 * 1.01)
            found.append(r.omega)
        except (RootNotFoundError, NonConvergenceError, ValueError, np.linalg.LinAlgError):
            continue
    if not found:
        raise RootNotFoundError(f"no second characteristic value below {omega_max:.6g} at alpha = {a}")
    return min(found)


_GAP_CACHE: dict = {}


def gap_upper(alpha1: float, config: CrystalConfig, omega_star: float, omega_cap: float | None = None,
              alpha2_samples: Sequence[float] = (0.0, math.pi / 2, math.pi)) -> float:
    """Upper gap bound: min over sampled alpha2 of the second band, capped.

    ``omega_cap`` defaults to 8 omega_star.  When no second root is found
    below the cap at some alpha2, the cap stands in for it.
    """
    cap = omega_cap if omega_cap is not None else 8.0 * omega_star
    key = (round(float(alpha1) % TWO_PI, 13), config.replace(epsilon=0.0), round(omega_star, 15), cap,
           tuple(alpha2_samples))
    hit = _GAP_CACHE.get(key)
    if hit is not None:
        return hit
    best = cap
    for a2 in alpha2_samples:
        a = BlochVector(alpha1, a2)
        w1 = band_omega1(a, config) if not a.is_origin() else 0.0
        try:
            best = min(best, band_omega2(a, config, max(w1, omega_star), cap))
        except RootNotFoundError:
            continue
    _GAP_CACHE[key] = best
    return best


@dataclass(frozen=True)
class CurvatureFit:
    c: float
    residual: float
    omega_star: float


def curvature_c_delta(alpha1: float, config: CrystalConfig, offsets: Sequence[float] = (0.05, 0.1, 0.15, 0.2),
                      side: str = "both") -> CurvatureFit:
    """Band-edge curvature: omega_1 = omega_star - c/2 (alpha2 - pi)^2 + O((alpha2 - pi)^4).

    Least squares on ``omega_star - omega_1(pi + t)`` against ``t^2, t^4``
    over the stencil ``t = +-offsets`` (``side`` = 'both', 'above', 'below').
    """
    w0 = band_omega1((alpha1, math.pi), config)
    ts = []
    if side in ("both", "above"):
        ts += list(offsets)
    if side in ("both", "below"):
        ts += [-t for t in offsets]
    if not ts:
        raise ValueError("side must be 'both', 'above' or 'below'")
    t = np.array(ts)
    y = np.array([w0 - band_omega1((alpha1, math.pi + s), config, seed=w0) for s in t])
    basis = np.stack([t**2, t**4], axis=1)
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    res = float(np.linalg.norm(basis @ coef - y))
    c = 2 * coef[0]
    if not c > 0:
        raise InconsistencyError(f"fitted band-edge curvature {c:.3g} is not positive")
    return CurvatureFit(float(c), res, w0)


# ---------------------------------------------------------------------------
# defect band
# ---------------------------------------------------------------------------


def _M0_fn(config: CrystalConfig, alpha1: float, omega_star: float):
    def fn(w):
        return op.assemble_M(w, config, alpha1, omega_star=omega_star).a22

    return fn


@dataclass(frozen=True)
class DefectResult:
    alpha1: float
    omega: float
    residual: float
    omega_star: float
    upper: float
    extra_roots: int = 0


def defect_omega_result(alpha1: float, config: CrystalConfig, omega_star: float | None = None,
                        upper: float | None = None, seed: float | None = None,
                        uniqueness_scan: bool = False) -> DefectResult:
    """Defect characteristic value in the gap above omega_star(alpha1)."""
    if config.epsilon == 0:
        raise ValueError("defect_omega needs epsilon != 0")
    if omega_star is None:
        omega_star = band_edge_omega_star(alpha1, config, check=False)
    if upper is None:
        upper = gap_upper(alpha1, config, omega_star)
    lo = omega_star * (1 + 1e-4)
    fn = _M0_fn(config, alpha1, omega_star)

    def inside(w):
        return lo <= w < upper

    if seed is None and config.R_d < config.R:
        try:
            seed = asymptotics.dilute_defect_omega(alpha1, config, omega_star=omega_star)
        except (asymptotics.NoRootError, RootNotFoundError, NonConvergenceError, ArithmeticError) as exc:
            logger.debug("dilute seed unavailable at alpha1 = %.4f: %s", alpha1, exc)
            seed = None
    if seed is None or not inside(seed):
        seed = None
    r = None
    if seed is not None:
        try:
            r = _solve_characteristic(fn, seed, config, spread=min(0.02, 0.5 * (seed - lo) / seed), accept=inside)
        except (RootNotFoundError, NonConvergenceError, ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
            logger.debug("seeded defect solve failed at alpha1 = %.4f: %s", alpha1, exc)
    extra = 0
    if r is None or uniqueness_scan:
        grid = lo + (upper - lo) * (np.linspace(0, 1, 60) ** 2)
        roots = []
        for w, _, width in _scan_minima(fn, grid):
            try:
                rr = _solve_characteristic(fn, w, config, spread=0.25 * width / w, accept=inside)
            except (RootNotFoundError, NonConvergenceError, ValueError, np.linalg.LinAlgError, ArithmeticError):
                continue
            if all(abs(rr.omega - q.omega) > 1e-8 * rr.omega for q in roots):
                roots.append(rr)
        if r is None:
            if not roots:
                raise RootNotFoundError(f"no defect root in ({lo:.6g}, {upper:.6g}) at alpha1 = {alpha1:.4f}")
            r = min(roots, key=lambda q: q.omega)
        extra = sum(1 for q in roots if abs(q.omega - r.omega) > 1e-8 * r.omega)
        if extra:
            logger.info("alpha1 = %.4f: %d further gap root(s) besides %.8g", alpha1, extra, r.omega)
    return DefectResult(alpha1, r.omega, r.residual, omega_star, upper, extra)


def defect_omega(alpha1: float, config: CrystalConfig, **kw) -> float:
    """Root of det M(omega) in (omega_star(alpha1), upper gap bound).

    Seeded at the dilute-formula root when the defect bubbles are smaller,
    otherwise located by a singular-value scan of the gap.

    Raises
    ------
    RootNotFoundError
        No root in the gap (a meaningful outcome, e.g. small enlargements).
    """
    return defect_omega_result(alpha1, config, **kw).omega


@dataclass
class BandCurve:
    """Sampled dispersion curve ``{(alpha1, omega)}``."""

    alpha1: np.ndarray
    omega: np.ndarray
    method: str
    residuals: np.ndarray
    failed: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alpha1 = np.asarray(self.alpha1, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if np.any(np.diff(self.alpha1) <= 0):
            raise ValueError("alpha1 samples must be strictly increasing")

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    def minimum(self):
        i = int(np.nanargmin(self.omega))
        return self.alpha1[i], self.omega[i]

    def maximum(self):
        i = int(np.nanargmax(self.omega))
        return self.alpha1[i], self.omega[i]


def default_alpha1_grid(n: int = 41) -> np.ndarray:
    return np.linspace(0.0, TWO_PI, n)


def defect_band(config: CrystalConfig, alpha1_grid=None, omega_cap: float | None = None) -> BandCurve:
    """Defect band over an alpha1 grid, continuing seeds from point to point.

    Points that fail are recorded in ``failed`` with NaN omega.  ``meta``
    carries omega_star and the gap bound per point.
    """
    grid = default_alpha1_grid() if alpha1_grid is None else np.asarray(alpha1_grid, dtype=float)
    omegas, res, stars, uppers = [], [], [], []
    failed = []
    prev = None
    cache: dict = {}
    for a1 in grid:
        key = round(min(a1 % TWO_PI, TWO_PI - a1 % TWO_PI), 12)
        if key in cache:
            r = cache[key]
        else:
            try:
                star = band_edge_omega_star(a1, config, check=False)
                up = gap_upper(a1, config, star, omega_cap)
                seed = None
                if config.R_d >= config.R and prev is not None and star * (1 + 1e-4) < prev < up:
                    seed = prev
                r = defect_omega_result(a1, config, omega_star=star, upper=up, seed=seed)
            except (RootNotFoundError, NonConvergenceError, ArithmeticError, ValueError) as exc:
                logger.warning("defect root failed at alpha1 = %.4f: %s", a1, exc)
                r = exc
            cache[key] = r
        if isinstance(r, Exception):
            failed.append((float(a1), str(r)))
            omegas.append(np.nan)
            res.append(np.nan)
            stars.append(np.nan)
            uppers.append(np.nan)
            continue
        prev = r.omega
        omegas.append(r.omega)
        res.append(r.residual)
        stars.append(r.omega_star)
        uppers.append(r.upper)
    return BandCurve(grid, np.array(omegas), "operator", np.array(res), failed,
                     {"omega_star": np.array(stars), "gap_upper": np.array(uppers)})


# ---------------------------------------------------------------------------
# critical perturbation from the operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OperatorCriticalEpsilon:
    epsilon: float
    omega_star: float  # global top of the first band, omega_1 at (pi, pi)
    residual: float  # |omega^eps(0) - omega_star| at the returned epsilon
    evaluations: int


def operator_critical_epsilon(config: CrystalConfig, bracket: tuple[float, float] = (-0.5, -0.05),
                              xtol: float = 1e-10) -> OperatorCriticalEpsilon:
    """Negative radius change at which the defect frequency at alpha1 = 0 meets the band top.

    Solves ``defect_omega(0; eps) = omega_1^{(pi, pi)}`` for ``eps`` by Brent's
    method; ``bracket`` is given in units of ``R``.
    """
    omega_star = band_omega1((math.pi, math.pi), config)
    base = config.replace(epsilon=0.0)
    star0 = band_edge_omega_star(0.0, base, check=False)
    upper = gap_upper(0.0, base, star0)
    count = 0

    def g(frac):
        nonlocal count
        count += 1
        cfg = config.replace(epsilon=frac * config.R)
        return defect_omega(0.0, cfg, omega_star=star0, upper=upper) - omega_star

    lo, hi = bracket
    glo, ghi = g(lo), g(hi)
    if not glo > 0 > ghi:
        raise RootNotFoundError(
            f"defect frequency at alpha1 = 0 does not cross the band top for eps/R in [{lo}, {hi}]"
        )
    frac = optimize.brentq(g, lo, hi, xtol=xtol / config.R, rtol=1e-14)
    return OperatorCriticalEpsilon(frac * config.R, omega_star, abs(g(frac)), count)


def canonical_alpha(alpha) -> BlochVector:
    """Representative of alpha under the symmetry group of the square crystal of discs.

    Reflections ``alpha_i -> 2 pi - alpha_i`` and the swap of the two
    components leave every band unchanged, so sweeps need only the
    triangle ``0 <= alpha_1 <= alpha_2 <= pi``.
    """
    a = BlochVector.of(alpha)
    x = min(a.alpha1, TWO_PI - a.alpha1)
    y = min(a.alpha2, TWO_PI - a.alpha2)
    return BlochVector(min(x, y), max(x, y))


def clear_caches() -> None:
    """Drop memoized band values, gap bounds, band tables and projectors."""
    _BAND_CACHE.clear()
    _GAP_CACHE.clear()
    asymptotics._TABLES.clear()
    op.get_projector.cache_clear()

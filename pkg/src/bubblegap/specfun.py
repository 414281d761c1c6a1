"""Cylindrical Bessel and Hankel functions of integer order.

All functions use ascending power series, which is accurate for the small
arguments met in the subwavelength regime (``x = omega * R`` well below 1)
and still good to ~1e-13 relative up to ``x = 5``.  Large-argument
asymptotics are deliberately not implemented.

The public contract is real, positive arguments.  The series are written so
that complex arguments near the positive real axis also work; the root
finders rely on this when Muller iterates step off the real axis.
"""

from __future__ import annotations

import math

import numpy as np

EULER_GAMMA = 0.57721566490153286060651209008240243

#: Highest supported |order|.  Enough for truncations N <= 31.
MAX_ORDER = 64

_MAX_TERMS = 400
_SERIES_RTOL = 1e-17


class DomainError(ValueError):
    """Argument or order outside the supported domain."""


def _check_order(n: int) -> int:
    n = int(n)
    if abs(n) > MAX_ORDER:
        raise DomainError(f"order {n} outside supported range |n| <= {MAX_ORDER}")
    return n


def _as_array(x):
    arr = np.asarray(x)
    if arr.dtype.kind not in "fc":
        arr = arr.astype(float)
    return arr


def _check_nonnegative(x, allow_zero: bool) -> None:
    if np.iscomplexobj(x):
        bad = (x.real < 0) & (np.abs(x.imag) < 1e-300)
        zero = x == 0
    else:
        bad = x < 0
        zero = x == 0
    if np.any(bad):
        raise DomainError("negative real argument is not supported")
    if not allow_zero and np.any(zero):
        raise DomainError("Y_n and H_n^(1) are singular at x = 0")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite argument")


def _j_nonneg(n: int, z):
    """Ascending series for J_n(z), n >= 0."""
    h = z / 2
    q = -(h * h)
    term = h**n / math.factorial(n)
    total = term.copy() if isinstance(term, np.ndarray) else term
    for k in range(1, _MAX_TERMS):
        term = term * q / (k * (k + n))
        total = total + term
        if np.all(np.abs(term) <= _SERIES_RTOL * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _y_nonneg(n: int, z):
    """Limit (log) series for Y_n(z), n >= 0, z != 0."""
    h = z / 2
    log_part = (2 / math.pi) * np.log(h) * _j_nonneg(n, z)
    finite = 0.0
    if n > 0:
        for k in range(n):
            finite = finite + math.factorial(n - k - 1) / math.factorial(k) * h ** (2 * k - n)
    # psi(k+1) + psi(n+k+1) with psi(m+1) = -gamma + H_m
    harm_k = 0.0
    harm_nk = sum(1.0 / j for j in range(1, n + 1))
    q = -(h * h)
    term = h**n / math.factorial(n)
    series = (harm_k + harm_nk - 2 * EULER_GAMMA) * term
    for k in range(1, _MAX_TERMS):
        term = term * q / (k * (k + n))
        harm_k += 1.0 / k
        harm_nk += 1.0 / (k + n)
        contrib = (harm_k + harm_nk - 2 * EULER_GAMMA) * term
        series = series + contrib
        if np.all(np.abs(contrib) <= _SERIES_RTOL * np.maximum(np.abs(series), 1e-300)):
            break
    return log_part - finite / math.pi - series / math.pi


def _parity(n: int) -> int:
    return -1 if n % 2 else 1


def bessel_j(n: int, x):
    """Bessel function of the first kind, J_n(x).

    ``x = 0`` is allowed (series limit).  Negative orders use
    ``J_{-n} = (-1)^n J_n``.
    """
    n = _check_order(n)
    z = _as_array(x)
    _check_nonnegative(z, allow_zero=True)
    out = _j_nonneg(abs(n), z)
    return _parity(n) * out if n < 0 else out


def bessel_y(n: int, x):
    """Bessel function of the second kind, Y_n(x), for x > 0."""
    n = _check_order(n)
    z = _as_array(x)
    _check_nonnegative(z, allow_zero=False)
    out = _y_nonneg(abs(n), z)
    return _parity(n) * out if n < 0 else out


def bessel_j_prime(n: int, x):
    """Derivative J_n'(x) = (J_{n-1}(x) - J_{n+1}(x)) / 2."""
    n = _check_order(n)
    _check_order(abs(n) + 1)
    return 0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))


def bessel_y_prime(n: int, x):
    """Derivative Y_n'(x) = (Y_{n-1}(x) - Y_{n+1}(x)) / 2."""
    n = _check_order(n)
    _check_order(abs(n) + 1)
    return 0.5 * (bessel_y(n - 1, x) - bessel_y(n + 1, x))


def hankel1(n: int, x):
    """Hankel function of the first kind, H_n^(1)(x) = J_n(x) + i Y_n(x).

    Raises
    ------
    DomainError
        If ``x == 0`` (logarithmic/pole singularity) or ``|n|`` is too large.
    """
    return bessel_j(n, x) + 1j * bessel_y(n, x)


def hankel1_prime(n: int, x):
    """Derivative of H_n^(1), via the same recurrence as J_n."""
    return 0.5 * (hankel1(n - 1, x) - hankel1(n + 1, x))


def eta(k):
    """Constant term of the small-argument expansion of -(i/4) H_0^(1)(k r).

    ``eta(k) = (ln k + gamma - ln 2) / (2 pi) - i/4``.
    """
    k = np.asarray(k)
    if np.iscomplexobj(k):
        if np.any(k.real <= 0):
            raise DomainError("eta(k) requires Re k > 0")
    elif np.any(k <= 0):
        raise DomainError("eta(k) requires k > 0")
    out = (np.log(k) + EULER_GAMMA - math.log(2.0)) / (2 * math.pi) - 0.25j
    return out[()] if out.ndim == 0 else out


def bessel_table(n_max: int, x):
    """Return ``(orders, J, J', H, H')`` for orders ``-n_max..n_max`` at scalar x.

    Convenience for the Fourier-mode operator assembly; each array is indexed
    like ``orders``.
    """
    orders = np.arange(-n_max, n_max + 1)
    jn = {n: complex(bessel_j(n, x)) for n in range(-n_max - 1, n_max + 2)}
    yn = {n: complex(bessel_y(n, x)) for n in range(-n_max - 1, n_max + 2)}
    J = np.array([jn[n] for n in orders])
    Jp = np.array([0.5 * (jn[n - 1] - jn[n + 1]) for n in orders])
    H = np.array([jn[n] + 1j * yn[n] for n in orders])
    Hp = np.array([0.5 * ((jn[n - 1] + 1j * yn[n - 1]) - (jn[n + 1] + 1j * yn[n + 1])) for n in orders])
    if not np.iscomplexobj(np.asarray(x)):
        J, Jp = J.real, Jp.real
    return orders, J, Jp, H, Hp

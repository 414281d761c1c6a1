"""Physical and numerical parameters of the bubble crystal and its line defect."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Inconsistent or out-of-range configuration."""


@dataclass(frozen=True)
class CrystalConfig:
    """Square lattice (period 1) of circular bubbles of radius ``R``.

    The defect row has bubbles of radius ``R_d = R + epsilon``.  Wave speeds
    inside and outside must agree (``kappa_b/rho_b == kappa_w/rho_w``) and are
    normalized to one, so both wavenumbers equal ``omega``.

    Parameters
    ----------
    rho_b, kappa_b, rho_w, kappa_w : float
        Densities and bulk moduli inside (b) and outside (w) the bubbles.
    R : float
        Bubble radius, ``0 < R < 1/2``.
    epsilon : float
        Radius change of the defect bubbles.
    N : int
        Fourier truncation, modes ``-N..N``.
    Q : int
        Trapezoid nodes over ``alpha2``.
    M_q : int
        Trapezoid nodes per circle for the lattice remainder.
    ewald : float
        Ewald split parameter.
    root_tol : float
        Relative step tolerance for frequency roots.
    residual_tol : float
        Acceptance threshold for sigma_min / ||A|| at a root.
    max_iter : int
        Iteration cap for Muller's method.
    """

    rho_b: float = 1.0
    kappa_b: float = 1.0
    rho_w: float = 5000.0
    kappa_w: float = 5000.0
    R: float = 0.05
    epsilon: float = 0.0
    N: int = 5
    Q: int = 100
    M_q: int = 64
    ewald: float = math.sqrt(math.pi)
    root_tol: float = 1e-12
    residual_tol: float = 1e-8
    max_iter: int = 60

    def __post_init__(self):
        for name in ("rho_b", "kappa_b", "rho_w", "kappa_w"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if not self.delta < 1:
            raise ConfigError(f"contrast delta = rho_b/rho_w must be < 1, got {self.delta}")
        vb = self.kappa_b / self.rho_b
        vw = self.kappa_w / self.rho_w
        if abs(vb - vw) > 1e-12 * max(vb, vw):
            raise ConfigError("wave speeds inside and outside the bubbles must agree")
        if not 0 < self.R < 0.5:
            raise ConfigError(f"R must lie in (0, 1/2), got {self.R}")
        rd = self.R_d
        if not 0 < rd:
            raise ConfigError(f"defect radius R + epsilon must be positive, got {rd}")
        if rd + self.R >= 1:
            raise ConfigError(f"defect bubble (radius {rd}) would touch its neighbours")
        if rd >= 0.5:
            logger.warning("defect radius %.4g exceeds half the lattice period", rd)
        for name in ("N", "Q", "M_q", "max_iter"):
            v = getattr(self, name)
            if not (isinstance(v, int) and not isinstance(v, bool)) or v < (0 if name == "N" else 1):
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if self.M_q < 2 * self.N + 4:
            raise ConfigError("M_q must exceed 2N + 3 to resolve the Fourier modes")
        if not self.ewald > 0:
            raise ConfigError("ewald parameter must be positive")
        if not (self.root_tol > 0 and self.residual_tol > 0):
            raise ConfigError("tolerances must be positive")

    @property
    def delta(self) -> float:
        return self.rho_b / self.rho_w

    @property
    def R_d(self) -> float:
        return self.R + self.epsilon

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    def replace(self, **changes) -> "CrystalConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "CrystalConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown crystal keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

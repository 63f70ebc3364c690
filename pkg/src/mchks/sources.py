"""Model parameters, biological source terms and mobility laws.

The source terms follow the truncated forms used by the time-discrete and
spectral solvers: the nutrient/signal switches go through ``q_switch`` (the
piecewise-linear interpolation for the smooth-potential mode, the wide clamp
to [-1/eps, 1 + 1/eps] for the singular mode) and negative phases enter only
through positive parts.  On states inside the physical range all truncations
are the identity, and the forms reduce to the plain constitutive laws.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundsViolation, ValidationError
from .potentials import FloryHuggins, Potential


def h(r):
    """Interpolation ramp: 0 below 0, identity on (0, 1), 1 above 1."""
    return np.clip(r, 0.0, 1.0)


def positive_part(r):
    return np.maximum(r, 0.0)


# ------------------------------------------------------------- mobilities


@dataclass(frozen=True)
class ConstantMobility:
    """Constant mobility, bounds equal to the value."""

    value: float = 1.0

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("mobility must be positive")

    @property
    def bounds(self):
        return (self.value, self.value)

    def __call__(self, *fields):
        shape = np.broadcast(*fields).shape if fields else ()
        return np.full(shape, self.value) if shape else self.value


@dataclass(frozen=True)
class KozenyCarman:
    """Porous-flow mobility b(phi, phi_a, n).

    b = B * xi(n) * phi^(2-2*lam) * (1-phi)^2 * (1-phi-phi_a)^(2*lam)
        / (1+phi_a)^2

    Degenerates where phi + phi_a = 1 (and at phi = 0 unless lam = 1), which
    is outside the nondegeneracy hypothesis of the analysis; evaluations
    below ``m0`` raise a BoundsViolation *warning*, not an error.
    """

    b_phi: float = 1.0
    lam: float = 1.0
    m0: float = 1e-6
    m_up: float = 1.0
    # xi(n): empirical positive bounded factor; default is the constant 1
    xi: object = None

    @property
    def bounds(self):
        return (self.m0, self.m_up)

    def __call__(self, phi, phi_a, n):
        phi = np.asarray(phi, dtype=float)
        phi_a = np.asarray(phi_a, dtype=float)
        xi_val = 1.0 if self.xi is None else self.xi(n)
        with np.errstate(invalid="ignore"):
            sat = np.maximum(1.0 - phi - phi_a, 0.0)
            val = (
                self.b_phi
                * xi_val
                * np.maximum(phi, 0.0) ** (2.0 - 2.0 * self.lam)
                * (1.0 - phi) ** 2
                * sat ** (2.0 * self.lam)
                / (1.0 + phi_a) ** 2
            )
        if np.any(val < self.m0) or np.any(val > self.m_up):
            warnings.warn(
                "Kozeny-Carman mobility left its declared bounds "
                f"[{self.m0}, {self.m_up}]",
                BoundsViolation,
                stacklevel=2,
            )
        return val if val.ndim else float(val)


@dataclass(frozen=True)
class EndothelialProduct:
    """Bounded positive mobility factor for the endothelial phase.

    The analysis only pins the two-sided bound 0 < m0 <= n(phi_a, c) <= m_up;
    this concrete Lipschitz instance decays from m_up toward m0 as the phase
    and signal accumulate.
    """

    m0: float = 0.5
    m_up: float = 1.0

    def __post_init__(self):
        if not 0 < self.m0 <= self.m_up:
            raise ValueError("need 0 < m0 <= m_up")

    @property
    def bounds(self):
        return (self.m0, self.m_up)

    def __call__(self, phi_a, c):
        phi_a = np.asarray(phi_a, dtype=float)
        denom = 1.0 + positive_part(phi_a) + np.clip(c, 0.0, 1.0)
        val = self.m0 + (self.m_up - self.m0) / denom
        return val if val.ndim else float(val)


# ---------------------------------------------------------------- params


@dataclass(frozen=True)
class ModelParams:
    """Adimensional model constants plus the potential and mobility laws.

    The smooth/singular mode of the whole scheme is derived from the
    potential variant.  Chemotaxis sensitivities must satisfy chi_a in (0,1)
    always, and chi_phi in (0,1) in the singular mode (chi_phi >= 0 suffices
    for a smooth potential).
    """

    chi_phi: float = 0.01
    chi_a: float = 0.001
    m: float = 0.5
    kappa0: float = 1.0
    kappa_inf: float = 1.0
    zeta: float = 0.1
    delta_n: float = 0.2
    delta_a: float = 0.1
    eps: float = 1e-3
    potential: Potential = field(default_factory=lambda: FloryHuggins(1.0, 3.0))
    mobility_m: object = field(default_factory=ConstantMobility)
    mobility_n: object = field(default_factory=ConstantMobility)

    def __post_init__(self):
        if not 0.0 < self.chi_a < 1.0:
            raise ValidationError("chi_a must lie in (0, 1)")
        if self.singular:
            if not 0.0 < self.chi_phi < 1.0:
                raise ValidationError(
                    "chi_phi must lie in (0, 1) for a singular potential"
                )
        elif self.chi_phi < 0.0:
            raise ValidationError("chi_phi must be nonnegative")
        if self.m < 0.0:
            raise ValidationError("apoptosis rate m must be nonnegative")
        for name in ("kappa0", "kappa_inf"):
            if getattr(self, name) < 0.0:
                raise ValidationError(f"{name} must be nonnegative")
        if self.zeta <= 0.0:
            raise ValidationError("zeta must be positive")
        for name in ("delta_n", "delta_a"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.eps < 1.0:
            raise ValidationError("eps must lie in (0, 1)")

    @property
    def singular(self) -> bool:
        return self.potential.singular

    @property
    def wide_clamp(self):
        """Truncation window [-1/eps, 1 + 1/eps] for nutrient/signal switches."""
        return (-1.0 / self.eps, 1.0 + 1.0 / self.eps)


def q_switch(params: ModelParams, r):
    """Nutrient switch: h(r) in smooth mode, wide clamp in singular mode."""
    if params.singular:
        lo, hi = params.wide_clamp
        return np.clip(r, lo, hi)
    return h(r)


def p_switch(params: ModelParams, r):
    """Tumor-fraction switch: identity in smooth mode, positive part singular."""
    if params.singular:
        return positive_part(r)
    return np.asarray(r, dtype=float) if np.ndim(r) else float(r)


def clamp_signal(params: ModelParams, c):
    lo, hi = params.wide_clamp
    return np.clip(c, lo, hi)


def theta(params: ModelParams, phi, c):
    """Endothelial activation factor, bounded in [zeta, 1 + zeta] for c in [0,1]."""
    cc = clamp_signal(params, c)
    return positive_part(cc - params.delta_a) * (1.0 - h(phi)) + params.zeta


def proliferation(params: ModelParams, phi, n):
    """Nutrient-gated proliferation (the bounded part of the phi source)."""
    return positive_part(q_switch(params, n) - params.delta_n) * h(phi)


def source_phi(params: ModelParams, phi, n):
    """Tumor fraction source: proliferation minus apoptosis."""
    return proliferation(params, phi, n) - params.m * np.asarray(phi, dtype=float)


def source_phi_a(params: ModelParams, phi, phi_a, c):
    """Logistic endothelial source gated by the activation factor."""
    phi_a = np.asarray(phi_a, dtype=float)
    logistic = params.kappa0 * phi_a - params.kappa_inf * positive_part(phi_a) ** 2
    return theta(params, phi, c) * logistic


def source_n(params: ModelParams, phi, phi_a, n):
    """Nutrient supply from vasculature minus tumor consumption."""
    q = q_switch(params, n)
    return (1.0 - q) * (1.0 - h(phi) + positive_part(phi_a)) - p_switch(
        params, phi
    ) * q


def source_c(params: ModelParams, phi, phi_a, n, c):
    """Hypoxia-driven signal release minus endothelial consumption."""
    cc = clamp_signal(params, c)
    release = h(phi) * positive_part(params.delta_n - np.asarray(n, dtype=float))
    return release * (1.0 - cc) - positive_part(phi_a) * cc

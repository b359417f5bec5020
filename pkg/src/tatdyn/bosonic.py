"""Linearized Holstein-Primakoff model of the all-to-all TaT dynamics.

The collective spin fluctuations around +x become a single bosonic mode
with Hamiltonian -(chi/2)(a^2 + a^dag^2) - (delta/2)(a^dag a + a a^dag),
chi = J/2 and delta = Omega - J/2. Inside the window |delta| <= chi a
squeezing Bogolyubov transformation maps it onto pure squeezing at rate
lambda = sqrt(chi^2 - delta^2) = sqrt(Omega (J - Omega)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# below this lambda/chi the closed form loses digits to cancellation
_SMALL_LAMBDA = 1e-3


class BosonicParamsError(ValueError):
    pass


@dataclass(frozen=True)
class BosonicParams:
    chi: float
    delta: float
    lam: float
    u: float
    v: float
    omega0: float

    @classmethod
    def from_field(cls, omega: float, coupling: float = 1.0) -> "BosonicParams":
        if not coupling > 0:
            raise BosonicParamsError("coupling must be positive")
        chi = coupling / 2
        delta = omega - chi
        if abs(delta) > chi * (1 + 1e-12):
            raise BosonicParamsError(
                f"field {omega} outside the window [0, {coupling}] where the Bogolyubov coefficients are real")
        delta = math.copysign(min(abs(delta), chi), delta)
        lam = math.sqrt(max(chi * chi - delta * delta, 0.0))
        if lam > 0:
            u = math.sqrt(0.5 * (chi / lam + 1))
            v = math.copysign(math.sqrt(0.5 * (chi / lam - 1)), delta) if delta != 0 else 0.0
        else:
            u = v = math.inf
        return cls(chi, delta, lam, u, v, chi)

    @property
    def omega(self) -> float:
        return self.omega0 + self.delta

    def reflected(self) -> "BosonicParams":
        """Parameters at the field mirrored about the optimal field."""
        return BosonicParams.from_field(2 * self.omega0 - self.omega, 2 * self.chi)


def _propagator_entries(p: BosonicParams, t):
    """cosh(lambda t) and sinh(lambda t)/lambda, with the lambda -> 0 limit."""
    t = np.asarray(t, dtype=float)
    lt = p.lam * t
    c = np.cosh(lt)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(np.abs(lt) > 1e-8, np.sinh(lt) / np.where(p.lam > 0, p.lam, 1.0), t * (1 + lt**2 / 6))
    return c, s


def quadrature_coefficients(p: BosonicParams, t):
    """(A, B, C) with <X_theta^2> = A + B cos(2 theta) + C sin(2 theta)."""
    t = np.asarray(t, dtype=float)
    chi, d, lam = p.chi, p.delta, p.lam
    if lam > _SMALL_LAMBDA * chi:
        ep, em = np.exp(2 * lam * t), np.exp(-2 * lam * t)
        r = chi / lam
        A = -0.5 * d * d / lam**2 + 0.25 * r * r * (ep + em)
        B = 0.5 * d * chi / lam**2 - 0.25 * r * (d / lam) * (ep + em)
        C = 0.25 * r * (ep - em)
        return A, B, C
    # exact linear flow x' = (chi - delta) p, p' = (chi + delta) x from vacuum
    c, s = _propagator_entries(p, t)
    a = (chi + d) * s
    b = (chi - d) * s
    A = 0.25 * (2 * c * c + a * a + b * b)
    B = 0.25 * (b * b - a * a)
    C = 0.5 * c * (a + b)
    return A, B, C


def quadrature_variance(p: BosonicParams, theta, t):
    """<X_theta^2> with X_theta = cos(theta) X + sin(theta) P, from the vacuum."""
    A, B, C = quadrature_coefficients(p, t)
    theta = np.asarray(theta, dtype=float)
    out = A + B * np.cos(2 * theta) + C * np.sin(2 * theta)
    return float(out) if np.ndim(out) == 0 else out


def extreme_variances(p: BosonicParams, t):
    """(min, max) of <X_theta^2> over theta."""
    A, B, C = quadrature_coefficients(p, t)
    R = np.hypot(B, C)
    return A - R, A + R


def boson_number(p: BosonicParams, t):
    """<a^dag a> = (chi/lambda)^2 sinh^2(lambda t); (chi t)^2 at lambda = 0."""
    _, s = _propagator_entries(p, t)
    out = (p.chi * s) ** 2
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AngleResult:
    angle: float
    degenerate: bool


def min_variance_angle(p: BosonicParams, t: float, atol: float = 1e-14) -> AngleResult:
    """Quadrature angle in [0, pi) of minimal variance."""
    A, B, C = quadrature_coefficients(p, t)
    if math.hypot(float(B), float(C)) <= atol:
        return AngleResult(0.0, True)
    # A + R cos(2 theta - phi) is minimal at 2 theta = phi + pi
    phi = math.atan2(float(C), float(B))
    return AngleResult(float(np.mod(0.5 * (phi + math.pi), math.pi)), False)


@dataclass(frozen=True)
class SqueezingEstimate:
    xi2: float
    valid: bool
    boson_number: float


def squeezing_estimate(p: BosonicParams, n_spins: int, t: float) -> SqueezingEstimate:
    """Spin squeezing from the bosonic model, depletion-corrected.

    ``valid`` is False once the boson number reaches N/2, where the
    linearized mapping no longer makes sense.
    """
    n = boson_number(p, t)
    vmin, _ = extreme_variances(p, t)
    xi2 = 2 * float(vmin) / (1 - 2 * n / n_spins) ** 2
    return SqueezingEstimate(xi2, n < n_spins / 2, float(n))


def squeezing_curve(p: BosonicParams, n_spins: int, t):
    """Vectorized squeezing estimate and validity mask over a time grid."""
    n = np.asarray(boson_number(p, t))
    vmin, _ = extreme_variances(p, t)
    return 2 * vmin / (1 - 2 * n / n_spins) ** 2, n < n_spins / 2


def spin_variances(p: BosonicParams, n_spins: int, t):
    """Var(J^y), Var(J^z) and Cov(J^y, J^z) implied by the linear mapping."""
    A, B, C = quadrature_coefficients(p, t)
    scale = n_spins / 2
    return scale * (A + B), scale * (A - B), scale * C

"""Rescaled nonlocal kernels gamma_delta(x, y) = delta**-3 * gamma((x - y) / delta)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

BUILTIN_PROFILES = {
    "constant": ((0, 1.5),),
    "triangular": ((0, 6.0), (1, -6.0)),
    "parabolic": ((0, 12.0), (2, -12.0)),
}


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelProfile:
    """Even profile gamma(t) on |t| < 1, zero outside.

    Polynomial profiles are stored as ``(power, coeff)`` pairs in ``|t|``.
    A non-polynomial profile may be supplied through ``func``; such profiles
    are flagged ``inexact_quadrature``.
    """

    kind: str
    coefficients: tuple[tuple[int, float], ...] = ()
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @property
    def inexact_quadrature(self) -> bool:
        return self.func is not None

    @property
    def degree(self) -> int:
        """Polynomial degree in |t| (used to size quadrature rules)."""
        if self.func is not None:
            return 8
        return max(p for p, _ in self.coefficients)

    def __call__(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        inside = t < 1.0
        if self.func is not None:
            val = np.asarray(self.func(t), dtype=float)
        else:
            val = np.zeros_like(t)
            for p, c in self.coefficients:
                val = val + c * t**p
        return np.where(inside, val, 0.0)


def make_profile(kind: str, coefficients=None, func=None) -> KernelProfile:
    kind = kind.lower()
    if func is not None:
        prof = KernelProfile("custom", (), func)
    else:
        if coefficients is None:
            if kind not in BUILTIN_PROFILES:
                raise KernelError(f"unknown kernel kind {kind!r}; give coefficients")
            coefficients = BUILTIN_PROFILES[kind]
        coeffs = tuple((int(p), float(c)) for p, c in coefficients)
        if not coeffs:
            raise KernelError("empty coefficient list")
        if any(p < 0 for p, _ in coeffs):
            raise KernelError("powers of |t| must be nonnegative")
        prof = KernelProfile(kind, coeffs)
    _check_profile(prof)
    return prof


def _check_profile(prof: KernelProfile, nsamples: int = 401) -> None:
    t = np.linspace(-1.0, 1.0, nsamples)[1:-1]
    vals = prof(t)
    if np.any(vals < -1e-14):
        raise KernelError(f"profile {prof.kind!r} takes negative values on (-1, 1)")
    if second_moment(prof) <= 0.0:
        raise KernelError(f"profile {prof.kind!r} has zero second moment")


def second_moment(prof: KernelProfile) -> float:
    """sigma = 1/2 * int_{-1}^{1} t^2 gamma(t) dt."""
    if prof.func is None:
        # int_0^1 t^(p+2) dt = 1/(p+3) per monomial
        return math.fsum(c / (p + 3) for p, c in prof.coefficients)
    val, _ = integrate.quad(lambda t: t * t * float(prof(t)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return val


def zeroth_moment(prof: KernelProfile) -> float:
    """int_{-1}^{1} gamma(t) dt."""
    if prof.func is None:
        return 2.0 * math.fsum(c / (p + 1) for p, c in prof.coefficients)
    val, _ = integrate.quad(lambda t: float(prof(t)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 2.0 * val


@dataclass(frozen=True)
class KernelSpec:
    profile: KernelProfile
    delta: float

    @property
    def sigma(self) -> float:
        return second_moment(self.profile)

    @property
    def inexact_quadrature(self) -> bool:
        return self.profile.inexact_quadrature

    def __call__(self, x, y):
        return eval_kernel(self, x, y)

    def of_distance(self, s):
        """Kernel as a function of the signed separation s = x - y."""
        s = np.asarray(s, dtype=float)
        return self.profile(s / self.delta) / self.delta**3

    def with_delta(self, delta: float) -> "KernelSpec":
        return make_kernel(self.profile.kind, self.profile.coefficients or None, delta,
                           func=self.profile.func)


def make_kernel(kind: str, params=None, delta: float = 1.0, *, func=None) -> KernelSpec:
    if not delta > 0:
        raise KernelError(f"horizon must be positive, got {delta!r}")
    return KernelSpec(make_profile(kind, params, func), float(delta))


def eval_kernel(k: KernelSpec, x, y):
    out = k.of_distance(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


_MASS_LIMIT = 1e12


def verify_horizon_bound(k: KernelSpec, region: Sequence[tuple[float, float]],
                         nsamples: int = 201, warn: bool = True) -> float:
    """Estimate G * delta**2 with G = sup_x int_{B_delta(x) cap region} gamma_delta(x, y) dy.

    The supremum is taken over ``nsamples`` points per interval of ``region``.
    For profiles of finite mass G * delta**2 is independent of delta; a
    non-integrable custom profile gives an infinite value and a warning only.
    """
    prof = k.profile
    best = 0.0
    for lo, hi in region:
        xs = np.linspace(lo, hi, nsamples)
        for x in xs:
            total = 0.0
            for rlo, rhi in region:
                a = max(rlo, x - k.delta)
                b = min(rhi, x + k.delta)
                if b > a:
                    total += _profile_mass(prof, (a - x) / k.delta, (b - x) / k.delta)
            best = max(best, total)
    # int gamma_delta dy = delta**-2 * int gamma(t) dt, so G * delta**2 is the mass in t;
    # it can only blow up for a non-integrable custom profile
    if warn and not (math.isfinite(best) and best < _MASS_LIMIT):
        warnings.warn("kernel mass is not finite; G <~ delta**-2 fails", RuntimeWarning, stacklevel=2)
    return best


def _profile_mass(prof: KernelProfile, t0: float, t1: float) -> float:
    """int_{t0}^{t1} gamma(t) dt for -1 <= t0 <= t1 <= 1."""
    if prof.func is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = integrate.quad(lambda t: float(prof(t)), t0, t1, points=[0.0] if t0 < 0 < t1 else None,
                                 full_output=1)
        # a fourth entry is only returned when quad did not converge
        return math.inf if len(res) == 4 else res[0]

    def prim(t):
        # antiderivative of sum c |t|^p, odd in t
        s = math.copysign(1.0, t)
        return s * math.fsum(c * abs(t) ** (p + 1) / (p + 1) for p, c in prof.coefficients)

    return prim(t1) - prim(t0)

"""Model parameters for the equivariant Yang-Mills heat flow in dimension d > 10.

The radial flow is

    u_t - u_rr - (d-3)/r u_r + (d-2) f(u)/r^2 = 0,   f(u) = u(1-u)(2-u),

and every derived constant below is an explicit function of the dimension d
and the blow-up index l.  The tail exponent of the ground state is

    gamma(d) = (d - 4 - sqrt((d-6)^2 - 12)) / 2,

which lies in (1, 2) exactly when d > 10.  The blow-up rate of the l-th
regime is lambda(t) ~ c (T-t)^(l/gamma).
"""
from __future__ import annotations

import math
from dataclasses import dataclass


def f_cubic(u):
    """Nonlinearity f(u) = u(1-u)(2-u) = 2u - 3u^2 + u^3."""
    return u * (1.0 - u) * (2.0 - u)


def f_prime(u):
    return 2.0 - 6.0 * u + 3.0 * u * u


def f_second(u):
    return 6.0 * u - 6.0


F_THIRD = 6.0


def gamma_of_d(d: int) -> float:
    """Ground-state tail exponent gamma(d); real and in (1,2) only for d > 10."""
    disc = (d - 6.0) ** 2 - 12.0
    if disc < 0:
        raise ValueError(f"d={d}: tail exponent is complex ((d-6)^2 < 12)")
    return (d - 4.0 - math.sqrt(disc)) / 2.0


@dataclass(frozen=True)
class ModelParams:
    """All constants of one model instance.

    Attributes
    ----------
    d : int
        Space dimension, must exceed 10.
    gamma : float
        Ground-state tail exponent, in (1, 2).
    hbar : int
        Integer part of (1/2)((d-2)/2 - gamma).
    delta : float
        Fractional part delta = (1/2)((d-2)/2 - gamma) - hbar, in (0, 1).
    l : int
        Blow-up index; the rate exponent is l/gamma.  Requires 2l > gamma.
    L : int
        Profile depth (number of b-parameters), L >= l.
    bbk : int
        Top energy index, L + hbar + 1.
    eta : float
        Small localization parameter used in B_1 = B_0^(1+eta).
    M : float
        Cutoff scale of the orthogonality generator Phi_M.
    bstar : float
        A-priori upper bound for b_1.
    """

    d: int
    gamma: float
    hbar: int
    delta: float
    l: int
    L: int
    bbk: int
    eta: float
    M: float
    bstar: float = 0.1

    def rate_exponent(self) -> float:
        """Blow-up rate exponent l/gamma of lambda(t) ~ (T-t)^(l/gamma)."""
        return self.l / self.gamma

    def s_exponent(self) -> float:
        """Decay exponent of lambda(s) ~ s^(-l/(2l-gamma))."""
        return self.l / (2.0 * self.l - self.gamma)

    def b0_radius(self, b1: float) -> float:
        """Localization radius B_0 = b_1^(-1/2)."""
        if b1 <= 0:
            raise ValueError("b1 must be positive")
        return b1 ** -0.5

    def b1_radius(self, b1: float) -> float:
        """Localization radius B_1 = B_0^(1+eta)."""
        return self.b0_radius(b1) ** (1.0 + self.eta)


def derive_params(d: int, l: int, L: int, eta: float = 0.01, M: float = 20.0,
                  bstar: float = 0.1) -> ModelParams:
    """Derive all model constants from (d, l, L, eta, M) and validate them.

    Raises
    ------
    ValueError
        If d <= 10 (gamma leaves (1,2) or is complex), if the blow-up
        index is too small (2l <= gamma), or any other precondition fails.
    """
    if int(d) != d or d <= 10:
        raise ValueError(f"d must be an integer exceeding 10, got {d}")
    if int(l) != l or l < 1:
        raise ValueError(f"l must be a positive integer, got {l}")
    if int(L) != L or L < l:
        raise ValueError(f"L must be an integer with L >= l, got L={L}, l={l}")
    if not 0.0 < eta <= 0.1:
        raise ValueError(f"eta must lie in (0, 0.1], got {eta}")
    if M < 1.0:
        raise ValueError(f"M must be >= 1, got {M}")
    if bstar <= 0:
        raise ValueError("bstar must be positive")

    d, l, L = int(d), int(l), int(L)
    gamma = gamma_of_d(d)
    if not 1.0 < gamma < 2.0:
        raise ValueError(f"d={d}: gamma={gamma} outside (1,2)")
    if 2 * l <= gamma:
        raise ValueError(f"blow-up index too small: 2l={2 * l} <= gamma={gamma}")

    half = 0.5 * ((d - 2.0) / 2.0 - gamma)
    hbar = int(math.floor(half))
    delta = half - hbar
    if not 0.0 < delta < 1.0:
        raise ValueError(f"d={d}: delta={delta} outside (0,1)")

    return ModelParams(d=d, gamma=gamma, hbar=hbar, delta=delta, l=l, L=L,
                       bbk=L + hbar + 1, eta=float(eta), M=float(M),
                       bstar=float(bstar))

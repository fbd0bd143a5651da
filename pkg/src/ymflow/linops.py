"""Operator calculus around the linearized flow operator.

With V = Lambda log(Lambda Q) the linearized operator factorizes as

    L = A* A,      A u  = -u' + (V/y) u,      A* u = u' + (d-3+V)/y u,

and the conjugate L~ = A A* has potential Z~ = (V+1)^2 + (d-4)(V+1) - Lambda V.
The scaling mode Lambda Q spans the good kernel direction of L; the second
kernel element Gamma is singular at the origin and enters only through the
variation-of-parameters inverse.  The inverse is computed by the two-step
first-order scheme

    A w = (y^(d-3) Lambda Q)^-1 int_0^y g Lambda Q x^(d-3) dx,
    w   = -Lambda Q int_0^y (A w / Lambda Q) dx,

with the below-domain part of each integral supplied by a power-law head.
Every inversion records its round-trip residual ||L w - g|| / ||g||;
downstream code must check it, silent drift here is the main failure mode
of the whole toolkit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridFunction, RadialGrid, measure_slope
from .ground_state import GroundState
from .model import ModelParams, f_second


class InversionError(RuntimeError):
    """Operator inversion failed; .code is 'roundtrip-failed' or 'tail-divergence'."""

    def __init__(self, message: str, code: str, level: int | None = None):
        super().__init__(message)
        self.code = code
        self.level = level


class OperatorContext:
    """Immutable bundle of grid, ground state and cached potentials.

    All operator applications are pure functions of the stored arrays and
    safe to use concurrently.
    """

    def __init__(self, params: ModelParams, gs: GroundState):
        if gs.params != params:
            raise ValueError("ground state was computed for different params")
        self.params = params
        self.gs = gs
        self.grid = gs.grid
        y = self.grid.nodes
        self.y = y
        self.lam_q = gs.LambdaQ.values
        self.V = gs.V.values
        self.Z_over_y2 = gs.Z.values / y ** 2
        self.Ztilde = gs.ztilde()
        self.Ztilde_over_y2 = self.Ztilde / y ** 2
        # Lambda Z / y^2 = (d-2) f''(Q) Lambda Q / y^2, analytic
        self.lamZ_over_y2 = (params.d - 2) * f_second(gs.Q.values) * self.lam_q / y ** 2
        self.dm3_over_y = (params.d - 3) / y
        # 1/(y^(d-3) Lambda Q); Lambda Q > 0 so this is finite on the grid
        self.inv_weight = 1.0 / (y ** (params.d - 3) * self.lam_q)
        self._gamma = None

    # -- first order factors -------------------------------------------------

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        return -self.grid.d1(u) + (self.V / self.y) * u

    def apply_Astar(self, u: np.ndarray) -> np.ndarray:
        return self.grid.d1(u) + ((self.params.d - 3 + self.V) / self.y) * u

    # -- second order operators ----------------------------------------------

    def apply_L(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        return -g.d2(u) - self.dm3_over_y * g.d1(u) + self.Z_over_y2 * u

    def apply_Ltilde(self, u: np.ndarray) -> np.ndarray:
        g = self.grid
        return -g.d2(u) - self.dm3_over_y * g.d1(u) + self.Ztilde_over_y2 * u

    def apply_Lambda(self, u: np.ndarray) -> np.ndarray:
        return self.y * self.grid.d1(u)

    def apply_L_power(self, u: np.ndarray, k: int) -> np.ndarray:
        for _ in range(k):
            u = self.apply_L(u)
        return u

    # -- kernel element -------------------------------------------------------

    @property
    def gamma_profile(self) -> GridFunction:
        if self._gamma is None:
            self._gamma = compute_gamma(self)
        return self._gamma


def _origin_slope(grid: RadialGrid, f: np.ndarray, hint: float | None = None):
    """Local log-slope of |f| at the inner end; None if f vanishes there."""
    if np.all(f[:9] == 0.0):
        return None  # compactly supported away from the origin: no head
    lo = grid.nodes[0]
    hi = grid.nodes[min(8, grid.n - 1)]
    try:
        _, slope, _ = measure_slope(grid, f, lo, hi)
        return slope
    except ValueError:
        if hint is None:
            raise
        return hint


def _head_integral(grid: RadialGrid, smooth: np.ndarray, power: float,
                   slope) -> float:
    """int_0^{y_min} smooth(x) x^power dx for smooth ~ c x^slope."""
    if slope is None:
        return 0.0
    p = slope + power + 1.0
    if p <= 0.05:
        raise InversionError(
            f"head integral diverges at origin (combined power {p:.3g})",
            code="tail-divergence")
    y1 = grid.nodes[0]
    return float(smooth[0]) * y1 ** (power + 1.0) / p


def compute_gamma(ctx: OperatorContext) -> GridFunction:
    """Singular kernel element Gamma(y) = Lambda Q int_1^y dx/(x^(d-3) Lambda Q^2).

    Anchored at the grid node y = 1 (Gamma(1) = 0 exactly).  The integrand is
    written as (x^2/Lambda Q)^2 x^-(d+1): the smooth factor tends to a
    constant at the origin so the power-folded rule stays accurate while the
    bare integrand ranges over ~50 decades.
    """
    g = ctx.grid
    d = ctx.params.d
    if not (g.y_min < 1.0 < g.y_max):
        raise ValueError("Gamma anchor y=1 outside the grid")
    smooth = (g.nodes ** 2 / ctx.lam_q) ** 2
    i1 = g.index_of(1.0)
    if g.nodes[i1] != 1.0:
        raise ValueError("grid has no exact node at y=1")
    integral = g.cumulative_power_from(smooth, -(d + 1.0), i1)
    vals = ctx.lam_q * integral
    if not np.all(np.isfinite(vals)):
        raise InversionError("Gamma integrand overflowed", code="tail-divergence")
    return g.function(vals)


def gamma_decaying(ctx: OperatorContext) -> GridFunction:
    """Representative of Gamma with the pure decaying tail y^-(d-4-gamma).

    The anchored Gamma carries a scaling-mode component c LambdaQ ~ y^-gamma
    at infinity (the variation-of-parameters inverse is invariant under
    adding such a component).  Subtracting the estimated full-line integral
    removes it and realizes the second indicial behavior at infinity.
    """
    g = ctx.grid
    d = ctx.params.d
    gamma = ctx.params.gamma
    anchored = ctx.gamma_profile.values
    smooth = (g.nodes ** 2 / ctx.lam_q) ** 2
    i1 = g.index_of(1.0)
    cum = g.cumulative_power_from(smooth, -(d + 1.0), i1)
    # analytic remainder of int_ymax^inf, integrand ~ q_end (y/ymax)^(2 gamma - d + 3)
    q_end = smooth[-1] * g.y_max ** -(d + 1.0)
    remainder = q_end * g.y_max / (d - 4.0 - 2.0 * gamma)
    c_inf = cum[-1] + remainder
    return g.function(anchored - c_inf * ctx.lam_q)


def invert_L(ctx: OperatorContext, gfun: GridFunction, *,
             tol: float = 1e-4) -> tuple[GridFunction, dict]:
    """Solve L w = g by the two-step scheme; returns (w, provenance).

    provenance records the round-trip residual ||L w - g||_w / ||g||_w and
    the origin slopes used for the head integrals.

    Raises
    ------
    InversionError
        code 'tail-divergence' if an integrand fails to converge near the
        origin or overflows; 'roundtrip-failed' if the residual exceeds tol.
    """
    g = ctx.grid
    d = ctx.params.d
    gv = gfun.values
    if not np.all(np.isfinite(gv)):
        raise InversionError("non-finite input", code="tail-divergence")

    # step 1: I1(y) = int_0^y g LambdaQ x^(d-3) dx, then A w = I1 / (y^(d-3) LambdaQ)
    smooth1 = gv * ctx.lam_q
    hint1 = 2.0 * gfun.origin_order + 4.0 if gfun.origin_order is not None else None
    slope1 = _origin_slope(g, smooth1, hint1)
    if slope1 is not None and hint1 is not None and abs(slope1 - hint1) > 1.0:
        slope1 = hint1  # measured slope polluted (e.g. sign change near y_min)
    head1 = _head_integral(g, smooth1, d - 3.0, slope1)
    I1 = g.cumulative_power(smooth1, d - 3.0, head=head1)
    Aw = I1 * ctx.inv_weight

    # step 2: w = -LambdaQ int_0^y (A w / LambdaQ) dx
    smooth2 = Aw / ctx.lam_q
    hint2 = None if slope1 is None else slope1 - d + 1.0
    slope2 = _origin_slope(g, smooth2, hint2)
    head2 = _head_integral(g, smooth2, 0.0, slope2)
    I2 = g.cumulative_power(smooth2, 0.0, head=head2)
    w = -ctx.lam_q * I2

    if not np.all(np.isfinite(w)):
        raise InversionError("inverse overflowed", code="tail-divergence")

    resid = ctx.apply_L(w) - gv
    gnorm = g.norm(gv)
    rel = g.norm(resid) / gnorm if gnorm > 0 else 0.0
    if rel > tol:
        raise InversionError(
            f"round-trip residual {rel:.3e} exceeds {tol:.1e}",
            code="roundtrip-failed")
    oo = None if gfun.origin_order is None else gfun.origin_order + 1
    to = None if gfun.tail_order is None else gfun.tail_order + 2.0
    prov = {"roundtrip_rel": rel, "origin_slope_step1": slope1,
            "origin_slope_step2": slope2}
    return g.function(w, origin_order=oo, tail_order=to), prov


def invert_L_via_gamma(ctx: OperatorContext, gfun: GridFunction) -> GridFunction:
    """Variation-of-parameters inverse (independent quadrature pipeline).

    L^-1 g = -Gamma int_0^y g LambdaQ x^(d-3) dx + LambdaQ int_0^y g Gamma x^(d-3) dx
    """
    g = ctx.grid
    d = ctx.params.d
    gv = gfun.values
    gamma_vals = ctx.gamma_profile.values

    smooth1 = gv * ctx.lam_q
    hint1 = 2.0 * gfun.origin_order + 4.0 if gfun.origin_order is not None else None
    slope1 = _origin_slope(g, smooth1, hint1)
    head1 = _head_integral(g, smooth1, d - 3.0, slope1)
    I1 = g.cumulative_power(smooth1, d - 3.0, head=head1)

    smooth2 = gv * gamma_vals
    hint2 = None if hint1 is None else hint1 - (d - 2.0) - 2.0
    slope2 = _origin_slope(g, smooth2, hint2)
    head2 = _head_integral(g, smooth2, d - 3.0, slope2)
    I2 = g.cumulative_power(smooth2, d - 3.0, head=head2)

    return g.function(-gamma_vals * I1 + ctx.lam_q * I2)


@dataclass
class ProfileSet:
    """Ladder T_0..T_L with T_0 = Lambda Q and L T_{k+1} = -T_k."""

    T: list[GridFunction]
    provenance: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.T)


def build_profile_ladder(ctx: OperatorContext, L: int, *, tol: float = 1e-4) -> ProfileSet:
    """T_k = (-1)^k applications of -L^-1 to the scaling mode."""
    t0 = ctx.grid.function(ctx.lam_q.copy(), origin_order=0,
                           tail_order=-ctx.params.gamma)
    ladder = [t0]
    prov = [{"roundtrip_rel": 0.0, "level": 0}]
    for k in range(L):
        try:
            w, p = invert_L(ctx, ladder[-1], tol=tol)
        except InversionError as err:
            err.level = k + 1
            raise
        ladder.append(ctx.grid.function(
            -w.values, origin_order=w.origin_order, tail_order=w.tail_order))
        p["level"] = k + 1
        prov.append(p)
    return ProfileSet(T=ladder, provenance=prov)


def ladder_slope_table(ctx: OperatorContext, ladder: ProfileSet) -> list[dict]:
    """Measured origin/tail slopes of each T_k vs the expected 2k+2 and 2k-gamma."""
    g = ctx.grid
    gamma = ctx.params.gamma
    rows = []
    for k, t in enumerate(ladder.T):
        _, so, _ = measure_slope(g, t.values, g.y_min * 1.5, g.y_min * 40.0)
        _, st, _ = measure_slope(g, t.values, g.y_max / 10.0, g.y_max)
        rows.append({"k": k, "origin_slope": so, "origin_expected": 2 * k + 2,
                     "tail_slope": st, "tail_expected": 2 * k - gamma})
    return rows

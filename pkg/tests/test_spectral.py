import numpy as np
import pytest

from ymflow.grid import build_grid, cutoff_profile
from ymflow.ground_state import solve_ground_state
from ymflow.linops import OperatorContext, build_profile_ladder
from ymflow.spectral import (
    CoercivityReport, build_phi_m, check_constraints, coercivity_check,
    hardy_check,
)


class TestPhiM:
    def test_c0_is_one(self, phi11):
        assert phi11.c[0] == 1.0

    def test_orthogonality_to_ladder(self, ctx11, ladder11, phi11):
        g = ctx11.grid
        for k in range(1, len(ladder11)):
            tk = ladder11.T[k]
            ip = g.inner(phi11.phi.values, tk.values)
            assert abs(ip) <= 1e-6 * phi11.phi.norm() * tk.norm()

    def test_gram_structure(self, ctx11, phi11, params11):
        # <L^i T_k, Phi_M> = (-1)^k <chi_M LambdaQ, LambdaQ> delta_ik
        L = params11.L
        diag_ref = phi11.denom
        for i in range(L + 1):
            for k in range(L + 1):
                got = phi11.gram[i, k]
                if i == k:
                    assert got == pytest.approx((-1.0) ** k * diag_ref, rel=1e-4)
                else:
                    assert abs(got) < 1e-4 * abs(diag_ref)

    def test_denominator_consistency(self, phi11):
        # triangular-solve denominators match (-1)^k <chi LambdaQ, LambdaQ>
        assert phi11.denom_consistency < 1e-4

    def test_ck_growth_with_M(self, ctx11, ladder11, params11):
        # |c_{k,M}| grows no faster than ~M^(2k)
        cs = {}
        for M in (10.0, 20.0, 40.0):
            cs[M] = build_phi_m(ctx11, ladder11, params11.L, M).c
        for k in range(1, params11.L + 1):
            slope = (np.log(abs(cs[40.0][k])) - np.log(abs(cs[10.0][k]))) / np.log(4.0)
            assert slope <= 2 * k + 0.3

    def test_rejects_tiny_grid_support(self, ctx11, ladder11):
        with pytest.raises(ValueError, match="support|denominator"):
            build_phi_m(ctx11, ladder11, 4, ctx11.grid.y_max)


class TestHardy:
    def test_certified_minimum_d11(self, ctx11):
        rep = hardy_check(ctx11, alpha=0.0, samples=50, seed=7)
        const = ((11 - 4) / 2.0) ** 2
        assert rep.details["analytic_constant"] == const == 12.25
        assert rep.rayleigh_min >= const * 0.95
        assert rep.passed

    def test_zero_function_trivial(self, ctx11):
        # u = 0: inequality is 0 >= 0; the report machinery must not divide by 0
        rep = hardy_check(ctx11, alpha=0.0, samples=1, seed=1)
        assert np.isfinite(rep.rayleigh_min)

    def test_resonant_alpha_rejected(self, ctx11):
        with pytest.raises(ValueError, match="resonant|excluded"):
            hardy_check(ctx11, alpha=(11 - 4) / 2.0)

    def test_deterministic_under_seed(self, ctx11):
        r1 = hardy_check(ctx11, alpha=0.5, samples=20, seed=3)
        r2 = hardy_check(ctx11, alpha=0.5, samples=20, seed=3)
        assert r1.rayleigh_min == r2.rayleigh_min
        assert r1.details["boundary_C"] == r2.details["boundary_C"]


class TestCoercivity:
    def test_iterate_at_k_hbar(self, ctx11, phi11, params11):
        rep = coercivity_check(ctx11, phi11, "Lk", k=params11.hbar,
                               samples=200, seed=7)
        assert rep.passed
        assert rep.rayleigh_min > 1e-3
        assert "L^m Phi_M" in rep.constraint

    def test_k0_needs_no_constraints(self, ctx11, phi11):
        rep = coercivity_check(ctx11, phi11, "Lk", k=0, samples=50, seed=2)
        assert rep.constraint == "none"
        assert rep.passed

    def test_astar_form(self, ctx11, phi11):
        rep = coercivity_check(ctx11, phi11, "Astar", i=1, p=1.0,
                               samples=50, seed=4)
        assert rep.passed

    def test_a_form_with_constraint(self, ctx11, phi11, params11):
        # 2i+2p > d-2gamma-4 requires the Phi_M constraint
        expo_thresh = 11 - 2 * params11.gamma - 4.0
        p = (expo_thresh + 1.0) / 2.0
        rep = coercivity_check(ctx11, phi11, "A", i=0, p=p, samples=50, seed=5)
        assert rep.constraint == "<u,Phi_M>=0"
        assert rep.passed

    def test_resonance_neighborhood_excluded(self, ctx11, phi11, params11):
        res = 11 - 2 * params11.gamma - 4.0
        with pytest.raises(ValueError, match="resonance"):
            coercivity_check(ctx11, phi11, "A", i=0, p=res / 2.0)

    def test_l_form(self, ctx11, phi11):
        rep = coercivity_check(ctx11, phi11, "L", k=1, i=0, samples=50, seed=6)
        assert rep.passed

    def test_unconstrained_sample_flagged(self, ctx11, phi11):
        # a function with a large Phi_M component must be rejected by the guard
        g = ctx11.grid
        u = cutoff_profile(g.nodes, 5.0) * ctx11.lam_q
        with pytest.raises(ValueError, match="constraint not satisfied"):
            check_constraints(g, u, [phi11.powers[0]])

    def test_projection_is_exact(self, ctx11, phi11):
        from ymflow.grid import random_bump
        from ymflow.spectral import _project_out
        g = ctx11.grid
        rng = np.random.default_rng(8)
        u = random_bump(g, rng)
        vecs = [phi11.powers[0], phi11.powers[1]]
        v = _project_out(g, u, vecs)
        for w in vecs:
            assert abs(g.inner(v, w)) <= 1e-10 * g.norm(v) * g.norm(w)

    def test_report_reproducible(self, ctx11, phi11):
        r1 = coercivity_check(ctx11, phi11, "Astar", samples=10, seed=9)
        r2 = coercivity_check(ctx11, phi11, "Astar", samples=10, seed=9)
        assert r1.rayleigh_min == r2.rayleigh_min

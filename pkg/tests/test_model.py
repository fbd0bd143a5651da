import math

import mpmath
import pytest

from ymflow.model import derive_params, gamma_of_d, f_cubic, f_prime, f_second


def mp_constants(d):
    """High-precision oracle for (gamma, hbar, delta) from the closed forms."""
    with mpmath.workdps(50):
        d = mpmath.mpf(d)
        gamma = (d - 4 - mpmath.sqrt((d - 6) ** 2 - 12)) / 2
        half = ((d - 2) / 2 - gamma) / 2
        hbar = int(mpmath.floor(half))
        delta = half - hbar
        return float(gamma), hbar, float(delta)


@pytest.mark.parametrize("d,l,L,gamma_ref,hbar_ref,delta_ref,bbk_ref", [
    (11, 1, 4, 1.6972243623, 1, 0.4013878, 6),
    (12, 1, 4, 1.5505103, 1, 0.7247449, 6),
    (13, 2, 6, 1.4586187, 2, 0.0206907, 9),
])
def test_derive_params_examples(d, l, L, gamma_ref, hbar_ref, delta_ref, bbk_ref):
    p = derive_params(d, l, L, eta=0.01, M=20.0)
    g_mp, h_mp, de_mp = mp_constants(d)
    assert p.gamma == pytest.approx(g_mp, abs=1e-14)
    assert p.hbar == h_mp == hbar_ref
    assert p.delta == pytest.approx(de_mp, abs=1e-13)
    assert p.gamma == pytest.approx(gamma_ref, abs=5e-8)
    assert p.delta == pytest.approx(delta_ref, abs=5e-7)
    assert p.bbk == bbk_ref


def test_d12_gamma_closed_form():
    assert gamma_of_d(12) == pytest.approx(4.0 - math.sqrt(6.0), abs=1e-15)


def test_invariants_hold():
    p = derive_params(11, 1, 4)
    assert p.d > 10
    assert 1.0 < p.gamma < 2.0
    assert 0.0 < p.delta < 1.0
    assert 2 * p.l > p.gamma
    assert p.L >= p.l


def test_rejections():
    with pytest.raises(ValueError):
        derive_params(10, 1, 4)
    with pytest.raises(ValueError):
        derive_params(9, 1, 4)
    with pytest.raises(ValueError):
        derive_params(11, 0, 4)
    with pytest.raises(ValueError):
        derive_params(11, 2, 1)
    with pytest.raises(ValueError):
        derive_params(11, 1, 4, eta=0.5)
    with pytest.raises(ValueError):
        derive_params(11, 1, 4, M=0.5)


def test_determinism():
    a = derive_params(11, 1, 4, eta=0.01, M=20.0)
    b = derive_params(11, 1, 4, eta=0.01, M=20.0)
    assert a == b


def test_localization_radii():
    p = derive_params(11, 1, 4, eta=0.01)
    assert p.b0_radius(1e-2) == pytest.approx(10.0, rel=1e-14)
    assert p.b1_radius(1e-2) == pytest.approx(10.0 ** 1.01, rel=1e-14)


def test_cubic_nonlinearity_derivatives():
    # finite-difference oracle for f', f''
    h = 1e-6
    for u in (0.0, 0.3, 1.0, 1.7):
        fd1 = (f_cubic(u + h) - f_cubic(u - h)) / (2 * h)
        fd2 = (f_cubic(u + h) - 2 * f_cubic(u) + f_cubic(u - h)) / h**2
        assert f_prime(u) == pytest.approx(fd1, abs=1e-8)
        assert f_second(u) == pytest.approx(fd2, abs=1e-3)
    assert f_second(1.0) == 0.0

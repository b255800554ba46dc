"""Eigenvalue layer: critical angle, root ordering, residuals, failure modes."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sif_lab.spectral import (MaterialParams, critical_angle, lame_exponents,
                              stokes_exponents)

OMEGAS = [1.1 * math.pi, 1.25 * math.pi, 1.5 * math.pi, 1.75 * math.pi, 1.9 * math.pi]


def lame_eq(lam, omega, C):
    return C * C * math.sin(lam * omega) ** 2 - lam * lam * math.sin(omega) ** 2


def stokes_eq(k, omega):
    return math.sin(k * omega) ** 2 - k * k * math.sin(omega) ** 2


def test_critical_angle_fixed_point():
    w = critical_angle()
    assert abs(math.tan(w) - w) < 1e-9
    assert 1.4302 <= w / math.pi <= 1.4304


def test_material_params_relations():
    m = MaterialParams(2.0, 1e-3)
    assert m.C == 1.0 + 2.0 * m.mu * m.eps
    assert m.nu == 1.0 / m.eps - m.mu


@pytest.mark.parametrize("omega", OMEGAS)
@pytest.mark.parametrize("C", [1.0, 1.02, 1.2])
def test_lame_ordering_chain(omega, C):
    table = lame_exponents(omega, C)
    e1, e2, e3 = table.exponents
    if C > 1.0:
        assert 0.5 < e1 < math.pi / omega < e2 < 1.0 < e3 < 2.0 * math.pi / omega
    else:
        # incompressible limit: one root sits exactly at 1
        assert 0.5 < e1 < math.pi / omega
        assert e1 < e2 < e3 < 2.0 * math.pi / omega
        assert any(e == 1.0 for e in table.exponents)
    for e in table.exponents:
        assert abs(lame_eq(e, omega, C)) < 1e-12


@pytest.mark.parametrize("omega", OMEGAS)
def test_stokes_ordering_and_exact_root(omega):
    table = stokes_exponents(omega)
    exps = table.exponents
    assert 0.5 < exps[0] < math.pi / omega
    assert list(exps) == sorted(exps)
    # kappa = 1 solves the equation exactly at every opening angle
    assert any(e == 1.0 for e in exps)
    for e in exps:
        assert abs(stokes_eq(e, omega)) < 1e-12


def test_mode_count_splits_at_critical_angle():
    wstar = critical_angle()
    assert stokes_exponents(wstar - 0.01).mode_count == 1
    assert stokes_exponents(wstar + 0.01).mode_count == 2
    assert stokes_exponents(1.2 * math.pi).mode_count == 1


def test_lame_at_unit_C_matches_stokes():
    omega = 1.55 * math.pi
    lam = lame_exponents(omega, 1.0)
    sto = stokes_exponents(omega)
    assert np.allclose(lam.exponents, sto.exponents, atol=1e-14)


def test_eps_dependence_is_small_and_monotone_toward_stokes():
    omega = 1.5 * math.pi
    sto = stokes_exponents(omega)
    prev = None
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        lam = lame_exponents(omega, 1.0 + 2.0 * eps)
        gap = abs(lam.exponents[0] - sto.exponents[0])
        if prev is not None:
            assert gap < prev
        prev = gap


@settings(max_examples=60, deadline=None)
@given(omega=st.floats(1.05 * math.pi, 1.95 * math.pi),
       C=st.floats(1.0, 1.3))
def test_ordering_property(omega, C):
    table = lame_exponents(omega, C)
    e1, e2, e3 = table.exponents
    assert 0.5 < e1 < e2 < e3
    for e, res in zip(table.exponents, table.residuals):
        assert abs(lame_eq(e, omega, C)) < 1e-11
        assert res < 1e-11


def test_rejects_non_reentrant_angle():
    with pytest.raises(Exception):
        lame_exponents(0.9 * math.pi, 1.0)

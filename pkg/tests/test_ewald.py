"""Tests for the nuclei-nuclei Ewald energies."""

import math

import numpy as np
import pytest

from incommpw.errors import SingularConfigurationError, ValidationError
from incommpw.ewald import (
    EwaldParams,
    cell_quadrature,
    e_ii,
    interlayer_background,
    interlayer_real,
    interlayer_reciprocal,
    interlayer_total,
    intralayer_ewald,
    phase_average,
)
from incommpw.lattice import IncommensuratePair, Lattice


def chain_pair(tau=None, l1=1.0, l2=math.pi / 2.0):
    return IncommensuratePair(Lattice.chain(l1), Lattice.chain(l2), tau=tau)


def hex_pair():
    return IncommensuratePair(
        Lattice.hexagonal(2.0), Lattice.hexagonal(2.0, math.pi / 10.0)
    )


def test_params_validation():
    EwaldParams()
    with pytest.raises(ValidationError):
        EwaldParams(eta=0.0)
    with pytest.raises(ValidationError):
        EwaldParams(r_cut=0.0)
    with pytest.raises(ValidationError):
        EwaldParams(quadrature=1)
    with pytest.raises(ValidationError):
        EwaldParams(t=-1.0)


def test_cell_quadrature_weights():
    """Weights integrate the constant function to the cell volume."""
    for lat in (Lattice.chain(2.5), Lattice.hexagonal(1.3)):
        points, weights = cell_quadrature(lat, 8)
        np.testing.assert_allclose(weights.sum(), lat.cell_volume, rtol=1e-13)
        assert points.shape == (8**lat.dim, lat.dim)


def test_cell_quadrature_against_analytic_integral():
    """Integral of cos(pi x / L) over one chain cell matches closed form."""
    L = 1.7
    points, weights = cell_quadrature(Lattice.chain(L), 24)
    got = float(np.sum(weights * np.cos(math.pi * points[:, 0] / L)))
    exact = L / math.pi * (math.sin(math.pi) - math.sin(0.0))  # = 0 at these limits
    np.testing.assert_allclose(got, exact, atol=1e-12)
    got2 = float(np.sum(weights * points[:, 0] ** 2))
    np.testing.assert_allclose(got2, L**3 / 3.0, rtol=1e-12)


def test_phase_average():
    """|cell| at g = 0, zero at nonzero reciprocal vectors, analytic otherwise."""
    L = 1.0
    lat = Lattice.chain(L)
    np.testing.assert_allclose(phase_average(lat, [0.0]), lat.cell_volume, rtol=1e-14)
    b = lat.reciprocal_basis[0, 0]
    assert abs(phase_average(lat, [b])) < 1e-12
    assert abs(phase_average(lat, [3.0 * b])) < 1e-10
    g = 0.5 * b
    exact = (1.0 - np.exp(-1j * g * L)) / (1j * g)
    np.testing.assert_allclose(phase_average(lat, [g]), exact, atol=1e-12)
    hexa = Lattice.hexagonal(2.0)
    bvec = hexa.reciprocal_basis[:, 0]
    assert abs(phase_average(hexa, bvec)) < 1e-10


def test_intralayer_chain_value():
    """Unit chain with Z = 1: frozen reference value of the 1D Ewald energy."""
    val = intralayer_ewald(Lattice.chain(1.0), 1.0, EwaldParams())
    np.testing.assert_allclose(val, -0.4045393481, atol=1e-9)


def test_intralayer_eta_independence():
    """The splitting parameter drops out once the sums are converged."""
    vals_1d = [
        intralayer_ewald(Lattice.chain(1.0), 1.0, EwaldParams(eta=eta, r_cut=24, g_cut=24))
        for eta in (0.5, 1.0, 2.0)
    ]
    np.testing.assert_allclose(vals_1d, vals_1d[0], rtol=1e-12)
    vals_2d = [
        intralayer_ewald(Lattice.hexagonal(2.0), 1.0, EwaldParams(eta=eta, r_cut=24, g_cut=24))
        for eta in (0.8, 1.0, 1.5)
    ]
    np.testing.assert_allclose(vals_2d, vals_2d[0], rtol=1e-12)


def test_intralayer_hexagonal_value():
    """Frozen per-cell reference value of the 2D hexagonal Ewald energy (L = 2);
    the function reports it per unit volume."""
    lat = Lattice.hexagonal(2.0)
    val = intralayer_ewald(lat, 1.0, EwaldParams())
    np.testing.assert_allclose(val * lat.cell_volume, -1.0533556590, atol=1e-9)


def test_intralayer_charge_scaling():
    """Energy scales as Z^2; Z = 0 short-circuits to zero."""
    p = EwaldParams()
    lat = Lattice.chain(1.0)
    e1 = intralayer_ewald(lat, 1.0, p)
    e3 = intralayer_ewald(lat, 3.0, p)
    np.testing.assert_allclose(e3, 9.0 * e1, rtol=1e-13)
    assert intralayer_ewald(lat, 0.0, p) == 0.0


def test_intralayer_small_cutoff_warns():
    with pytest.warns(RuntimeWarning):
        intralayer_ewald(Lattice.chain(1.0), 1.0, EwaldParams(eta=0.05, r_cut=2.0))


def test_interlayer_reciprocal_is_negligible():
    """The averaged reciprocal sum is analytically zero; the quadrature value
    must stay below 1e-10 of the prefactor scale."""
    for pair in (chain_pair(), chain_pair(tau=[0.3]), hex_pair()):
        p = EwaldParams()
        scale = abs(1.0 / (pair.lat1.cell_volume * pair.lat2.cell_volume)) * pair.lat1.cell_volume
        assert abs(interlayer_reciprocal(pair, 1.0, 1.0, p)) <= 1e-10 * scale


def test_interlayer_real_plus_background_cancels():
    """Unfolding identity: the cell-averaged bare sum equals the free-space
    integral, so adding the background gives exactly zero."""
    for pair in (chain_pair(), hex_pair()):
        for eta in (0.5, 1.0, 2.0):
            p = EwaldParams(eta=eta, r_cut=24)
            total = interlayer_real(pair, 1.0, 1.0, p) + interlayer_background(
                pair, 1.0, 1.0, p
            )
            assert abs(total) < 1e-10


def test_interlayer_total_eta_independent():
    """The full interlayer average is independent of eta over [0.5, 2]."""
    pair = chain_pair()
    vals = [
        interlayer_total(pair, 1.0, 1.0, EwaldParams(eta=eta))
        for eta in (0.5, 0.75, 1.0, 1.5, 2.0)
    ]
    assert max(vals) - min(vals) < 1e-6
    assert all(abs(v) < 1e-8 for v in vals)


def test_interlayer_bare_term_decreases_with_separation():
    """The bare short-range attraction-free sum decays monotonically in t."""
    pair = chain_pair()
    vals = [
        interlayer_real(pair, 1.0, 1.0, EwaldParams(t=t)) for t in (0.5, 1.0, 2.0, 4.0)
    ]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert all(v > 0 for v in vals)


def test_interlayer_zero_charge():
    pair = chain_pair()
    p = EwaldParams()
    assert interlayer_real(pair, 0.0, 1.0, p) == 0.0
    assert interlayer_reciprocal(pair, 1.0, 0.0, p) == 0.0
    assert interlayer_background(pair, 0.0, 0.0, p) == 0.0


def test_interlayer_collision_detected():
    """At t = 0 a sample point sitting exactly on a layer-1 lattice site makes
    the pair energy singular; shift the layers so the first quadrature node
    lands on the origin."""
    points, _ = cell_quadrature(Lattice.chain(1.0), 16)
    pair = chain_pair(tau=[-points[0, 0]])
    with pytest.raises(SingularConfigurationError):
        interlayer_real(pair, 1.0, 1.0, EwaldParams(t=0.0, quadrature=16))


def test_interlayer_t_zero_without_collision_is_finite():
    """t = 0 alone is not an error when no sample point touches a lattice
    site; Gauss nodes are interior so the unshifted sum stays finite."""
    val = interlayer_real(chain_pair(), 1.0, 1.0, EwaldParams(t=0.0))
    assert np.isfinite(val)


def test_interlayer_quadrature_refinement():
    """Doubling the quadrature order barely moves the bare term."""
    pair = chain_pair()
    a = interlayer_real(pair, 1.0, 1.0, EwaldParams(quadrature=16))
    b = interlayer_real(pair, 1.0, 1.0, EwaldParams(quadrature=24))
    assert abs(a - b) < 1e-12 * max(1.0, abs(a))
    coarse = interlayer_real(pair, 1.0, 1.0, EwaldParams(quadrature=16, r_cut=6))
    fine = interlayer_real(pair, 1.0, 1.0, EwaldParams(quadrature=32, r_cut=10))
    assert abs(coarse - fine) < 1e-8


def test_interlayer_tau_invariance_of_total():
    """The cell average makes the interlayer total independent of the shift."""
    p = EwaldParams()
    v0 = interlayer_total(chain_pair(), 1.0, 1.0, p)
    v1 = interlayer_total(chain_pair(tau=[0.37]), 1.0, 1.0, p)
    np.testing.assert_allclose(v0, v1, atol=1e-10)


def test_e_ii_composition():
    """e_ii is the sum of both intralayer terms and the interlayer total."""
    pair = chain_pair()
    p = EwaldParams()
    expected = (
        intralayer_ewald(pair.lat1, 1.0, p)
        + intralayer_ewald(pair.lat2, 2.0, p)
        + interlayer_total(pair, 1.0, 2.0, p)
    )
    np.testing.assert_allclose(e_ii(pair, 1.0, 2.0, p), expected, rtol=1e-13)


def test_e_ii_neutral_layers_reduce_to_intralayer():
    """With the background completion the interlayer part vanishes, so e_ii is
    just the two intralayer energies."""
    pair = chain_pair()
    p = EwaldParams()
    expected = intralayer_ewald(pair.lat1, 1.0, p) + intralayer_ewald(
        pair.lat2, 1.0, p
    )
    np.testing.assert_allclose(e_ii(pair, 1.0, 1.0, p), expected, atol=1e-8)

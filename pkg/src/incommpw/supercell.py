"""Commensurate-supercell reference solver for 1D two-chain systems.

The incommensurate length ratio is replaced by a rational approximation
p/q: a supercell of length S = p*L1 holds p periods of layer 1 and q periods
of a slightly adjusted layer 2 (L2' = S/q).  Bloch plane-wave problems on a
uniform k grid in [0, 2*pi/S) then give a periodic reference DoS, normalized
per unit volume so it is directly comparable to the scaled incommensurate
curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh

from .errors import BasisSizeError
from .lattice import Lattice
from .potential import FourierPotential
from .spectrum import DEFAULT_N_POINTS, DEFAULT_SIGMA, DoSCurve, _smear, default_window


def rational_approximants(x, max_q):
    """Continued-fraction convergents p/q of x with q <= max_q, ascending q.

    Each convergent is in lowest terms and beats every fraction with a smaller
    denominator (|x - p/q| < 1/q^2).
    """
    if x <= 0:
        raise ValueError(f"ratio must be positive, got {x}")
    out = []
    h_prev, h_prev2 = 1, 0
    k_prev, k_prev2 = 0, 1
    value = float(x)
    for _ in range(64):
        a = int(math.floor(value))
        h = a * h_prev + h_prev2
        k = a * k_prev + k_prev2
        if k > max_q:
            break
        out.append((h, k))
        h_prev2, h_prev = h_prev, h
        k_prev2, k_prev = k_prev, k
        frac = value - a
        if frac < 1e-15:
            break
        value = 1.0 / frac
    return out


@dataclass
class Approximant:
    """Rational stand-in p/q for the length ratio L2/L1 of a chain pair."""

    p: int
    q: int
    supercell: float
    l2_approx: float
    error: float

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("approximant numerator and denominator must be positive")
        if math.gcd(self.p, self.q) != 1:
            raise ValueError(f"approximant {self.p}/{self.q} is not in lowest terms")


def make_approximant(p, q, l1, l2=None):
    """Build the supercell geometry S = p*l1, L2' = S/q for a ratio convergent."""
    supercell = p * float(l1)
    l2_approx = supercell / q
    error = abs(l2_approx - float(l2)) if l2 is not None else float("nan")
    return Approximant(p=int(p), q=int(q), supercell=supercell, l2_approx=l2_approx, error=error)


def _reattach(potential, lattice):
    """Same integer-indexed Fourier coefficients on a different chain length."""
    return FourierPotential(lattice, dict(potential.items()), potential.coeff_cutoff)


def supercell_dos(
    l1_lattice,
    approximant,
    v1,
    v2,
    ec,
    k_grid=32,
    sigma=DEFAULT_SIGMA,
    window=None,
    n_points=DEFAULT_N_POINTS,
    max_basis=200_000,
    tau=0.0,
):
    """Periodic-supercell DoS per unit volume on a uniform Bloch k grid.

    ``v2`` is either a FourierPotential (its integer-indexed coefficients are
    reattached to the adjusted chain) or a callable mapping a chain lattice to
    the potential, letting closed-form families be re-evaluated exactly at the
    adjusted length.  Only 1D pairs are supported.
    """
    if l1_lattice.dim != 1:
        raise ValueError("supercell comparison is implemented for chains only")
    if ec <= 0:
        raise ValueError(f"energy cutoff must be positive, got {ec}")
    p, q = approximant.p, approximant.q
    l1 = l1_lattice.cell_volume
    supercell = p * l1
    l2_approx = supercell / q
    lat2p = Lattice.chain(l2_approx)
    v2p = v2(lat2p) if callable(v2) else _reattach(v2, lat2p)

    gmax = int(math.floor(supercell * math.sqrt(2.0 * ec) / (2.0 * math.pi)))
    size = 2 * gmax + 1
    if size > max_basis:
        raise BasisSizeError(
            f"supercell basis would have N_c={size}, exceeding the cap {max_basis}"
        )
    g = np.arange(-gmax, gmax + 1)
    dmax = 2 * gmax
    coeff = np.zeros(2 * dmax + 1, dtype=complex)
    b2p = 2.0 * math.pi / l2_approx
    for j in range(-dmax, dmax + 1):
        val = 0.0 + 0.0j
        if j % p == 0:
            val += v1.coefficient((j // p,))
        if j % q == 0:
            val += v2p.coefficient((j // q,)) * np.exp(1j * b2p * (j // q) * tau)
        coeff[j + dmax] = val
    vmat = coeff[(g[:, None] - g[None, :]) + dmax]

    b_super = 2.0 * math.pi / supercell
    kin_base = b_super * g
    ks = [b_super * i / k_grid for i in range(k_grid)]
    spectra = []
    if window is not None:
        cap = float(window[1]) + 6.0 / math.sqrt(sigma)
        for k in ks:
            H = np.diag(0.5 * (k + kin_base) ** 2).astype(complex) + vmat
            spectra.append(eigvalsh(H, subset_by_value=(-np.inf, cap)))
    else:
        for k in ks:
            H = np.diag(0.5 * (k + kin_base) ** 2).astype(complex) + vmat
            spectra.append(eigvalsh(H))
        window = default_window(np.concatenate(spectra), sigma)

    weight = (l1 * l2_approx / supercell) / k_grid
    values = None
    grid = None
    for lam in spectra:
        grid, vals = _smear(lam, weight, sigma, window, n_points)
        values = vals if values is None else values + vals
    meta = {
        "sigma": sigma,
        "Ec": float(ec),
        "N_k": k_grid,
        "weight": "L1*L2'/S",
        "p": p,
        "q": q,
        "supercell": supercell,
        "l2_approx": l2_approx,
        "N_c": size,
    }
    return DoSCurve(grid, values, meta)

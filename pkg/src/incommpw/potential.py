"""Layer-periodic potentials represented by their Fourier coefficients."""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError
from .lattice import _layer_candidates

_HERMITIAN_TOL = 1e-12


def _normalize_index(m, dim):
    arr = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if arr.shape != (dim,):
        raise ValueError(f"coefficient index must have {dim} components, got {m!r}")
    return tuple(int(v) for v in arr)


class FourierPotential:
    """A real periodic potential V(r) = sum_m V_m exp(i G_m . r).

    Coefficients are stored sparsely; looking up an absent index returns exactly
    zero.  Hermitian symmetry V_{-m} = conj(V_m) is enforced at construction:
    missing mirror indices are filled in, and conflicting pairs are rejected.
    """

    def __init__(self, lattice, coeffs, coeff_cutoff):
        if coeff_cutoff <= 0:
            raise ValueError(f"coeff_cutoff must be positive, got {coeff_cutoff}")
        self.lattice = lattice
        self.coeff_cutoff = float(coeff_cutoff)
        table = {}
        for m, value in coeffs.items():
            table[_normalize_index(m, lattice.dim)] = complex(value)
        scale = 1.0 + max((abs(v) for v in table.values()), default=0.0)
        for m, value in list(table.items()):
            neg = tuple(-c for c in m)
            if neg in table:
                if abs(table[neg] - value.conjugate()) > _HERMITIAN_TOL * scale:
                    raise ValidationError(
                        f"coefficients at {m} and {neg} violate Hermitian symmetry: "
                        f"{value} vs {table[neg]}"
                    )
            else:
                table[neg] = value.conjugate()
        self._table = table

    @property
    def dim(self):
        return self.lattice.dim

    def __len__(self):
        return len(self._table)

    def coefficient(self, m):
        """Stored coefficient V_m, or exactly 0 for an absent index."""
        return self._table.get(_normalize_index(m, self.dim), 0.0 + 0.0j)

    def items(self):
        return self._table.items()

    def indices(self):
        """Stored indices as an (M, d) integer array."""
        if not self._table:
            return np.empty((0, self.dim), dtype=np.int64)
        return np.array(sorted(self._table.keys()), dtype=np.int64)

    def coefficient_mass(self):
        """Sum of |V_m| over stored coefficients."""
        return float(sum(abs(v) for v in self._table.values()))

    def eval_real(self, points):
        """Evaluate V at real-space points (scalar, (P,), or (P, d)).

        The imaginary part of the Fourier sum must stay below 1e-10 of the total
        coefficient mass (guaranteed by Hermitian symmetry); it is checked and
        discarded.
        """
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 0
        if self.dim == 1:
            pts = pts.reshape(-1, 1)
        else:
            pts = pts.reshape(-1, self.dim)
        idx = self.indices()
        if idx.shape[0] == 0:
            out = np.zeros(pts.shape[0])
            return float(out[0]) if scalar else out
        G = idx @ self.lattice.reciprocal_basis.T
        coeffs = np.array([self._table[tuple(i)] for i in idx])
        out = np.empty(pts.shape[0], dtype=complex)
        chunk = max(1, 4_000_000 // max(1, len(coeffs)))
        for i0 in range(0, pts.shape[0], chunk):
            phases = np.exp(1j * pts[i0 : i0 + chunk] @ G.T)
            out[i0 : i0 + chunk] = phases @ coeffs
        mass = self.coefficient_mass()
        if np.max(np.abs(out.imag), initial=0.0) > 1e-10 * max(1.0, mass):
            raise ValidationError("potential evaluation produced a non-real value")
        real = out.real
        return float(real[0]) if scalar else real

    def difference_table(self, span):
        """Dense lookup table of coefficients over index offsets in [-span, span]^d.

        Returns ``(table, mask)`` where ``table[delta + span]`` is the stored
        coefficient (0 where absent) and ``mask`` marks stored entries.  Operator
        assembly counts lookups at unmasked offsets as coefficient misses.
        """
        span = np.atleast_1d(np.asarray(span, dtype=np.int64))
        shape = tuple(int(2 * s + 1) for s in span)
        table = np.zeros(shape, dtype=complex)
        mask = np.zeros(shape, dtype=bool)
        for m, value in self._table.items():
            delta = np.asarray(m, dtype=np.int64)
            if np.all(np.abs(delta) <= span):
                pos = tuple(delta + span)
                table[pos] = value
                mask[pos] = True
        return table, mask


def screened_coulomb(Z, z, lattice, coeff_cutoff):
    """Screened-Coulomb potential with coefficients V_m = Z / (|G_m|^2 + z).

    Coefficients are stored for all indices with |G_m|^2 <= 2*coeff_cutoff.
    """
    if z <= 0:
        raise ValueError(f"screening parameter z must be positive, got {z}")
    if coeff_cutoff <= 0:
        raise ValueError(f"coeff_cutoff must be positive, got {coeff_cutoff}")
    indices, gsq = _layer_candidates(lattice, 2.0 * float(coeff_cutoff))
    coeffs = {
        tuple(int(c) for c in m): float(Z) / (g + float(z))
        for m, g in zip(indices, gsq)
    }
    return FourierPotential(lattice, coeffs, coeff_cutoff)


def zero_potential(lattice, coeff_cutoff=1.0):
    """Potential with no Fourier coefficients (identically zero)."""
    return FourierPotential(lattice, {}, coeff_cutoff)


def fourier_potential(lattice, entries, coeff_cutoff):
    """Build a potential from explicit entries [(index..., re, im), ...].

    Each entry lists the d integer index components followed by the real and
    imaginary parts of the coefficient.
    """
    coeffs = {}
    for entry in entries:
        entry = list(entry)
        if len(entry) != lattice.dim + 2:
            raise ValueError(
                f"each entry needs {lattice.dim} index components plus re, im; got {entry!r}"
            )
        idx = tuple(int(round(c)) for c in entry[: lattice.dim])
        for raw, parsed in zip(entry[: lattice.dim], idx):
            if abs(float(raw) - parsed) > 1e-9:
                raise ValueError(f"non-integer coefficient index in entry {entry!r}")
        coeffs[idx] = float(entry[-2]) + 1j * float(entry[-1])
    return FourierPotential(lattice, coeffs, coeff_cutoff)

"""Bravais lattices, incommensurateness diagnostics, and composite plane-wave bases.

Conventions used throughout the package:

* A lattice basis matrix ``A`` stores one lattice vector per column, so lattice
  points are ``A @ p`` for integer vectors ``p``.
* The reciprocal basis is ``B = 2*pi*inv(A).T``; reciprocal vectors are
  ``B @ m`` and satisfy ``(B @ m) . (A @ p) in 2*pi*Z``.
* The composite plane-wave basis for a two-lattice pair collects all integer
  index pairs ``(m, n)`` with ``|B1 @ m|^2 + |B2 @ n|^2 <= 2*Ec``, ordered
  lexicographically by the flattened ``(m, n)`` tuple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import BasisSizeError, CommensurateError, InvalidLatticeError

TWO_PI = 2.0 * math.pi

# Hard ceiling on the number of candidate integer vectors enumerated per layer,
# guarding against absurd cutoffs before any large array is allocated.
_ENUMERATION_GUARD = 50_000_000


def reciprocal_basis(A):
    """Return 2*pi*inv(A).T for an invertible basis matrix A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise InvalidLatticeError(f"basis must be square, got shape {A.shape}")
    if abs(np.linalg.det(A)) < 1e-14:
        raise InvalidLatticeError("basis matrix is singular")
    return TWO_PI * np.linalg.inv(A).T


class Lattice:
    """A d-dimensional Bravais lattice (d = 1 or 2)."""

    def __init__(self, basis):
        A = np.atleast_2d(np.asarray(basis, dtype=float))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidLatticeError(f"basis must be a square matrix, got shape {A.shape}")
        if A.shape[0] not in (1, 2):
            raise InvalidLatticeError(f"only 1D and 2D lattices are supported, got dim={A.shape[0]}")
        det = float(np.linalg.det(A))
        if abs(det) < 1e-14:
            raise InvalidLatticeError("basis matrix is singular")
        self.basis = A
        self.dim = A.shape[0]
        self.cell_volume = abs(det)
        self.reciprocal_basis = reciprocal_basis(A)
        self.reciprocal_cell_volume = TWO_PI ** self.dim / self.cell_volume

    @classmethod
    def chain(cls, length):
        """1D lattice with period ``length``."""
        if length <= 0:
            raise InvalidLatticeError(f"chain length must be positive, got {length}")
        return cls([[float(length)]])

    @classmethod
    def hexagonal(cls, length, theta=0.0):
        """2D lattice with vectors L*(cos t, sin t) and L*(cos(t+pi/3), sin(t+pi/3))."""
        if length <= 0:
            raise InvalidLatticeError(f"lattice constant must be positive, got {length}")
        angles = np.array([theta, theta + math.pi / 3.0])
        return cls(length * np.vstack([np.cos(angles), np.sin(angles)]))

    def reciprocal_vectors(self, indices):
        """Map integer index vectors (..., d) to reciprocal vectors (..., d)."""
        return np.asarray(indices, dtype=float) @ self.reciprocal_basis.T

    def __repr__(self):
        return f"Lattice(dim={self.dim}, basis={self.basis.tolist()})"


@dataclass
class CommensurateDiagnostic:
    """Result of a commensurateness witness search."""

    commensurate: bool
    witness: tuple | None  # (m, n) integer arrays of shape (d,)
    min_norm: float  # smallest |G1m + G2n| over nonzero pairs searched


def _integer_box(bound, dim):
    r = np.arange(-bound, bound + 1, dtype=np.int64)
    if dim == 1:
        return r[:, None]
    a, b = np.meshgrid(r, r, indexing="ij")
    return np.column_stack([a.ravel(), b.ravel()])


def check_commensurate(lat1, lat2, tol=1e-8, bound=50):
    """Search nonzero integer pairs (m, n) in [-bound, bound]^2d for |G1m + G2n| < tol.

    Returns the sign-canonical witness (first nonzero component positive) of the
    smallest max-norm shell, ordered lexicographically within a shell.  The shell
    ordering makes the reported witness the minimal one rather than an arbitrary
    corner of the search box.
    """
    if lat1.dim != lat2.dim:
        raise InvalidLatticeError("lattice dimensions differ")
    if tol <= 0 or bound < 1:
        raise ValueError("tol must be positive and bound >= 1")
    grid = _integer_box(bound, lat1.dim)
    G1 = grid @ lat1.reciprocal_basis.T
    G2 = grid @ lat2.reciprocal_basis.T
    tree = cKDTree(G1)

    # Minimum |G1m + G2n| over nonzero pairs: nearest G1 point to each -G2 point.
    dist, idx = tree.query(-G2, k=2)
    zero_rows = np.all(grid == 0, axis=1)
    best = np.where(zero_rows[idx[:, 0]] & zero_rows, dist[:, 1], dist[:, 0])
    min_norm = float(best.min())
    if min_norm >= tol:
        return CommensurateDiagnostic(False, None, min_norm)

    candidates = []
    for n_row, m_hits in enumerate(tree.query_ball_point(-G2, r=tol)):
        for m_row in m_hits:
            flat = np.concatenate([grid[m_row], grid[n_row]])
            nz = flat[flat != 0]
            if nz.size == 0:
                continue  # the trivial (0, 0) pair
            if nz[0] < 0:
                continue  # keep the sign-canonical member of the +/- pair
            candidates.append((int(np.max(np.abs(flat))), tuple(flat), m_row, n_row))
    candidates.sort(key=lambda c: (c[0], c[1]))
    shell, _, m_row, n_row = candidates[0]
    witness = (grid[m_row].copy(), grid[n_row].copy())
    return CommensurateDiagnostic(True, witness, min_norm)


class IncommensuratePair:
    """Two same-dimension lattices with an optional shift of the second layer.

    The constructor runs the commensurateness witness search and refuses
    commensurate inputs unless ``allow_commensurate=True`` flags the pair as an
    intentional commensurate fixture.
    """

    def __init__(self, lat1, lat2, tau=None, allow_commensurate=False, tol=1e-8, bound=50):
        if lat1.dim != lat2.dim:
            raise InvalidLatticeError(
                f"lattice dimensions differ: {lat1.dim} vs {lat2.dim}"
            )
        self.lat1 = lat1
        self.lat2 = lat2
        self.dim = lat1.dim
        if tau is None:
            tau = np.zeros(self.dim)
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        if tau.shape != (self.dim,):
            raise InvalidLatticeError(f"tau must have shape ({self.dim},), got {tau.shape}")
        self.tau = tau
        self.commensurate_fixture = bool(allow_commensurate)
        if allow_commensurate:
            self.diagnostic = None
        else:
            diag = check_commensurate(lat1, lat2, tol=tol, bound=bound)
            if diag.commensurate:
                raise CommensurateError(
                    f"lattices are commensurate within tol={tol}: witness (m, n) = "
                    f"({diag.witness[0].tolist()}, {diag.witness[1].tolist()})"
                )
            self.diagnostic = diag

    def __repr__(self):
        return (
            f"IncommensuratePair(dim={self.dim}, lat1={self.lat1!r}, lat2={self.lat2!r}, "
            f"tau={self.tau.tolist()})"
        )


class PlaneWaveBasis:
    """Ordered composite plane-wave basis for an incommensurate pair.

    Attributes
    ----------
    m, n : (N_c, d) integer index arrays for layers 1 and 2.
    G : (N_c, d) composite reciprocal vectors G1m + G2n.
    g1sq, g2sq : (N_c,) squared norms |G1m|^2 and |G2n|^2 (the kinetic split).
    """

    def __init__(self, pair, ec, m, n):
        self.pair = pair
        self.Ec = float(ec)
        self.m = np.ascontiguousarray(m, dtype=np.int64)
        self.n = np.ascontiguousarray(n, dtype=np.int64)
        G1 = self.m @ pair.lat1.reciprocal_basis.T
        G2 = self.n @ pair.lat2.reciprocal_basis.T
        self.G = G1 + G2
        self.g1sq = np.einsum("nd,nd->n", G1, G1)
        self.g2sq = np.einsum("nd,nd->n", G2, G2)
        self._min_separation = None

    def __len__(self):
        return self.m.shape[0]

    @property
    def size(self):
        return self.m.shape[0]

    @property
    def dim(self):
        return self.pair.dim

    def composite(self, k=None):
        """Composite wavevectors k + G1m + G2n as an (N_c, d) array."""
        if k is None:
            return self.G
        k = np.atleast_1d(np.asarray(k, dtype=float))
        return k[None, :] + self.G

    def kinetic(self, k=None):
        """Kinetic diagonal 0.5*|k + G|^2, computed as a dot product."""
        kG = self.composite(k)
        return 0.5 * np.einsum("nd,nd->n", kG, kG)

    def min_separation(self):
        """Minimum pairwise distance between composite vectors (cached)."""
        if self._min_separation is None:
            if len(self) < 2:
                self._min_separation = math.inf
            elif self.dim == 1:
                s = np.sort(self.G[:, 0])
                self._min_separation = float(np.min(np.diff(s)))
            else:
                tree = cKDTree(self.G)
                d, _ = tree.query(self.G, k=2)
                self._min_separation = float(d[:, 1].min())
        return self._min_separation

    def index_span(self):
        """Per-axis maximum |m - m'| and |n - n'| realizable within the basis."""
        span_m = (self.m.max(axis=0) - self.m.min(axis=0)).astype(np.int64)
        span_n = (self.n.max(axis=0) - self.n.min(axis=0)).astype(np.int64)
        return span_m, span_n

    def max_abs_indices(self):
        """Per high-dim axis maximum |index|: (d,) for m followed by (d,) for n."""
        return (
            np.max(np.abs(self.m), axis=0).astype(np.int64),
            np.max(np.abs(self.n), axis=0).astype(np.int64),
        )

    def deduplicate(self, tol=None):
        """Drop entries whose composite vector duplicates an earlier (lex-first) one.

        Intended for commensurate fixtures, where distinct (m, n) can map to the
        same composite vector and the matrix rows become redundant.
        """
        if len(self) == 0:
            return self
        scale = max(1.0, float(np.max(np.abs(self.G))))
        if tol is None:
            tol = 1e-9 * scale
        order = np.lexsort(tuple(self.G[:, a] for a in reversed(range(self.dim))))
        Gs = self.G[order]
        gap = np.linalg.norm(np.diff(Gs, axis=0), axis=1)
        group = np.concatenate([[0], np.cumsum(gap > tol)])
        keep = np.zeros(len(self), dtype=bool)
        for g in range(group[-1] + 1):
            members = order[group == g]
            keep[members.min()] = True  # entries are lex-sorted, so min index = lex-first
        return PlaneWaveBasis(self.pair, self.Ec, self.m[keep], self.n[keep])

    def __repr__(self):
        return f"PlaneWaveBasis(N_c={len(self)}, dim={self.dim}, Ec={self.Ec})"


def _layer_candidates(lattice, two_ec):
    """All integer vectors m with |B @ m|^2 <= two_ec, plus their squared norms."""
    B = lattice.reciprocal_basis
    sigma_min = np.linalg.svd(B, compute_uv=False)[-1]
    bound = math.ceil(math.sqrt(two_ec) / sigma_min) + 1
    if (2 * bound + 1) ** lattice.dim > _ENUMERATION_GUARD:
        raise BasisSizeError(
            f"cutoff requires enumerating ~{(2 * bound + 1) ** lattice.dim} candidate "
            f"indices per layer, above the guard of {_ENUMERATION_GUARD}"
        )
    grid = _integer_box(bound, lattice.dim)
    g = grid @ B.T
    gsq = np.einsum("nd,nd->n", g, g)
    keep = gsq <= two_ec
    return grid[keep], gsq[keep]


def build_basis(pair, ec, max_size=200_000):
    """Enumerate the composite basis {(m, n): |G1m|^2 + |G2n|^2 <= 2*Ec}.

    Entries are sorted lexicographically by the flattened (m, n) tuple.  Raises
    BasisSizeError (naming the offending N_c) when the basis would exceed
    ``max_size``.
    """
    if ec <= 0:
        raise ValueError(f"Ec must be positive, got {ec}")
    two_ec = 2.0 * float(ec)
    m_cand, m_gsq = _layer_candidates(pair.lat1, two_ec)
    n_cand, n_gsq = _layer_candidates(pair.lat2, two_ec)

    rows = []
    cols = []
    total = 0
    # Chunk the pair filter so the (len(m) x len(n)) workspace stays bounded.
    chunk = max(1, 8_000_000 // max(1, len(n_cand)))
    for i0 in range(0, len(m_cand), chunk):
        sub = m_gsq[i0 : i0 + chunk, None] + n_gsq[None, :] <= two_ec
        r, c = np.nonzero(sub)
        total += r.size
        if total > max_size:
            # Finish the count so the error names the true N_c.
            for j0 in range(i0 + chunk, len(m_cand), chunk):
                total += int(
                    np.count_nonzero(m_gsq[j0 : j0 + chunk, None] + n_gsq[None, :] <= two_ec)
                )
            raise BasisSizeError(
                f"basis would have N_c={total}, above the configured maximum {max_size}"
            )
        rows.append(r + i0)
        cols.append(c)
    m_idx = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    n_idx = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    m = m_cand[m_idx]
    n = n_cand[n_idx]
    flat = np.concatenate([m, n], axis=1)
    order = np.lexsort(tuple(flat[:, a] for a in reversed(range(flat.shape[1]))))
    return PlaneWaveBasis(pair, ec, m[order], n[order])


def count_in_reference_cell(basis, k=None, reference=1):
    """Count composite vectors k + G inside the centered reference reciprocal cell.

    A composite vector counts when its fractional coordinates with respect to the
    chosen layer's reciprocal basis all lie in the half-open centered cell
    [-1/2, 1/2).  No folding is applied: this measures how many distinct
    composite wavevectors the truncated basis places inside one reciprocal cell,
    which is the per-cell wavevector density used by the unit-volume DoS and
    Fermi-level scalings.
    """
    lat = basis.pair.lat1 if reference == 1 else basis.pair.lat2
    comp = basis.composite(k)
    frac = np.linalg.solve(lat.reciprocal_basis, comp.T).T
    inside = np.all((frac >= -0.5) & (frac < 0.5), axis=1)
    return int(np.count_nonzero(inside))


def uniformity_discrepancy(basis, reference, bins_per_axis):
    """Histogram discrepancy of composite vectors folded into a reference cell.

    Folds each composite G into the reference reciprocal unit cell via fractional
    coordinates mod 1, bins them into ``bins_per_axis**d`` equal cells, and
    returns max over cells of |empirical fraction - 1/cells|.
    """
    if len(basis) == 0:
        raise ValueError("empty basis")
    if bins_per_axis < 1:
        raise ValueError("bins_per_axis must be >= 1")
    frac = np.linalg.solve(reference.reciprocal_basis, basis.G.T).T
    frac = np.mod(frac, 1.0)
    frac = np.where(frac >= 1.0, 0.0, frac)  # guard the mod-rounding edge
    hist, _ = np.histogramdd(frac, bins=bins_per_axis, range=[(0.0, 1.0)] * basis.dim)
    cells = bins_per_axis ** basis.dim
    return float(np.max(np.abs(hist.ravel() / len(basis) - 1.0 / cells)))

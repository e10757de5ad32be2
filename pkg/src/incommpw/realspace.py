"""Real-space reconstruction: eigenfunctions, localization diagnostics, and the
higher-dimensional periodic density with its Hartree and exchange-correlation terms.

The higher-dimensional representation places orbital coefficients U_(m,n) at
integer frequencies (m, n) on the torus cell1 x cell2 (2d dimensions for a
d-dimensional pair).  Products and densities live on a uniform FFT grid over
that torus; physical real-space quantities are diagonal restrictions r1=r2=r.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ValidationError
from .spectrum import OccupationModel, occupation

DENSITY_MAGIC = b"IPWD"
_CLIP_TOL = 1e-12


def eigenfunction_on_grid(result, j, points, basis=None):
    """Evaluate u_j(r) = sum û_j(k+G) exp(i(k+G).r) at real-space points.

    ``points`` is (P,) for 1D pairs or (P, d) generally.  Returns a complex
    array of shape (P,).
    """
    basis = basis if basis is not None else result.basis
    if result.eigenvectors is None:
        raise ValueError("result carries no eigenvectors")
    if not 0 <= j < result.eigenvectors.shape[1]:
        raise IndexError(f"state index {j} out of range [0, {result.eigenvectors.shape[1]})")
    pts = np.asarray(points, dtype=float)
    if basis.dim == 1:
        pts = pts.reshape(-1, 1)
    else:
        pts = pts.reshape(-1, basis.dim)
    comp = basis.composite(result.k)
    coeffs = result.eigenvectors[:, j]
    out = np.empty(pts.shape[0], dtype=complex)
    chunk = max(1, 4_000_000 // max(1, len(coeffs)))
    for i0 in range(0, pts.shape[0], chunk):
        out[i0 : i0 + chunk] = np.exp(1j * pts[i0 : i0 + chunk] @ comp.T) @ coeffs
    return out


def ipr(u):
    """Inverse participation ratio (sum |u|^4)/(sum |u|^2)^2 * n_points.

    Equals 1 for a perfectly uniform |u| and approaches n_points for a single
    occupied grid point.
    """
    u = np.asarray(u)
    abs2 = np.abs(u.ravel()) ** 2
    total = abs2.sum()
    if total == 0:
        raise ValueError("ipr of an identically zero function is undefined")
    return float(np.sum(abs2**2) / total**2 * abs2.size)


class XcFunctional:
    """Pointwise exchange-correlation model: energy density and potential.

    ``eps`` and ``v`` are vectorized callables of the density; they must satisfy
    the consistency relation v(x) = d(x*eps(x))/dx (see ``validate_xc``).
    """

    def __init__(self, eps, v, name="custom"):
        self.eps = eps
        self.v = v
        self.name = name

    def __repr__(self):
        return f"XcFunctional({self.name})"


def zero_functional():
    return XcFunctional(lambda rho: np.zeros_like(rho), lambda rho: np.zeros_like(rho), "zero")


DIRAC_CX = 0.75 * (3.0 / math.pi) ** (1.0 / 3.0)


def dirac_exchange():
    """Local exchange eps(rho) = -c_x rho^(1/3), v(rho) = -(4/3) c_x rho^(1/3)."""
    return XcFunctional(
        lambda rho: -DIRAC_CX * np.cbrt(rho),
        lambda rho: -(4.0 / 3.0) * DIRAC_CX * np.cbrt(rho),
        "dirac_exchange",
    )


def validate_xc(functional, n_samples=64, seed=0):
    """Max relative error of v(x) against a central difference of x*eps(x).

    Samples random densities x in (0, 10); a consistent functional stays below
    about 1e-6.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 10.0, n_samples)
    h = 1e-6 * np.maximum(1.0, x)
    g = lambda y: y * functional.eps(y)
    fd = (g(x + h) - g(x - h)) / (2.0 * h)
    v = functional.v(x)
    return float(np.max(np.abs(v - fd) / np.maximum(1.0, np.abs(v))))


def _axis_max_indices(basis):
    """Per high-dim axis maximum |integer index|: d axes of m, then d axes of n."""
    max_m, max_n = basis.max_abs_indices()
    return list(max_m) + list(max_n)


def default_grid_shape(basis):
    """Smallest FFT-friendly sizes capturing the density exactly.

    Orbital fields carry frequencies up to the per-axis index maximum M, so
    their squared moduli carry up to 2M; a grid of at least 4M+1 points per
    axis represents every density Fourier component without aliasing.
    """
    return tuple(
        max(4, scipy.fft.next_fast_len(4 * int(mx) + 1)) for mx in _axis_max_indices(basis)
    )


def _check_grid_shape(basis, grid_shape):
    maxima = _axis_max_indices(basis)
    if len(grid_shape) != len(maxima):
        raise ValueError(
            f"grid must have {len(maxima)} axes for this basis, got {len(grid_shape)}"
        )
    for axis, (size, mx) in enumerate(zip(grid_shape, maxima)):
        need = 2 * int(mx) + 1
        if size < need:
            raise ValidationError(
                f"grid axis {axis} has {size} points but needs at least {need} "
                f"to represent index range +-{int(mx)} without aliasing"
            )


def _place_coefficients(coeffs, m, n, grid_shape):
    C = np.zeros(grid_shape, dtype=complex)
    d = m.shape[1]
    idx = tuple(m[:, a] % grid_shape[a] for a in range(d)) + tuple(
        n[:, a] % grid_shape[d + a] for a in range(d)
    )
    np.add.at(C, idx, coeffs)
    return C


def orbital_highdim(result, j, grid_shape=None):
    """Periodic part of orbital j as a complex field on the torus grid.

    The Bloch phase exp(i(k1.r1 + k2.r2)) is not included; densities are
    insensitive to it.
    """
    basis = result.basis
    if grid_shape is None:
        grid_shape = default_grid_shape(basis)
    _check_grid_shape(basis, grid_shape)
    C = _place_coefficients(result.eigenvectors[:, j], basis.m, basis.n, grid_shape)
    ntot = int(np.prod(grid_shape))
    return np.fft.ifftn(C) * ntot


class HighDimDensity:
    """Electron density on the torus cell1 x cell2.

    ``values`` holds the nonnegative real-space field; ``fourier_grid`` its
    Fourier coefficients (coefficient normalization: values = sum of
    fourier * exp(+i G . r)).  Negative values beyond -1e-12 are rejected;
    small negative round-off is clipped to zero and counted.
    """

    def __init__(self, values, pair, grid_shape=None, clip_count=None):
        values = np.asarray(values, dtype=float)
        self.grid_shape = values.shape if grid_shape is None else tuple(grid_shape)
        self.pair = pair
        if clip_count is None:
            negatives = values < 0
            clip_count = int(np.count_nonzero(negatives))
            if clip_count:
                values = np.where(negatives, 0.0, values)
        self.clip_count = clip_count
        self.values = values
        self.ntot = int(np.prod(self.grid_shape))
        self.fourier_grid = np.fft.fftn(values) / self.ntot
        self._gsq = None

    @property
    def dim(self):
        return self.pair.dim

    def mean(self):
        return float(self.values.mean())

    def fourier(self, m, n):
        """Density Fourier component at integer frequency pair (m, n)."""
        m = np.atleast_1d(np.asarray(m, dtype=np.int64))
        n = np.atleast_1d(np.asarray(n, dtype=np.int64))
        d = self.dim
        idx = tuple(int(m[a]) % self.grid_shape[a] for a in range(d)) + tuple(
            int(n[a]) % self.grid_shape[d + a] for a in range(d)
        )
        return complex(self.fourier_grid[idx])

    def frequency_axes(self):
        """Integer frequency values along each grid axis (FFT layout)."""
        return [
            np.rint(np.fft.fftfreq(s) * s).astype(np.int64) for s in self.grid_shape
        ]

    def composite_gsq_grid(self):
        """|G1m + G2n|^2 for the (m, n) frequency of every grid node (cached)."""
        if self._gsq is None:
            axes = self.frequency_axes()
            d = self.dim
            B1 = self.pair.lat1.reciprocal_basis
            B2 = self.pair.lat2.reciprocal_basis
            gsq = np.zeros(self.grid_shape)
            for c in range(d):
                comp = np.zeros(self.grid_shape)
                for a in range(d):
                    shape = [1] * len(self.grid_shape)
                    shape[a] = -1
                    comp = comp + B1[c, a] * axes[a].reshape(shape)
                    shape = [1] * len(self.grid_shape)
                    shape[d + a] = -1
                    comp = comp + B2[c, a] * axes[d + a].reshape(shape)
                gsq += comp**2
            self._gsq = gsq
        return self._gsq


def density_highdim(results, occ, grid_shape=None, k_weights=None):
    """Accumulate the high-dim density sum_j w_k f(lambda_j) |u_j|^2 on the torus.

    ``occ`` is an OccupationModel or a list of per-result occupation arrays.
    ``k_weights`` defaults to 1/N_k per result (the plain multi-k mean);
    physical electron bookkeeping passes 1/(N_k*Nbar_k) instead so that the DC
    component equals electrons per unit volume.
    """
    if not results:
        raise ValueError("no spectral results given")
    basis = results[0].basis
    for r in results:
        if r.basis is not basis and (
            r.basis.m.shape != basis.m.shape
            or not np.array_equal(r.basis.m, basis.m)
            or not np.array_equal(r.basis.n, basis.n)
        ):
            raise ValueError("all results must share one basis")
        if r.eigenvectors is None:
            raise ValueError("density accumulation requires eigenvectors")
    if grid_shape is None:
        grid_shape = default_grid_shape(basis)
    _check_grid_shape(basis, grid_shape)
    if k_weights is None:
        k_weights = [1.0 / len(results)] * len(results)
    if isinstance(occ, OccupationModel):
        occ = [occupation(r.eigenvalues, occ) for r in results]

    ntot = int(np.prod(grid_shape))
    rho = np.zeros(grid_shape)
    f_scale = max((float(np.max(f, initial=0.0)) for f in occ), default=0.0)
    for r, f, wk in zip(results, occ, k_weights):
        for j in range(r.eigenvectors.shape[1]):
            fj = float(f[j])
            if abs(fj) <= 1e-14 * max(1.0, f_scale):
                continue
            C = _place_coefficients(r.eigenvectors[:, j], basis.m, basis.n, grid_shape)
            u = np.fft.ifftn(C) * ntot
            rho += (wk * fj) * (u.real**2 + u.imag**2)
    return HighDimDensity(rho, basis.pair, grid_shape)


@dataclass
class FieldResult:
    """Energy per unit volume plus the Fourier grid of the matching potential."""

    energy_per_volume: float
    potential_fourier: np.ndarray


def hartree(density):
    """Hartree energy and potential from the density Fourier components.

    E_H = 1/2 sum_{(m,n) != 0} |rho(G)|^2/|G|^2 and v_H(G) = rho(G)/|G|^2 with
    the zero component excluded (v_H(0) = 0).
    """
    gsq = density.composite_gsq_grid()
    rhohat = density.fourier_grid
    mask = np.ones(density.grid_shape, dtype=bool)
    mask[(0,) * len(density.grid_shape)] = False
    vhat = np.zeros_like(rhohat)
    vhat[mask] = rhohat[mask] / gsq[mask]
    energy = 0.5 * float(np.sum((np.abs(rhohat[mask]) ** 2) / gsq[mask]))
    return FieldResult(energy_per_volume=energy, potential_fourier=vhat)


def xc_apply(density, functional):
    """Pointwise exchange-correlation energy and potential on the torus grid.

    The energy per volume is the contraction sum eps_hat(G) * conj(rho_hat(G)),
    which equals the grid mean of rho*eps(rho) by Parseval.
    """
    rho = density.values
    if np.min(rho, initial=0.0) < -_CLIP_TOL:
        raise ValidationError(
            f"density has negative values beyond the clip tolerance ({rho.min():.3e})"
        )
    rho = np.clip(rho, 0.0, None)
    eps = functional.eps(rho)
    v = functional.v(rho)
    epshat = np.fft.fftn(eps) / density.ntot
    energy = float(np.vdot(density.fourier_grid, epshat).real)
    vhat = np.fft.fftn(v) / density.ntot
    return FieldResult(energy_per_volume=energy, potential_fourier=vhat)


def diagonal_restriction(density, points):
    """Physical density rho(r) = rho_tilde(r, r) by multilinear torus interpolation.

    The diagonal is generically incommensurate with the torus grid, so sampled
    values interpolate between grid nodes.
    """
    pts = np.asarray(points, dtype=float)
    d = density.dim
    pts = pts.reshape(-1, 1) if d == 1 else pts.reshape(-1, d)
    frac1 = np.linalg.solve(density.pair.lat1.basis, pts.T).T % 1.0
    frac2 = np.linalg.solve(density.pair.lat2.basis, pts.T).T % 1.0
    fracs = np.concatenate([frac1, frac2], axis=1)  # (P, 2d) in [0, 1)

    shape = density.grid_shape
    coords = fracs * np.asarray(shape)
    base = np.floor(coords).astype(np.int64)
    t = coords - base
    out = np.zeros(pts.shape[0])
    naxes = len(shape)
    for corner in range(1 << naxes):
        idx = []
        weight = np.ones(pts.shape[0])
        for a in range(naxes):
            bit = (corner >> a) & 1
            idx.append((base[:, a] + bit) % shape[a])
            weight = weight * (t[:, a] if bit else 1.0 - t[:, a])
        out += weight * density.values[tuple(idx)]
    return out


def write_density_dump(density, path):
    """Binary dump: magic IPWD, u32 axis count, u32 sizes, row-major float64."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", DENSITY_MAGIC, len(density.grid_shape)))
        fh.write(struct.pack(f"<{len(density.grid_shape)}I", *density.grid_shape))
        fh.write(np.ascontiguousarray(density.values, dtype="<f8").tobytes(order="C"))


def read_density_dump(path):
    """Read a density dump; returns the raw value grid."""
    with open(path, "rb") as fh:
        magic, naxes = struct.unpack("<4sI", fh.read(8))
        if magic != DENSITY_MAGIC:
            raise ValidationError(f"bad density dump magic {magic!r}")
        shape = struct.unpack(f"<{naxes}I", fh.read(4 * naxes))
        values = np.frombuffer(fh.read(), dtype="<f8").reshape(shape)
    return values

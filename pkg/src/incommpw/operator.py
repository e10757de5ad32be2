"""Hamiltonian assembly in the composite plane-wave basis and Hermitian eigensolves.

Matrix convention: rows/columns follow the basis ordering, and

    H[(m,n),(m',n')] = 0.5*|k + G1m + G2n|^2 * delta_mm' delta_nn'
                       + V1_(m-m') * delta_nn'  +  V2_(n-n') * delta_mm'

The higher-dimensional variant depends on its two Bloch vectors only through
their sum, so it shares the standard assembly path arithmetic exactly.  The
shifted variant multiplies each V2 coefficient by exp(i*G2(n-n').tau).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import CommensurateError, ConvergenceError, ValidationError
from .lattice import PlaneWaveBasis

_HERM_RTOL = 1e-12
_DEGENERACY_GAP = 1e-9
_RESIDUAL_SAMPLE = 32
MATRIX_MAGIC = b"IPWH"


@dataclass
class HamiltonianMatrix:
    """Dense Hermitian operator matrix with assembly diagnostics."""

    basis: PlaneWaveBasis
    k: np.ndarray
    data: np.ndarray
    provenance: dict
    misses: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.data.shape[0]

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.data - self.data.conj().T)))


@dataclass
class SpectrumResult:
    """Ascending eigenvalues (and optionally eigenvectors) of one Bloch solve."""

    k: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None  # (N_c, N_solved), columns are coefficient vectors
    basis: PlaneWaveBasis

    @property
    def Ec(self):
        return self.basis.Ec

    @property
    def N_c(self):
        return len(self.basis)

    @property
    def n_solved(self):
        return len(self.eigenvalues)


def _check_potential(basis, pot, which):
    lat = basis.pair.lat1 if which == 1 else basis.pair.lat2
    if pot.lattice.dim != lat.dim or not np.allclose(pot.lattice.basis, lat.basis):
        raise ValidationError(
            f"potential {which} is defined on a different lattice than layer {which} of the pair"
        )


def _normalize_k(k, dim):
    if k is None:
        return np.zeros(dim)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (dim,):
        raise ValueError(f"k must have shape ({dim},), got {k.shape}")
    return k


def _table_with_shift(basis, pot, span, tau):
    """V2 offset table, with each entry rotated by exp(i*(B2@delta).tau) when shifted."""
    table, mask = pot.difference_table(span)
    if tau is not None and np.any(np.asarray(tau) != 0):
        axes = [np.arange(-s, s + 1, dtype=np.int64) for s in np.atleast_1d(span)]
        mesh = np.meshgrid(*axes, indexing="ij")
        deltas = np.stack([m.ravel() for m in mesh], axis=1)
        g = deltas @ basis.pair.lat2.reciprocal_basis.T
        phases = np.exp(1j * g @ np.atleast_1d(np.asarray(tau, dtype=float)))
        table = table * phases.reshape(table.shape)
    return table, mask


def _assemble(basis, V1, V2, k, tau, provenance, allow_commensurate):
    _check_potential(basis, V1, 1)
    _check_potential(basis, V2, 2)
    scale = max(1.0, float(np.max(np.abs(basis.G), initial=0.0)))
    if len(basis) > 1 and basis.min_separation() <= 1e-9 * scale:
        if not allow_commensurate:
            raise CommensurateError(
                "basis contains duplicate composite vectors (commensurate input); "
                "pass allow_commensurate=True to deduplicate them"
            )
        basis = basis.deduplicate()
    k = _normalize_k(k, basis.dim)
    N = len(basis)
    H = np.zeros((N, N), dtype=np.complex128)
    H[np.diag_indices(N)] = basis.kinetic(k)
    span_m, span_n = basis.index_span()
    t1, m1 = V1.difference_table(span_m)
    t2, m2 = _table_with_shift(basis, V2, span_n, tau)
    miss1, miss2 = kernels.fill_potential_terms(H, basis.m, basis.n, t1, m1, t2, m2)
    return HamiltonianMatrix(
        basis=basis,
        k=k,
        data=H,
        provenance=provenance,
        misses={"layer1": miss1, "layer2": miss2},
    )


def assemble(basis, V1, V2, k=None, allow_commensurate=False):
    """Standard Bloch Hamiltonian at wavevector k."""
    k = _normalize_k(k, basis.dim)
    return _assemble(
        basis, V1, V2, k, None, {"kind": "standard", "k": k.tolist()}, allow_commensurate
    )


def assemble_highdim(basis, V1, V2, k1, k2, allow_commensurate=False):
    """Higher-dimensional Hamiltonian at Bloch pair (k1, k2).

    The matrix depends on (k1, k2) only through k1 + k2 and is produced by the
    same arithmetic path as ``assemble`` at that sum, so the equality is exact.
    """
    k1 = _normalize_k(k1, basis.dim)
    k2 = _normalize_k(k2, basis.dim)
    return _assemble(
        basis,
        V1,
        V2,
        k1 + k2,
        None,
        {"kind": "highdim", "k1": k1.tolist(), "k2": k2.tolist()},
        allow_commensurate,
    )


def assemble_shifted(basis, V1, V2, k=None, tau=None, allow_commensurate=False):
    """Hamiltonian with the second layer shifted by tau."""
    k = _normalize_k(k, basis.dim)
    if tau is None:
        tau = basis.pair.tau
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    return _assemble(
        basis,
        V1,
        V2,
        k,
        tau,
        {"kind": "shifted", "k": k.tolist(), "tau": tau.tolist()},
        allow_commensurate,
    )


def _fix_phases(vectors):
    """Deterministic per-column phase: first significant component real positive."""
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        idx = np.argmax(np.abs(col) > 1e-8)
        pivot = col[idx]
        if abs(pivot) > 0:
            vectors[:, j] = col * (pivot.conjugate() / abs(pivot))
    return vectors


def _reorthonormalize_clusters(w, v):
    """QR re-orthonormalization of eigenvector clusters with gap < 1e-9."""
    start = 0
    for end in range(1, len(w) + 1):
        if end == len(w) or w[end] - w[end - 1] >= _DEGENERACY_GAP:
            if end - start > 1:
                q, _ = np.linalg.qr(v[:, start:end])
                v[:, start:end] = q
            start = end
    return v


def eigensolve(H, count=None, eigenvalues_only=False, validate=True):
    """Solve the dense Hermitian eigenproblem.

    ``count`` selects the smallest ``count`` eigenpairs (full spectrum when
    absent).  Hermiticity is validated before the solve; a sample of residuals
    ||H v - lambda v|| is validated after it (<= 1e-8 * max(1, |lambda|)).
    """
    M = H.data
    N = M.shape[0]
    if validate:
        defect = H.hermiticity_defect()
        if defect > _HERM_RTOL * max(1.0, float(np.max(np.abs(M)))):
            raise ValidationError(f"matrix is not Hermitian: defect {defect:.3e}")
    M = 0.5 * (M + M.conj().T)
    if count is not None:
        if not 1 <= count <= N:
            raise ValueError(f"count must be in [1, {N}], got {count}")
        subset = [0, count - 1]
    else:
        subset = None

    try:
        if eigenvalues_only:
            if subset is None:
                w = scipy.linalg.eigvalsh(M)
            else:
                w = scipy.linalg.eigvalsh(M, subset_by_index=subset)
            return SpectrumResult(k=H.k, eigenvalues=w, eigenvectors=None, basis=H.basis)
        if subset is None:
            w, v = scipy.linalg.eigh(M)
        else:
            w, v = scipy.linalg.eigh(M, subset_by_index=subset)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure path
        raise ConvergenceError(f"eigensolver failed to converge: {exc}") from exc

    v = _reorthonormalize_clusters(w, v)
    v = _fix_phases(v)
    if validate:
        sample = np.arange(min(len(w), _RESIDUAL_SAMPLE))
        R = M @ v[:, sample] - v[:, sample] * w[sample]
        res = np.linalg.norm(R, axis=0)
        bound = 1e-8 * np.maximum(1.0, np.abs(w[sample]))
        if np.any(res > bound):
            worst = int(np.argmax(res - bound))
            raise ValidationError(
                f"eigenpair residual {res[worst]:.3e} exceeds bound {bound[worst]:.3e}"
            )
    return SpectrumResult(k=H.k, eigenvalues=w, eigenvectors=v, basis=H.basis)


def write_matrix(H, path):
    """Dump the matrix: 16-byte header (magic IPWH, u32 N_c, u32 dim, 4 pad bytes)
    followed by row-major little-endian complex128 entries."""
    data = np.ascontiguousarray(H.data, dtype="<c16")
    header = struct.pack("<4sII4x", MATRIX_MAGIC, H.size, H.basis.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_matrix(path):
    """Read a matrix dump; returns (data, dim)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        magic, n, dim = struct.unpack("<4sII4x", header)
        if magic != MATRIX_MAGIC:
            raise ValidationError(f"bad matrix dump magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<c16").reshape(n, n)
    return data, dim

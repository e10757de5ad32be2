"""Self-consistent field loop: Kohn-Sham matrix assembly, total energy, and
linear density mixing over the higher-dimensional torus density.

Electron bookkeeping is per unit volume throughout: orbital densities carry
weight f_j/(Nbar_k * N_k) so the DC Fourier component of the accumulated
density equals electrons per unit volume at the solved Fermi level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .lattice import build_basis
from .operator import HamiltonianMatrix, assemble, eigensolve
from .realspace import (
    HighDimDensity,
    _check_grid_shape,
    default_grid_shape,
    density_highdim,
    hartree,
    xc_apply,
)
from .spectrum import OccupationModel, _state_weights, fermi_level, occupation

_MAX_BACKOFF_HALVINGS = 60
# Residual growth tolerated before the damping backoff halves the mixing
# factor.  Healthy linear mixing shows mild transient growth (slow modes
# passing through each other), so only a genuine blow-up triggers damping.
_BACKOFF_GROWTH = 4.0


@dataclass
class ScfConfig:
    """Knobs for the self-consistent loop."""

    ec: float
    electrons_per_volume: float
    k_list: list | None = None
    alpha: float = 0.3
    max_iter: int = 300
    tol: float = 1e-8
    theta: float = 1e-2
    use_hartree: bool = True
    xc: object | None = None
    grid_shape: tuple | None = None
    reference: int = 1
    max_basis: int = 200_000

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError(f"mixing alpha must lie in (0, 1], got {self.alpha}")
        if self.tol <= 0:
            raise ValidationError("residual tolerance must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.theta < 0:
            raise ValidationError("occupation smearing theta must be nonnegative")
        if self.ec <= 0:
            raise ValidationError("energy cutoff must be positive")
        if self.electrons_per_volume <= 0:
            raise ValidationError("electrons_per_volume must be positive")


@dataclass
class ScfState:
    """Result of (part of) a self-consistent run."""

    density: HighDimDensity
    ef: float | None
    results: list
    occupations: list
    total_energy: float
    iteration: int
    residual: float
    converged: bool
    residual_history: list = field(default_factory=list)
    ef_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    fermi: object | None = None
    reference: int = 1


def scf_potential(density, functional=None, include_hartree=True):
    """Fourier grid of the density-dependent one-body potential v_H + v_xc."""
    vhat = np.zeros(density.grid_shape, dtype=complex)
    if include_hartree:
        vhat += hartree(density).potential_fourier
    if functional is not None:
        vhat += xc_apply(density, functional).potential_fourier
    return vhat


def _difference_lookup(basis, vhat):
    """Matrix of vhat evaluated at the composite index difference of every pair."""
    n = len(basis)
    d = basis.dim
    shape = vhat.shape
    out = np.empty((n, n), dtype=complex)
    chunk = max(1, 4_000_000 // max(1, n))
    for i0 in range(0, n, chunk):
        dm = basis.m[i0 : i0 + chunk, None, :] - basis.m[None, :, :]
        dn = basis.n[i0 : i0 + chunk, None, :] - basis.n[None, :, :]
        idx = tuple(dm[..., a] % shape[a] for a in range(d)) + tuple(
            dn[..., a] % shape[d + a] for a in range(d)
        )
        out[i0 : i0 + chunk] = vhat[idx]
    return out


def ks_matrix(
    basis,
    k,
    v1,
    v2,
    density=None,
    functional=None,
    include_hartree=True,
    allow_commensurate=False,
):
    """Kohn-Sham matrix: linear Hamiltonian plus v_H and v_xc at index differences.

    With ``density=None`` (or both interaction channels disabled) this is
    exactly the linear operator.
    """
    H = assemble(basis, v1, v2, k=k, allow_commensurate=allow_commensurate)
    if density is not None and (include_hartree or functional is not None):
        vhat = scf_potential(density, functional, include_hartree)
        H.data += _difference_lookup(basis, vhat)
        H.provenance = dict(H.provenance, scf_potential=True)
    return H


def _band_energy(results, occupations, weights, linear_matrices):
    """sum_k sum_j f_jk <U_jk| H_lin |U_jk> / (Nbar_k N_k)."""
    total = 0.0
    for r, f, w, lin in zip(results, occupations, weights, linear_matrices):
        vec = r.eigenvectors
        expect = np.einsum("ij,ij->j", np.conj(vec), lin @ vec).real
        total += 0.5 * w * float(np.sum(f * expect))
    return total


def total_energy(
    state,
    pair,
    v1,
    v2,
    e_ii=0.0,
    functional=None,
    include_hartree=True,
):
    """E_II + band term (linear matrices) + Hartree + xc, per unit volume."""
    if state.ef is None:
        raise ValidationError("state has no Fermi level; run the occupation step first")
    weights, _, _, _ = _state_weights(state.results, pair, state.reference)
    lin = [assemble(r.basis, v1, v2, k=r.k).data for r in state.results]
    energy = e_ii + _band_energy(state.results, state.occupations, weights, lin)
    if include_hartree:
        energy += hartree(state.density).energy_per_volume
    if functional is not None:
        energy += xc_apply(state.density, functional).energy_per_volume
    return float(energy)


def scf_solve(pair, v1, v2, config, initial_density=None, e_ii=0.0):
    """Run the self-consistent loop and return the final ScfState.

    Iterates Kohn-Sham assembly, diagonalization, Fermi level, density
    accumulation, and linear mixing rho <- (1-alpha) rho + alpha rho_out;
    stops when max|rho_hat_new - rho_hat_old| <= tol.  A damping backoff
    guards against divergence: if a step would grow the residual past
    _BACKOFF_GROWTH times the previous accepted value, the effective mixing
    factor is halved (persistently) before the step is accepted.  Mild
    transient growth is left alone so healthy runs are plain linear mixing.
    Non-convergence returns converged=False rather than raising.
    """
    basis = build_basis(pair, config.ec, max_size=config.max_basis)
    grid_shape = tuple(config.grid_shape) if config.grid_shape else default_grid_shape(basis)
    _check_grid_shape(basis, grid_shape)
    k_list = config.k_list if config.k_list else [np.zeros(pair.dim)]
    n_k = len(k_list)
    ntot = int(np.prod(grid_shape))

    linear_only = not config.use_hartree and config.xc is None
    lin_matrices = [assemble(basis, v1, v2, k=k).data for k in k_list]

    if initial_density is not None:
        if tuple(initial_density.grid_shape) != grid_shape:
            raise ValidationError(
                f"initial density grid {tuple(initial_density.grid_shape)} does not "
                f"match the configured grid {grid_shape}"
            )
        rho = initial_density.values.copy()
    else:
        rho = np.zeros(grid_shape)
    rho_hat_old = np.fft.fftn(rho) / ntot

    residual_history: list[float] = []
    ef_history: list[float] = []
    energy_history: list[float] = []
    prev_res = None
    alpha_eff = config.alpha
    halvings = 0
    converged = False
    iteration = 0
    residual = float("inf")
    fermi = None
    results: list = []
    occs: list = []
    weights: list = []
    etot = e_ii

    for iteration in range(1, config.max_iter + 1):
        if linear_only:
            vscf = None
        else:
            vscf = scf_potential(
                HighDimDensity(rho, pair, grid_shape), config.xc, config.use_hartree
            )
        results = []
        lookup = None if vscf is None else _difference_lookup(basis, vscf)
        for k, lin in zip(k_list, lin_matrices):
            data = lin.copy()
            if lookup is not None:
                data += lookup
            H = HamiltonianMatrix(
                basis=basis,
                k=np.asarray(k, dtype=float),
                data=data,
                provenance={"kind": "kohn_sham", "iteration": iteration},
            )
            results.append(eigensolve(H))
        fermi = fermi_level(
            results,
            pair,
            config.electrons_per_volume,
            theta=config.theta,
            reference=config.reference,
        )
        model = OccupationModel(theta=config.theta, ef=fermi.ef)
        occs = [occupation(r.eigenvalues, model) for r in results]
        weights, _, _, _ = _state_weights(results, pair, config.reference)
        dens_out = density_highdim(
            results, occs, grid_shape=grid_shape, k_weights=[w / 2.0 for w in weights]
        )

        if linear_only:
            rho = dens_out.values
            rho_hat_old = dens_out.fourier_grid
            residual = 0.0
            residual_history.append(residual)
            ef_history.append(fermi.ef)
            etot = e_ii + _band_energy(results, occs, weights, lin_matrices)
            energy_history.append(etot)
            converged = True
            break

        # The mixed-step residual is alpha_eff * step by linearity of the FFT,
        # so divergence can be detected before committing the mix.
        step = float(np.max(np.abs(dens_out.fourier_grid - rho_hat_old)))
        if prev_res is not None:
            while (
                alpha_eff * step > _BACKOFF_GROWTH * prev_res
                and halvings < _MAX_BACKOFF_HALVINGS
            ):
                alpha_eff *= 0.5
                halvings += 1
        rho = (1.0 - alpha_eff) * rho + alpha_eff * dens_out.values
        rho_hat_new = np.fft.fftn(rho) / ntot
        residual = float(np.max(np.abs(rho_hat_new - rho_hat_old)))
        rho_hat_old = rho_hat_new
        prev_res = residual

        mixed = HighDimDensity(rho, pair, grid_shape)
        etot = e_ii + _band_energy(results, occs, weights, lin_matrices)
        if config.use_hartree:
            etot += hartree(mixed).energy_per_volume
        if config.xc is not None:
            etot += xc_apply(mixed, config.xc).energy_per_volume
        residual_history.append(residual)
        ef_history.append(fermi.ef)
        energy_history.append(etot)

        if residual <= config.tol:
            converged = True
            break

    density = HighDimDensity(rho, pair, grid_shape)
    return ScfState(
        density=density,
        ef=fermi.ef if fermi is not None else None,
        results=results,
        occupations=occs,
        total_energy=float(etot),
        iteration=iteration,
        residual=float(residual),
        converged=converged,
        residual_history=residual_history,
        ef_history=ef_history,
        energy_history=energy_history,
        fermi=fermi,
        reference=config.reference,
    )

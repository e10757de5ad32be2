"""Smeared and scaled densities of states, multi-k averaging, and Fermi levels.

Two DoS weight conventions are provided:

* ``smeared_dos``: every eigenvalue carries weight 1/sqrt(Ec) (the raw
  cutoff-scaled convention).
* ``scaled_dos``: every eigenvalue carries weight 1/Nbar with
  Nbar = N1/|cell2|, where N1 counts the composite wavevectors k+G lying in
  the centered reciprocal cell of layer 1.  This normalizes the curve per unit
  volume, so that with occupancy 2 it integrates to electrons per volume, and
  makes curves comparable across cutoffs, k points, and the commensurate
  supercell reference.

Multi-k curves are pointwise means (prefactor 1/N_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisSizeError, ValidationError
from .lattice import count_in_reference_cell

DEFAULT_SIGMA = 5.0
DEFAULT_N_POINTS = 2000
_GAP_GUARD = 1.0  # synthetic gap above the last state when no LUMO exists


@dataclass
class DoSCurve:
    energies: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def integral(self):
        return float(np.trapezoid(self.values, self.energies))


def default_window(eigenvalues, sigma=DEFAULT_SIGMA):
    """[min - 5/sqrt(sigma), max + 5/sqrt(sigma)]: covers all smeared mass."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    pad = 5.0 / math.sqrt(sigma)
    eigenvalues = np.asarray(eigenvalues)
    return float(eigenvalues.min() - pad), float(eigenvalues.max() + pad)


def _smear(eigenvalues, weights, sigma, window, n_points):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    lo, hi = float(window[0]), float(window[1])
    if not hi > lo:
        raise ValueError(f"window must be nonempty, got {window}")
    grid = np.linspace(lo, hi, n_points)
    values = np.zeros(n_points)
    norm = math.sqrt(sigma / math.pi)
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), eigenvalues.shape)
    chunk = max(1, 4_000_000 // n_points)
    for i0 in range(0, len(eigenvalues), chunk):
        lam = eigenvalues[i0 : i0 + chunk, None]
        w = weights[i0 : i0 + chunk, None]
        values += np.sum(w * norm * np.exp(-sigma * (grid[None, :] - lam) ** 2), axis=0)
    return grid, values


def smeared_dos(eigenvalues, ec, sigma=DEFAULT_SIGMA, window=None, n_points=DEFAULT_N_POINTS):
    """Gaussian-smeared DoS with per-state weight 1/sqrt(Ec)."""
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    if window is None:
        window = default_window(eigenvalues, sigma)
    weight = 1.0 / math.sqrt(ec)
    grid, values = _smear(eigenvalues, weight, sigma, window, n_points)
    meta = {"sigma": sigma, "Ec": float(ec), "N_k": 1, "weight": "1/sqrt(Ec)"}
    return DoSCurve(grid, values, meta)


def scaled_dos(
    result,
    basis=None,
    pair=None,
    sigma=DEFAULT_SIGMA,
    window=None,
    n_points=DEFAULT_N_POINTS,
):
    """Unit-volume DoS: per-state weight 1/Nbar with Nbar = N1/|cell2|."""
    basis = basis if basis is not None else result.basis
    pair = pair if pair is not None else basis.pair
    n1 = count_in_reference_cell(basis, result.k, reference=1)
    n2 = count_in_reference_cell(basis, result.k, reference=2)
    if n1 == 0:
        raise ValidationError(
            "no composite wavevector falls in the layer-1 reciprocal cell (N1=0): "
            "the cutoff is too small for the unit-volume scaling"
        )
    nbar = n1 / pair.lat2.cell_volume
    if window is None:
        window = default_window(result.eigenvalues, sigma)
    grid, values = _smear(result.eigenvalues, 1.0 / nbar, sigma, window, n_points)
    meta = {
        "sigma": sigma,
        "Ec": basis.Ec,
        "N_k": 1,
        "weight": "1/Nbar",
        "N1": n1,
        "N2": n2,
        "ratio": (n1 / n2 if n2 else math.inf),
        "nbar": nbar,
    }
    return DoSCurve(grid, values, meta)


def average_dos(curves):
    """Pointwise mean of curves sharing one grid and smearing width."""
    if not curves:
        raise ValueError("no curves to average")
    first = curves[0]
    for c in curves[1:]:
        if c.energies.shape != first.energies.shape or not np.array_equal(
            c.energies, first.energies
        ):
            raise ValueError("curves have mismatched energy grids")
        if c.meta.get("sigma") != first.meta.get("sigma"):
            raise ValueError("curves have mismatched smearing widths")
    values = np.mean([c.values for c in curves], axis=0)
    meta = dict(first.meta)
    meta["N_k"] = len(curves)
    return DoSCurve(first.energies.copy(), values, meta)


def dos_distance(a, b):
    """L2 distance sqrt(trapezoid integral of (a - b)^2) on the shared grid."""
    if a.energies.shape != b.energies.shape or not np.array_equal(a.energies, b.energies):
        raise ValueError("curves have mismatched energy grids")
    return float(math.sqrt(np.trapezoid((a.values - b.values) ** 2, a.energies)))


@dataclass
class OccupationModel:
    """Spin-degenerate occupation f(eps) in [0, 2] at smearing theta >= 0."""

    theta: float
    ef: float

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f"theta must be nonnegative, got {self.theta}")


def occupation(eps, model):
    """f(eps): Fermi-Dirac at theta > 0; step with value 1 at eps = Ef for theta = 0."""
    eps = np.asarray(eps, dtype=float)
    if model.theta == 0:
        out = np.where(eps < model.ef, 2.0, np.where(eps > model.ef, 0.0, 1.0))
    else:
        x = np.clip((eps - model.ef) / model.theta, -700.0, 700.0)
        out = 2.0 / (1.0 + np.exp(x))
    return float(out) if out.ndim == 0 else out


@dataclass
class FermiResult:
    ef: float
    flagged: bool
    diagnostics: dict


def _state_weights(results, pair, reference):
    """Full-occupancy per-state weights 2/(Nbar_k * N_k) and the Nbar list."""
    n_k = len(results)
    other = pair.lat2.cell_volume if reference == 1 else pair.lat1.cell_volume
    nbars = []
    n1s = []
    n2s = []
    for r in results:
        n1 = count_in_reference_cell(r.basis, r.k, reference=1)
        n2 = count_in_reference_cell(r.basis, r.k, reference=2)
        count = n1 if reference == 1 else n2
        if count == 0:
            raise ValidationError(
                f"no composite wavevector in the layer-{reference} reciprocal cell at "
                f"k={np.atleast_1d(r.k).tolist()}; cutoff too small"
            )
        nbars.append(count / other)
        n1s.append(n1)
        n2s.append(n2)
    weights = [2.0 / (nbar * n_k) for nbar in nbars]
    return weights, nbars, n1s, n2s


def fermi_level(results, pair, electrons_per_volume, theta=0.01, reference=1):
    """Solve (1/N_k) sum_k sum_j f(lambda_jk)/Nbar_k = electrons_per_volume for Ef.

    theta > 0 uses bisection (converged to |filling - target| <= 1e-10*target);
    theta = 0 fills states by weight 2/Nbar in ascending order, placing Ef at the
    HOMO-LUMO midpoint, at the degenerate eigenvalue when filling ends inside a
    degenerate cluster, and half a gap guard above the last state (flagged) when
    no LUMO exists.
    """
    if electrons_per_volume <= 0:
        raise ValueError("electrons_per_volume must be positive")
    if not results or any(len(r.eigenvalues) == 0 for r in results):
        raise ValueError("at least one eigenvalue per k point is required")
    weights, nbars, n1s, n2s = _state_weights(results, pair, reference)
    target = float(electrons_per_volume)
    capacity = sum(w * len(r.eigenvalues) for w, r in zip(weights, results))
    tol = 1e-10 * target
    if target > capacity + tol:
        raise BasisSizeError(
            f"electron target {target} exceeds basis capacity {capacity}; "
            "increase the cutoff or the solved eigenvalue count"
        )

    all_eigs = np.concatenate([r.eigenvalues for r in results])
    flagged = False

    if theta > 0:
        lo = float(all_eigs.min()) - 10.0 * theta - 1.0
        hi = float(all_eigs.max()) + 10.0 * theta + 1.0

        def filling(ef):
            model = OccupationModel(theta=theta, ef=ef)
            return sum(
                w / 2.0 * np.sum(occupation(r.eigenvalues, model))
                for w, r in zip(weights, results)
            )

        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = filling(mid)
            if abs(f_mid - target) <= tol:
                lo = hi = mid
                break
            if f_mid < target:
                lo = mid
            else:
                hi = mid
        ef = 0.5 * (lo + hi)
    else:
        w_all = np.concatenate(
            [np.full(len(r.eigenvalues), w) for w, r in zip(weights, results)]
        )
        order = np.argsort(all_eigs, kind="stable")
        lam = all_eigs[order]
        cum = np.cumsum(w_all[order])
        boundary_tol = 1e-12 * max(1.0, target)
        j = int(np.searchsorted(cum, target - boundary_tol))
        j = min(j, len(lam) - 1)
        homo = lam[j]
        if abs(cum[j] - target) <= boundary_tol:
            if j + 1 >= len(lam):
                ef = homo + 0.5 * _GAP_GUARD
                flagged = True
            elif lam[j + 1] - homo < 1e-9:
                ef = float(homo)  # boundary falls inside a degenerate cluster
            else:
                ef = 0.5 * (homo + lam[j + 1])
        else:
            ef = float(homo)  # fractional filling pins Ef at the partially filled level

    model = OccupationModel(theta=theta, ef=float(ef))
    filled = sum(
        w / 2.0 * np.sum(occupation(r.eigenvalues, model))
        for w, r in zip(weights, results)
    )
    diagnostics = {
        "N1": n1s,
        "N2": n2s,
        "nbar": nbars,
        "N_k": len(results),
        "filled": float(filled),
        "target": target,
        "reference": reference,
        "theta": theta,
        "flagged_no_lumo": flagged,
    }
    return FermiResult(ef=float(ef), flagged=flagged, diagnostics=diagnostics)


def occupations_for(results, fermi):
    """Per-result occupation arrays f(lambda) at a solved Fermi level."""
    model = OccupationModel(theta=fermi.diagnostics["theta"], ef=fermi.ef)
    return [occupation(r.eigenvalues, model) for r in results]

"""Plane-wave spectral toolkit for two-layer incommensurate systems.

Submodules are loaded lazily so the command-line front end can configure BLAS
thread counts before any numerical import happens.
"""

from importlib import import_module

from .errors import (
    BasisSizeError,
    CommensurateError,
    ConfigError,
    ConvergenceError,
    IncommpwError,
    InvalidLatticeError,
    SingularConfigurationError,
    ValidationError,
)

__version__ = "0.1.0"

_EXPORTS = {
    # lattice
    "Lattice": ".lattice",
    "IncommensuratePair": ".lattice",
    "PlaneWaveBasis": ".lattice",
    "CommensurateDiagnostic": ".lattice",
    "reciprocal_basis": ".lattice",
    "check_commensurate": ".lattice",
    "build_basis": ".lattice",
    "count_in_reference_cell": ".lattice",
    "uniformity_discrepancy": ".lattice",
    # potential
    "FourierPotential": ".potential",
    "screened_coulomb": ".potential",
    "zero_potential": ".potential",
    "fourier_potential": ".potential",
    # operator
    "HamiltonianMatrix": ".operator",
    "SpectrumResult": ".operator",
    "assemble": ".operator",
    "assemble_highdim": ".operator",
    "assemble_shifted": ".operator",
    "eigensolve": ".operator",
    "write_matrix": ".operator",
    "read_matrix": ".operator",
    # spectrum
    "DoSCurve": ".spectrum",
    "default_window": ".spectrum",
    "smeared_dos": ".spectrum",
    "scaled_dos": ".spectrum",
    "average_dos": ".spectrum",
    "dos_distance": ".spectrum",
    "OccupationModel": ".spectrum",
    "occupation": ".spectrum",
    "FermiResult": ".spectrum",
    "fermi_level": ".spectrum",
    "occupations_for": ".spectrum",
    # realspace
    "eigenfunction_on_grid": ".realspace",
    "ipr": ".realspace",
    "XcFunctional": ".realspace",
    "zero_functional": ".realspace",
    "dirac_exchange": ".realspace",
    "validate_xc": ".realspace",
    "default_grid_shape": ".realspace",
    "orbital_highdim": ".realspace",
    "HighDimDensity": ".realspace",
    "density_highdim": ".realspace",
    "FieldResult": ".realspace",
    "hartree": ".realspace",
    "xc_apply": ".realspace",
    "diagonal_restriction": ".realspace",
    "write_density_dump": ".realspace",
    "read_density_dump": ".realspace",
    # scf
    "ScfConfig": ".scf",
    "ScfState": ".scf",
    "ks_matrix": ".scf",
    "scf_potential": ".scf",
    "scf_solve": ".scf",
    "total_energy": ".scf",
    # ewald
    "EwaldParams": ".ewald",
    "cell_quadrature": ".ewald",
    "phase_average": ".ewald",
    "intralayer_ewald": ".ewald",
    "interlayer_real": ".ewald",
    "interlayer_reciprocal": ".ewald",
    "interlayer_background": ".ewald",
    "interlayer_total": ".ewald",
    "e_ii": ".ewald",
    # supercell
    "rational_approximants": ".supercell",
    "Approximant": ".supercell",
    "make_approximant": ".supercell",
    "supercell_dos": ".supercell",
    # config
    "RunConfig": ".config",
    "load_config": ".config",
}

__all__ = sorted(
    set(_EXPORTS)
    | {
        "BasisSizeError",
        "CommensurateError",
        "ConfigError",
        "ConvergenceError",
        "IncommpwError",
        "InvalidLatticeError",
        "SingularConfigurationError",
        "ValidationError",
        "__version__",
    }
)


def __getattr__(name):
    if name in _EXPORTS:
        value = getattr(import_module(_EXPORTS[name], __name__), name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))

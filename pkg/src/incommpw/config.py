"""Run configuration: TOML schema, Example-1 defaults, and object builders.

Every physical default mirrors the two-chain reference system (unit chain
against a pi/2 chain, unit charges, screened-Coulomb potentials), so a config
containing nothing but an energy cutoff runs the standard DoS setup.  All
validation failures raise ConfigError with the dotted key name.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import CommensurateError, ConfigError, InvalidLatticeError
from .ewald import EwaldParams
from .lattice import IncommensuratePair, Lattice
from .potential import fourier_potential, screened_coulomb, zero_potential
from .realspace import dirac_exchange


def _check_keys(table, allowed, prefix):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else key, "unknown key")


def _number(table, key, default, prefix, positive=False, nonnegative=False, label=None):
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{prefix}.{key}", f"expected a number, got {value!r}")
    value = float(value)
    name = label or key
    if positive and value <= 0:
        raise ConfigError(f"{prefix}.{key}", f"{name} must be positive, got {value:g}")
    if nonnegative and value < 0:
        raise ConfigError(f"{prefix}.{key}", f"{name} must be nonnegative, got {value:g}")
    return value


def _integer(table, key, default, prefix, minimum=None):
    value = table.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{prefix}.{key}", f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{prefix}.{key}", f"must be at least {minimum}, got {value}")
    return value


def _boolean(table, key, default, prefix):
    value = table.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{prefix}.{key}", f"expected true/false, got {value!r}")
    return value


@dataclass
class LayerConfig:
    length: float | None
    theta: float | None
    basis: list | None
    charge: float
    potential_type: str
    screening: float
    entries: list


@dataclass
class SystemConfig:
    layer1: LayerConfig
    layer2: LayerConfig
    tau: list
    t: float
    allow_commensurate: bool


@dataclass
class DiscretizationConfig:
    ec: float
    kpoints: object
    k_list: list | None
    max_basis: int
    coeff_cutoff_factor: float


@dataclass
class OutputConfig:
    sigma: float
    window: tuple | None
    n_points: int
    scaled: bool
    states: list
    grid_points: int
    extent: float
    count: int | None
    dump_matrix: bool
    dump_density: bool


@dataclass
class FermiSection:
    theta: float
    electrons: float | None


@dataclass
class ScfSection:
    alpha: float
    max_iter: int
    tol: float
    theta: float
    xc: str
    hartree: bool
    grid: list | None


@dataclass
class SupercellSection:
    max_q: int
    qs: list | None
    ec: float | None
    k_grid: int
    reference_ec: float
    reference_kpoints: int


@dataclass
class ConvergeSection:
    mode: str
    ec_list: list
    k_counts: list
    window: tuple | None


def _parse_layer(table, prefix, default_length):
    _check_keys(table, {"L", "theta", "basis", "Z", "potential"}, prefix)
    length = table.get("L")
    theta = table.get("theta")
    basis = table.get("basis")
    if basis is not None and (length is not None or theta is not None):
        raise ConfigError(f"{prefix}.basis", "give either a basis matrix or L (+theta), not both")
    if basis is None and length is None:
        length = default_length
    if length is not None:
        if isinstance(length, bool) or not isinstance(length, (int, float)) or length <= 0:
            raise ConfigError(f"{prefix}.L", f"lattice constant must be positive, got {length!r}")
        length = float(length)
    if theta is not None and (isinstance(theta, bool) or not isinstance(theta, (int, float))):
        raise ConfigError(f"{prefix}.theta", f"expected a number, got {theta!r}")
    if basis is not None:
        try:
            arr = np.asarray(basis, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{prefix}.basis", "expected a matrix of lattice vectors") from None
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] not in (1, 2):
            raise ConfigError(
                f"{prefix}.basis", f"expected a 1x1 or 2x2 matrix, got shape {arr.shape}"
            )
        basis = arr.tolist()
    charge = _number(table, "Z", 1.0, prefix, nonnegative=True, label="charge Z")
    pot = table.get("potential", {})
    if not isinstance(pot, dict):
        raise ConfigError(f"{prefix}.potential", "expected a table")
    _check_keys(pot, {"type", "z", "entries"}, f"{prefix}.potential")
    ptype = pot.get("type", "screened_coulomb")
    if ptype not in ("screened_coulomb", "fourier", "zero"):
        raise ConfigError(
            f"{prefix}.potential.type",
            f"unknown type {ptype!r} (expected screened_coulomb, fourier, or zero)",
        )
    screening = _number(pot, "z", 1.0, f"{prefix}.potential", positive=True, label="screening z")
    entries = pot.get("entries", [])
    if ptype == "fourier" and not entries:
        raise ConfigError(f"{prefix}.potential.entries", "fourier potential needs entries")
    return LayerConfig(
        length=length,
        theta=float(theta) if theta is not None else None,
        basis=basis,
        charge=charge,
        potential_type=ptype,
        screening=screening,
        entries=entries,
    )


class RunConfig:
    """Parsed and validated configuration with object builders."""

    def __init__(self, raw=None):
        raw = dict(raw or {})
        _check_keys(
            raw,
            {
                "system",
                "discretization",
                "output",
                "fermi",
                "scf",
                "ewald",
                "supercell",
                "converge",
            },
            "",
        )
        system = raw.get("system", {})
        _check_keys(
            system, {"layer1", "layer2", "tau", "t", "allow_commensurate"}, "system"
        )
        layer1 = _parse_layer(system.get("layer1", {}), "system.layer1", 1.0)
        layer2 = _parse_layer(system.get("layer2", {}), "system.layer2", math.pi / 2.0)
        tau = system.get("tau", 0.0)
        if isinstance(tau, (int, float)) and not isinstance(tau, bool):
            tau = [float(tau)]
        elif isinstance(tau, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in tau
        ):
            tau = [float(v) for v in tau]
        else:
            raise ConfigError("system.tau", f"expected a number or list, got {tau!r}")
        t_sep = _number(system, "t", 1.0, "system", nonnegative=True, label="layer separation t")
        self.system = SystemConfig(
            layer1=layer1,
            layer2=layer2,
            tau=tau,
            t=t_sep,
            allow_commensurate=_boolean(system, "allow_commensurate", False, "system"),
        )

        disc = raw.get("discretization", {})
        _check_keys(
            disc,
            {"ec", "kpoints", "k_list", "max_basis", "coeff_cutoff_factor"},
            "discretization",
        )
        self.discretization = DiscretizationConfig(
            ec=_number(disc, "ec", 500.0, "discretization", positive=True, label="Ec"),
            kpoints=disc.get("kpoints", 1),
            k_list=disc.get("k_list"),
            max_basis=_integer(disc, "max_basis", 200_000, "discretization", minimum=1),
            coeff_cutoff_factor=_number(
                disc, "coeff_cutoff_factor", 4.0, "discretization", positive=True
            ),
        )
        kp = self.discretization.kpoints
        if isinstance(kp, bool) or not (
            isinstance(kp, int)
            or (isinstance(kp, list) and all(isinstance(v, int) for v in kp))
        ):
            raise ConfigError("discretization.kpoints", f"expected integer(s), got {kp!r}")
        if isinstance(kp, int) and kp < 1:
            raise ConfigError("discretization.kpoints", f"must be at least 1, got {kp}")
        if self.discretization.k_list is not None and not isinstance(
            self.discretization.k_list, list
        ):
            raise ConfigError("discretization.k_list", "expected a list of k fractions")

        out = raw.get("output", {})
        _check_keys(
            out,
            {
                "sigma",
                "window",
                "n_points",
                "scaled",
                "states",
                "grid_points",
                "extent",
                "count",
                "dump_matrix",
                "dump_density",
            },
            "output",
        )
        window = out.get("window")
        if window is not None:
            if (
                not isinstance(window, list)
                or len(window) != 2
                or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in window
                )
                or not window[1] > window[0]
            ):
                raise ConfigError("output.window", f"expected [lo, hi] with hi > lo, got {window!r}")
            window = (float(window[0]), float(window[1]))
        states = out.get("states", [0])
        if not isinstance(states, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in states
        ):
            raise ConfigError("output.states", f"expected a list of state indices, got {states!r}")
        count = out.get("count")
        if count is not None:
            count = _integer(out, "count", None, "output", minimum=1)
        self.output = OutputConfig(
            sigma=_number(out, "sigma", 5.0, "output", positive=True, label="sigma"),
            window=window,
            n_points=_integer(out, "n_points", 2000, "output", minimum=2),
            scaled=_boolean(out, "scaled", True, "output"),
            states=states,
            grid_points=_integer(out, "grid_points", 512, "output", minimum=2),
            extent=_number(out, "extent", 40.0, "output", positive=True),
            count=count,
            dump_matrix=_boolean(out, "dump_matrix", False, "output"),
            dump_density=_boolean(out, "dump_density", False, "output"),
        )

        fermi = raw.get("fermi", {})
        _check_keys(fermi, {"theta", "electrons"}, "fermi")
        electrons = fermi.get("electrons")
        if electrons is not None:
            electrons = _number(fermi, "electrons", None, "fermi", positive=True)
        self.fermi = FermiSection(
            theta=_number(fermi, "theta", 0.01, "fermi", nonnegative=True, label="theta"),
            electrons=electrons,
        )

        scf = raw.get("scf", {})
        _check_keys(
            scf, {"alpha", "max_iter", "tol", "theta", "xc", "hartree", "grid"}, "scf"
        )
        xc = scf.get("xc", "dirac")
        if xc not in ("none", "dirac"):
            raise ConfigError("scf.xc", f"unknown functional {xc!r} (expected none or dirac)")
        grid = scf.get("grid")
        if grid is not None and not (
            isinstance(grid, list) and all(isinstance(v, int) and v >= 2 for v in grid)
        ):
            raise ConfigError("scf.grid", f"expected a list of grid sizes >= 2, got {grid!r}")
        alpha = _number(scf, "alpha", 0.3, "scf", positive=True, label="mixing alpha")
        if alpha > 1.0:
            raise ConfigError("scf.alpha", f"mixing alpha must lie in (0, 1], got {alpha:g}")
        self.scf = ScfSection(
            alpha=alpha,
            max_iter=_integer(scf, "max_iter", 300, "scf", minimum=1),
            tol=_number(scf, "tol", 1e-8, "scf", positive=True, label="tolerance"),
            theta=_number(scf, "theta", 0.01, "scf", nonnegative=True, label="theta"),
            xc=xc,
            hartree=_boolean(scf, "hartree", True, "scf"),
            grid=grid,
        )

        ew = raw.get("ewald", {})
        _check_keys(ew, {"eta", "r_cut", "g_cut", "quadrature"}, "ewald")
        self._ewald_raw = {
            "eta": _number(ew, "eta", 1.0, "ewald", positive=True, label="eta"),
            "r_cut": _number(ew, "r_cut", 8.0, "ewald", positive=True, label="r_cut"),
            "g_cut": _number(ew, "g_cut", 8.0, "ewald", positive=True, label="g_cut"),
            "quadrature": _integer(ew, "quadrature", 16, "ewald", minimum=2),
        }

        sc = raw.get("supercell", {})
        _check_keys(
            sc,
            {"max_q", "qs", "ec", "k_grid", "reference_ec", "reference_kpoints"},
            "supercell",
        )
        qs = sc.get("qs")
        if qs is not None and not (
            isinstance(qs, list) and all(isinstance(v, int) and v >= 1 for v in qs)
        ):
            raise ConfigError("supercell.qs", f"expected a list of denominators, got {qs!r}")
        sc_ec = sc.get("ec")
        if sc_ec is not None:
            sc_ec = _number(sc, "ec", None, "supercell", positive=True, label="Ec")
        self.supercell = SupercellSection(
            max_q=_integer(sc, "max_q", 300, "supercell", minimum=1),
            qs=qs,
            ec=sc_ec,
            k_grid=_integer(sc, "k_grid", 32, "supercell", minimum=1),
            reference_ec=_number(
                sc, "reference_ec", 2000.0, "supercell", positive=True, label="reference Ec"
            ),
            reference_kpoints=_integer(sc, "reference_kpoints", 8, "supercell", minimum=1),
        )

        conv = raw.get("converge", {})
        _check_keys(conv, {"mode", "ec_list", "k_counts", "window"}, "converge")
        mode = conv.get("mode", "ec")
        if mode not in ("ec", "kpoints"):
            raise ConfigError("converge.mode", f"expected ec or kpoints, got {mode!r}")
        ec_list = conv.get("ec_list", [200.0, 500.0, 1000.0])
        if not (
            isinstance(ec_list, list)
            and len(ec_list) >= 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in ec_list)
        ):
            raise ConfigError("converge.ec_list", f"expected >= 2 positive cutoffs, got {ec_list!r}")
        k_counts = conv.get("k_counts", [1, 2, 4, 8])
        if not (
            isinstance(k_counts, list)
            and len(k_counts) >= 2
            and all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in k_counts)
        ):
            raise ConfigError("converge.k_counts", f"expected >= 2 k counts, got {k_counts!r}")
        cwindow = conv.get("window")
        if cwindow is not None:
            if (
                not isinstance(cwindow, list)
                or len(cwindow) != 2
                or not cwindow[1] > cwindow[0]
            ):
                raise ConfigError("converge.window", f"expected [lo, hi], got {cwindow!r}")
            cwindow = (float(cwindow[0]), float(cwindow[1]))
        self.converge = ConvergeSection(
            mode=mode,
            ec_list=[float(v) for v in ec_list],
            k_counts=list(k_counts),
            window=cwindow,
        )

    # ------------------------------------------------------------------ builders

    def _build_lattice(self, layer, prefix):
        try:
            if layer.basis is not None:
                return Lattice(np.asarray(layer.basis, dtype=float).T)
            if layer.theta is not None:
                return Lattice.hexagonal(layer.length, layer.theta)
            return Lattice.chain(layer.length)
        except (InvalidLatticeError, ValueError) as exc:
            raise ConfigError(prefix, str(exc)) from exc

    def build_pair(self):
        lat1 = self._build_lattice(self.system.layer1, "system.layer1")
        lat2 = self._build_lattice(self.system.layer2, "system.layer2")
        if lat1.dim != lat2.dim:
            raise ConfigError("system.layer2", "layer dimensions differ")
        tau = self.system.tau
        if len(tau) != lat1.dim:
            raise ConfigError(
                "system.tau", f"tau has {len(tau)} components for a {lat1.dim}D system"
            )
        try:
            return IncommensuratePair(
                lat1,
                lat2,
                tau=np.asarray(tau, dtype=float),
                allow_commensurate=self.system.allow_commensurate,
            )
        except CommensurateError as exc:
            raise ConfigError("system", str(exc)) from exc

    def coeff_cutoff(self, ec=None):
        ec = self.discretization.ec if ec is None else ec
        return self.discretization.coeff_cutoff_factor * ec

    def _potential_for(self, layer, lattice, cutoff):
        if layer.potential_type == "zero":
            return zero_potential(lattice, coeff_cutoff=max(cutoff, 1.0))
        if layer.potential_type == "fourier":
            return fourier_potential(lattice, layer.entries, coeff_cutoff=max(cutoff, 1.0))
        return screened_coulomb(layer.charge, layer.screening, lattice, coeff_cutoff=cutoff)

    def build_potentials(self, pair, ec=None):
        cutoff = self.coeff_cutoff(ec)
        v1 = self._potential_for(self.system.layer1, pair.lat1, cutoff)
        v2 = self._potential_for(self.system.layer2, pair.lat2, cutoff)
        return v1, v2

    def v2_builder(self, ec=None):
        """Closure rebuilding the layer-2 potential on an adjusted chain."""
        layer = self.system.layer2
        cutoff = self.coeff_cutoff(ec)
        return lambda lattice: self._potential_for(layer, lattice, cutoff)

    def k_vectors(self, pair):
        """Sampling k points: explicit fractional k_list, else a uniform grid."""
        B1 = pair.lat1.reciprocal_basis
        d = pair.dim
        if self.discretization.k_list is not None:
            out = []
            for i, entry in enumerate(self.discretization.k_list):
                frac = np.atleast_1d(np.asarray(entry, dtype=float))
                if frac.shape != (d,):
                    raise ConfigError(
                        "discretization.k_list",
                        f"entry {i} has {frac.size} components for a {d}D system",
                    )
                out.append(B1 @ frac)
            return out
        kp = self.discretization.kpoints
        counts = [kp] * d if isinstance(kp, int) else list(kp)
        if len(counts) != d:
            raise ConfigError(
                "discretization.kpoints", f"needs {d} counts for a {d}D system, got {counts}"
            )
        ranges = [np.arange(c) / c for c in counts]
        out = []
        for frac in np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, d):
            out.append(B1 @ frac)
        return out

    def electrons_per_volume(self, pair):
        if self.fermi.electrons is not None:
            return self.fermi.electrons
        return (
            self.system.layer1.charge / pair.lat1.cell_volume
            + self.system.layer2.charge / pair.lat2.cell_volume
        )

    def ewald_params(self):
        return EwaldParams(t=self.system.t, **self._ewald_raw)

    def xc_functional(self):
        return dirac_exchange() if self.scf.xc == "dirac" else None


def load_config(path=None):
    """Read a TOML file (all keys optional) into a validated RunConfig."""
    if path is None:
        return RunConfig({})
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"TOML parse error: {exc}") from None
    return RunConfig(raw)

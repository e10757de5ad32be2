"""Batch command-line front end.

This module stays free of numerical imports at module scope so that the
thread-count controls (--threads flag or INCOMM_PW_THREADS) can set the BLAS
environment variables before the numerical stack loads.  All heavy imports
happen inside the subcommand drivers.

CSV artifacts start with one `# incommpw <subcommand> <timestamp>` comment
line; everything after it is deterministic for a fixed config, and floats are
written at 17 significant digits so values round-trip bit-for-bit.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

from .errors import (
    BasisSizeError,
    CommensurateError,
    ConfigError,
    ConvergenceError,
    SingularConfigurationError,
    ValidationError,
)

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _configure_threads(threads):
    """Pin the BLAS/OpenMP pool size; default leaves the hardware default."""
    if threads is None:
        env = os.environ.get("INCOMM_PW_THREADS")
        if env is None or env == "":
            return
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError("INCOMM_PW_THREADS", f"expected an integer, got {env!r}") from None
    if threads < 1:
        raise ConfigError("threads", f"thread count must be at least 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_csv(path, subcommand, header, rows):
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# incommpw {subcommand} {stamp}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="incommpw",
        description="Plane-wave spectral tools for two-layer incommensurate systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        ("basis", "enumerate the plane-wave basis and write basis.csv"),
        ("solve", "solve the eigenvalue problem and write eigenvalues.csv"),
        ("dos", "compute the smeared density of states and write dos.csv"),
        ("eigfun", "evaluate eigenfunctions on a real-space grid"),
        ("fermi", "solve for the Fermi level and write fermi.json"),
        ("scf", "run the self-consistent field loop and write scf_log.csv"),
        ("ewald", "compute nuclei-nuclei energy terms and write ewald.csv"),
        ("supercell-compare", "compare against commensurate supercell references"),
        ("converge", "sweep Ec or k counts and write dos-distance tables"),
    ]
    for name, help_text in commands:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="TOML configuration file")
        p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
        p.add_argument("--out", default=".", help="output directory for artifacts")
        p.add_argument("--ec", type=float, default=None, help="energy cutoff override")
        p.add_argument("--kpoints", type=int, default=None, help="k-point count override")
        p.add_argument("--sigma", type=float, default=None, help="smearing width override")
    return parser


def _apply_overrides(cfg, args):
    if args.ec is not None:
        if args.ec <= 0:
            raise ConfigError("discretization.ec", f"Ec must be positive, got {args.ec:g}")
        cfg.discretization.ec = float(args.ec)
    if args.kpoints is not None:
        if args.kpoints < 1:
            raise ConfigError(
                "discretization.kpoints", f"must be at least 1, got {args.kpoints}"
            )
        cfg.discretization.kpoints = int(args.kpoints)
        cfg.discretization.k_list = None
    if args.sigma is not None:
        if args.sigma <= 0:
            raise ConfigError("output.sigma", f"sigma must be positive, got {args.sigma:g}")
        cfg.output.sigma = float(args.sigma)


def _solve_all(cfg, pair, basis, eigenvalues_only=True, count=None):
    from .operator import assemble, eigensolve

    v1, v2 = cfg.build_potentials(pair)
    ks = cfg.k_vectors(pair)
    results = []
    matrices = []
    for k in ks:
        H = assemble(
            basis, v1, v2, k=k, allow_commensurate=cfg.system.allow_commensurate
        )
        matrices.append(H)
        results.append(eigensolve(H, count=count, eigenvalues_only=eigenvalues_only))
    missed = sum(sum(H.misses.values()) for H in matrices)
    if missed:
        print(
            f"note: {missed} potential couplings fell outside the coefficient tables; "
            "raise discretization.coeff_cutoff_factor to include them",
            file=sys.stderr,
        )
    return results, matrices


def _dos_curves(cfg, results, pair):
    import numpy as np

    from .spectrum import default_window, scaled_dos, smeared_dos

    window = cfg.output.window
    if window is None:
        window = default_window(
            np.concatenate([r.eigenvalues for r in results]), cfg.output.sigma
        )
    curves = []
    for r in results:
        if cfg.output.scaled:
            curves.append(
                scaled_dos(
                    r,
                    pair=pair,
                    sigma=cfg.output.sigma,
                    window=window,
                    n_points=cfg.output.n_points,
                )
            )
        else:
            curves.append(
                smeared_dos(
                    r.eigenvalues,
                    cfg.discretization.ec,
                    sigma=cfg.output.sigma,
                    window=window,
                    n_points=cfg.output.n_points,
                )
            )
    return curves


def _cmd_basis(cfg, out_dir):
    from .lattice import build_basis

    pair = cfg.build_pair()
    basis = build_basis(pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis)
    d = basis.dim
    header = (
        [f"m{a + 1}" for a in range(d)]
        + [f"n{a + 1}" for a in range(d)]
        + [f"g{a + 1}" for a in range(d)]
    )
    rows = []
    for i in range(len(basis)):
        rows.append(
            [int(v) for v in basis.m[i]]
            + [int(v) for v in basis.n[i]]
            + [float(v) for v in basis.G[i]]
        )
    _write_csv(os.path.join(out_dir, "basis.csv"), "basis", header, rows)
    print(f"N_c={len(basis)}")
    return 0


def _cmd_solve(cfg, out_dir):
    from .lattice import build_basis
    from .operator import write_matrix

    pair = cfg.build_pair()
    basis = build_basis(pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis)
    results, matrices = _solve_all(cfg, pair, basis, count=cfg.output.count)
    if len(results) == 1:
        header = ["index", "eigenvalue"]
        rows = [[i, float(v)] for i, v in enumerate(results[0].eigenvalues)]
    else:
        header = ["k_index", "index", "eigenvalue"]
        rows = [
            [ki, i, float(v)]
            for ki, r in enumerate(results)
            for i, v in enumerate(r.eigenvalues)
        ]
    _write_csv(os.path.join(out_dir, "eigenvalues.csv"), "solve", header, rows)
    if cfg.output.dump_matrix:
        write_matrix(matrices[0], os.path.join(out_dir, "hamiltonian.bin"))
    print(f"N_c={len(basis)} k_points={len(results)}")
    return 0


def _cmd_dos(cfg, out_dir):
    from .lattice import build_basis
    from .spectrum import average_dos

    pair = cfg.build_pair()
    basis = build_basis(pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis)
    results, _ = _solve_all(cfg, pair, basis)
    curve = average_dos(_dos_curves(cfg, results, pair))
    rows = [[float(e), float(v)] for e, v in zip(curve.energies, curve.values)]
    _write_csv(os.path.join(out_dir, "dos.csv"), "dos", ["energy", "dos"], rows)
    print(f"integral={curve.integral():.17g}")
    return 0


def _cmd_eigfun(cfg, out_dir):
    import numpy as np

    from .lattice import build_basis
    from .realspace import eigenfunction_on_grid, ipr

    pair = cfg.build_pair()
    basis = build_basis(pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis)
    states = cfg.output.states
    results, _ = _solve_all(
        cfg, pair, basis, eigenvalues_only=False, count=max(states) + 1
    )
    result = results[0]
    n = cfg.output.grid_points
    extent = cfg.output.extent
    if pair.dim == 1:
        pts = np.linspace(0.0, extent, n, endpoint=False).reshape(-1, 1)
        coord_header = ["x"]
    else:
        axis = np.linspace(0.0, extent, n, endpoint=False)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        coord_header = ["x", "y"]
    for j in states:
        u = eigenfunction_on_grid(result, j, pts)
        rows = [
            [*(float(c) for c in pt), float(v.real), float(v.imag), float(abs(v) ** 2)]
            for pt, v in zip(pts, u)
        ]
        _write_csv(
            os.path.join(out_dir, f"eigenfunction_{j}.csv"),
            "eigfun",
            coord_header + ["re", "im", "abs2"],
            rows,
        )
        print(f"state {j} eigenvalue={result.eigenvalues[j]:.17g} ipr={ipr(u):.17g}")
    return 0


def _cmd_fermi(cfg, out_dir):
    from .lattice import build_basis
    from .spectrum import fermi_level

    pair = cfg.build_pair()
    basis = build_basis(pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis)
    results, _ = _solve_all(cfg, pair, basis)
    fermi = fermi_level(
        results,
        pair,
        cfg.electrons_per_volume(pair),
        theta=cfg.fermi.theta,
    )
    payload = {
        "ef": float(fermi.ef),
        "flagged": bool(fermi.flagged),
        "diagnostics": {
            key: (float(v) if isinstance(v, float) else v)
            for key, v in fermi.diagnostics.items()
        },
    }
    with open(os.path.join(out_dir, "fermi.json"), "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    print(f"ef={fermi.ef:.17g}")
    return 0


def _cmd_scf(cfg, out_dir):
    from .ewald import e_ii
    from .realspace import write_density_dump
    from .scf import ScfConfig, scf_solve

    pair = cfg.build_pair()
    v1, v2 = cfg.build_potentials(pair)
    scf_cfg = ScfConfig(
        ec=cfg.discretization.ec,
        electrons_per_volume=cfg.electrons_per_volume(pair),
        k_list=cfg.k_vectors(pair),
        alpha=cfg.scf.alpha,
        max_iter=cfg.scf.max_iter,
        tol=cfg.scf.tol,
        theta=cfg.scf.theta,
        use_hartree=cfg.scf.hartree,
        xc=cfg.xc_functional(),
        grid_shape=tuple(cfg.scf.grid) if cfg.scf.grid else None,
        max_basis=cfg.discretization.max_basis,
    )
    ion_energy = e_ii(
        pair, cfg.system.layer1.charge, cfg.system.layer2.charge, cfg.ewald_params()
    )
    state = scf_solve(pair, v1, v2, scf_cfg, e_ii=ion_energy)
    rows = [
        [i + 1, float(res), float(ef), float(et)]
        for i, (res, ef, et) in enumerate(
            zip(state.residual_history, state.ef_history, state.energy_history)
        )
    ]
    _write_csv(
        os.path.join(out_dir, "scf_log.csv"), "scf", ["iter", "residual", "ef", "etot"], rows
    )
    if cfg.output.dump_density:
        write_density_dump(state.density, os.path.join(out_dir, "density.bin"))
    print(
        f"converged={state.converged} iterations={state.iteration} "
        f"ef={state.ef:.17g} etot={state.total_energy:.17g}"
    )
    if not state.converged:
        print(
            f"scf did not converge in {state.iteration} iterations "
            f"(residual {state.residual:.3e})",
            file=sys.stderr,
        )
        return 2
    return 0


def _cmd_ewald(cfg, out_dir):
    from .ewald import (
        interlayer_background,
        interlayer_real,
        interlayer_reciprocal,
        intralayer_ewald,
    )

    pair = cfg.build_pair()
    params = cfg.ewald_params()
    z1 = cfg.system.layer1.charge
    z2 = cfg.system.layer2.charge
    intra1 = intralayer_ewald(pair.lat1, z1, params)
    intra2 = intralayer_ewald(pair.lat2, z2, params)
    real = interlayer_real(pair, z1, z2, params)
    recip = interlayer_reciprocal(pair, z1, z2, params)
    background = interlayer_background(pair, z1, z2, params)
    total = intra1 + intra2 + real + recip + background
    _write_csv(
        os.path.join(out_dir, "ewald.csv"),
        "ewald",
        ["e_intra1", "e_intra2", "e_inter_real", "e_inter_recip", "e_ii"],
        [[intra1, intra2, real, recip, total]],
    )
    print(f"e_ii={total:.17g} (interlayer background {background:.17g} included)")
    return 0


def _cmd_supercell(cfg, out_dir):
    import numpy as np

    from .lattice import build_basis
    from .operator import assemble, eigensolve
    from .spectrum import average_dos, dos_distance, scaled_dos
    from .supercell import make_approximant, rational_approximants, supercell_dos

    pair = cfg.build_pair()
    if pair.dim != 1:
        raise ConfigError("system", "supercell comparison is implemented for chains only")
    l1 = pair.lat1.cell_volume
    l2 = pair.lat2.cell_volume
    ratio = l2 / l1
    convergents = rational_approximants(ratio, cfg.supercell.max_q)
    by_q = {}
    for p, q in convergents:
        by_q[q] = (p, q)
    if cfg.supercell.qs is not None:
        missing = [q for q in cfg.supercell.qs if q not in by_q]
        if missing:
            raise ConfigError(
                "supercell.qs",
                f"denominators {missing} are not convergents of the length ratio "
                f"(available: {sorted(by_q)})",
            )
        selected = [by_q[q] for q in cfg.supercell.qs]
    else:
        selected = [by_q[q] for q in sorted(by_q)]

    window = cfg.output.window if cfg.output.window else (0.0, 20.0)
    sigma = cfg.output.sigma
    n_points = cfg.output.n_points

    ref_ec = cfg.supercell.reference_ec
    ref_basis = build_basis(pair, ref_ec, max_size=cfg.discretization.max_basis)
    v1r, v2r = cfg.build_potentials(pair, ec=ref_ec)
    b1 = pair.lat1.reciprocal_basis
    nk = cfg.supercell.reference_kpoints
    curves = []
    for i in range(nk):
        k = b1 @ np.array([i / nk])
        H = assemble(ref_basis, v1r, v2r, k=k)
        r = eigensolve(H, eigenvalues_only=True)
        curves.append(scaled_dos(r, pair=pair, sigma=sigma, window=window, n_points=n_points))
    reference = average_dos(curves)

    sc_ec = cfg.supercell.ec if cfg.supercell.ec else cfg.discretization.ec
    v1 = cfg.build_potentials(pair, ec=sc_ec)[0]
    v2_builder = cfg.v2_builder(ec=sc_ec)
    rows = []
    for p, q in selected:
        approx = make_approximant(p, q, l1, l2)
        curve = supercell_dos(
            pair.lat1,
            approx,
            v1,
            v2_builder,
            sc_ec,
            k_grid=cfg.supercell.k_grid,
            sigma=sigma,
            window=window,
            n_points=n_points,
            max_basis=cfg.discretization.max_basis,
        )
        dist = dos_distance(curve, reference)
        rows.append([q, approx.l2_approx, float(dist)])
        print(f"q={q} L2'={approx.l2_approx:.17g} dos_distance={dist:.17g}")
    _write_csv(
        os.path.join(out_dir, "supercell_compare.csv"),
        "supercell-compare",
        ["q", "L2_approx", "dos_distance"],
        rows,
    )
    return 0


def _cmd_converge(cfg, out_dir):
    from .lattice import build_basis
    from .spectrum import average_dos, dos_distance

    if cfg.converge.window is None:
        raise ConfigError(
            "converge.window", "a fixed [lo, hi] window is required for comparable curves"
        )
    pair = cfg.build_pair()
    cfg.output.window = cfg.converge.window
    rows = []
    if cfg.converge.mode == "ec":
        curves = []
        for ec in cfg.converge.ec_list:
            cfg.discretization.ec = ec
            basis = build_basis(pair, ec, max_size=cfg.discretization.max_basis)
            results, _ = _solve_all(cfg, pair, basis)
            curves.append(average_dos(_dos_curves(cfg, results, pair)))
        for (ec_hi, a, b) in zip(cfg.converge.ec_list[1:], curves[1:], curves[:-1]):
            rows.append(["ec", float(ec_hi), float(dos_distance(a, b))])
    else:
        basis = build_basis(
            pair, cfg.discretization.ec, max_size=cfg.discretization.max_basis
        )
        curves = []
        for count in cfg.converge.k_counts:
            cfg.discretization.kpoints = count
            cfg.discretization.k_list = None
            results, _ = _solve_all(cfg, pair, basis)
            curves.append(average_dos(_dos_curves(cfg, results, pair)))
        for (count, a, b) in zip(cfg.converge.k_counts[1:], curves[1:], curves[:-1]):
            rows.append(["kpoints", float(count), float(dos_distance(a, b))])
    _write_csv(
        os.path.join(out_dir, "converge.csv"),
        "converge",
        ["param", "value", "dos_distance"],
        rows,
    )
    return 0


_DRIVERS = {
    "basis": _cmd_basis,
    "solve": _cmd_solve,
    "dos": _cmd_dos,
    "eigfun": _cmd_eigfun,
    "fermi": _cmd_fermi,
    "scf": _cmd_scf,
    "ewald": _cmd_ewald,
    "supercell-compare": _cmd_supercell,
    "converge": _cmd_converge,
}


def run(command, cfg, out_dir):
    """Dispatch one subcommand on a validated config; returns the exit code."""
    os.makedirs(out_dir, exist_ok=True)
    return _DRIVERS[command](cfg, out_dir)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _configure_threads(args.threads)
        from .config import load_config

        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        return run(args.command, cfg, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        BasisSizeError,
        ConvergenceError,
        ValidationError,
        CommensurateError,
        SingularConfigurationError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

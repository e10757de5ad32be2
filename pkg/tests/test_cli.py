"""End-to-end tests of the command-line interface.

Each test drives ``main(argv)`` in process, pointing --out at a temp
directory, and inspects exit codes, artifacts, and printed summaries.
"""

import json
import math
import os

import numpy as np
import pytest

from incommpw import cli
from incommpw.lattice import IncommensuratePair, Lattice, build_basis


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    """Split an artifact into (comment lines, header, data rows as strings)."""
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return comments, body[0].split(","), [ln.split(",") for ln in body[1:]]


def body_bytes(path):
    return b"\n".join(
        ln for ln in path.read_bytes().splitlines() if not ln.startswith(b"#")
    )


def test_basis_artifact_matches_library(tmp_path, capsys):
    cfg = write_config(tmp_path, "[discretization]\nec = 100.0\n")
    out = tmp_path / "art"
    assert cli.main(["basis", "--config", cfg, "--out", str(out)]) == 0
    comments, header, rows = read_csv(out / "basis.csv")
    assert comments[0].startswith("# incommpw basis ")
    assert header == ["m1", "n1", "g1"]
    pair = IncommensuratePair(Lattice.chain(1.0), Lattice.chain(math.pi / 2.0))
    basis = build_basis(pair, 100.0)
    assert len(rows) == len(basis)
    got_m = np.array([int(r[0]) for r in rows])
    got_g = np.array([float(r[2]) for r in rows])
    np.testing.assert_array_equal(got_m, basis.m[:, 0])
    np.testing.assert_array_equal(got_g, basis.G[:, 0])
    assert f"N_c={len(basis)}" in capsys.readouterr().out


def test_solve_writes_exact_eigenvalues(tmp_path):
    from incommpw.operator import assemble, eigensolve
    from incommpw.potential import screened_coulomb

    cfg = write_config(tmp_path, "[discretization]\nec = 100.0\n")
    out = tmp_path / "art"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    _, header, rows = read_csv(out / "eigenvalues.csv")
    assert header == ["index", "eigenvalue"]
    got = np.array([float(r[1]) for r in rows])

    pair = IncommensuratePair(Lattice.chain(1.0), Lattice.chain(math.pi / 2.0))
    basis = build_basis(pair, 100.0)
    v1 = screened_coulomb(1.0, 1.0, pair.lat1, 400.0)
    v2 = screened_coulomb(1.0, 1.0, pair.lat2, 400.0)
    H = assemble(basis, v1, v2, k=np.zeros(1))
    want = eigensolve(H, eigenvalues_only=True).eigenvalues
    # 17 significant digits round-trip doubles exactly.
    np.testing.assert_array_equal(got, want)


def test_solve_multi_k_and_count(tmp_path):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 100.0\n[output]\ncount = 5\ndump_matrix = true\n",
    )
    out = tmp_path / "art"
    assert cli.main(["solve", "--config", cfg, "--out", str(out), "--kpoints", "2"]) == 0
    _, header, rows = read_csv(out / "eigenvalues.csv")
    assert header == ["k_index", "index", "eigenvalue"]
    assert len(rows) == 10
    assert {r[0] for r in rows} == {"0", "1"}
    assert (out / "hamiltonian.bin").exists()
    from incommpw.operator import read_matrix

    data, dim = read_matrix(out / "hamiltonian.bin")
    assert dim == 1
    assert data.shape[0] == data.shape[1]


def test_dos_rerun_bodies_byte_identical(tmp_path):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 80.0\nkpoints = 2\n[output]\nwindow = [0.0, 12.0]\n",
    )
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert cli.main(["dos", "--config", cfg, "--out", str(out1)]) == 0
    assert cli.main(["dos", "--config", cfg, "--out", str(out2)]) == 0
    assert body_bytes(out1 / "dos.csv") == body_bytes(out2 / "dos.csv")
    comments, header, rows = read_csv(out1 / "dos.csv")
    assert comments[0].startswith("# incommpw dos ")
    assert header == ["energy", "dos"]
    vals = np.array([[float(c) for c in r] for r in rows])
    assert np.all(vals[:, 1] >= 0)
    assert len(rows) == 2000


def test_eigfun_artifacts(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 80.0\n[output]\n"
        "states = [0, 2]\ngrid_points = 16\nextent = 4.0\n",
    )
    out = tmp_path / "art"
    assert cli.main(["eigfun", "--config", cfg, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "state 0" in printed and "state 2" in printed
    for j in (0, 2):
        _, header, rows = read_csv(out / f"eigenfunction_{j}.csv")
        assert header == ["x", "re", "im", "abs2"]
        assert len(rows) == 16
        for r in rows:
            re, im, abs2 = float(r[1]), float(r[2]), float(r[3])
            np.testing.assert_allclose(abs2, re * re + im * im, rtol=1e-12, atol=1e-300)
    xs = [float(r[0]) for r in read_csv(out / "eigenfunction_0.csv")[2]]
    np.testing.assert_allclose(xs, np.arange(16) * 4.0 / 16.0, rtol=1e-15)


def test_fermi_json(tmp_path, capsys):
    cfg = write_config(tmp_path, "[discretization]\nec = 80.0\nkpoints = 2\n")
    out = tmp_path / "art"
    assert cli.main(["fermi", "--config", cfg, "--out", str(out)]) == 0
    payload = json.loads((out / "fermi.json").read_text())
    assert set(payload) == {"ef", "flagged", "diagnostics"}
    assert isinstance(payload["ef"], float)
    assert isinstance(payload["flagged"], bool)
    assert f"ef={payload['ef']:.17g}" in capsys.readouterr().out


def test_scf_log_and_density_dump(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 60.0\n[scf]\ntol = 1e-7\n[output]\ndump_density = true\n",
    )
    out = tmp_path / "art"
    assert cli.main(["scf", "--config", cfg, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "converged=True" in printed
    _, header, rows = read_csv(out / "scf_log.csv")
    assert header == ["iter", "residual", "ef", "etot"]
    assert int(rows[0][0]) == 1
    assert float(rows[-1][1]) <= 1e-7
    assert (out / "density.bin").exists()
    from incommpw.realspace import read_density_dump

    values = read_density_dump(out / "density.bin")
    assert values.ndim == 2
    assert np.all(values >= 0)


def test_scf_nonconvergence_exit_2(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "[discretization]\nec = 60.0\n[scf]\nmax_iter = 2\n"
    )
    out = tmp_path / "art"
    assert cli.main(["scf", "--config", cfg, "--out", str(out)]) == 2
    captured = capsys.readouterr()
    assert "converged=False" in captured.out
    assert "did not converge" in captured.err
    assert (out / "scf_log.csv").exists()


def test_ewald_csv_documents_background(tmp_path, capsys):
    from incommpw.ewald import EwaldParams, e_ii

    cfg = write_config(tmp_path, "")
    out = tmp_path / "art"
    assert cli.main(["ewald", "--config", cfg, "--out", str(out)]) == 0
    _, header, rows = read_csv(out / "ewald.csv")
    assert header == ["e_intra1", "e_intra2", "e_inter_real", "e_inter_recip", "e_ii"]
    vals = [float(c) for c in rows[0]]
    pair = IncommensuratePair(Lattice.chain(1.0), Lattice.chain(math.pi / 2.0))
    want = e_ii(pair, 1.0, 1.0, EwaldParams())
    np.testing.assert_allclose(vals[4], want, rtol=1e-12)
    # e_ii includes the neutralizing background, which has no column of its
    # own, so the total deliberately differs from the row sum.
    assert abs(vals[4] - sum(vals[:4])) > 1e-6
    assert "background" in capsys.readouterr().out


def test_supercell_compare(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 80.0\n"
        "[supercell]\nqs = [2, 7]\nk_grid = 4\nreference_ec = 200.0\n"
        "reference_kpoints = 2\n[output]\nwindow = [0.0, 10.0]\nn_points = 400\n",
    )
    out = tmp_path / "art"
    assert cli.main(["supercell-compare", "--config", cfg, "--out", str(out)]) == 0
    _, header, rows = read_csv(out / "supercell_compare.csv")
    assert header == ["q", "L2_approx", "dos_distance"]
    assert [int(r[0]) for r in rows] == [2, 7]
    dists = [float(r[2]) for r in rows]
    assert all(np.isfinite(d) and d >= 0 for d in dists)
    printed = capsys.readouterr().out
    assert "q=2" in printed and "q=7" in printed


def test_supercell_rejects_non_convergent_q(tmp_path, capsys):
    cfg = write_config(tmp_path, "[supercell]\nqs = [3]\n")
    assert cli.main(["supercell-compare", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "supercell.qs" in capsys.readouterr().err


def test_converge_ec_mode(tmp_path):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 60.0\n"
        "[converge]\nec_list = [60.0, 100.0, 150.0]\nwindow = [0.0, 10.0]\n",
    )
    out = tmp_path / "art"
    assert cli.main(["converge", "--config", cfg, "--out", str(out)]) == 0
    _, header, rows = read_csv(out / "converge.csv")
    assert header == ["param", "value", "dos_distance"]
    assert [r[0] for r in rows] == ["ec", "ec"]
    assert [float(r[1]) for r in rows] == [100.0, 150.0]
    assert all(float(r[2]) > 0 for r in rows)


def test_converge_kpoints_mode(tmp_path):
    cfg = write_config(
        tmp_path,
        "[discretization]\nec = 60.0\n"
        "[converge]\nmode = \"kpoints\"\nk_counts = [1, 2]\nwindow = [0.0, 10.0]\n",
    )
    out = tmp_path / "art"
    assert cli.main(["converge", "--config", cfg, "--out", str(out)]) == 0
    _, _, rows = read_csv(out / "converge.csv")
    assert [r[0] for r in rows] == ["kpoints"]


def test_converge_requires_window(tmp_path, capsys):
    cfg = write_config(tmp_path, "[converge]\nec_list = [60.0, 80.0]\n")
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "converge.window" in capsys.readouterr().err


def test_bad_flag_values_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "")
    assert cli.main(["solve", "--config", cfg, "--ec", "-5"]) == 1
    assert "Ec" in capsys.readouterr().err
    assert cli.main(["solve", "--config", cfg, "--kpoints", "0"]) == 1
    assert "discretization.kpoints" in capsys.readouterr().err
    assert cli.main(["dos", "--config", cfg, "--sigma", "-1"]) == 1
    assert "output.sigma" in capsys.readouterr().err


def test_unknown_config_key_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "[bogus]\nx = 1\n")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "bogus" in capsys.readouterr().err


def test_missing_config_file_exit_1(tmp_path, capsys):
    assert cli.main(["basis", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "file not found" in capsys.readouterr().err


def test_commensurate_system_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path, "[system.layer2]\nL = 2.0\n")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "system" in capsys.readouterr().err


def test_basis_cap_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, "[discretization]\nec = 500.0\nmax_basis = 2\n")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "N_c" in capsys.readouterr().err


def test_threads_flag_sets_blas_env(tmp_path, monkeypatch):
    for var in cli._THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    monkeypatch.delenv("INCOMM_PW_THREADS", raising=False)
    cfg = write_config(tmp_path, "[discretization]\nec = 60.0\n")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path), "--threads", "2"]) == 0
    for var in cli._THREAD_VARS:
        assert os.environ[var] == "2"


def test_threads_env_variable(tmp_path, monkeypatch):
    for var in cli._THREAD_VARS:
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("INCOMM_PW_THREADS", "3")
    cfg = write_config(tmp_path, "[discretization]\nec = 60.0\n")
    assert cli.main(["basis", "--config", cfg, "--out", str(tmp_path)]) == 0
    for var in cli._THREAD_VARS:
        assert os.environ[var] == "3"


def test_threads_invalid_exit_1(tmp_path, monkeypatch, capsys):
    cfg = write_config(tmp_path, "")
    assert cli.main(["basis", "--config", cfg, "--threads", "0"]) == 1
    assert "thread count" in capsys.readouterr().err
    monkeypatch.setenv("INCOMM_PW_THREADS", "many")
    assert cli.main(["basis", "--config", cfg]) == 1
    assert "INCOMM_PW_THREADS" in capsys.readouterr().err

"""Integral file parsing, active spaces, rotations, frozen-space reduction."""

import numpy as np
import pytest

from qlrlab.chem_io import (
    ActiveSpace,
    active_hamiltonian,
    build_hamiltonian_poly,
    dipole_poly,
    kappa_matrix,
    kappa_pairs,
    parse_dipole,
    parse_fcidump,
    reduce_to_active,
    rotate_integrals,
    write_dipole,
    write_fcidump,
)
from qlrlab.pauli_core import FermionPolynomial, e_pq
from oracles import (
    apply_ops_to_det,
    cas_dets,
    casci_energies,
    enumerate_dets,
    fci,
    sector_operator,
)


# -- FCIDUMP parsing ---------------------------------------------------------


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_fcidump_two_electron_symmetry(tmp_path):
    path = _write(
        tmp_path,
        "mini.fcidump",
        "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1 1 1\n",
    )
    system = parse_fcidump(path)
    assert system.n_orb == 2 and system.n_elec == 2
    assert system.g[0, 0, 0, 0] == 0.5
    assert np.count_nonzero(system.g) == 1


def test_parse_fcidump_core_and_one_electron(tmp_path):
    path = _write(
        tmp_path,
        "mini.fcidump",
        "&FCI NORB=2,NELEC=2,\n&END\n1.2 0 0 0 0\n-1.1 2 1 0 0\n",
    )
    system = parse_fcidump(path)
    assert system.e_core == 1.2
    assert system.h[1, 0] == -1.1
    assert system.h[0, 1] == -1.1


def test_parse_fcidump_eightfold_expansion(tmp_path):
    path = _write(
        tmp_path,
        "mini.fcidump",
        "&FCI NORB=2,NELEC=2,\n&END\n0.25 2 1 1 1\n",
    )
    g = parse_fcidump(path).g
    for idx in [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]:
        assert g[idx] == 0.25


def test_parse_fcidump_malformed_header(tmp_path):
    path = _write(tmp_path, "bad.fcidump", "NORB=2\n0.5 1 1 1 1\n")
    with pytest.raises(ValueError, match="namelist"):
        parse_fcidump(path)


def test_parse_fcidump_index_out_of_range(tmp_path):
    path = _write(tmp_path, "bad.fcidump", "&FCI NORB=2,NELEC=2,\n&END\n0.5 3 1 1 1\n")
    with pytest.raises(ValueError, match="out of range"):
        parse_fcidump(path)


def test_parse_fcidump_conflicting_duplicates(tmp_path):
    path = _write(
        tmp_path,
        "bad.fcidump",
        "&FCI NORB=2,NELEC=2,\n&END\n0.5 1 1 1 1\n0.6 1 1 1 1\n",
    )
    with pytest.raises(ValueError, match="conflicting"):
        parse_fcidump(path)


def test_fcidump_round_trip(tmp_path, h2_system):
    path = tmp_path / "h2.fcidump"
    write_fcidump(h2_system, path)
    back = parse_fcidump(path)
    assert np.array_equal(back.h, h2_system.h)
    assert np.array_equal(back.g, h2_system.g)
    assert back.e_core == h2_system.e_core


# -- dipole sidecars ---------------------------------------------------------


def test_parse_dipole_symmetric_entry(tmp_path):
    _write(tmp_path, "mol.dx", "0.3 1 2 0 0\n")
    _write(tmp_path, "mol.dy", "")
    _write(tmp_path, "mol.dz", "")
    dipole = parse_dipole(tmp_path / "mol", 2)
    assert dipole["x"][0, 1] == 0.3
    assert dipole["x"][1, 0] == 0.3
    assert not dipole["y"].any()


def test_parse_dipole_missing_file_is_zero(tmp_path):
    dipole = parse_dipole(tmp_path / "absent", 3)
    assert set(dipole) == {"x", "y", "z"}
    assert not any(mat.any() for mat in dipole.values())


def test_parse_dipole_rejects_two_electron_lines(tmp_path):
    _write(tmp_path, "mol.dx", "0.3 1 2 1 2\n")
    with pytest.raises(ValueError, match="one-electron"):
        parse_dipole(tmp_path / "mol", 2)


def test_dipole_round_trip(tmp_path, h2_system):
    write_dipole(h2_system, tmp_path / "h2")
    back = parse_dipole(tmp_path / "h2", h2_system.n_orb)
    for axis in "xyz":
        assert np.array_equal(back[axis], h2_system.dipole[axis])


# -- active spaces and rotation parameters -----------------------------------


def test_active_space_partitions():
    space = ActiveSpace(6, 6, (2, 3), 2)
    assert space.inactive == (0, 1)
    assert space.virtual == (4, 5)
    assert space.n_active_orb == 2


def test_active_space_validation():
    with pytest.raises(ValueError):
        ActiveSpace(4, 3, (0, 1), 2)
    with pytest.raises(ValueError):
        ActiveSpace(4, 4, (0, 0), 2)
    with pytest.raises(ValueError):
        ActiveSpace(4, 4, (0, 5), 2)
    with pytest.raises(ValueError):
        ActiveSpace(4, 4, (1,), 4)


def test_kappa_pairs_classes():
    space = ActiveSpace(6, 6, (2, 3), 2)
    pairs = kappa_pairs(space)
    expected = [
        (2, 0), (3, 0), (2, 1), (3, 1),
        (4, 0), (5, 0), (4, 1), (5, 1),
        (4, 2), (5, 2), (4, 3), (5, 3),
    ]
    assert pairs == expected
    assert kappa_pairs(ActiveSpace.full(2, 2)) == []


def test_kappa_matrix_antisymmetric():
    space = ActiveSpace(6, 6, (2, 3), 2)
    values = np.arange(1.0, 13.0)
    mat = kappa_matrix(space, values)
    assert np.allclose(mat, -mat.T)
    with pytest.raises(ValueError):
        kappa_matrix(space, values[:-1])


# -- integral rotation -------------------------------------------------------


def test_rotate_identity(h2_system):
    rotated = rotate_integrals(h2_system, np.zeros((2, 2)))
    assert np.allclose(rotated.h, h2_system.h)
    assert np.allclose(rotated.g, h2_system.g)


def test_rotate_rejects_symmetric_part(h2_system):
    with pytest.raises(ValueError, match="antisymmetric"):
        rotate_integrals(h2_system, np.array([[0.0, 0.1], [0.1, 0.0]]))


def test_rotate_round_trip(h2_system, seed=4):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(2, 2))
    kappa = raw - raw.T
    there = rotate_integrals(h2_system, kappa)
    back = rotate_integrals(there, -kappa)
    assert np.allclose(back.h, h2_system.h, atol=1e-10)
    assert np.allclose(back.g, h2_system.g, atol=1e-10)
    for axis in "xyz":
        assert np.allclose(back.dipole[axis], h2_system.dipole[axis], atol=1e-10)


def test_rotate_preserves_fci_spectrum(h2_system, seed=8):
    rng = np.random.default_rng(seed)
    raw = 0.3 * rng.normal(size=(2, 2))
    kappa = raw - raw.T
    rotated = rotate_integrals(h2_system, kappa)
    ref, _, _ = fci(h2_system.h, h2_system.g, h2_system.e_core, 2)
    got, _, _ = fci(rotated.h, rotated.g, rotated.e_core, 2)
    assert np.allclose(ref, got, atol=1e-10)


# -- frozen-space reduction --------------------------------------------------


def test_reduce_inactive_number_operator():
    space = ActiveSpace(4, 4, (1, 2), 2)
    scalar, active = reduce_to_active(e_pq(0, 0), space)
    assert scalar == pytest.approx(2.0)
    assert len(active) == 0


def test_reduce_virtual_number_operator():
    space = ActiveSpace(4, 4, (1, 2), 2)
    scalar, active = reduce_to_active(e_pq(3, 3), space)
    assert scalar == pytest.approx(0.0)
    assert len(active) == 0


def test_reduce_matches_full_space_expectation(h6_system, seed=13):
    """Frozen-space reduction agrees with raw determinant algebra."""
    space = ActiveSpace(6, 6, (2, 3), 2)
    rng = np.random.default_rng(seed)
    full_dets = cas_dets(6, [0, 1], [2, 3], 2)
    active_dets = enumerate_dets(2, 2, 0)
    for _ in range(6):
        poly = FermionPolynomial()
        for _ in range(3):
            p, q = rng.integers(0, 6, size=2)
            poly.add_term(
                ((2 * int(p), True), (2 * int(q), False)), float(rng.normal())
            )
            r, s, t, u = rng.integers(0, 12, size=4)
            poly.add_term(
                ((int(r), True), (int(s), True), (int(t), False), (int(u), False)),
                float(rng.normal()),
            )
        scalar, active = reduce_to_active(poly, space)
        full = sector_operator([(c, ops) for ops, c in poly.items()], full_dets)
        local = sector_operator(
            [(c, ops) for ops, c in active.items()], active_dets
        )
        embedded = scalar * np.eye(len(active_dets)) + local
        assert np.allclose(full, embedded, atol=1e-10)


def test_active_hamiltonian_full_space(h2_system):
    scalar, active = active_hamiltonian(
        h2_system, ActiveSpace.full(h2_system.n_orb, h2_system.n_elec)
    )
    assert scalar == pytest.approx(h2_system.e_core)
    full = build_hamiltonian_poly(h2_system)
    dets = enumerate_dets(2, 2, 0)
    lhs = sector_operator([(c, ops) for ops, c in active.items()], dets)
    rhs = sector_operator([(c, ops) for ops, c in full.items()], dets)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_active_hamiltonian_casci_oracle(h6_system):
    """Active Hamiltonian spectrum equals CAS-restricted full diagonalization."""
    space = ActiveSpace(6, 6, (2, 3), 2)
    scalar, active = active_hamiltonian(h6_system, space)
    dets = enumerate_dets(2, 2, 0)
    mat = sector_operator([(c, ops) for ops, c in active.items()], dets)
    local = np.linalg.eigvalsh(mat.real + scalar.real * np.eye(len(dets)))
    reference = casci_energies(
        h6_system.h, h6_system.g, h6_system.e_core, [0, 1], [2, 3], 2
    )
    assert np.allclose(local, reference, atol=1e-10)


def test_inactive_energy_formula(h6_system):
    """Reduction scalar equals the closed-shell inactive energy expression."""
    space = ActiveSpace(6, 6, (2, 3), 2)
    scalar, _ = active_hamiltonian(h6_system, space)
    h, g = h6_system.h, h6_system.g
    inactive = [0, 1]
    expected = h6_system.e_core
    expected += sum(2 * h[i, i] for i in inactive)
    expected += sum(
        2 * g[i, i, j, j] - g[i, j, j, i] for i in inactive for j in inactive
    )
    assert scalar.real == pytest.approx(expected, abs=1e-10)


def test_dipole_reduction_inactive_trace(h6_system):
    space = ActiveSpace(6, 6, (2, 3), 2)
    scalar, _ = reduce_to_active(dipole_poly(h6_system, "z"), space)
    expected = 2 * sum(h6_system.dipole["z"][i, i] for i in (0, 1))
    assert scalar.real == pytest.approx(expected, abs=1e-12)

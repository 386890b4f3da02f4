"""Shared fixtures: parsed integral files and converged ground states."""

import dataclasses
from pathlib import Path

import pytest

from qlrlab.chem_io import ActiveSpace, parse_dipole, parse_fcidump
from qlrlab.sim_engine import oo_vqe

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def h2_system():
    system = parse_fcidump(FIXTURES / "h2.fcidump")
    return dataclasses.replace(
        system, dipole=parse_dipole(FIXTURES / "h2", system.n_orb)
    )


@pytest.fixture(scope="session")
def h2_space(h2_system):
    return ActiveSpace.full(h2_system.n_orb, h2_system.n_elec)


@pytest.fixture(scope="session")
def h2_ground(h2_system, h2_space):
    return oo_vqe(h2_system, h2_space)


@pytest.fixture(scope="session")
def h6_system():
    system = parse_fcidump(FIXTURES / "h6.fcidump")
    return dataclasses.replace(
        system, dipole=parse_dipole(FIXTURES / "h6", system.n_orb)
    )


@pytest.fixture(scope="session")
def h6_space(h6_system):
    return ActiveSpace(h6_system.n_orb, h6_system.n_elec, (2, 3), 2)


@pytest.fixture(scope="session")
def h6_ground(h6_system, h6_space):
    return oo_vqe(h6_system, h6_space)

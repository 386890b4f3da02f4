"""Generate the hydrogen-chain integral fixtures committed under tests/fixtures.

Each fixture is an FCIDUMP file plus .dx/.dy/.dz dipole sidecars in the
molecular-orbital basis of a restricted Hartree-Fock solution. The integrals
come from a self-contained s-type Gaussian engine (three primitives per
hydrogen, standard minimal-basis 1s contraction), so the fixtures carry no
external dependency and regenerate byte for byte:

    python3 tools/make_fixtures.py

Fixtures:
    h2  two H atoms at 1.4 bohr separation (2 orbitals, 2 electrons)
    h6  six H atoms in a line, 1.8 bohr spacing (6 orbitals, 6 electrons)
"""

from __future__ import annotations

import sys
from math import erf, pi
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qlrlab.chem_io import MolecularSystem, write_dipole, write_fcidump

# Minimal-basis 1s contraction for hydrogen: exponents and coefficients.
H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
H_COEFFS = np.array([0.15432897, 0.53532814, 0.44463454])


def _norm(alpha: float) -> float:
    return (2.0 * alpha / pi) ** 0.75


def _boys0(t: float) -> float:
    if t < 1e-12:
        return 1.0 - t / 3.0
    return 0.5 * (pi / t) ** 0.5 * erf(t**0.5)


def integrals(centers: np.ndarray, charges: np.ndarray):
    """All one- and two-electron integrals over one s contraction per atom.

    Returns (S, T, V, eri, dipole) in the atomic-orbital basis, with eri in
    chemists' notation (ab|cd) and dipole a dict of Cartesian matrices.
    """
    n = len(centers)
    prims = [
        [(a, c * _norm(a)) for a, c in zip(H_EXPONENTS, H_COEFFS)] for _ in range(n)
    ]
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    dip = {axis: np.zeros((n, n)) for axis in "xyz"}
    for A in range(n):
        for B in range(n):
            rAB2 = float(np.dot(centers[A] - centers[B], centers[A] - centers[B]))
            for a, ca in prims[A]:
                for b, cb in prims[B]:
                    p = a + b
                    mu = a * b / p
                    K = np.exp(-mu * rAB2)
                    P = (a * centers[A] + b * centers[B]) / p
                    s = (pi / p) ** 1.5 * K
                    S[A, B] += ca * cb * s
                    T[A, B] += ca * cb * mu * (3.0 - 2.0 * mu * rAB2) * s
                    for w, axis in enumerate("xyz"):
                        dip[axis][A, B] += ca * cb * P[w] * s
                    for C in range(n):
                        rPC2 = float(np.dot(P - centers[C], P - centers[C]))
                        V[A, B] -= (
                            ca
                            * cb
                            * charges[C]
                            * (2.0 * pi / p)
                            * K
                            * _boys0(p * rPC2)
                        )
    eri = np.zeros((n, n, n, n))
    for A in range(n):
        for B in range(n):
            rAB2 = float(np.dot(centers[A] - centers[B], centers[A] - centers[B]))
            for C in range(n):
                for D in range(n):
                    rCD2 = float(
                        np.dot(centers[C] - centers[D], centers[C] - centers[D])
                    )
                    for a, ca in prims[A]:
                        for b, cb in prims[B]:
                            p = a + b
                            P = (a * centers[A] + b * centers[B]) / p
                            Kab = np.exp(-a * b / p * rAB2)
                            for c, cc in prims[C]:
                                for d, cd in prims[D]:
                                    q = c + d
                                    Q = (c * centers[C] + d * centers[D]) / q
                                    Kcd = np.exp(-c * d / q * rCD2)
                                    rPQ2 = float(np.dot(P - Q, P - Q))
                                    eri[A, B, C, D] += (
                                        ca
                                        * cb
                                        * cc
                                        * cd
                                        * 2.0
                                        * pi**2.5
                                        / (p * q * (p + q) ** 0.5)
                                        * Kab
                                        * Kcd
                                        * _boys0(p * q / (p + q) * rPQ2)
                                    )
    return S, T, V, eri, dip


def rhf(S, hcore, eri, n_elec, e_nuc, max_iter=200, tol=1e-12):
    """Closed-shell Hartree-Fock with DIIS; returns (energy, C)."""
    n_occ = n_elec // 2
    evals, evecs = np.linalg.eigh(S)
    X = evecs @ np.diag(evals**-0.5) @ evecs.T
    D = np.zeros_like(S)
    old_e = 0.0
    focks: list[np.ndarray] = []
    errs: list[np.ndarray] = []
    for _ in range(max_iter):
        G = np.einsum("ls,mnsl->mn", D, eri) - 0.5 * np.einsum("ls,mlsn->mn", D, eri)
        F = hcore + G
        err = F @ D @ S - S @ D @ F
        focks.append(F)
        errs.append(err)
        if len(focks) > 8:
            focks.pop(0)
            errs.pop(0)
        if len(focks) > 1:
            m = len(focks)
            Bm = -np.ones((m + 1, m + 1))
            Bm[m, m] = 0.0
            for i in range(m):
                for j in range(m):
                    Bm[i, j] = np.sum(errs[i] * errs[j])
            rhs = np.zeros(m + 1)
            rhs[m] = -1.0
            try:
                w = np.linalg.solve(Bm, rhs)[:m]
                F = sum(wi * fi for wi, fi in zip(w, focks))
            except np.linalg.LinAlgError:
                pass
        Fp = X.T @ F @ X
        _, Cp = np.linalg.eigh(Fp)
        C = X @ Cp
        D = 2.0 * C[:, :n_occ] @ C[:, :n_occ].T
        e = 0.5 * np.sum(D * (hcore + hcore + G)) + e_nuc
        if abs(e - old_e) < tol and np.max(np.abs(err)) < 1e-8:
            return e, C
        old_e = e
    raise RuntimeError("Hartree-Fock did not converge")


def chain_system(n_atoms: int, spacing: float) -> tuple[MolecularSystem, float]:
    """Build the MO-basis system for a hydrogen chain along z."""
    centers = np.array([[0.0, 0.0, k * spacing] for k in range(n_atoms)])
    charges = np.ones(n_atoms)
    e_nuc = sum(
        charges[a] * charges[b] / np.linalg.norm(centers[a] - centers[b])
        for a in range(n_atoms)
        for b in range(a + 1, n_atoms)
    )
    S, T, V, eri, dip = integrals(centers, charges)
    hcore = T + V
    e_hf, C = rhf(S, hcore, eri, n_atoms, e_nuc)
    h_mo = C.T @ hcore @ C
    g_mo = np.einsum("ma,nb,lc,sd,mnls->abcd", C, C, C, C, eri, optimize=True)
    dip_mo = {axis: C.T @ dip[axis] @ C for axis in "xyz"}
    system = MolecularSystem(
        n_orb=n_atoms,
        n_elec=n_atoms,
        e_core=float(e_nuc),
        h=h_mo,
        g=g_mo,
        dipole=dip_mo,
    )
    return system, e_hf


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    for name, n_atoms, spacing in (("h2", 2, 1.4), ("h6", 6, 1.8)):
        system, e_hf = chain_system(n_atoms, spacing)
        write_fcidump(system, out / f"{name}.fcidump", tol=1e-14)
        write_dipole(system, out / name, tol=1e-14)
        print(f"{name}: E_HF = {e_hf:.10f} Ha -> {out / (name + '.fcidump')}")


if __name__ == "__main__":
    main()

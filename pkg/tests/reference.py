"""Brute-force reference Hamiltonian, independent of the package internals.

Builds matrix elements directly from the second-quantized operator string

    H = e_core + sum_pq h_pq sum_sigma  a+_{p sigma} a_{q sigma}
        + 1/2 sum_pqrs (pq|rs) sum_{sigma tau} a+_{p sigma} a+_{r tau} a_{s tau} a_{q sigma}

by applying the ladder operators to occupation bitmasks with the textbook
sign rule (-1)^(number of occupied spin-orbitals below the one acted on).
No Slater-Condon shortcuts, no excitation tables, no phase conventions
shared with the package: agreement with sbdiag is evidence, not tautology.

Spin-orbital packing matches the package layout: alpha orbitals are bits
0..norb-1, beta orbitals are bits norb..2*norb-1.
"""

from __future__ import annotations

from collections import defaultdict

import numpy as np


def _annihilate(mask: int, mu: int):
    if not (mask >> mu) & 1:
        return None
    sign = -1 if (mask & ((1 << mu) - 1)).bit_count() & 1 else 1
    return mask & ~(1 << mu), sign


def _create(mask: int, mu: int):
    if (mask >> mu) & 1:
        return None
    sign = -1 if (mask & ((1 << mu) - 1)).bit_count() & 1 else 1
    return mask | (1 << mu), sign


def hamiltonian_action(mask: int, table, norb: int) -> dict[int, float]:
    """Coefficients of H|mask> in the occupation-mask basis."""
    out: dict[int, float] = defaultdict(float)
    if table.e_core != 0.0:
        out[mask] += table.e_core
    offsets = (0, norb)

    for p in range(norb):
        for q in range(norb):
            hpq = table.get_h(p, q)
            if hpq == 0.0:
                continue
            for off in offsets:
                step1 = _annihilate(mask, q + off)
                if step1 is None:
                    continue
                m1, s1 = step1
                step2 = _create(m1, p + off)
                if step2 is None:
                    continue
                m2, s2 = step2
                out[m2] += hpq * s1 * s2

    for p in range(norb):
        for q in range(norb):
            for r in range(norb):
                for s in range(norb):
                    v = table.get_eri(p, q, r, s)
                    if v == 0.0:
                        continue
                    for so in offsets:
                        for to in offsets:
                            # rightmost operator first: a_{q sigma}
                            step1 = _annihilate(mask, q + so)
                            if step1 is None:
                                continue
                            m1, s1 = step1
                            step2 = _annihilate(m1, s + to)
                            if step2 is None:
                                continue
                            m2, s2 = step2
                            step3 = _create(m2, r + to)
                            if step3 is None:
                                continue
                            m3, s3 = step3
                            step4 = _create(m3, p + so)
                            if step4 is None:
                                continue
                            m4, s4 = step4
                            out[m4] += 0.5 * v * s1 * s2 * s3 * s4

    return dict(out)


def reference_dense(basis, table) -> np.ndarray:
    """Dense Hamiltonian over the selected basis, via operator algebra only."""
    norb = basis.norb
    n = basis.dimension
    mat = np.zeros((n, n))
    index = {}
    for i in range(n):
        det = basis.det_at(i)
        index[det.alpha | (det.beta << norb)] = i
    for j in range(n):
        det = basis.det_at(j)
        for mask, coeff in hamiltonian_action(det.alpha | (det.beta << norb), table, norb).items():
            i = index.get(mask)
            if i is not None:  # components outside the basis are projected out
                mat[i, j] += coeff
    return mat


def reference_eigh(mat: np.ndarray):
    """Library eigensolver, as an independent check on the in-repo Jacobi."""
    return np.linalg.eigh((mat + mat.T) / 2)

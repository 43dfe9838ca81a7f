"""Dense brute-force ground truth for verification.

Assembles the full Hamiltonian matrix by evaluating every (i, j) pair with
the Slater-Condon dispatcher -- deliberately sharing none of the
excitation-table or caching machinery of the production path -- and solves
it with the same Jacobi scheme the Davidson driver uses for its projected
problems, instantiated here at full size.  Capped to small dimensions: this
module exists to check answers, not to produce them.
"""

from __future__ import annotations

import numpy as np

from .basis import SelectedBasis
from .davidson import jacobi_eigh
from .integrals import IntegralTable
from .matelem import hij

__all__ = ["DEFAULT_CAP", "assemble_dense", "dense_eigensolve"]

DEFAULT_CAP = 4096


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise ValueError(
            f"dense assembly refused: dimension {n} exceeds cap {cap}; "
            "shrink the instance (fewer sampled strings or orbitals) or pass "
            "a larger cap explicitly"
        )


def assemble_dense(
    basis: SelectedBasis, table: IntegralTable, cap: int = DEFAULT_CAP
) -> np.ndarray:
    """M[i, j] = <det_i|H|det_j> for every pair, with no shortcuts."""
    n = basis.dimension
    _check_cap(n, cap)
    dets = [basis.det_at(i) for i in range(n)]
    mat = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            mat[i, j] = hij(dets[i], dets[j], table)
    return mat


def dense_eigensolve(mat: np.ndarray, cap: int = DEFAULT_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum (ascending) and orthonormal eigenvector columns."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    _check_cap(mat.shape[0], cap)
    return jacobi_eigh(mat)

"""Seeded synthetic instances for verification and benchmarking.

Random tables keep spectra well-conditioned: h entries are symmetric
uniform(-1, 1), two-electron entries are 8-fold-symmetric uniform(0, 1)
scaled by 0.1.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .basis import Determinant, SelectedBasis
from .integrals import IntegralTable

__all__ = [
    "random_integrals",
    "all_strings",
    "full_product_basis",
    "random_product_basis",
    "random_explicit_basis",
]


def random_integrals(norb: int, seed: int, eri_scale: float = 0.1) -> IntegralTable:
    rng = np.random.default_rng(seed)
    table = IntegralTable(norb)
    for p in range(norb):
        for q in range(p + 1):
            table.set_h(p, q, rng.uniform(-1.0, 1.0))
    pairs = [(p, q) for p in range(norb) for q in range(p + 1)]
    for pq, (p, q) in enumerate(pairs):
        for r, s in pairs[: pq + 1]:
            table.set_eri(p, q, r, s, eri_scale * rng.uniform(0.0, 1.0))
    return table


def all_strings(norb: int, n_elec: int) -> list[int]:
    """Every n_elec-electron occupation mask over norb orbitals."""
    return [sum(1 << p for p in occ) for occ in combinations(range(norb), n_elec)]


def full_product_basis(norb: int, n_alpha: int, n_beta: int) -> SelectedBasis:
    return SelectedBasis.product(
        all_strings(norb, n_alpha), all_strings(norb, n_beta), norb, n_alpha, n_beta
    )


def random_product_basis(
    norb: int,
    n_alpha: int,
    n_beta: int,
    n_alpha_strings: int,
    n_beta_strings: int,
    seed: int,
) -> SelectedBasis:
    """Product basis over random distinct half-strings."""
    rng = np.random.default_rng(seed)
    pool_a = all_strings(norb, n_alpha)
    pool_b = all_strings(norb, n_beta)
    if n_alpha_strings > len(pool_a) or n_beta_strings > len(pool_b):
        raise ValueError(
            f"requested {n_alpha_strings}x{n_beta_strings} strings but only "
            f"{len(pool_a)}x{len(pool_b)} exist for norb={norb}"
        )
    alphas = [pool_a[i] for i in rng.choice(len(pool_a), n_alpha_strings, replace=False)]
    betas = [pool_b[i] for i in rng.choice(len(pool_b), n_beta_strings, replace=False)]
    return SelectedBasis.product(alphas, betas, norb, n_alpha, n_beta)


def random_explicit_basis(
    norb: int, n_alpha: int, n_beta: int, n_dets: int, seed: int
) -> SelectedBasis:
    """Explicit basis of random distinct determinants."""
    rng = np.random.default_rng(seed)
    pool_a = all_strings(norb, n_alpha)
    pool_b = all_strings(norb, n_beta)
    total = len(pool_a) * len(pool_b)
    if n_dets > total:
        raise ValueError(f"requested {n_dets} determinants but only {total} exist")
    picks = rng.choice(total, n_dets, replace=False)
    dets = [Determinant(pool_a[k // len(pool_b)], pool_b[k % len(pool_b)]) for k in picks]
    return SelectedBasis.explicit(dets, norb, n_alpha, n_beta)

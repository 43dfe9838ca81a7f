from __future__ import annotations

import pytest

from sbdiag.basis import SelectedBasis
from sbdiag.integrals import IntegralTable

HUBBARD_T = 1.0
HUBBARD_U = 4.0


def hubbard_dimer_table(t: float = HUBBARD_T, u: float = HUBBARD_U) -> IntegralTable:
    """Two-site Hubbard model: hopping -t, on-site repulsion U."""
    table = IntegralTable(2)
    table.set_h(0, 1, -t)
    table.set_eri(0, 0, 0, 0, u)
    table.set_eri(1, 1, 1, 1, u)
    return table


def hubbard_dimer_basis() -> SelectedBasis:
    """Product basis {site0, site1} x {site0, site1}, one electron per spin."""
    return SelectedBasis.product([0b01, 0b10], [0b01, 0b10], norb=2, n_alpha_elec=1, n_beta_elec=1)


@pytest.fixture
def hubbard_table() -> IntegralTable:
    return hubbard_dimer_table()


@pytest.fixture
def hubbard_basis() -> SelectedBasis:
    return hubbard_dimer_basis()

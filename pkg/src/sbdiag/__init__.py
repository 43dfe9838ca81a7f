"""Selected-basis diagonalization.

Computes the lowest eigenpairs of a second-quantized electronic Hamiltonian
restricted to a subspace spanned by sampled determinants.  The Hamiltonian is
never materialized: matrix-vector products are evaluated on the fly from
one- and two-electron integrals via Slater-Condon rules, organized as
independent excitation tasks so they parallelize cleanly.
"""

from __future__ import annotations

import os

# The portable threading layer avoids hard TBB/OpenMP version requirements.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from .apply import HamiltonianApplier, apply_H  # noqa: E402
from .basis import (  # noqa: E402
    Determinant,
    IngestReport,
    SelectedBasis,
    ingest_samples,
)
from .davidson import DavidsonOptions, DavidsonResult, davidson_solve  # noqa: E402
from .integrals import IntegralTable, parse_fcidump  # noqa: E402

__all__ = [
    "Determinant",
    "IngestReport",
    "SelectedBasis",
    "ingest_samples",
    "IntegralTable",
    "parse_fcidump",
    "HamiltonianApplier",
    "apply_H",
    "DavidsonOptions",
    "DavidsonResult",
    "davidson_solve",
]

__version__ = "0.1.0"

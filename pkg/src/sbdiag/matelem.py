"""Slater-Condon matrix elements H_ij = <det_i|H|det_j>.

Reference (pure-Python) evaluation used by the dense oracle and anywhere
speed is irrelevant.  The data-parallel kernels in :mod:`sbdiag.apply`
re-derive the same formulas over raw bitmasks; their agreement is enforced
by the oracle-equivalence tests rather than by sharing code.

Conventions: (pq|rs) is a chemist-notation two-electron integral; the
double-excitation phase is the product of two sequential single-excitation
parities (lowest hole to lowest particle first), matching
:func:`sbdiag.basis.enumerate_doubles`.
"""

from __future__ import annotations

from .basis import Determinant, popcount, single_phase
from .integrals import IntegralTable

__all__ = [
    "excitation_degree",
    "h_diag",
    "h_single",
    "h_double_same_spin",
    "h_double_opposite_spin",
    "hij",
]


def _occupied(s: int) -> list[int]:
    out = []
    p = 0
    while s:
        if s & 1:
            out.append(p)
        s >>= 1
        p += 1
    return out


def excitation_degree(det_i: Determinant, det_j: Determinant) -> int:
    """Half the Hamming distance between the packed occupation masks."""
    return (popcount(det_i.alpha ^ det_j.alpha) + popcount(det_i.beta ^ det_j.beta)) // 2


def h_diag(det: Determinant, table: IntegralTable) -> float:
    """<det|H|det>: core energy, one-electron, Coulomb and exchange terms."""
    occ_a = _occupied(det.alpha)
    occ_b = _occupied(det.beta)
    e = table.e_core
    for p in occ_a + occ_b:
        e += table.get_h(p, p)
    for occ in (occ_a, occ_b):
        for p in occ:
            for q in occ:
                e += 0.5 * (table.get_eri(p, p, q, q) - table.get_eri(p, q, q, p))
    for p in occ_a:
        for q in occ_b:
            e += table.get_eri(p, p, q, q)
    return e


def h_single(
    bra: Determinant,
    p: int,
    r: int,
    spin: str,
    phase: int,
    table: IntegralTable,
) -> float:
    """Element for a same-spin single excitation p -> r applied to bra.

    Occupations are taken from the common occupied set (bra with the hole p
    removed in the moving sector).
    """
    if spin == "alpha":
        same = bra.alpha & ~(1 << p)
        other = bra.beta
    elif spin == "beta":
        same = bra.beta & ~(1 << p)
        other = bra.alpha
    else:
        raise ValueError(f"spin must be 'alpha' or 'beta', got {spin!r}")

    elem = table.get_h(p, r)
    for q in _occupied(same):
        elem += table.get_eri(p, r, q, q) - table.get_eri(p, q, q, r)
    for q in _occupied(other):
        elem += table.get_eri(p, r, q, q)
    return phase * elem


def h_double_same_spin(
    p: int, q: int, r: int, s: int, phase: int, table: IntegralTable
) -> float:
    """Element for a same-spin double (holes p,q -> particles r,s)."""
    return phase * (table.get_eri(p, r, q, s) - table.get_eri(p, s, q, r))


def h_double_opposite_spin(
    p: int,
    r: int,
    q: int,
    s: int,
    phase_alpha: int,
    phase_beta: int,
    table: IntegralTable,
) -> float:
    """Element for an opposite-spin double: alpha p -> r, beta q -> s."""
    return phase_alpha * phase_beta * table.get_eri(p, r, q, s)


def _double_phase(source: int, p: int, q: int, r: int, s: int) -> int:
    """Sequential-singles parity: p -> r on source, then q -> s on the result."""
    ph1 = single_phase(source, p, r)
    inter = (source & ~(1 << p)) | (1 << r)
    return ph1 * single_phase(inter, q, s)


def _hole_particle(x: int, bra_s: int, ket_s: int) -> tuple[list[int], list[int]]:
    return _occupied(x & bra_s), _occupied(x & ket_s)


def hij(det_i: Determinant, det_j: Determinant, table: IntegralTable) -> float:
    """General element, dispatching on the excitation degree of the pair.

    Degree >= 3 pairs give exactly 0; e_core enters only the diagonal.
    Determinants with mismatched per-spin electron counts give 0.
    """
    xa = det_i.alpha ^ det_j.alpha
    xb = det_i.beta ^ det_j.beta
    na = popcount(xa)
    nb = popcount(xb)
    if popcount(det_i.alpha) != popcount(det_j.alpha) or popcount(det_i.beta) != popcount(
        det_j.beta
    ):
        return 0.0
    degree2 = na + nb  # twice the excitation degree

    if degree2 == 0:
        return h_diag(det_i, table)

    if degree2 == 2:
        if na == 2:
            (p,), (r,) = _hole_particle(xa, det_i.alpha, det_j.alpha)
            return h_single(det_i, p, r, "alpha", single_phase(det_i.alpha, p, r), table)
        (p,), (r,) = _hole_particle(xb, det_i.beta, det_j.beta)
        return h_single(det_i, p, r, "beta", single_phase(det_i.beta, p, r), table)

    if degree2 == 4:
        if na == 2 and nb == 2:
            (pa,), (ra,) = _hole_particle(xa, det_i.alpha, det_j.alpha)
            (pb,), (rb,) = _hole_particle(xb, det_i.beta, det_j.beta)
            return h_double_opposite_spin(
                pa,
                ra,
                pb,
                rb,
                single_phase(det_i.alpha, pa, ra),
                single_phase(det_i.beta, pb, rb),
                table,
            )
        if na == 4:
            (p, q), (r, s) = _hole_particle(xa, det_i.alpha, det_j.alpha)
            return h_double_same_spin(p, q, r, s, _double_phase(det_i.alpha, p, q, r, s), table)
        (p, q), (r, s) = _hole_particle(xb, det_i.beta, det_j.beta)
        return h_double_same_spin(p, q, r, s, _double_phase(det_i.beta, p, q, r, s), table)

    return 0.0

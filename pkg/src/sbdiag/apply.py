"""Matrix-free Hamiltonian application y = H*x over a SelectedBasis.

The product-basis path follows the three-task decomposition: for every bra
pair (ia, ib), task 0 pairs alpha singles with beta singles (the
opposite-spin doubles), task 1 walks beta singles and doubles with alpha
fixed, task 2 walks alpha singles and doubles with beta fixed, and the
diagonal closes the Slater-Condon neighborhood.  The (ia, ib) loops are
collapsed into one flat row index.  Each work item owns its output row, so
accumulation is free of lost updates without atomics in both execution
policies; ``parallel`` distributes rows across threads, ``deterministic``
walks them in order on one thread.

Matrix elements are evaluated on the fly from cached determinant words via
the same excitation-degree dispatch in both basis modes; nothing about H is
ever stored beyond its diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit, prange

from .basis import ExcitationTable, SelectedBasis, build_excitation_table
from .integrals import IntegralTable

__all__ = [
    "DetCache",
    "SpinTables",
    "build_spin_tables",
    "build_det_cache",
    "apply_H",
    "apply_H_full",
    "compute_diagonal",
    "HamiltonianApplier",
    "warm_up",
]

U0 = np.uint64(0)
U1 = np.uint64(1)
_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@njit(inline="always")
def _popcount(w):
    w = w - ((w >> np.uint64(1)) & _M1)
    w = (w & _M2) + ((w >> np.uint64(2)) & _M2)
    w = (w + (w >> np.uint64(4))) & _M4
    return np.int64((w * _H01) >> np.uint64(56))


@njit(inline="always")
def _ctz(w):
    # index of the lowest set bit; w must be nonzero
    return _popcount((w & (~w + U1)) - U1)


@njit(inline="always")
def _bit(p):
    return U1 << np.uint64(p)


@njit(inline="always")
def _single_sign(w, p, r):
    """(-1)**(occupied bits of w strictly between p and r)."""
    lo = p if p < r else r
    hi = r if p < r else p
    mask = (_bit(hi) - U1) & ~(_bit(lo + 1) - U1)
    return -1.0 if _popcount(w & mask) & 1 else 1.0


@njit(inline="always")
def _eri(eri, p, q, r, s):
    a = p * (p + 1) // 2 + q if p >= q else q * (q + 1) // 2 + p
    b = r * (r + 1) // 2 + s if r >= s else s * (s + 1) // 2 + r
    return eri[a * (a + 1) // 2 + b] if a >= b else eri[b * (b + 1) // 2 + a]


@njit(cache=True, nogil=True)
def _sector_diag(w0, h, eri):
    e = 0.0
    t = w0
    while t != U0:
        p = _ctz(t)
        t &= t - U1
        e += h[p, p]
        t2 = w0
        while t2 != U0:
            q = _ctz(t2)
            t2 &= t2 - U1
            e += 0.5 * (_eri(eri, p, p, q, q) - _eri(eri, p, q, q, p))
    return e


@njit(cache=True, nogil=True)
def _hdiag_words(aw, bw, h, eri, e_core):
    e = e_core + _sector_diag(aw, h, eri) + _sector_diag(bw, h, eri)
    ta = aw
    while ta != U0:
        p = _ctz(ta)
        ta &= ta - U1
        tb = bw
        while tb != U0:
            q = _ctz(tb)
            tb &= tb - U1
            e += _eri(eri, p, p, q, q)
    return e


@njit(cache=True, nogil=True)
def _single_elem(mb, mk, other, h, eri):
    """Same-spin single: mb/mk are the moving sector's bra/ket words,
    other is the spectator sector's (common) word."""
    x = mb ^ mk
    p = _ctz(x & mb)
    r = _ctz(x & mk)
    elem = h[p, r]
    common = mb & mk
    t = common
    while t != U0:
        q = _ctz(t)
        t &= t - U1
        elem += _eri(eri, p, r, q, q) - _eri(eri, p, q, q, r)
    t = other
    while t != U0:
        q = _ctz(t)
        t &= t - U1
        elem += _eri(eri, p, r, q, q)
    return _single_sign(mb, p, r) * elem


@njit(cache=True, nogil=True)
def _same_spin_double(wb, wk, eri):
    x = wb ^ wk
    holes = x & wb
    parts = x & wk
    p = _ctz(holes)
    q = _ctz(holes & (holes - U1))
    r = _ctz(parts)
    s = _ctz(parts & (parts - U1))
    sign = _single_sign(wb, p, r)
    inter = (wb & ~_bit(p)) | _bit(r)
    sign *= _single_sign(inter, q, s)
    return sign * (_eri(eri, p, r, q, s) - _eri(eri, p, s, q, r))


@njit(cache=True, nogil=True)
def _hij_words(ba, bb, ka, kb, h, eri, e_core):
    """<(ba,bb)|H|(ka,kb)>; excitation degree from XOR popcounts."""
    xa = ba ^ ka
    xb = bb ^ kb
    na = _popcount(xa)
    nb = _popcount(xb)
    d2 = na + nb
    if d2 == 0:
        return _hdiag_words(ba, bb, h, eri, e_core)
    if d2 == 2:
        if na == 2:
            return _single_elem(ba, ka, bb, h, eri)
        return _single_elem(bb, kb, ba, h, eri)
    if d2 == 4:
        if na == 2:  # nb == 2: opposite-spin double
            pa = _ctz(xa & ba)
            ra = _ctz(xa & ka)
            pb = _ctz(xb & bb)
            rb = _ctz(xb & kb)
            sign = _single_sign(ba, pa, ra) * _single_sign(bb, pb, rb)
            return sign * _eri(eri, pa, ra, pb, rb)
        if na == 4:
            return _same_spin_double(ba, ka, eri)
        return _same_spin_double(bb, kb, eri)
    return 0.0


# -- product-basis kernels ----------------------------------------------------


@njit(cache=True, nogil=True)
def _product_row(
    bi,
    x,
    diag,
    bra_a,
    bra_b,
    ket_a,
    ket_b,
    balo,
    kalo,
    kahi,
    nbeta,
    as_off,
    as_tgt,
    ad_off,
    ad_tgt,
    bs_off,
    bs_tgt,
    bd_off,
    bd_tgt,
    h,
    eri,
    e_core,
):
    ia = balo + bi // nbeta
    ib = bi % nbeta
    da = bra_a[bi]
    db = bra_b[bi]
    acc = 0.0

    if kalo <= ia < kahi:
        xoff = (ia - kalo) * nbeta
        # diagonal
        acc += diag[bi] * x[xoff + ib]
        # task 1: beta singles and beta doubles, alpha fixed
        for k in range(bs_off[ib], bs_off[ib + 1]):
            jb = bs_tgt[k]
            j = xoff + jb
            acc += _hij_words(da, db, ket_a[j], ket_b[j], h, eri, e_core) * x[j]
        for k in range(bd_off[ib], bd_off[ib + 1]):
            jb = bd_tgt[k]
            j = xoff + jb
            acc += _hij_words(da, db, ket_a[j], ket_b[j], h, eri, e_core) * x[j]

    for k in range(as_off[ia], as_off[ia + 1]):
        ja = as_tgt[k]
        if kalo <= ja < kahi:
            joff = (ja - kalo) * nbeta
            # task 2: alpha singles, beta fixed
            j = joff + ib
            acc += _hij_words(da, db, ket_a[j], ket_b[j], h, eri, e_core) * x[j]
            # task 0: alpha singles x beta singles (opposite-spin doubles)
            for m in range(bs_off[ib], bs_off[ib + 1]):
                j = joff + bs_tgt[m]
                acc += _hij_words(da, db, ket_a[j], ket_b[j], h, eri, e_core) * x[j]
    # task 2: alpha doubles, beta fixed
    for k in range(ad_off[ia], ad_off[ia + 1]):
        ja = ad_tgt[k]
        if kalo <= ja < kahi:
            j = (ja - kalo) * nbeta + ib
            acc += _hij_words(da, db, ket_a[j], ket_b[j], h, eri, e_core) * x[j]
    return acc


@njit(cache=True, nogil=True)
def _product_kernel_seq(
    y,
    x,
    diag,
    bra_a,
    bra_b,
    ket_a,
    ket_b,
    balo,
    kalo,
    kahi,
    nbeta,
    as_off,
    as_tgt,
    ad_off,
    ad_tgt,
    bs_off,
    bs_tgt,
    bd_off,
    bd_tgt,
    h,
    eri,
    e_core,
):
    for bi in range(y.shape[0]):
        y[bi] += _product_row(
            bi, x, diag, bra_a, bra_b, ket_a, ket_b, balo, kalo, kahi, nbeta,
            as_off, as_tgt, ad_off, ad_tgt, bs_off, bs_tgt, bd_off, bd_tgt,
            h, eri, e_core,
        )


@njit(cache=True, parallel=True, nogil=True)
def _product_kernel_par(
    y,
    x,
    diag,
    bra_a,
    bra_b,
    ket_a,
    ket_b,
    balo,
    kalo,
    kahi,
    nbeta,
    as_off,
    as_tgt,
    ad_off,
    ad_tgt,
    bs_off,
    bs_tgt,
    bd_off,
    bd_tgt,
    h,
    eri,
    e_core,
):
    for bi in prange(y.shape[0]):
        y[bi] += _product_row(
            bi, x, diag, bra_a, bra_b, ket_a, ket_b, balo, kalo, kahi, nbeta,
            as_off, as_tgt, ad_off, ad_tgt, bs_off, bs_tgt, bd_off, bd_tgt,
            h, eri, e_core,
        )


@njit(cache=True, nogil=True)
def _diag_kernel(out, det_a, det_b, h, eri, e_core):
    for i in range(out.shape[0]):
        out[i] = _hdiag_words(det_a[i], det_b[i], h, eri, e_core)


# -- explicit-basis kernels ---------------------------------------------------


@njit(cache=True, nogil=True)
def _find_det(sort_a, sort_b, ta, tb):
    lo = 0
    hi = sort_a.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        a = sort_a[mid]
        if a < ta or (a == ta and sort_b[mid] < tb):
            lo = mid + 1
        else:
            hi = mid
    if lo < sort_a.shape[0] and sort_a[lo] == ta and sort_b[lo] == tb:
        return lo
    return np.int64(-1)


@njit(cache=True, nogil=True)
def _explicit_row(
    i, x, diag, det_a, det_b, sort_a, sort_b, perm, norb_mask, h, eri, e_core
):
    da = det_a[i]
    db = det_b[i]
    acc = diag[i] * x[i]
    va = (~da) & norb_mask
    vb = (~db) & norb_mask

    # alpha singles, plus the alpha-single x beta-single cross products
    tp = da
    while tp != U0:
        p = _ctz(tp)
        tp &= tp - U1
        tr = va
        while tr != U0:
            r = _ctz(tr)
            tr &= tr - U1
            ta = (da & ~_bit(p)) | _bit(r)
            pos = _find_det(sort_a, sort_b, ta, db)
            if pos >= 0:
                j = perm[pos]
                acc += _hij_words(da, db, ta, db, h, eri, e_core) * x[j]
            # cross term: also move one beta electron
            uq = db
            while uq != U0:
                q = _ctz(uq)
                uq &= uq - U1
                us = vb
                while us != U0:
                    s = _ctz(us)
                    us &= us - U1
                    tb = (db & ~_bit(q)) | _bit(s)
                    pos2 = _find_det(sort_a, sort_b, ta, tb)
                    if pos2 >= 0:
                        j2 = perm[pos2]
                        acc += _hij_words(da, db, ta, tb, h, eri, e_core) * x[j2]

    # beta singles
    tp = db
    while tp != U0:
        q = _ctz(tp)
        tp &= tp - U1
        tr = vb
        while tr != U0:
            s = _ctz(tr)
            tr &= tr - U1
            tb = (db & ~_bit(q)) | _bit(s)
            pos = _find_det(sort_a, sort_b, da, tb)
            if pos >= 0:
                j = perm[pos]
                acc += _hij_words(da, db, da, tb, h, eri, e_core) * x[j]

    # alpha doubles
    t1 = da
    while t1 != U0:
        p = _ctz(t1)
        t1 &= t1 - U1
        t2 = t1
        while t2 != U0:
            q = _ctz(t2)
            t2 &= t2 - U1
            u1 = va
            while u1 != U0:
                r = _ctz(u1)
                u1 &= u1 - U1
                u2 = u1
                while u2 != U0:
                    s = _ctz(u2)
                    u2 &= u2 - U1
                    ta = (da & ~_bit(p) & ~_bit(q)) | _bit(r) | _bit(s)
                    pos = _find_det(sort_a, sort_b, ta, db)
                    if pos >= 0:
                        j = perm[pos]
                        acc += _hij_words(da, db, ta, db, h, eri, e_core) * x[j]

    # beta doubles
    t1 = db
    while t1 != U0:
        p = _ctz(t1)
        t1 &= t1 - U1
        t2 = t1
        while t2 != U0:
            q = _ctz(t2)
            t2 &= t2 - U1
            u1 = vb
            while u1 != U0:
                r = _ctz(u1)
                u1 &= u1 - U1
                u2 = u1
                while u2 != U0:
                    s = _ctz(u2)
                    u2 &= u2 - U1
                    tb = (db & ~_bit(p) & ~_bit(q)) | _bit(r) | _bit(s)
                    pos = _find_det(sort_a, sort_b, da, tb)
                    if pos >= 0:
                        j = perm[pos]
                        acc += _hij_words(da, db, da, tb, h, eri, e_core) * x[j]
    return acc


@njit(cache=True, nogil=True)
def _explicit_kernel_seq(
    y, x, diag, det_a, det_b, sort_a, sort_b, perm, norb_mask, h, eri, e_core
):
    for i in range(y.shape[0]):
        y[i] += _explicit_row(
            i, x, diag, det_a, det_b, sort_a, sort_b, perm, norb_mask, h, eri, e_core
        )


@njit(cache=True, parallel=True, nogil=True)
def _explicit_kernel_par(
    y, x, diag, det_a, det_b, sort_a, sort_b, perm, norb_mask, h, eri, e_core
):
    for i in prange(y.shape[0]):
        y[i] += _explicit_row(
            i, x, diag, det_a, det_b, sort_a, sort_b, perm, norb_mask, h, eri, e_core
        )


# -- caches and drivers ---------------------------------------------------------


Range = tuple[int, int]


@dataclass
class DetCache:
    """Composed determinant words for a bra window and a ket window.

    Windows are ((alpha_lo, alpha_hi), (beta_lo, beta_hi)) index ranges into
    the basis string lists.  Holds 2 * (range area) determinant records when
    the windows coincide; rebuilding happens only when a requested window
    differs from the cached one.
    """

    bra_range: tuple[Range, Range]
    ket_range: tuple[Range, Range]
    bra_det_a: np.ndarray
    bra_det_b: np.ndarray
    ket_det_a: np.ndarray
    ket_det_b: np.ndarray
    build_count: int = 1

    @property
    def n_records(self) -> int:
        return len(self.bra_det_a) + len(self.ket_det_a)


def _compose_window(alpha_words: np.ndarray, beta_words: np.ndarray, window):
    (alo, ahi), (blo, bhi) = window
    a = np.repeat(alpha_words[alo:ahi], bhi - blo)
    b = np.tile(beta_words[blo:bhi], ahi - alo)
    return a, b


def _full_window(basis: SelectedBasis) -> tuple[Range, Range]:
    return ((0, len(basis.alpha_strings)), (0, len(basis.beta_strings)))


def build_det_cache(
    basis: SelectedBasis,
    bra_range: Optional[tuple[Range, Range]] = None,
    ket_range: Optional[tuple[Range, Range]] = None,
    cache: Optional[DetCache] = None,
) -> DetCache:
    """Build (or refresh) the determinant cache for the given windows.

    Passing the previous cache back in skips all work when both windows are
    unchanged and rebuilds only the stale side otherwise; the build counter
    advances only when something was actually recomputed.
    """
    if basis.mode != "product":
        raise ValueError("determinant windows apply to product-mode bases only")
    bra_range = _full_window(basis) if bra_range is None else bra_range
    ket_range = _full_window(basis) if ket_range is None else ket_range
    for (alo, ahi), (blo, bhi) in (bra_range, ket_range):
        if not (0 <= alo <= ahi <= len(basis.alpha_strings)):
            raise ValueError(f"alpha window ({alo}, {ahi}) exceeds basis")
        if not (0 <= blo <= bhi <= len(basis.beta_strings)):
            raise ValueError(f"beta window ({blo}, {bhi}) exceeds basis")

    if cache is not None and cache.bra_range == bra_range and cache.ket_range == ket_range:
        return cache

    alpha_words = np.array(basis.alpha_strings, dtype=np.uint64)
    beta_words = np.array(basis.beta_strings, dtype=np.uint64)

    if cache is not None and cache.bra_range == bra_range:
        bra_a, bra_b = cache.bra_det_a, cache.bra_det_b
    else:
        bra_a, bra_b = _compose_window(alpha_words, beta_words, bra_range)
    if cache is not None and cache.ket_range == ket_range:
        ket_a, ket_b = cache.ket_det_a, cache.ket_det_b
    else:
        ket_a, ket_b = _compose_window(alpha_words, beta_words, ket_range)

    if cache is None:
        return DetCache(bra_range, ket_range, bra_a, bra_b, ket_a, ket_b)

    cache.bra_range = bra_range
    cache.ket_range = ket_range
    cache.bra_det_a, cache.bra_det_b = bra_a, bra_b
    cache.ket_det_a, cache.ket_det_b = ket_a, ket_b
    cache.build_count += 1
    return cache


@dataclass
class SpinTables:
    """Excitation tables for both spin sectors of a product basis."""

    alpha: ExcitationTable
    beta: ExcitationTable


def build_spin_tables(basis: SelectedBasis) -> SpinTables:
    if basis.mode != "product":
        raise ValueError("spin-sector tables apply to product-mode bases only")
    return SpinTables(
        alpha=build_excitation_table(basis.alpha_strings, basis.norb),
        beta=build_excitation_table(basis.beta_strings, basis.norb),
    )


def _check_x(x, n) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"expected vector of length {n}, got shape {x.shape}")
    return x


def compute_diagonal(
    basis: SelectedBasis, table: IntegralTable, cache: Optional[DetCache] = None
) -> np.ndarray:
    """d_i = <det_i|H|det_i> over the (bra window of the) basis."""
    h = np.ascontiguousarray(table.h)
    if basis.mode == "product":
        cache = build_det_cache(basis, cache=cache) if cache is None else cache
        det_a, det_b = cache.bra_det_a, cache.bra_det_b
    else:
        det_a = np.array([d.alpha for d in basis.dets], dtype=np.uint64)
        det_b = np.array([d.beta for d in basis.dets], dtype=np.uint64)
    out = np.empty(len(det_a), dtype=np.float64)
    _diag_kernel(out, det_a, det_b, h, table.eri, table.e_core)
    return out


def apply_H(
    x,
    basis: SelectedBasis,
    table: IntegralTable,
    tables: Optional[SpinTables] = None,
    cache: Optional[DetCache] = None,
    exec_policy: str = "parallel",
) -> np.ndarray:
    """One full product-basis application y = H*x."""
    if basis.mode != "product":
        raise ValueError("apply_H serves product-mode bases; see apply_H_full")
    n = basis.dimension
    x = _check_x(x, n)
    tables = build_spin_tables(basis) if tables is None else tables
    cache = build_det_cache(basis, cache=cache)
    diag = compute_diagonal(basis, table, cache)
    return _apply_product(x, basis, table, tables, cache, diag, exec_policy)


def _apply_product(x, basis, table, tables, cache, diag, exec_policy) -> np.ndarray:
    nbeta = len(basis.beta_strings)
    (balo, bahi), _ = cache.bra_range
    (kalo, kahi), _ = cache.ket_range
    y = np.zeros((bahi - balo) * nbeta, dtype=np.float64)
    kernel = _pick_kernel(exec_policy, _product_kernel_par, _product_kernel_seq)
    ta, tb = tables.alpha, tables.beta
    kernel(
        y, x, diag,
        cache.bra_det_a, cache.bra_det_b, cache.ket_det_a, cache.ket_det_b,
        balo, kalo, kahi, nbeta,
        ta.s_off, ta.s_tgt, ta.d_off, ta.d_tgt,
        tb.s_off, tb.s_tgt, tb.d_off, tb.d_tgt,
        np.ascontiguousarray(table.h), table.eri, table.e_core,
    )
    return y


def _pick_kernel(exec_policy, par, seq):
    if exec_policy == "parallel":
        return par
    if exec_policy == "deterministic":
        return seq
    raise ValueError(f"exec_policy must be 'parallel' or 'deterministic', got {exec_policy!r}")


def apply_H_full(
    x,
    basis: SelectedBasis,
    table: IntegralTable,
    exec_policy: str = "parallel",
) -> np.ndarray:
    """y = H*x over an explicit determinant list.

    Neighbors are generated by bitwise single/double moves on each
    determinant and probed against a sorted index of the basis.
    """
    if basis.mode != "explicit":
        raise ValueError("apply_H_full serves explicit-mode bases; see apply_H")
    applier = HamiltonianApplier(basis, table, exec_policy=exec_policy)
    return applier(x)


class HamiltonianApplier:
    """Reusable y = H*x operator holding tables, caches, and the diagonal.

    Amortizes table/cache construction across the many applications a
    Davidson run performs.  Thread-safety: concurrent calls are fine since
    every call writes its own output vector.
    """

    def __init__(
        self,
        basis: SelectedBasis,
        table: IntegralTable,
        tables: Optional[SpinTables] = None,
        exec_policy: str = "parallel",
    ):
        _pick_kernel(exec_policy, None, None)  # validate early
        self.basis = basis
        self.table = table
        self.exec_policy = exec_policy
        self.n = basis.dimension
        self._h = np.ascontiguousarray(table.h)
        self.apply_count = 0
        if basis.mode == "product":
            self.tables = build_spin_tables(basis) if tables is None else tables
            self.cache = build_det_cache(basis)
            self.diag = compute_diagonal(basis, table, self.cache)
        else:
            self.tables = None
            self.cache = None
            self._det_a = np.array([d.alpha for d in basis.dets], dtype=np.uint64)
            self._det_b = np.array([d.beta for d in basis.dets], dtype=np.uint64)
            order = np.lexsort((self._det_b, self._det_a))
            self._sort_a = np.ascontiguousarray(self._det_a[order])
            self._sort_b = np.ascontiguousarray(self._det_b[order])
            self._perm = np.ascontiguousarray(order.astype(np.int64))
            self.diag = compute_diagonal(basis, table)

    def __call__(self, x) -> np.ndarray:
        x = _check_x(x, self.n)
        self.apply_count += 1
        if self.basis.mode == "product":
            return _apply_product(
                x, self.basis, self.table, self.tables, self.cache, self.diag,
                self.exec_policy,
            )
        y = np.zeros(self.n, dtype=np.float64)
        kernel = _pick_kernel(self.exec_policy, _explicit_kernel_par, _explicit_kernel_seq)
        norb_mask = np.uint64((1 << self.basis.norb) - 1)
        kernel(
            y, x, self.diag, self._det_a, self._det_b,
            self._sort_a, self._sort_b, self._perm,
            norb_mask, self._h, self.table.eri, self.table.e_core,
        )
        return y


def warm_up() -> None:
    """Force JIT compilation of all kernels on a 1-determinant instance."""
    from .basis import Determinant

    table = IntegralTable(2)
    table.set_h(0, 0, 1.0)
    prod = SelectedBasis.product([0b01], [0b01], 2, 1, 1)
    x = np.ones(1)
    for policy in ("parallel", "deterministic"):
        apply_H(x, prod, table, exec_policy=policy)
        expl = SelectedBasis.explicit([Determinant(0b01, 0b01)], 2, 1, 1)
        apply_H_full(x, expl, table, exec_policy=policy)

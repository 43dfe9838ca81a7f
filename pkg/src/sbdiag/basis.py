"""Determinant bitstrings, sample ingestion, and excitation enumeration.

A configuration is held as two "half-bitstrings": one occupation mask per
spin sector, bit p set when spatial orbital p is occupied.  The packed
full-bitstring view places the alpha block in the low ``norb`` bits and the
beta block above it, so no cross-spin bit ever lies between two same-spin
positions and the fermionic parities of the two sectors factorize.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Union

import numpy as np

__all__ = [
    "SpinString",
    "Determinant",
    "SampleFormatError",
    "IngestReport",
    "SelectedBasis",
    "ExcitationTable",
    "popcount",
    "single_phase",
    "enumerate_singles",
    "enumerate_doubles",
    "ingest_samples",
    "det_to_line",
    "build_excitation_table",
]

# Occupation mask of spatial orbitals for one spin sector (norb <= 64).
SpinString = int


class Determinant(NamedTuple):
    """A configuration as (alpha, beta) half-bitstrings."""

    alpha: SpinString
    beta: SpinString

    def packed(self, norb: int) -> int:
        """Single mask over all 2*norb spin-orbitals, alpha block low."""
        return self.alpha | (self.beta << norb)


class SampleFormatError(ValueError):
    """Malformed sample line; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def popcount(s: int) -> int:
    return int(s).bit_count()


def single_phase(s: SpinString, p: int, r: int) -> int:
    """Fermionic sign of moving an electron p -> r within string s.

    Equals (-1)**(number of occupied orbitals strictly between p and r).
    """
    lo, hi = (p, r) if p < r else (r, p)
    mask = ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
    return -1 if (s & mask).bit_count() & 1 else 1


def enumerate_singles(s: SpinString, norb: int) -> list[tuple[SpinString, int, int, int]]:
    """All single excitations of s: (target, hole p, particle r, phase)."""
    occ = [p for p in range(norb) if (s >> p) & 1]
    virt = [r for r in range(norb) if not (s >> r) & 1]
    out = []
    for p in occ:
        for r in virt:
            target = (s & ~(1 << p)) | (1 << r)
            out.append((target, p, r, single_phase(s, p, r)))
    return out


def enumerate_doubles(
    s: SpinString, norb: int
) -> list[tuple[SpinString, int, int, int, int, int]]:
    """All double excitations of s: (target, p, q, r, s_orb, phase).

    Hole pairs p<q and particle pairs r<s_orb are each emitted once.  The
    phase follows the sequential-singles convention: excite p->r on s first,
    then q->s_orb on the intermediate string, multiplying the two parities.
    """
    occ = [p for p in range(norb) if (s >> p) & 1]
    virt = [r for r in range(norb) if not (s >> r) & 1]
    out = []
    for p, q in combinations(occ, 2):
        for r, s_orb in combinations(virt, 2):
            ph1 = single_phase(s, p, r)
            inter = (s & ~(1 << p)) | (1 << r)
            ph2 = single_phase(inter, q, s_orb)
            target = (inter & ~(1 << q)) | (1 << s_orb)
            out.append((target, p, q, r, s_orb, ph1 * ph2))
    return out


@dataclass(frozen=True)
class IngestReport:
    """Bookkeeping from ingest_samples."""

    n_lines: int
    n_filtered: int
    n_duplicates: int
    # Multiplicity of each accepted determinant among the sample lines,
    # usable as a sampling-informed start vector for the solver.
    det_counts: Counter = field(default_factory=Counter)


@dataclass
class SelectedBasis:
    """The determinant subspace the Hamiltonian is restricted to.

    Product mode spans ``alpha_strings x beta_strings`` with the global index
    of the pair (ia, ib) fixed as ``ia * len(beta_strings) + ib``.  Explicit
    mode spans exactly ``dets``.
    """

    mode: str  # "product" | "explicit"
    norb: int
    n_alpha_elec: int
    n_beta_elec: int
    alpha_strings: list[SpinString] = field(default_factory=list)
    beta_strings: list[SpinString] = field(default_factory=list)
    dets: list[Determinant] = field(default_factory=list)
    _alpha_index: dict = field(default_factory=dict, repr=False)
    _beta_index: dict = field(default_factory=dict, repr=False)
    _det_index: dict = field(default_factory=dict, repr=False)

    @classmethod
    def product(
        cls,
        alpha_strings: Iterable[SpinString],
        beta_strings: Iterable[SpinString],
        norb: int,
        n_alpha_elec: int,
        n_beta_elec: int,
    ) -> "SelectedBasis":
        alphas = list(alpha_strings)
        betas = list(beta_strings)
        cls._validate_strings(alphas, norb, n_alpha_elec, "alpha")
        cls._validate_strings(betas, norb, n_beta_elec, "beta")
        return cls(
            mode="product",
            norb=norb,
            n_alpha_elec=n_alpha_elec,
            n_beta_elec=n_beta_elec,
            alpha_strings=alphas,
            beta_strings=betas,
            _alpha_index={s: i for i, s in enumerate(alphas)},
            _beta_index={s: i for i, s in enumerate(betas)},
        )

    @classmethod
    def explicit(
        cls,
        dets: Iterable[Determinant],
        norb: int,
        n_alpha_elec: int,
        n_beta_elec: int,
    ) -> "SelectedBasis":
        det_list = [Determinant(*d) for d in dets]
        cls._validate_strings([d.alpha for d in det_list], norb, n_alpha_elec, "alpha")
        cls._validate_strings([d.beta for d in det_list], norb, n_beta_elec, "beta")
        index = {d: i for i, d in enumerate(det_list)}
        if len(index) != len(det_list):
            raise ValueError("duplicate determinants in explicit basis")
        return cls(
            mode="explicit",
            norb=norb,
            n_alpha_elec=n_alpha_elec,
            n_beta_elec=n_beta_elec,
            dets=det_list,
            _det_index=index,
        )

    @staticmethod
    def _validate_strings(strings, norb, n_elec, label):
        limit = 1 << norb
        for s in strings:
            if not 0 <= s < limit:
                raise ValueError(f"{label} string {s:#x} has bits above orbital {norb - 1}")
            if popcount(s) != n_elec:
                raise ValueError(
                    f"{label} string {s:#x} has {popcount(s)} electrons, expected {n_elec}"
                )

    @property
    def dimension(self) -> int:
        if self.mode == "product":
            return len(self.alpha_strings) * len(self.beta_strings)
        return len(self.dets)

    def alpha_index(self, s: SpinString) -> int:
        return self._alpha_index[s]

    def beta_index(self, s: SpinString) -> int:
        return self._beta_index[s]

    def index_of(self, det: Determinant) -> int:
        """Global index of a determinant; KeyError when outside the basis."""
        if self.mode == "product":
            ia = self._alpha_index[det.alpha]
            ib = self._beta_index[det.beta]
            return ia * len(self.beta_strings) + ib
        return self._det_index[Determinant(*det)]

    def det_at(self, i: int) -> Determinant:
        """Inverse of index_of."""
        if not 0 <= i < self.dimension:
            raise IndexError(f"index {i} out of range [0, {self.dimension})")
        if self.mode == "product":
            nb = len(self.beta_strings)
            return Determinant(self.alpha_strings[i // nb], self.beta_strings[i % nb])
        return self.dets[i]


def det_to_line(det: Determinant, norb: int) -> str:
    """Format a determinant as a sample line (inverse of line parsing)."""
    alpha = "".join("1" if (det.alpha >> p) & 1 else "0" for p in range(norb))
    beta = "".join("1" if (det.beta >> p) & 1 else "0" for p in range(norb))
    return alpha + beta


def _parse_sample_line(line: str, norb: int, line_no: int) -> Determinant:
    if len(line) != 2 * norb:
        raise SampleFormatError(
            f"expected {2 * norb} characters, got {len(line)}", line_no
        )
    alpha = 0
    beta = 0
    for pos, ch in enumerate(line):
        if ch == "1":
            if pos < norb:
                alpha |= 1 << pos
            else:
                beta |= 1 << (pos - norb)
        elif ch != "0":
            raise SampleFormatError(f"character {ch!r} is not '0' or '1'", line_no)
    return Determinant(alpha, beta)


def ingest_samples(
    lines: Union[str, Iterable[str]],
    norb: int,
    n_alpha_elec: int,
    n_beta_elec: int,
    mode: str = "product",
) -> tuple[SelectedBasis, IngestReport]:
    """Build a SelectedBasis from sampled configuration lines.

    Each line is 2*norb characters of '0'/'1'; the leftmost norb characters
    are the alpha half with the leftmost character meaning orbital 0.  Blank
    lines and '#' comments are skipped.  Lines whose per-spin popcount does
    not match the electron counts are dropped (filter step); duplicates are
    removed.  Product mode spans the Cartesian product of the surviving
    unique alpha and beta halves; explicit mode keeps the deduplicated
    determinant list itself.
    """
    mode = mode.lower()
    if mode not in ("product", "explicit"):
        raise ValueError(f"mode must be 'product' or 'explicit', got {mode!r}")
    if isinstance(lines, str):
        lines = lines.splitlines()

    n_lines = 0
    n_filtered = 0
    n_duplicates = 0
    det_counts: Counter = Counter()
    seen_dets: dict[Determinant, None] = {}
    alpha_seen: dict[int, None] = {}
    beta_seen: dict[int, None] = {}

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        n_lines += 1
        det = _parse_sample_line(line, norb, line_no)
        if popcount(det.alpha) != n_alpha_elec or popcount(det.beta) != n_beta_elec:
            n_filtered += 1
            continue
        det_counts[det] += 1
        if det in seen_dets:
            n_duplicates += 1
            continue
        seen_dets[det] = None
        alpha_seen.setdefault(det.alpha, None)
        beta_seen.setdefault(det.beta, None)

    report = IngestReport(
        n_lines=n_lines,
        n_filtered=n_filtered,
        n_duplicates=n_duplicates,
        det_counts=det_counts,
    )
    if mode == "product":
        basis = SelectedBasis.product(
            alpha_seen.keys(), beta_seen.keys(), norb, n_alpha_elec, n_beta_elec
        )
    else:
        basis = SelectedBasis.explicit(
            seen_dets.keys(), norb, n_alpha_elec, n_beta_elec
        )
    return basis, report


@dataclass
class ExcitationTable:
    """Per-string single/double excitations that stay inside a string set.

    Stored as CSR-style flat arrays so the hot kernels can walk them without
    touching Python objects: entries for source string i live in the
    half-open slice [offsets[i], offsets[i+1]).
    """

    n_strings: int
    norb: int
    s_off: np.ndarray  # int64, len n+1
    s_tgt: np.ndarray  # int64 target string index
    s_hole: np.ndarray  # int16 orbital p
    s_part: np.ndarray  # int16 orbital r
    s_phase: np.ndarray  # int8 +-1
    d_off: np.ndarray
    d_tgt: np.ndarray
    d_hole1: np.ndarray  # p
    d_hole2: np.ndarray  # q
    d_part1: np.ndarray  # r
    d_part2: np.ndarray  # s
    d_phase: np.ndarray

    def singles_of(self, i: int) -> list[tuple[int, int, int, int]]:
        lo, hi = self.s_off[i], self.s_off[i + 1]
        return [
            (int(self.s_tgt[k]), int(self.s_hole[k]), int(self.s_part[k]), int(self.s_phase[k]))
            for k in range(lo, hi)
        ]

    def doubles_of(self, i: int) -> list[tuple[int, int, int, int, int, int]]:
        lo, hi = self.d_off[i], self.d_off[i + 1]
        return [
            (
                int(self.d_tgt[k]),
                int(self.d_hole1[k]),
                int(self.d_hole2[k]),
                int(self.d_part1[k]),
                int(self.d_part2[k]),
                int(self.d_phase[k]),
            )
            for k in range(lo, hi)
        ]


def build_excitation_table(strings: list[SpinString], norb: int) -> ExcitationTable:
    """Enumerate excitations of every string, keeping in-set targets only."""
    index = {s: i for i, s in enumerate(strings)}
    if len(index) != len(strings):
        raise ValueError("strings must be deduplicated")
    n = len(strings)

    s_off = np.zeros(n + 1, dtype=np.int64)
    d_off = np.zeros(n + 1, dtype=np.int64)
    s_rows: list[tuple[int, int, int, int]] = []
    d_rows: list[tuple[int, int, int, int, int, int]] = []
    for i, s in enumerate(strings):
        for target, p, r, phase in enumerate_singles(s, norb):
            j = index.get(target)
            if j is not None:
                s_rows.append((j, p, r, phase))
        s_off[i + 1] = len(s_rows)
        for target, p, q, r, s_orb, phase in enumerate_doubles(s, norb):
            j = index.get(target)
            if j is not None:
                d_rows.append((j, p, q, r, s_orb, phase))
        d_off[i + 1] = len(d_rows)

    def col(rows, k, dtype):
        return np.array([row[k] for row in rows], dtype=dtype)

    return ExcitationTable(
        n_strings=n,
        norb=norb,
        s_off=s_off,
        s_tgt=col(s_rows, 0, np.int64),
        s_hole=col(s_rows, 1, np.int16),
        s_part=col(s_rows, 2, np.int16),
        s_phase=col(s_rows, 3, np.int8),
        d_off=d_off,
        d_tgt=col(d_rows, 0, np.int64),
        d_hole1=col(d_rows, 1, np.int16),
        d_hole2=col(d_rows, 2, np.int16),
        d_part1=col(d_rows, 3, np.int16),
        d_part2=col(d_rows, 4, np.int16),
        d_phase=col(d_rows, 5, np.int8),
    )

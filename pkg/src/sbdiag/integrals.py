"""One- and two-electron integral storage and FCIDUMP I/O.

The two-electron integrals (pq|rs) are kept in chemist notation in a flat
array indexed by the composite triangular index of the (pq) and (rs) pairs,
so the full 8-fold permutational symmetry

    (pq|rs) = (qp|rs) = (pq|sr) = (qp|sr) = (rs|pq) = (sr|pq) = (rs|qp) = (sr|qp)

is structural: all eight index orders map to the same storage slot.
"""

from __future__ import annotations

import io
import re
from pathlib import Path
from typing import TextIO, Union

import numpy as np

__all__ = [
    "IntegralTable",
    "FcidumpError",
    "parse_fcidump",
    "write_fcidump",
]


class FcidumpError(ValueError):
    """Raised for malformed FCIDUMP content; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def _tri(a: int, b: int) -> int:
    """Triangular pair index with a >= b assumed by the caller's fold."""
    return a * (a + 1) // 2 + b if a >= b else b * (b + 1) // 2 + a


class IntegralTable:
    """Hamiltonian integrals: h_pq, (pq|rs), and the constant core energy.

    Attributes
    ----------
    norb : int
        Number of spatial orbitals.
    h : ndarray, shape (norb, norb)
        One-electron integrals; kept exactly symmetric by ``set_h``.
    eri : ndarray, 1-D
        Two-electron integrals in triangular-composite storage.
    e_core : float
        Constant energy offset (nuclear repulsion plus frozen core).
    nelec, ms2 : int or None
        Header metadata when parsed from an FCIDUMP file.
    n_conflicts : int
        Count of duplicate FCIDUMP entries that disagreed (last write wins).

    Unset entries read as zero.  The table is immutable by convention after
    construction/parsing and safe to read from any number of threads.
    """

    def __init__(self, norb: int, e_core: float = 0.0):
        if norb < 1 or norb > 64:
            raise ValueError(f"norb must be in [1, 64], got {norb}")
        self.norb = norb
        self.h = np.zeros((norb, norb), dtype=np.float64)
        npair = norb * (norb + 1) // 2
        self.eri = np.zeros(npair * (npair + 1) // 2, dtype=np.float64)
        self.e_core = float(e_core)
        self.nelec: int | None = None
        self.ms2: int | None = None
        self.n_conflicts = 0

    # -- element access -----------------------------------------------------

    def _check(self, *indices: int) -> None:
        for p in indices:
            if not 0 <= p < self.norb:
                raise IndexError(f"orbital index {p} out of range [0, {self.norb})")

    def set_h(self, p: int, q: int, value: float) -> None:
        self._check(p, q)
        self.h[p, q] = value
        self.h[q, p] = value

    def get_h(self, p: int, q: int) -> float:
        self._check(p, q)
        return float(self.h[p, q])

    def eri_index(self, p: int, q: int, r: int, s: int) -> int:
        """Canonical flat index of (pq|rs) after symmetry folding."""
        self._check(p, q, r, s)
        return _tri(_tri(p, q), _tri(r, s))

    def set_eri(self, p: int, q: int, r: int, s: int, value: float) -> None:
        self.eri[self.eri_index(p, q, r, s)] = value

    def get_eri(self, p: int, q: int, r: int, s: int) -> float:
        return float(self.eri[self.eri_index(p, q, r, s)])


def _parse_header(header_text: str, line_no: int) -> dict:
    # Tokenize KEY = VALUE groups; commas are separators.  Multi-valued
    # fields (ORBSYM=1,1,1) keep their first token, which suffices since
    # symmetry labels are ignored anyway.
    tokens = header_text.replace(",", " ").replace("=", " = ").split()
    fields = {}
    i = 0
    while i < len(tokens):
        if i + 1 < len(tokens) and tokens[i + 1] == "=":
            value = tokens[i + 2] if i + 2 < len(tokens) and tokens[i + 2] != "=" else ""
            fields[tokens[i].upper()] = value
            i += 3
        else:
            i += 1
    out = {}
    for key in ("NORB", "NELEC", "MS2"):
        if key not in fields:
            raise FcidumpError(f"header missing {key}=", line_no)
        try:
            out[key.lower()] = int(fields[key])
        except ValueError as exc:
            raise FcidumpError(f"bad {key} value {fields[key]!r}", line_no) from exc
    return out


def parse_fcidump(source: Union[str, Path, TextIO]) -> IntegralTable:
    """Parse FCIDUMP text into an :class:`IntegralTable`.

    ``source`` may be a path, an open text stream, or the file content itself
    (anything containing a newline or an ``&FCI`` marker is treated as
    content).  Indices in the file are 1-based.  A line ``value i j 0 0`` sets
    h[i-1][j-1], ``value i j k l`` (all positive) sets (i-1 j-1|k-1 l-1) and
    its symmetry images, and ``value 0 0 0 0`` sets the core energy.
    Duplicate entries that disagree are counted in ``n_conflicts`` with the
    last value winning.  ORBSYM/ISYM and other header fields are ignored.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        s = str(source)
        if "\n" in s or "&FCI" in s.upper():
            text = s
        else:
            text = Path(s).read_text()

    lines = text.splitlines()

    # Header: everything from &FCI up to the '/' or '&END' terminator,
    # possibly spanning several lines.
    if not lines or "&FCI" not in lines[0].upper():
        raise FcidumpError("expected '&FCI' header", 1)
    header_parts = []
    body_start = None
    for idx, line in enumerate(lines):
        stripped = line.strip()
        upper = stripped.upper()
        if upper.endswith("/") or upper.endswith("&END"):
            terminator = "/" if upper.endswith("/") else stripped[-4:]
            header_parts.append(stripped[: -len(terminator)])
            body_start = idx + 1
            break
        header_parts.append(stripped)
    if body_start is None:
        raise FcidumpError("header not terminated by '/' or '&END'", len(lines))

    header_text = " ".join(header_parts)
    header_text = re.sub(r"&FCI", "", header_text, flags=re.IGNORECASE)
    meta = _parse_header(header_text, body_start)

    table = IntegralTable(meta["norb"])
    table.nelec = meta["nelec"]
    table.ms2 = meta["ms2"]
    norb = table.norb

    seen: dict[tuple, float] = {}

    for offset, line in enumerate(lines[body_start:]):
        line_no = body_start + offset + 1
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise FcidumpError(f"expected 'value i j k l', got {stripped!r}", line_no)
        try:
            value = float(parts[0])
            i, j, k, l = (int(x) for x in parts[1:])
        except ValueError as exc:
            raise FcidumpError(f"unparseable fields in {stripped!r}", line_no) from exc
        for idx1 in (i, j, k, l):
            if not 0 <= idx1 <= norb:
                raise FcidumpError(f"index {idx1} outside [0, {norb}]", line_no)

        if i == j == k == l == 0:
            key: tuple = ("core",)
            old = seen.get(key)
            if old is not None and old != value:
                table.n_conflicts += 1
            seen[key] = value
            table.e_core = value
        elif i > 0 and j > 0 and k == 0 and l == 0:
            key = ("h", _tri(i - 1, j - 1))
            old = seen.get(key)
            if old is not None and old != value:
                table.n_conflicts += 1
            seen[key] = value
            table.set_h(i - 1, j - 1, value)
        elif i > 0 and j > 0 and k > 0 and l > 0:
            key = ("eri", table.eri_index(i - 1, j - 1, k - 1, l - 1))
            old = seen.get(key)
            if old is not None and old != value:
                table.n_conflicts += 1
            seen[key] = value
            table.set_eri(i - 1, j - 1, k - 1, l - 1, value)
        else:
            raise FcidumpError(f"unrecognized index pattern {i} {j} {k} {l}", line_no)

    return table


def write_fcidump(table: IntegralTable, nelec: int | None = None, ms2: int | None = None) -> str:
    """Serialize a table to FCIDUMP text (canonical entries only, zeros omitted).

    ``parse_fcidump(write_fcidump(t))`` reproduces ``t`` field-for-field.
    """
    norb = table.norb
    nelec = table.nelec if nelec is None else nelec
    ms2 = table.ms2 if ms2 is None else ms2
    out = io.StringIO()
    out.write(f"&FCI NORB={norb},NELEC={nelec or 0},MS2={ms2 or 0},\n/\n")
    pairs = [(p, q) for p in range(norb) for q in range(p + 1)]  # tri-index order
    for pq, (p, q) in enumerate(pairs):
        for rs, (r, s) in enumerate(pairs[: pq + 1]):
            v = table.eri[pq * (pq + 1) // 2 + rs]
            if v != 0.0:
                out.write(f"{v:.16e} {p + 1} {q + 1} {r + 1} {s + 1}\n")
    for p in range(norb):
        for q in range(p + 1):
            v = table.h[p, q]
            if v != 0.0:
                out.write(f"{v:.16e} {p + 1} {q + 1} 0 0\n")
    if table.e_core != 0.0:
        out.write(f"{table.e_core:.16e} 0 0 0 0\n")
    return out.getvalue()

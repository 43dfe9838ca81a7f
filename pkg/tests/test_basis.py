from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sbdiag.basis import (
    Determinant,
    SampleFormatError,
    SelectedBasis,
    build_excitation_table,
    det_to_line,
    enumerate_doubles,
    enumerate_singles,
    ingest_samples,
    popcount,
    single_phase,
)
from sbdiag.synth import all_strings


# -- line parsing / ingestion -------------------------------------------------


def test_line_orientation_leftmost_char_is_orbital_zero():
    basis, _ = ingest_samples(["110011"], norb=3, n_alpha_elec=2, n_beta_elec=2, mode="explicit")
    det = basis.dets[0]
    assert det.alpha == 0b011  # chars '110' -> orbitals 0,1 occupied
    assert det.beta == 0b110  # chars '011' -> orbitals 1,2 occupied


def test_ingest_product_mode_dims_and_index():
    lines = ["1100" + "0011", "1010" + "0101"]
    basis, report = ingest_samples(lines, norb=4, n_alpha_elec=2, n_beta_elec=2)
    assert basis.mode == "product"
    assert len(basis.alpha_strings) == 2
    assert len(basis.beta_strings) == 2
    assert basis.dimension == 4
    assert report.n_lines == 2
    assert report.n_filtered == 0
    assert report.n_duplicates == 0
    # global index of (ia, ib) is ia*|B| + ib
    for ia, a in enumerate(basis.alpha_strings):
        for ib, b in enumerate(basis.beta_strings):
            i = basis.index_of(Determinant(a, b))
            assert i == ia * len(basis.beta_strings) + ib
            assert basis.det_at(i) == Determinant(a, b)


def test_ingest_filter_drops_wrong_popcount():
    lines = ["1100" + "0011", "1110" + "0011", "1100" + "0001"]
    basis, report = ingest_samples(lines, norb=4, n_alpha_elec=2, n_beta_elec=2)
    assert report.n_filtered == 2
    assert basis.dimension == 1


def test_ingest_dedup_idempotent():
    lines = ["1100" + "0011"]
    once, _ = ingest_samples(lines, 4, 2, 2)
    twice, report = ingest_samples(lines * 2, 4, 2, 2)
    assert once.alpha_strings == twice.alpha_strings
    assert once.beta_strings == twice.beta_strings
    assert report.n_duplicates == 1
    assert report.det_counts[Determinant(0b0011, 0b1100)] == 2


def test_ingest_skips_comments_and_blanks():
    text = "# header comment\n\n1100" + "0011\n"
    basis, report = ingest_samples(text, 4, 2, 2)
    assert report.n_lines == 1
    assert basis.dimension == 1


def test_ingest_explicit_mode_keeps_det_list():
    lines = ["1100" + "0011", "1010" + "0101"]
    basis, _ = ingest_samples(lines, 4, 2, 2, mode="explicit")
    assert basis.mode == "explicit"
    assert basis.dimension == 2  # no cartesian product
    for i, det in enumerate(basis.dets):
        assert basis.index_of(det) == i


@pytest.mark.parametrize(
    "line,message_part",
    [("110", "characters"), ("11a0" + "0011", "not '0' or '1'")],
)
def test_ingest_format_errors(line, message_part):
    with pytest.raises(SampleFormatError) as err:
        ingest_samples([line], 4, 2, 2)
    assert err.value.line_no == 1
    assert message_part in str(err.value)


def test_det_to_line_roundtrip():
    det = Determinant(0b0110, 0b1001)
    line = det_to_line(det, 4)
    basis, _ = ingest_samples([line], 4, 2, 2, mode="explicit")
    assert basis.dets[0] == det


# -- excitation enumeration ---------------------------------------------------


def test_enumerate_singles_worked_example():
    out = {(t, p, r, ph) for (t, p, r, ph) in enumerate_singles(0b0011, 3)}
    assert out == {(0b0101, 1, 2, 1), (0b0110, 0, 2, -1)}


def test_enumerate_singles_empty_string():
    assert enumerate_singles(0, 4) == []


def test_enumerate_doubles_worked_example():
    # holes {0,1}, particles {2,3}: phase is the product of the two
    # sequential single-move parities, 0->2 on 0b0011 (orbital 1 lies
    # between: -1) then 1->3 on the intermediate 0b0110 (orbital 2 lies
    # between: -1), so the pair carries phase +1.
    out = enumerate_doubles(0b0011, 4)
    assert out == [(0b1100, 0, 1, 2, 3, +1)]


def test_enumerate_doubles_degenerate_cases():
    assert enumerate_doubles(0b0001, 4) == []  # fewer than 2 electrons
    assert enumerate_doubles(0b0111, 4) == []  # fewer than 2 virtuals


@given(st.integers(2, 12), st.data())
@settings(max_examples=60, deadline=None)
def test_singles_count_formula(norb, data):
    ne = data.draw(st.integers(0, norb))
    occ = data.draw(
        st.lists(st.integers(0, norb - 1), min_size=ne, max_size=ne, unique=True)
    )
    s = sum(1 << p for p in occ)
    singles = enumerate_singles(s, norb)
    assert len(singles) == ne * (norb - ne)
    for target, p, r, phase in singles:
        assert popcount(target) == popcount(s)
        assert phase in (+1, -1)
        assert (s >> p) & 1 and not (s >> r) & 1


@given(st.integers(2, 10), st.data())
@settings(max_examples=60, deadline=None)
def test_doubles_conserve_popcount_and_sign(norb, data):
    ne = data.draw(st.integers(0, norb))
    occ = data.draw(
        st.lists(st.integers(0, norb - 1), min_size=ne, max_size=ne, unique=True)
    )
    s = sum(1 << p for p in occ)
    doubles = enumerate_doubles(s, norb)
    nv = norb - ne
    assert len(doubles) == (ne * (ne - 1) // 2) * (nv * (nv - 1) // 2)
    seen = set()
    for target, p, q, r, s_orb, phase in doubles:
        assert popcount(target) == ne
        assert phase in (+1, -1)
        assert p < q and r < s_orb
        seen.add((p, q, r, s_orb))
    assert len(seen) == len(doubles)  # each hole/particle pair emitted once


def test_single_phase_counts_occupied_between():
    assert single_phase(0b0011, 1, 2) == +1  # nothing strictly between 1 and 2
    assert single_phase(0b0011, 0, 2) == -1  # orbital 1 occupied between 0 and 2
    assert single_phase(0b0101, 0, 4) == -1  # orbital 2 occupied between
    assert single_phase(0b0101, 2, 0) == single_phase(0b0101, 0, 2)  # direction-free


def test_two_step_singles_reach_hamming_leq_4():
    # applying enumerate_singles twice reaches exactly the equal-popcount
    # strings within Hamming distance 4 (enough orbitals assumed: norb >= 3)
    for norb in range(3, 7):
        for ne in range(1, norb):
            for occ in combinations(range(norb), ne):
                s = sum(1 << p for p in occ)
                one = {t for (t, *_ ) in enumerate_singles(s, norb)}
                two = set()
                for t1 in one:
                    two |= {t for (t, *_ ) in enumerate_singles(t1, norb)}
                expected = {u for u in all_strings(norb, ne) if popcount(u ^ s) <= 4}
                assert two == expected


# -- excitation tables --------------------------------------------------------


def test_table_worked_example():
    strings = [0b0011, 0b0101, 0b0110]
    table = build_excitation_table(strings, 3)
    assert set(table.singles_of(0)) == {(1, 1, 2, +1), (2, 0, 2, -1)}


def test_table_singleton_set_is_empty():
    table = build_excitation_table([0b0011], 4)
    assert table.singles_of(0) == []
    assert table.doubles_of(0) == []


def test_table_complete_set_retains_everything():
    norb, ne = 5, 2
    strings = all_strings(norb, ne)
    table = build_excitation_table(strings, norb)
    for i, s in enumerate(strings):
        assert len(table.singles_of(i)) == len(enumerate_singles(s, norb))
        assert len(table.doubles_of(i)) == len(enumerate_doubles(s, norb))


@pytest.mark.parametrize("norb,ne", [(4, 2), (5, 2), (6, 3)])
def test_table_phase_involution_and_popcount(norb, ne):
    strings = all_strings(norb, ne)
    table = build_excitation_table(strings, norb)
    singles = {}
    for i in range(len(strings)):
        for j, p, r, phase in table.singles_of(i):
            assert popcount(strings[j]) == ne
            singles[(i, j, p, r)] = phase
        for j, *_orbs, phase in table.doubles_of(i):
            assert popcount(strings[j]) == ne
            assert phase in (+1, -1)
    # the reverse single (j -> i, holes/particles swapped) carries the same phase
    for (i, j, p, r), phase in singles.items():
        assert singles[(j, i, r, p)] == phase


def test_table_rejects_duplicates():
    with pytest.raises(ValueError):
        build_excitation_table([0b0011, 0b0011], 4)


# -- SelectedBasis validation -------------------------------------------------


def test_basis_rejects_wrong_popcount():
    with pytest.raises(ValueError):
        SelectedBasis.product([0b0111], [0b0011], norb=4, n_alpha_elec=2, n_beta_elec=2)


def test_basis_rejects_bits_above_norb():
    with pytest.raises(ValueError):
        SelectedBasis.product([0b10001], [0b00011], norb=4, n_alpha_elec=2, n_beta_elec=2)


def test_explicit_basis_rejects_duplicates():
    det = Determinant(0b0011, 0b0011)
    with pytest.raises(ValueError):
        SelectedBasis.explicit([det, det], 4, 2, 2)


def test_det_at_out_of_range():
    basis = SelectedBasis.product([0b0011], [0b0011], 4, 2, 2)
    with pytest.raises(IndexError):
        basis.det_at(1)

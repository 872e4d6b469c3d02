from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gostrata.dieudonne import (
    DieudonneError,
    build_isogeny_triple,
    essential_frobenius_matrix,
    essential_verschiebung_matrix,
    half_system,
    hasse_vanishes,
    lattice_in_frame,
    point_from_half_system,
    point_from_json,
    point_to_json,
    random_point,
    reconstruct_lattices,
    reconstruct_point,
    ring_for_datum,
    stratum_of_point,
    twisted_partial_frobenius,
)
from gostrata.places import (
    ArchPlace,
    Level,
    PrimeType,
    build_place_system,
    classify_prime,
    conjugate,
    frobenius_shift,
    make_datum,
    n_tau,
    restrict,
)
from gostrata.strata import (
    CaseTag,
    delta_sets,
    dimension_count_check,
    lift_assignment,
    stratum_descriptor,
)
from gostrata.witt import (
    lattice_colength,
    lattice_equal,
    lattice_normalize,
    lattice_scale,
    mat2,
    mat_identity,
    mat_mul,
    mat_sigma,
    mat_smul,
    standard_lattice,
    witt_ring,
)


def _datum(f, split, s_indices=()):
    system = build_place_system([(f, split)])
    return make_datum(system, {ArchPlace("p1", i % f) for i in s_indices})


def _antidiag_point(datum, p=3, N=8):
    """All F-matrices antidiag(1, p) with the standard alternating pairing."""
    ring = ring_for_datum(datum, p, N)
    half = half_system(datum)
    f_mats = {emb: mat2(ring, [[0, 1], [p, 0]]) for emb in half}
    pairings = {emb: mat2(ring, [[0, 1], [ring.pn - 1, 0]]) for emb in half}
    signature = {emb: 1 for emb in datum.places.embeddings()}
    return ring, point_from_half_system(ring, datum, f_mats, pairings, signature)


def _diag_point(datum, p=3, N=8):
    """All F-matrices diag(1, p); the partial Hasse invariants never vanish."""
    ring = ring_for_datum(datum, p, N)
    half = half_system(datum)
    f_mats = {emb: mat2(ring, [[1, 0], [0, p]]) for emb in half}
    pairings = {emb: mat2(ring, [[0, 1], [ring.pn - 1, 0]]) for emb in half}
    signature = {emb: 1 for emb in datum.places.embeddings()}
    return ring, point_from_half_system(ring, datum, f_mats, pairings, signature)


def _template_point(datum, vanish, p=3, N=8):
    """Antidiagonal template at the chosen half-system positions, diagonal at
    the rest; the Hasse invariant then vanishes exactly below the antidiagonal
    spots."""
    ring = ring_for_datum(datum, p, N)
    half = half_system(datum)
    f_mats = {}
    for k, emb in enumerate(half):
        if k in vanish:
            f_mats[emb] = mat2(ring, [[0, 1], [p, 0]])
        else:
            f_mats[emb] = mat2(ring, [[1, 0], [0, p]])
    pairings = {emb: mat2(ring, [[0, 1], [ring.pn - 1, 0]]) for emb in half}
    signature = {emb: 1 for emb in datum.places.embeddings()}
    return ring, point_from_half_system(ring, datum, f_mats, pairings, signature)


def _zeros(pt):
    return frozenset(emb for emb, value in pt.signature.s if value == 0)


def _mats_close(ring, a, b):
    return all(
        ring.val(ring.sub(x, y)) >= ring.budget
        for ra, rb in zip(a, b)
        for x, y in zip(ra, rb)
    )


def _roundtrip(ring, datum, pt, t):
    descriptor = stratum_descriptor(datum, t)
    lift = lift_assignment(datum, descriptor, s_lift=_zeros(pt))
    triple = build_isogeny_triple(pt, t, descriptor, lift)
    m, l = reconstruct_lattices(
        triple.b_point, dict(triple.j_lines), t, lift, datum, descriptor,
        dict(triple.h_lines),
    )
    for emb in pt.embeddings():
        frame = lattice_normalize(triple.b_at(emb))
        assert lattice_equal(m[emb], lattice_in_frame(ring, frame, triple.c_at(emb)))
        assert lattice_equal(l[emb], lattice_in_frame(ring, frame, triple.a_at(emb)))
    back = reconstruct_point(
        triple.b_point, dict(triple.j_lines), t, lift, datum, descriptor,
        dict(triple.h_lines),
    )
    assert back.signature == pt.signature
    assert stratum_of_point(back) == stratum_of_point(pt)
    return triple


# --- point construction -------------------------------------------------------


def test_antidiag_point_is_everywhere_supersingular():
    datum = _datum(2, True)
    ring, pt = _antidiag_point(datum)
    assert all(value == 1 for _, value in pt.signature.s)
    assert stratum_of_point(pt) == frozenset(datum.places.arch_places("p1"))
    # V is the same antidiagonal matrix here, up to sign and trusted precision
    for emb in pt.embeddings():
        assert _mats_close(ring, pt.v_mat(emb), pt.f_mat(emb)) or _mats_close(
            ring, pt.v_mat(emb), mat_smul(ring, -1, pt.f_mat(emb))
        )


def test_diag_point_has_empty_stratum():
    for split in (True, False):
        datum = _datum(3, split)
        _, pt = _diag_point(datum)
        assert stratum_of_point(pt) == frozenset()


def test_make_point_rejects_wrong_signature():
    datum = _datum(2, True)
    ring = ring_for_datum(datum, 3)
    half = half_system(datum)
    f_mats = {emb: mat_identity(ring) for emb in half}
    pairings = {emb: mat2(ring, [[0, 1], [ring.pn - 1, 0]]) for emb in half}
    signature = {emb: 1 for emb in datum.places.embeddings()}
    with pytest.raises(DieudonneError):
        point_from_half_system(ring, datum, f_mats, pairings, signature)


def test_make_point_rejects_bad_divisors():
    datum = _datum(1, True)
    ring = ring_for_datum(datum, 3)
    emb = half_system(datum)[0]
    f_mats = {emb: mat2(ring, [[1, 0], [0, 9]])}
    pairings = {emb: mat2(ring, [[0, 1], [ring.pn - 1, 0]])}
    with pytest.raises(DieudonneError):
        point_from_half_system(
            ring, datum, f_mats, pairings, {e: 1 for e in datum.places.embeddings()}
        )


def test_make_point_rejects_imperfect_pairing():
    datum = _datum(1, True)
    ring = ring_for_datum(datum, 3)
    emb = half_system(datum)[0]
    f_mats = {emb: mat2(ring, [[0, 1], [3, 0]])}
    pairings = {emb: mat2(ring, [[0, 3], [ring.pn - 3, 0]])}
    with pytest.raises(DieudonneError):
        point_from_half_system(
            ring, datum, f_mats, pairings, {e: 1 for e in datum.places.embeddings()}
        )


def test_make_point_rejects_mismatched_ring_degree():
    datum = _datum(3, False)  # cycle length 6
    ring = witt_ring(3, 4, 8)
    with pytest.raises(DieudonneError):
        random_point(random.Random(0), ring, datum)


def test_random_point_respects_requested_signature():
    rng = random.Random(17)
    datum = _datum(4, True, [0, 2])
    ring = ring_for_datum(datum, 5)
    pt = random_point(rng, ring, datum)
    system = datum.places
    for emb, value in pt.signature.s:
        tau = restrict(system, emb)
        if tau in datum.s.s_infty:
            assert value in (0, 2)
            assert value + pt.signature.at(conjugate(system, emb)) == 2
        else:
            assert value == 1


# --- essential Frobenius calculus ---------------------------------------------


def test_fv_equals_p_both_orders():
    rng = random.Random(23)
    for f, split in [(2, True), (3, False)]:
        datum = _datum(f, split)
        ring = ring_for_datum(datum, 3)
        pt = random_point(rng, ring, datum)
        p_id = mat_smul(ring, ring.p, mat_identity(ring))
        for emb in pt.embeddings():
            fv = mat_mul(ring, pt.f_mat(emb), mat_sigma(ring, pt.v_mat(emb), 1))
            vf = mat_mul(
                ring, pt.v_mat(emb), mat_sigma(ring, pt.f_mat(emb), ring.m - 1)
            )
            assert _mats_close(ring, fv, p_id)
            assert _mats_close(ring, vf, p_id)


def test_essential_composites_are_p_at_free_embeddings():
    rng = random.Random(29)
    for f, split, s_indices in [(3, True, [0]), (4, True, [1, 2]), (2, False, [])]:
        datum = _datum(f, split, s_indices)
        ring = ring_for_datum(datum, 3)
        pt = random_point(rng, ring, datum)
        system = datum.places
        p_id = mat_smul(ring, ring.p, mat_identity(ring))
        for emb in pt.embeddings():
            tau = restrict(system, emb)
            if tau in datum.s.s_infty:
                continue
            n = n_tau(datum, tau)[0]
            mf, sf = essential_frobenius_matrix(pt, emb, n)
            mv, sv = essential_verschiebung_matrix(pt, emb, n)
            # F_es^n after V_es^n is multiplication by p
            comp = mat_mul(ring, mf, mat_sigma(ring, mv, n % ring.m))
            assert _mats_close(ring, _shifted(ring, comp, sf + sv), p_id)
            # and in the other order as well
            comp = mat_mul(ring, mv, mat_sigma(ring, mf, (ring.m - n) % ring.m))
            assert _mats_close(ring, _shifted(ring, comp, sf + sv), p_id)
            # each composite has a one-dimensional cokernel
            from gostrata.witt import elementary_divisors

            assert elementary_divisors(ring, _shifted(ring, mf, sf)) == (0, 1)
            assert elementary_divisors(ring, _shifted(ring, mv, sv)) == (0, 1)


def _shifted(ring, mat, k):
    from gostrata.dieudonne import _mat_shift

    return _mat_shift(ring, mat, k)


def test_hasse_invariant_is_conjugation_symmetric():
    rng = random.Random(31)
    for f, split in [(2, True), (3, True), (2, False)]:
        datum = _datum(f, split)
        ring = ring_for_datum(datum, 3)
        for _ in range(10):
            pt = random_point(rng, ring, datum)
            for emb in pt.embeddings():
                assert hasse_vanishes(pt, emb) == hasse_vanishes(
                    pt, conjugate(datum.places, emb)
                )


# --- the isogeny chain --------------------------------------------------------


def test_triple_colengths_and_target_signature():
    rng = random.Random(37)
    datum = _datum(3, True)
    ring = ring_for_datum(datum, 3)
    found = 0
    while found < 5:
        pt = random_point(rng, ring, datum)
        stratum = stratum_of_point(pt)
        if not stratum:
            continue
        t = frozenset(sorted(stratum)[:1])
        descriptor = stratum_descriptor(datum, t)
        lift = lift_assignment(datum, descriptor, s_lift=_zeros(pt))
        delta = delta_sets(datum, descriptor, lift)
        triple = build_isogeny_triple(pt, t, descriptor, lift)
        std = standard_lattice(ring)
        for emb in pt.embeddings():
            assert lattice_colength(triple.c_at(emb), triple.a_at(emb)) == int(
                emb in delta.plus
            )
            assert lattice_colength(triple.c_at(emb), triple.b_at(emb)) == int(
                emb in delta.minus
            )
        expected = dimension_count_check(datum, pt.signature, delta)
        assert triple.b_point.signature == expected
        for _, line in triple.j_lines:
            assert lattice_colength(std, line) == 1
            assert lattice_colength(line, lattice_scale(std, 1)) == 1
        found += 1


def test_triple_requires_membership_in_stratum():
    datum = _datum(3, True)
    ring, pt = _diag_point(datum)
    with pytest.raises(DieudonneError):
        build_isogeny_triple(pt, frozenset({ArchPlace("p1", 0)}))


# --- roundtrips ---------------------------------------------------------------


def test_roundtrip_on_random_points():
    rng = random.Random(41)
    for f, split in [(2, True), (3, True), (4, True)]:
        datum = _datum(f, split, [] if f % 2 == 0 else [0])
        ring = ring_for_datum(datum, 3)
        done = 0
        for _ in range(200):
            pt = random_point(rng, ring, datum)
            stratum = stratum_of_point(pt)
            if not stratum:
                continue
            for r in range(1, len(stratum) + 1):
                for combo in itertools.combinations(sorted(stratum), r):
                    _roundtrip(ring, datum, pt, frozenset(combo))
                    done += 1
            if done >= 6:
                break
        assert done > 0


def test_template_points_have_prescribed_strata():
    for f, split in [(3, False), (4, False), (3, True)]:
        datum = _datum(f, split)
        for bits in range(2**f):
            vanish = {k for k in range(f) if bits >> k & 1}
            _, pt = _template_point(datum, vanish)
            assert stratum_of_point(pt) == {
                ArchPlace("p1", (k - 1) % f) for k in vanish
            }


def test_roundtrip_on_inert_template_points():
    for f in (2, 3, 4):
        datum = _datum(f, False)
        for bits in range(1, 2**f):
            vanish = {k for k in range(f) if bits >> k & 1}
            ring, pt = _template_point(datum, vanish)
            stratum = stratum_of_point(pt)
            for r in range(1, len(stratum) + 1):
                for combo in itertools.combinations(sorted(stratum), r):
                    _roundtrip(ring, datum, pt, frozenset(combo))


def test_roundtrip_full_cycle_iwahori_case():
    for f, split in [(2, True), (2, False), (4, False)]:
        datum = _datum(f, split)
        ring, pt = _antidiag_point(datum)
        t = frozenset(datum.places.arch_places("p1"))
        descriptor = stratum_descriptor(datum, t)
        assert descriptor.case_at("p1") is CaseTag.A2
        triple = _roundtrip(ring, datum, pt, t)
        target = triple.b_point.datum
        assert classify_prime(target, "p1") is PrimeType.ALPHA_SHARP
        assert target.level("p1") is Level.IWAHORI
        assert len(triple.h_lines) == len(delta_sets(
            datum, descriptor, lift_assignment(datum, descriptor, s_lift=frozenset())
        ).minus)


def test_roundtrip_full_cycle_ramified_case():
    for f in (1, 3):
        datum = _datum(f, False)
        ring, pt = _antidiag_point(datum)
        t = frozenset(datum.places.arch_places("p1"))
        descriptor = stratum_descriptor(datum, t)
        assert descriptor.case_at("p1") is CaseTag.B2
        triple = _roundtrip(ring, datum, pt, t)
        target = triple.b_point.datum
        assert classify_prime(target, "p1") is PrimeType.BETA_SHARP
        assert target.level("p1") is Level.MAXIMAL_ORDER
        # the target pairing is imperfect with colength exactly one
        for emb in triple.b_point.embeddings():
            from gostrata.witt import mat_det

            assert ring.val(mat_det(ring, triple.b_point.pairing(emb))) == 1


def test_roundtrip_odd_chain_uses_j_line():
    # a T placed right below a ramified place produces an odd chain, whose
    # reconstruction consumes the j-line data
    rng = random.Random(47)
    datum = _datum(3, True, [0])
    ring = ring_for_datum(datum, 3)
    target = ArchPlace("p1", 2)
    hits = 0
    for _ in range(300):
        pt = random_point(rng, ring, datum)
        if target not in stratum_of_point(pt):
            continue
        t = frozenset({target})
        descriptor = stratum_descriptor(datum, t)
        lift = lift_assignment(datum, descriptor, s_lift=_zeros(pt))
        recipe = lift.recipe_at("p1")
        (base, a_list), = recipe.entries
        triple = build_isogeny_triple(pt, t, descriptor, lift)
        if a_list[-1] == _chain_m(datum, t, base) + 1:
            assert triple.j_lines
            # dropping the j-line breaks the reconstruction
            with pytest.raises(DieudonneError):
                reconstruct_lattices(
                    triple.b_point, {}, t, lift, datum, descriptor, {}
                )
            hits += 1
        _roundtrip(ring, datum, pt, t)
        if hits >= 3:
            break
    assert hits > 0


def _chain_m(datum, t, base_tilde):
    from gostrata.strata import chain_decompose

    top = restrict(datum.places, base_tilde)
    for chain in chain_decompose(datum, "p1", t):
        if chain.top == top:
            return chain.m
    raise AssertionError("no chain found")


# --- twisted partial Frobenius ------------------------------------------------


def test_twist_shifts_stratum_by_two():
    rng = random.Random(53)
    datum = _datum(3, True, [0, 1])
    ring = ring_for_datum(datum, 3)
    system = datum.places
    for _ in range(15):
        pt = random_point(rng, ring, datum)
        tw = twisted_partial_frobenius(pt)
        assert stratum_of_point(tw) == {
            frobenius_shift(system, tau, 2) for tau in stratum_of_point(pt)
        }
        assert tw.datum.s.s_infty == frozenset(
            frobenius_shift(system, tau, 2) for tau in datum.s.s_infty
        )


def test_twist_iterates_back_to_identity():
    rng = random.Random(59)
    datum = _datum(3, True)
    ring = ring_for_datum(datum, 3)
    pt = random_point(rng, ring, datum)
    out = pt
    for _ in range(3):  # sigma^6 = identity on a 3-cycle
        out = twisted_partial_frobenius(out)
    assert out == pt


# --- serialization ------------------------------------------------------------


def test_point_json_roundtrip():
    rng = random.Random(61)
    datum = _datum(2, False, [0])
    ring = ring_for_datum(datum, 5)
    pt = random_point(rng, ring, datum)
    assert point_from_json(point_to_json(pt)) == pt


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**6))
def test_random_points_always_validate(seed):
    rng = random.Random(seed)
    datum = _datum(2, True)
    ring = ring_for_datum(datum, 3)
    pt = random_point(rng, ring, datum)
    for emb in pt.embeddings():
        assert hasse_vanishes(pt, emb) == hasse_vanishes(
            pt, conjugate(datum.places, emb)
        )

"""Stream engine: expansion semantics against brute-force loop-nest oracles."""

import numpy as np
import pytest

from revelsim._accel import BACKEND, PatternDomainError
from revelsim.fixedpoint import Fx
from revelsim.isa import ReuseSpec, StreamPattern
from revelsim.streams import (expand_const, gen_address_table, gen_addresses,
                              reuse_pop_schedule, vectorize_with_mask)


def brute_force(base, cj, ci, nj, ni, sji):
    """The reference loop nest, evaluated directly."""
    out = []
    for j in range(nj):
        bound = ni + j * sji
        assert bound >= 0
        trip = int(np.ceil(bound))
        for i in range(trip):
            out.append(base + j * cj + i * ci)
    return out


def pat(base=0, cj=0, ci=1, nj=1, ni=1, sji=0):
    dims = 2 if (nj != 1 or cj or sji) else 1
    return StreamPattern(base=base, ci=ci, ni=ni, cj=cj, nj=nj,
                         sji=Fx.from_value(sji), dims=dims)


def test_inductive_example():
    p = pat(base=0, cj=5, ci=1, nj=3, ni=4, sji=-1)
    assert [a.addr for a in gen_addresses(p)] == [0, 1, 2, 3, 5, 6, 7, 10, 11]


def test_single_element():
    p = pat(base=7, nj=1, ni=1)
    assert [a.addr for a in gen_addresses(p)] == [7]


def test_rectangular():
    p = pat(base=0, cj=4, ci=1, nj=2, ni=2)
    assert [a.addr for a in gen_addresses(p)] == [0, 1, 4, 5]


def test_iter_coords_and_last_flags():
    p = pat(base=0, cj=10, ci=1, nj=2, ni=2)
    elems = gen_addresses(p)
    assert [e.iter_coords for e in elems] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert [e.last_in_dim[0] for e in elems] == [False, True, False, True]
    assert [e.last_in_dim[1] for e in elems] == [False, False, True, True]


def test_negative_realized_count_rejected():
    p = pat(base=0, cj=1, ci=1, nj=5, ni=2, sji=-1)
    with pytest.raises(PatternDomainError):
        gen_addresses(p)


def test_oracle_equivalence_randomized():
    # dims <= 2, |c| <= 16, n <= 32, |s| <= 4: element-for-element equality
    rng = np.random.default_rng(7)
    for _ in range(1000):
        nj = int(rng.integers(1, 33))
        ni = int(rng.integers(0, 33))
        cj = int(rng.integers(-16, 17))
        ci = int(rng.integers(-16, 17))
        smax = ni // max(nj - 1, 1)
        sji = int(rng.integers(-min(4, smax) if nj > 1 else 0, 5))
        p = pat(base=int(rng.integers(0, 64)), cj=cj, ci=ci, nj=nj, ni=ni, sji=sji)
        want = brute_force(p.base, cj, ci, nj, ni, sji)
        got = [a.addr for a in gen_addresses(p)]
        assert got == want


def test_const_paper_sequence():
    assert list(expand_const(0, 1, nj=3, ni=3, sji=-1)) == [0, 0, 0, 1, 0, 0, 1, 0, 1]


def test_const_zero_run():
    assert list(expand_const(5, 9, nj=1, ni=0)) == [9]


def test_const_positive_stretch():
    assert list(expand_const(0, 1, nj=2, ni=1, sji=1)) == [0, 1, 0, 0, 1]


def test_const_length_formula():
    rng = np.random.default_rng(3)
    for _ in range(200):
        nj = int(rng.integers(1, 12))
        ni = int(rng.integers(0, 12))
        sji = int(rng.integers(0, 3))
        vals = expand_const(1.5, -2.0, nj=nj, ni=ni, sji=sji)
        assert len(vals) == sum(ni + j * sji + 1 for j in range(nj))


def test_reuse_solver_schedule():
    r = ReuseSpec(nc=Fx.from_value(3), sc=Fx.from_value(-1))
    assert list(reuse_pop_schedule(r, 3)) == [3, 2, 1]


def test_reuse_plain_fifo():
    r = ReuseSpec()
    assert list(reuse_pop_schedule(r, 5)) == [1, 1, 1, 1, 1]


def test_reuse_fractional_vectorized():
    r = ReuseSpec(nc=Fx.from_value(2.0), sc=Fx.from_value(-0.5))
    assert list(reuse_pop_schedule(r, 4)) == [2, 2, 1, 1]


def test_reuse_below_one_read_rejected():
    r = ReuseSpec(nc=Fx.from_value(2), sc=Fx.from_value(-1))
    with pytest.raises(PatternDomainError):
        reuse_pop_schedule(r, 3)  # element 2 would need 0 reads


def test_mask_partial_beat():
    beats = vectorize_with_mask(pat(ci=1, ni=5), 4)
    assert [b.predicate for b in beats] == [(True,) * 4,
                                            (True, False, False, False)]


def test_mask_exact_fit():
    beats = vectorize_with_mask(pat(ci=1, ni=4), 4)
    assert [b.predicate for b in beats] == [(True,) * 4]


def test_mask_triangular():
    p = pat(base=0, cj=4, ci=1, nj=4, ni=4, sji=-1)
    beats = vectorize_with_mask(p, 4)
    assert [sum(b.predicate) for b in beats] == [4, 3, 2, 1]


def test_mask_never_straddles_runs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        nj = int(rng.integers(1, 9))
        ni = int(rng.integers(0, 17))
        p = pat(base=0, cj=100, ci=1, nj=nj, ni=ni)
        for w in (2, 4, 8):
            beats = vectorize_with_mask(p, w)
            for b in beats:
                vals = b.valid_values()
                # all lanes of one beat must belong to one inner run
                assert all(v // 100 == vals[0] // 100 for v in vals)


def test_mask_concatenation_matches_generation():
    rng = np.random.default_rng(13)
    for _ in range(200):
        nj = int(rng.integers(1, 9))
        ni = int(rng.integers(0, 17))
        sji = int(rng.integers(0, 2))
        p = pat(base=3, cj=37, ci=2, nj=nj, ni=ni, sji=sji)
        flat = [a.addr for a in gen_addresses(p)]
        for w in (1, 4, 8):
            beats = vectorize_with_mask(p, w)
            cat = [v for b in beats for v in b.valid_values()]
            assert cat == flat
            assert all(any(b.predicate) for b in beats)


def test_backend_reported():
    assert BACKEND in ("numba", "numpy")


def test_numpy_fallback_matches_active_backend(monkeypatch):
    # run the pure-numpy reference path directly and compare
    from revelsim import _accel
    rng = np.random.default_rng(5)
    for _ in range(50):
        nj = int(rng.integers(1, 10))
        ni = int(rng.integers(0, 10))
        sji = int(rng.integers(0, 3))
        got = _accel.gen_address_arrays(1, 9, 1, nj, ni * 256, sji * 256)
        ref = _accel._gen_addresses_np(1, 9, 1, nj, ni * 256, sji * 256)
        assert got[0].tolist() == ref[0].tolist()
        c = _accel.expand_const_array(0.5, 2.5, nj, ni * 256, sji * 256)
        cr = _accel._expand_const_np(0.5, 2.5, nj, ni * 256, sji * 256)
        assert c.tolist() == cr.tolist()

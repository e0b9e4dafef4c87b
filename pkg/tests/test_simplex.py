import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chemdim.core import ValidationError
from chemdim.numerics import svd_reduce
from chemdim.simplex import augment, build_candidates, candidate_count, nfindr_pass, simplex_volume
from oracles import max_volume_exhaustive, simplex_volume_gram


def test_volume_examples():
    assert simplex_volume(augment([[0.0, 1.0]])) == pytest.approx(1.0)
    assert simplex_volume(augment(np.array([[0, 0], [1, 0], [0, 1]], float).T)) == pytest.approx(0.5)
    assert simplex_volume(augment(np.array([[0, 0], [1, 1], [1, 1]], float).T)) == 0.0


@given(st.integers(2, 6), st.integers(0, 2**31))
def test_volume_matches_gram_oracle(i, seed):
    v = np.random.default_rng(seed).standard_normal((i, i - 1))
    assert simplex_volume(augment(v.T)) == pytest.approx(simplex_volume_gram(v), rel=1e-8, abs=1e-12)


def test_volume_rejects_non_square():
    with pytest.raises(ValidationError):
        simplex_volume(np.ones((2, 3)))


def test_triangle_vertices_win(rng):
    tri = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
    w = rng.dirichlet(np.ones(3), 40)
    pts = np.vstack([w @ tri, tri])
    order = rng.permutation(len(pts))
    pts = pts[order]
    want = set(np.argsort(order)[40:].tolist())
    idx, vol = nfindr_pass(pts, 3, seed=3)
    assert set(idx.tolist()) == want
    assert vol == pytest.approx(6.0)


def test_identical_rows_zero_volume():
    idx, vol = nfindr_pass(np.ones((6, 2)), 3, seed=0)
    assert vol == 0.0 and len(set(idx.tolist())) == 3


def test_two_endmembers_pairwise_oracle(rng):
    e = rng.standard_normal((2, 30))
    w = rng.dirichlet([1, 1], 25)
    z = np.vstack([w @ e, e])
    s = svd_reduce(z, 1)
    idx, vol = nfindr_pass(s, 2, seed=1)
    assert vol == pytest.approx(max_volume_exhaustive(s, 2), rel=1e-12)
    assert set(idx.tolist()) == {25, 26}


@given(st.integers(3, 4), st.integers(0, 2**31))
def test_pass_is_local_max_and_no_worse_than_start(i, seed):
    r = np.random.default_rng(seed)
    s = r.standard_normal((12, i - 1))
    start = r.choice(12, i, replace=False)
    start_vol = simplex_volume(augment(s[start].T))
    idx, vol = nfindr_pass(s, i, init=start, max_sweeps=50)
    assert vol >= start_vol
    assert vol == pytest.approx(simplex_volume(augment(s[idx].T)))
    for row in range(12):
        for slot in range(i):
            t = idx.copy()
            t[slot] = row
            assert simplex_volume(augment(s[t].T)) <= vol * (1 + 1e-9)


def test_pass_errors():
    with pytest.raises(ValidationError):
        nfindr_pass(np.ones((2, 2)), 3)
    with pytest.raises(ValidationError):
        nfindr_pass(np.ones((5, 1)), 3)


@pytest.mark.parametrize("g,m", [(3, 5), (15, 119), (20, 209), (30, 464)])
def test_candidate_count(g, m):
    assert candidate_count(g) == m


def test_candidates_are_rows_of_z(rng):
    z = np.abs(rng.standard_normal((40, 12)))
    c = build_candidates(z, 6, seed=5)
    assert len(c) == candidate_count(6)
    for row, src in zip(c.spectra, c.source):
        assert row.tobytes() == z[src].tobytes()
    assert c.level.tolist() == [i for i in range(2, 7) for _ in range(i)]
    assert c.slot.tolist() == [j for i in range(2, 7) for j in range(i)]


def test_candidates_g3(rng):
    z = rng.standard_normal((10, 5))
    assert build_candidates(z, 3, seed=0).shape == (5, 5)


def test_candidates_thread_independent(rng):
    z = rng.standard_normal((60, 15))
    a = build_candidates(z, 8, seed=4, threads=1)
    b = build_candidates(z, 8, seed=4, threads=4)
    assert np.array_equal(a.source, b.source)


def test_candidates_errors(rng):
    with pytest.raises(ValidationError):
        build_candidates(rng.standard_normal((5, 4)), 6)
    with pytest.raises(ValidationError):
        build_candidates(rng.standard_normal((5, 4)), 1)

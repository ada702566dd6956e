import itertools

import numpy as np
import pytest

from nirencert import interaction as it
from nirencert.constants import build_constants
from nirencert.critpoints import CriticalPoint
from nirencert.errors import CertError
from nirencert.geometry import green_kernel, normal_frame, pole, sphere_point

from oracles import smallest_root_by_bisection

N, SIGMA = 3, 0.5          # critical flatness order n - 2 sigma = 2
CONSTS = build_constants(N, SIGMA)


def point(coords, K=1.0, b=(-1, -1, -1), beta=2.0, label=""):
    y = sphere_point(coords)
    return CriticalPoint(y, normal_frame(y), K, beta, np.array(b, dtype=float), label=label,
                         supplied=True)


def random_points(rng, p):
    pts = []
    while len(pts) < p:
        y = sphere_point(rng.standard_normal(N + 1))
        if all(np.dot(y, q.y) < 0.95 for q in pts):
            b = -rng.uniform(0.2, 3, N) * np.where(rng.random(N) < 0.2, -1, 1)
            if abs(b.sum()) < 0.1:
                continue
            pts.append(point(y, rng.uniform(0.5, 3), b, label=f"q{len(pts)}"))
    return pts


def test_singleton_positive():
    m = it.build_matrix([point([0, 0, 0, 1])], CONSTS, N, SIGMA)
    assert m.entries.shape == (1, 1)
    assert m.rho == m.entries[0, 0] > 0
    assert m.status == "positive"


def test_symmetric_pair_closed_form():
    a, b = point([0, 0, 0, 1]), point([1, 0, 0, 0])
    m = it.build_matrix([a, b], CONSTS, N, SIGMA)
    diag, off = m.entries[0, 0], -m.entries[0, 1]
    assert m.entries[1, 1] == diag
    assert m.rho == pytest.approx(diag - off, rel=1e-12)


def test_entries_formula():
    a = point([0, 0, 0, 1], K=2.0, b=(-1, -2, 0.5))
    b = point([0, 1, 0, 1], K=0.7)
    m = it.matrix_entries([a, b], CONSTS, N, SIGMA)
    s = N - 2 * SIGMA
    assert m[0, 0] == pytest.approx(s / N * CONSTS.c1_tilde * 2.5 / 2.0 ** (N / (2 * SIGMA)))
    g = green_kernel(a.y, b.y, N, SIGMA)
    assert m[0, 1] == pytest.approx(-(2 ** (s / 2)) * CONSTS.c1 * g / (1.4) ** (s / (4 * SIGMA)))


def test_wrong_stratum_and_coincident():
    with pytest.raises(CertError) as err:
        it.build_matrix([point([0, 0, 0, 1], beta=1.5)], CONSTS, N, SIGMA)
    assert err.value.code == "wrong-stratum"
    with pytest.raises(CertError) as err:
        it.build_matrix([point([0, 0, 0, 1]), point([0, 0, 0, 1])], CONSTS, N, SIGMA)
    assert err.value.code == "coincident-points"


def test_random_tuples_against_characteristic_polynomial(rng):
    for _ in range(200):
        p = int(rng.integers(1, 4))
        pts = random_points(rng, p)
        m = it.build_matrix(pts, CONSTS, N, SIGMA)
        want = smallest_root_by_bisection(m.entries)
        assert abs(m.rho - want) <= 1e-10 * max(1.0, abs(want))


def test_structure_invariants(rng):
    for _ in range(50):
        pts = random_points(rng, 4)
        m = it.matrix_entries(pts, CONSTS, N, SIGMA)
        assert np.array_equal(m, m.T)
        off = m[~np.eye(4, dtype=bool)]
        assert np.all(off < 0)
        rho = it.build_matrix(pts, CONSTS, N, SIGMA).rho
        perm = list(rng.permutation(4))
        assert it.build_matrix([pts[i] for i in perm], CONSTS, N, SIGMA).rho == \
            pytest.approx(rho, abs=1e-12 * max(1.0, abs(rho)))
        # Cauchy interlacing: deleting a row/column cannot lower the least eigenvalue
        for sub in itertools.combinations(range(4), 3):
            assert it.build_matrix([pts[i] for i in sub], CONSTS, N, SIGMA).rho >= rho - 1e-12


def test_a1_vacuous_and_singleton():
    rep = it.check_A1([], CONSTS, N, SIGMA)
    assert rep.holds and rep.subsets == []
    rep = it.check_A1([point([0, 0, 0, 1])], CONSTS, N, SIGMA)
    assert rep.holds and rep.subsets[0][3] == "positive"


def crafted_degenerate_pair():
    """Two points with diagonal entry a equal to the coupling g."""
    a, b = point([0, 0, 0, 1]), point([1, 0, 0, 0])
    m = it.matrix_entries([a, b], CONSTS, N, SIGMA)
    scale = -m[0, 1] / m[0, 0]
    bb = a.b * scale
    return [point([0, 0, 0, 1], b=bb, label="a"), point([1, 0, 0, 0], b=bb, label="b")]


def test_a1_flags_crafted_degenerate_pair():
    pts = crafted_degenerate_pair()
    rep = it.check_A1(pts, CONSTS, N, SIGMA)
    assert not rep.holds
    assert [s[0] for s in rep.degenerate] == [(0, 1)]
    js = rep.to_json(["a", "b"])
    assert js["counts"]["degenerate"] == 1 and js["subsets"][2]["members"] == ["a", "b"]


def test_a1_matches_build_matrix(rng):
    pts = random_points(rng, 5)
    rep = it.check_A1(pts, CONSTS, N, SIGMA, max_p=3)
    assert len(rep.subsets) == 5 + 10 + 10
    for ix, rho, margin, status in rep.subsets:
        m = it.build_matrix([pts[i] for i in ix], CONSTS, N, SIGMA)
        assert rho == pytest.approx(m.rho, abs=1e-12 * max(1, m.norm))
        assert status == m.status


def test_subset_masks_order():
    masks = [int(x) for x in it.subset_masks(3, 3)]
    assert [it.members_of(m) for m in masks] == [
        (0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    with pytest.raises(CertError):
        it.check_A1([point([0, 0, 0, 1])], CONSTS, N, SIGMA, max_p=2)

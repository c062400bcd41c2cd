import math

import numpy as np
import pytest

from multisle.explorer import (BLACK, WHITE, Coloring, ExplorerError,
                               black_hitting_probability, build_hex_domain,
                               estimate_pairing_frequencies, explore_partial,
                               hex_disc_loop, hex_rect_corner_marks, hex_rect_loop,
                               run_explorer)
from multisle.geometry import PlanarPairing
from multisle.util import child_rng


def test_disc_loop_geometry():
    for radius in (1, 2, 5):
        loop = hex_disc_loop(radius)
        assert len(loop) == 6 * radius
    dom = build_hex_domain(hex_disc_loop(2), [0, 6])
    assert dom.n_faces == 19                      # 3 R (R+1) + 1
    assert dom.n_pairs == 1
    dom5 = build_hex_domain(hex_disc_loop(5), [0, 7, 15, 22])
    assert dom5.n_pairs == 2


def test_domain_validation():
    loop = hex_disc_loop(2)
    with pytest.raises(ExplorerError):
        build_hex_domain(loop, [0, 4, 8])                 # odd number of marks
    with pytest.raises(ExplorerError):
        build_hex_domain(loop, [0, 99])                   # mark off the loop
    with pytest.raises(ExplorerError):
        build_hex_domain(list(reversed(loop)), [0, 6])    # clockwise loop
    with pytest.raises(ExplorerError):
        build_hex_domain([(0, 0), (5, 5), (0, 1)], [0, 1])  # non-adjacent loop


def test_rect_loop_geometry():
    loop = hex_rect_loop(6, 5)
    assert len(loop) == 2 * 6 + 2 * 5 - 4
    dom = build_hex_domain(loop, hex_rect_corner_marks(6, 5))
    assert dom.n_faces == 30
    assert dom.n_pairs == 2
    with pytest.raises(ExplorerError):
        hex_rect_loop(2, 5)


def test_boundary_colors_alternate():
    dom = build_hex_domain(hex_disc_loop(3), [0, 5, 9, 14])
    colors = dom.initial_colors[:18]
    changes = sum(1 for a, b in zip(colors, np.roll(colors, -1)) if a != b)
    assert changes == 4
    assert set(colors) == {WHITE, BLACK}


def test_hitting_probability_examples():
    dom = build_hex_domain(hex_disc_loop(1), [0, 3])
    center = dom.face_index[(0, 0)]

    col = Coloring.initial(dom)
    assert black_hitting_probability(col, center) == pytest.approx(0.5)

    col.colors[:6] = [1, 1, 1, 1, 0, 0]        # 4 black, 2 white neighbors
    assert black_hitting_probability(col, center) == pytest.approx(2.0 / 3.0)

    col.colors[:6] = 1                         # absorbed into black in one step
    assert black_hitting_probability(col, center) == pytest.approx(1.0)

    col.colors[center] = BLACK
    with pytest.raises(ExplorerError):
        black_hitting_probability(col, center)


def test_hitting_probability_matches_walk_frequency():
    dom = build_hex_domain(hex_disc_loop(3), [0, 9])
    col = Coloring.initial(dom)
    face = dom.face_index[(1, 0)]
    p_exact = black_hitting_probability(col, face)
    rng = child_rng(9, 0)
    n = 100000
    hits = 0
    nbr6, colors = dom.nbr6, col.colors
    for _ in range(n):
        f = face
        while colors[f] < 0:
            f = nbr6[f, rng.integers(0, 6)]
        hits += colors[f] == BLACK
    se = math.sqrt(p_exact * (1.0 - p_exact) / n)
    assert abs(hits / n - p_exact) < 3.0 * se


def test_hitting_probability_random_colorings_vs_walk():
    rng = child_rng(10, 0)
    dom = build_hex_domain(hex_disc_loop(3), [0, 9])
    for trial in range(20):
        col = Coloring.initial(dom)
        undet = col.undetermined()
        extra = rng.choice(undet, size=rng.integers(0, len(undet) // 2), replace=False)
        col.colors[extra] = rng.integers(0, 2, size=len(extra))
        free = col.undetermined()
        if len(free) == 0:
            continue
        face = int(free[rng.integers(0, len(free))])
        p = black_hitting_probability(col, face)
        assert 0.0 <= p <= 1.0
        # one-step mean-value property of the solved field
        vals = []
        for d in range(6):
            g = dom.nbr6[face, d]
            if col.colors[g] == UNDET_SENTINEL:
                vals.append(black_hitting_probability(col, int(g)))
            else:
                vals.append(float(col.colors[g]))
        assert p == pytest.approx(np.mean(vals), abs=1e-8)


UNDET_SENTINEL = -1


def test_explorer_n1_always_trivial():
    dom = build_hex_domain(hex_disc_loop(2), [0, 6])
    for i in range(100):
        _, pairing = run_explorer(dom, child_rng(1, i), record_paths=False)
        assert pairing == PlanarPairing([(1, 2)])


def test_explorer_deterministic_given_precolored_interior():
    dom = build_hex_domain(hex_disc_loop(2), [0, 3, 6, 9])
    interior = ~dom.is_boundary
    dom.initial_colors[interior] = BLACK
    paths1, pairing1 = run_explorer(dom, child_rng(2, 0))
    paths2, pairing2 = run_explorer(dom, child_rng(3, 1))
    assert pairing1 == pairing2 == PlanarPairing([(1, 4), (2, 3)])
    assert paths1 == paths2                   # no stochastic step was taken


def test_explorer_pairings_planar_odd_even():
    dom = build_hex_domain(hex_disc_loop(4), [0, 7, 12, 19])
    for i in range(200):
        _, pairing = run_explorer(dom, child_rng(4, i), record_paths=False)
        for a, b in pairing:
            assert (a % 2) != (b % 2)


def test_coloring_monotonicity():
    dom = build_hex_domain(hex_disc_loop(4), [0, 6, 12, 18])
    base = int(np.sum(dom.initial_colors >= 0))
    for k in (1, 3, 7):
        st = explore_partial(dom, child_rng(5, k), n_colorings=k)
        colored = int(np.sum(st.coloring.colors >= 0))
        assert colored - base == min(k, st.colorings_done)
        assert st.colorings_done <= k


def test_dirichlet_value_is_martingale_along_exploration():
    dom = build_hex_domain(hex_disc_loop(5), [0, 8, 15, 23])
    probe = dom.face_index[(2, 1)]
    u0 = black_hitting_probability(Coloring.initial(dom), probe)
    n = 3000
    vals = np.empty(n)
    for i in range(n):
        st = explore_partial(dom, child_rng(33, i), n_colorings=8)
        colors = st.coloring.colors
        if colors[probe] == UNDET_SENTINEL:
            vals[i] = black_hitting_probability(st.coloring, probe)
        else:
            vals[i] = float(colors[probe])
    se = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - u0) < 3.0 * se


def test_scheduling_order_invariance():
    dom = build_hex_domain(hex_disc_loop(5), [0, 8, 15, 23])
    key = PlanarPairing([(1, 2), (3, 4)])
    n = 4000
    c1 = estimate_pairing_frequencies(dom, n, seed=11, order="round_robin")
    c2 = estimate_pairing_frequencies(dom, n, seed=12, order="sequential")
    p1, p2 = c1.get(key, 0) / n, c2.get(key, 0) / n
    se = math.sqrt(2.0 * 0.25 / n)
    assert abs(p1 - p2) < 3.0 * se


def test_walk_and_solve_modes_agree_in_law():
    dom = build_hex_domain(hex_disc_loop(4), [0, 6, 12, 18])
    key = PlanarPairing([(1, 2), (3, 4)])
    n = 800
    cw = estimate_pairing_frequencies(dom, n, seed=13, mode="walk")
    cs = estimate_pairing_frequencies(dom, n, seed=14, mode="solve")
    pw, ps = cw.get(key, 0) / n, cs.get(key, 0) / n
    se = math.sqrt(2.0 * 0.25 / n)
    assert abs(pw - ps) < 3.5 * se


def test_estimate_zero_runs_empty():
    dom = build_hex_domain(hex_disc_loop(2), [0, 6])
    assert estimate_pairing_frequencies(dom, 0, seed=0) == {}


def test_estimate_n1_counts():
    dom = build_hex_domain(hex_disc_loop(2), [0, 6])
    counts = estimate_pairing_frequencies(dom, 100, seed=1)
    assert counts == {PlanarPairing([(1, 2)]): 100}

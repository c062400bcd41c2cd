"""Multiple harmonic explorer on honeycomb-face domains.

Faces are hexagons in axial coordinates (q, r); the dual walk lives on the
6-regular face adjacency (the triangular dual).  A domain is the set of faces
on or inside a simple counterclockwise loop of faces; the loop faces carry
frozen colors forming N white and N black segments that change at 2N marked
boundary points.  Interfaces grow along honeycomb edges from the odd marked
points: when the face in front of the tip is colored the next edge is forced,
otherwise the face is colored black with the probability that the dual walk
from it hits black before white.  The hot path samples that event by running
the walk itself (identical law); the exact Dirichlet solve is available as
black_hitting_probability and as the optional 'solve' stepping mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .geometry import PlanarPairing
from .util import child_rng

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:     # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not args else args[0]

__all__ = [
    "ExplorerError",
    "HexDomain",
    "Coloring",
    "ExplorerState",
    "build_hex_domain",
    "hex_disc_loop",
    "hex_rect_loop",
    "black_hitting_probability",
    "run_explorer",
    "explore_partial",
    "estimate_pairing_frequencies",
]

WHITE, BLACK, UNDETERMINED = 0, 1, -1

# axial neighbor directions in counterclockwise order (0, 60, ..., 300 degrees)
_DIRS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))


class ExplorerError(ValueError):
    pass


def _center_int(q: int, r: int) -> Tuple[int, int]:
    """Integer center coordinates (units of sqrt(3)/2 and 1/2)."""
    return (2 * q + r, 3 * r)


_CORNER_OFFSETS = ((1, 1), (0, 2), (-1, 1), (-1, -1), (0, -2), (1, -1))


def _corners(q: int, r: int) -> List[Tuple[int, int]]:
    ix, iy = _center_int(q, r)
    return [(ix + dx, iy + dy) for dx, dy in _CORNER_OFFSETS]


def _vertex_xy(key: Tuple[int, int]) -> Tuple[float, float]:
    return (key[0] * math.sqrt(3.0) / 2.0, key[1] * 0.5)


def _face_xy(q: int, r: int) -> Tuple[float, float]:
    return (math.sqrt(3.0) * (q + 0.5 * r), 1.5 * r)


class HexDomain:
    """Faces on or inside a simple ccw loop, with marked color-change points.

    The loop is given as the ordered ccw list of its faces; marked points are
    positions into that cycle: mark m sits between loop[m-1] and loop[m], and
    the boundary segment [m_i, m_{i+1}) is black for even i, white for odd i.
    Beyond the face data the constructor precomputes the integer tables that
    drive the interface walk (vertex adjacency, front faces, turn slots).
    """

    def __init__(self, loop: Sequence[Tuple[int, int]], marks: Sequence[int]):
        self.loop = [(int(q), int(r)) for q, r in loop]
        self.marks = tuple(int(m) for m in marks)
        self._validate_loop()
        self._collect_faces()
        self._assign_boundary_colors()
        self._build_vertex_tables()
        self._build_marked_edges()

    # -- construction ---------------------------------------------------------

    def _validate_loop(self) -> None:
        loop = self.loop
        if len(loop) < 3 or len(set(loop)) != len(loop):
            raise ExplorerError("loop must be a simple cycle of at least 3 distinct faces")
        for a, b in zip(loop, loop[1:] + loop[:1]):
            if (b[0] - a[0], b[1] - a[1]) not in _DIRS:
                raise ExplorerError(f"loop faces {a} and {b} are not adjacent")
        area = 0.0
        pts = [_face_xy(q, r) for q, r in loop]
        for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
            area += x1 * y2 - x2 * y1
        if area <= 0.0:
            raise ExplorerError("loop must be oriented counterclockwise")
        marks = self.marks
        if len(marks) < 2 or len(marks) % 2 != 0:
            raise ExplorerError("need an even number (>= 2) of marked points")
        if list(marks) != sorted(set(marks)) or marks[-1] >= len(loop) or marks[0] < 0:
            raise ExplorerError("marks must be strictly increasing positions on the loop")

    def _collect_faces(self) -> None:
        loop_set = set(self.loop)
        qs = [q for q, _ in self.loop]
        rs = [r for _, r in self.loop]
        q_lo, q_hi = min(qs) - 1, max(qs) + 1
        r_lo, r_hi = min(rs) - 1, max(rs) + 1

        outside = set()
        stack = [(q, r) for q in (q_lo, q_hi) for r in range(r_lo, r_hi + 1)]
        stack += [(q, r) for r in (r_lo, r_hi) for q in range(q_lo, q_hi + 1)]
        stack = [f for f in stack if f not in loop_set]
        while stack:
            f = stack.pop()
            if f in outside:
                continue
            outside.add(f)
            for dq, dr in _DIRS:
                g = (f[0] + dq, f[1] + dr)
                if (q_lo <= g[0] <= q_hi and r_lo <= g[1] <= r_hi
                        and g not in loop_set and g not in outside):
                    stack.append(g)

        interior = [
            (q, r)
            for q in range(q_lo, q_hi + 1)
            for r in range(r_lo, r_hi + 1)
            if (q, r) not in loop_set and (q, r) not in outside
        ]
        self.faces: List[Tuple[int, int]] = list(self.loop) + interior
        self.face_index: Dict[Tuple[int, int], int] = {f: i for i, f in enumerate(self.faces)}
        n = len(self.faces)
        self.n_faces = n
        self.nbr6 = np.full((n, 6), -1, dtype=np.int32)
        for i, (q, r) in enumerate(self.faces):
            for d, (dq, dr) in enumerate(_DIRS):
                self.nbr6[i, d] = self.face_index.get((q + dq, r + dr), -1)
        self.is_boundary = np.zeros(n, dtype=bool)
        self.is_boundary[:len(self.loop)] = True
        # interior faces must have their full 6-neighborhood inside the domain
        if n > len(self.loop) and np.any(self.nbr6[len(self.loop):] < 0):
            raise ExplorerError("interior face with a neighbor outside the domain")

    def _assign_boundary_colors(self) -> None:
        colors = np.full(self.n_faces, UNDETERMINED, dtype=np.int8)
        marks = self.marks
        n_loop = len(self.loop)
        for seg in range(len(marks)):
            start = marks[seg]
            end = marks[(seg + 1) % len(marks)]
            color = BLACK if seg % 2 == 0 else WHITE
            pos = start
            while True:
                colors[pos] = color
                pos = (pos + 1) % n_loop
                if pos == end:
                    break
        self.boundary_colors = colors[:n_loop].copy()
        self.initial_colors = colors

    def _build_vertex_tables(self) -> None:
        vert_index: Dict[Tuple[int, int], int] = {}
        edge_faces: Dict[frozenset, List[int]] = {}
        vert_faces: Dict[int, set] = {}

        def vid(key):
            if key not in vert_index:
                vert_index[key] = len(vert_index)
                vert_faces[vert_index[key]] = set()
            return vert_index[key]

        for fi, (q, r) in enumerate(self.faces):
            cs = [vid(c) for c in _corners(q, r)]
            for v in cs:
                vert_faces[v].add(fi)
            for k in range(6):
                e = frozenset((cs[k], cs[(k + 1) % 6]))
                edge_faces.setdefault(e, []).append(fi)

        n_v = len(vert_index)
        self.n_vertices = n_v
        self.vertex_keys = [None] * n_v
        for key, i in vert_index.items():
            self.vertex_keys[i] = key

        nbrs = np.full((n_v, 3), -1, dtype=np.int32)
        counts = np.zeros(n_v, dtype=np.int8)
        self._edge_faces = edge_faces
        for e in edge_faces:
            a, b = tuple(e)
            for u, w in ((a, b), (b, a)):
                if counts[u] >= 3:
                    raise ExplorerError("vertex degree above 3 (corrupt geometry)")
                nbrs[u, counts[u]] = w
                counts[u] += 1
        self.vert_nbrs = nbrs

        rev = np.full((n_v, 3), -1, dtype=np.int8)
        for v in range(n_v):
            for s in range(3):
                u = nbrs[v, s]
                if u < 0:
                    continue
                for s2 in range(3):
                    if nbrs[u, s2] == v:
                        rev[v, s] = s2
                        break
        self.rev_slot = rev

        front = np.full((n_v, 3), -1, dtype=np.int32)
        next_keep = np.full((n_v, 3), -1, dtype=np.int8)
        next_flip = np.full((n_v, 3), -1, dtype=np.int8)
        left_in = np.full((n_v, 3), -1, dtype=np.int32)
        for v in range(n_v):
            incident = vert_faces[v]
            for s in range(3):
                u = nbrs[v, s]
                if u < 0:
                    continue
                efaces = edge_faces[frozenset((u, v))]
                rest = incident.difference(efaces)
                if len(rest) != 1:
                    continue            # boundary vertex without a front face
                f_front = next(iter(rest))
                front[v, s] = f_front
                ux, uy = _vertex_xy(self.vertex_keys[u])
                vx, vy = _vertex_xy(self.vertex_keys[v])
                dx, dy = vx - ux, vy - uy
                lf = rf = -1
                for fc in efaces:
                    cx, cy = _face_xy(*self.faces[fc])
                    cross = dx * (cy - uy) - dy * (cx - ux)
                    if cross > 0:
                        lf = fc
                    else:
                        rf = fc
                left_in[v, s] = lf
                for s2 in range(3):
                    if s2 == s or nbrs[v, s2] < 0:
                        continue
                    side = [f for f in edge_faces[frozenset((nbrs[v, s2], v))] if f != f_front]
                    if len(side) != 1:
                        continue
                    if side[0] == rf:
                        next_keep[v, s] = s2
                    elif side[0] == lf:
                        next_flip[v, s] = s2
        self.front_face = front
        self.next_keep = next_keep
        self.next_flip = next_flip
        self.left_face_in = left_in
        self._vert_index = vert_index

    def _build_marked_edges(self) -> None:
        n_loop = len(self.loop)
        marked_edge = np.zeros((self.n_vertices, 3), dtype=np.int16)
        starts_v: List[int] = []
        starts_s: List[int] = []
        left_colors: List[int] = []
        self.mark_tips: List[int] = []

        for mark_id, pos in enumerate(self.marks):
            fa = (pos - 1) % n_loop     # ccw-before face
            fb = pos                    # ccw-after face
            shared = [
                e for e, fs in self._edge_faces.items()
                if set(fs) == {fa, fb}
            ]
            if len(shared) != 1:
                raise ExplorerError(f"marked faces at position {pos} share no unique edge")
            u, w = tuple(shared[0])
            # the inward tip is the endpoint whose third face lies in the domain
            tip = outer = None
            for cand, other in ((u, w), (w, u)):
                rest = [f for f in self._faces_at(cand) if f not in (fa, fb)]
                if rest:
                    tip, outer = cand, other
            if tip is None or outer is None or tip == outer:
                raise ExplorerError(f"cannot orient marked edge at position {pos}")
            rest_other = [f for f in self._faces_at(outer) if f not in (fa, fb)]
            if rest_other:
                raise ExplorerError(f"marked edge at position {pos} is not on the outer boundary")
            s_in = int(np.where(self.vert_nbrs[tip] == outer)[0][0])
            marked_edge[tip, s_in] = mark_id + 1
            s_back = self.rev_slot[tip, s_in]
            marked_edge[outer, s_back] = mark_id + 1
            self.mark_tips.append(tip)
            if mark_id % 2 == 0:
                starts_v.append(tip)
                starts_s.append(s_in)
                lf = self.left_face_in[tip, s_in]
                if lf < 0:
                    raise ExplorerError(f"marked edge at position {pos} has no left face")
                left_colors.append(int(self.initial_colors[lf]))
        self.marked_edge = marked_edge
        self.starts_v = np.asarray(starts_v, dtype=np.int32)
        self.starts_s = np.asarray(starts_s, dtype=np.int8)
        self.start_left_colors = np.asarray(left_colors, dtype=np.int8)

    def _faces_at(self, v: int) -> List[int]:
        out = []
        for s in range(3):
            u = self.vert_nbrs[v, s]
            if u < 0:
                continue
            out.extend(self._edge_faces[frozenset((u, v))])
        return sorted(set(out))

    # -- public helpers --------------------------------------------------------

    @property
    def n_pairs(self) -> int:
        return len(self.marks) // 2

    def fresh_colors(self) -> np.ndarray:
        return self.initial_colors.copy()

    def bounding_box(self) -> Tuple[float, float]:
        xs, ys = zip(*(_face_xy(q, r) for q, r in self.faces))
        return (max(xs) - min(xs) + math.sqrt(3.0), max(ys) - min(ys) + 2.0)

    def aspect(self) -> float:
        w, h = self.bounding_box()
        return w / h


def build_hex_domain(loop: Sequence[Tuple[int, int]], marks: Sequence[int]) -> HexDomain:
    """Validated domain from an explicit ccw face loop and mark positions."""
    return HexDomain(loop, marks)


def hex_disc_loop(radius: int) -> List[Tuple[int, int]]:
    """The ccw ring of faces at hex distance `radius` from the origin."""
    if radius < 1:
        raise ExplorerError("radius must be >= 1")
    ring = []
    q, r = radius, 0
    for d in (2, 3, 4, 5, 0, 1):
        dq, dr = _DIRS[d]
        for _ in range(radius):
            ring.append((q, r))
            q, r = q + dq, r + dr
    return ring


def hex_rect_loop(width: int, height: int) -> List[Tuple[int, int]]:
    """Perimeter of the offset-rectangle of width x height faces, ccw from (0,0)."""
    if width < 3 or height < 3:
        raise ExplorerError("rectangle loop needs width, height >= 3")

    def q0(r):
        return -(r // 2)

    loop = [(q, 0) for q in range(width)]
    loop += [(q0(r) + width - 1, r) for r in range(1, height)]
    loop += [(q, height - 1) for q in range(q0(height - 1) + width - 2, q0(height - 1) - 1, -1)]
    loop += [(q0(r), r) for r in range(height - 2, 0, -1)]
    return loop


def hex_rect_corner_marks(width: int, height: int) -> Tuple[int, int, int, int]:
    """Mark positions of the four corners, ccw from bottom-left."""
    return (0, width, width + height - 1, 2 * width + height - 2)


@dataclass
class Coloring:
    """Mutable face-color state over a domain."""

    domain: HexDomain
    colors: np.ndarray

    @classmethod
    def initial(cls, domain: HexDomain) -> "Coloring":
        return cls(domain, domain.fresh_colors())

    def undetermined(self) -> np.ndarray:
        return np.flatnonzero(self.colors == UNDETERMINED)


def black_hitting_probability(coloring: Coloring, face: int) -> float:
    """Probability that the dual walk from `face` hits black before white.

    Solved exactly as the discrete Dirichlet problem on the undetermined
    faces (value 1 on black, 0 on white) with a sparse linear solve.
    """
    colors = coloring.colors
    if colors[face] != UNDETERMINED:
        raise ExplorerError(f"face {face} is already colored")
    unknown = np.flatnonzero(colors == UNDETERMINED)
    pos = {int(f): i for i, f in enumerate(unknown)}
    n = len(unknown)
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    nbr6 = coloring.domain.nbr6
    for i, f in enumerate(unknown):
        rows.append(i); cols.append(i); vals.append(6.0)
        for d in range(6):
            g = nbr6[f, d]
            if g < 0:
                raise ExplorerError(f"undetermined face {f} has a neighbor outside the domain")
            c = colors[g]
            if c == UNDETERMINED:
                rows.append(i); cols.append(pos[int(g)]); vals.append(-1.0)
            elif c == BLACK:
                rhs[i] += 1.0
    mat = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    sol = scipy.sparse.linalg.spsolve(mat, rhs)
    if not np.all(np.isfinite(sol)):
        raise ExplorerError("singular Dirichlet system (no colored face reachable)")
    return float(sol[pos[int(face)]])


@dataclass
class ExplorerState:
    """Exploration snapshot: coloring, per-interface tip states, finished set."""

    coloring: Coloring
    tips_v: np.ndarray
    tips_s: np.ndarray
    active: np.ndarray
    endpoints: np.ndarray          # 0-based mark index, -1 while active
    colorings_done: int
    paths: List[List[int]] = field(default_factory=list)


def _explore_core(vert_nbrs, rev_slot, front_face, next_keep, next_flip,
                  marked_edge, nbr6, colors, tips_v, tips_s, left_colors,
                  active, endpoints, order_code, step_cap, max_colorings,
                  paths_buf, path_lens, rng):
    """Shared exploration loop (njit-compiled when numba is present).

    Returns (status, colorings_done): status 0 finished, 4 paused at the
    coloring budget, and 1/2/3 for the hard-error conditions.
    """
    n_int = len(tips_v)
    remaining = 0
    for k in range(n_int):
        if active[k]:
            remaining += 1
    colored = 0
    steps = 0
    k = 0
    while remaining > 0:
        if steps > step_cap:
            return 1, colored
        if not active[k]:
            k = (k + 1) % n_int
            continue
        v = tips_v[k]
        s = tips_s[k]
        f_front = front_face[v, s]
        if f_front < 0:
            return 2, colored
        c = colors[f_front]
        if c < 0:
            if max_colorings >= 0 and colored >= max_colorings:
                return 4, colored
            f = f_front
            while colors[f] < 0:
                d = int(rng.random() * 6.0)
                if d > 5:
                    d = 5
                f = nbr6[f, d]
                if f < 0:
                    return 3, colored
            colors[f_front] = colors[f]
            c = colors[f_front]
            colored += 1
        if c == left_colors[k]:
            s_out = next_keep[v, s]
        else:
            s_out = next_flip[v, s]
        if s_out < 0:
            return 2, colored
        w = vert_nbrs[v, s_out]
        if path_lens[k] < paths_buf.shape[1]:
            paths_buf[k, path_lens[k]] = w
            path_lens[k] += 1
        mark = marked_edge[v, s_out]
        if mark > 0:
            active[k] = False
            endpoints[k] = mark - 1
            remaining -= 1
        else:
            tips_v[k] = w
            tips_s[k] = rev_slot[v, s_out]
        steps += 1
        if order_code == 0:
            k = (k + 1) % n_int
        elif not active[k]:
            k = (k + 1) % n_int
    return 0, colored


_explore_fast = _njit(cache=False)(_explore_core) if _HAVE_NUMBA else _explore_core


_ORDER_CODES = {"round_robin": 0, "sequential": 1}


def _run(domain: HexDomain, rng: np.random.Generator, order: str, mode: str,
         max_colorings: int, record_paths: bool):
    colors = domain.fresh_colors()
    n_int = domain.n_pairs
    tips_v = domain.starts_v.copy()
    tips_s = domain.starts_s.copy().astype(np.int8)
    active = np.ones(n_int, dtype=np.bool_)
    endpoints = np.full(n_int, -1, dtype=np.int16)
    step_cap = 10 * domain.n_faces + 100
    cap = step_cap + 2 if record_paths else 1
    paths_buf = np.zeros((n_int, cap), dtype=np.int32)
    path_lens = np.zeros(n_int, dtype=np.int64)
    if record_paths:
        for k in range(n_int):
            paths_buf[k, 0] = domain.vert_nbrs[tips_v[k], tips_s[k]]
            paths_buf[k, 1] = tips_v[k]
            path_lens[k] = 2

    if order not in _ORDER_CODES:
        raise ExplorerError(f"unknown scheduling order {order!r}")
    code = _ORDER_CODES[order]

    if mode == "walk":
        status, colored = _explore_fast(
            domain.vert_nbrs, domain.rev_slot, domain.front_face, domain.next_keep,
            domain.next_flip, domain.marked_edge, domain.nbr6, colors, tips_v, tips_s,
            domain.start_left_colors, active, endpoints, code, step_cap,
            max_colorings, paths_buf, path_lens, rng)
    elif mode == "solve":
        status, colored = _explore_solve(domain, colors, tips_v, tips_s, active,
                                         endpoints, code, step_cap, max_colorings,
                                         paths_buf, path_lens, rng)
    else:
        raise ExplorerError(f"unknown sampling mode {mode!r}")

    if status == 1:
        raise ExplorerError("explorer exceeded the step cap (geometry bug)")
    if status in (2, 3):
        raise ExplorerError("explorer walked out of the domain (geometry bug)")
    state = ExplorerState(
        coloring=Coloring(domain, colors), tips_v=tips_v, tips_s=tips_s,
        active=active, endpoints=endpoints, colorings_done=colored,
        paths=[list(paths_buf[k, :path_lens[k]]) for k in range(n_int)] if record_paths else [],
    )
    return status, state


def _explore_solve(domain, colors, tips_v, tips_s, active, endpoints, order_code,
                   step_cap, max_colorings, paths_buf, path_lens, rng):
    """Python twin of the kernel with exact Dirichlet sampling of front colors."""
    n_int = len(tips_v)
    remaining = int(active.sum())
    colored = 0
    steps = 0
    k = 0
    while remaining > 0:
        if steps > step_cap:
            return 1, colored
        if not active[k]:
            k = (k + 1) % n_int
            continue
        v, s = int(tips_v[k]), int(tips_s[k])
        f_front = int(domain.front_face[v, s])
        if f_front < 0:
            return 2, colored
        c = int(colors[f_front])
        if c < 0:
            if 0 <= max_colorings <= colored:
                return 4, colored
            p = black_hitting_probability(Coloring(domain, colors), f_front)
            colors[f_front] = BLACK if rng.random() < p else WHITE
            c = int(colors[f_front])
            colored += 1
        s_out = int(domain.next_keep[v, s]) if c == domain.start_left_colors[k] else int(domain.next_flip[v, s])
        if s_out < 0:
            return 2, colored
        w = int(domain.vert_nbrs[v, s_out])
        if path_lens[k] < paths_buf.shape[1]:
            paths_buf[k, path_lens[k]] = w
            path_lens[k] += 1
        mark = int(domain.marked_edge[v, s_out])
        if mark > 0:
            active[k] = False
            endpoints[k] = mark - 1
            remaining -= 1
        else:
            tips_v[k] = w
            tips_s[k] = domain.rev_slot[v, s_out]
        steps += 1
        if order_code == 0 or not active[k]:
            k = (k + 1) % n_int
    return 0, colored


def run_explorer(domain: HexDomain, rng: np.random.Generator, *,
                 order: str = "round_robin", mode: str = "walk",
                 record_paths: bool = True) -> Tuple[List[List[Tuple[int, int]]], PlanarPairing]:
    """Grow all N interfaces to completion; returns vertex paths and the pairing."""
    status, state = _run(domain, rng, order, mode, max_colorings=-1,
                         record_paths=record_paths)
    if status != 0:
        raise ExplorerError(f"explorer stopped early (status {status})")
    pairs = []
    for k in range(domain.n_pairs):
        start_mark = 2 * k
        end_mark = int(state.endpoints[k])
        if end_mark < 0 or (end_mark - start_mark) % 2 == 0:
            raise ExplorerError(f"interface {k} ended at mark {end_mark} (parity bug)")
        pairs.append((start_mark + 1, end_mark + 1))
    pairing = PlanarPairing(pairs)
    paths = [[domain.vertex_keys[v] for v in p] for p in state.paths]
    return paths, pairing


def explore_partial(domain: HexDomain, rng: np.random.Generator, n_colorings: int, *,
                    order: str = "round_robin", mode: str = "walk") -> ExplorerState:
    """Run until `n_colorings` stochastic colorings happened (or all done)."""
    status, state = _run(domain, rng, order, mode, max_colorings=int(n_colorings),
                         record_paths=False)
    if status not in (0, 4):
        raise ExplorerError(f"explorer failed (status {status})")
    return state


def estimate_pairing_frequencies(domain: HexDomain, n_runs: int, seed: int, *,
                                 order: str = "round_robin", mode: str = "walk"
                                 ) -> Dict[PlanarPairing, int]:
    """Pairing counts over independent explorer runs with derived seeds."""
    counts: Dict[PlanarPairing, int] = {}
    for run in range(int(n_runs)):
        _, pairing = run_explorer(domain, child_rng(seed, run), order=order,
                                  mode=mode, record_paths=False)
        counts[pairing] = counts.get(pairing, 0) + 1
    return counts

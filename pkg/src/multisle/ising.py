"""Critical Ising model on rectangular face domains with alternating boundary arcs.

Faces of the dual square lattice carry the spins; boundary edges of the primal
lattice carry frozen spins that alternate between +1 and -1 arcs at the marked
boundary vertices.  Single-site heat-bath dynamics (checkerboard order) sample
the Boltzmann measure; small domains are enumerated exactly.  Interfaces are
traced along primal edges separating opposite colors, treating the exterior
quarter-faces of boundary edges as cells colored by the frozen edge spins, and
taking the left-most wall at every ambiguity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import PlanarPairing

__all__ = [
    "BETA_CRITICAL",
    "IsingError",
    "IsingParams",
    "FaceDomain",
    "BoundaryConditions",
    "SpinConfiguration",
    "build_rect_domain",
    "corner_marks",
    "alternating_boundary",
    "energy",
    "glauber_sample",
    "exact_pairing_distribution",
    "trace_interfaces",
]

BETA_CRITICAL = 0.5 * math.log(1.0 + math.sqrt(2.0))

ENUMERATION_CAP = 20        # exact enumeration up to 2^20 configurations

Vertex = Tuple[int, int]


class IsingError(ValueError):
    pass


@dataclass(frozen=True)
class IsingParams:
    """Inverse temperature; defaults to the critical point."""

    beta: float = BETA_CRITICAL


@dataclass(frozen=True)
class FaceDomain:
    """Rectangle of m x n unit faces with marked boundary vertices (ccw order).

    Faces are indexed (fx, fy) with 0 <= fx < m, 0 <= fy < n; vertices are the
    integer points (vx, vy) with 0 <= vx <= m, 0 <= vy <= n.  The boundary
    cycle runs counterclockwise from (0, 0): bottom, right, top, left.
    """

    m: int
    n: int
    marked: Tuple[Vertex, ...]

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise IsingError(f"need m, n >= 1, got {self.m} x {self.n}")
        if len(self.marked) < 2 or len(self.marked) % 2 != 0:
            raise IsingError("need an even number (>= 2) of marked vertices")
        cycle = self.boundary_cycle()
        index = {v: i for i, v in enumerate(cycle)}
        try:
            positions = [index[v] for v in self.marked]
        except KeyError as err:
            raise IsingError(f"marked vertex {err.args[0]} not on the boundary") from None
        if len(set(positions)) != len(positions):
            raise IsingError("marked vertices must be distinct")
        rel = [(p - positions[0]) % len(cycle) for p in positions]
        if rel != sorted(rel):
            raise IsingError("marked vertices must be in counterclockwise order")
        object.__setattr__(self, "_positions", tuple(positions))

    @property
    def n_pairs(self) -> int:
        return len(self.marked) // 2

    @property
    def faces(self) -> List[Tuple[int, int]]:
        return [(fx, fy) for fx in range(self.m) for fy in range(self.n)]

    @property
    def face_count(self) -> int:
        return self.m * self.n

    def boundary_cycle(self) -> List[Vertex]:
        """All boundary vertices counterclockwise from (0, 0)."""
        bottom = [(x, 0) for x in range(self.m)]
        right = [(self.m, y) for y in range(self.n)]
        top = [(x, self.n) for x in range(self.m, 0, -1)]
        left = [(0, y) for y in range(self.n, 0, -1)]
        return bottom + right + top + left

    def boundary_edge_count(self) -> int:
        return 2 * (self.m + self.n)

    def marked_positions(self) -> Tuple[int, ...]:
        return self._positions

    def aspect(self) -> float:
        """Euclidean width/height."""
        return self.m / self.n


def build_rect_domain(m: int, n: int, marked: Sequence[Vertex]) -> FaceDomain:
    """Validated rectangular face domain; marked vertices ccw on the boundary."""
    return FaceDomain(int(m), int(n), tuple((int(x), int(y)) for x, y in marked))


def corner_marks(m: int, n: int) -> Tuple[Vertex, Vertex, Vertex, Vertex]:
    """The four corners counterclockwise from bottom-left."""
    return ((0, 0), (m, 0), (m, n), (0, n))


_EDGE_NORMALS = {"bottom": (0, 1), "right": (-1, 0), "top": (0, -1), "left": (1, 0)}


def _boundary_edges(domain: FaceDomain):
    """Boundary edges in ccw cycle order as (kind, x, y) with H/V array indices."""
    m, n = domain.m, domain.n
    edges = []
    for x in range(m):
        edges.append(("h", x, 0, "bottom"))
    for y in range(n):
        edges.append(("v", m, y, "right"))
    for x in range(m - 1, -1, -1):
        edges.append(("h", x, n, "top"))
    for y in range(n - 1, -1, -1):
        edges.append(("v", 0, y, "left"))
    return edges


class BoundaryConditions:
    """Frozen boundary-edge spins: +1 on arcs p1 p2, p3 p4, ..., -1 otherwise."""

    def __init__(self, domain: FaceDomain, hsign: np.ndarray, vsign: np.ndarray):
        self.domain = domain
        self.hsign = hsign      # (m, n+1), rows y=0 and y=n in use
        self.vsign = vsign      # (m+1, n), columns x=0 and x=m in use
        self.field = self._face_field()

    @classmethod
    def alternating(cls, domain: FaceDomain) -> "BoundaryConditions":
        m, n = domain.m, domain.n
        hsign = np.zeros((m, n + 1), dtype=np.int8)
        vsign = np.zeros((m + 1, n), dtype=np.int8)
        positions = domain.marked_positions()
        cycle_len = domain.boundary_edge_count()
        edges = _boundary_edges(domain)

        start = positions[0]
        sign = 1
        boundaries = set(positions)
        for step in range(cycle_len):
            pos = (start + step) % cycle_len
            if step > 0 and pos in boundaries:
                sign = -sign
            kind, x, y, _ = edges[pos]
            if kind == "h":
                hsign[x, y] = sign
            else:
                vsign[x, y] = sign
        return cls(domain, hsign, vsign)

    @classmethod
    def uniform(cls, domain: FaceDomain, sign: int = 1) -> "BoundaryConditions":
        m, n = domain.m, domain.n
        hsign = np.zeros((m, n + 1), dtype=np.int8)
        vsign = np.zeros((m + 1, n), dtype=np.int8)
        hsign[:, 0] = sign
        hsign[:, n] = sign
        vsign[0, :] = sign
        vsign[m, :] = sign
        return cls(domain, hsign, vsign)

    def _face_field(self) -> np.ndarray:
        m, n = self.domain.m, self.domain.n
        field = np.zeros((m, n), dtype=np.int16)
        field[:, 0] += self.hsign[:, 0]
        field[:, n - 1] += self.hsign[:, n]
        field[0, :] += self.vsign[0, :]
        field[m - 1, :] += self.vsign[m, :]
        return field

    def alternation_count(self) -> int:
        """Sign changes around the boundary cycle (2N for alternating arcs)."""
        edges = _boundary_edges(self.domain)
        signs = [self.hsign[x, y] if kind == "h" else self.vsign[x, y]
                 for kind, x, y, _ in edges]
        return sum(1 for a, b in zip(signs, signs[1:] + signs[:1]) if a != b)


def alternating_boundary(domain: FaceDomain) -> BoundaryConditions:
    return BoundaryConditions.alternating(domain)


@dataclass
class SpinConfiguration:
    """Face spins (m, n) in {-1, +1}; boundary-edge spins live in the conditions."""

    spins: np.ndarray
    domain: FaceDomain
    bc: BoundaryConditions

    def copy(self) -> "SpinConfiguration":
        return SpinConfiguration(self.spins.copy(), self.domain, self.bc)


def energy(sigma: SpinConfiguration) -> float:
    """H = -sum sigma_u sigma_v over face-face and face-boundary-edge pairs."""
    s = sigma.spins.astype(np.int32)
    bc = sigma.bc
    m, n = sigma.domain.m, sigma.domain.n
    total = int((s[:-1, :] * s[1:, :]).sum()) + int((s[:, :-1] * s[:, 1:]).sum())
    total += int((s[:, 0] * bc.hsign[:, 0]).sum())
    total += int((s[:, n - 1] * bc.hsign[:, n]).sum())
    total += int((s[0, :] * bc.vsign[0, :]).sum())
    total += int((s[m - 1, :] * bc.vsign[m, :]).sum())
    return -float(total)


class GlauberChain:
    """Checkerboard single-site heat bath at fixed boundary conditions."""

    def __init__(self, domain: FaceDomain, bc: BoundaryConditions, params: IsingParams,
                 rng: np.random.Generator):
        self.domain = domain
        self.bc = bc
        self.params = params
        self.rng = rng
        m, n = domain.m, domain.n
        fx, fy = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        self._masks = [((fx + fy) % 2 == parity) for parity in (0, 1)]
        # heat-bath table over integer local fields -8..8
        fields = np.arange(-8, 9)
        self._p_plus = 1.0 / (1.0 + np.exp(-2.0 * params.beta * fields))
        self.spins = np.where(rng.random((m, n)) < 0.5, 1, -1).astype(np.int8)

    def sweep(self, count: int = 1) -> None:
        s = self.spins
        bfield = self.bc.field
        rng = self.rng
        for _ in range(count):
            for mask in self._masks:
                nb = np.zeros(s.shape, dtype=np.int16)
                nb[1:, :] += s[:-1, :]
                nb[:-1, :] += s[1:, :]
                nb[:, 1:] += s[:, :-1]
                nb[:, :-1] += s[:, 1:]
                nb += bfield
                p = self._p_plus[nb[mask] + 8]
                s[mask] = np.where(rng.random(p.shape) < p, 1, -1)

    def configuration(self) -> SpinConfiguration:
        return SpinConfiguration(self.spins.copy(), self.domain, self.bc)


def glauber_sample(domain: FaceDomain, bc: BoundaryConditions, params: IsingParams,
                   sweeps: int, burn_in: int, rng: np.random.Generator
                   ) -> Iterator[SpinConfiguration]:
    """Endless stream of configurations, one every `sweeps` full sweeps after burn-in."""
    if sweeps < 1 or burn_in < 0:
        raise IsingError("need sweeps >= 1 and burn_in >= 0")
    chain = GlauberChain(domain, bc, params, rng)
    chain.sweep(burn_in)
    while True:
        chain.sweep(sweeps)
        yield chain.configuration()


def exact_pairing_distribution(domain: FaceDomain, bc: BoundaryConditions,
                               params: IsingParams) -> Dict[PlanarPairing, float]:
    """Boltzmann-weighted pairing distribution by complete enumeration."""
    count = domain.face_count
    if count > ENUMERATION_CAP:
        raise IsingError(f"enumeration limited to {ENUMERATION_CAP} faces, got {count}")
    m, n = domain.m, domain.n
    beta = params.beta
    weights: Dict[PlanarPairing, float] = {}
    spins = np.empty((m, n), dtype=np.int8)
    for bits in range(1 << count):
        for idx in range(count):
            spins[idx // n, idx % n] = 1 if (bits >> idx) & 1 else -1
        sigma = SpinConfiguration(spins, domain, bc)
        w = math.exp(-beta * energy(sigma))
        _, pairing = trace_interfaces(sigma, bc)
        weights[pairing] = weights.get(pairing, 0.0) + w
    total = sum(weights.values())
    return {p: w / total for p, w in weights.items()}


# ---------------------------------------------------------------------------
# Interface tracing
# ---------------------------------------------------------------------------

def _marked_inward(domain: FaceDomain) -> Dict[Vertex, Tuple[float, float]]:
    """Inward bisector at each marked vertex (sum of the two edge normals)."""
    cycle = domain.boundary_cycle()
    edges = _boundary_edges(domain)
    cycle_len = len(cycle)
    out = {}
    for pos, vertex in zip(domain.marked_positions(), domain.marked):
        after = _EDGE_NORMALS[edges[pos][3]]
        before = _EDGE_NORMALS[edges[(pos - 1) % cycle_len][3]]
        out[vertex] = (before[0] + after[0], before[1] + after[1])
    return out


def _turn_score(din: Tuple[float, float], dout: Tuple[float, float]) -> float:
    cross = din[0] * dout[1] - din[1] * dout[0]
    dot = din[0] * dout[0] + din[1] * dout[1]
    return math.atan2(cross, dot)


def trace_interfaces(sigma: SpinConfiguration, bc: BoundaryConditions
                     ) -> Tuple[List[List[Vertex]], PlanarPairing]:
    """Chordal interfaces from each odd marked vertex and the induced pairing.

    Walls are primal edges whose two adjacent cells (faces, or exterior
    quarter-faces colored by the frozen edge spins) disagree.  At every vertex
    the walk takes the left-most wall relative to its incoming direction; at
    marked vertices a virtual outward wall is a candidate and choosing it
    terminates the walk there.
    """
    domain = sigma.domain
    m, n = domain.m, domain.n
    s = sigma.spins.tolist()
    hsign = bc.hsign.tolist()
    vsign = bc.vsign.tolist()

    def wall_h(x: int, y: int) -> bool:
        above = s[x][y] if y < n else hsign[x][n]
        below = s[x][y - 1] if y > 0 else hsign[x][0]
        return above != below

    def wall_v(x: int, y: int) -> bool:
        right = s[x][y] if x < m else vsign[m][y]
        left = s[x - 1][y] if x > 0 else vsign[0][y]
        return right != left

    def wall_edges(vx: int, vy: int):
        # (edge key, direction, other endpoint)
        out = []
        if vx < m and wall_h(vx, vy):
            out.append((("h", vx, vy), (1, 0), (vx + 1, vy)))
        if vx > 0 and wall_h(vx - 1, vy):
            out.append((("h", vx - 1, vy), (-1, 0), (vx - 1, vy)))
        if vy < n and wall_v(vx, vy):
            out.append((("v", vx, vy), (0, 1), (vx, vy + 1)))
        if vy > 0 and wall_v(vx, vy - 1):
            out.append((("v", vx, vy - 1), (0, -1), (vx, vy - 1)))
        return out

    inward = _marked_inward(domain)
    marked_index = {v: i for i, v in enumerate(domain.marked)}
    step_cap = 4 * (m * n + m + n) + 8

    visited = set()
    paths: List[List[Vertex]] = []
    endpoints: List[Tuple[int, int]] = []

    for start_idx in range(0, len(domain.marked), 2):
        start = domain.marked[start_idx]
        din = inward[start]
        candidates = [c for c in wall_edges(*start) if c[0] not in visited]
        if not candidates:
            raise IsingError(f"no interface leaves marked vertex {start} (coloring bug)")
        edge, direction, nxt = max(candidates, key=lambda c: _turn_score(din, c[1]))
        path = [start]
        for _ in range(step_cap):
            visited.add(edge)
            path.append(nxt)
            vertex, din = nxt, direction
            if vertex in marked_index and vertex != start:
                outward = tuple(-c for c in inward[vertex])
                options = [c for c in wall_edges(*vertex) if c[0] not in visited]
                virtual_score = _turn_score(din, outward)
                if not options or virtual_score > max(_turn_score(din, c[1]) for c in options):
                    endpoints.append((start_idx + 1, marked_index[vertex] + 1))
                    break
                edge, direction, nxt = max(options, key=lambda c: _turn_score(din, c[1]))
            else:
                options = [c for c in wall_edges(*vertex) if c[0] not in visited]
                if not options:
                    raise IsingError(f"tracer stranded at {vertex} (coloring bug)")
                edge, direction, nxt = max(options, key=lambda c: _turn_score(din, c[1]))
        else:
            raise IsingError("tracer exceeded the step cap (coloring bug)")
        paths.append(path)

    pairing = PlanarPairing(endpoints)
    for a, b in pairing:
        if (a % 2) == (b % 2):
            raise IsingError(f"interface pairs equal parities: {pairing}")
    return paths, pairing

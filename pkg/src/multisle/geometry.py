"""Marked boundary configurations, planar pairings, and conformal plumbing.

Coordinates live on the boundary of the upper half-plane.  A configuration is
a strictly increasing tuple x_1 < ... < x_{2N}; a pairing is a non-crossing
perfect matching of the indices 1..2N.  The module also carries the Moebius
machinery (order-preserving self-maps of the half-plane with their boundary
derivatives), the four-point cross ratio, and the elliptic-integral solve that
maps rectangle corners to half-plane boundary points.

Cross-ratio convention, used consistently everywhere:

    z = ((x2 - x1) * (x4 - x3)) / ((x3 - x1) * (x4 - x2))

so z -> 0 exactly when x2 -> x1, the degeneration that forces the pairing
{{1,2},{3,4}}, and z -> 1 when x3 -> x2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

Pair = Tuple[int, int]


class GeometryError(ValueError):
    """Invalid geometric input."""


class PoleHit(GeometryError):
    """A configuration point coincides with the Moebius pole."""


class OrderBroken(GeometryError):
    """A Moebius image is not strictly increasing."""


@dataclass(frozen=True)
class BoundaryConfig:
    """Strictly increasing marked points x_1 < ... < x_{2N} on the real line."""

    points: Tuple[float, ...]

    def __init__(self, points: Iterable[float]):
        pts = tuple(float(p) for p in points)
        if len(pts) < 2 or len(pts) % 2 != 0:
            raise GeometryError(f"need an even number (>= 2) of points, got {len(pts)}")
        if not all(math.isfinite(p) for p in pts):
            raise GeometryError("points must be finite (points at infinity are not supported)")
        if any(a >= b for a, b in zip(pts, pts[1:])):
            raise GeometryError(f"points must be strictly increasing: {pts}")
        object.__setattr__(self, "points", pts)

    @property
    def n_pairs(self) -> int:
        return len(self.points) // 2

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def min_gap(self) -> float:
        return min(b - a for a, b in zip(self.points, self.points[1:]))

    def span(self) -> float:
        return self.points[-1] - self.points[0]

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> float:
        return self.points[i]


@dataclass(frozen=True)
class KappaParams:
    """Diffusivity kappa > 0 together with the boundary weight h = (6-kappa)/(2*kappa)."""

    kappa: float
    h: float

    def __post_init__(self):
        if not (self.kappa > 0.0 and math.isfinite(self.kappa)):
            raise GeometryError(f"kappa must be positive, got {self.kappa}")
        if self.h != (6.0 - self.kappa) / (2.0 * self.kappa):
            raise GeometryError(f"h must equal (6-kappa)/(2*kappa), got {self.h}")

    @classmethod
    def from_kappa(cls, kappa: float) -> "KappaParams":
        kappa = float(kappa)
        return cls(kappa, (6.0 - kappa) / (2.0 * kappa))


def _canonical_pairs(pairs: Iterable[Iterable[int]]) -> Tuple[Pair, ...]:
    out = tuple(sorted(tuple(sorted(int(i) for i in p)) for p in pairs))
    return out


@dataclass(frozen=True)
class PlanarPairing:
    """Non-crossing perfect matching of {1, ..., 2N}, stored canonically."""

    pairs: Tuple[Pair, ...]

    def __init__(self, pairs: Iterable[Iterable[int]]):
        canon = _canonical_pairs(pairs)
        _validate_pair_partition(canon)
        if _has_crossing(canon):
            raise GeometryError(f"pairing has a crossing: {canon}")
        object.__setattr__(self, "pairs", canon)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def partner(self, i: int) -> int:
        for a, b in self.pairs:
            if a == i:
                return b
            if b == i:
                return a
        raise KeyError(i)

    def rotated(self, shift: int) -> "PlanarPairing":
        """Relabel indices by i -> ((i - 1 + shift) mod 2N) + 1 (a boundary rotation)."""
        n = 2 * self.n_pairs
        return PlanarPairing(
            tuple(tuple(((i - 1 + shift) % n) + 1 for i in p) for p in self.pairs)
        )

    def to_json_obj(self) -> list:
        return [list(p) for p in self.pairs]

    def key(self) -> str:
        """Compact string form, e.g. '1-2,3-4' (used as CLI syntax and JSON keys)."""
        return ",".join(f"{a}-{b}" for a, b in self.pairs)

    @classmethod
    def from_key(cls, text: str) -> "PlanarPairing":
        pairs = []
        for chunk in text.split(","):
            a, b = chunk.split("-")
            pairs.append((int(a), int(b)))
        return cls(pairs)

    def __iter__(self):
        return iter(self.pairs)


def _validate_pair_partition(pairs: Sequence[Pair]) -> None:
    flat = [i for p in pairs for i in p]
    n = len(flat)
    if n == 0:
        raise GeometryError("empty pairing")
    if sorted(flat) != list(range(1, n + 1)):
        raise GeometryError(f"pairs do not partition 1..{n}: {pairs}")


def _has_crossing(pairs: Sequence[Pair]) -> bool:
    for i, (a, b) in enumerate(pairs):
        for c, d in pairs[i + 1:]:
            if a < c < b < d or c < a < d < b:
                return True
    return False


def is_planar(pairs: Iterable[Iterable[int]]) -> bool:
    """True iff the pair partition has no crossing a < c < b < d.

    Raises GeometryError when the input is not a pair partition at all.
    """
    canon = _canonical_pairs(pairs)
    _validate_pair_partition(canon)
    return not _has_crossing(canon)


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def enumerate_pairings(n_pairs: int) -> list:
    """All Catalan(N) non-crossing pairings of {1..2N}, in canonical order."""
    if not isinstance(n_pairs, int) or isinstance(n_pairs, bool) or n_pairs < 1:
        raise GeometryError(f"n_pairs must be a positive integer, got {n_pairs!r}")

    def rec(indices: Tuple[int, ...]):
        if not indices:
            yield ()
            return
        first = indices[0]
        # the partner must leave an even count on each side
        for k in range(1, len(indices), 2):
            inner = indices[1:k]
            outer = indices[k + 1:]
            for left in rec(inner):
                for right in rec(outer):
                    yield ((first, indices[k]),) + left + right

    result = [PlanarPairing(p) for p in rec(tuple(range(1, 2 * n_pairs + 1)))]
    result.sort(key=lambda pp: pp.pairs)
    return result


@dataclass(frozen=True)
class MoebiusTransform:
    """x -> (a x + b) / (c x + d) with ad - bc > 0 (half-plane preserving)."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not (self.a * self.d - self.b * self.c > 0):
            raise GeometryError("need ad - bc > 0")

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def pole(self) -> float:
        """Preimage of infinity; +inf when the map is affine (c == 0)."""
        if self.c == 0.0:
            return math.inf
        return -self.d / self.c

    def __call__(self, x: float) -> float:
        denom = self.c * x + self.d
        if denom == 0.0:
            raise PoleHit(f"x={x} hits the pole of {self}")
        return (self.a * x + self.b) / denom

    def derivative(self, x: float) -> float:
        denom = self.c * x + self.d
        if denom == 0.0:
            raise PoleHit(f"x={x} hits the pole of {self}")
        return self.det / (denom * denom)

    @classmethod
    def affine(cls, scale: float, shift: float) -> "MoebiusTransform":
        return cls(scale, shift, 0.0, 1.0)


def apply_moebius(transform: MoebiusTransform, config: BoundaryConfig):
    """Image configuration plus the derivative at every marked point.

    Raises PoleHit when a point sits on the pole and OrderBroken when the image
    is not strictly increasing (the caller must pick order-preserving maps).
    """
    pole = transform.pole()
    for x in config.points:
        if x == pole:
            raise PoleHit(f"configuration point {x} equals the pole")
    image = tuple(transform(x) for x in config.points)
    if any(a >= b for a, b in zip(image, image[1:])):
        raise OrderBroken(f"image of {config.points} under {transform} is not increasing")
    derivs = tuple(transform.derivative(x) for x in config.points)
    return BoundaryConfig(image), derivs


def random_order_preserving_moebius(rng: np.random.Generator, config: BoundaryConfig) -> MoebiusTransform:
    """Sample a Moebius map whose pole avoids the configuration hull.

    Composition of an optional inversion about a pole placed well outside
    [x_1, x_2N] with a random affine map; the result is strictly increasing on
    the configuration.  Coefficients are rescaled to determinant one.
    """
    lo, hi = config.points[0], config.points[-1]
    span = max(hi - lo, 1e-9)
    scale = float(np.exp(rng.uniform(-0.7, 0.7)))
    shift = float(rng.uniform(-2.0, 2.0)) * span

    if rng.random() < 0.5:
        a, b, c, d = scale, shift, 0.0, 1.0
    else:
        margin = 0.75 + rng.uniform(0.0, 2.0)
        pole = hi + span * margin if rng.random() < 0.5 else lo - span * margin
        # base inversion -1/(x - pole) has derivative 1/(x-pole)^2 > 0, so it
        # preserves order on either side of the pole; compose with the affine
        a0, b0, c0, d0 = 0.0, -1.0, 1.0, -pole
        a, b = scale * a0 + shift * c0, scale * b0 + shift * d0
        c, d = c0, d0

    norm = math.sqrt(abs(a * d - b * c))
    m = MoebiusTransform(a / norm, b / norm, c / norm, d / norm)
    apply_moebius(m, config)  # raises if the sample were bad
    return m


def cross_ratio(config: BoundaryConfig) -> float:
    """Four-point cross ratio in (0, 1); see the module docstring for the convention."""
    if len(config) != 4:
        raise GeometryError(f"cross ratio needs exactly 4 points, got {len(config)}")
    x1, x2, x3, x4 = config.points
    z = ((x2 - x1) * (x4 - x3)) / ((x3 - x1) * (x4 - x2))
    if not (0.0 < z < 1.0):
        raise GeometryError(f"cross ratio {z} outside (0,1)")
    return z


def complement_channel(pairing: PlanarPairing) -> PlanarPairing:
    """Swap the two N=2 pairings via the index rotation i -> i-1 (mod 4).

    Geometrically this is the boundary rotation that exchanges the collision
    channels z <-> 1 - z; applying it twice is the identity.
    """
    if pairing.n_pairs != 2:
        raise GeometryError("complement_channel is defined for N=2 only")
    return pairing.rotated(-1)


# ---------------------------------------------------------------------------
# Rectangle corners -> half-plane boundary points (elliptic modulus solve)
# ---------------------------------------------------------------------------

_AGM_TOL = 1e-14


def _agm(a: float, b: float) -> float:
    for _ in range(80):
        if abs(a - b) <= _AGM_TOL * abs(a):
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def elliptic_ratio(k: float) -> float:
    """K(k')/K(k) for modulus k in (0,1), via the arithmetic-geometric mean.

    Uses K(m) = pi / (2 agm(1, m')) so that no catastrophic 1 - k^2 is formed.
    """
    if not (0.0 < k < 1.0):
        raise GeometryError(f"modulus must lie in (0,1), got {k}")
    kc = math.sqrt((1.0 - k) * (1.0 + k))
    return _agm(1.0, kc) / _agm(1.0, k)


def _solve_modulus(ratio: float) -> float:
    """k in (0,1) with K(k')/K(k) = ratio, by bisection."""
    lo, hi = 1e-12, 1.0 - 1e-12
    flo = elliptic_ratio(lo) - ratio
    fhi = elliptic_ratio(hi) - ratio
    if not (flo > 0.0 > fhi):
        raise GeometryError(f"modulus bisection bracket failure for ratio {ratio}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if elliptic_ratio(mid) - ratio > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    return 0.5 * (lo + hi)


def rect_corner_preimages(aspect: float) -> BoundaryConfig:
    """Half-plane preimages of the corners of a rectangle of given aspect.

    `aspect` is width/height.  The conformal map sends the ordered boundary
    points (-1/k, -1, 1, 1/k) to the corners (top-left, bottom-left,
    bottom-right, top-right), i.e. counterclockwise from bottom-left the
    corners are the images of (x2, x3, x4, x1).  The modulus k solves
    K(k')/K(k) = 2 * height/width.  Under aspect -> 1/aspect the cross ratio
    obeys z + z' = 1 (the classical quarter-period duality); a square gives
    k = 3 - 2*sqrt(2) and z = 1/2, and z decreases to 0 monotonically for
    wide rectangles.
    """
    if not (aspect > 0.0 and math.isfinite(aspect)):
        raise GeometryError(f"aspect must be positive and finite, got {aspect}")
    k = _solve_modulus(2.0 / aspect)
    return BoundaryConfig((-1.0 / k, -1.0, 1.0, 1.0 / k))

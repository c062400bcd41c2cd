"""Numerical verification of the bracket-spanning condition at the launch point.

The smoothed driving SDE has diffusion field A1 = sqrt(kappa) d/dx_1 and drift
field A0 = sum_{i>=2} 2/(x_i - x_1) d/dx_i (the cutoff is identically one on
the evaluation region, so it never appears).  Iterated brackets G_1 = [A1, A0],
G_k = [A1, G_{k-1}] stay multiples of sum_i 2/(x_i - x_1)^{k+1} d/dx_i, and
together with A1 they span R^{2N} whenever the gaps are distinct; the module
checks the closed forms against nested finite differences and certifies the
span by singular values plus the explicit Vandermonde determinant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import BoundaryConfig

__all__ = [
    "BracketSystem",
    "closed_form_bracket",
    "numeric_bracket",
    "numeric_lie_bracket",
    "hoermander_rank",
    "HoermanderReport",
]

# per-order finite-difference steps (relative to each component's distance to
# the launch point), tuned so truncation and roundoff balance for the k-th
# nested derivative under two Richardson levels
_STEP_BY_ORDER = {1: 1e-2, 2: 1e-2, 3: 1.5e-2, 4: 2e-2, 5: 2.5e-2}
_STEP_DEFAULT = 3e-2

RANK_THRESHOLD = 1e-10


@dataclass(frozen=True)
class BracketSystem:
    """Launch-point bracket data: fields, closed-form brackets, and the matrices.

    Lambda is the diagonal of the (positive) bracket constants and M the
    Vandermonde-type matrix M[k, i] = 2/(x_i - x_1)^{k+1}; their product maps
    the spectator derivatives onto the brackets.
    """

    config: BoundaryConfig
    kappa: float
    j: int = 1

    def a1(self) -> np.ndarray:
        out = np.zeros(len(self.config))
        out[0] = math.sqrt(self.kappa)
        return out

    def a0(self, x: np.ndarray = None) -> np.ndarray:
        if x is None:
            x = self.config.array
        out = np.zeros(len(x))
        out[1:] = 2.0 / (x[1:] - x[0])
        return out

    def vandermonde(self) -> np.ndarray:
        x = self.config.array
        n = len(x)
        gaps = x[1:] - x[0]
        return np.array([2.0 / gaps ** (k + 1) for k in range(1, n)])

    def vandermonde_det(self) -> float:
        """det M via the product formula 2^{2N-1} prod y_i^2 prod_{i<j}(y_j - y_i)."""
        x = self.config.array
        y = 1.0 / (x[1:] - x[0])
        n = len(y)
        det = 2.0 ** n * float(np.prod(y ** 2))
        for i in range(n):
            for j in range(i + 1, n):
                det *= y[j] - y[i]
        return det


def closed_form_bracket(config: BoundaryConfig, k: int) -> np.ndarray:
    """G_k at the launch point, up to its positive constant.

    Components are 2/(x_i - x_1)^{k+1} in slots i >= 2 and zero in slot 1;
    the normalization makes the i=2 component exact.
    """
    _check_order(config, k)
    x = config.array
    out = np.zeros(len(x))
    out[1:] = 2.0 / (x[1:] - x[0]) ** (k + 1)
    return out


def _check_order(config: BoundaryConfig, k: int) -> None:
    if not (1 <= k <= len(config) - 1):
        raise ValueError(f"bracket order k={k} outside 1..{len(config) - 1}")


def numeric_bracket(config: BoundaryConfig, k: int, kappa: float = 4.0) -> np.ndarray:
    """[A1, G_{k-1}] by nested central differences in the launch coordinate.

    A1 is constant, so every bracket level is sqrt(kappa) * d/dx_1 of the
    previous field; k nested central differences at equal step collapse to the
    binomial stencil on a stride-2h grid.  Each spectator component carries
    its own scale x_i - x_1, so the step is set per component and two
    Richardson levels remove the leading truncation orders.
    """
    _check_order(config, k)
    x = config.array
    tau = _STEP_BY_ORDER.get(k, _STEP_DEFAULT)
    gaps = x[1:] - x[0]

    def kth_derivative(steps: np.ndarray) -> np.ndarray:
        # componentwise binomial stencil for d^k/dx_1^k of 2/(x_i - x_1)
        total = np.zeros(len(gaps))
        for r in range(k + 1):
            shift = (k - 2 * r) * steps
            total += ((-1) ** r) * math.comb(k, r) * 2.0 / (gaps - shift)
        return total / (2.0 * steps) ** k

    h = tau * gaps
    d1, d2, d4 = kth_derivative(h), kth_derivative(0.5 * h), kth_derivative(0.25 * h)
    r1, r2 = (4.0 * d2 - d1) / 3.0, (4.0 * d4 - d2) / 3.0
    out = np.zeros(len(x))
    out[1:] = (16.0 * r2 - r1) / 15.0
    return kappa ** (0.5 * k) * out


def numeric_lie_bracket(field_x, field_y, points: np.ndarray, step: float) -> np.ndarray:
    """Generic [X, Y] = JY X - JX Y with central-difference Jacobians."""
    points = np.asarray(points, dtype=float)
    n = len(points)

    def jacobian(field) -> np.ndarray:
        jac = np.empty((n, n))
        for col in range(n):
            pp = points.copy(); pp[col] += step
            pm = points.copy(); pm[col] -= step
            jac[:, col] = (field(pp) - field(pm)) / (2.0 * step)
        return jac

    xv, yv = field_x(points), field_y(points)
    return jacobian(field_y) @ xv - jacobian(field_x) @ yv


@dataclass(frozen=True)
class HoermanderReport:
    rank: int
    singular_values: Tuple[float, ...]
    smallest_singular_value: float
    vandermonde_det: float
    dimension: int

    @property
    def full_rank(self) -> bool:
        return self.rank == self.dimension

    def to_json_obj(self) -> dict:
        return {
            "rank": self.rank,
            "dimension": self.dimension,
            "full_rank": self.full_rank,
            "singular_values": list(self.singular_values),
            "smallest_singular_value": self.smallest_singular_value,
            "vandermonde_det": self.vandermonde_det,
        }


def hoermander_rank(config: BoundaryConfig, kappa: float = 4.0) -> HoermanderReport:
    """Numerical rank of {A1, G_1, ..., G_{2N-1}} at the launch point.

    Rank is counted by singular values above RANK_THRESHOLD times the largest;
    the explicit Vandermonde determinant of the spectator block is reported as
    the independent invertibility certificate.
    """
    sys = BracketSystem(config, kappa)
    n = len(config)
    rows = [sys.a1()]
    for k in range(1, n):
        rows.append(closed_form_bracket(config, k))
    matrix = np.array(rows)
    svals = np.linalg.svd(matrix, compute_uv=False)
    rank = int(np.sum(svals > RANK_THRESHOLD * svals[0]))
    return HoermanderReport(
        rank=rank,
        singular_values=tuple(float(s) for s in svals),
        smallest_singular_value=float(svals[-1]),
        vandermonde_det=sys.vandermonde_det(),
        dimension=n,
    )

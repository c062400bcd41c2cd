"""Partition functions on the half-plane boundary and their verification toolkit.

Two closed-form total partition functions are implemented: the Pfaffian form
at kappa=3 and the alternating product form at kappa=4.  Four-point channel
functions (N=2) are pinned self-containedly: the defining second-order PDE is
reduced on the cross-ratio coordinate to a linear ODE whose coefficients are
extracted numerically, and the channel solution is the branch that stays
subdominant in the opposite collision channel, normalized to 1 at its own
collision point.  Everything else here (log-gradients, PDE residuals,
conformal covariance defects, convex recombination) is the measurement
apparatus used by the simulation and acceptance layers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import (
    BoundaryConfig,
    GeometryError,
    KappaParams,
    MoebiusTransform,
    PlanarPairing,
    apply_moebius,
    complement_channel,
    cross_ratio,
    enumerate_pairings,
)

__all__ = [
    "PartitionError",
    "DegenerateConfig",
    "UnsupportedPairingCount",
    "PartitionFunction",
    "IsingPfaffian",
    "GffProduct",
    "PureChannel",
    "ConvexCombination",
    "PairingPrediction",
    "OdeReduction",
    "pfaffian",
    "ising_Z",
    "gff_Z",
    "log_grad",
    "log_grad_fd",
    "pde_residual",
    "covariance_defect",
    "reduce_to_ode",
    "pure_Z",
    "predict_pairing_probabilities",
    "convex_combine",
]


class PartitionError(ValueError):
    pass


class DegenerateConfig(PartitionError):
    """Two marked points closer than the uniform degeneracy cutoff."""


class UnsupportedPairingCount(PartitionError):
    """Channel functions are only available for N <= 2."""


DEGENERACY_REL_TOL = 1e-12


def _check_config(config: BoundaryConfig) -> np.ndarray:
    x = config.array
    scale = max(config.span(), 1.0)
    if config.min_gap() < DEGENERACY_REL_TOL * scale:
        raise DegenerateConfig(f"gap below {DEGENERACY_REL_TOL} * scale in {config.points}")
    return x


# ---------------------------------------------------------------------------
# Pfaffians
# ---------------------------------------------------------------------------

def _pfaffian_combinatorial(a: np.ndarray) -> float:
    """Signed sum over all pair partitions; exact oracle, O((2n-1)!!)."""
    n = a.shape[0]

    def rec(idx: Tuple[int, ...]) -> float:
        if not idx:
            return 1.0
        first, rest = idx[0], idx[1:]
        total = 0.0
        sign = 1.0
        for pos, j in enumerate(rest):
            sub = rest[:pos] + rest[pos + 1:]
            total += sign * a[first, j] * rec(sub)
            sign = -sign
        return total

    return rec(tuple(range(n)))


def _pfaffian_elimination(a: np.ndarray) -> float:
    """Parlett-Reid style skew-symmetric elimination with partial pivoting."""
    m = np.array(a, dtype=float)
    n = m.shape[0]
    if n % 2 == 1:
        return 0.0
    value = 1.0
    for k in range(0, n - 1, 2):
        kp = k + 1 + int(np.argmax(np.abs(m[k + 1:, k])))
        if kp != k + 1:
            m[[k + 1, kp]] = m[[kp, k + 1]]
            m[:, [k + 1, kp]] = m[:, [kp, k + 1]]
            value = -value
        piv = m[k, k + 1]
        if piv == 0.0:
            return 0.0
        value *= piv
        if k + 2 < n:
            tau = m[k, k + 2:] / piv
            m[k + 2:, k + 2:] += np.outer(tau, m[k + 2:, k + 1])
            m[k + 2:, k + 2:] -= np.outer(m[k + 2:, k + 1], tau)
    return value


def pfaffian(a: np.ndarray, method: str = "auto") -> float:
    """Pfaffian of an even-dimensional skew-symmetric matrix.

    method: 'combinatorial' (exact signed pairing sum, 2n <= 12),
    'elimination' (O(n^3) Parlett-Reid), or 'auto' (combinatorial up to 8).
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or n % 2 != 0:
        raise PartitionError(f"need an even square matrix, got shape {a.shape}")
    if not np.allclose(a, -a.T, atol=1e-12 * (1.0 + np.abs(a).max())):
        raise PartitionError("matrix is not skew-symmetric")
    if method == "auto":
        method = "combinatorial" if n <= 8 else "elimination"
    if method == "combinatorial":
        if n > 12:
            raise PartitionError("combinatorial Pfaffian limited to 2n <= 12")
        return _pfaffian_combinatorial(a)
    if method == "elimination":
        return _pfaffian_elimination(a)
    raise PartitionError(f"unknown method {method!r}")


def _cauchy_matrix(x: np.ndarray) -> np.ndarray:
    diff = x[None, :] - x[:, None]
    with np.errstate(divide="ignore"):
        a = 1.0 / diff
    np.fill_diagonal(a, 0.0)
    return a


# ---------------------------------------------------------------------------
# Evaluator hierarchy
# ---------------------------------------------------------------------------

class PartitionFunction:
    """Positive function of an ordered marked-point configuration.

    Subclasses provide value_at/grad_log_at on raw arrays (used in the
    simulation hot loop); the BoundaryConfig wrappers validate inputs and
    reject degenerate configurations uniformly.  grad_log/d2_log fall back to
    Richardson-extrapolated central differences when no analytic form exists.
    """

    kind = "abstract"

    def __init__(self, params: KappaParams):
        self.params = params

    @property
    def kappa(self) -> float:
        return self.params.kappa

    @property
    def h(self) -> float:
        return self.params.h

    # -- array-level interface ------------------------------------------------
    def value_at(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def log_value_at(self, x: np.ndarray) -> float:
        return math.log(self.value_at(x))

    def grad_log_at(self, x: np.ndarray) -> np.ndarray:
        return self._grad_log_fd(x)

    def d2_log_at(self, x: np.ndarray, j: int) -> float:
        """Second log-derivative d^2/dx_j^2 log Z (j is 1-based)."""
        return self._d2_log_fd(x, j)

    # -- config-level interface -----------------------------------------------
    def value(self, config: BoundaryConfig) -> float:
        return self.value_at(_check_config(config))

    def grad_log(self, config: BoundaryConfig) -> np.ndarray:
        return self.grad_log_at(_check_config(config))

    def d2_log(self, config: BoundaryConfig, j: int) -> float:
        return self.d2_log_at(_check_config(config), j)

    # -- finite-difference fallbacks -------------------------------------------
    def _fd_step(self, x: np.ndarray, m: int) -> float:
        gaps = []
        if m > 0:
            gaps.append(x[m] - x[m - 1])
        if m < len(x) - 1:
            gaps.append(x[m + 1] - x[m])
        return 1e-4 * min(gaps)

    def _grad_log_fd(self, x: np.ndarray) -> np.ndarray:
        out = np.empty(len(x))
        for m in range(len(x)):
            out[m] = self._d1_log_fd(x, m)
        return out

    def _d1_log_fd(self, x: np.ndarray, m: int) -> float:
        h = self._fd_step(x, m)

        def central(step):
            xp = x.copy(); xp[m] += step
            xm = x.copy(); xm[m] -= step
            return (self.log_value_at(xp) - self.log_value_at(xm)) / (2.0 * step)

        d_h, d_h2 = central(h), central(0.5 * h)
        return (4.0 * d_h2 - d_h) / 3.0

    def _d2_log_fd(self, x: np.ndarray, j: int) -> float:
        m = j - 1
        h = self._fd_step(x, m)

        def second(step):
            xp = x.copy(); xp[m] += step
            xm = x.copy(); xm[m] -= step
            return (self.log_value_at(xp) - 2.0 * self.log_value_at(x)
                    + self.log_value_at(xm)) / (step * step)

        d_h, d_h2 = second(h), second(0.5 * h)
        return (4.0 * d_h2 - d_h) / 3.0


class IsingPfaffian(PartitionFunction):
    """Total partition function at kappa=3: Pf(1/(x_j - x_i)), zero diagonal."""

    kind = "ising_pfaffian"

    def __init__(self):
        super().__init__(KappaParams.from_kappa(3.0))

    def value_at(self, x: np.ndarray) -> float:
        return pfaffian(_cauchy_matrix(np.asarray(x, dtype=float)))

    def grad_log_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = len(x)
        if n == 2:
            g = 1.0 / (x[1] - x[0])
            return np.array([g, -g])
        if n == 4:
            return self._grad_log_four(x)
        b = np.linalg.inv(_cauchy_matrix(x))
        out = np.empty(n)
        for m in range(n):
            w = np.zeros(n)
            mask = np.arange(n) != m
            w[mask] = 1.0 / (x[mask] - x[m]) ** 2
            out[m] = -float(np.dot(b[m], w))
        return out

    @staticmethod
    def _grad_log_four(x: np.ndarray) -> np.ndarray:
        # three-term expansion Pf = a12 a34 - a13 a24 + a14 a23, differentiated per term
        terms = ((1.0, 0, 1, 2, 3), (-1.0, 0, 2, 1, 3), (1.0, 0, 3, 1, 2))
        z_val = 0.0
        dz = [0.0, 0.0, 0.0, 0.0]
        for sign, a, b, c, d in terms:
            g1 = x[b] - x[a]
            g2 = x[d] - x[c]
            t = sign / (g1 * g2)
            z_val += t
            dz[a] += t / g1
            dz[b] -= t / g1
            dz[c] += t / g2
            dz[d] -= t / g2
        return np.array(dz) / z_val

    def d2_log_at(self, x: np.ndarray, j: int) -> float:
        x = np.asarray(x, dtype=float)
        n = len(x)
        m = j - 1
        b = np.linalg.inv(_cauchy_matrix(x))
        d = np.zeros((n, n))
        e = np.zeros((n, n))
        mask = np.arange(n) != m
        w2 = np.zeros(n); w2[mask] = 1.0 / (x[mask] - x[m]) ** 2
        w3 = np.zeros(n); w3[mask] = 2.0 / (x[mask] - x[m]) ** 3
        d[m, :] = w2; d[:, m] = -w2
        e[m, :] = w3; e[:, m] = -w3
        bd = b @ d
        return 0.5 * (float(np.trace(b @ e)) - float(np.trace(bd @ bd)))


def _gff_exponent(i: int, j: int) -> float:
    return 0.5 if (j - i) % 2 == 0 else -0.5


class GffProduct(PartitionFunction):
    """Total partition function at kappa=4: prod_{i<j} (x_j - x_i)^{(-1)^{j-i}/2}."""

    kind = "gff_product"

    def __init__(self):
        super().__init__(KappaParams.from_kappa(4.0))

    def value_at(self, x: np.ndarray) -> float:
        return math.exp(self.log_value_at(x))

    def log_value_at(self, x: np.ndarray) -> float:
        total = 0.0
        n = len(x)
        for i in range(n):
            for j in range(i + 1, n):
                total += _gff_exponent(i, j) * math.log(x[j] - x[i])
        return total

    def grad_log_at(self, x: np.ndarray) -> np.ndarray:
        n = len(x)
        out = np.zeros(n)
        for m in range(n):
            acc = 0.0
            for j in range(m + 1, n):
                acc -= _gff_exponent(m, j) / (x[j] - x[m])
            for i in range(m):
                acc += _gff_exponent(i, m) / (x[m] - x[i])
            out[m] = acc
        return out

    def d2_log_at(self, x: np.ndarray, j: int) -> float:
        m = j - 1
        acc = 0.0
        for i in range(len(x)):
            if i != m:
                acc -= _gff_exponent(min(i, m), max(i, m)) / (x[i] - x[m]) ** 2
        return acc


# ---------------------------------------------------------------------------
# Cross-ratio ODE reduction
# ---------------------------------------------------------------------------

def _cross_ratio_partials(x: np.ndarray):
    """z and its first partials; z_kk on request via _cross_ratio_second."""
    x1, x2, x3, x4 = x
    z = (x2 - x1) * (x4 - x3) / ((x3 - x1) * (x4 - x2))
    g = np.array([
        1.0 / (x3 - x1) - 1.0 / (x2 - x1),
        1.0 / (x2 - x1) + 1.0 / (x4 - x2),
        -1.0 / (x4 - x3) - 1.0 / (x3 - x1),
        1.0 / (x4 - x3) - 1.0 / (x4 - x2),
    ])
    return z, z * g, g


def _cross_ratio_second(x: np.ndarray, m: int) -> float:
    """d^2 z / dx_m^2 for 0-based m."""
    x1, x2, x3, x4 = x
    z, zg, g = _cross_ratio_partials(x)
    if m == 0:
        dg = 1.0 / (x3 - x1) ** 2 - 1.0 / (x2 - x1) ** 2
    elif m == 1:
        dg = -1.0 / (x2 - x1) ** 2 + 1.0 / (x4 - x2) ** 2
    elif m == 2:
        dg = -1.0 / (x4 - x3) ** 2 + 1.0 / (x3 - x1) ** 2
    else:
        dg = -1.0 / (x4 - x3) ** 2 + 1.0 / (x4 - x2) ** 2
    return z * (g[m] ** 2 + dg)


def _reduction_row(params: KappaParams, x: np.ndarray):
    """Exact coefficients (c2, c1, c0) of (F'', F', F) in L_1[P * F(z)] / P.

    P is the channel prefactor ((x2-x1)(x4-x3))^{-2h}; all partials of P and z
    are closed-form.  The 1/(x2-x1)^2 parts of c0 cancel identically (the
    ansatz removes the leading channel singularity), so they are dropped
    rather than left to float cancellation.
    """
    kap, h = params.kappa, params.h
    x1, x2, x3, x4 = x
    u, v = x2 - x1, x4 - x3
    z, zgrad, _ = _cross_ratio_partials(x)
    z11 = _cross_ratio_second(x, 0)

    # log-derivatives of the prefactor
    plog = np.array([2.0 * h / u, -2.0 * h / u, 2.0 * h / v, -2.0 * h / v])

    c2 = 0.5 * kap * zgrad[0] ** 2
    c1 = 0.5 * kap * (2.0 * plog[0] * zgrad[0] + z11)
    for i in range(1, 4):
        c1 += 2.0 / (x[i] - x1) * zgrad[i]
    g3, g4 = x3 - x1, x4 - x1
    c0 = 2.0 * h * (2.0 / (g3 * v) - 2.0 / (g4 * v) - 1.0 / g3 ** 2 - 1.0 / g4 ** 2)
    return z, c2, c1, c0


_FAMILIES = ((1.0, 2.0), (1.0, 3.0), (2.0, 2.5), (0.5, 4.0))


def _configs_with_cross_ratio(z: float, families=_FAMILIES) -> List[np.ndarray]:
    out = []
    for scale, far in families:
        x2 = z * far / (far - 1.0 + z)
        base = np.array([0.0, x2, 1.0, far])
        out.append(scale * base)
    return out


@dataclass
class OdeReduction:
    """Second-order ODE a2 F'' + a1 F' + a0 F = 0 on the cross-ratio coordinate.

    Coefficients are normalized to a2 = 1 and sampled on `grid`; coefficients()
    re-extracts them exactly at any interior z.  The indicial data at both
    endpoints feed the series seeds of the channel solver.
    """

    params: KappaParams
    grid: np.ndarray
    a1_values: np.ndarray
    a0_values: np.ndarray
    indicial_exponents: Tuple[float, float]
    ls_residual: float
    p_series0: np.ndarray
    q_series0: np.ndarray
    p_series1: np.ndarray
    q_series1: np.ndarray

    def coefficients(self, z: float) -> Tuple[float, float]:
        return _extract_coefficients(self.params, z)

    def indicial_exponents_at_one(self) -> Tuple[float, float]:
        return _indicial_roots(self.p_series1[0], self.q_series1[0])


def _extract_coefficients(params: KappaParams, z: float, families=_FAMILIES,
                          with_residual: bool = False):
    if not (0.0 < z < 1.0):
        raise PartitionError(f"cross ratio {z} outside (0,1)")
    rows = [_reduction_row(params, x) for x in _configs_with_cross_ratio(z, families)]
    c2 = np.array([r[1] for r in rows])
    c1 = np.array([r[2] for r in rows])
    c0 = np.array([r[3] for r in rows])
    denom = float(np.dot(c2, c2))
    a1 = float(np.dot(c1, c2)) / denom
    a0 = float(np.dot(c0, c2)) / denom
    if with_residual:
        r1 = np.max(np.abs(c1 / c2 - a1)) / max(1.0, abs(a1))
        r0 = np.max(np.abs(c0 / c2 - a0)) / max(1.0, abs(a0))
        return a1, a0, max(float(r1), float(r0))
    return a1, a0


def _fit_series(fun, scale: float, degree: int = 4) -> np.ndarray:
    """Taylor coefficients of an analytic function near 0 from small samples."""
    t = scale * np.arange(1.0, degree + 3.0)
    vals = np.array([fun(v) for v in t])
    vander = np.vander(t, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vander, vals, rcond=None)
    return coef


def _indicial_roots(p0: float, q0: float) -> Tuple[float, float]:
    disc = (p0 - 1.0) ** 2 - 4.0 * q0
    root = math.sqrt(disc)
    s1 = 0.5 * (1.0 - p0 - root)
    s2 = 0.5 * (1.0 - p0 + root)
    return (s1, s2)


def reduce_to_ode(params: KappaParams, n_grid: int = 201, delta: float = 1e-4,
                  families=_FAMILIES) -> OdeReduction:
    """Extract the cross-ratio ODE from the j=1 PDE by least squares.

    At every z the PDE is applied exactly to the covariant channel ansatz
    over several configurations sharing that cross ratio; the resulting
    (F'', F', F) coefficient rows must be proportional, and their common
    direction (a2 normalized to 1) is the ODE.  A consistency residual above
    1e-8 signals a broken extraction and raises.
    """
    grid = np.linspace(delta, 1.0 - delta, n_grid)
    a1_vals = np.empty(n_grid)
    a0_vals = np.empty(n_grid)
    worst = 0.0
    probe_idx = {0, n_grid // 4, n_grid // 2, (3 * n_grid) // 4, n_grid - 1}
    for i, z in enumerate(grid):
        if i in probe_idx:
            a1_vals[i], a0_vals[i], res = _extract_coefficients(
                params, float(z), families, with_residual=True)
            worst = max(worst, res)
        else:
            a1_vals[i], a0_vals[i] = _extract_coefficients(params, float(z), families)
    if worst > 1e-8:
        raise PartitionError(f"inconsistent ODE extraction, residual {worst:.3e}")
    if not (np.all(np.isfinite(a1_vals)) and np.all(np.isfinite(a0_vals))):
        raise PartitionError("non-finite ODE coefficients on the grid")

    p0_series = _fit_series(lambda t: t * _extract_coefficients(params, t, families)[0], 8e-4)
    q0_series = _fit_series(lambda t: t * t * _extract_coefficients(params, t, families)[1], 8e-4)
    p1_series = _fit_series(lambda t: -t * _extract_coefficients(params, 1.0 - t, families)[0], 8e-4)
    q1_series = _fit_series(lambda t: t * t * _extract_coefficients(params, 1.0 - t, families)[1], 8e-4)

    exps = _indicial_roots(p0_series[0], q0_series[0])
    if min(abs(exps[0]), abs(exps[1])) > 1e-6:
        raise PartitionError(f"no indicial exponent near 0 at z=0: {exps}")
    return OdeReduction(params, grid, a1_vals, a0_vals, exps, worst,
                        p0_series, q0_series, p1_series, q1_series)


def _frobenius_series(s: float, p: np.ndarray, q: np.ndarray, n_terms: int) -> np.ndarray:
    """Coefficients c_0..c_{n_terms-1} of the branch y = z^s sum c_k z^k.

    p and q are the Taylor coefficients of z*p(z) and z^2*q(z).  At a
    resonance (indicial polynomial vanishing at s+k) the free coefficient is
    set to zero, which is only valid when the right side vanishes too; that
    consistency is asserted.
    """
    def indicial(t: float) -> float:
        return t * (t - 1.0) + p[0] * t + q[0]

    c = np.zeros(n_terms)
    c[0] = 1.0
    for k in range(1, n_terms):
        rhs = 0.0
        for m in range(k):
            order = k - m
            pk = p[order] if order < len(p) else 0.0
            qk = q[order] if order < len(q) else 0.0
            rhs -= c[m] * (pk * (s + m) + qk)
        denom = indicial(s + k)
        if abs(denom) < 1e-8:
            if abs(rhs) > 1e-7:
                raise PartitionError(
                    f"logarithmic Frobenius branch at exponent {s} + {k} (rhs {rhs:.2e})")
            c[k] = 0.0
        else:
            c[k] = rhs / denom
    return c


def _series_eval(s: float, c: np.ndarray, z: float) -> Tuple[float, float]:
    """(value, derivative) of z^s sum c_k z^k."""
    val = 0.0
    der = 0.0
    for k, ck in enumerate(c):
        val += ck * z ** (s + k)
        der += ck * (s + k) * z ** (s + k - 1) if (s + k) != 0.0 else 0.0
    return val, der


_SERIES_CUT = 2e-4
_SEED_W = 1e-4


class ChannelBasis:
    """Channel function F on (0,1) for one kappa, with its reduction.

    F solves the reduced ODE, carries the subdominant exponent at z -> 1 (the
    opposite collision channel) and is normalized to F(0) = 1.  Built once per
    kappa and then read-only.
    """

    def __init__(self, params: KappaParams):
        if params.kappa not in (3.0, 4.0):
            raise UnsupportedPairingCount(
                f"four-point channel functions are pinned for kappa in {{3, 4}}, got {params.kappa}")
        self.params = params
        self.reduction = reduce_to_ode(params)
        red = self.reduction

        # subdominant seed at z = 1 (larger exponent in the w = 1-z frame)
        sig = max(red.indicial_exponents_at_one())
        self.sigma_at_one = sig
        self._c_one = _frobenius_series(sig, red.p_series1, red.q_series1, 4)

        w0 = _SEED_W
        g0, dgdw = _series_eval(sig, self._c_one, w0)
        y0 = np.array([g0, -dgdw])   # d/dz = -d/dw

        def rhs(z, y):
            a1, a0 = _extract_coefficients(params, float(z))
            return [y[1], -(a1 * y[1] + a0 * y[0])]

        self._sol = solve_ivp(rhs, (1.0 - w0, w0), y0, method="DOP853",
                              rtol=1e-12, atol=1e-14, dense_output=True)
        if not self._sol.success:
            raise PartitionError(f"channel ODE integration failed: {self._sol.message}")

        # normalization against the two-branch basis at small z
        exps = sorted(red.indicial_exponents)
        self._c_zero = _frobenius_series(0.0, red.p_series0, red.q_series0, 4)
        self._s_sub = exps[1]
        self._c_sub = _frobenius_series(self._s_sub, red.p_series0, red.q_series0, 4)
        z0 = w0
        u1, du1 = _series_eval(0.0, self._c_zero, z0)
        u2, du2 = _series_eval(self._s_sub, self._c_sub, z0)
        g, dg = self._sol.sol(z0)
        mat = np.array([[u1, u2], [du1, du2]])
        a, b = np.linalg.solve(mat, np.array([g, dg]))
        if not (a > 0.0):
            raise PartitionError(f"channel normalization failed (a={a})")
        self._norm = a
        self._sub_weight = b / a

    def f(self, z: float) -> float:
        return self.f_and_derivative(z)[0]

    def f_and_derivative(self, z: float) -> Tuple[float, float]:
        if not (0.0 < z < 1.0):
            raise PartitionError(f"cross ratio {z} outside (0,1)")
        if z < _SERIES_CUT:
            v1, d1 = _series_eval(0.0, self._c_zero, z)
            v2, d2 = _series_eval(self._s_sub, self._c_sub, z)
            return v1 + self._sub_weight * v2, d1 + self._sub_weight * d2
        if z > 1.0 - _SERIES_CUT:
            v, dw = _series_eval(self.sigma_at_one, self._c_one, 1.0 - z)
            return v / self._norm, -dw / self._norm
        g, dg = self._sol.sol(z)
        return g / self._norm, dg / self._norm

    def f_second(self, z: float, f: float, fp: float) -> float:
        a1, a0 = _extract_coefficients(self.params, z)
        return -(a1 * fp + a0 * f)


@lru_cache(maxsize=8)
def channel_basis(kappa: float) -> ChannelBasis:
    return ChannelBasis(KappaParams.from_kappa(kappa))


_PAIRING_12_34 = PlanarPairing([(1, 2), (3, 4)])
_PAIRING_14_23 = PlanarPairing([(1, 4), (2, 3)])


def pure_Z(params: KappaParams, config: BoundaryConfig, pairing: PlanarPairing) -> float:
    """Channel partition function for N=2 (kappa 3 or 4).

    The {1,2}{3,4} channel is ((x2-x1)(x4-x3))^{-2h} F(z); the rotated channel
    {1,4}{2,3} follows from the index rotation together with z -> 1-z.
    """
    if config.n_pairs != 2:
        raise UnsupportedPairingCount("pure_Z requires exactly 4 marked points")
    x = _check_config(config)
    basis = channel_basis(params.kappa)
    z = cross_ratio(config)
    h2 = 2.0 * params.h
    if pairing == _PAIRING_12_34:
        return float(((x[1] - x[0]) * (x[3] - x[2])) ** (-h2) * basis.f(z))
    if pairing == _PAIRING_14_23:
        return float(((x[3] - x[0]) * (x[2] - x[1])) ** (-h2) * basis.f(1.0 - z))
    raise GeometryError(f"not an N=2 pairing: {pairing}")


class PureChannel(PartitionFunction):
    """Channel evaluator: N=1 closed form for any kappa, N=2 via the ODE basis."""

    kind = "pure_channel"

    def __init__(self, params: KappaParams, pairing: PlanarPairing):
        super().__init__(params)
        if pairing.n_pairs > 2:
            raise UnsupportedPairingCount("pure channels implemented for N <= 2")
        if pairing.n_pairs == 2 and params.kappa not in (3.0, 4.0):
            raise UnsupportedPairingCount("N=2 channels require kappa in {3, 4}")
        self.pairing = pairing

    def value_at(self, x: np.ndarray) -> float:
        if self.pairing.n_pairs == 1:
            return (x[1] - x[0]) ** (-2.0 * self.h)
        return pure_Z(self.params, BoundaryConfig(x), self.pairing)

    def _chain(self, x: np.ndarray):
        """(prefactor log-grads, F, F', F'', z-sign) in the channel frame."""
        basis = channel_basis(self.kappa)
        z, zgrad, _ = _cross_ratio_partials(x)
        if self.pairing == _PAIRING_12_34:
            arg, sign = z, 1.0
            pairs = ((0, 1), (2, 3))
        else:
            arg, sign = 1.0 - z, -1.0
            pairs = ((0, 3), (1, 2))
        f, fp = basis.f_and_derivative(arg)
        fpp = basis.f_second(arg, f, fp)
        plog = np.zeros(4)
        p2 = np.zeros(4)
        for a, b in pairs:
            gap = x[b] - x[a]
            plog[a] += 2.0 * self.h / gap
            plog[b] -= 2.0 * self.h / gap
            p2[a] += 2.0 * self.h / gap ** 2
            p2[b] += 2.0 * self.h / gap ** 2
        return plog, p2, f, fp, fpp, sign, zgrad

    def grad_log_at(self, x: np.ndarray) -> np.ndarray:
        if self.pairing.n_pairs == 1:
            g = 2.0 * self.h / (x[1] - x[0])
            return np.array([g, -g])
        plog, _, f, fp, _, sign, zgrad = self._chain(x)
        return plog + (fp / f) * sign * zgrad

    def d2_log_at(self, x: np.ndarray, j: int) -> float:
        m = j - 1
        if self.pairing.n_pairs == 1:
            return 2.0 * self.h / (x[1] - x[0]) ** 2
        plog, p2, f, fp, fpp, sign, zgrad = self._chain(x)
        zjj = _cross_ratio_second(x, m)
        ratio = fp / f
        curv = fpp / f - ratio * ratio
        return p2[m] + curv * zgrad[m] ** 2 + ratio * sign * zjj


class ConvexCombination(PartitionFunction):
    """Convex mixture sum_a c_a Z_a with constant coefficients summing to one."""

    kind = "convex_combination"

    def __init__(self, coefficients: Sequence[float], members: Sequence[PartitionFunction]):
        if len(coefficients) != len(members) or not members:
            raise PartitionError("need matching nonempty coefficients and members")
        kappas = {m.kappa for m in members}
        if len(kappas) != 1:
            raise PartitionError(f"members carry different kappas: {kappas}")
        super().__init__(members[0].params)
        coef = np.asarray(coefficients, dtype=float)
        if np.any(coef < -1e-12) or abs(coef.sum() - 1.0) > 1e-9:
            raise PartitionError("coefficients must be nonnegative and sum to 1")
        self.coefficients = coef
        self.members = list(members)

    def value_at(self, x: np.ndarray) -> float:
        return float(sum(c * m.value_at(x) for c, m in zip(self.coefficients, self.members)))

    def grad_log_at(self, x: np.ndarray) -> np.ndarray:
        vals = np.array([m.value_at(x) for m in self.members])
        grads = np.array([m.grad_log_at(x) for m in self.members])
        weights = self.coefficients * vals
        return (weights[:, None] * grads).sum(axis=0) / weights.sum()

    def d2_log_at(self, x: np.ndarray, j: int) -> float:
        vals = np.array([m.value_at(x) for m in self.members])
        grads = np.array([m.grad_log_at(x)[j - 1] for m in self.members])
        d2s = np.array([m.d2_log_at(x, j) for m in self.members])
        weights = self.coefficients * vals
        total = weights.sum()
        d1 = float((weights * grads).sum() / total)
        d2_over_z = float((weights * (grads ** 2 + d2s)).sum() / total)
        return d2_over_z - d1 * d1


_ISING = IsingPfaffian()
_GFF = GffProduct()


def ising_Z(config: BoundaryConfig) -> float:
    return _ISING.value(config)


def gff_Z(config: BoundaryConfig) -> float:
    return _GFF.value(config)


def total_evaluator(kappa: float) -> PartitionFunction:
    if kappa == 3.0:
        return _ISING
    if kappa == 4.0:
        return _GFF
    raise PartitionError(f"no total partition function wired for kappa={kappa}")


# ---------------------------------------------------------------------------
# Verification operations
# ---------------------------------------------------------------------------

def log_grad(evaluator: PartitionFunction, config: BoundaryConfig, j: int) -> float:
    """d/dx_j log Z (j is 1-based); analytic where available."""
    _check_index(config, j)
    return float(evaluator.grad_log(config)[j - 1])


def log_grad_fd(evaluator: PartitionFunction, config: BoundaryConfig, j: int) -> float:
    """Generic Richardson-extrapolated central-difference route (the fallback)."""
    _check_index(config, j)
    return evaluator._d1_log_fd(_check_config(config), j - 1)


def _check_index(config: BoundaryConfig, j: int) -> None:
    if not (1 <= j <= len(config)):
        raise PartitionError(f"index j={j} outside 1..{len(config)}")


def pde_residual(evaluator: PartitionFunction, config: BoundaryConfig, j: int) -> float:
    """Relative residual of the j-th null-state equation, scaled by the largest term."""
    _check_index(config, j)
    x = _check_config(config)
    kap, h = evaluator.kappa, evaluator.h
    m = j - 1
    g = evaluator.grad_log_at(x)
    d2 = evaluator.d2_log_at(x, j)
    terms = [0.5 * kap * (g[m] ** 2 + d2)]
    for i in range(len(x)):
        if i == m:
            continue
        gap = x[i] - x[m]
        terms.append(2.0 / gap * g[i])
        terms.append(-2.0 * h / gap ** 2)
    total = sum(terms)
    return abs(total) / max(abs(t) for t in terms)


def covariance_defect(evaluator: PartitionFunction, config: BoundaryConfig,
                      transform: MoebiusTransform) -> float:
    """|Z(x) - prod phi'(x_i)^h * Z(phi(x))| / Z(x)."""
    image, derivs = apply_moebius(transform, config)
    factor = 1.0
    for d in derivs:
        factor *= d ** evaluator.h
    base = evaluator.value(config)
    return abs(base - factor * evaluator.value(image)) / base


@dataclass(frozen=True)
class PairingPrediction:
    """Predicted probability per pairing; nonnegative, summing to one."""

    probabilities: Tuple[Tuple[PlanarPairing, float], ...]

    def __init__(self, probabilities: Dict[PlanarPairing, float]):
        items = tuple(sorted(((p, float(v)) for p, v in probabilities.items()),
                             key=lambda kv: kv[0].pairs))
        total = sum(p for _, p in items)
        if any(p < -1e-12 for _, p in items):
            raise PartitionError("negative pairing probability")
        if abs(total - 1.0) > 1e-8:
            raise PartitionError(f"pairing probabilities sum to {total}, not 1")
        object.__setattr__(self, "probabilities", items)

    def as_dict(self) -> Dict[PlanarPairing, float]:
        return dict(self.probabilities)

    def __getitem__(self, pairing: PlanarPairing) -> float:
        return dict(self.probabilities)[pairing]

    def to_json_obj(self) -> Dict[str, float]:
        return {pp.key(): p for pp, p in self.probabilities}


def predict_pairing_probabilities(params: KappaParams, config: BoundaryConfig) -> PairingPrediction:
    """Channel-to-total ratios Z_a / sum_a Z_a for N in {1, 2}.

    Normalizing by the channel sum keeps the probabilities summing to one
    exactly; the agreement of the channel sum with the closed-form total is
    verified separately (the sum rule).
    """
    n = config.n_pairs
    if n == 1:
        return PairingPrediction({PlanarPairing([(1, 2)]): 1.0})
    if n == 2:
        z1 = pure_Z(params, config, _PAIRING_12_34)
        z2 = pure_Z(params, config, _PAIRING_14_23)
        return PairingPrediction({
            _PAIRING_12_34: z1 / (z1 + z2),
            _PAIRING_14_23: z2 / (z1 + z2),
        })
    raise UnsupportedPairingCount(f"predictions implemented for N <= 2, got N={n}")


def convex_combine(weights: Sequence[float], evaluators: Sequence[PartitionFunction],
                   anchor: BoundaryConfig) -> ConvexCombination:
    """Mixture evaluator with coefficients c_a = C * w_a / Z_a(anchor).

    C normalizes the coefficients to sum to one, so a single member with
    weight one is returned unchanged in value.  With w_a equal to the pairing
    probabilities predicted at the anchor, the result is proportional to the
    total partition function (equal to it after matching the anchor value).
    """
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(evaluators) or len(weights) == 0:
        raise PartitionError("need matching nonempty weights and evaluators")
    if np.any(weights < -1e-12) or abs(weights.sum() - 1.0) > 1e-9:
        raise PartitionError("weights must be nonnegative and sum to 1")
    raw = np.array([w / ev.value(anchor) for w, ev in zip(weights, evaluators)])
    return ConvexCombination(raw / raw.sum(), evaluators)

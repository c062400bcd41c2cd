"""Driving-function SDE integration with partition-function drift.

The engine advances the driving value W and the images of the spectator
marked points under the capacity-parametrized boundary flow, with drift
kappa * d_j log Z.  Paths are stopped by a localization proxy (capacity worth
a half-disc, or the driving excursion reaching the localization radius),
by the capacity cap, or by near-swallowing.  All randomness is drawn from a
seeded NoiseSource, so identical seeds reproduce identical paths bit for bit.
No traces or hulls are reconstructed; diagnostics live entirely on the
driving function, including the measure-change ratio M_t = (Z_num/Z_den)(W_t, V_t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .geometry import BoundaryConfig
from .partition import PartitionFunction

__all__ = [
    "LoewnerError",
    "NoiseSource",
    "LoewnerState",
    "Localization",
    "PathRecord",
    "MartingaleReport",
    "drift",
    "advance",
    "simulate",
    "martingale_diagnostic",
]

ADAPTIVE_CAP_FACTOR = 1e-3      # dt <= factor * min_gap^2
SWALLOW_REL_TOL = 1e-6          # |V_i - W| < tol * initial scale ends the path
MAX_HALVINGS = 20


class LoewnerError(RuntimeError):
    pass


class NoiseSource:
    """Seeded Gaussian (or zero) increment source.

    mode 'gaussian' draws standard normals scaled by sqrt(dt); mode 'zero'
    returns deterministic zero increments (the noiseless flow).  reset()
    rewinds the stream to the seed, which simulate() does at every call.
    """

    def __init__(self, seed: int, mode: str = "gaussian"):
        if mode not in ("gaussian", "zero"):
            raise LoewnerError(f"unknown noise mode {mode!r}")
        self.seed = int(seed)
        self.mode = mode
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(np.random.SeedSequence(self.seed))

    def standard_normal(self) -> float:
        if self.mode == "zero":
            return 0.0
        return float(self._rng.standard_normal())

    def spawn(self, index: int) -> "NoiseSource":
        """Independent per-path source derived from (seed, index)."""
        ss = np.random.SeedSequence((self.seed, int(index)))
        child = NoiseSource.__new__(NoiseSource)
        child.seed = int(ss.generate_state(1)[0])
        child.mode = self.mode
        child.reset()
        return child


@dataclass
class LoewnerState:
    """Driving value, spectator images, elapsed capacity, launch index, liveness.

    V has length 2N; the launch slot V[j-1] mirrors W so that V is always the
    full evaluation vector for the partition function.
    """

    W: float
    V: np.ndarray
    t: float
    j: int
    alive: bool = True
    stop_reason: Optional[str] = None

    @classmethod
    def launch(cls, config: BoundaryConfig, j: int) -> "LoewnerState":
        if not (1 <= j <= len(config)):
            raise LoewnerError(f"launch index {j} outside 1..{len(config)}")
        v = config.array.copy()
        return cls(W=float(v[j - 1]), V=v, t=0.0, j=j)

    def eval_points(self) -> np.ndarray:
        return self.V

    def min_gap_to_w(self) -> float:
        others = np.delete(self.V, self.j - 1)
        return float(np.min(np.abs(others - self.W))) if len(others) else math.inf

    def ordered(self) -> bool:
        return bool(np.all(np.diff(self.V) > 0.0))


@dataclass(frozen=True)
class Localization:
    """Half-disc localization data around the launch point.

    The stopping proxy fires when the elapsed capacity reaches radius^2/4
    (the half-plane capacity of the full half-disc) or when the driving value
    has moved by the radius, whichever is first.
    """

    j: int
    radius: float
    capacity_cap: float = math.inf

    def validate(self, config: BoundaryConfig) -> None:
        if not (1 <= self.j <= len(config)):
            raise LoewnerError(f"launch index {self.j} outside config")
        x0 = config.points[self.j - 1]
        dist = min(abs(x - x0) for i, x in enumerate(config.points) if i != self.j - 1)
        if not (0.0 < self.radius < dist):
            raise LoewnerError(
                f"radius {self.radius} must be positive and below the nearest marked point ({dist})")
        if self.capacity_cap < 0.0:
            raise LoewnerError("capacity cap must be nonnegative")


def drift(evaluator: PartitionFunction, state: LoewnerState) -> float:
    """kappa * (d_j log Z) at (V^1, ..., W, ..., V^{2N})."""
    if not state.alive:
        raise LoewnerError("state is not alive")
    g = evaluator.grad_log_at(state.eval_points())
    return evaluator.kappa * float(g[state.j - 1])


def _dt_cap(state: LoewnerState) -> float:
    gaps = np.diff(state.V)
    return ADAPTIVE_CAP_FACTOR * float(np.min(gaps)) ** 2


def advance(state: LoewnerState, dt: float, noise: NoiseSource,
            evaluator: PartitionFunction, swallow_tol: Optional[float] = None) -> LoewnerState:
    """One Euler-Maruyama step of size at most dt.

    W moves by drift*dt + sqrt(kappa)*dW, each spectator by 2*dt/(V^i - W).
    A step that breaks the ordering is rejected and retried at half the size
    with a fresh increment, up to 20 halvings.  Returns the advanced state;
    the accepted step size can be read off the returned t.
    """
    if not state.alive:
        raise LoewnerError("cannot advance a stopped state")
    if dt <= 0.0:
        raise LoewnerError("dt must be positive")
    cap = _dt_cap(state)
    if dt > cap * (1.0 + 1e-9):
        raise LoewnerError(f"dt={dt} above the adaptive cap {cap}")
    if swallow_tol is None:
        swallow_tol = SWALLOW_REL_TOL * max(float(state.V[-1] - state.V[0]), 1.0)

    m = state.j - 1
    kappa = evaluator.kappa
    sqrt_kappa = math.sqrt(kappa)
    mu = drift(evaluator, state)

    h = dt
    for _ in range(MAX_HALVINGS + 1):
        xi = noise.standard_normal()
        w_new = state.W + mu * h + sqrt_kappa * math.sqrt(h) * xi
        v_new = state.V.copy()
        for i in range(len(v_new)):
            if i != m:
                v_new[i] += 2.0 * h / (state.V[i] - state.W)
        v_new[m] = w_new
        if np.all(np.diff(v_new) > 0.0):
            new = LoewnerState(W=w_new, V=v_new, t=state.t + h, j=state.j)
            if new.min_gap_to_w() < swallow_tol:
                new.alive = False
                new.stop_reason = "swallow"
            return new
        h *= 0.5
    raise LoewnerError(f"ordering violated after {MAX_HALVINGS} halvings at t={state.t}")


@dataclass
class PathRecord:
    """Discretized path: times, driving values, spectator images, stop reason."""

    times: np.ndarray
    W: np.ndarray
    V: np.ndarray            # shape (len(times), 2N)
    stop_reason: str
    j: int
    drift_integral: float = 0.0

    def to_bytes(self) -> bytes:
        return (self.times.tobytes() + self.W.tobytes() + self.V.tobytes()
                + self.stop_reason.encode() + str(self.j).encode())


def simulate(config: BoundaryConfig, loc: Localization, evaluator: PartitionFunction,
             dt: float, noise: NoiseSource) -> PathRecord:
    """Run the driving SDE until the localization proxy, the cap, or swallowing.

    Deterministic for a given NoiseSource seed: the source is reset at entry.
    """
    loc.validate(config)
    if dt <= 0.0:
        raise LoewnerError("dt must be positive")
    noise.reset()

    state = LoewnerState.launch(config, loc.j)
    w0 = state.W
    t_stop = min(loc.capacity_cap, 0.25 * loc.radius * loc.radius)
    swallow_tol = SWALLOW_REL_TOL * max(config.span(), 1.0)

    times: List[float] = [0.0]
    ws: List[float] = [state.W]
    vs: List[np.ndarray] = [state.V.copy()]
    drift_integral = 0.0
    reason = "cap"

    while True:
        if state.t >= t_stop:
            reason = "cap"
            break
        if abs(state.W - w0) >= loc.radius:
            reason = "radius"
            break
        step = min(dt, _dt_cap(state), t_stop - state.t)
        mu = drift(evaluator, state)
        new = advance(state, step, noise, evaluator, swallow_tol=swallow_tol)
        drift_integral += mu * (new.t - state.t)
        state = new
        times.append(state.t)
        ws.append(state.W)
        vs.append(state.V.copy())
        if not state.alive:
            reason = state.stop_reason or "swallow"
            break

    return PathRecord(times=np.asarray(times), W=np.asarray(ws), V=np.asarray(vs),
                      stop_reason=reason, j=loc.j, drift_integral=drift_integral)


@dataclass
class MartingaleReport:
    """Ensemble check that M_t = (Z_num/Z_den)(W_t, V_t) keeps its initial mean."""

    m0: float
    mean: float
    stderr: float
    n_paths: int
    stop_reasons: dict

    @property
    def deviation(self) -> float:
        return abs(self.mean - self.m0)

    @property
    def z_score(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.deviation == 0.0 else math.inf
        return self.deviation / self.stderr

    def to_json_obj(self) -> dict:
        return {
            "m0": self.m0,
            "mean_terminal": self.mean,
            "stderr": self.stderr,
            "deviation": self.deviation,
            "z_score": self.z_score,
            "n_paths": self.n_paths,
            "stop_reasons": dict(sorted(self.stop_reasons.items())),
        }


def martingale_diagnostic(z_num: PartitionFunction, z_den: PartitionFunction,
                          config: BoundaryConfig, loc: Localization, dt: float,
                          n_paths: int, seed: int) -> MartingaleReport:
    """Drive paths with Z_den and average the terminal ratio Z_num/Z_den.

    Identical evaluator objects give M_t identically one and deviation exactly
    zero; otherwise the vanishing Ito drift of the ratio is what is tested.
    """
    if z_num.kappa != z_den.kappa:
        raise LoewnerError("evaluators must share kappa")
    loc.validate(config)

    x0 = config.array
    m0 = z_num.value_at(x0) / z_den.value_at(x0)
    base = NoiseSource(seed)

    terminal = np.empty(n_paths)
    reasons: dict = {}
    for i in range(n_paths):
        rec = simulate(config, loc, z_den, dt, base.spawn(i))
        reasons[rec.stop_reason] = reasons.get(rec.stop_reason, 0) + 1
        xt = rec.V[-1]
        terminal[i] = z_num.value_at(xt) / z_den.value_at(xt)

    mean = float(terminal.mean())
    stderr = float(terminal.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MartingaleReport(m0=m0, mean=mean, stderr=stderr, n_paths=n_paths,
                            stop_reasons=reasons)

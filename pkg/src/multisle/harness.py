"""Experiment runner: lattice pairing frequencies against continuum predictions.

A rectangular lattice experiment (Ising at kappa=3, harmonic explorer at
kappa=4) is tied to its continuum prediction through the corner preimages of
the rectangle: counterclockwise from bottom-left, lattice marks p1..p4
correspond to the ordered half-plane points x2, x3, x4, x1, so lattice
pairings map to half-plane pairings by the index rotation i -> i+1.  Ising
frequencies come from independent Glauber chains whose between-chain spread
yields autocorrelation-robust standard errors; explorer runs are independent
and carry binomial errors.  Reports serialize canonically to JSON and CSV and
render a matplotlib bar figure alongside (deterministic SVG output).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm as _norm

from . import explorer as hx
from . import ising as isg
from .geometry import (BoundaryConfig, KappaParams, PlanarPairing, cross_ratio,
                       enumerate_pairings, rect_corner_preimages)
from .partition import PairingPrediction, UnsupportedPairingCount, predict_pairing_probabilities
from .util import canonical_json, child_rng

__all__ = [
    "HarnessError",
    "ExperimentSpec",
    "PairingEstimate",
    "Report",
    "lattice_to_halfplane",
    "halfplane_to_lattice",
    "wilson_interval",
    "compare",
    "run_experiment",
    "emit",
]

Z_FLAG_THRESHOLD = 4.0          # |z| above this flags a failing pairing
DELTA_BIAS_BUDGET = 0.03        # finite-mesh allowance on |freq - prediction|


class HarnessError(ValueError):
    pass


def lattice_to_halfplane(pairing: PlanarPairing) -> PlanarPairing:
    """Corner-marked lattice pairing -> half-plane pairing (rotate indices by +1)."""
    return pairing.rotated(1)


def halfplane_to_lattice(pairing: PlanarPairing) -> PlanarPairing:
    return pairing.rotated(-1)


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one lattice-versus-prediction experiment.

    width/height are face counts of the rectangle (Ising) or of the offset
    hex rectangle (explorer).  The model pins kappa: ising <-> 3, explorer
    <-> 4.  Ising sampling runs `chains` independent chains, each with its
    own burn-in, taking a sample every `stride` sweeps.
    """

    model: str
    width: int
    height: int
    samples: int
    seed: int
    kappa: float = 0.0
    chains: int = 20
    burn_in: int = 2000
    stride: int = 39
    scheduler: str = "round_robin"
    beta: float = isg.BETA_CRITICAL
    n_pairs: int = 2

    def __post_init__(self):
        if self.model not in ("ising", "explorer"):
            raise HarnessError(f"unknown model {self.model!r}")
        expected = 3.0 if self.model == "ising" else 4.0
        if self.kappa == 0.0:
            object.__setattr__(self, "kappa", expected)
        elif self.kappa != expected:
            raise HarnessError(f"model {self.model} requires kappa={expected}")
        if self.width < 1 or self.height < 1 or self.samples < 0:
            raise HarnessError("width, height must be >= 1 and samples >= 0")
        if self.chains < 1 or self.stride < 1 or self.burn_in < 0:
            raise HarnessError("need chains >= 1, stride >= 1, burn_in >= 0")
        if self.n_pairs not in (1, 2, 3):
            raise HarnessError("experiments mark 2, 4, or 6 boundary points (n_pairs in {1, 2, 3})")

    def to_json_obj(self) -> dict:
        return dataclasses.asdict(self)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95
                    ) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise HarnessError("wilson_interval needs trials >= 1")
    if not (0 <= successes <= trials):
        raise HarnessError("successes must lie in [0, trials]")
    c = float(_norm.ppf(0.5 * (1.0 + confidence)))
    phat = successes / trials
    denom = 1.0 + c * c / trials
    center = (phat + c * c / (2.0 * trials)) / denom
    half = c * math.sqrt(phat * (1.0 - phat) / trials + c * c / (4.0 * trials * trials)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class PairingEstimate:
    """Counts, frequencies, Wilson intervals, and standard errors per pairing."""

    counts: Dict[PlanarPairing, int]
    total: int
    stderr: Dict[PlanarPairing, float]
    wilson: Dict[PlanarPairing, Tuple[float, float]]
    ess_note: str = ""

    @classmethod
    def from_counts(cls, counts: Dict[PlanarPairing, int],
                    chain_freqs: Optional[Dict[PlanarPairing, np.ndarray]] = None,
                    confidence: float = 0.95) -> "PairingEstimate":
        total = sum(counts.values())
        stderr = {}
        wilson = {}
        note = "binomial standard errors (independent samples)"
        for pairing, cnt in counts.items():
            wilson[pairing] = wilson_interval(cnt, total, confidence) if total else (0.0, 1.0)
            if chain_freqs is not None:
                freqs = chain_freqs[pairing]
                stderr[pairing] = (float(np.std(freqs, ddof=1) / math.sqrt(len(freqs)))
                                   if len(freqs) > 1 else 0.0)
            else:
                p = cnt / total if total else 0.0
                stderr[pairing] = math.sqrt(p * (1.0 - p) / total) if total else 0.0
        if chain_freqs is not None:
            note = "between-chain standard errors (autocorrelation-robust)"
        return cls(counts=counts, total=total, stderr=stderr, wilson=wilson, ess_note=note)

    def frequency(self, pairing: PlanarPairing) -> float:
        return self.counts.get(pairing, 0) / self.total if self.total else 0.0

    def frequencies(self) -> Dict[PlanarPairing, float]:
        return {p: self.frequency(p) for p in self.counts}

    def to_json_obj(self) -> dict:
        return {
            "total": self.total,
            "counts": {p.key(): c for p, c in sorted(self.counts.items(), key=lambda kv: kv[0].pairs)},
            "frequencies": {p.key(): self.frequency(p) for p in sorted(self.counts, key=lambda q: q.pairs)},
            "stderr": {p.key(): self.stderr[p] for p in sorted(self.stderr, key=lambda q: q.pairs)},
            "wilson95": {p.key(): list(self.wilson[p]) for p in sorted(self.wilson, key=lambda q: q.pairs)},
            "note": self.ess_note,
        }


def compare(estimates: PairingEstimate, predictions: PairingPrediction,
            threshold: float = Z_FLAG_THRESHOLD) -> Dict[PlanarPairing, dict]:
    """Per-pairing z-scores and pass flags against the predicted probabilities."""
    pred = predictions.as_dict()
    observed = set(estimates.counts)
    if not observed.issubset(pred.keys()):
        raise HarnessError(f"observed pairings {observed} not covered by predictions")
    out = {}
    for pairing, p in pred.items():
        freq = estimates.frequency(pairing)
        se = estimates.stderr.get(pairing, 0.0)
        if se > 0.0:
            z = (freq - p) / se
        else:
            z = 0.0 if freq == p else math.inf
        out[pairing] = {
            "frequency": freq,
            "prediction": p,
            "z": z,
            "abs_error": abs(freq - p),
            "pass": abs(z) <= threshold,
        }
    return out


@dataclass
class Report:
    """Predictions, estimates, comparison, and run metadata for one experiment."""

    spec: ExperimentSpec
    predictions: Optional[PairingPrediction]
    estimates: PairingEstimate
    comparison: Optional[Dict[PlanarPairing, dict]]
    metadata: dict

    @property
    def all_pass(self) -> bool:
        if self.comparison is None:
            return True
        return all(row["pass"] for row in self.comparison.values())

    def to_json_obj(self) -> dict:
        comparison = None
        if self.comparison is not None:
            comparison = {p.key(): row for p, row in
                          sorted(self.comparison.items(), key=lambda kv: kv[0].pairs)}
        return {
            "spec": self.spec.to_json_obj(),
            "predictions": self.predictions.to_json_obj() if self.predictions else None,
            "estimates": self.estimates.to_json_obj(),
            "comparison": comparison,
            "all_pass": self.all_pass,
            "metadata": self.metadata,
        }


def _predictions_for_corners(kappa: float, aspect: float, n_pairs: int = 2
                             ) -> Tuple[Optional[PairingPrediction], dict]:
    """Predicted probabilities in lattice corner labels plus conformal metadata."""
    if n_pairs == 1:
        return PairingPrediction({PlanarPairing([(1, 2)]): 1.0}), {"aspect": aspect}
    if n_pairs > 2:
        raise UnsupportedPairingCount(f"no continuum prediction wired for N={n_pairs}")
    config = rect_corner_preimages(aspect)
    z = cross_ratio(config)
    params = KappaParams.from_kappa(kappa)
    continuum = predict_pairing_probabilities(params, config)
    lattice = {halfplane_to_lattice(p): prob for p, prob in continuum.as_dict().items()}
    meta = {"aspect": aspect, "cross_ratio": z,
            "corner_preimages": list(config.points)}
    return PairingPrediction(lattice), meta


def _ising_marks(spec: ExperimentSpec):
    m, n = spec.width, spec.height
    if spec.n_pairs == 1:
        return ((0, 0), (m, n))
    if spec.n_pairs == 2:
        return isg.corner_marks(m, n)
    if m < 2 or n < 2:
        raise HarnessError("n_pairs=3 needs width, height >= 2")
    return ((0, 0), (m, 0), (m, n), (m - m // 2, n), (0, n), (0, n - n // 2))


def _run_ising(spec: ExperimentSpec) -> Report:
    domain = isg.build_rect_domain(spec.width, spec.height, _ising_marks(spec))
    bc = isg.alternating_boundary(domain)
    params = isg.IsingParams(beta=spec.beta)

    pairings = enumerate_pairings(domain.n_pairs)
    per_chain = [spec.samples // spec.chains] * spec.chains
    for i in range(spec.samples - sum(per_chain)):
        per_chain[i] += 1

    counts = {p: 0 for p in pairings}
    chain_rows = []
    for c, n_c in enumerate(per_chain):
        rng = child_rng(spec.seed, c)
        chain = isg.GlauberChain(domain, bc, params, rng)
        chain.sweep(spec.burn_in)
        local = {p: 0 for p in pairings}
        for _ in range(n_c):
            chain.sweep(spec.stride)
            _, pairing = isg.trace_interfaces(chain.configuration(), bc)
            local[pairing] += 1
        chain_rows.append(local)
        for p, k in local.items():
            counts[p] += k

    chain_freqs = {
        p: np.array([row[p] / max(1, sum(row.values())) for row in chain_rows])
        for p in pairings
    }
    estimates = PairingEstimate.from_counts(counts, chain_freqs=chain_freqs)

    try:
        predictions, conf_meta = _predictions_for_corners(3.0, domain.aspect(), spec.n_pairs)
    except UnsupportedPairingCount:
        predictions, conf_meta = None, {"aspect": domain.aspect()}
    comparison = compare(estimates, predictions) if predictions else None
    meta = {
        "model": "ising", "beta": spec.beta, "width": spec.width, "height": spec.height,
        "chains": spec.chains, "burn_in": spec.burn_in, "stride": spec.stride,
        "seed": spec.seed, "samples": spec.samples,
        "bias_note": f"finite-mesh bias budget {DELTA_BIAS_BUDGET} absolute; "
                     "marked vertices at exact corners",
        **conf_meta,
    }
    return Report(spec, predictions, estimates, comparison, meta)


def _run_explorer(spec: ExperimentSpec) -> Report:
    loop = hx.hex_rect_loop(spec.width, spec.height)
    marks = hx.hex_rect_corner_marks(spec.width, spec.height)
    if spec.n_pairs == 1:
        marks = (marks[0], marks[2])
    elif spec.n_pairs == 3:
        step = len(loop) / 6.0
        marks = tuple(int(round(k * step)) for k in range(6))
        if len(set(marks)) != 6:
            raise HarnessError("domain too small for six marks")
    domain = hx.build_hex_domain(loop, marks)

    counts_raw = hx.estimate_pairing_frequencies(domain, spec.samples, spec.seed,
                                                 order=spec.scheduler)
    pairings = enumerate_pairings(domain.n_pairs)
    counts = {p: counts_raw.get(p, 0) for p in pairings}
    estimates = PairingEstimate.from_counts(counts)

    aspect = domain.aspect()
    try:
        predictions, conf_meta = _predictions_for_corners(4.0, aspect, spec.n_pairs)
    except UnsupportedPairingCount:
        predictions, conf_meta = None, {"aspect": aspect}
    comparison = compare(estimates, predictions) if predictions else None
    meta = {
        "model": "explorer", "width": spec.width, "height": spec.height,
        "faces": domain.n_faces, "scheduler": spec.scheduler,
        "seed": spec.seed, "samples": spec.samples,
        "bias_note": f"finite-mesh bias budget {DELTA_BIAS_BUDGET} absolute; "
                     "marks at the nearest boundary positions to the corners",
        **conf_meta,
    }
    return Report(spec, predictions, estimates, comparison, meta)


def run_experiment(spec: ExperimentSpec) -> Report:
    """Build the domain, sample pairings, and assemble the prediction report."""
    if spec.model == "ising":
        return _run_ising(spec)
    return _run_explorer(spec)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CSV_HEADER = "pairing,count,frequency,stderr,wilson_lo,wilson_hi,prediction,z,pass\n"


def _report_rows(report: Report) -> List[str]:
    rows = []
    est = report.estimates
    for pairing in sorted(est.counts, key=lambda p: p.pairs):
        freq = est.frequency(pairing)
        lo, hi = est.wilson[pairing]
        if report.comparison and pairing in report.comparison:
            row = report.comparison[pairing]
            pred, z, ok = repr(float(row["prediction"])), repr(float(row["z"])), str(row["pass"])
        else:
            pred, z, ok = "", "", ""
        rows.append(f"{pairing.key()},{est.counts[pairing]},{float(freq)!r},"
                    f"{float(est.stderr[pairing])!r},{float(lo)!r},{float(hi)!r},{pred},{z},{ok}\n")
    return rows


def _render_figure(report: Report, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "multisle"
    est = report.estimates
    pairings = sorted(est.counts, key=lambda p: p.pairs)
    labels = [p.key() for p in pairings]
    freqs = [est.frequency(p) for p in pairings]
    errs = [est.stderr[p] for p in pairings]
    preds = [report.comparison[p]["prediction"] if report.comparison and p in report.comparison
             else float("nan") for p in pairings]

    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(labels), 3.2))
    xs = np.arange(len(labels), dtype=float)
    width = 0.38
    ax.bar(xs - width / 2, freqs, width, yerr=errs, capsize=3.0,
           label="empirical", color="#4878d0")
    ax.bar(xs + width / 2, preds, width, label="predicted", color="#ee854a")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.set_ylabel("pairing probability")
    ax.set_title(f"{report.metadata.get('model', '?')} "
                 f"{report.metadata.get('width', '?')}x{report.metadata.get('height', '?')}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def emit(report: Report, format: str, out: str) -> List[str]:
    """Write the report as canonical JSON, CSV rows, or an SVG bar figure.

    `out` is the target path; with format 'all' it is treated as a base path
    and .json/.csv/.svg are written next to each other.  Output bytes are
    stable for identical reports.
    """
    written = []
    formats = ("json", "csv", "svg") if format == "all" else (format,)
    for fmt in formats:
        path = out if format != "all" else f"{out}.{fmt}"
        if fmt == "json":
            with open(path, "w") as fh:
                fh.write(canonical_json(report.to_json_obj()))
                fh.write("\n")
        elif fmt == "csv":
            with open(path, "w") as fh:
                fh.write(_CSV_HEADER)
                fh.writelines(_report_rows(report))
        elif fmt == "svg":
            _render_figure(report, path)
        else:
            raise HarnessError(f"unknown format {fmt!r}")
        written.append(path)
    return written

"""Acceptance suite: one test per criterion, at the stated sizes and tolerances.

The lattice criteria run at production scale (10^5 samples); the two Ising
rectangles take on the order of ten minutes each, everything else runs in
seconds to a few minutes.  Each test prints a PASS line with the measured
numbers (visible with -s).
"""

import math
import os

import numpy as np
import pytest

from multisle.cli import main as cli_main
from multisle.geometry import (BoundaryConfig, KappaParams, PlanarPairing,
                               random_order_preserving_moebius, rect_corner_preimages)
from multisle.harness import ExperimentSpec, run_experiment
from multisle.hoermander import closed_form_bracket, hoermander_rank, numeric_bracket
from multisle.ising import (IsingParams, alternating_boundary, build_rect_domain,
                            corner_marks, exact_pairing_distribution, glauber_sample,
                            trace_interfaces)
from multisle.loewner import Localization, NoiseSource, martingale_diagnostic, simulate
from multisle.partition import (GffProduct, IsingPfaffian, PureChannel, convex_combine,
                                covariance_defect, gff_Z, ising_Z, pde_residual,
                                pfaffian, predict_pairing_probabilities, pure_Z)
from multisle.util import child_rng, random_config
from oracles import PerturbedEvaluator, brute_force_pfaffian

ALPHA1 = PlanarPairing([(1, 2), (3, 4)])
ALPHA2 = PlanarPairing([(1, 4), (2, 3)])

ISING_SAMPLES = 100_000
EXPLORER_RUNS = 100_000


def _report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS  [{detail}]")


# -- shared heavy fixtures ----------------------------------------------------

@pytest.fixture(scope="session")
def ising_square_report():
    spec = ExperimentSpec(model="ising", width=64, height=64, samples=ISING_SAMPLES,
                          seed=20240601, chains=20, burn_in=2000, stride=39)
    return run_experiment(spec)


@pytest.fixture(scope="session")
def ising_wide_report():
    spec = ExperimentSpec(model="ising", width=128, height=64, samples=ISING_SAMPLES,
                          seed=20240602, chains=20, burn_in=2000, stride=12)
    return run_experiment(spec)


@pytest.fixture(scope="session")
def explorer_square_report():
    spec = ExperimentSpec(model="explorer", width=51, height=59,
                          samples=EXPLORER_RUNS, seed=20240603)
    return run_experiment(spec)


@pytest.fixture(scope="session")
def explorer_wide_report():
    spec = ExperimentSpec(model="explorer", width=58, height=33,
                          samples=EXPLORER_RUNS, seed=20240604)
    return run_experiment(spec)


# -- criteria ------------------------------------------------------------------

def test_criterion_01_pde_verification():
    rng = child_rng(101, 0)
    worst = 0.0
    for evaluator in (IsingPfaffian(), GffProduct()):
        for n_pairs in (1, 2, 3):
            for _ in range(100):
                cfg = BoundaryConfig(random_config(rng, n_pairs))
                for j in range(1, 2 * n_pairs + 1):
                    worst = max(worst, pde_residual(evaluator, cfg, j))
    assert worst < 1e-6
    control = pde_residual(PerturbedEvaluator(), BoundaryConfig((0, 1, 2, 3)), 1)
    assert control > 1e-3
    _report(1, f"max residual {worst:.2e} < 1e-6; negative control {control:.2e} > 1e-3")


def test_criterion_02_covariance():
    rng = child_rng(102, 0)
    worst = 0.0
    for evaluator in (IsingPfaffian(), GffProduct()):
        for _ in range(20):
            cfg = BoundaryConfig(random_config(rng, int(rng.integers(1, 4))))
            for _ in range(100):
                m = random_order_preserving_moebius(rng, cfg)
                worst = max(worst, covariance_defect(evaluator, cfg, m))
    assert worst < 1e-9
    _report(2, f"max covariance defect {worst:.2e} < 1e-9 over 2x20x100 maps")


def test_criterion_03_pfaffian_oracle():
    rng = child_rng(103, 0)
    worst = 0.0
    for n_pairs in (1, 2, 3, 4):
        for _ in range(100):
            x = np.array(random_config(rng, n_pairs))
            diff = x[None, :] - x[:, None]
            a = np.divide(1.0, diff, out=np.zeros_like(diff), where=diff != 0.0)
            ref = brute_force_pfaffian(a)
            elim = pfaffian(a, method="elimination")
            comb = pfaffian(a, method="combinatorial")
            scale = abs(ref)
            worst = max(worst, abs(elim - ref) / scale, abs(comb - ref) / scale)
            total = ising_Z(BoundaryConfig(x))
            worst = max(worst, abs(total - ref) / scale)
    assert worst < 1e-10
    _report(3, f"max relative gap to signed-pairing sum {worst:.2e} < 1e-10, 2N in 2..8")


def test_criterion_04_sum_rule():
    worst = 0.0
    for kappa, total in ((3.0, ising_Z), (4.0, gff_Z)):
        params = KappaParams.from_kappa(kappa)
        for z in np.arange(0.05, 0.951, 0.05):
            cfg = BoundaryConfig((0.0, 2.0 * z / (1.0 + z), 1.0, 2.0))
            channel_sum = pure_Z(params, cfg, ALPHA1) + pure_Z(params, cfg, ALPHA2)
            t = total(cfg)
            worst = max(worst, abs(channel_sum - t) / t)
    assert worst < 1e-5
    _report(4, f"max |Z1+Z2-Z|/Z = {worst:.2e} < 1e-5 on the z grid, both kappas")


def test_criterion_05_symmetry_anchor(ising_square_report, explorer_square_report):
    square = rect_corner_preimages(1.0)
    for kappa in (3.0, 4.0):
        pred = predict_pairing_probabilities(KappaParams.from_kappa(kappa), square)
        assert abs(pred[ALPHA1] - 0.5) < 1e-6
        assert abs(pred[ALPHA2] - 0.5) < 1e-6

    worst_z = 0.0
    for report in (ising_square_report, explorer_square_report):
        assert report.estimates.total == ISING_SAMPLES
        for pairing, row in report.comparison.items():
            assert abs(row["z"]) < 4.0
            worst_z = max(worst_z, abs(row["z"]))
    _report(5, f"p(z=0.5) = 0.5 within 1e-6 (both kappas); "
               f"square experiments worst |z| = {worst_z:.2f} < 4 at 1e5 samples")


def test_criterion_06_ising_rectangles(ising_square_report, ising_wide_report):
    worst = 0.0
    for report in (ising_square_report, ising_wide_report):
        assert report.estimates.total == ISING_SAMPLES
        for pairing, row in report.comparison.items():
            worst = max(worst, row["abs_error"])
            assert row["abs_error"] < 0.03
    _report(6, f"max |freq - prediction| = {worst:.4f} < 0.03 on 64x64 and 128x64 at 1e5 samples")


def test_criterion_07_explorer_rectangle(explorer_wide_report):
    report = explorer_wide_report
    assert report.estimates.total == EXPLORER_RUNS
    assert 1500 <= report.metadata["faces"] <= 2500
    worst = max(row["abs_error"] for row in report.comparison.values())
    assert worst < 0.03
    _report(7, f"max |freq - prediction| = {worst:.4f} < 0.03 on "
               f"{report.metadata['faces']} faces (aspect {report.metadata['aspect']:.3f}) at 1e5 runs")


def _pairing_tv(domain, bc, params, seed, n_samples, stride, burn_in):
    exact = exact_pairing_distribution(domain, bc, params)
    stream = glauber_sample(domain, bc, params, sweeps=stride, burn_in=burn_in,
                            rng=child_rng(seed, 0))
    counts = {}
    for _ in range(n_samples):
        _, pairing = trace_interfaces(next(stream), bc)
        counts[pairing] = counts.get(pairing, 0) + 1
    return 0.5 * sum(abs(counts.get(p, 0) / n_samples - q) for p, q in exact.items())


def test_criterion_08_sampler_vs_enumeration():
    params = IsingParams()
    d22 = build_rect_domain(2, 2, [(1, 0), (2, 1), (1, 2), (0, 1)])
    tv22 = _pairing_tv(d22, alternating_boundary(d22), params, seed=108,
                       n_samples=ISING_SAMPLES, stride=5, burn_in=500)
    d44 = build_rect_domain(4, 4, corner_marks(4, 4))
    tv44 = _pairing_tv(d44, alternating_boundary(d44), params, seed=109,
                       n_samples=ISING_SAMPLES, stride=5, burn_in=500)
    assert tv22 < 0.01 and tv44 < 0.01
    _report(8, f"total variation sampler vs enumeration: 2x2 {tv22:.4f}, 4x4 {tv44:.4f} < 0.01")


def test_criterion_09_martingale_diagnostics():
    cfg = BoundaryConfig((0.0, 1.0, 2.0, 3.0))
    loc = Localization(j=1, radius=0.4)
    ev = GffProduct()
    exact = martingale_diagnostic(ev, ev, cfg, loc, 1e-3, 2000, seed=900)
    assert exact.deviation == 0.0

    zs = []
    for kappa, total in ((4.0, GffProduct()), (3.0, IsingPfaffian())):
        pure = PureChannel(KappaParams.from_kappa(kappa), ALPHA1)
        rep = martingale_diagnostic(pure, total, cfg, loc, 1e-3, 10_000, seed=901)
        assert rep.deviation <= 3.0 * rep.stderr
        zs.append(rep.z_score)
    _report(9, f"identical evaluators deviate exactly 0; pure-vs-total z-scores "
               f"{zs[0]:.2f} (k=4), {zs[1]:.2f} (k=3) within 3 SE at 1e4 paths")


def test_criterion_10_zero_noise_gap_law():
    worst = 0.0
    for kappa in (2.0, 3.0, 4.0, 6.0):
        ev = PureChannel(KappaParams.from_kappa(kappa), PlanarPairing([(1, 2)]))
        cfg = BoundaryConfig((0.0, 1.0))
        loc = Localization(j=1, radius=0.9, capacity_cap=0.12)
        rec = simulate(cfg, loc, ev, dt=1e-5, noise=NoiseSource(0, mode="zero"))
        gap2 = (rec.V[:, 1] - rec.W) ** 2
        worst = max(worst, float(np.max(np.abs(gap2 - 1.0 - 2.0 * (kappa - 4.0) * rec.times))))
    assert worst < 1e-5
    _report(10, f"max |gap^2 - gap0^2 - 2(k-4)t| = {worst:.2e} < 1e-5 for k in 2,3,4,6")


def test_criterion_11_hoermander_suite():
    rng = child_rng(111, 0)
    worst_cos = 0.0
    for n_pairs in (1, 2, 3):
        for _ in range(20):
            cfg = BoundaryConfig(random_config(rng, n_pairs))
            rep = hoermander_rank(cfg)
            assert rep.rank == 2 * n_pairs
            for k in range(1, 2 * n_pairs):
                num = numeric_bracket(cfg, k, kappa=4.0)
                ref = closed_form_bracket(cfg, k)
                cos = float(np.dot(num, ref) / (np.linalg.norm(num) * np.linalg.norm(ref)))
                assert cos > 1.0 - 1e-8
                worst_cos = max(worst_cos, 1.0 - cos)
    _report(11, f"rank = 2N on 20 configs per N in 1..3; worst 1-cos = {worst_cos:.2e} < 1e-8")


def test_criterion_12_convex_combination_identity():
    rng = child_rng(112, 0)
    worst = 0.0
    anchor = BoundaryConfig((0.0, 1.0, 2.0, 3.0))
    for kappa, total in ((3.0, ising_Z), (4.0, gff_Z)):
        params = KappaParams.from_kappa(kappa)
        pred = predict_pairing_probabilities(params, anchor)
        evaluators = [PureChannel(params, pp) for pp, _ in pred.probabilities]
        weights = [p for _, p in pred.probabilities]
        comb = convex_combine(weights, evaluators, anchor)
        scale = total(anchor) / comb.value(anchor)
        for _ in range(100):
            cfg = BoundaryConfig(random_config(rng, 2))
            worst = max(worst, abs(comb.value(cfg) * scale - total(cfg)) / total(cfg))
    assert worst < 1e-5
    _report(12, f"anchor-weighted channel mixture reproduces the total within {worst:.2e} < 1e-5")


CLI_CASES = [
    ("zeval", ["zeval", "--kappa", "3", "--points", "0,1,2,3", "--probs"]),
    ("verify-pde", ["verify-pde", "--configs", "3", "--seed", "5"]),
    ("verify-covariance", ["verify-covariance", "--configs", "2", "--maps", "10", "--seed", "5"]),
    ("verify-sumrule", ["verify-sumrule"]),
    ("hoermander", ["hoermander", "--points", "0,1,2,3"]),
    ("loewner-sim", ["loewner-sim", "--kappa", "4", "--points", "0,1,2,3", "--j", "1",
                     "--radius", "0.4", "--dt", "1e-3", "--paths", "3", "--seed", "11"]),
    ("martingale", ["martingale", "--kappa", "4", "--points", "0,1,2,3",
                    "--znum", "pure:1-2,3-4", "--zden", "gff", "--radius", "0.4",
                    "--paths", "100", "--seed", "12"]),
    ("ising", ["ising", "--width", "4", "--height", "4", "--samples", "5",
               "--seed", "13", "--sweeps", "2", "--burn-in", "50"]),
    ("ising-exact", ["ising", "--width", "2", "--height", "2",
                     "--marks", "1,0;2,1;1,2;0,1", "--exact"]),
    ("explorer", ["explorer", "--radius", "3", "--marks", "0,9", "--runs", "10",
                  "--seed", "14"]),
    ("experiment", ["experiment", "--model", "explorer", "--width", "12", "--height", "8",
                    "--samples", "50", "--seed", "15"]),
]


def test_criterion_13_cli_determinism(tmp_path):
    for name, argv in CLI_CASES:
        blobs = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{name}-{attempt}.out"
            extra = ["--out", str(out)]
            if name == "experiment":
                extra += ["--format", "all"]
            code = cli_main(argv + extra)
            assert code in (0, 2), (name, code)
            blob = out.read_bytes() if out.exists() else b""
            if name == "experiment":
                blob = b"".join((tmp_path / f"{name}-{attempt}.out.{ext}").read_bytes()
                                for ext in ("json", "csv", "svg"))
            blobs.append(blob)
        assert blobs[0] == blobs[1], f"{name} output not byte-stable"
    _report(13, f"all {len(CLI_CASES)} CLI invocations byte-stable under repeated runs")

import json
import math

import numpy as np
import pytest

from multisle.geometry import PlanarPairing
from multisle.harness import (DELTA_BIAS_BUDGET, ExperimentSpec, HarnessError,
                              PairingEstimate, Report, compare, emit,
                              halfplane_to_lattice, lattice_to_halfplane,
                              run_experiment, wilson_interval)
from multisle.partition import PairingPrediction

ALPHA1 = PlanarPairing([(1, 2), (3, 4)])
ALPHA2 = PlanarPairing([(1, 4), (2, 3)])


def test_wilson_examples():
    lo, hi = wilson_interval(0, 10, 0.95)
    assert lo == 0.0 and hi > 0.0

    lo, hi = wilson_interval(5, 10, 0.95)
    center = 0.5 * (lo + hi)
    assert lo < 0.5 < hi
    assert center == pytest.approx(0.5, abs=1e-12)

    lo, hi = wilson_interval(50, 100, 0.95)
    assert lo == pytest.approx(0.404, abs=2e-3)
    assert hi == pytest.approx(0.596, abs=2e-3)

    with pytest.raises(HarnessError):
        wilson_interval(0, 0)
    with pytest.raises(HarnessError):
        wilson_interval(5, 3)


def test_pairing_index_rotation_round_trip():
    for pairing in (ALPHA1, ALPHA2):
        assert halfplane_to_lattice(lattice_to_halfplane(pairing)) == pairing
    # bottom-edge pairing on the lattice is the {2,3},{4,1} half-plane channel
    assert lattice_to_halfplane(ALPHA1) == ALPHA2


def make_estimate(counts, chains=None):
    return PairingEstimate.from_counts(counts, chain_freqs=chains)


def test_compare_z_examples():
    pred = PairingPrediction({ALPHA1: 0.5, ALPHA2: 0.5})
    est = make_estimate({ALPHA1: 500, ALPHA2: 500})
    rows = compare(est, pred)
    assert rows[ALPHA1]["z"] == pytest.approx(0.0, abs=1e-12)

    est2 = make_estimate({ALPHA1: 600, ALPHA2: 400})
    rows2 = compare(est2, pred)
    se = est2.stderr[ALPHA1]
    assert rows2[ALPHA1]["z"] == pytest.approx((0.6 - 0.5) / se)
    # freq = p + SE gives z = 1 by definition
    manual = PairingEstimate(counts={ALPHA1: 0, ALPHA2: 0}, total=1000,
                             stderr={ALPHA1: 0.01, ALPHA2: 0.01},
                             wilson={ALPHA1: (0, 1), ALPHA2: (0, 1)})
    manual.counts[ALPHA1] = int(0.51 * 1000)
    manual.counts[ALPHA2] = 1000 - manual.counts[ALPHA1]
    rows3 = compare(manual, pred)
    assert rows3[ALPHA1]["z"] == pytest.approx(1.0)


def test_compare_mismatched_pairings():
    pred = PairingPrediction({ALPHA1: 0.5, ALPHA2: 0.5})
    bad = make_estimate({PlanarPairing([(1, 2)]): 10})
    with pytest.raises(HarnessError):
        compare(bad, pred)


def test_experiment_spec_validation():
    with pytest.raises(HarnessError):
        ExperimentSpec(model="potts", width=4, height=4, samples=1, seed=0)
    with pytest.raises(HarnessError):
        ExperimentSpec(model="ising", width=4, height=4, samples=1, seed=0, kappa=4.0)
    spec = ExperimentSpec(model="explorer", width=8, height=6, samples=1, seed=0)
    assert spec.kappa == 4.0


def test_trivial_single_pair_experiment():
    spec = ExperimentSpec(model="ising", width=1, height=1, samples=50, seed=1,
                          chains=2, burn_in=10, stride=1, n_pairs=1)
    report = run_experiment(spec)
    pairing = PlanarPairing([(1, 2)])
    assert report.estimates.frequency(pairing) == 1.0
    assert report.comparison[pairing]["prediction"] == 1.0
    assert report.comparison[pairing]["z"] == 0.0
    assert report.all_pass


def test_explorer_experiment_report_fields():
    spec = ExperimentSpec(model="explorer", width=12, height=8, samples=400, seed=3)
    report = run_experiment(spec)
    assert report.estimates.total == 400
    assert abs(sum(report.estimates.frequencies().values()) - 1.0) < 1e-8
    preds = report.predictions.as_dict()
    assert abs(sum(preds.values()) - 1.0) < 1e-8
    assert 0.0 < report.metadata["cross_ratio"] < 1.0
    assert report.metadata["faces"] == 12 * 8
    assert DELTA_BIAS_BUDGET == 0.03


def test_ising_experiment_between_chain_errors():
    spec = ExperimentSpec(model="ising", width=8, height=8, samples=400, seed=5,
                          chains=8, burn_in=100, stride=3)
    report = run_experiment(spec)
    assert report.estimates.total == 400
    assert "between-chain" in report.estimates.ess_note
    for pairing, row in report.comparison.items():
        assert row["frequency"] == report.estimates.frequency(pairing)
        assert math.isfinite(row["z"])


def test_emit_round_trip_and_formats(tmp_path):
    spec = ExperimentSpec(model="explorer", width=12, height=8, samples=200, seed=3)
    report = run_experiment(spec)

    json_path = tmp_path / "report.json"
    emit(report, "json", str(json_path))
    parsed = json.loads(json_path.read_text())
    assert parsed == report.to_json_obj()

    csv_path = tmp_path / "report.csv"
    emit(report, "csv", str(csv_path))
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0].startswith("pairing,count,frequency")
    assert len(lines) == 1 + len(report.estimates.counts)

    svg_path = tmp_path / "report.svg"
    emit(report, "svg", str(svg_path))
    body = svg_path.read_text()
    assert body.lstrip().startswith("<?xml")
    for pairing in report.estimates.counts:
        assert pairing.key() in body
    assert "empirical" in body and "predicted" in body

    files = emit(report, "all", str(tmp_path / "combo"))
    assert [f.rsplit(".", 1)[1] for f in files] == ["json", "csv", "svg"]


def test_emit_byte_stability(tmp_path):
    spec = ExperimentSpec(model="explorer", width=12, height=8, samples=150, seed=9)
    blobs = []
    for tag in ("a", "b"):
        report = run_experiment(spec)
        files = emit(report, "all", str(tmp_path / tag))
        blobs.append(tuple(open(f, "rb").read() for f in files))
    assert blobs[0] == blobs[1]


def test_emit_empty_report(tmp_path):
    est = PairingEstimate(counts={}, total=0, stderr={}, wilson={})
    spec = ExperimentSpec(model="explorer", width=12, height=8, samples=0, seed=0)
    report = Report(spec=spec, predictions=None, estimates=est, comparison=None,
                    metadata={"model": "explorer"})
    files = emit(report, "all", str(tmp_path / "empty"))
    lines = open(files[1]).read().splitlines()
    assert len(lines) == 1                      # header only
    assert json.loads(open(files[0]).read())["estimates"]["total"] == 0


def test_three_pair_experiment_estimates_without_predictions():
    for model in ("explorer", "ising"):
        spec = ExperimentSpec(model=model, width=10, height=8, samples=60, seed=21,
                              chains=2, burn_in=50, stride=2, n_pairs=3)
        report = run_experiment(spec)
        assert report.predictions is None
        assert report.comparison is None
        assert report.estimates.total == 60
        assert report.all_pass          # nothing to flag without predictions
        assert len(report.estimates.counts) == 5


def test_end_to_end_regression_fixture_explorer():
    spec = ExperimentSpec(model="explorer", width=12, height=8, samples=50, seed=15)
    report = run_experiment(spec)
    counts = {p.key(): c for p, c in report.estimates.counts.items()}
    assert counts == {"1-2,3-4": 4, "1-4,2-3": 46}


def test_end_to_end_regression_fixture_ising():
    spec = ExperimentSpec(model="ising", width=6, height=6, samples=40, seed=16,
                          chains=4, burn_in=100, stride=3)
    report = run_experiment(spec)
    counts = {p.key(): c for p, c in report.estimates.counts.items()}
    assert counts == {"1-2,3-4": 14, "1-4,2-3": 26}

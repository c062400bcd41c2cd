"""Command-line interface.

Subcommands: zeval, verify-pde, verify-covariance, verify-sumrule, hoermander,
loewner-sim, martingale, ising, explorer, experiment.  Global flags --seed,
--out, --format, --config are accepted by every subcommand; a JSON config file
supplies defaults for unset flags, and --config-override lets the file win
over explicit flags.  Exit codes: 0 on pass, 2 when an acceptance-style check
flags a failure, 1 on error.
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from typing import Dict, List, Optional

import numpy as np

from . import explorer as hx
from . import ising as isg
from .geometry import (BoundaryConfig, KappaParams, PlanarPairing, cross_ratio,
                       random_order_preserving_moebius, rect_corner_preimages)
from .harness import ExperimentSpec, emit, run_experiment
from .hoermander import closed_form_bracket, hoermander_rank, numeric_bracket
from .loewner import Localization, NoiseSource, martingale_diagnostic, simulate
from .partition import (GffProduct, IsingPfaffian, PureChannel, covariance_defect,
                        pde_residual, predict_pairing_probabilities, pure_Z,
                        total_evaluator)
from .util import canonical_json, child_rng, random_config

PASS, FAIL, ERROR = 0, 2, 1


def _parse_points(text: str) -> BoundaryConfig:
    return BoundaryConfig(float(tok) for tok in text.split(","))


def _parse_pairing(text: str) -> PlanarPairing:
    return PlanarPairing.from_key(text)


def _evaluator_from_spec(spec: str, kappa: float):
    if spec in ("ising", "gff", "total"):
        if spec == "ising" and kappa != 3.0:
            raise ValueError("ising evaluator requires kappa=3")
        if spec == "gff" and kappa != 4.0:
            raise ValueError("gff evaluator requires kappa=4")
        return total_evaluator(kappa)
    if spec.startswith("pure:"):
        return PureChannel(KappaParams.from_kappa(kappa), _parse_pairing(spec[5:]))
    raise ValueError(f"unknown evaluator spec {spec!r} (use ising|gff|total|pure:1-2,3-4)")


def _emit_text(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_zeval(args) -> int:
    config = _parse_points(args.points)
    params = KappaParams.from_kappa(args.kappa)
    if args.probs:
        pred = predict_pairing_probabilities(params, config)
        _emit_text(canonical_json(pred.to_json_obj()), args.out)
        return PASS
    if args.pairing:
        value = pure_Z(params, config, _parse_pairing(args.pairing))
    else:
        value = total_evaluator(args.kappa).value(config)
    _emit_text(repr(float(value)), args.out)
    return PASS


def cmd_verify_pde(args) -> int:
    rng = child_rng(args.seed, 0)
    tol = 1e-6
    worst = 0.0
    evaluators = {3.0: IsingPfaffian(), 4.0: GffProduct()}
    kappas = (3.0, 4.0) if args.kappa == 0.0 else (args.kappa,)
    for kappa in kappas:
        ev = evaluators[kappa]
        for n_pairs in (1, 2, 3):
            for _ in range(args.configs):
                config = BoundaryConfig(random_config(rng, n_pairs))
                for j in range(1, 2 * n_pairs + 1):
                    worst = max(worst, pde_residual(ev, config, j))
    ok = bool(worst < tol)
    _emit_text(canonical_json({"max_residual": float(worst), "tolerance": tol, "pass": ok}), args.out)
    return PASS if ok else FAIL


def cmd_verify_covariance(args) -> int:
    rng = child_rng(args.seed, 1)
    tol = 1e-9
    worst = 0.0
    for ev in (IsingPfaffian(), GffProduct()):
        for _ in range(args.configs):
            config = BoundaryConfig(random_config(rng, int(rng.integers(1, 4))))
            for _ in range(args.maps):
                m = random_order_preserving_moebius(rng, config)
                worst = max(worst, covariance_defect(ev, config, m))
    ok = bool(worst < tol)
    _emit_text(canonical_json({"max_defect": float(worst), "tolerance": tol, "pass": ok}), args.out)
    return PASS if ok else FAIL


def cmd_verify_sumrule(args) -> int:
    tol = 1e-5
    worst = 0.0
    alpha1 = PlanarPairing([(1, 2), (3, 4)])
    alpha2 = PlanarPairing([(1, 4), (2, 3)])
    for kappa in (3.0, 4.0):
        params = KappaParams.from_kappa(kappa)
        total = total_evaluator(kappa)
        for z in np.arange(0.05, 0.951, 0.05):
            config = BoundaryConfig((0.0, 2.0 * z / (1.0 + z), 1.0, 2.0))
            s = pure_Z(params, config, alpha1) + pure_Z(params, config, alpha2)
            t = total.value(config)
            worst = max(worst, abs(s - t) / t)
    ok = bool(worst < tol)
    _emit_text(canonical_json({"max_relative_gap": float(worst), "tolerance": tol, "pass": ok}), args.out)
    return PASS if ok else FAIL


def cmd_hoermander(args) -> int:
    config = _parse_points(args.points)
    report = hoermander_rank(config, kappa=args.kappa)
    parallel = {}
    for k in range(1, len(config)):
        num = numeric_bracket(config, k, kappa=args.kappa)
        ref = closed_form_bracket(config, k)
        cos = float(np.dot(num, ref) / (np.linalg.norm(num) * np.linalg.norm(ref)))
        parallel[str(k)] = cos
    payload = report.to_json_obj()
    payload["parallelism_cosine"] = parallel
    _emit_text(canonical_json(payload), args.out)
    return PASS if report.full_rank else FAIL


def cmd_loewner_sim(args) -> int:
    config = _parse_points(args.points)
    evaluator = _evaluator_from_spec(args.evaluator, args.kappa)
    loc = Localization(j=args.j, radius=args.radius)
    base = NoiseSource(args.seed, mode=args.noise)
    lines = ["path,n_steps,t_final,w_final,stop_reason,drift_integral\n"]
    for i in range(args.paths):
        rec = simulate(config, loc, evaluator, args.dt, base.spawn(i))
        lines.append(f"{i},{len(rec.times) - 1},{float(rec.times[-1])!r},{float(rec.W[-1])!r},"
                     f"{rec.stop_reason},{float(rec.drift_integral)!r}\n")
    _emit_text("".join(lines), args.out)
    return PASS


def cmd_martingale(args) -> int:
    config = _parse_points(args.points)
    z_num = _evaluator_from_spec(args.znum, args.kappa)
    z_den = _evaluator_from_spec(args.zden, args.kappa)
    loc = Localization(j=args.j, radius=args.radius)
    report = martingale_diagnostic(z_num, z_den, config, loc, args.dt, args.paths, args.seed)
    payload = report.to_json_obj()
    payload["pass"] = bool(report.deviation <= 3.0 * report.stderr or report.deviation == 0.0)
    _emit_text(canonical_json(payload), args.out)
    return PASS if payload["pass"] else FAIL


def _parse_marks(text: str, width: int, height: int):
    if text == "corners":
        return isg.corner_marks(width, height)
    marks = []
    for chunk in text.split(";"):
        x, y = chunk.split(",")
        marks.append((int(x), int(y)))
    return marks


def cmd_ising(args) -> int:
    domain = isg.build_rect_domain(args.width, args.height,
                                   _parse_marks(args.marks, args.width, args.height))
    bc = isg.alternating_boundary(domain)
    params = isg.IsingParams(beta=args.beta)
    if args.exact:
        dist = isg.exact_pairing_distribution(domain, bc, params)
        payload = {p.key(): prob for p, prob in sorted(dist.items(), key=lambda kv: kv[0].pairs)}
        _emit_text(canonical_json(payload), args.out)
        return PASS
    rng = child_rng(args.seed, 0)
    stream = isg.glauber_sample(domain, bc, params, sweeps=args.sweeps,
                                burn_in=args.burn_in, rng=rng)
    lines = ["seed,sweep_index,pairing,energy\n"]
    for i, sigma in enumerate(itertools.islice(stream, args.samples)):
        _, pairing = isg.trace_interfaces(sigma, bc)
        sweep_index = args.burn_in + (i + 1) * args.sweeps
        lines.append(f"{args.seed},{sweep_index},"
                     f"\"{json.dumps(pairing.to_json_obj())}\",{energy_str(sigma)}\n")
    _emit_text("".join(lines), args.out)
    return PASS


def energy_str(sigma) -> str:
    return repr(isg.energy(sigma))


def cmd_explorer(args) -> int:
    loop = hx.hex_disc_loop(args.radius)
    marks = [int(tok) for tok in args.marks.split(",")]
    domain = hx.build_hex_domain(loop, marks)
    lines = ["run,pairing\n"]
    for run in range(args.runs):
        _, pairing = hx.run_explorer(domain, child_rng(args.seed, run),
                                     order=args.order, record_paths=False)
        lines.append(f"{run},\"{json.dumps(pairing.to_json_obj())}\"\n")
    _emit_text("".join(lines), args.out)
    return PASS


def cmd_experiment(args) -> int:
    spec = ExperimentSpec(model=args.model, width=args.width, height=args.height,
                          samples=args.samples, seed=args.seed, chains=args.chains,
                          burn_in=args.burn_in, stride=args.stride,
                          scheduler=args.order)
    report = run_experiment(spec)
    if args.out:
        emit(report, args.format, args.out)
    sys.stdout.write(canonical_json(report.to_json_obj()) + "\n")
    return PASS if report.all_pass else FAIL


def _add_common(sub, seed_default=0):
    sub.add_argument("--seed", type=int, default=seed_default, help="base RNG seed")
    sub.add_argument("--out", type=str, default=None, help="output path (stdout if omitted)")
    sub.add_argument("--format", type=str, default="json",
                     choices=("json", "csv", "svg", "all"), help="report format")
    sub.add_argument("--config", type=str, default=None, help="JSON config file")
    sub.add_argument("--config-override", action="store_true",
                     help="let config values win over explicit flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multisle",
                                     description="Multiple-SLE partition functions and lattice validation")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("zeval", help="evaluate a partition function or pairing prediction")
    p.add_argument("--kappa", type=float, required=True, choices=(3.0, 4.0))
    p.add_argument("--points", type=str, required=True)
    p.add_argument("--pairing", type=str, default=None)
    p.add_argument("--probs", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_zeval)

    p = subs.add_parser("verify-pde", help="null-state PDE residual sweep")
    p.add_argument("--kappa", type=float, default=0.0, choices=(0.0, 3.0, 4.0))
    p.add_argument("--configs", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=cmd_verify_pde)

    p = subs.add_parser("verify-covariance", help="conformal covariance sweep")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--maps", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=cmd_verify_covariance)

    p = subs.add_parser("verify-sumrule", help="channel sum rule on a cross-ratio grid")
    _add_common(p)
    p.set_defaults(func=cmd_verify_sumrule)

    p = subs.add_parser("hoermander", help="bracket rank and parallelism report")
    p.add_argument("--points", type=str, required=True)
    p.add_argument("--kappa", type=float, default=4.0)
    _add_common(p)
    p.set_defaults(func=cmd_hoermander)

    p = subs.add_parser("loewner-sim", help="simulate driving-function paths")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--points", type=str, required=True)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--evaluator", type=str, default="total")
    p.add_argument("--noise", type=str, default="gaussian", choices=("gaussian", "zero"))
    _add_common(p)
    p.set_defaults(func=cmd_loewner_sim)

    p = subs.add_parser("martingale", help="measure-change martingale diagnostic")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--points", type=str, required=True)
    p.add_argument("--znum", type=str, required=True)
    p.add_argument("--zden", type=str, required=True)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=10000)
    _add_common(p)
    p.set_defaults(func=cmd_martingale)

    p = subs.add_parser("ising", help="critical Ising sampler / exact enumeration")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--marks", type=str, default="corners",
                   help="'corners' or 'x,y;x,y;...' boundary vertices (ccw)")
    p.add_argument("--beta", type=float, default=isg.BETA_CRITICAL)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--sweeps", type=int, default=10)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--exact", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_ising)

    p = subs.add_parser("explorer", help="harmonic explorer runs on a hex disc")
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--marks", type=str, required=True,
                   help="comma-separated boundary-loop positions")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--order", type=str, default="round_robin",
                   choices=("round_robin", "sequential"))
    _add_common(p)
    p.set_defaults(func=cmd_explorer)

    p = subs.add_parser("experiment", help="lattice frequencies vs continuum prediction")
    p.add_argument("--model", type=str, required=True, choices=("ising", "explorer"))
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--chains", type=int, default=20)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--stride", type=int, default=39)
    p.add_argument("--order", type=str, default="round_robin",
                   choices=("round_robin", "sequential"))
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    return parser


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  argv: List[str]) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        table = json.load(fh)
    if not isinstance(table, dict):
        raise ValueError("config file must hold a JSON object")
    explicit = {tok.split("=")[0].lstrip("-").replace("-", "_")
                for tok in argv if tok.startswith("--")}
    for key, value in table.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        if args.config_override or attr not in explicit:
            setattr(args, attr, value)
    return args


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(args, parser, argv)
        return args.func(args)
    except SystemExit as exc:        # argparse errors carry their own code
        return int(exc.code or 0)
    except Exception as exc:         # noqa: BLE001 - CLI boundary
        sys.stderr.write(f"error: {exc}\n")
        return ERROR


if __name__ == "__main__":
    sys.exit(main())

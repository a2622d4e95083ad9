"""Command-line entry point.

Subcommands: ``verify`` (fast property suites), ``learn`` (one dataset to
hypothesis files), ``simulate`` (Monte Carlo per config), ``game`` (exact
lower-bound evaluation), ``round`` (derandomize a hypothesis).  Exit code 0
only when every bound check in the run passes; failures are listed as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import adversaries, core, fairness, harness, loss, optimizer, rounding
from .learners import erm_baseline, learn_agnostic, learn_fixed_dist_nasty, learn_malicious
from .rng import make_rng


def _emit(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _fail_exit(failures: list) -> int:
    if failures:
        print(json.dumps({"failures": failures}, indent=2, default=repr))
        return 1
    return 0


def cmd_verify(args) -> int:
    """Run the fast property suites and print one line per check."""
    failures = []

    def check(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}"
        if detail:
            line += f" ({detail})"
        print(line)
        if not ok:
            failures.append({"check": name, "detail": detail})

    t = np.linspace(-1.0, 1.0, 10**4)
    g = loss.g_malicious(t)
    lo_ok = np.all(g * (1.0 + t) >= 2.0 * t - 1e-9)
    hi_ok = np.all(g * (1.0 - t) <= 2.0 * t + 1e-9)
    check("link certificate: 2t/(1+t) <= g <= 2t/(1-t)", bool(lo_ok and hi_ok))
    slopes = np.diff(g) / np.diff(t)
    check(
        "link certificate: nondecreasing, Lipschitz <= 2",
        bool(np.all(np.diff(g) >= -1e-12) and slopes.max() <= 2.0 + 1e-9),
        f"max slope {slopes.max():.12f}",
    )

    f = loss.malicious_loss()
    fa = loss.agnostic_loss(0.0, 0.05)
    check(
        "agreement coefficients a_y == -4 (malicious, agnostic)",
        bool(np.allclose(f.a, -4) and np.allclose(fa.a, -4)),
    )
    rep = loss.check_g_feasible(f, loss.malicious_link())
    check("malicious loss is g-feasible", rep.passed, f"max violation {rep.max_violation:.2e}")

    rng = make_rng(args.seed)
    cls = core.ConceptClass.thresholds(20)
    c_star = cls.concept(10)
    xs = rng.integers(0, 20, size=200)
    ds = core.LabeledDataset(xs, c_star.labels[xs])
    res = optimizer.learn_fw(f, loss.malicious_link(), cls, ds, eps=0.05)
    worst = optimizer.loss_scan(f, cls, ds, res.predictor.values).max()
    check(
        "optimizer drives worst-case loss below eps on a realizable instance",
        bool(worst <= 0.05 and res.iterations <= res.t_max),
        f"loss {worst:.4f} in {res.iterations} iterations",
    )

    val = adversaries.tv_bayes_optimal_error(20, 0.2)
    ref = adversaries.tv_posterior_enumeration_error(8, 0.2)
    check(
        "TV lower-bound closed form matches posterior enumeration (d=8)",
        abs(adversaries.tv_bayes_optimal_error(8, 0.2) - ref) <= 1e-12,
        f"floor(20, 0.2) = {val:.7f}",
    )

    fam_ok = True
    for b, k in ((1, 2), (4, 3)):
        counts = {}
        pts = list(range(k))
        for seed_val in range(1 << (b * k)):
            seed = tuple((seed_val >> (b * j)) & ((1 << b) - 1) for j in range(k))
            fam = rounding.KWiseFamily(d_bits=b, r_bits=b, k=k, seed=seed)
            outs = tuple(rounding.kwise_eval(fam, x) for x in pts)
            counts[outs] = counts.get(outs, 0) + 1
        if len(set(counts.values())) != 1 or len(counts) != (1 << b) ** k:
            fam_ok = False
    check("k-wise family exhaustively uniform (b*k <= 16 spot checks)", fam_ok)

    return _fail_exit(failures)


def cmd_learn(args) -> int:
    rng = make_rng(args.seed)
    ds = core.load_dataset(args.dataset)
    cls = core.load_concept_class(args.concept_class)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.learner == "malicious":
        out = learn_malicious(ds, cls, args.eps, rng)
    elif args.learner == "agnostic":
        out = learn_agnostic(ds, cls, args.eps, args.alpha, rng)
    elif args.learner == "fixed_dist":
        weights = np.loadtxt(args.distribution, delimiter=",", usecols=1)
        dist = core.FinitePointDistribution(weights / weights.sum())
        out = learn_fixed_dist_nasty(ds, cls, dist, args.eps, rng=rng)
    elif args.learner == "erm":
        out = erm_baseline(ds, cls)
    else:
        raise SystemExit(f"unknown learner {args.learner!r}")
    core.save_predictor(out_dir / "predictor.csv", out.predictor)
    payload = {
        "learner": args.learner,
        "diagnostics": {k: v for k, v in out.diagnostics.items() if np.isscalar(v) or v is None},
    }
    if out.hypothesis is not None:
        payload["mixture"] = {
            "arity": out.hypothesis.arity,
            "atoms": [
                {"weight": float(w), "tuple": [int(i) for i in tup]}
                for w, tup in zip(out.hypothesis.weights, out.hypothesis.tuples)
            ],
        }
    _emit(out_dir, "hypothesis.json", json.dumps(payload, indent=2, default=repr) + "\n")
    print(f"wrote {out_dir}/predictor.csv and {out_dir}/hypothesis.json")
    return 0


def cmd_simulate(args) -> int:
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    report = harness.run_experiment(cfg)
    json_path, csv_path = harness.write_report(report, args.out_dir)
    print(f"wrote {json_path} and {csv_path}")
    for check in report.checks:
        status = "PASS" if check["pass"] else "FAIL"
        print(f"[{status}] {check['name']}: value={check['value']:.6f} bound={check['bound']:.6f}")
    return 0 if report.all_passed() else 1


def cmd_game(args) -> int:
    """Exact lower-bound evaluation on the TV construction."""
    floor = adversaries.tv_bayes_optimal_error(args.d, args.eta)
    print(f"exact error floor for (d={args.d}, eta={args.eta:g}): {floor:.7f}")
    failures = []
    for learner in ("malicious", "agnostic", "erm", "coinflip"):
        cfg = harness.ExperimentConfig(
            scenario="tv_shatter",
            learner=learner,
            trials=args.trials,
            seed=args.seed,
            eta=args.eta,
            eps=args.eps,
            d=args.d,
            n=args.n,
            threads=args.threads or 1,
        )
        report = harness.run_experiment(cfg)
        ok = report.all_passed()
        print(
            f"[{'PASS' if ok else 'FAIL'}] {learner}: mean error "
            f"{report.mean_true_error:.5f} >= floor - 3 sigma"
        )
        if not ok:
            failures.append({"learner": learner, "mean": report.mean_true_error, "floor": floor})
    return _fail_exit(failures)


def cmd_round(args) -> int:
    rng = make_rng(args.seed)
    h = core.load_predictor(args.predictor)
    m = h.m
    d_bits = max(1, (m - 1).bit_length())
    r_bits = args.r_bits
    scale = 1 << r_bits

    def evaluator(x, seed_bits):
        return 1 if (seed_bits + 0.5) / scale < (1.0 + h.values[x]) / 2.0 else -1

    dist = core.FinitePointDistribution.uniform(m)
    hat, report = rounding.derandomize(
        evaluator, d_bits, r_bits, m, dist, args.delta, rng
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "deterministic.csv"
    path.write_text("\n".join(str(int(v)) for v in hat.labels) + "\n")
    print(f"wrote {path} (k={report['k']}, bound=+{report['bound']:.4f})")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="robustpac")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out-dir", default="out")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", help="run the fast property suites")

    p_learn = sub.add_parser("learn", help="learn a hypothesis from dataset files")
    p_learn.add_argument("--dataset", required=True)
    p_learn.add_argument("--concept-class", required=True)
    p_learn.add_argument("--learner", default="malicious")
    p_learn.add_argument("--eps", type=float, default=0.05)
    p_learn.add_argument("--alpha", type=float, default=0.0)
    p_learn.add_argument("--distribution", default=None)

    p_sim = sub.add_parser("simulate", help="Monte Carlo run from a config file")
    p_sim.add_argument("--config", required=True)

    p_game = sub.add_parser("game", help="exact lower-bound evaluation")
    p_game.add_argument("--d", type=int, default=20)
    p_game.add_argument("--eta", type=float, default=0.2)
    p_game.add_argument("--eps", type=float, default=0.05)
    p_game.add_argument("--trials", type=int, default=50)
    p_game.add_argument("--n", type=int, default=2000)

    p_round = sub.add_parser("round", help="derandomize a predictor file")
    p_round.add_argument("--predictor", required=True)
    p_round.add_argument("--delta", type=float, default=0.05)
    p_round.add_argument("--r-bits", type=int, default=16)

    args = parser.parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args)
    if args.command == "learn":
        return cmd_learn(args)
    if args.command == "simulate":
        return cmd_simulate(args)
    if args.command == "game":
        return cmd_game(args)
    if args.command == "round":
        return cmd_round(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())

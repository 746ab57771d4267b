"""Command line interface.

Subcommands: build-gram (kernel matrix to CSV), train (fit and save a
one-vs-one SVM), experiment (full protocol with JSON + CSV report), synth
(synthetic dataset on disk), validate-math (Monte-Carlo oracle suite for
the closed-form kernels).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .grassmann import (
    PseudoGaussian,
    mc_projection_moment,
    sample_dirichlet,
    svd_perturbation_check,
)
from .harness import (
    AppendedNoiseSpec,
    Dataset,
    ExperimentPlan,
    KFold,
    ParamGrid,
    PerSubjectFraction,
    RandomHalf,
    SynthSpec,
    load_dataset,
    run_experiment,
    save_dataset,
    synth_generate,
    truncate_latency,
)
from .kernels import (
    KernelSpec,
    dg_pg_coefficients,
    gram,
    retention_prob,
    write_gram_csv,
)
from .subspace import build_subspace, null_complement
from .svm import save_model, train_multiclass

KERNEL_CHOICES = {
    "proj": "projection",
    "bc": "binet_cauchy",
    "scproj": "scaled_projection",
    "dg-pg": "dg_pg",
    "dg-dir": "dg_dir",
}


def _spec_from_args(args) -> KernelSpec:
    return KernelSpec(
        family=KERNEL_CHOICES[args.kernel],
        epsilon=args.epsilon,
        lambda_m=args.lambda_m,
    )


def _build_reps(dataset: Dataset, rank: int, latency: int | None):
    seqs = [e.sequence for e in dataset.entries]
    if latency is not None:
        seqs = [truncate_latency(s, latency) for s in seqs]
    r = min(rank, dataset.feature_dim, min(s.shape[1] for s in seqs))
    return [build_subspace(s, r) for s in seqs]


def _cmd_build_gram(args) -> int:
    dataset = load_dataset(args.manifest)
    spec = _spec_from_args(args)
    reps = _build_reps(dataset, args.rank, args.latency)
    ids = tuple(e.source or str(i) for i, e in enumerate(dataset.entries))
    gm = gram(reps, spec, ids=ids)
    write_gram_csv(gm, args.out)
    with open(str(args.out) + ".ids.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "id", "label"])
        for i, e in enumerate(dataset.entries):
            writer.writerow([i, gm.ids[i], e.label])
    print(f"wrote {gm.values.shape[0]}x{gm.values.shape[1]} gram to {args.out}")
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(args.manifest)
    spec = _spec_from_args(args)
    reps = _build_reps(dataset, args.rank, args.latency)
    gm = gram(reps, spec)
    mm = train_multiclass(gm.values, np.asarray(dataset.labels()), args.C)
    echo = dict(spec.to_dict(), rank=args.rank, latency_cap=args.latency, C=args.C)
    save_model(mm, args.out, kernel_spec=echo)
    print(f"trained {len(mm.models)} pairwise models over classes {list(mm.classes)}")
    print(f"saved model to {args.out}")
    return 0


def _split_from_args(args):
    if args.split == "half":
        return RandomHalf()
    if args.split == "subject-frac":
        return PerSubjectFraction(train_fraction=args.train_fraction)
    return KFold(k=args.folds)


def _grid_from_file(path) -> ParamGrid:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"C", "r", "epsilon", "lambda_m"}
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    defaults = ParamGrid()
    return ParamGrid(
        c_values=tuple(doc.get("C", defaults.c_values)),
        r_values=tuple(doc.get("r", defaults.r_values)),
        epsilon_values=tuple(doc.get("epsilon", defaults.epsilon_values)),
        lambda_m_values=tuple(doc.get("lambda_m", defaults.lambda_m_values)),
    )


def _cmd_experiment(args) -> int:
    dataset = load_dataset(args.manifest)
    families = (KERNEL_CHOICES[args.kernel],) if args.kernel else tuple(KERNEL_CHOICES.values())
    plan = ExperimentPlan(
        split=_split_from_args(args),
        repeats=args.repeats,
        noise=AppendedNoiseSpec(tuple(args.ana_class)) if args.ana_class else None,
        latency_cap=args.latency,
        grid=_grid_from_file(args.grid) if args.grid else ParamGrid(),
        families=families,
        seed=args.seed,
    )
    report = run_experiment(plan, dataset, n_jobs=args.jobs)
    report.write(args.out)
    for family in sorted(report.results):
        res = report.results[family]
        print(f"{family}: mean error {res['mean_error']:.4f} (std {res['std_error']:.4f})")
    print(f"report written to {args.out} and {Path(args.out).with_suffix('.csv')}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_classes=args.classes,
        samples_per_class=args.samples,
        ambient_dim=args.ambient,
        latent_dim=args.latent,
        n_frames=args.frames,
        noise_level=args.noise,
        n_subjects=args.subjects,
        seed=args.seed,
    )
    manifest = save_dataset(synth_generate(spec), args.out)
    print(f"manifest written to {manifest}")
    return 0


def _cmd_validate_math(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence((0x3A7, args.seed)))
    k = args.samples
    checks = {}

    d, m = 8, 3
    rep = build_subspace(rng.standard_normal((d, 12)), m)
    eps = 0.7
    est = mc_projection_moment(rep, PseudoGaussian(epsilon=eps), k, rng, columns=[0])
    coeffs = dg_pg_coefficients(rep, eps)
    u0 = rep.basis[:, 0]
    nb = null_complement(rep)
    expected = coeffs.diag[0] * np.outer(u0, u0) + (1 - coeffs.diag[0]) / (d - m) * (nb @ nb.T)
    metric = float(np.abs(est.mean_matrix - expected).max())
    checks["pg_second_moment"] = {"metric": metric, "tolerance": 5.0 / np.sqrt(k)}

    lam = np.array([0.7, 0.2, 0.1])
    draws = sample_dirichlet(lam, rng, size=k)
    worst = 0.0
    tol = 0.0
    for lam_m in (0.1, 0.5):
        p = np.atleast_1d(retention_prob(lam, lam_m))
        freq = (draws > lam_m).mean(axis=0)
        se = np.sqrt(np.maximum(p * (1 - p), 1e-12) / k)
        worst = max(worst, float(np.abs(freq - p).max()))
        tol = max(tol, float((3 * se).max()))
    checks["dirichlet_retention"] = {"metric": worst, "tolerance": tol}

    u = np.linalg.qr(rng.standard_normal((20, 20)))[0]
    v = np.linalg.qr(rng.standard_normal((40, 40)))[0][:, :20]
    s = np.zeros(20)
    s[:5] = [5, 4, 3, 2, 1]
    x = (u * s) @ v.T
    rep_report = svd_perturbation_check(x, m=5, eps_x=1e-3, trials=args.trials, rng=rng)
    ratio = rep_report["mean_error_at_half_eps"] / rep_report["mean_error_at_eps"]
    checks["svd_perturbation_ratio"] = {"metric": float(ratio), "tolerance": 0.6}

    ok = True
    for name, res in checks.items():
        res["pass"] = bool(res["metric"] <= res["tolerance"])
        ok = ok and res["pass"]
    doc = json.dumps(checks, indent=2, sort_keys=True)
    print(doc)
    if args.out:
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
    return 0 if ok else 1


def _add_kernel_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--kernel", choices=sorted(KERNEL_CHOICES), required=required,
                   default=None if not required else argparse.SUPPRESS,
                   help="kernel family")
    p.add_argument("--epsilon", type=float, default=None, help="dg-pg disturbance strength")
    p.add_argument("--lambda-m", dest="lambda_m", type=float, default=None,
                   help="dg-dir truncation threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgrass", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-gram", help="kernel matrix over a manifest, written as CSV")
    p.add_argument("--manifest", required=True)
    _add_kernel_flags(p, required=True)
    p.add_argument("--rank", type=int, required=True, help="subspace rank r")
    p.add_argument("--latency", type=int, default=None, metavar="K")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_gram)

    p = sub.add_parser("train", help="fit a one-vs-one SVM and save it as JSON")
    p.add_argument("--manifest", required=True)
    _add_kernel_flags(p, required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--latency", type=int, default=None, metavar="K")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("experiment", help="run a protocol and write JSON + CSV reports")
    p.add_argument("--manifest", required=True)
    _add_kernel_flags(p, required=False)
    p.add_argument("--split", choices=["half", "subject-frac", "kfold"], default="half")
    p.add_argument("--train-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latency", type=int, default=None, metavar="K")
    p.add_argument("--ana-class", action="append", default=None, metavar="LABEL",
                   help="noise class appended to every sample (repeatable)")
    p.add_argument("--grid", default=None, metavar="PATH",
                   help="JSON file with any of the keys C, r, epsilon, lambda_m")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("synth", help="generate a synthetic dataset on disk")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--ambient", type=int, default=10)
    p.add_argument("--latent", type=int, default=3)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate-math", help="Monte-Carlo oracle suite for the closed forms")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_validate_math)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

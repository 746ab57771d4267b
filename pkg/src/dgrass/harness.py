"""Experiment harness: dataset ingestion, protocols, grid search, reports.

A dataset is a list of labeled D x N sequences. An experiment plan fixes a
split rule (per-subject fraction, random half, or k-fold), optional
appended-noise corruption and latency truncation, a hyperparameter grid,
and a seed; running it selects hyperparameters by stratified inner CV on
the training split only, refits, and reports test error per kernel family.

Everything is deterministic given (plan, dataset): every repeat derives its
randomness from SeedSequence((seed, repeat)), and grid cells are pure, so
serial and thread-parallel runs emit identical reports.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .kernels import FAMILIES, KernelSpec, cross_gram, gram
from .subspace import build_subspace, check_sequence
from .svm import predict, train_multiclass

__all__ = [
    "DatasetEntry",
    "Dataset",
    "PerSubjectFraction",
    "RandomHalf",
    "KFold",
    "SplitRule",
    "AppendedNoiseSpec",
    "ParamGrid",
    "ExperimentPlan",
    "SynthSpec",
    "Report",
    "load_dataset",
    "save_dataset",
    "append_noise",
    "truncate_latency",
    "synth_generate",
    "run_experiment",
]

_MANIFEST_HEADER = ["path", "label", "subject", "trial"]
_SPLIT_RETRIES = 20


@dataclass(frozen=True)
class DatasetEntry:
    sequence: np.ndarray
    label: str
    subject: str
    trial: str
    source: str = ""


@dataclass(frozen=True)
class Dataset:
    entries: tuple[DatasetEntry, ...]
    feature_dim: int

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


@dataclass(frozen=True)
class PerSubjectFraction:
    """Per subject: a fixed fraction of samples trains, the rest tests."""

    train_fraction: float = 1.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class RandomHalf:
    """Random half/half split over all samples."""


@dataclass(frozen=True)
class KFold:
    """k-fold outer protocol; the repeat error is the mean over folds."""

    k: int = 4

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")


SplitRule = Union[PerSubjectFraction, RandomHalf, KFold]


@dataclass(frozen=True)
class AppendedNoiseSpec:
    """Corruption: one sequence from a designated noise class is appended
    to every evaluation sample; the noise classes themselves are excluded
    from the evaluation set."""

    noise_classes: tuple[str, ...]

    def __post_init__(self):
        if len(self.noise_classes) == 0:
            raise ValueError("at least one noise class is required")


@dataclass(frozen=True)
class ParamGrid:
    """Hyperparameter ranges; defaults are the full published search grids."""

    c_values: tuple = tuple(10.0 ** k for k in range(-4, 6))
    r_values: tuple = tuple(range(1, 16))
    epsilon_values: tuple = (
        1e-6, 1e-2, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
        1.2, 1.7, 2.0, 5.0, 40.0,
    )
    lambda_m_values: tuple = (0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9)

    def __post_init__(self):
        for name in ("c_values", "r_values", "epsilon_values", "lambda_m_values"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must be nonempty")


@dataclass(frozen=True)
class ExperimentPlan:
    split: SplitRule
    repeats: int = 1
    noise: AppendedNoiseSpec | None = None
    latency_cap: int | None = None
    grid: ParamGrid = field(default_factory=ParamGrid)
    families: tuple[str, ...] = FAMILIES
    seed: int = 0
    cv_folds: int = 3

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.latency_cap is not None and self.latency_cap < 1:
            raise ValueError("latency_cap must be >= 1")
        if len(self.families) == 0:
            raise ValueError("at least one kernel family is required")
        for fam in self.families:
            if fam not in FAMILIES:
                raise ValueError(f"unknown kernel family {fam!r}")


@dataclass(frozen=True)
class SynthSpec:
    """Desk-scale synthetic stand-in: one latent subspace per class, frames
    are latent coordinates times basis plus isotropic Gaussian noise."""

    n_classes: int = 3
    samples_per_class: int = 8
    ambient_dim: int = 10
    latent_dim: int = 3
    n_frames: int = 30
    noise_level: float = 0.05
    n_subjects: int = 4
    seed: int = 0
    share_latent: bool = False

    def __post_init__(self):
        if not 1 <= self.latent_dim < self.ambient_dim:
            raise ValueError("need 1 <= latent_dim < ambient_dim")
        if self.n_frames < self.latent_dim:
            raise ValueError("n_frames must be >= latent_dim")
        if self.n_classes < 1 or self.samples_per_class < 1 or self.n_subjects < 1:
            raise ValueError("counts must be positive")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")


def load_dataset(manifest_path) -> Dataset:
    """Read a manifest CSV (header path,label,subject,trial) and its files.

    Sequence files hold one frame per row, D comma-separated values, no
    header; they are transposed to D x N on ingest. Relative paths resolve
    against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != _MANIFEST_HEADER:
        raise ValueError(
            f"{manifest_path}: manifest must start with header {','.join(_MANIFEST_HEADER)}"
        )
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if not body:
        raise ValueError(f"{manifest_path}: manifest lists no sequences")
    entries = []
    feature_dim = None
    for row in body:
        if len(row) != 4:
            raise ValueError(f"{manifest_path}: malformed manifest row {row!r}")
        rel, label, subject, trial = (c.strip() for c in row)
        if not label:
            raise ValueError(f"{manifest_path}: empty label for {rel!r}")
        seq_path = Path(rel)
        if not seq_path.is_absolute():
            seq_path = manifest_path.parent / seq_path
        if not seq_path.exists():
            raise FileNotFoundError(f"sequence file not found: {seq_path}")
        try:
            frames = np.loadtxt(seq_path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ValueError(f"{seq_path}: unreadable or ragged rows ({exc})") from exc
        seq = check_sequence(frames.T, name=str(seq_path))
        if feature_dim is None:
            feature_dim = seq.shape[0]
        elif seq.shape[0] != feature_dim:
            raise ValueError(
                f"{seq_path}: {seq.shape[0]} feature columns, expected {feature_dim}"
            )
        entries.append(
            DatasetEntry(sequence=seq, label=label, subject=subject, trial=trial, source=rel)
        )
    return Dataset(entries=tuple(entries), feature_dim=int(feature_dim))


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write sequence CSVs plus manifest.csv under out_dir; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_MANIFEST_HEADER)
        for i, e in enumerate(dataset.entries):
            name = f"seq_{i:04d}.csv"
            np.savetxt(out / name, e.sequence.T, delimiter=",", fmt="%.17g")
            writer.writerow([name, e.label, e.subject, e.trial])
    return manifest


def append_noise(sample: np.ndarray, noise_pool: list[np.ndarray],
                 rng: np.random.Generator) -> np.ndarray:
    """Concatenate one uniformly drawn noise sequence after the sample's frames."""
    sample = check_sequence(sample, name="sample")
    if len(noise_pool) == 0:
        raise ValueError("noise pool is empty")
    pick = noise_pool[int(rng.integers(len(noise_pool)))]
    pick = check_sequence(pick, name="noise sequence")
    if pick.shape[0] != sample.shape[0]:
        raise ValueError(
            f"noise dimension {pick.shape[0]} does not match sample dimension {sample.shape[0]}"
        )
    return np.hstack([sample, pick])


def truncate_latency(sample: np.ndarray, k: int) -> np.ndarray:
    """First min(K, N) frames of the sample."""
    k = int(k)
    if k < 1:
        raise ValueError("latency cap must be >= 1")
    return sample[:, :k]


def synth_generate(spec: SynthSpec) -> Dataset:
    """Generate a labeled synthetic dataset per the spec (deterministic)."""
    rng = np.random.default_rng(np.random.SeedSequence((0x5EED, spec.seed)))
    d, q = spec.ambient_dim, spec.latent_dim
    scales = 0.8 ** np.arange(q)
    shared = np.linalg.qr(rng.standard_normal((d, q)))[0]
    entries = []
    for c in range(spec.n_classes):
        basis = shared if spec.share_latent else np.linalg.qr(rng.standard_normal((d, q)))[0]
        for s in range(spec.samples_per_class):
            z = rng.standard_normal((q, spec.n_frames)) * scales[:, None]
            x = basis @ z
            if spec.noise_level > 0:
                x = x + spec.noise_level * rng.standard_normal(x.shape)
            entries.append(
                DatasetEntry(
                    sequence=x,
                    label=f"class{c}",
                    subject=f"s{s % spec.n_subjects}",
                    trial=f"t{s}",
                    source=f"synth:class{c}/t{s}",
                )
            )
    return Dataset(entries=tuple(entries), feature_dim=d)


# ---------------------------------------------------------------------------
# splitting

def _covers_classes(labels: np.ndarray, train_idx: np.ndarray) -> bool:
    return set(labels[train_idx].tolist()) == set(labels.tolist())


def _draw_units(split: SplitRule, labels: np.ndarray, subjects: np.ndarray,
                rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Draw (train, test) index pairs; resample until every class trains."""
    n = len(labels)
    for _ in range(_SPLIT_RETRIES):
        if isinstance(split, RandomHalf):
            perm = rng.permutation(n)
            units = [(np.sort(perm[: n // 2]), np.sort(perm[n // 2:]))]
        elif isinstance(split, PerSubjectFraction):
            train: list[int] = []
            test: list[int] = []
            for subj in sorted(set(subjects.tolist())):
                idx = np.flatnonzero(subjects == subj)
                idx = rng.permutation(idx)
                take = max(1, round(split.train_fraction * len(idx)))
                train.extend(idx[:take].tolist())
                test.extend(idx[take:].tolist())
            units = [(np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int)))]
        else:
            if split.k > n:
                raise ValueError(f"k={split.k} folds exceed {n} samples")
            perm = rng.permutation(n)
            folds = np.array_split(perm, split.k)
            units = [
                (np.sort(np.concatenate(folds[:i] + folds[i + 1:])), np.sort(folds[i]))
                for i in range(split.k)
            ]
        if all(len(te) > 0 and _covers_classes(labels, tr) for tr, te in units):
            return units
    raise RuntimeError(
        f"could not draw a split covering every class in training after {_SPLIT_RETRIES} tries"
    )


def _stratified_folds(labels: np.ndarray, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Deal each class round-robin into k folds from a shuffled order."""
    n = len(labels)
    k = min(k, n)
    for _ in range(_SPLIT_RETRIES):
        folds: list[list[int]] = [[] for _ in range(k)]
        offset = 0
        for cls in sorted(set(labels.tolist())):
            idx = rng.permutation(np.flatnonzero(labels == cls))
            for pos, sample in enumerate(idx.tolist()):
                folds[(offset + pos) % k].append(sample)
            offset += len(idx)
        ok = all(
            len(f) > 0 and len(set(np.delete(labels, f).tolist())) >= 2 for f in folds
        )
        if ok:
            return [np.sort(np.array(f, dtype=int)) for f in folds]
    raise RuntimeError("inner CV folds cannot keep two classes in every training part")


# ---------------------------------------------------------------------------
# grid evaluation

def _family_cells(family: str, grid: ParamGrid, r_max: int) -> list[dict]:
    rs = []
    for r in grid.r_values:
        r_eff = min(int(r), r_max)
        if r_eff not in rs:
            rs.append(r_eff)
    if family == "dg_pg":
        return [{"r": r, "epsilon": float(e)} for r in rs for e in grid.epsilon_values]
    if family == "dg_dir":
        return [{"r": r, "lambda_m": float(l)} for r in rs for l in grid.lambda_m_values]
    return [{"r": r} for r in rs]


def _cell_spec(family: str, cell: dict) -> KernelSpec:
    params = {k: v for k, v in cell.items() if k != "r"}
    return KernelSpec(family=family, **params)


def _cv_errors(gram_tr: np.ndarray, y_tr: np.ndarray, folds: list[np.ndarray],
               c_values: tuple) -> list[float]:
    """Mean heldout error per C, touching only training-split sub-blocks."""
    errors = []
    for c in c_values:
        wrong = 0
        total = 0
        for heldout in folds:
            fit_idx = np.setdiff1d(np.arange(len(y_tr)), heldout)
            mm = train_multiclass(gram_tr[np.ix_(fit_idx, fit_idx)], y_tr[fit_idx], float(c))
            pred = predict(mm, gram_tr[np.ix_(heldout, fit_idx)])
            wrong += int(np.sum(pred != y_tr[heldout]))
            total += len(heldout)
        errors.append(wrong / total)
    return errors


def _select_cell(cells: list[dict], grams_tr: list[np.ndarray], y_tr: np.ndarray,
                 folds: list[np.ndarray], c_values: tuple,
                 n_jobs: int) -> tuple[dict, float, int]:
    """Pick (cell, C) minimizing inner-CV error; first in grid order wins ties.

    By construction this function only ever sees training-side Gram blocks.
    """
    def one(args):
        return _cv_errors(args[0], y_tr, folds, c_values)

    work = [(g,) for g in grams_tr]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            all_errors = list(pool.map(one, work))
    else:
        all_errors = [one(w) for w in work]
    best = (np.inf, None, None, None)
    for ci, errs in enumerate(all_errors):
        for cj, err in enumerate(errs):
            if err < best[0]:
                best = (err, ci, cj, float(c_values[cj]))
    _, cell_idx, _, c = best
    return cells[cell_idx], c, cell_idx


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class Report:
    plan: dict
    dataset: dict
    results: dict

    def to_dict(self) -> dict:
        return {"plan": self.plan, "dataset": self.dataset, "results": self.results}

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n").encode()

    def csv_rows(self) -> list[list]:
        rows = [["kernel", "repeat", "unit", "r", "C", "epsilon", "lambda_m", "error"]]
        for family in sorted(self.results):
            for rep in self.results[family]["repeats"]:
                for u, unit in enumerate(rep["units"]):
                    sel = unit["selected"]
                    rows.append([
                        family, rep["repeat"], u,
                        sel.get("r", ""), sel.get("C", ""),
                        sel.get("epsilon", ""), sel.get("lambda_m", ""),
                        unit["error"],
                    ])
        return rows

    def write(self, json_path) -> None:
        json_path = Path(json_path)
        json_path.write_bytes(self.to_json_bytes())
        with open(json_path.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(self.csv_rows())


def _plan_echo(plan: ExperimentPlan) -> dict:
    split: dict = {"kind": type(plan.split).__name__}
    if isinstance(plan.split, PerSubjectFraction):
        split["train_fraction"] = plan.split.train_fraction
    if isinstance(plan.split, KFold):
        split["k"] = plan.split.k
    return {
        "split": split,
        "repeats": plan.repeats,
        "noise": None if plan.noise is None else {"noise_classes": list(plan.noise.noise_classes)},
        "latency_cap": plan.latency_cap,
        "grid": {
            "C": list(plan.grid.c_values),
            "r": list(plan.grid.r_values),
            "epsilon": list(plan.grid.epsilon_values),
            "lambda_m": list(plan.grid.lambda_m_values),
        },
        "families": list(plan.families),
        "seed": plan.seed,
        "cv_folds": plan.cv_folds,
    }


# ---------------------------------------------------------------------------
# the experiment itself

def run_experiment(plan: ExperimentPlan, dataset: Dataset, n_jobs: int = 1) -> Report:
    """Run the full protocol and return a deterministic report.

    Per repeat: split -> optional corruption/latency -> subspaces -> inner
    CV over the grid on the training split only -> refit -> test error.
    n_jobs parallelizes grid cells with threads and does not affect output.
    """
    if len(dataset.entries) == 0:
        raise ValueError("dataset is empty")
    all_labels = np.asarray(dataset.labels())
    all_classes = sorted(set(all_labels.tolist()))
    noise_classes: set = set()
    noise_pool: list[np.ndarray] = []
    if plan.noise is not None:
        noise_classes = set(plan.noise.noise_classes)
        missing = noise_classes - set(all_classes)
        if missing:
            raise ValueError(f"noise classes not in dataset: {sorted(missing)}")
        noise_pool = [e.sequence for e in dataset.entries if e.label in noise_classes]
    eval_idx = [i for i, e in enumerate(dataset.entries) if e.label not in noise_classes]
    labels = all_labels[eval_idx]
    subjects = np.asarray([dataset.entries[i].subject for i in eval_idx])
    if len(set(labels.tolist())) < 2:
        raise ValueError("need at least 2 evaluation classes")

    family_repeats: dict[str, list[dict]] = {f: [] for f in plan.families}
    for rep_i in range(plan.repeats):
        ss = np.random.SeedSequence((plan.seed, rep_i))
        split_rng, noise_rng, fold_rng = (np.random.default_rng(c) for c in ss.spawn(3))
        seqs = [dataset.entries[i].sequence for i in eval_idx]
        if plan.noise is not None:
            seqs = [append_noise(s, noise_pool, noise_rng) for s in seqs]
        if plan.latency_cap is not None:
            seqs = [truncate_latency(s, plan.latency_cap) for s in seqs]
        r_max = min(dataset.feature_dim, min(s.shape[1] for s in seqs))
        units = _draw_units(plan.split, labels, subjects, split_rng)
        reps_cache: dict[int, list] = {}

        def reps_for(r: int) -> list:
            # subspaces are per-sample, so caching across units leaks nothing
            if r not in reps_cache:
                reps_cache[r] = [build_subspace(s, r) for s in seqs]
            return reps_cache[r]

        unit_results: dict[str, list[dict]] = {f: [] for f in plan.families}
        for tr_idx, te_idx in units:
            y_tr, y_te = labels[tr_idx], labels[te_idx]
            folds = _stratified_folds(y_tr, plan.cv_folds, fold_rng)
            for family in plan.families:
                cells = _family_cells(family, plan.grid, r_max)
                grams_tr = []
                for cell in cells:
                    cell_reps = reps_for(cell["r"])
                    grams_tr.append(
                        gram([cell_reps[i] for i in tr_idx], _cell_spec(family, cell)).values
                    )
                cell, c, cell_idx = _select_cell(
                    cells, grams_tr, y_tr, folds, plan.grid.c_values, n_jobs
                )
                spec = _cell_spec(family, cell)
                all_reps = reps_for(cell["r"])
                reps_tr = [all_reps[i] for i in tr_idx]
                reps_te = [all_reps[i] for i in te_idx]
                mm = train_multiclass(grams_tr[cell_idx], y_tr, c)
                unknown = set(y_te.tolist()) - set(mm.classes)
                if unknown:
                    raise RuntimeError(f"test labels never trained: {sorted(unknown)}")
                pred = predict(mm, cross_gram(reps_te, reps_tr, spec))
                err = float(np.mean(pred != y_te))
                unit_results[family].append(
                    {"error": err, "selected": {**cell, "C": c}}
                )
        for family in plan.families:
            errs = [u["error"] for u in unit_results[family]]
            family_repeats[family].append(
                {
                    "repeat": rep_i,
                    "seed": [plan.seed, rep_i],
                    "error": float(np.mean(errs)),
                    "units": unit_results[family],
                }
            )

    results = {}
    for family in plan.families:
        errs = np.array([r["error"] for r in family_repeats[family]])
        results[family] = {
            "mean_error": float(errs.mean()),
            "std_error": float(errs.std()),
            "repeats": family_repeats[family],
        }
    dataset_echo = {
        "n_sequences": len(dataset.entries),
        "feature_dim": dataset.feature_dim,
        "classes": all_classes,
        "eval_classes": sorted(set(labels.tolist())),
    }
    return Report(plan=_plan_echo(plan), dataset=dataset_echo, results=results)

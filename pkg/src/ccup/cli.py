"""Command-line interface tying the unlearning pipeline together.

Subcommands: project, evaluate, sweep, ablate, synth, verify.  All file
formats are the EMB1 container plus JSON sidecars.  Every source of
randomness flows through --seed, so identical inputs and flags always
produce identical outputs.  Relative output paths are resolved against
$CCUP_OUTPUT_DIR when it is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import oracle
from .evaluation import (
    RegularizationConfig,
    ablation_grid,
    evaluate_unlearning,
    reports_to_csv,
    reports_to_json,
    reports_to_table,
    sweep,
)
from .projections import (
    ablation_matrix,
    ccup_matrix,
    load_projection,
    nullspace_projector,
    partial_projector,
    save_projection,
)
from .store import (
    ClassManifest,
    EmbeddingMatrix,
    LabeledDataset,
    labels_path_for,
    load_labels,
    manifest_path_for,
    normalize_columns,
    partition_columns,
    read_emb1,
    save_labels,
    write_emb1,
)
from .synthetic import SyntheticSpec, generate

DEFAULT_LAMBDA = 100.0
DEFAULT_MU = 1.0
DEFAULT_ALPHA = 1.0
DEFAULT_FORGET_FRACTION = 0.4

OUTPUT_DIR_ENV = "CCUP_OUTPUT_DIR"


class CliError(Exception):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(message)


@contextmanager
def _stage(name: str):
    try:
        yield
    except CliError:
        raise
    except Exception as exc:
        raise CliError(name, str(exc)) from exc


def _out_path(path: str) -> Path:
    base = Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    p = Path(path)
    return p if p.is_absolute() else base / p


def _load_texts(args) -> tuple[EmbeddingMatrix, ClassManifest]:
    with _stage("load-texts"):
        texts = read_emb1(args.texts)
    with _stage("load-manifest"):
        manifest_path = args.manifest or manifest_path_for(args.texts)
        manifest = ClassManifest.load(manifest_path)
        if texts.count != len(manifest):
            raise ValueError(
                f"text matrix has {texts.count} columns but manifest "
                f"{manifest_path} lists {len(manifest)} classes"
            )
    if not texts.normalized:
        texts = normalize_columns(texts)
    return texts, manifest


def _load_dataset(args) -> LabeledDataset:
    with _stage("load-features"):
        features = read_emb1(args.features)
    with _stage("load-labels"):
        labels_path = args.labels or labels_path_for(args.features)
        labels = load_labels(labels_path)
    with _stage("build-dataset"):
        return LabeledDataset(features=features, labels=labels)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        path = _out_path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _render(args, reports) -> str:
    if args.format == "csv":
        return reports_to_csv(reports, fraction=args.fraction)
    if args.format == "json":
        return reports_to_json(reports)
    return reports_to_table(reports, fraction=args.fraction)


def cmd_project(args) -> int:
    texts, manifest = _load_texts(args)
    with _stage("build-projection"):
        forget_texts, retain_texts = partition_columns(texts, manifest)
        if forget_texts.count < 1:
            raise ValueError("manifest marks no class as 'forget'")
        config = RegularizationConfig(lam=args.lam, mu=args.mu)
        if args.method == "nullspace":
            proj = nullspace_projector(forget_texts)
        elif args.method == "ccup":
            proj = ccup_matrix(forget_texts, retain_texts, config)
        elif args.method == "ablation":
            components = {c.strip() for c in args.components.split(",") if c.strip()}
            proj = ablation_matrix(forget_texts, retain_texts, config, components)
        else:
            proj = partial_projector(forget_texts, alpha=args.alpha)
    with _stage("write-output"):
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_projection(proj, out)
    print(f"wrote projection ({proj.provenance.method}, dim {proj.dim}) to {out}")
    return 0


def cmd_evaluate(args) -> int:
    texts, manifest = _load_texts(args)
    dataset = _load_dataset(args)
    with _stage("load-projection"):
        proj = load_projection(args.projection)
    with _stage("evaluate"):
        report = evaluate_unlearning(
            dataset,
            manifest,
            texts,
            proj,
            dataset_id=args.dataset_name or Path(args.features).stem,
            seed=args.seed,
        )
    _emit(args, _render(args, [report]))
    return 0


def cmd_sweep(args) -> int:
    texts, manifest = _load_texts(args)
    dataset = _load_dataset(args)
    with _stage("parse-values"):
        values = [float(v) for v in args.values.split(",") if v.strip()]
    with _stage("sweep"):
        result = sweep(
            dataset,
            manifest,
            texts,
            axis=args.axis,
            values=values,
            fixed=RegularizationConfig(lam=args.lam, mu=args.mu),
            dataset_id=args.dataset_name or Path(args.features).stem,
            seed=args.seed,
        )
    _emit(args, _render(args, list(result.reports)))
    return 0


def cmd_ablate(args) -> int:
    texts, manifest = _load_texts(args)
    dataset = _load_dataset(args)
    with _stage("ablate"):
        rows = ablation_grid(
            dataset,
            manifest,
            texts,
            config=RegularizationConfig(lam=args.lam, mu=args.mu),
            dataset_id=args.dataset_name or Path(args.features).stem,
            seed=args.seed,
        )
    _emit(args, _render(args, [report for _, report in rows]))
    return 0


def cmd_synth(args) -> int:
    with _stage("build-spec"):
        if args.spec:
            spec = SyntheticSpec.from_json_obj(json.loads(Path(args.spec).read_text()))
        else:
            spec = SyntheticSpec(
                dim=args.dim,
                n_classes=args.classes,
                images_per_class=args.images_per_class,
                concentration=args.concentration,
                text_noise=args.text_noise,
                overlap=args.overlap,
                seed=args.seed,
                forget_fraction=args.forget_fraction,
            )
    with _stage("generate"):
        dataset, manifest, class_texts = generate(spec)
    with _stage("write-output"):
        prefix = _out_path(args.out_prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        images_path = prefix.parent / (prefix.name + "_images.emb1")
        texts_path = prefix.parent / (prefix.name + "_texts.emb1")
        write_emb1(dataset.features, images_path)
        save_labels(dataset.labels, labels_path_for(images_path))
        write_emb1(class_texts, texts_path)
        manifest.save(manifest_path_for(texts_path))
        spec_path = prefix.parent / (prefix.name + "_spec.json")
        spec_path.write_text(json.dumps(spec.to_json_obj(), indent=2) + "\n")
    print(
        f"wrote {images_path} ({dataset.features.count} images), "
        f"{texts_path} ({class_texts.count} classes)"
    )
    return 0


def cmd_verify(args) -> int:
    with _stage("verify"):
        rng = np.random.default_rng(args.seed)
        forget = rng.standard_normal((args.dim, args.forget))
        retain = rng.standard_normal((args.dim, args.retain))
        forget /= np.linalg.norm(forget, axis=0)
        retain /= np.linalg.norm(retain, axis=0)
        config = RegularizationConfig(lam=args.lam, mu=args.mu)

        closed = ccup_matrix(forget, retain, config)
        grad_norm = float(np.linalg.norm(oracle.gradient(closed, forget, retain, config)))
        grad_limit = 1e-8 * (1.0 + config.lam + config.mu)

        descended = oracle.minimize(
            forget, retain, config, max_iters=args.max_iters, tolerance=args.tolerance
        )
        distance = float(np.linalg.norm(descended.values - closed.values))
        distance_limit = 1e-4

    grad_ok = grad_norm <= grad_limit
    dist_ok = distance <= distance_limit
    print(
        f"gradient norm at closed form: {grad_norm:.3e} "
        f"(limit {grad_limit:.3e}) -> {'ok' if grad_ok else 'FAIL'}"
    )
    print(
        f"descent vs closed form distance: {distance:.3e} "
        f"(limit {distance_limit:.3e}) -> {'ok' if dist_ok else 'FAIL'}"
    )
    return 0 if grad_ok and dist_ok else 1


def _add_report_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("table", "csv", "json"), default="table")
    parser.add_argument(
        "--fraction",
        action="store_true",
        help="print accuracies as fractions in [0, 1] instead of percentages",
    )
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--dataset-name", help="dataset label for report rows")


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--features", required=True, help="image features (EMB1)")
    parser.add_argument(
        "--labels", help="image labels (JSON array); default: features sidecar"
    )
    parser.add_argument("--texts", required=True, help="class text embeddings (EMB1)")
    parser.add_argument(
        "--manifest", help="class manifest (JSON); default: texts sidecar"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ccup",
        description="Remove classes from a frozen embedding space with "
        "closed-form projections, and evaluate forgetting/retention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="build and save a projection matrix")
    p.add_argument("--texts", required=True, help="class text embeddings (EMB1)")
    p.add_argument("--manifest", help="class manifest (JSON); default: texts sidecar")
    p.add_argument(
        "--method",
        choices=("nullspace", "ccup", "ablation", "partial"),
        default="ccup",
    )
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--components", default="C1,C2,C3")
    p.add_argument("--out", required=True, help="output projection path (EMB1)")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("evaluate", help="before/after accuracies and MIA score")
    _add_data_flags(p)
    p.add_argument("--projection", required=True, help="projection matrix (EMB1)")
    p.add_argument("--seed", type=int, default=None)
    _add_report_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate along a hyperparameter axis")
    _add_data_flags(p)
    p.add_argument("--axis", choices=("lambda", "mu", "alpha"), required=True)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--seed", type=int, default=None)
    _add_report_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="run the objective-component grid")
    _add_data_flags(p)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--seed", type=int, default=None)
    _add_report_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic benchmark fixture")
    p.add_argument("--spec", help="JSON file with generator parameters")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--images-per-class", type=int, default=100)
    p.add_argument("--concentration", type=float, default=0.15)
    p.add_argument("--text-noise", type=float, default=0.05)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--forget-fraction", type=float, default=DEFAULT_FORGET_FRACTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True, help="path prefix for fixture files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="cross-check the closed form against the oracle")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--forget", type=int, default=2)
    p.add_argument("--retain", type=int, default=3)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--mu", type=float, default=DEFAULT_MU)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=50000)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Before/after unlearning evaluation, MIA scoring, sweeps, and tables.

The protocol: classify every image against the full class list twice,
once with raw unit-normalized features (BF, before forgetting) and once
with projected features (AF, after forgetting), then report per-subset
accuracies and the membership-inference score

    MIA = (BF_forget - AF_forget) - (BF_retain - AF_retain),

i.e. the forgetting drop minus the collateral retention drop.  The raw
value is reported without a better/worse judgment; see the README note
on its interpretation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import classify, subset_accuracy
from .projections import (
    METHOD_CCUP,
    Provenance,
    ProjectionMatrix,
    RegularizationConfig,
    ablation_matrix,
    ccup_matrix,
    partial_projector,
    project_columns,
)
from .store import (
    FORGET,
    RETAIN,
    ClassManifest,
    EmbeddingMatrix,
    LabeledDataset,
    normalize_columns,
    partition_columns,
)

AXIS_LAMBDA = "lambda"
AXIS_MU = "mu"
AXIS_ALPHA = "alpha"
_AXES = (AXIS_LAMBDA, AXIS_MU, AXIS_ALPHA)

CSV_COLUMNS = (
    "dataset",
    "method",
    "lambda",
    "mu",
    "components",
    "bf_forget",
    "af_forget",
    "bf_retain",
    "af_retain",
    "mia",
)


def mia_score(
    bf_forget: float, af_forget: float, bf_retain: float, af_retain: float
) -> float:
    """Forgetting drop minus retention drop."""
    return (bf_forget - af_forget) - (bf_retain - af_retain)


@dataclass(frozen=True)
class ReportProvenance:
    projection: Provenance
    dataset: str = ""
    seed: int | None = None

    def to_json_obj(self) -> dict:
        return {
            "projection": self.projection.to_json_obj(),
            "dataset": self.dataset,
            "seed": self.seed,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ReportProvenance":
        return cls(
            projection=Provenance.from_json_obj(obj["projection"]),
            dataset=obj.get("dataset", ""),
            seed=obj.get("seed"),
        )


@dataclass(frozen=True)
class EvaluationReport:
    """BF/AF accuracies for both subsets plus the derived MIA score."""

    bf_forget: float
    af_forget: float
    bf_retain: float
    af_retain: float
    mia: float
    provenance: ReportProvenance

    def __post_init__(self) -> None:
        for name in ("bf_forget", "af_forget", "bf_retain", "af_retain"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} = {value} is outside [0, 100]")
        expected = mia_score(self.bf_forget, self.af_forget, self.bf_retain, self.af_retain)
        if self.mia != expected:
            raise ValueError(f"stored mia {self.mia} does not equal recomputed {expected}")

    @classmethod
    def from_accuracies(
        cls,
        bf_forget: float,
        af_forget: float,
        bf_retain: float,
        af_retain: float,
        provenance: ReportProvenance | None = None,
    ) -> "EvaluationReport":
        provenance = provenance or ReportProvenance(projection=Provenance(method="unknown"))
        return cls(
            bf_forget=bf_forget,
            af_forget=af_forget,
            bf_retain=bf_retain,
            af_retain=af_retain,
            mia=mia_score(bf_forget, af_forget, bf_retain, af_retain),
            provenance=provenance,
        )

    def to_json_obj(self) -> dict:
        return {
            "bf_forget": self.bf_forget,
            "af_forget": self.af_forget,
            "bf_retain": self.bf_retain,
            "af_retain": self.af_retain,
            "mia": self.mia,
            "provenance": self.provenance.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "EvaluationReport":
        return cls(
            bf_forget=obj["bf_forget"],
            af_forget=obj["af_forget"],
            bf_retain=obj["bf_retain"],
            af_retain=obj["af_retain"],
            mia=obj["mia"],
            provenance=ReportProvenance.from_json_obj(obj["provenance"]),
        )


@dataclass(frozen=True)
class SweepResult:
    """Reports along one hyperparameter axis, sorted ascending by value."""

    axis: str
    points: tuple[tuple[float, EvaluationReport], ...]

    def __post_init__(self) -> None:
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {_AXES}, got {self.axis!r}")
        values = [v for v, _ in self.points]
        if values != sorted(values):
            raise ValueError("sweep points must be sorted ascending by value")

    @property
    def values(self) -> tuple[float, ...]:
        return tuple(v for v, _ in self.points)

    @property
    def reports(self) -> tuple[EvaluationReport, ...]:
        return tuple(r for _, r in self.points)


@dataclass(frozen=True)
class _BaselineState:
    """Shared BF classification state, computed once per dataset."""

    features: EmbeddingMatrix
    labels: np.ndarray
    forget_set: set[int]
    retain_set: set[int]
    bf_forget: float
    bf_retain: float


def _baseline_state(
    dataset: LabeledDataset,
    manifest: ClassManifest,
    class_texts: EmbeddingMatrix,
) -> _BaselineState:
    if class_texts.count != len(manifest):
        raise ValueError(
            f"class text matrix has {class_texts.count} columns but manifest "
            f"lists {len(manifest)} classes"
        )
    dataset.validate_against(manifest)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    forget_set = set(manifest.forget_indices)
    retain_set = set(manifest.retain_indices)
    if not any(int(v) in forget_set for v in labels):
        raise ValueError("dataset contains no image labeled with a forget class")
    if not any(int(v) in retain_set for v in labels):
        raise ValueError("dataset contains no image labeled with a retain class")

    features = dataset.features
    if not features.normalized:
        features = normalize_columns(features)
    bf = classify(features, class_texts)
    return _BaselineState(
        features=features,
        labels=labels,
        forget_set=forget_set,
        retain_set=retain_set,
        bf_forget=subset_accuracy(bf.predictions, labels, forget_set),
        bf_retain=subset_accuracy(bf.predictions, labels, retain_set),
    )


def _after_accuracies(
    state: _BaselineState,
    class_texts: EmbeddingMatrix,
    proj: ProjectionMatrix,
) -> tuple[float, float]:
    if proj.dim != state.features.dim:
        raise ValueError(
            f"projection dim {proj.dim} does not match feature dim {state.features.dim}"
        )
    projected, degenerate = project_columns(proj.values, state.features.values)
    # Fully erased columns come back as zeros; give them a placeholder
    # direction so classification stays defined, then force those images
    # to count as misclassified.
    if degenerate.size:
        projected = projected.copy()
        projected[0, degenerate] = 1.0
    scores = classify(
        EmbeddingMatrix(state.features.dim, state.features.count, projected, normalized=True),
        class_texts,
    )
    predictions = np.array(scores.predictions)
    predictions[degenerate] = -1
    af_forget = subset_accuracy(predictions, state.labels, state.forget_set)
    af_retain = subset_accuracy(predictions, state.labels, state.retain_set)
    return af_forget, af_retain


def evaluate_unlearning(
    dataset: LabeledDataset,
    manifest: ClassManifest,
    class_texts: EmbeddingMatrix,
    proj: ProjectionMatrix,
    dataset_id: str = "",
    seed: int | None = None,
) -> EvaluationReport:
    """Run the full before/after protocol for one projection.

    BF accuracies come from raw unit-normalized features, AF accuracies
    from the projected features; images whose projection collapses to
    numerical zero count as misclassified after forgetting.
    """
    state = _baseline_state(dataset, manifest, class_texts)
    af_forget, af_retain = _after_accuracies(state, class_texts, proj)
    return EvaluationReport.from_accuracies(
        bf_forget=state.bf_forget,
        af_forget=af_forget,
        bf_retain=state.bf_retain,
        af_retain=af_retain,
        provenance=ReportProvenance(
            projection=proj.provenance, dataset=dataset_id, seed=seed
        ),
    )


def split_classes(
    classes: ClassManifest | Sequence[str],
    forget_fraction: float | None = None,
    forget_names: Sequence[str] | None = None,
    seed: int = 0,
) -> ClassManifest:
    """Partition classes into forget/retain sets.

    Either a fraction (seeded shuffle, first ceil(fraction * K) classes
    become the forget set) or an explicit list of class names.  The
    returned manifest keeps the original class order.
    """
    if isinstance(classes, ClassManifest):
        names = list(classes.names)
    else:
        names = [str(n) for n in classes]
    if len(names) < 2:
        raise ValueError("need at least 2 classes to split")
    if (forget_fraction is None) == (forget_names is None):
        raise ValueError("provide exactly one of forget_fraction or forget_names")

    if forget_names is not None:
        missing = [n for n in forget_names if n not in names]
        if missing:
            raise ValueError(f"named class(es) not in manifest: {missing}")
        forget = set(forget_names)
    else:
        if not 0.0 < forget_fraction < 1.0:
            raise ValueError(f"forget_fraction must lie in (0, 1), got {forget_fraction}")
        k = math.ceil(forget_fraction * len(names))
        if k >= len(names):
            raise ValueError(
                f"forget_fraction {forget_fraction} leaves no retain classes"
            )
        order = np.random.default_rng(seed).permutation(len(names))
        forget = {names[i] for i in order[:k]}

    return ClassManifest.from_pairs(
        (name, FORGET if name in forget else RETAIN) for name in names
    )


def sweep(
    dataset: LabeledDataset,
    manifest: ClassManifest,
    class_texts: EmbeddingMatrix,
    axis: str,
    values: Sequence[float],
    fixed: RegularizationConfig | None = None,
    dataset_id: str = "",
    seed: int | None = None,
) -> SweepResult:
    """Evaluate one projection per hyperparameter value.

    The BF accuracies are computed once and shared by every report, so
    the BF columns are constant across the sweep by construction.
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {_AXES}, got {axis!r}")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("sweep needs at least one value")
    if any(v < 0 for v in values):
        raise ValueError("sweep values must be non-negative")
    fixed = fixed or RegularizationConfig()

    texts = class_texts if class_texts.normalized else normalize_columns(class_texts)
    forget_texts, retain_texts = partition_columns(texts, manifest)
    state = _baseline_state(dataset, manifest, class_texts)

    points = []
    for value in sorted(values):
        if axis == AXIS_LAMBDA:
            proj = ccup_matrix(
                forget_texts, retain_texts, RegularizationConfig(lam=value, mu=fixed.mu)
            )
        elif axis == AXIS_MU:
            proj = ccup_matrix(
                forget_texts, retain_texts, RegularizationConfig(lam=fixed.lam, mu=value)
            )
        else:
            proj = partial_projector(forget_texts, alpha=value)
        af_forget, af_retain = _after_accuracies(state, class_texts, proj)
        report = EvaluationReport.from_accuracies(
            bf_forget=state.bf_forget,
            af_forget=af_forget,
            bf_retain=state.bf_retain,
            af_retain=af_retain,
            provenance=ReportProvenance(
                projection=proj.provenance, dataset=dataset_id, seed=seed
            ),
        )
        points.append((value, report))
    return SweepResult(axis=axis, points=tuple(points))


def ablation_grid(
    dataset: LabeledDataset,
    manifest: ClassManifest,
    class_texts: EmbeddingMatrix,
    config: RegularizationConfig | None = None,
    dataset_id: str = "",
    seed: int | None = None,
) -> list[tuple[tuple[str, ...], EvaluationReport]]:
    """Evaluate the C1+C2, C2+C3, and C1+C2+C3 objective variants."""
    config = config or RegularizationConfig()
    texts = class_texts if class_texts.normalized else normalize_columns(class_texts)
    forget_texts, retain_texts = partition_columns(texts, manifest)
    state = _baseline_state(dataset, manifest, class_texts)

    rows = []
    for components in ({"C1", "C2"}, {"C2", "C3"}, {"C1", "C2", "C3"}):
        proj = ablation_matrix(forget_texts, retain_texts, config, components)
        af_forget, af_retain = _after_accuracies(state, class_texts, proj)
        report = EvaluationReport.from_accuracies(
            bf_forget=state.bf_forget,
            af_forget=af_forget,
            bf_retain=state.bf_retain,
            af_retain=af_retain,
            provenance=ReportProvenance(
                projection=proj.provenance, dataset=dataset_id, seed=seed
            ),
        )
        rows.append((tuple(sorted(components)), report))
    return rows


def _format_value(value: float, fraction: bool) -> str:
    if fraction:
        return f"{value / 100.0:.4f}"
    return f"{value:.2f}"


def _report_row(report: EvaluationReport, fraction: bool) -> dict[str, str]:
    prov = report.provenance
    components = ""
    if prov.projection.components is not None:
        components = "+".join(prov.projection.components)
    return {
        "dataset": prov.dataset,
        "method": prov.projection.method,
        "lambda": "" if prov.projection.lam is None else f"{prov.projection.lam:g}",
        "mu": "" if prov.projection.mu is None else f"{prov.projection.mu:g}",
        "components": components,
        "bf_forget": _format_value(report.bf_forget, fraction),
        "af_forget": _format_value(report.af_forget, fraction),
        "bf_retain": _format_value(report.bf_retain, fraction),
        "af_retain": _format_value(report.af_retain, fraction),
        "mia": _format_value(report.mia, fraction),
    }


def reports_to_csv(reports: Sequence[EvaluationReport], fraction: bool = False) -> str:
    """Render reports as a CSV table (accuracies to 2 dp, or 4 dp fractions)."""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(_report_row(report, fraction))
    return out.getvalue()


def reports_to_json(reports: Sequence[EvaluationReport]) -> str:
    """Render reports as JSON at full stored precision (lossless)."""
    return json.dumps([r.to_json_obj() for r in reports], indent=2) + "\n"


def reports_from_json(text: str) -> list[EvaluationReport]:
    return [EvaluationReport.from_json_obj(obj) for obj in json.loads(text)]


def reports_to_table(reports: Sequence[EvaluationReport], fraction: bool = False) -> str:
    """Render reports as an aligned plain-text table."""
    rows = [_report_row(r, fraction) for r in reports]
    widths = {c: len(c) for c in CSV_COLUMNS}
    for row in rows:
        for c in CSV_COLUMNS:
            widths[c] = max(widths[c], len(row[c]))
    lines = ["  ".join(c.ljust(widths[c]) for c in CSV_COLUMNS)]
    lines.append("  ".join("-" * widths[c] for c in CSV_COLUMNS))
    for row in rows:
        lines.append("  ".join(row[c].ljust(widths[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_reports(
    reports: Sequence[EvaluationReport],
    path: str | Path,
    fmt: str = "csv",
    fraction: bool = False,
) -> None:
    if fmt == "csv":
        text = reports_to_csv(reports, fraction)
    elif fmt == "json":
        text = reports_to_json(reports)
    elif fmt == "table":
        text = reports_to_table(reports, fraction)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text)

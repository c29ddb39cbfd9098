"""End-to-end screening runs over expression matrices on disk.

The recommended large-scale flow has three stages: a compressed screening
pass at a small sampling rate to cut the problem down to a few thousand
variables, a full (rate 1) screening pass on the survivors, and a bootstrap
stability selection to turn the refined scores into per-variable flags.
This module owns file ingestion, the preprocessing applied to raw
expression data, the staged orchestration, and the report files.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .correlation import ExpressionMatrix, write_differential_coo
from .rng import derive_seed
from .screening import (
    DEFAULT_K,
    check_same_variables,
    rho_lower_bounds,
    screen,
    write_scores_csv,
)
from .stability import stability_select
from .tuning import tune_rank

__all__ = [
    "RunConfig",
    "ScreeningReport",
    "load_matrix",
    "preprocess",
    "run_pipeline",
    "default_rho",
]

# Seed-stream tags for the pipeline stages.
STAGE1 = 11
STAGE2 = 12
STAGE3 = 13


def _delimiter_for(path, delimiter: str | None) -> str:
    if delimiter in ("comma", ","):
        return ","
    if delimiter in ("tab", "\t"):
        return "\t"
    if delimiter not in (None, "auto"):
        raise ValueError(f"unknown delimiter {delimiter!r}; use 'comma' or 'tab'")
    suffix = Path(path).suffix.lower()
    return "\t" if suffix in (".tsv", ".tab", ".txt") else ","


def load_matrix(path, delimiter: str | None = None, group_label: str | None = None) -> ExpressionMatrix:
    """Parse a samples-by-variables CSV/TSV with a header of variable names.

    The file is read in two passes so the values land directly in one
    n-by-p array: peak memory is the matrix itself plus a single line
    buffer. Errors carry the file line and column of the offending field.
    """
    path = Path(path)
    sep = _delimiter_for(path, delimiter)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise ValueError(f"{path}: empty file or blank header")
        names = [c.strip() for c in header.rstrip("\r\n").split(sep)]
        seen = set()
        for name in names:
            if name in seen:
                raise ValueError(f"{path}: duplicate variable name {name!r}")
            seen.add(name)
        n_rows = sum(1 for line in fh if line.strip())
    p = len(names)
    if n_rows == 0:
        raise ValueError(f"{path}: no data rows")

    values = np.empty((n_rows, p))
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        r = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split(sep)
            if len(fields) != p:
                raise ValueError(
                    f"{path}:{lineno}: expected {p} fields, found {len(fields)}"
                )
            try:
                values[r] = np.asarray(fields, dtype=np.float64)
            except ValueError:
                col = _first_bad_field(fields)
                raise ValueError(
                    f"{path}:{lineno}: column {col + 1} ({names[col]}): "
                    f"cannot parse {fields[col]!r} as a number"
                ) from None
            r += 1

    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        r0, c0 = bad[0]
        raise ValueError(
            f"{path}: non-finite value at data row {r0 + 1} (file line {r0 + 2}), "
            f"column {c0 + 1} ({names[c0]})"
        )
    return ExpressionMatrix(
        values=values,
        variable_names=names,
        group_label=group_label or path.stem,
    )


def _first_bad_field(fields) -> int:
    for c, raw in enumerate(fields):
        try:
            float(raw)
        except ValueError:
            return c
    return 0


def preprocess(
    x1: ExpressionMatrix,
    x2: ExpressionMatrix,
    median_floor: float = 0.25,
    log_transform: bool = True,
) -> tuple[ExpressionMatrix, ExpressionMatrix, list[str]]:
    """Drop weakly expressed variables, then optionally log-transform.

    A variable is dropped when its median raw value falls below the floor
    in either group. The transform is ``log2(value + 1)`` applied after
    filtering.
    """
    check_same_variables(x1, x2)
    med1 = np.median(x1.values, axis=0)
    med2 = np.median(x2.values, axis=0)
    keep = (med1 >= median_floor) & (med2 >= median_floor)
    if not keep.any():
        raise ValueError(
            f"median filter at {median_floor:g} removed every variable"
        )
    kept_names = [n for n, k in zip(x1.variable_names, keep) if k]

    def cut(x: ExpressionMatrix) -> ExpressionMatrix:
        vals = x.values[:, keep]
        if log_transform:
            if vals.min() < 0:
                raise ValueError(
                    f"group {x.group_label!r} has negative values; "
                    "log transform expects non-negative expression data"
                )
            vals = np.log2(vals + 1.0)
        return ExpressionMatrix(vals, kept_names, x.group_label)

    return cut(x1), cut(x2), kept_names


def default_rho(n1: int, n2: int, p: int, tau: float = 0.1) -> float:
    """Largest of the two sampling-rate lower bounds, capped so a holdout
    of proportion ``tau`` still fits."""
    info_bound, coverage_bound = rho_lower_bounds(n1, n2, p)
    return float(min(max(info_bound, coverage_bound), 1.0 / (1.0 + tau)))


@dataclass
class RunConfig:
    """Everything one end-to-end run needs; all randomness flows from seed."""

    x1_path: str
    x2_path: str
    out_dir: str
    stat_kind: str = "spearman"
    rho: float | None = None
    tau: float = 0.1
    k: int | None = None
    k_l: int = 2
    k_u: int | None = None
    n_boot: int = 100
    median_floor: float = 0.25
    log_transform: bool = True
    top_n: int = 2000
    seed: int = 0
    threads: int = 1
    delimiter: str | None = None
    dump_differential: bool = False


@dataclass
class ScreeningReport:
    """Per-variable results across stages plus run metadata.

    Variables removed before screening keep their row with empty score
    fields; ``filtered_at`` records where each variable left the run.
    """

    names: list[str]
    stage1_score: np.ndarray
    stage2_score: np.ndarray
    exceedance: np.ndarray
    selected: np.ndarray
    filtered_at: list[str]
    metadata: dict = field(default_factory=dict)

    def selected_names(self) -> list[str]:
        return [n for n, s in zip(self.names, self.selected) if s]

    def write_csv(self, path) -> None:
        def fmt(x) -> str:
            return "" if np.isnan(x) else f"{x:.10g}"

        with open(path, "w", encoding="utf-8") as fh:
            fh.write("variable,stage1_score,stage2_score,exceedance,selected,filtered_at\n")
            for idx, name in enumerate(self.names):
                fh.write(
                    f"{name},{fmt(self.stage1_score[idx])},"
                    f"{fmt(self.stage2_score[idx])},{fmt(self.exceedance[idx])},"
                    f"{int(self.selected[idx])},{self.filtered_at[idx]}\n"
                )

    def write_metadata(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_pipeline(config: RunConfig) -> ScreeningReport:
    """Run ingest, preprocess, and the three screening stages; write reports.

    Stage 1 screens at the configured (or default) sampling rate, tuning
    the rank unless one was given, and keeps the ``top_n`` highest-scoring
    variables. Stage 2 re-screens the survivors at rate 1. Stage 3
    calibrates selection with the bootstrap null. Partial outputs are
    flushed as stages complete so a failing stage leaves the earlier
    artifacts for diagnosis.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    meta: dict = {"config": {k: v for k, v in vars(config).items()}}

    t0 = time.perf_counter()
    x1 = load_matrix(config.x1_path, config.delimiter, group_label="group1")
    x2 = load_matrix(config.x2_path, config.delimiter, group_label="group2")
    check_same_variables(x1, x2)
    all_names = list(x1.variable_names)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    x1p, x2p, kept_names = preprocess(
        x1, x2, median_floor=config.median_floor, log_transform=config.log_transform
    )
    timings["preprocess"] = time.perf_counter() - t0
    n1, n2, p = x1p.n_samples, x2p.n_samples, x1p.n_variables

    info_bound, coverage_bound = rho_lower_bounds(n1, n2, p)
    rho = config.rho if config.rho is not None else default_rho(n1, n2, p, config.tau)
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    meta.update(
        {
            "n1": n1,
            "n2": n2,
            "p_input": len(all_names),
            "p_after_filter": p,
            "rho_effective": rho,
            "rho_bound_information": info_bound,
            "rho_bound_coverage": coverage_bound,
        }
    )

    sink = None
    if config.dump_differential:
        sink = lambda sd: write_differential_coo(out / "differential.txt", sd)

    # Stage 1: compressed screening (with rank tuning unless k was fixed).
    t0 = time.perf_counter()
    stage1_seed = derive_seed(config.seed, STAGE1)
    tuning = None
    if config.k is not None:
        k_hat = config.k
        scores1 = screen(
            x1p, x2p, rho=rho, k=k_hat, stat_kind=config.stat_kind,
            seed=stage1_seed, threads=config.threads, matrix_sink=sink,
        )
    else:
        if (1.0 + config.tau) * rho > 1.0:
            raise ValueError(
                f"(1 + tau) * rho = {(1 + config.tau) * rho:.6g} > 1 leaves no "
                "room for a validation holdout; lower rho or tau, or fix k"
            )
        tuning, scores1 = tune_rank(
            x1p, x2p, rho=rho, tau=config.tau, k_l=config.k_l, k_u=config.k_u,
            stat_kind=config.stat_kind, seed=stage1_seed, threads=config.threads,
            matrix_sink=sink,
        )
        k_hat = tuning.k_hat
        tuning.to_json(out / "tuning.json")
    timings["stage1_screen"] = time.perf_counter() - t0
    meta["k_hat"] = k_hat
    write_scores_csv(out / "scores_stage1.csv", scores1)

    # Stage 1 reduction: keep the top_n highest scores.
    if config.top_n < p:
        order = np.argsort(-scores1.scores, kind="stable")
        keep_idx = np.sort(order[: config.top_n])
    else:
        keep_idx = np.arange(p)
    reduced_names = [kept_names[i] for i in keep_idx]
    x1r = ExpressionMatrix(x1p.values[:, keep_idx], reduced_names, "group1")
    x2r = ExpressionMatrix(x2p.values[:, keep_idx], reduced_names, "group2")
    meta["p_stage2"] = len(reduced_names)

    # Stage 2: full screening (rate 1) on the reduced set.
    t0 = time.perf_counter()
    scores2 = screen(
        x1r, x2r, rho=1.0, k=k_hat, stat_kind=config.stat_kind,
        seed=derive_seed(config.seed, STAGE2), threads=config.threads,
    )
    timings["stage2_screen"] = time.perf_counter() - t0

    # Stage 3: bootstrap stability selection on the reduced set.
    exceed = np.full(len(reduced_names), np.nan)
    selected_reduced = np.zeros(len(reduced_names), dtype=bool)
    if config.n_boot > 0:
        t0 = time.perf_counter()
        stab = stability_select(
            x1r, x2r, n_boot=config.n_boot, k=k_hat, rho=1.0,
            stat_kind=config.stat_kind, seed=derive_seed(config.seed, STAGE3),
            threads=config.threads, observed=scores2,
        )
        exceed = stab.exceedance
        selected_reduced = stab.selected
        timings["stage3_stability"] = time.perf_counter() - t0
    else:
        # Without the bootstrap, "selected" means surviving stage 1.
        selected_reduced[:] = True

    # Assemble the report over every input variable.
    name_pos = {name: i for i, name in enumerate(all_names)}
    n_all = len(all_names)
    stage1_full = np.full(n_all, np.nan)
    stage2_full = np.full(n_all, np.nan)
    exceed_full = np.full(n_all, np.nan)
    selected_full = np.zeros(n_all, dtype=bool)
    filtered_at = ["median_filter"] * n_all
    for i, name in enumerate(kept_names):
        stage1_full[name_pos[name]] = scores1.scores[i]
        filtered_at[name_pos[name]] = "stage1"
    for i, name in enumerate(reduced_names):
        pos = name_pos[name]
        stage2_full[pos] = scores2.scores[i]
        exceed_full[pos] = exceed[i]
        selected_full[pos] = selected_reduced[i]
        filtered_at[pos] = ""

    meta["n_selected"] = int(selected_full.sum())
    meta["degenerate_variables"] = int(
        np.sum(_degenerate_mask(x1p, x2p, config.stat_kind))
    )
    meta["timings_seconds"] = {k: round(v, 6) for k, v in timings.items()}
    meta["stat_kind"] = config.stat_kind
    meta["seed"] = config.seed

    report = ScreeningReport(
        names=all_names,
        stage1_score=stage1_full,
        stage2_score=stage2_full,
        exceedance=exceed_full,
        selected=selected_full,
        filtered_at=filtered_at,
        metadata=meta,
    )
    report.write_csv(out / "report.csv")
    report.write_metadata(out / "metadata.json")
    return report


def _degenerate_mask(x1p, x2p, stat_kind):
    from .correlation import prepare_group

    g1 = prepare_group(x1p, stat_kind)
    g2 = prepare_group(x2p, stat_kind)
    return g1.degenerate | g2.degenerate

"""Experiment grids, traces, test error and performance profiles.

An experiment file is a dotenv-style key-value file:

    DATASETS=          ';'-separated entries, each ``<path>``, ``<name>=<path>`` or
                       ``<name>=gaussian:<n>:<count>:<separation>[:<seed>]``
    LABELED_FRACTION=  fraction of training samples that keep their label (default 0.1)
    FOLDS=             number of cross-validation folds (default 10)
    HOLDOUT=           ``kfold`` or ``fixed_split:<train_count>``
    SEED=              seed for splits, masking and initial points (default 0)
    C1_EXPONENTS=      comma-separated i with C1 = 10^i (default -1,0,1,2)
    C2_EXPONENTS=      comma-separated j (default 0,1,2)
    C2_RULE=           ``scaled`` (C1 10^-j), ``power`` (C1^-j) or ``absolute`` (10^-j)
    VARIANTS=          comma-separated from raw, dc, smooth, convexified, strongly_convex, subgradient
    MAX_ITERS=         iteration limit for every solver
    STEP_POLICY=       ``unit``, ``fixed:<alpha>`` or ``backtracking[:<tau>[:<shrink>[:<tries>]]]``
    INDEX_RULE=        ``cyclic`` or ``uniform_random``
    BETA=, SMOOTHING_FLAVOR=, SCALE_FEATURES=, BASELINE_STEP=, WORKERS=, OUTPUT_DIR=,
    MU0=, MU_FLOOR=, KAPPA=, SIGMA=, SKIP_THRESHOLD=, INIT_BOX=

Outputs land in OUTPUT_DIR: ``traces/`` (one file per cell), ``summary.csv``, ``timings.csv``,
``selected.csv`` and, when cells fail, ``errors.csv``.
"""
import io
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Mapping, Optional

import logfire
import numpy as np
import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

from .baseline import run_subgradient
from .data import (
    densify, fixed_split, generate_gaussian_pair, kfold_split, mask_labels, max_index, min_max_scale,
    parse_sparse_file,
)
from .errors import ConfigurationError, ExperimentError
from .models import (
    SUBGRADIENT, BaselineStep, CellError, Dataset, DatasetSource, ExperimentConfig, ExperimentReport,
    GaussianSpec, HoldoutKind, IterationRecord, ModelPoint, ObjectiveConfig, ProfileTable, RawSample, RunTrace,
    StepPolicy, SummaryRow, Variant,
)
from .solver import solve_tsvm
from .utils import atomic_write_text, parse_int_list, parse_str_list, safe_name

TRACE_COLUMNS = ['iter', 'governing_obj', 'eq2_obj', 'step', 'skipped', 'index', 'mu_min', 'mu_max']
SUMMARY_COLUMNS = list(SummaryRow.model_fields)
FLOAT_FORMAT = '%.17g'
PROFILE_TAUS = [round(1.0 + 0.01 * k, 2) for k in range(101)]

CONFIG_KEYS = {
    'DATASETS', 'LABELED_FRACTION', 'FOLDS', 'HOLDOUT', 'SEED', 'C1_EXPONENTS', 'C2_EXPONENTS', 'C2_RULE',
    'VARIANTS', 'MAX_ITERS', 'STEP_POLICY', 'INDEX_RULE', 'BETA', 'SMOOTHING_FLAVOR', 'SCALE_FEATURES',
    'BASELINE_STEP', 'WORKERS', 'OUTPUT_DIR', 'MU0', 'KAPPA', 'SIGMA', 'SKIP_THRESHOLD', 'INIT_BOX',
    'MU_FLOOR',
}


def _parse_dataset(entry: str) -> DatasetSource:
    name, eq, source = entry.partition('=')
    if not eq:
        source, name = entry, Path(entry).stem
    name, source = name.strip(), source.strip()
    if source.startswith('gaussian:'):
        fields = source.split(':')[1:]
        if len(fields) not in (3, 4):
            raise ValueError(f'expected gaussian:<n>:<count>:<separation>[:<seed>], got {source!r}')
        spec = GaussianSpec(
            n=int(fields[0]), count=int(fields[1]), separation=float(fields[2]),
            seed=int(fields[3]) if len(fields) == 4 else 0)
        return DatasetSource(name=name, generator=spec)
    return DatasetSource(name=name, path=source)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off', ''):
        return False
    raise ValueError(f'not a boolean: {text!r}')


def config_from_values(values: Mapping[str, Optional[str]]) -> ExperimentConfig:
    unknown = set(values) - CONFIG_KEYS
    if unknown:
        raise ConfigurationError(f'unknown configuration keys: {", ".join(sorted(unknown))}')
    values = {k: v for k, v in values.items() if v is not None and v.strip() != ''}
    try:
        split, solver, baseline, top = {}, {}, {}, {}
        if 'DATASETS' in values:
            top['datasets'] = [_parse_dataset(e) for e in values['DATASETS'].split(';') if e.strip()]
        if 'LABELED_FRACTION' in values:
            split['labeled_fraction'] = float(values['LABELED_FRACTION'])
        if 'FOLDS' in values:
            split['fold_count'] = int(values['FOLDS'])
        if 'HOLDOUT' in values:
            kind, _, train_count = values['HOLDOUT'].partition(':')
            split['holdout'] = HoldoutKind(kind.strip())
            if train_count:
                split['train_count'] = int(train_count)
        if 'SEED' in values:
            seed = int(values['SEED'])
            split['seed'] = solver['seed'] = baseline['seed'] = seed
        if 'MAX_ITERS' in values:
            solver['max_iters'] = baseline['max_iters'] = int(values['MAX_ITERS'])
        if 'INIT_BOX' in values:
            solver['init_box'] = baseline['init_box'] = float(values['INIT_BOX'])
        if 'STEP_POLICY' in values:
            solver['step_policy'] = StepPolicy.parse(values['STEP_POLICY'])
        if 'BASELINE_STEP' in values:
            baseline['step_rule'] = BaselineStep.parse(values['BASELINE_STEP'])
        for key, field, cast in (
                ('INDEX_RULE', 'index_rule', str), ('MU0', 'mu0', float), ('KAPPA', 'kappa', float),
                ('SIGMA', 'sigma', float), ('SKIP_THRESHOLD', 'c', float), ('MU_FLOOR', 'mu_floor', float)):
            if key in values:
                solver[field] = cast(values[key])
        if 'C1_EXPONENTS' in values:
            top['c1_exponents'] = parse_int_list(values['C1_EXPONENTS'])
        if 'C2_EXPONENTS' in values:
            top['c2_exponents'] = parse_int_list(values['C2_EXPONENTS'])
        if 'VARIANTS' in values:
            top['variants'] = parse_str_list(values['VARIANTS'])
        for key, field, cast in (
                ('C2_RULE', 'c2_rule', str), ('BETA', 'beta', float), ('SMOOTHING_FLAVOR', 'smoothing_flavor', str),
                ('SCALE_FEATURES', 'scale_features', _parse_bool), ('WORKERS', 'workers', int),
                ('OUTPUT_DIR', 'output_dir', str)):
            if key in values:
                top[field] = cast(values[key])
        cfg = ExperimentConfig(split=split, solver=solver, baseline=baseline, **top)
    except (ValueError, ValidationError) as exc:
        raise ConfigurationError(f'invalid experiment configuration: {exc}') from exc

    if not cfg.datasets:
        raise ConfigurationError('no datasets configured')
    if not cfg.c_pairs():
        raise ConfigurationError('the C1/C2 grid is empty')
    if not cfg.variants:
        raise ConfigurationError('no variants configured')
    return cfg


def load_config(path: Optional[str | Path], overrides: Optional[Mapping[str, Optional[str]]] = None) -> ExperimentConfig:
    """Reads an experiment file; ``overrides`` (same keys) take precedence over its values."""
    values: dict[str, Optional[str]] = {}
    if path is not None:
        if not Path(path).is_file():
            raise ConfigurationError(f'configuration file {path} does not exist')
        values.update(dotenv_values(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_values(values)


def test_error(model: ModelPoint, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples with sign(w^T x + b) != y, counting sign(0) as +1."""
    if labels.shape[0] == 0:
        raise ValueError('test set is empty')
    margins = features @ np.asarray(model.w, dtype=float) + model.b
    predicted = np.where(margins >= 0.0, 1.0, -1.0)
    return float(np.mean(predicted != labels))


def serialize_trace(trace: RunTrace) -> str:
    frame = pd.DataFrame([r.model_dump() for r in trace.records], columns=TRACE_COLUMNS)
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def parse_trace(text: str) -> list[IterationRecord]:
    frame = pd.read_csv(io.StringIO(text), float_precision='round_trip')
    if list(frame.columns) != TRACE_COLUMNS:
        raise ValueError(f'unexpected trace columns {list(frame.columns)}')
    return [IterationRecord(**row) for row in frame.to_dict(orient='records')]


def write_trace(trace: RunTrace, path: str | Path) -> None:
    atomic_write_text(path, serialize_trace(trace))


def _problem_key(dataset: str, fold: int, c1: float, c2: float) -> str:
    return f'{dataset}|fold={fold}|C1={c1:g}|C2={c2:g}'


def performance_profile(values: Mapping[str, Mapping[str, float]], taus: Iterable[float] = PROFILE_TAUS) -> ProfileTable:
    """Relative ratios t = 1 + (f - best) / (worst - best) per problem and their cumulative curves.

    ``values`` maps problem -> solver -> final objective. A problem whose solvers all tie gets
    t = 1 everywhere and is listed as degenerate.
    """
    taus = list(taus)
    ratios: dict[str, dict[str, float]] = {}
    degenerate = []
    for problem, by_solver in values.items():
        finite = {s: float(f) for s, f in by_solver.items() if np.isfinite(f)}
        if len(finite) < 2:
            raise ValueError(f'problem {problem} has fewer than two solvers with finite values')
        best, worst = min(finite.values()), max(finite.values())
        if worst == best:
            degenerate.append(problem)
            ratios[problem] = {s: 1.0 for s in finite}
            continue
        ratios[problem] = {s: 1.0 + (f - best) / (worst - best) for s, f in finite.items()}
    if degenerate:
        logfire.warn('{count} degenerate profile problems', count=len(degenerate), problems=degenerate)

    solvers = sorted({s for by_solver in ratios.values() for s in by_solver})
    curves = {}
    for solver in solvers:
        ts = np.array([r[solver] for r in ratios.values() if solver in r])
        curves[solver] = [float(np.mean(ts <= tau + 1e-12)) for tau in taus]
    return ProfileTable(ratios=ratios, taus=taus, curves=curves, degenerate_problems=degenerate)


def profile_summary(summary: pd.DataFrame) -> ProfileTable:
    """Profiles the final objectives in a summary table, one problem per (dataset, fold, C1, C2)."""
    values: dict[str, dict[str, float]] = {}
    for row in summary.itertuples(index=False):
        if not np.isfinite(row.final_objective):
            continue
        key = _problem_key(row.dataset, int(row.fold), float(row.C1), float(row.C2))
        values.setdefault(key, {})[row.variant] = float(row.final_objective)
    dropped = [k for k, v in values.items() if len(v) < 2]
    if dropped:
        logfire.warn('dropping {count} profile problems with fewer than two solvers', count=len(dropped))
    values = {k: v for k, v in values.items() if len(v) >= 2}
    if not values:
        raise ValueError('no problem has results from two or more solvers')
    return performance_profile(values)


def write_profile(table: ProfileTable, output_dir: str | Path) -> None:
    output_dir = Path(output_dir)
    rows = [{'problem': p, 'solver': s, 't': t} for p, by_solver in table.ratios.items() for s, t in by_solver.items()]
    ratios = pd.DataFrame(rows, columns=['problem', 'solver', 't'])
    atomic_write_text(output_dir / 'ratios.csv', ratios.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))
    profile = pd.DataFrame({'tau': table.taus, **table.curves})
    atomic_write_text(output_dir / 'profile.csv', profile.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n'))


def _load_samples(source: DatasetSource) -> list[RawSample]:
    if source.generator is not None:
        g = source.generator
        return generate_gaussian_pair(g.n, g.count, g.separation, g.seed)
    with open(source.path, encoding='utf-8', newline=None) as f:
        return parse_sparse_file(f)


def _splits(cfg: ExperimentConfig, count: int) -> list[tuple[np.ndarray, np.ndarray]]:
    spec = cfg.split
    if spec.holdout == HoldoutKind.FIXED_SPLIT:
        return [fixed_split(count, spec.train_count, spec.seed)]
    return kfold_split(range(count), spec.fold_count, spec.seed)


class _Cell:
    """One (dataset, fold, C1, C2, variant) run with everything it needs to execute in a worker."""

    def __init__(self, dataset: str, fold: int, c1: float, c2: float, variant: str, train: Dataset,
                 test_features: np.ndarray, test_labels: np.ndarray, cfg: ExperimentConfig):
        self.dataset, self.fold, self.c1, self.c2, self.variant = dataset, fold, c1, c2, variant
        self.train = train
        self.test_features = test_features
        self.test_labels = test_labels
        self.cfg = cfg

    @property
    def trace_path(self) -> Path:
        name = safe_name(f'{self.dataset}_fold{self.fold}_C1={self.c1:g}_C2={self.c2:g}_{self.variant}')
        return Path(self.cfg.output_dir) / 'traces' / f'{name}.csv'


def _run_cell(cell: _Cell) -> tuple[Optional[SummaryRow], float, Optional[CellError]]:
    cfg = cell.cfg
    obj_cfg = ObjectiveConfig(C1=cell.c1, C2=cell.c2, beta=cfg.beta, smoothing_flavor=cfg.smoothing_flavor)
    with logfire.span('experiment cell {dataset} fold {fold} {variant}', dataset=cell.dataset, fold=cell.fold,
                      variant=cell.variant, C1=cell.c1, C2=cell.c2):
        try:
            if cell.variant == SUBGRADIENT:
                trace = run_subgradient(cell.train, obj_cfg, cfg.baseline)
            else:
                solver_cfg = cfg.solver.model_copy(update={'variant': Variant(cell.variant)})
                trace = solve_tsvm(cell.train, solver_cfg, obj_cfg)
            write_trace(trace, cell.trace_path)
            row = SummaryRow(
                dataset=cell.dataset, fold=cell.fold, C1=cell.c1, C2=cell.c2, variant=cell.variant,
                final_objective=trace.final_objective,
                test_error=test_error(trace.final, cell.test_features, cell.test_labels),
                iterations=len(trace.records), skipped=trace.skipped_updates,
                gradient_evaluations=trace.gradient_evaluations)
            return row, trace.wall_time, None
        except Exception as exc:
            error = ExperimentError(cell.dataset, cell.fold, cell.variant, str(exc), (cell.c1, cell.c2))
            logfire.warn('cell failed: {error}', error=str(error))
            return None, 0.0, CellError(
                dataset=cell.dataset, fold=cell.fold, C1=cell.c1, C2=cell.c2, variant=cell.variant,
                message=f'{type(exc).__name__}: {exc}')


def _cells(cfg: ExperimentConfig) -> list[_Cell]:
    cells = []
    for source in cfg.datasets:
        try:
            samples = _load_samples(source)
            if any(s.label is None for s in samples):
                raise ValueError('experiment datasets must be fully labeled')
            n = max(max_index(samples), 1)
            splits = _splits(cfg, len(samples))
        except Exception as exc:
            raise ExperimentError(source.name, -1, '*', f'{type(exc).__name__}: {exc}') from exc
        for fold, (train_idx, test_idx) in enumerate(splits):
            try:
                train = mask_labels([samples[i] for i in train_idx], cfg.split, n)
            except Exception as exc:
                raise ExperimentError(source.name, fold, '*', f'{type(exc).__name__}: {exc}') from exc
            test_features, test_labels = densify([samples[i] for i in test_idx], n)
            if cfg.scale_features:
                train_features, test_features = min_max_scale(train.features, test_features)
                train = Dataset(features=train_features, labels=train.labels)
            for c1, c2 in cfg.c_pairs():
                for variant in cfg.variants:
                    cells.append(_Cell(source.name, fold, c1, c2, variant, train, test_features, test_labels, cfg))
    return cells


def _select(summary: pd.DataFrame) -> pd.DataFrame:
    """Per dataset and variant, the C-pair with the lowest mean test error over folds."""
    if summary.empty:
        return pd.DataFrame(columns=['dataset', 'variant', 'C1', 'C2', 'mean_test_error'])
    means = (summary.groupby(['dataset', 'variant', 'C1', 'C2'], sort=False)['test_error']
             .mean().rename('mean_test_error').reset_index())
    best = means.loc[means.groupby(['dataset', 'variant'], sort=False)['mean_test_error'].idxmin()]
    return best.reset_index(drop=True)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    output_dir = Path(cfg.output_dir)
    with logfire.span('experiment', datasets=[d.name for d in cfg.datasets], variants=cfg.variants,
                      workers=cfg.workers):
        cells = _cells(cfg)
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_run_cell, cells))
        else:
            results = [_run_cell(cell) for cell in cells]

        rows = [row for row, _, _ in results if row is not None]
        errors = [error for _, _, error in results if error is not None]
        timings = [
            {'dataset': c.dataset, 'fold': c.fold, 'C1': c.c1, 'C2': c.c2, 'variant': c.variant, 'wall_time': t}
            for c, (row, t, _) in zip(cells, results) if row is not None
        ]

        def to_csv(frame: pd.DataFrame) -> str:
            return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')

        summary = pd.DataFrame([r.model_dump() for r in rows], columns=SUMMARY_COLUMNS)
        atomic_write_text(output_dir / 'summary.csv', to_csv(summary))
        atomic_write_text(output_dir / 'timings.csv', to_csv(pd.DataFrame(
            timings, columns=['dataset', 'fold', 'C1', 'C2', 'variant', 'wall_time'])))
        atomic_write_text(output_dir / 'selected.csv', to_csv(_select(summary)))
        if errors:
            atomic_write_text(output_dir / 'errors.csv', to_csv(pd.DataFrame(
                [e.model_dump() for e in errors], columns=list(CellError.model_fields))))
            logfire.warn('{failed} of {total} cells failed', failed=len(errors), total=len(cells))
        logfire.info('experiment finished: {ok} cells written to {output_dir}', ok=len(rows), output_dir=str(output_dir))
    return ExperimentReport(output_dir=str(output_dir), summary=rows, errors=errors)

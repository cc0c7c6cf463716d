"""
Experiment Runner

Runs every method under every condition for several seeds and reports the
median clustering accuracy per cell. Conditions are outlier fractions on
synthetic or CSV sources, or noise mixtures at a given SNR on WAV corpora.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from tqdm import tqdm

from clustering.soft_dbscan import maintain
from core.dataset import Dataset, clustering_accuracy, load_csv
from ensemble.consensus import BASE_METHODS, EnsembleConfig, fit_base, mlncf, rcfm
from speech.frontend import MfccConfig, extract_features, read_wav
from utils.config import Config
from utils.errors import DataError, RcfmError, StageError
from utils.logger import RunLogger, get_logger

from .report import ReportTable, save_table
from .synthetic import BlobSpec, inject_outliers

logger = get_logger(__name__)

METHODS: Tuple[str, ...] = BASE_METHODS + ('mlncf', 'rcfm')
SOURCE_TYPES = ('synthetic', 'csv', 'wav')

EXPERIMENT_SCHEMA: Dict[str, Any] = {
    'type': 'object',
    'required': ['experiment'],
    'properties': {
        'experiment': {
            'type': 'object',
            'required': ['source', 'conditions', 'methods'],
            'properties': {
                'name': {'type': 'string'},
                'source': {
                    'type': 'object',
                    'required': ['type'],
                    'properties': {
                        'type': {'enum': list(SOURCE_TYPES)},
                        'path': {'type': 'string'},
                        'speech_dir': {'type': 'string'},
                        'n': {'type': 'integer', 'minimum': 1},
                        'k': {'type': 'integer', 'minimum': 1},
                        'dim': {'type': 'integer', 'minimum': 1},
                        'sigma': {'type': 'number', 'minimum': 0},
                        'separation': {'type': 'number', 'minimum': 0},
                        'duplicate_frac': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
                    },
                },
                'conditions': {
                    'type': 'array',
                    'minItems': 1,
                    'items': {
                        'type': 'object',
                        'required': ['name'],
                        'properties': {
                            'name': {'type': 'string', 'minLength': 1},
                            'outlier_frac': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
                            'noise': {'type': 'string'},
                            'snr_db': {'type': 'number'},
                        },
                    },
                },
                'methods': {
                    'type': 'array',
                    'minItems': 1,
                    'items': {'enum': list(METHODS)},
                },
                'seeds': {'type': 'array', 'minItems': 1, 'items': {'type': 'integer'}},
                'test_fraction': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
                'maintain_baselines': {'type': 'boolean'},
                'output': {'type': 'string'},
            },
        },
    },
}


@dataclass(frozen=True)
class Condition:
    """One column of the report."""
    name: str
    outlier_frac: float = 0.0
    noise: Optional[str] = None
    snr_db: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Sources, conditions, methods and seeds of one experiment."""
    name: str
    source_type: str
    conditions: Tuple[Condition, ...]
    methods: Tuple[str, ...]
    ensemble: EnsembleConfig
    seeds: Tuple[int, ...] = (1, 2, 3)
    test_fraction: float = 0.3
    maintain_baselines: bool = False
    blobs: Optional[BlobSpec] = None
    csv_path: Optional[str] = None
    speech_dir: Optional[str] = None
    mfcc: MfccConfig = MfccConfig()
    output: Optional[str] = None

    def __post_init__(self):
        if not self.conditions:
            raise DataError("experiment needs at least one condition")
        if not self.methods:
            raise DataError("experiment needs at least one method")
        names = [c.name for c in self.conditions]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate condition names {names}")
        for c in self.conditions:
            if (c.noise is None) != (c.snr_db is None):
                raise DataError(f"condition '{c.name}': noise and snr_db go together")
            if c.noise is not None and self.source_type != 'wav':
                raise DataError(f"condition '{c.name}': noise mixing needs a wav source")
        if self.maintain_baselines and self.ensemble.maintenance is None:
            raise DataError("maintain_baselines needs an enabled maintenance section")
        if 'rcfm' in self.methods and self.ensemble.maintenance is None:
            raise DataError("rcfm needs an enabled maintenance section")

    @classmethod
    def from_config(cls, config: Config) -> 'ExperimentConfig':
        """Validate a Config against the experiment schema and build the experiment."""
        config.validate(EXPERIMENT_SCHEMA)
        source = config.get_section('experiment').get('source', {})
        source_type = source['type']
        ensemble = EnsembleConfig.from_config(config)

        blobs = None
        if source_type == 'synthetic':
            blobs = BlobSpec(
                n=int(source.get('n', 300)),
                k=int(source.get('k', ensemble.k)),
                dim=int(source.get('dim', 2)),
                sigma=float(source.get('sigma', 0.5)),
                separation=float(source.get('separation', 6.0)),
                duplicate_frac=float(source.get('duplicate_frac', 0.0)),
            )
        elif source_type == 'csv' and not source.get('path'):
            raise DataError("csv source needs 'path'")
        elif source_type == 'wav' and not source.get('speech_dir'):
            raise DataError("wav source needs 'speech_dir'")

        conditions = tuple(
            Condition(
                name=str(c['name']),
                outlier_frac=float(c.get('outlier_frac', 0.0)),
                noise=c.get('noise'),
                snr_db=None if c.get('snr_db') is None else float(c['snr_db']),
            )
            for c in config.get('experiment.conditions')
        )
        return cls(
            name=str(config.get('experiment.name', 'experiment')),
            source_type=source_type,
            conditions=conditions,
            methods=tuple(config.get('experiment.methods')),
            ensemble=ensemble,
            seeds=tuple(int(s) for s in config.get('experiment.seeds', [1, 2, 3])),
            test_fraction=float(config.get('experiment.test_fraction', 0.3)),
            maintain_baselines=bool(config.get('experiment.maintain_baselines', False)),
            blobs=blobs,
            csv_path=source.get('path'),
            speech_dir=source.get('speech_dir'),
            mfcc=MfccConfig.from_config(config),
            output=config.get('experiment.output'),
        )

    def check_inputs(self):
        """Every referenced file or directory must exist."""
        missing = []
        if self.source_type == 'csv' and not Path(self.csv_path).is_file():
            missing.append(self.csv_path)
        if self.source_type == 'wav' and not Path(self.speech_dir).is_dir():
            missing.append(self.speech_dir)
        missing += [c.noise for c in self.conditions if c.noise and not Path(c.noise).is_file()]
        if missing:
            raise DataError(f"missing inputs: {missing}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'source_type': self.source_type,
            'blobs': None if self.blobs is None else vars(self.blobs).copy(),
            'csv_path': self.csv_path,
            'speech_dir': self.speech_dir,
            'conditions': [vars(c).copy() for c in self.conditions],
            'methods': list(self.methods),
            'seeds': list(self.seeds),
            'test_fraction': self.test_fraction,
            'maintain_baselines': self.maintain_baselines,
            'ensemble': self.ensemble.to_dict(),
        }


def load_experiment(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate an experiment YAML file."""
    return ExperimentConfig.from_config(Config(str(path), strict=True))


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def build_condition_data(cfg: ExperimentConfig, condition_index: int, seed: int,
                         base: Optional[Dataset] = None) -> Dataset:
    """Dataset of one condition for one seed."""
    condition = cfg.conditions[condition_index]
    data_seed = derive_seed(seed, condition_index)
    if cfg.source_type == 'synthetic':
        return cfg.blobs.generate(condition.outlier_frac, data_seed)

    if cfg.source_type == 'csv':
        data = base if base is not None else load_csv(cfg.csv_path)
    elif condition.noise is not None:
        data = extract_features(cfg.speech_dir, cfg.mfcc, read_wav(condition.noise),
                                condition.snr_db, data_seed)
    else:
        data = base if base is not None else extract_features(cfg.speech_dir, cfg.mfcc)
    return inject_outliers(data, condition.outlier_frac, data_seed)


def split_indices(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Seeded (train, test) row indices, both in ascending order."""
    if test_fraction <= 0:
        everything = np.arange(n)
        return everything, everything
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise DataError(f"test fraction {test_fraction} leaves no training rows out of {n}")
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


Predictor = Callable[[np.ndarray], np.ndarray]


def run_method(method: str, train: Dataset, cfg: ExperimentConfig, seed: int,
               run_logger: Optional[RunLogger] = None) -> Predictor:
    """Fit ``method`` on the training rows and return its point labeller."""
    ensemble = cfg.ensemble
    if method == 'mlncf':
        return mlncf(train, ensemble, run_logger).model.predict
    if method == 'rcfm':
        return rcfm(train, ensemble, run_logger).model.predict

    fit_data = train
    if cfg.maintain_baselines:
        fit_data = maintain(train, ensemble.maintenance, ensemble.dedup_radius, run_logger).reduced
    fit = fit_base(fit_data, method, ensemble.k, seed, ensemble.method_params.get(method))
    return fit.predict


def score(predictor: Predictor, data: Dataset) -> float:
    """Accuracy percentage over labelled (non-outlier) rows."""
    if data.labels is None:
        raise DataError("cannot score a dataset without labels")
    mask = data.inlier_mask()
    if not mask.any():
        raise DataError("no inlier rows to score")
    predicted = predictor(data.points)
    return 100.0 * clustering_accuracy(predicted[mask], data.labels[mask])


def run_experiment(cfg: ExperimentConfig, run_logger: Optional[RunLogger] = None,
                   progress: bool = True) -> ReportTable:
    """
    Fill the methods x conditions accuracy grid.

    For every condition and seed the data is built once and shared by all
    methods; each method is fitted on the training rows and scored on the
    test rows (all rows when ``test_fraction`` is 0). A cell is the median
    over seeds.

    Args:
        cfg: Experiment settings
        run_logger: Optional event logger
        progress: Show a progress bar

    Returns:
        Complete ReportTable with per-seed accuracies attached
    """
    cfg.check_inputs()
    run_logger = run_logger or RunLogger(cfg.name)
    run_logger.log_run_start(f"experiment {cfg.name}: {len(cfg.methods)} methods x "
                             f"{len(cfg.conditions)} conditions x {len(cfg.seeds)} seeds")

    base = None
    if cfg.source_type == 'csv':
        base = load_csv(cfg.csv_path)
    elif cfg.source_type == 'wav' and any(c.noise is None for c in cfg.conditions):
        base = extract_features(cfg.speech_dir, cfg.mfcc)

    cells = np.full((len(cfg.methods), len(cfg.conditions)), np.nan)
    per_seed: Dict[Tuple[str, str], Tuple[float, ...]] = {}
    total = len(cfg.conditions) * len(cfg.seeds) * len(cfg.methods)

    with tqdm(total=total, desc=cfg.name, disable=not progress) as bar:
        scores: Dict[Tuple[int, int], List[float]] = {}
        for j, condition in enumerate(cfg.conditions):
            for seed in cfg.seeds:
                data = build_condition_data(cfg, j, seed, base)
                if data.labels is None:
                    raise DataError(f"condition '{condition.name}': data has no labels to score")
                train_idx, test_idx = split_indices(data.n, cfg.test_fraction, derive_seed(seed, j, 1))
                train, test = data.subset(train_idx), data.subset(test_idx)
                for i, method in enumerate(cfg.methods):
                    try:
                        predictor = run_method(method, train, cfg, seed, run_logger)
                        accuracy = score(predictor, test)
                    except RcfmError as e:
                        raise StageError(f"{method} @ {condition.name}", str(e), e) from e
                    scores.setdefault((i, j), []).append(accuracy)
                    bar.update(1)

        for (i, j), values in scores.items():
            cells[i, j] = float(np.median(values))
            per_seed[(cfg.methods[i], cfg.conditions[j].name)] = tuple(values)
            run_logger.log_cell(cfg.methods[i], cfg.conditions[j].name, cells[i, j])

    return ReportTable(cfg.methods, tuple(c.name for c in cfg.conditions), cells, per_seed)


def write_manifest(table: ReportTable, cfg: ExperimentConfig, path: Union[str, Path]):
    """Record every setting, seed and per-seed accuracy of an experiment."""
    manifest = {
        'experiment': cfg.to_dict(),
        'scoring': 'clustering accuracy (%) on test rows; outlier rows excluded',
        'data_seeds': {
            c.name: [derive_seed(s, j) for s in cfg.seeds] for j, c in enumerate(cfg.conditions)
        },
        'cells': {
            method: {
                condition: {
                    'median': round(table.cell(method, condition), 10),
                    'per_seed': [round(v, 10) for v in table.per_seed.get((method, condition), ())],
                }
                for condition in table.conditions
            }
            for method in table.methods
        },
    }
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as f:
        yaml.safe_dump(manifest, f, sort_keys=True, default_flow_style=False)


def save_outputs(table: ReportTable, cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    """Write the text report, its CSV copy and the manifest; returns the manifest path."""
    out = Path(path)
    save_table(table, out)
    manifest = out.with_name(out.stem + '.manifest.yaml')
    write_manifest(table, cfg, manifest)
    logger.info(f"Report written to {out} (manifest {manifest})")
    return manifest

"""
Consensus Function

MLNCF builds K base partitions (every method under every seed), aligns their
labels to the first one, trains one network per partition on one-hot
targets, averages the trained weights into W_f and labels every point with
the averaged network. RCFM runs SOFT-DBSCAN maintenance first and learns the
consensus from the reduced dataset.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import yaml
from scipy.spatial.distance import cdist
from sklearn.preprocessing import StandardScaler

from clustering.partitional import fit_fuzzy_cmeans, fit_kmeans, fit_pam
from clustering.soft_dbscan import MaintainedDataset, SoftDbscanConfig, maintain
from core.dataset import Dataset, Partition, agreement, align_labels
from utils.errors import DataError, RcfmError, StageError
from utils.logger import RunLogger, get_logger

from .mln import (MlnArchitecture, MlnModel, forward, hardened_predictions, init_model, load_model,
                  save_model, train_gd)

logger = get_logger(__name__)

BASE_METHODS: Tuple[str, ...] = ('kmeans', 'pam', 'fuzzy_cmeans')

METHOD_PARAMS: Dict[str, Tuple[str, ...]] = {
    'kmeans': ('max_iter', 'tol', 'n_init'),
    'pam': ('max_iter',),
    'fuzzy_cmeans': ('m', 'tol', 'max_iter'),
}


@dataclass(frozen=True)
class EnsembleConfig:
    """Base clusterers, seeds, network shape and trainer settings for one run."""
    methods: Tuple[str, ...] = BASE_METHODS
    k: int = 3
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    hidden_sizes: Optional[Tuple[int, ...]] = None
    learning_rate: float = 0.5
    epochs: int = 500
    shared_init: bool = False
    init_seed: int = 0
    standardize: bool = True
    n_jobs: int = 1
    method_params: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    maintenance: Optional[SoftDbscanConfig] = None
    dedup_radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'methods', tuple(self.methods))
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if self.hidden_sizes is not None:
            object.__setattr__(self, 'hidden_sizes', tuple(int(h) for h in self.hidden_sizes))

        if not self.methods:
            raise DataError("ensemble needs at least one base method")
        unknown = [m for m in self.methods if m not in BASE_METHODS]
        if unknown:
            raise DataError(f"unknown base methods {unknown}; choose from {list(BASE_METHODS)}")
        if self.k < 1:
            raise DataError(f"k must be at least 1, got {self.k}")
        if not self.seeds:
            raise DataError("ensemble needs at least one seed")
        if self.hidden_sizes is not None and (not self.hidden_sizes or min(self.hidden_sizes) < 1):
            raise DataError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        if self.learning_rate < 0:
            raise DataError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.epochs < 0:
            raise DataError(f"epochs must be non-negative, got {self.epochs}")
        if self.n_jobs < 1:
            raise DataError(f"n_jobs must be at least 1, got {self.n_jobs}")
        if self.dedup_radius < 0:
            raise DataError(f"dedup_radius must be non-negative, got {self.dedup_radius}")
        for method, params in self.method_params.items():
            allowed = METHOD_PARAMS.get(method)
            if allowed is None:
                raise DataError(f"parameters given for unknown method '{method}'")
            extra = sorted(set(params) - set(allowed))
            if extra:
                raise DataError(f"{method} does not accept {extra}")

    @classmethod
    def from_config(cls, config, section: str = 'ensemble') -> 'EnsembleConfig':
        """Build from a Config; maintenance is attached when enabled."""
        maintenance = None
        if config.get('maintenance.enabled', True):
            maintenance = SoftDbscanConfig.from_config(config, 'maintenance')
        return cls(
            methods=tuple(config.get(f'{section}.methods', BASE_METHODS)),
            k=int(config.get(f'{section}.k', 3)),
            seeds=tuple(config.get(f'{section}.seeds', (1, 2, 3, 4, 5))),
            hidden_sizes=config.get(f'{section}.hidden_sizes'),
            learning_rate=float(config.get(f'{section}.learning_rate', 0.5)),
            epochs=int(config.get(f'{section}.epochs', 500)),
            shared_init=bool(config.get(f'{section}.shared_init', False)),
            init_seed=int(config.get(f'{section}.init_seed', 0)),
            standardize=bool(config.get(f'{section}.standardize', True)),
            n_jobs=int(config.get(f'{section}.n_jobs', 1)),
            method_params={m: dict(config.get(f'{section}.{m}', {})) for m in BASE_METHODS},
            maintenance=maintenance,
            dedup_radius=float(config.get('maintenance.dedup_radius', 0.0)),
        )

    @property
    def n_base(self) -> int:
        """Number of base partitions K = |methods| * |seeds|."""
        return len(self.methods) * len(self.seeds)

    def architecture(self, n_features: int) -> MlnArchitecture:
        return MlnArchitecture.for_data(n_features, self.k, self.hidden_sizes)

    def trainer_seed(self, index: int) -> int:
        """Initialisation seed of the network trained on base partition ``index``."""
        if self.shared_init:
            return self.init_seed
        return int(np.random.SeedSequence([self.init_seed, index]).generate_state(1)[0])

    def base_names(self) -> List[str]:
        return [f"{method}/seed={seed}" for method in self.methods for seed in self.seeds]

    def to_dict(self) -> Dict[str, Any]:
        """Plain mapping for manifests."""
        data: Dict[str, Any] = {
            'methods': list(self.methods),
            'k': self.k,
            'seeds': list(self.seeds),
            'hidden_sizes': list(self.hidden_sizes) if self.hidden_sizes else None,
            'learning_rate': self.learning_rate,
            'epochs': self.epochs,
            'shared_init': self.shared_init,
            'init_seed': self.init_seed,
            'standardize': self.standardize,
            'method_params': {m: dict(p) for m, p in self.method_params.items() if p},
        }
        if self.maintenance is not None:
            mc = self.maintenance
            data['maintenance'] = {
                'eps': mc.eps, 'min_pts': mc.min_pts, 'm': mc.m, 'xi': mc.xi,
                'max_iter': mc.max_iter, 'exponent_mode': mc.exponent_mode.value,
                'covariance': mc.covariance.value, 'cov_reg': mc.cov_reg,
                'dedup_radius': self.dedup_radius,
            }
        return data


@dataclass(frozen=True)
class WeightSet:
    """Per-layer (W, Theta) of one network, tagged with its base partition (-1 when combined)."""
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    index: int = -1
    losses: Tuple[float, ...] = ()

    @classmethod
    def from_model(cls, model: MlnModel, index: int = -1,
                   losses: Sequence[float] = ()) -> 'WeightSet':
        return cls(model.weights, model.biases, index, tuple(float(v) for v in losses))

    @property
    def shapes(self) -> List[Tuple[Tuple[int, ...], Tuple[int, ...]]]:
        return [(w.shape, b.shape) for w, b in zip(self.weights, self.biases)]

    def to_model(self, arch: MlnArchitecture) -> MlnModel:
        return MlnModel(arch, self.weights, self.biases)


@dataclass(frozen=True)
class ConsensusModel:
    """
    The averaged network as a recognizer for new points.

    ``unit_mapping`` maps output units that won at least one training point
    to dense final labels; units that never won are skipped at prediction.
    """
    arch: MlnArchitecture
    combined: WeightSet
    unit_mapping: Dict[int, int]
    scaler: Optional[StandardScaler] = None

    def transform(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.shape[1] != self.arch.n_inputs:
            raise DataError(f"model expects {self.arch.n_inputs} features, got {points.shape[1]}")
        return self.scaler.transform(points) if self.scaler is not None else points

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Dense final labels for ``points`` in the original feature space."""
        outputs = forward(self.combined.to_model(self.arch), self.transform(points))
        units = sorted(self.unit_mapping)
        return np.argmax(outputs[:, units], axis=1)

    def save(self, path: Union[str, Path]):
        """Write W_f in the flat text model format."""
        save_model(self.combined.to_model(self.arch), path)


@dataclass(frozen=True)
class RcfmResult:
    """
    Final consensus and every intermediate artifact.

    ``final`` covers the points handed to MLNCF. After RCFM, ``full_assignment``
    extends it to all original points and ``ids`` names those points.
    """
    final: Partition
    base_partitions: Tuple[Partition, ...]
    combined_weights: WeightSet
    training_losses: Tuple[Tuple[float, ...], ...]
    model: ConsensusModel
    ids: Tuple[str, ...]
    base_names: Tuple[str, ...] = ()
    maintained: Optional[MaintainedDataset] = None
    full_assignment: Optional[np.ndarray] = None
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    @property
    def unit_mapping(self) -> Dict[int, int]:
        return self.model.unit_mapping

    @property
    def assignment(self) -> np.ndarray:
        """Labels of every point in ``ids``."""
        return self.full_assignment if self.full_assignment is not None else self.final.assignment


@contextmanager
def _stage(name: str, timings: Dict[str, float],
           run_logger: Optional[RunLogger] = None) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (RcfmError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        logger.error(f"Stage {name} failed: {e}")
        raise StageError(name, str(e), e) from e
    elapsed = time.perf_counter() - start
    timings[name] = timings.get(name, 0.0) + elapsed
    if run_logger is not None:
        run_logger.log_stage(name, elapsed)


def fit_base(data: Dataset, method: str, k: int, seed: int,
             params: Optional[Dict[str, Any]] = None):
    """
    Fit one base clusterer.

    Returns:
        The method's fit object; ``.partition`` holds its k-cluster partition
        and ``.predict`` labels new points
    """
    params = dict(params or {})
    if method == 'kmeans':
        return fit_kmeans(data, k, seed=seed, **params)
    if method == 'pam':
        return fit_pam(data, k, seed=seed, **params)
    if method == 'fuzzy_cmeans':
        return fit_fuzzy_cmeans(data, k, seed=seed, **params)
    raise DataError(f"unknown base method '{method}'")


def generate_base_partitions(data: Dataset, cfg: EnsembleConfig) -> List[Partition]:
    """
    One k-cluster partition per (method, seed), methods outer and seeds inner.

    Fuzzy C-means memberships are hardened by argmax.
    """
    if not cfg.methods:
        raise DataError("ensemble needs at least one base method")
    if cfg.k > data.n:
        raise DataError(f"k={cfg.k} exceeds the number of points ({data.n})")

    partitions = []
    for method in cfg.methods:
        for seed in cfg.seeds:
            fit = fit_base(data, method, cfg.k, seed, cfg.method_params.get(method))
            partitions.append(fit.partition)
    logger.debug(f"Generated {len(partitions)} base partitions with k={cfg.k}")
    return partitions


def align_ensemble(partitions: Sequence[Partition]) -> List[Partition]:
    """Relabel every partition against the first one."""
    if not partitions:
        raise DataError("no partitions to align")
    reference = partitions[0]
    for p in partitions[1:]:
        if p.k != reference.k or p.n != reference.n:
            raise DataError(f"inconsistent partitions: k={p.k}, N={p.n} "
                            f"vs reference k={reference.k}, N={reference.n}")
    aligned = [reference] + [align_labels(p, reference) for p in partitions[1:]]
    if len(aligned) > 1:
        matches = [agreement(p, reference) for p in aligned[1:]]
        logger.debug(f"Aligned {len(aligned)} partitions; agreement with the reference "
                     f"{min(matches)}-{max(matches)} of {reference.n} points")
    return aligned


def encode_targets(p: Partition, k: int) -> np.ndarray:
    """One-hot n x k targets, row i set at p(i)."""
    if p.k > k or int(p.assignment.max()) >= k:
        raise DataError(f"partition label {int(p.assignment.max())} does not fit k={k}")
    return np.eye(k)[p.assignment]


def train_per_partition(data: Dataset, p: Partition, cfg: EnsembleConfig, seed: int,
                        index: int = -1) -> WeightSet:
    """
    Train one network on a partition.

    Starts from ``init_model(arch, seed)`` and runs ``train_gd`` on the
    one-hot encoding of ``p``.
    """
    if p.n != data.n:
        raise DataError(f"partition covers {p.n} points, dataset has {data.n}")
    arch = cfg.architecture(data.m)
    targets = encode_targets(p, cfg.k)
    model, history = train_gd(init_model(arch, seed), data.points, targets,
                              cfg.learning_rate, cfg.epochs)
    return WeightSet.from_model(model, index, history)


def combine_weights(sets: Sequence[WeightSet]) -> WeightSet:
    """
    Elementwise arithmetic mean of every weight matrix and bias vector.

    Computed as min + (sorted sum of offsets from the min) / K, which gives
    the same bits for any input order and returns identical inputs unchanged.
    """
    if not sets:
        raise DataError("no weight sets to combine")
    shapes = sets[0].shapes
    for s in sets[1:]:
        if s.shapes != shapes:
            raise DataError(f"weight set {s.index} has shapes {s.shapes}, expected {shapes}")

    def mean(arrays: List[np.ndarray]) -> np.ndarray:
        stack = np.stack(arrays)
        lo = stack.min(axis=0)
        return lo + np.sort(stack - lo, axis=0).sum(axis=0) / len(arrays)

    weights = tuple(mean([s.weights[i] for s in sets]) for i in range(len(shapes)))
    biases = tuple(mean([s.biases[i] for s in sets]) for i in range(len(shapes)))
    return WeightSet(weights, biases, -1)


def finalize(data: Dataset, arch: MlnArchitecture,
             wf: WeightSet) -> Tuple[Partition, Dict[int, int]]:
    """
    Label every point with the combined network.

    Each point takes its strongest output unit (ties to the lowest index);
    units that win no point are dropped and the rest compacted.

    Returns:
        The final partition and the mapping output unit -> final label
    """
    if data.m != arch.n_inputs:
        raise DataError(f"data has {data.m} features, network expects {arch.n_inputs}")
    partition, mapping = Partition.from_labels(hardened_predictions(wf.to_model(arch), data.points))
    if partition.k < arch.n_outputs:
        logger.warning(f"{arch.n_outputs - partition.k} output units won no point; "
                       f"compacted to {partition.k} clusters")
    return partition, mapping


def _train_all(data: Dataset, aligned: Sequence[Partition], cfg: EnsembleConfig) -> List[WeightSet]:
    def job(index: int) -> WeightSet:
        return train_per_partition(data, aligned[index], cfg, cfg.trainer_seed(index), index)

    if cfg.n_jobs > 1 and len(aligned) > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            return list(pool.map(job, range(len(aligned))))
    return [job(i) for i in range(len(aligned))]


def mlncf(data: Dataset, cfg: EnsembleConfig,
          run_logger: Optional[RunLogger] = None) -> RcfmResult:
    """
    Multi-layer network consensus function.

    Args:
        data: Points to cluster (N >= k)
        cfg: Ensemble settings
        run_logger: Optional stage event logger

    Returns:
        RcfmResult with the final partition, aligned base partitions, W_f and
        per-partition loss histories
    """
    timings: Dict[str, float] = {}

    with _stage("generate_base_partitions", timings, run_logger):
        base = generate_base_partitions(data, cfg)

    with _stage("align_ensemble", timings, run_logger):
        aligned = align_ensemble(base)

    scaler = None
    inputs = data
    if cfg.standardize:
        scaler = StandardScaler().fit(data.points)
        inputs = data.with_points(scaler.transform(data.points))

    with _stage("train_per_partition", timings, run_logger):
        sets = _train_all(inputs, aligned, cfg)

    with _stage("combine_weights", timings, run_logger):
        wf = combine_weights(sets)

    arch = cfg.architecture(data.m)
    with _stage("finalize", timings, run_logger):
        final, mapping = finalize(inputs, arch, wf)

    logger.info(f"mlncf: {len(aligned)} base partitions, N={data.n}, "
                f"final k={final.k}")
    return RcfmResult(
        final=final,
        base_partitions=tuple(aligned),
        combined_weights=wf,
        training_losses=tuple(s.losses for s in sets),
        model=ConsensusModel(arch, wf, mapping, scaler),
        ids=data.ids,
        base_names=tuple(cfg.base_names()),
        stage_seconds=timings,
    )


def rcfm(data: Dataset, cfg: EnsembleConfig,
         run_logger: Optional[RunLogger] = None) -> RcfmResult:
    """
    Robust consensus: SOFT-DBSCAN maintenance, then MLNCF on the reduced set.

    Removed points take the final label of their nearest kept point, so
    ``full_assignment`` covers all original points while ``final`` covers
    the kept ones.
    """
    if cfg.maintenance is None:
        raise DataError("rcfm needs a maintenance configuration")

    timings: Dict[str, float] = {}
    with _stage("maintain", timings, run_logger):
        maintained = maintain(data, cfg.maintenance, cfg.dedup_radius, run_logger)

    inner = mlncf(maintained.reduced, cfg, run_logger)

    kept = np.asarray(maintained.kept, dtype=np.int64)
    removed = np.asarray(maintained.removed_noisy + maintained.removed_redundant, dtype=np.int64)
    full = np.empty(data.n, dtype=np.int64)
    full[kept] = inner.final.assignment
    if removed.size:
        nearest = np.argmin(cdist(data.points[removed], data.points[kept]), axis=1)
        full[removed] = inner.final.assignment[nearest]
    full.setflags(write=False)

    return replace(
        inner,
        ids=data.ids,
        maintained=maintained,
        full_assignment=full,
        stage_seconds={**timings, **inner.stage_seconds},
    )


def save_labels(result: RcfmResult, path: Union[str, Path]):
    """Write ``id,final_label`` rows for every point the result covers."""
    frame = pd.DataFrame({'id': list(result.ids), 'final_label': result.assignment})
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator='\n')


def write_manifest(result: RcfmResult, cfg: EnsembleConfig, path: Union[str, Path],
                   extra: Optional[Dict[str, Any]] = None):
    """Record configuration, seeds and per-partition losses of a run as YAML."""
    manifest: Dict[str, Any] = {
        'config': cfg.to_dict(),
        'n_points': len(result.ids),
        'final_k': result.final.k,
        'unit_mapping': {int(u): int(label) for u, label in result.unit_mapping.items()},
        'base_partitions': [
            {
                'name': name,
                'trainer_seed': cfg.trainer_seed(i),
                'initial_loss': float(losses[0]) if losses else None,
                'final_loss': float(losses[-1]) if losses else None,
            }
            for i, (name, losses) in enumerate(zip(result.base_names, result.training_losses))
        ],
    }
    scaler = result.model.scaler
    if scaler is not None:
        manifest['scaler'] = {
            'mean': [float(v) for v in scaler.mean_],
            'scale': [float(v) for v in scaler.scale_],
        }
    if result.maintained is not None:
        manifest['maintenance'] = {
            'n_original': result.maintained.n_original,
            'kept': len(result.maintained.kept),
            'removed_noisy': len(result.maintained.removed_noisy),
            'removed_redundant': len(result.maintained.removed_redundant),
        }
    if extra:
        manifest.update(extra)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as f:
        yaml.safe_dump(manifest, f, sort_keys=True, default_flow_style=False)


def load_consensus_model(model_path: Union[str, Path],
                         manifest_path: Union[str, Path]) -> ConsensusModel:
    """
    Rebuild the recognizer of a finished run.

    W_f comes from the model file; the unit mapping and the input scaler come
    from the run manifest written next to it.
    """
    model = load_model(model_path)
    source = Path(manifest_path)
    if not source.is_file():
        raise DataError(f"manifest not found: {source}")
    with open(source, 'r', encoding='utf-8') as f:
        manifest = yaml.safe_load(f) or {}
    if not isinstance(manifest, dict) or 'unit_mapping' not in manifest:
        raise DataError(f"{source}: no unit_mapping recorded")

    mapping = {int(u): int(label) for u, label in manifest['unit_mapping'].items()}
    if not mapping or max(mapping) >= model.arch.n_outputs:
        raise DataError(f"{source}: unit mapping does not fit {model.arch.n_outputs} output units")

    scaler = None
    if 'scaler' in manifest:
        mean = np.asarray(manifest['scaler']['mean'], dtype=np.float64)
        scale = np.asarray(manifest['scaler']['scale'], dtype=np.float64)
        if mean.shape != (model.arch.n_inputs,) or scale.shape != mean.shape:
            raise DataError(f"{source}: scaler does not fit {model.arch.n_inputs} inputs")
        scaler = StandardScaler()
        scaler.mean_, scaler.scale_, scaler.var_ = mean, scale, scale ** 2
        scaler.n_features_in_ = mean.size
        scaler.n_samples_seen_ = int(manifest.get('n_points', 0))

    logger.info(f"Loaded consensus model {model.arch.layer_sizes} from {model_path}")
    return ConsensusModel(model.arch, WeightSet.from_model(model), mapping, scaler)

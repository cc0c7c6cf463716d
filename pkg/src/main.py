#!/usr/bin/env python3
"""
RCFM Ensemble - Command Line Entry Point

Subcommands cover the whole pipeline: feature extraction from WAV corpora,
noise mixing, single base clusterers, SOFT-DBSCAN maintenance, MLNCF and
RCFM consensus runs, labelling new points with a saved consensus network,
and full experiments. Exit code 0 on success, 1 on usage errors, 2 on data,
validation or file system errors.
"""

import sys
from pathlib import Path
from typing import List, Optional

import click
import pandas as pd

# Add src directory to Python path
sys.path.insert(0, str(Path(__file__).parent))

from clustering.soft_dbscan import SoftDbscanConfig, maintain
from core.dataset import load_csv, save_csv
from ensemble.consensus import (BASE_METHODS, EnsembleConfig, fit_base, load_consensus_model, mlncf,
                                rcfm, save_labels, write_manifest)
from harness.experiment import load_experiment, run_experiment, save_outputs
from harness.report import format_table
from speech.frontend import MfccConfig, extract_features, mix_at_snr, read_wav, write_wav
from utils.config import Config
from utils.errors import RcfmError
from utils.logger import RunLogger, get_logger, setup_logger

logger = get_logger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2


def _load_config(path: Optional[str]) -> Config:
    return Config(path, strict=True) if path else Config(None)


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


@click.group()
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help='Minimum log level')
@click.option('--log-file', type=click.Path(dir_okay=False), default=None,
              help='Also log to this file (rotated at 10 MB)')
def cli(log_level: str, log_file: Optional[str]):
    """Robust consensus clustering with multi-layer networks."""
    setup_logger(level=log_level.upper(), log_file=log_file)


@cli.command()
@click.argument('wav_dir', type=click.Path(file_okay=False))
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Features CSV')
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='YAML with an mfcc section')
@click.option('--noise', type=click.Path(dir_okay=False), help='Noise WAV mixed into every utterance')
@click.option('--snr-db', type=float, help='Mixing SNR in dB (with --noise)')
@click.option('--seed', type=int, default=0, show_default=True)
def features(wav_dir: str, out: str, config_path: Optional[str], noise: Optional[str],
             snr_db: Optional[float], seed: int):
    """Extract one pooled 39-dim MFCC vector per utterance."""
    if (noise is None) != (snr_db is None):
        raise click.UsageError("--noise and --snr-db go together")
    cfg = MfccConfig.from_config(_load_config(config_path))
    noise_signal = read_wav(noise) if noise else None
    dataset = extract_features(wav_dir, cfg, noise_signal, snr_db, seed)
    save_csv(dataset, out, cfg.feature_names())
    click.echo(f"{dataset.n} utterances, {dataset.n_classes} digit classes -> {out}")


@cli.command()
@click.argument('speech', type=click.Path(dir_okay=False))
@click.argument('noise', type=click.Path(dir_okay=False))
@click.option('--snr-db', type=float, required=True, help='Target SNR in dB')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Output WAV')
@click.option('--seed', type=int, default=0, show_default=True, help='Noise offset seed')
def mix(speech: str, noise: str, snr_db: float, out: str, seed: int):
    """Mix noise into speech at a target SNR."""
    result = mix_at_snr(read_wav(speech), read_wav(noise), snr_db, seed)
    write_wav(result.mixture, out)
    click.echo(f"{result.mixture.duration:.2f}s gain={result.gain:.6f} clipped={result.clipped} -> {out}")


@cli.command()
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--method', type=click.Choice(list(BASE_METHODS)), default='kmeans', show_default=True)
@click.option('--k', type=int, required=True, help='Number of clusters')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--out', type=click.Path(dir_okay=False), help='Labels CSV (stdout when omitted)')
def cluster(data: str, method: str, k: int, seed: int, out: Optional[str]):
    """Run one base clusterer."""
    dataset = load_csv(data)
    fit = fit_base(dataset, method, k, seed)
    frame = pd.DataFrame({'id': list(dataset.ids), 'label': fit.partition.assignment})
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, lineterminator='\n')
        click.echo(f"{method} k={k}: {dataset.n} labels -> {out}")
    else:
        click.echo(frame.to_csv(index=False, lineterminator='\n'), nl=False)


@cli.command('maintain')
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--eps', type=float, required=True, help='DBSCAN radius')
@click.option('--min-pts', type=int, required=True, help='DBSCAN core threshold')
@click.option('--m', 'm', type=float, default=2.5, show_default=True, help='Weighting exponent')
@click.option('--xi', type=float, default=1e-4, show_default=True, help='Membership tolerance')
@click.option('--dedup-radius', type=float, default=0.0, show_default=True)
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Reduced dataset CSV')
def maintain_command(data: str, eps: float, min_pts: int, m: float, xi: float,
                     dedup_radius: float, out: str):
    """Remove noisy and redundant points with SOFT-DBSCAN."""
    dataset = load_csv(data)
    cfg = SoftDbscanConfig(eps=eps, min_pts=min_pts, m=m, xi=xi)
    result = maintain(dataset, cfg, dedup_radius, RunLogger("maintain"))
    save_csv(result.reduced, out)
    removed = pd.DataFrame({
        'id': [dataset.ids[i] for i in result.removed_noisy + result.removed_redundant],
        'reason': ['noisy'] * len(result.removed_noisy) + ['redundant'] * len(result.removed_redundant),
    })
    removed.to_csv(_sibling(Path(out), '.removed.csv'), index=False, lineterminator='\n')
    click.echo(f"kept {len(result.kept)} of {dataset.n} "
               f"({len(result.removed_noisy)} noisy, {len(result.removed_redundant)} redundant)")


def _run_consensus(data: str, config_path: Optional[str], out: str, k: Optional[int],
                   robust: bool):
    config = _load_config(config_path)
    if k is not None:
        config.set('ensemble.k', k)
    config.set('maintenance.enabled', robust)
    cfg = EnsembleConfig.from_config(config)
    dataset = load_csv(data)
    run_logger = RunLogger("rcfm" if robust else "mlncf")
    run_logger.log_run_start(f"{dataset.n} points, {cfg.n_base} base partitions")

    result = rcfm(dataset, cfg, run_logger) if robust else mlncf(dataset, cfg, run_logger)

    out_path = Path(out)
    save_labels(result, out_path)
    write_manifest(result, cfg, _sibling(out_path, '.manifest.yaml'), {'input': str(data)})
    result.model.save(_sibling(out_path, '.model.txt'))
    config.save_config(str(_sibling(out_path, '.config.yaml')))
    click.echo(f"final k={result.final.k}: {len(result.ids)} labels -> {out_path}")


@cli.command()
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Run configuration YAML')
@click.option('--k', type=int, help='Override ensemble.k')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Labels CSV')
def consensus(data: str, config_path: Optional[str], k: Optional[int], out: str):
    """MLNCF consensus without maintenance."""
    _run_consensus(data, config_path, out, k, robust=False)


@cli.command('rcfm')
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Run configuration YAML')
@click.option('--k', type=int, help='Override ensemble.k')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Labels CSV')
def rcfm_command(data: str, config_path: Optional[str], k: Optional[int], out: str):
    """Maintenance followed by MLNCF consensus."""
    _run_consensus(data, config_path, out, k, robust=True)


@cli.command()
@click.argument('data', type=click.Path(dir_okay=False))
@click.option('--model', 'model_path', required=True, type=click.Path(dir_okay=False),
              help='<name>.model.txt written by consensus or rcfm')
@click.option('--manifest', 'manifest_path', type=click.Path(dir_okay=False),
              help='Run manifest (default: <name>.manifest.yaml next to the model)')
@click.option('--out', type=click.Path(dir_okay=False), help='Labels CSV (stdout when omitted)')
def predict(data: str, model_path: str, manifest_path: Optional[str], out: Optional[str]):
    """Label new points with a saved consensus network."""
    model_file = Path(model_path)
    if manifest_path is None:
        if not model_file.name.endswith('.model.txt'):
            raise click.UsageError("--manifest is required unless the model is named <name>.model.txt")
        manifest_path = str(model_file.with_name(model_file.name[:-len('.model.txt')] + '.manifest.yaml'))
    model = load_consensus_model(model_file, manifest_path)
    dataset = load_csv(data)
    frame = pd.DataFrame({'id': list(dataset.ids), 'final_label': model.predict(dataset.points)})
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, lineterminator='\n')
        click.echo(f"{dataset.n} labels -> {out}")
    else:
        click.echo(frame.to_csv(index=False, lineterminator='\n'), nl=False)


@cli.command()
@click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
              help='Experiment YAML')
@click.option('--out', type=click.Path(dir_okay=False), help='Report path (default: experiment.output)')
@click.option('--progress/--no-progress', default=True, show_default=True)
def experiment(config_path: str, out: Optional[str], progress: bool):
    """Run a methods x conditions experiment and write the report."""
    cfg = load_experiment(config_path)
    target = out or cfg.output
    if not target:
        raise click.UsageError("no --out given and the experiment sets no output")
    table = run_experiment(cfg, progress=progress)
    save_outputs(table, cfg, target)
    click.echo(format_table(table), nl=False)


def main(argv: Optional[List[str]] = None):
    """Entry point; exits with 0, 1 (usage) or 2 (data, validation or I/O)."""
    code = 0
    try:
        cli.main(args=argv, prog_name='rcfm', standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        code = EXIT_USAGE
    except click.ClickException as e:
        e.show()
        code = EXIT_USAGE
    except (RcfmError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"error: {e}", err=True)
        code = EXIT_DATA
    except KeyboardInterrupt:
        click.echo("\nInterrupted.", err=True)
        code = EXIT_USAGE
    sys.exit(code)


if __name__ == "__main__":
    main()

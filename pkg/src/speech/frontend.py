"""
Acoustic Front-End

WAV ingestion, MFCC extraction with temporal derivatives, utterance pooling
and SNR-controlled noise mixing. Every function is pure; a WAV corpus is
turned into one 39-dimensional point per utterance.
"""

import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.fft
from scipy.io import wavfile

from core.dataset import Dataset
from utils.errors import DataError
from utils.logger import get_logger

logger = get_logger(__name__)

PCM_SCALE = 32768.0
DIGIT_PREFIX = re.compile(r"^(\d)_")

WAVE_FORMAT_PCM = 1
WAVE_FORMAT_NAMES = {3: "IEEE float", 0xFFFE: "WAVE_FORMAT_EXTENSIBLE"}


@dataclass(frozen=True)
class Signal:
    """Mono samples (nominally in [-1, 1]) at a sample rate in Hz."""
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DataError(f"signal must be one-dimensional, got shape {samples.shape}")
        if not self.sample_rate > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise DataError("signal contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, 'sample_rate', int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2))) if len(self) else 0.0


@dataclass(frozen=True)
class MfccConfig:
    """Framing, filterbank and cepstrum settings (defaults: 25 ms / 10 ms at 8 kHz)."""
    frame_len: int = 200
    frame_shift: int = 80
    n_filters: int = 23
    n_ceps: int = 13
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10
    delta_width: int = 2

    def __post_init__(self):
        if self.frame_len < 1 or self.frame_shift < 1:
            raise DataError("frame length and shift must be positive")
        if self.frame_shift > self.frame_len:
            raise DataError(f"frame_shift ({self.frame_shift}) exceeds frame_len ({self.frame_len})")
        if self.n_filters < 1 or self.n_ceps < 1:
            raise DataError("filter and cepstrum counts must be positive")
        if self.n_ceps > self.n_filters:
            raise DataError(f"n_ceps ({self.n_ceps}) exceeds n_filters ({self.n_filters})")
        if not self.log_floor > 0:
            raise DataError(f"log_floor must be positive, got {self.log_floor}")
        if self.delta_width < 1:
            raise DataError(f"delta_width must be at least 1, got {self.delta_width}")

    @classmethod
    def from_config(cls, config, section: str = 'mfcc') -> 'MfccConfig':
        return cls(
            frame_len=int(config.get(f'{section}.frame_len', 200)),
            frame_shift=int(config.get(f'{section}.frame_shift', 80)),
            n_filters=int(config.get(f'{section}.n_filters', 23)),
            n_ceps=int(config.get(f'{section}.n_ceps', 13)),
            pre_emphasis=float(config.get(f'{section}.pre_emphasis', 0.97)),
            log_floor=float(config.get(f'{section}.log_floor', 1e-10)),
            delta_width=int(config.get(f'{section}.delta_width', 2)),
        )

    @property
    def nfft(self) -> int:
        """Smallest power of two >= frame_len."""
        return 1 << (self.frame_len - 1).bit_length()

    @property
    def n_features(self) -> int:
        return 3 * self.n_ceps

    def feature_names(self) -> List[str]:
        return ([f"c{i}" for i in range(self.n_ceps)]
                + [f"d{i}" for i in range(self.n_ceps)]
                + [f"dd{i}" for i in range(self.n_ceps)])


def _check_wav_header(wav_path: Path):
    # little-endian RIFF with a fmt chunk of format code 1
    with open(wav_path, 'rb') as f:
        header = f.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            kind = "big-endian RIFX" if header[:4] == b"RIFX" else "not RIFF/WAVE"
            raise DataError(f"{wav_path}: little-endian RIFF/WAVE required ({kind})")
        while True:
            chunk = f.read(8)
            if len(chunk) < 8:
                raise DataError(f"{wav_path}: no fmt chunk")
            chunk_id, size = struct.unpack("<4sI", chunk)
            if chunk_id == b"fmt ":
                body = f.read(2)
                if len(body) < 2:
                    raise DataError(f"{wav_path}: truncated fmt chunk")
                (tag,) = struct.unpack("<H", body)
                if tag != WAVE_FORMAT_PCM:
                    name = WAVE_FORMAT_NAMES.get(tag, "unknown")
                    raise DataError(f"{wav_path}: PCM format code 1 required, got {tag} ({name})")
                return
            f.seek(size + (size & 1), 1)


def read_wav(path: Union[str, Path]) -> Signal:
    """
    Read a 16-bit PCM mono WAV file (little-endian RIFF, format code 1).

    Samples are the signed 16-bit values divided by 32768.
    """
    wav_path = Path(path)
    if not wav_path.is_file():
        raise DataError(f"file not found: {wav_path}")
    _check_wav_header(wav_path)
    try:
        rate, data = wavfile.read(wav_path)
    except ValueError as e:
        raise DataError(f"{wav_path}: not a readable RIFF/WAVE PCM file ({e})") from e

    if data.ndim != 1:
        raise DataError(f"{wav_path}: mono required, got {data.shape[1]} channels")
    if data.dtype != np.int16:
        raise DataError(f"{wav_path}: 16-bit PCM required, got {data.dtype.itemsize * 8}-bit")
    return Signal(data.astype(np.float64) / PCM_SCALE, rate)


def write_wav(signal: Signal, path: Union[str, Path]):
    """Write a signal as 16-bit PCM mono, saturating at the integer range."""
    pcm = np.clip(np.round(signal.samples * PCM_SCALE), -32768, 32767).astype(np.int16)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(out, signal.sample_rate, pcm)


def frame_count(n_samples: int, frame_len: int, frame_shift: int) -> int:
    """T = floor((N - frame_len) / frame_shift) + 1."""
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // frame_shift + 1


def frame_signal(samples: np.ndarray, frame_len: int, frame_shift: int) -> np.ndarray:
    """T x frame_len matrix of overlapping frames; trailing samples are dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < frame_len:
        raise DataError(f"signal of {samples.size} samples is shorter than one frame ({frame_len})")
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return windows[::frame_shift].copy()


def hz_to_mel(f: np.ndarray) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_edges(n_filters: int, sample_rate: int) -> np.ndarray:
    """n_filters + 2 band edges (Hz) spaced evenly in mel from 0 Hz to Nyquist; filter j peaks at edge j+1."""
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2))


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """
    Triangular mel filter weights over the rfft bins.

    Returns:
        n_filters x (nfft // 2 + 1) matrix; filter j rises from edge j to its
        peak at edge j+1 and falls to zero at edge j+2
    """
    edges = mel_edges(n_filters, sample_rate)
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT as an n x n matrix acting on column vectors."""
    return scipy.fft.dct(np.eye(n), type=2, norm='ortho', axis=0)


def _pre_emphasize(frames: np.ndarray, coefficient: float) -> np.ndarray:
    # per frame, first sample scaled by (1 - a)
    out = frames.copy()
    out[:, 1:] -= coefficient * frames[:, :-1]
    out[:, 0] *= 1.0 - coefficient
    return out


def log_mel_energies(signal: Signal, cfg: MfccConfig) -> np.ndarray:
    """T x n_filters log filterbank energies of the magnitude spectrum."""
    frames = frame_signal(signal.samples, cfg.frame_len, cfg.frame_shift)
    frames = _pre_emphasize(frames, cfg.pre_emphasis) * np.hamming(cfg.frame_len)
    spectrum = np.abs(scipy.fft.rfft(frames, n=cfg.nfft, axis=1))
    energies = spectrum @ mel_filterbank(cfg.n_filters, cfg.nfft, signal.sample_rate).T
    return np.log(np.maximum(energies, cfg.log_floor))


def mfcc(signal: Signal, cfg: Optional[MfccConfig] = None) -> np.ndarray:
    """
    Mel-frequency cepstral coefficients.

    Args:
        signal: Speech signal with at least ``frame_len`` samples
        cfg: Front-end settings (defaults when omitted)

    Returns:
        T x n_ceps matrix, coefficient 0 included
    """
    cfg = cfg or MfccConfig()
    log_energies = log_mel_energies(signal, cfg)
    return (log_energies @ dct_matrix(cfg.n_filters).T)[:, :cfg.n_ceps]


def _regression_deltas(frames: np.ndarray, width: int) -> np.ndarray:
    t = frames.shape[0]
    padded = np.concatenate([np.repeat(frames[:1], width, axis=0), frames,
                             np.repeat(frames[-1:], width, axis=0)])
    numerator = np.zeros_like(frames)
    for tau in range(1, width + 1):
        numerator += tau * (padded[width + tau:width + tau + t] - padded[width - tau:width - tau + t])
    return numerator / (2.0 * sum(tau * tau for tau in range(1, width + 1)))


def add_deltas(frames: np.ndarray, width: int = 2) -> np.ndarray:
    """Append regression deltas and delta-deltas: [static | delta | delta-delta]."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if width < 1:
        raise DataError(f"delta width must be at least 1, got {width}")
    if frames.shape[0] < 1:
        raise DataError("no frames")
    deltas = _regression_deltas(frames, width)
    return np.hstack([frames, deltas, _regression_deltas(deltas, width)])


def pool_utterance(frames: np.ndarray) -> np.ndarray:
    """Frame mean of an utterance."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError("cannot pool an empty frame matrix")
    return frames.mean(axis=0)


def utterance_features(signal: Signal, cfg: Optional[MfccConfig] = None) -> np.ndarray:
    """One pooled MFCC + delta + delta-delta vector per utterance."""
    cfg = cfg or MfccConfig()
    return pool_utterance(add_deltas(mfcc(signal, cfg), cfg.delta_width))


@dataclass(frozen=True)
class MixResult:
    """Noisy mixture plus the scaled noise actually added."""
    mixture: Signal
    noise_component: Signal
    gain: float
    clipped: int
    offset: int


def mix_at_snr(speech: Signal, noise: Signal, snr_db: float, seed: int = 0) -> MixResult:
    """
    Add noise to speech at a target SNR.

    A noise segment of the speech length is cut at a seeded offset (tiled
    when the noise is shorter), scaled by
    g = rms(speech) / (rms(segment) * 10^(snr_db / 20)) and added. The sum is
    clipped to [-1, 1] and the clipped sample count reported.
    """
    if speech.sample_rate != noise.sample_rate:
        raise DataError(f"sample rate mismatch ({speech.sample_rate} vs {noise.sample_rate})")
    if len(speech) == 0 or speech.rms == 0.0:
        raise DataError("speech is silent")
    if len(noise) == 0 or noise.rms == 0.0:
        raise DataError("noise is silent")

    n = len(speech)
    rng = np.random.default_rng(seed)
    span = len(noise) - n + 1 if len(noise) >= n else len(noise)
    offset = int(rng.integers(0, span))
    segment = np.take(noise.samples, offset + np.arange(n), mode='wrap')
    segment_rms = float(np.sqrt(np.mean(segment ** 2)))
    if segment_rms == 0.0:
        raise DataError("noise segment is silent")

    gain = speech.rms / (segment_rms * 10.0 ** (snr_db / 20.0))
    component = gain * segment
    mixed = speech.samples + component
    clipped = int(np.count_nonzero(np.abs(mixed) > 1.0))
    if clipped:
        logger.warning(f"mix_at_snr: {clipped} samples clipped at {snr_db} dB")
    return MixResult(
        mixture=Signal(np.clip(mixed, -1.0, 1.0), speech.sample_rate),
        noise_component=Signal(component, speech.sample_rate),
        gain=float(gain),
        clipped=clipped,
        offset=offset,
    )


def measure_snr(speech: Signal, noise_component: Signal) -> float:
    """10 log10 of speech power over noise power, in dB."""
    if len(speech) != len(noise_component):
        raise DataError(f"length mismatch ({len(speech)} vs {len(noise_component)})")
    p_speech = float(np.sum(speech.samples ** 2))
    p_noise = float(np.sum(noise_component.samples ** 2))
    if p_speech == 0.0 or p_noise == 0.0:
        raise DataError("cannot measure SNR of a silent signal")
    return 10.0 * np.log10(p_speech / p_noise)


def digit_label(path: Union[str, Path]) -> Optional[int]:
    """Digit class from a ``<digit>_`` filename prefix, or None."""
    match = DIGIT_PREFIX.match(Path(path).name)
    return int(match.group(1)) if match else None


def extract_features(wav_dir: Union[str, Path], cfg: Optional[MfccConfig] = None,
                     noise: Optional[Signal] = None, snr_db: Optional[float] = None,
                     seed: int = 0) -> Dataset:
    """
    Turn a directory of utterance WAVs into a dataset.

    Files are read in name order, one row per file, ids are the file stems.
    With ``noise`` and ``snr_db`` each utterance is first mixed at that SNR
    (file i uses seed ``seed + i``). Labels come from ``<digit>_`` prefixes
    when every file has one.
    """
    cfg = cfg or MfccConfig()
    directory = Path(wav_dir)
    if not directory.is_dir():
        raise DataError(f"directory not found: {directory}")
    files = sorted(directory.glob("*.wav"))
    if not files:
        raise DataError(f"no .wav files in {directory}")
    if (noise is None) != (snr_db is None):
        raise DataError("noise and snr_db must be given together")

    rows: List[np.ndarray] = []
    clipped_total = 0
    for i, wav in enumerate(files):
        signal = read_wav(wav)
        if noise is not None:
            mix = mix_at_snr(signal, noise, float(snr_db), seed + i)
            signal = mix.mixture
            clipped_total += mix.clipped
        rows.append(utterance_features(signal, cfg))

    labels: Optional[Tuple[int, ...]] = None
    digits = [digit_label(f) for f in files]
    if all(d is not None for d in digits):
        labels = tuple(int(d) for d in digits)

    if clipped_total:
        logger.warning(f"{clipped_total} samples clipped while mixing {directory}")
    logger.info(f"Extracted {len(rows)} utterances from {directory} "
                f"({'labelled' if labels else 'unlabelled'})")
    return Dataset(np.vstack(rows), tuple(f.stem for f in files),
                   None if labels is None else np.array(labels))

"""Wing-beat spectra: Welch estimation, normalization, and a synthetic generator.

The generator stands in for optical field recordings.  Each recording is
an insect transit: a Gaussian intensity envelope carrying a slow body
signal and a harmonic series at the wing-beat frequency, plus white
detector noise.  Two spectral bands are simulated and their Welch power
spectra averaged before the log transform.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sp_signal

from .errors import ConfigError, DegenerateInputError, InputError, InputTooShortError, ShapeError

SAMPLE_RATE = 20_000.0
SEGMENT_LENGTH = 1920
OVERLAP = 0.5
F_MAX = 2000.0
N_BINS = 193
BANDS = ("808nm", "975nm")


@dataclass(frozen=True)
class TimeSeriesRecording:
    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE
    band: str | None = None

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample rate must be positive")
        if np.size(self.samples) == 0:
            raise InputError("recording has no samples")
        if self.band is not None and self.band not in BANDS:
            raise ConfigError(f"unknown band {self.band!r}")


@dataclass(frozen=True)
class SpectrumRecord:
    bins: np.ndarray
    label: str | None = None
    record_id: str = ""


@dataclass
class SpectrumBatch:
    """Rows of preprocessed spectra.

    ``labels`` are the visible labels (None for unlabelled rows);
    ``truth`` is the generator's species for every row, kept for
    evaluation only.
    """

    ids: list
    bins: np.ndarray
    labels: list
    truth: list | None = None

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64)
        if self.bins.ndim != 2:
            raise ShapeError("spectra must be a 2-D array")
        if not (len(self.ids) == len(self.labels) == self.bins.shape[0]):
            raise ShapeError("ids, labels and spectra differ in length")
        if self.truth is not None and len(self.truth) != len(self.ids):
            raise ShapeError("truth and ids differ in length")

    def __len__(self):
        return len(self.ids)

    def subset(self, index) -> "SpectrumBatch":
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        pick = lambda seq: [seq[i] for i in index]  # noqa: E731
        return SpectrumBatch(
            pick(self.ids),
            self.bins[index],
            pick(self.labels),
            None if self.truth is None else pick(self.truth),
        )

    @property
    def records(self) -> list[SpectrumRecord]:
        return [SpectrumRecord(b, l, i) for i, b, l in zip(self.ids, self.bins, self.labels)]


@dataclass(frozen=True)
class SpeciesProfile:
    """Generator parameters for one synthetic species group."""

    name: str
    wbf_mean: float  # Hz
    wbf_spread: float  # relative std of the per-recording fundamental
    harmonic_decay: float  # amplitude ratio between consecutive harmonics
    harmonic_count: int
    body_level: float = 0.3  # slow body signal relative to the fundamental
    noise_level: float = 0.07  # white noise std relative to the fundamental

    def validate(self) -> None:
        if not 20.0 < self.wbf_mean < 1000.0:
            raise ConfigError(f"{self.name}: fundamental {self.wbf_mean} Hz outside (20, 1000)")
        if self.wbf_spread < 0:
            raise ConfigError(f"{self.name}: negative spread")
        if self.harmonic_count < 1:
            raise ConfigError(f"{self.name}: need at least one harmonic")
        if not 0.0 < self.harmonic_decay < 1.0:
            raise ConfigError(f"{self.name}: harmonic decay must lie in (0, 1)")
        if self.body_level < 0 or self.noise_level < 0:
            raise ConfigError(f"{self.name}: negative body or noise level")


def default_profiles() -> list[SpeciesProfile]:
    """Twelve species groups with fundamentals spread over 45-650 Hz."""
    P = SpeciesProfile
    return [
        P("moth", 45.0, 0.06, 0.65, 5, 0.5),
        P("lacewing", 62.0, 0.07, 0.55, 5, 0.4),
        P("aphid", 105.0, 0.08, 0.45, 4, 0.3),
        P("whitefly", 128.0, 0.05, 0.7, 3, 0.2),
        P("bumblebee", 150.0, 0.05, 0.4, 3, 0.6),
        P("blowfly", 172.0, 0.06, 0.5, 4, 0.4),
        P("housefly", 192.0, 0.06, 0.55, 4, 0.35),
        P("weevil", 230.0, 0.25, 0.5, 4, 0.3),
        P("honeybee", 240.0, 0.04, 0.6, 3, 0.5),
        P("fruitfly", 215.0, 0.10, 0.7, 5, 0.1),
        P("midge", 420.0, 0.08, 0.45, 3, 0.15),
        P("mosquito", 650.0, 0.03, 0.4, 3, 0.1),
    ]


def save_profiles(profiles: Sequence[SpeciesProfile], path) -> None:
    atomic_write_text(path, json.dumps([asdict(p) for p in profiles], indent=2) + "\n")


def load_profiles(path) -> list[SpeciesProfile]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ConfigError("species profile file must hold a JSON array")
    profiles = [SpeciesProfile(**item) for item in raw]
    for p in profiles:
        p.validate()
    return profiles


def n_retained_bins(segment_length: int, sample_rate: float, f_max: float = F_MAX) -> int:
    # tolerance absorbs 20000/1920 * 192 landing a hair above 2000
    return int(math.floor(f_max * segment_length / sample_rate + 1e-9)) + 1


def welch_psd(
    recording: TimeSeriesRecording,
    segment_length: int = SEGMENT_LENGTH,
    overlap_fraction: float = OVERLAP,
    window: str = "hann",
    f_max: float = F_MAX,
) -> np.ndarray:
    """Averaged one-sided periodogram, truncated to bins at or below ``f_max``.

    At 20 kHz with 1920-sample segments the bin spacing is 10.41(6) Hz and
    193 bins cover 0-2 kHz.  No detrending is applied, so DC power stays in
    bin 0.
    """
    x = np.asarray(recording.samples, dtype=np.float64)
    if not 0.0 <= overlap_fraction < 1.0:
        raise ConfigError("overlap fraction must lie in [0, 1)")
    if segment_length < 2:
        raise ConfigError("segment length must be at least 2")
    if x.size < segment_length:
        raise InputTooShortError(
            f"recording has {x.size} samples, shorter than one {segment_length}-sample segment"
        )
    _, psd = sp_signal.welch(
        x,
        fs=recording.sample_rate,
        window=window,
        nperseg=segment_length,
        noverlap=int(round(overlap_fraction * segment_length)),
        detrend=False,
        scaling="density",
        average="mean",
    )
    return psd[: n_retained_bins(segment_length, recording.sample_rate, f_max)]


def preprocess(band_psds, record_id: str = "", label: str | None = None) -> SpectrumRecord:
    """Average band spectra, apply ``log(1 + s)`` and scale the maximum to 1."""
    arr = np.atleast_2d(np.asarray(band_psds, dtype=np.float64))
    if arr.shape[1] != N_BINS:
        raise ShapeError(f"expected {N_BINS} bins, got {arr.shape[1]}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InputError("power spectra must be finite and non-negative")
    s = np.log1p(arr.mean(axis=0))
    peak = s.max()
    if peak <= 0:
        raise DegenerateInputError("all-zero spectrum cannot be normalized")
    return SpectrumRecord(s / peak, label, record_id)


# Peak amplitude of the fundamental in detector units.  Chosen so that the
# fundamental's Welch peak sits around 1e3, where log1p acts as a true log.
AMPLITUDE = 250.0
# Relative body/harmonic response of the second band.
_BAND_BODY = {"808nm": 1.0, "975nm": 0.8}
_BAND_HARM = {"808nm": 1.0, "975nm": 1.15}


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synthesize_recording(
    profile: SpeciesProfile,
    duration: float = 0.25,
    seed=None,
    sample_rate: float = SAMPLE_RATE,
    band: str = "808nm",
    fundamental: float | None = None,
) -> TimeSeriesRecording:
    """Simulate one insect transit for ``profile``.

    The fundamental is drawn from a lognormal around ``wbf_mean`` unless
    given explicitly (both bands of one transit share it).
    """
    profile.validate()
    if duration * sample_rate < SEGMENT_LENGTH:
        raise ConfigError(
            f"duration {duration}s gives fewer than {SEGMENT_LENGTH} samples"
        )
    rng = _as_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    if fundamental is None:
        fundamental = draw_fundamental(profile, rng)

    env = np.exp(-0.5 * ((t - duration / 2) / (duration / 5)) ** 2)
    harm_gain = _BAND_HARM.get(band, 1.0)
    wings = np.zeros(n)
    for h in range(1, profile.harmonic_count + 1):
        f = h * fundamental
        if f >= sample_rate / 2:
            break
        amp = harm_gain * profile.harmonic_decay ** (h - 1) * math.exp(0.15 * rng.standard_normal())
        wings += amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    body = profile.body_level * _BAND_BODY.get(band, 1.0)
    x = env * (body + wings)
    x += profile.noise_level * rng.standard_normal(n)
    return TimeSeriesRecording(AMPLITUDE * x, sample_rate, band)


def draw_fundamental(profile: SpeciesProfile, rng) -> float:
    rng = _as_rng(rng)
    if profile.wbf_spread == 0:
        return profile.wbf_mean
    sigma = math.sqrt(math.log1p(profile.wbf_spread**2))
    return profile.wbf_mean * math.exp(sigma * rng.standard_normal())


def synthesize_spectrum(profile: SpeciesProfile, seed, duration: float = 0.25) -> np.ndarray:
    """Two-band transit -> preprocessed 193-bin spectrum."""
    rng = _as_rng(seed)
    f0 = draw_fundamental(profile, rng)
    psds = [
        welch_psd(synthesize_recording(profile, duration, rng, band=b, fundamental=f0))
        for b in BANDS
    ]
    return preprocess(psds).bins


def _record_seed(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, index]))


def generate_dataset(
    profiles: Sequence[SpeciesProfile],
    unlabelled_count: int,
    labelled_per_species: int,
    seed: int = 0,
    weights: Sequence[float] | None = None,
    duration: float = 0.25,
) -> tuple[SpectrumBatch, SpectrumBatch]:
    """Synthesize an unlabelled mixture and a per-species labelled set.

    Every record gets its own generator seeded from ``(seed, stream, index)``,
    so any subset of records can be regenerated independently.
    """
    if not profiles:
        raise ConfigError("need at least one species profile")
    if unlabelled_count <= 0 or labelled_per_species <= 0:
        raise ConfigError("record counts must be positive")
    for p in profiles:
        p.validate()
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ConfigError("species names must be unique")
    if weights is None:
        weights = np.ones(len(profiles))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(profiles),) or np.any(weights < 0) or weights.sum() <= 0:
        raise ConfigError("mixture weights must be non-negative, one per profile, not all zero")

    choice_rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    species = choice_rng.choice(len(profiles), size=unlabelled_count, p=weights / weights.sum())
    u_bins = np.empty((unlabelled_count, N_BINS))
    for i, k in enumerate(species):
        u_bins[i] = synthesize_spectrum(profiles[k], _record_seed(seed, 1, i), duration)
    unlabelled = SpectrumBatch(
        [f"u{i:06d}" for i in range(unlabelled_count)],
        u_bins,
        [None] * unlabelled_count,
        [names[k] for k in species],
    )

    n_lab = labelled_per_species * len(profiles)
    l_bins = np.empty((n_lab, N_BINS))
    l_labels = []
    for i in range(n_lab):
        k = i // labelled_per_species
        l_bins[i] = synthesize_spectrum(profiles[k], _record_seed(seed, 2, i), duration)
        l_labels.append(names[k])
    labelled = SpectrumBatch([f"l{i:06d}" for i in range(n_lab)], l_bins, l_labels, list(l_labels))
    return unlabelled, labelled


# --- CSV -------------------------------------------------------------------

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def spectra_header(n_bins: int = N_BINS) -> list[str]:
    return ["id", "label"] + [f"f{j:03d}" for j in range(n_bins)]


def write_spectra_csv(batch: SpectrumBatch, path, labels: Iterable | None = None) -> None:
    labels = batch.labels if labels is None else list(labels)
    lines = [",".join(spectra_header(batch.bins.shape[1]))]
    for rid, lab, row in zip(batch.ids, labels, batch.bins):
        lines.append(",".join([rid, "" if lab is None else str(lab)] + [fmt(v) for v in row]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_spectra_csv(path) -> SpectrumBatch:
    text = Path(path).read_text(encoding="utf-8")
    rows = text.splitlines()
    if not rows:
        raise InputError(f"{path}: empty spectra file")
    header = rows[0].split(",")
    if header[:2] != ["id", "label"] or not all(h.startswith("f") for h in header[2:]):
        raise InputError(f"{path}: bad header, expected id,label,f000,...")
    ids, labels, data = [], [], []
    for lineno, line in enumerate(rows[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
        try:
            data.append([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
        ids.append(parts[0])
        labels.append(parts[1] or None)
    bins = np.array(data, dtype=np.float64).reshape(len(ids), len(header) - 2)
    return SpectrumBatch(ids, bins, labels)


def write_labels_csv(ids, labels, path, header=("id", "label")) -> None:
    lines = [",".join(header)] + [f"{i},{'' if l is None else l}" for i, l in zip(ids, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels_csv(path) -> dict:
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows:
        raise InputError(f"{path}: empty file")
    out = {}
    for line in rows[1:]:
        if not line:
            continue
        rid, _, lab = line.partition(",")
        out[rid] = lab or None
    return out


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)

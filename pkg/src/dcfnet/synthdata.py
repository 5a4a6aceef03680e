"""Deterministic synthetic two-speaker mixtures.

Parametric "speakers" (f0 range, spectral tilt, formants, vibrato) stand in
for a licensed speech corpus. Mixtures follow y = s + sum_i b_i exactly,
where the b_i are the scaled interfering speaker, optional band-limited
noise, and (in the reverberant condition) the target's own reverberant tail.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from .dsp import SAMPLE_RATE
from .wavio import read_wav, write_wav

CONDITIONS = ("clean", "noisy", "reverberant")
MANIFEST_FIELDS = ("id", "mix", "enroll", "target", "spk_target", "spk_interf", "snr_db", "condition", "seed")


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0_base: float
    f0_range: float
    harmonic_tilt: float  # dB per octave, negative
    formant_centers: tuple
    vibrato_rate: float

    def __post_init__(self):
        if not 80.0 <= self.f0_base <= 300.0:
            raise ValueError(f"f0_base {self.f0_base} Hz outside [80, 300]")
        if any(f >= SAMPLE_RATE / 2 for f in self.formant_centers):
            raise ValueError("formants must lie below Nyquist")


@dataclass
class MixtureExample:
    mixture: np.ndarray
    target: np.ndarray
    interference: list = field(default_factory=list)
    enrollment: np.ndarray | None = None
    snr_db: float = 0.0
    condition: str = "clean"


def random_profile(speaker_id: str, rng: np.random.Generator, f0_base: float | None = None) -> SpeakerProfile:
    f0 = float(rng.uniform(90.0, 280.0)) if f0_base is None else float(f0_base)
    return SpeakerProfile(
        speaker_id=speaker_id,
        f0_base=f0,
        f0_range=float(0.1 * f0),
        harmonic_tilt=float(rng.uniform(-12.0, -8.0)),
        formant_centers=(float(rng.uniform(300, 800)), float(rng.uniform(900, 2200)), float(rng.uniform(2300, 3300))),
        vibrato_rate=float(rng.uniform(4.0, 7.0)),
    )


def speaker_pool(n_speakers: int, seed: int) -> list[SpeakerProfile]:
    """Speakers with f0 spread evenly over [90, 280] Hz (jittered), other traits random."""
    rng = np.random.default_rng([seed, 17])
    edges = np.linspace(90.0, 280.0, n_speakers + 1)
    f0s = edges[:-1] + rng.uniform(0.2, 0.8, n_speakers) * np.diff(edges)
    order = rng.permutation(n_speakers)
    return [random_profile(f"spk{k:03d}", rng, f0s[order[k]]) for k in range(n_speakers)]


def _smooth_contour(rng, n, sr, rate_hz):
    """Random smooth curve in [-0.5, 0.5] with knots every 1/rate_hz seconds."""
    n_knots = max(int(math.ceil(n / sr * rate_hz)) + 2, 3)
    knots = rng.uniform(-0.5, 0.5, n_knots)
    x = np.linspace(0, n_knots - 1, n)
    idx = np.minimum(x.astype(int), n_knots - 2)
    frac = x - idx
    w = 0.5 - 0.5 * np.cos(np.pi * frac)
    return knots[idx] * (1 - w) + knots[idx + 1] * w


def _syllable_envelope(rng, n, sr):
    env = np.zeros(n)
    pos, first = 0, True
    while pos < n:
        length = int(rng.uniform(0.12, 0.3) * sr)
        voiced = first or rng.random() > 0.15
        if voiced:
            seg = min(length, n - pos)
            hump = np.sin(np.pi * np.arange(length) / length) ** 0.6
            env[pos:pos + seg] = rng.uniform(0.5, 1.0) * hump[:seg]
        pos += length
        first = False
    return env


def synth_utterance(profile: SpeakerProfile, duration: float, seed: int, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Harmonic voice-like signal for ``profile``, peak-normalised to 0.5."""
    if not 0.5 <= duration <= 10.0:
        raise ValueError(f"duration {duration} s outside [0.5, 10]")
    rng = np.random.default_rng([seed, 1])
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    f0 = profile.f0_base + profile.f0_range * _smooth_contour(rng, n, sr, 3.0)
    f0 = f0 * (1.0 + 0.01 * np.sin(2 * np.pi * profile.vibrato_rate * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    n_harm = int((0.95 * sr / 2) // (profile.f0_base + profile.f0_range))
    k = np.arange(1, n_harm + 1)[:, None]
    freqs = k * f0[None, :]
    gain = 1.0 + sum(np.exp(-(((freqs - fc) / 150.0) ** 2)) for fc in profile.formant_centers)
    amp = 10.0 ** (profile.harmonic_tilt * np.log2(k) / 20.0) * gain
    amp = np.where(freqs < 0.95 * sr / 2, amp, 0.0)
    offsets = rng.uniform(0, 2 * np.pi, (n_harm, 1))
    x = (amp * np.sin(k * phase[None, :] + offsets)).sum(axis=0)
    x = x * _syllable_envelope(rng, n, sr)
    return 0.5 * x / np.abs(x).max()


def _mix(s: np.ndarray, components) -> np.ndarray:
    y = s.copy()
    for b in components:
        y = y + b
    return y


def _energy(x) -> float:
    return float(np.dot(x, x))


def make_mixture(s, b, snr_db: float) -> MixtureExample:
    """Rescale ``b`` so the target-to-interference energy ratio is ``snr_db``; y = s + b."""
    s = np.asarray(s, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if s.shape != b.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {b.shape}")
    es, eb = _energy(s), _energy(b)
    if es == 0 or eb == 0:
        raise ValueError("cannot mix zero-energy signals")
    b_scaled = b * math.sqrt(es / (eb * 10.0 ** (snr_db / 10.0)))
    return MixtureExample(_mix(s, [b_scaled]), s, [b_scaled], None, float(snr_db), "clean")


def band_noise(n: int, seed: int, sr: int = SAMPLE_RATE) -> np.ndarray:
    rng = np.random.default_rng([seed, 2])
    lo = rng.uniform(80.0, 400.0)
    hi = rng.uniform(1500.0, 3600.0)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    return signal.sosfilt(sos, rng.standard_normal(n))


def add_noise(ex: MixtureExample, noise_snr_db: float, seed: int) -> MixtureExample:
    """Append band-limited noise at ``noise_snr_db`` relative to the target."""
    if ex.condition != "clean":
        raise ValueError(f"add_noise expects a clean example, got {ex.condition}")
    noise = band_noise(ex.target.size, seed)
    noise *= math.sqrt(_energy(ex.target) / (_energy(noise) * 10.0 ** (noise_snr_db / 10.0)))
    comps = list(ex.interference) + [noise]
    return MixtureExample(_mix(ex.target, comps), ex.target, comps, ex.enrollment, ex.snr_db, "noisy")


def synth_rir(rt60: float, seed: int, sr: int = SAMPLE_RATE, drr_db: float = 3.0) -> np.ndarray:
    """Unit direct tap followed by exponentially decaying noise reaching -60 dB at ``rt60``."""
    if not 0.1 <= rt60 <= 1.0:
        raise ValueError(f"rt60 {rt60} s outside [0.1, 1.0]")
    rng = np.random.default_rng([seed, 3])
    n = int(math.ceil(rt60 * sr)) + 1
    decay = 3.0 * math.log(10.0) / (rt60 * sr)  # amplitude -60 dB at rt60
    tail = rng.standard_normal(n) * np.exp(-decay * np.arange(n))
    tail[0] = 0.0
    tail *= math.sqrt(10.0 ** (-drr_db / 10.0) / _energy(tail))
    tail[0] = 1.0
    return tail


def apply_rir(x: np.ndarray, rir: np.ndarray) -> np.ndarray:
    return signal.fftconvolve(x, rir)[: x.size]


def estimate_rt60(rir: np.ndarray, sr: int = SAMPLE_RATE, lo_db: float = -5.0, hi_db: float = -25.0) -> float:
    """Schroeder backward-integration estimate, line fit between ``lo_db`` and ``hi_db``."""
    tail = np.asarray(rir[1:], dtype=np.float64)
    edc = np.cumsum((tail ** 2)[::-1])[::-1]
    edc_db = 10.0 * np.log10(edc / edc[0])
    sel = (edc_db <= lo_db) & (edc_db >= hi_db)
    slope, _ = np.polyfit(np.arange(tail.size)[sel] / sr, edc_db[sel], 1)
    return -60.0 / slope


def add_reverb(ex: MixtureExample, rt60: float, seed: int, reverberant_target: bool = False) -> MixtureExample:
    """Convolve every source with its own synthetic RIR and rebuild the mixture.

    By default the training target stays the anechoic source and its
    reverberant tail becomes an extra interference component.
    """
    s_rev = apply_rir(ex.target, synth_rir(rt60, seed))
    others = [apply_rir(b, synth_rir(rt60, seed + 7919 * (i + 1))) for i, b in enumerate(ex.interference)]
    if reverberant_target:
        target, comps = s_rev, others
    else:
        target, comps = ex.target, [s_rev - ex.target] + others
    return MixtureExample(_mix(target, comps), target, comps, ex.enrollment, ex.snr_db, "reverberant")


def utterance_seeds(record_seed: int) -> tuple[int, int, int, int]:
    """(target, interferer, target enrollment, interferer enrollment) utterance seeds."""
    rng = np.random.default_rng([record_seed, 4])
    seeds = [int(v) for v in rng.integers(0, 2**31 - 1, 4)]
    while seeds[2] == seeds[0]:
        seeds[2] = int(rng.integers(0, 2**31 - 1))
    while seeds[3] == seeds[1]:
        seeds[3] = int(rng.integers(0, 2**31 - 1))
    return seeds[0], seeds[1], seeds[2], seeds[3]


def _stratified_snrs(n: int, rng: np.random.Generator, lo=0.0, hi=5.0) -> np.ndarray:
    return lo + (hi - lo) * (rng.permutation(n) + rng.uniform(0, 1, n)) / n


def build_dataset(
    n_train: int,
    n_test: int,
    n_speakers: int,
    condition: str,
    seed: int,
    out_dir,
    duration: float = 1.0,
    enroll_duration: float = 1.0,
    disjoint_speakers: bool = False,
    rt60: float = 0.3,
    noise_snr_db: float = 10.0,
) -> list[dict]:
    """Write WAVs under ``out_dir/items/<id>/`` plus ``out_dir/manifest.jsonl``.

    Record ids are ``train-NNNNN`` / ``test-NNNNN``. Each item directory also
    holds ``interf.wav`` (the scaled interfering speaker) and
    ``enroll_interf.wav`` so the other speaker can be extracted as well.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"condition must be one of {CONDITIONS}")
    if n_speakers < 4:
        raise ValueError("need at least 4 speakers")
    out_dir = Path(out_dir)
    speakers = speaker_pool(n_speakers, seed)
    if disjoint_speakers:
        half = n_speakers // 2
        pools = {"train": speakers[:half], "test": speakers[half:]}
    else:
        pools = {"train": speakers, "test": speakers}
    rng = np.random.default_rng([seed, 5])
    records = []
    index = 0
    for split, count in (("train", n_train), ("test", n_test)):
        snrs = _stratified_snrs(count, rng)
        pool = pools[split]
        for j in range(count):
            record_seed = seed * 1_000_003 + index
            index += 1
            pick = np.random.default_rng([record_seed, 6]).choice(len(pool), 2, replace=False)
            spk_t, spk_i = pool[pick[0]], pool[pick[1]]
            t_seed, i_seed, e_seed, ei_seed = utterance_seeds(record_seed)
            s = synth_utterance(spk_t, duration, t_seed)
            b = synth_utterance(spk_i, duration, i_seed)
            ex = make_mixture(s, b, float(snrs[j]))
            if condition == "noisy":
                ex = add_noise(ex, noise_snr_db, record_seed)
            elif condition == "reverberant":
                ex = add_reverb(ex, rt60, record_seed)
            ex.enrollment = synth_utterance(spk_t, enroll_duration, e_seed)
            rid = f"{split}-{j:05d}"
            item = Path("items") / rid
            write_wav(out_dir / item / "mix.wav", ex.mixture)
            write_wav(out_dir / item / "target.wav", ex.target)
            write_wav(out_dir / item / "enroll.wav", ex.enrollment)
            speech_interf = ex.interference[1] if condition == "reverberant" else ex.interference[0]
            write_wav(out_dir / item / "interf.wav", speech_interf)
            write_wav(out_dir / item / "enroll_interf.wav", synth_utterance(spk_i, enroll_duration, ei_seed))
            records.append({
                "id": rid,
                "mix": str(item / "mix.wav"),
                "enroll": str(item / "enroll.wav"),
                "target": str(item / "target.wav"),
                "spk_target": spk_t.speaker_id,
                "spk_interf": spk_i.speaker_id,
                "snr_db": float(snrs[j]),
                "condition": condition,
                "seed": record_seed,
            })
    write_manifest(out_dir / "manifest.jsonl", records)
    (out_dir / "speakers.json").write_text(json.dumps([asdict(p) for p in speakers], indent=1) + "\n")
    return records


def write_manifest(path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({k: rec[k] for k in MANIFEST_FIELDS}) + "\n")


def read_manifest(path) -> list[dict]:
    """Load records, resolving relative paths against the manifest's directory."""
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = [k for k in MANIFEST_FIELDS if k not in rec]
            if missing:
                raise ValueError(f"{path}:{lineno}: record lacks {missing}")
            for key in ("mix", "enroll", "target"):
                p = Path(rec[key])
                rec[key] = str(p if p.is_absolute() else path.parent / p)
            records.append(rec)
    return records


def load_item(rec: dict) -> dict:
    """Read the waveforms of one manifest record (plus optional partner files)."""
    item = {k: read_wav(rec[k]) for k in ("mix", "enroll", "target")}
    base = Path(rec["mix"]).parent
    if (base / "interf.wav").exists() and (base / "enroll_interf.wav").exists():
        item["interf"] = read_wav(base / "interf.wav")
        item["enroll_interf"] = read_wav(base / "enroll_interf.wav")
    return item

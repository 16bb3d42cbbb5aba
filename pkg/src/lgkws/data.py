"""Datasets: directory ingestion, synthetic corpus, silence, batching, cache.

Real data follows the speech-commands layout: one directory per word full of
1-second WAV files, a `_background_noise_` directory, and validation/testing
list files holding one `word/file.wav` relative path per line. The v1 label
map has 10 target keywords plus `unknown` and `silence`; v2 adds four more
keywords. `unknown` and `silence` always occupy the last two indices.

The synthetic corpus gives every pseudo-word a fixed signature (three seeded
sinusoids under a class-specific envelope) and varies only the additive noise
between samples, so classes are trivially separable and training smoke tests
stay fast.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .anchors import AnchorStore, fallback_anchors
from .frontend import MfccConfig, compute_mfcc, pad_or_crop, read_wav, write_wav
from .rng import derive_rng

V1_KEYWORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
V2_KEYWORDS = V1_KEYWORDS + ("backward", "forward", "follow", "learn")

UNKNOWN = "unknown"
SILENCE = "silence"

SYNTH_SNR_DB = 20.0
SYNTH_PEAK = 0.5


class DatasetError(ValueError):
    """Unusable dataset root: missing directories, lists, or noise files."""


@dataclass
class Utterance:
    uid: str
    word: str  # spoken word, or "silence"
    label: str  # class label: a keyword, "unknown", or "silence"
    kind: str  # "file" | "synth" | "synth_silence" | "noise_crop"
    path: str | None = None
    speaker: str = ""
    duration: int = 16000
    synth_seed: int = 0
    synth_class: int = -1
    synth_index: int = -1
    offset: int = 0
    gain: float = 1.0


@dataclass
class DatasetSplit:
    train: list[Utterance]
    valid: list[Utterance]
    test: list[Utterance]
    label_map: dict[str, int]
    version: str
    keywords: tuple[str, ...]

    @property
    def num_classes(self) -> int:
        return len(self.label_map)

    def keyword_indices(self) -> list[int]:
        return [self.label_map[k] for k in self.keywords]

    def split(self, name: str) -> list[Utterance]:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split '{name}'") from None

    def words_in_training(self) -> list[str]:
        return sorted({u.word for u in self.train})


def label_map_for(version: str, synth_words: list[str] | None = None,
                  include_silence: bool = True) -> dict[str, int]:
    """Class label -> index; `unknown` and `silence` take the last two slots."""
    if version == "v1":
        ordered = list(V1_KEYWORDS) + [UNKNOWN, SILENCE]
    elif version == "v2":
        ordered = list(V2_KEYWORDS) + [UNKNOWN, SILENCE]
    elif version == "synthetic":
        if synth_words is None:
            raise ValueError("synthetic label map needs the word list")
        ordered = sorted(synth_words) + ([SILENCE] if include_silence else [])
    else:
        raise ValueError(f"unknown dataset version '{version}'")
    return {label: i for i, label in enumerate(ordered)}


# ---------------------------------------------------------------------------
# directory ingestion


def _read_list_file(root: str, stem: str) -> set[str]:
    for candidate in (f"{stem}_list.txt", f"{stem}.list"):
        path = os.path.join(root, candidate)
        if os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return {line.strip() for line in fh if line.strip()}
    raise DatasetError(f"missing list file: {stem}_list.txt or {stem}.list under {root}")


def scan_dataset(
    root: str,
    version: str,
    seed: int = 0,
    duration: int = 16000,
    silence_per_split: dict[str, int] | None = None,
    include_silence: bool = True,
) -> DatasetSplit:
    """Walk a speech-commands style tree into train/valid/test utterance lists.

    Word directories become utterances; paths named by the validation and
    testing lists go to those splits, everything else trains. For v1/v2 the
    fixed keyword set must be present and all other words collapse to
    `unknown`; version "synthetic" treats every word directory as a keyword.
    Silence samples are cropped from `_background_noise_` with seeded offsets
    and gains; counts default to the keyword-average per split.
    """
    if not os.path.isdir(root):
        raise DatasetError(f"dataset root '{root}' is not a directory")

    word_dirs = sorted(
        d for d in os.listdir(root)
        if os.path.isdir(os.path.join(root, d)) and d != "_background_noise_"
    )
    if not word_dirs:
        raise DatasetError(f"no word directories under '{root}'")

    if version in ("v1", "v2"):
        keywords = V1_KEYWORDS if version == "v1" else V2_KEYWORDS
        missing = sorted(set(keywords) - set(word_dirs))
        if missing:
            raise DatasetError(f"missing keyword directories: {', '.join(missing)}")
    elif version == "synthetic":
        keywords = tuple(word_dirs)
    else:
        raise DatasetError(f"unknown dataset version '{version}'")

    valid_paths = _read_list_file(root, "validation")
    test_paths = _read_list_file(root, "testing")

    if version == "synthetic":
        label_map = label_map_for("synthetic", list(keywords), include_silence)
    else:
        label_map = label_map_for(version)

    splits: dict[str, list[Utterance]] = {"train": [], "valid": [], "test": []}
    for word in word_dirs:
        label = word if word in keywords else UNKNOWN
        wdir = os.path.join(root, word)
        for fname in sorted(os.listdir(wdir)):
            if not fname.endswith(".wav"):
                continue
            rel = f"{word}/{fname}"
            target = "test" if rel in test_paths else "valid" if rel in valid_paths else "train"
            speaker = fname.split("_nohash_")[0] if "_nohash_" in fname else os.path.splitext(fname)[0]
            splits[target].append(
                Utterance(
                    uid=rel,
                    word=word,
                    label=label,
                    kind="file",
                    path=os.path.join(wdir, fname),
                    speaker=speaker,
                    duration=duration,
                )
            )

    if include_silence:
        noise_dir = os.path.join(root, "_background_noise_")
        noise_files = (
            sorted(
                os.path.join(noise_dir, f)
                for f in os.listdir(noise_dir)
                if f.endswith(".wav")
            )
            if os.path.isdir(noise_dir)
            else []
        )
        for split_name in ("train", "valid", "test"):
            if silence_per_split is not None:
                count = int(silence_per_split.get(split_name, 0))
            else:
                per_kw = [
                    sum(1 for u in splits[split_name] if u.word == k) for k in keywords
                ]
                count = int(round(float(np.mean(per_kw)))) if per_kw else 0
            splits[split_name].extend(
                make_silence_samples(noise_files, count, seed, split_name, duration)
            )

    return DatasetSplit(
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        label_map=label_map,
        version=version,
        keywords=keywords,
    )


def make_silence_samples(
    noise_files: list[str], count: int, seed: int, split: str, duration: int = 16000
) -> list[Utterance]:
    """Seeded crops of the background recordings, amplitude-scaled by [0, 1)."""
    if count <= 0:
        return []
    if not noise_files:
        raise DatasetError(f"silence requested for split '{split}' but no noise files exist")

    lengths = {}
    for path in noise_files:
        wav, _sr = read_wav(path)
        lengths[path] = wav.shape[0]
    usable = [p for p in noise_files if lengths[p] >= duration]
    if not usable:
        raise DatasetError(f"no noise file is at least {duration} samples long")

    rng = derive_rng(seed, "silence", split)
    out = []
    for i in range(count):
        path = usable[int(rng.integers(len(usable)))]
        offset = int(rng.integers(lengths[path] - duration + 1))
        gain = float(rng.uniform(0.0, 1.0))
        out.append(
            Utterance(
                uid=f"silence/{split}/{i:05d}",
                word=SILENCE,
                label=SILENCE,
                kind="noise_crop",
                path=path,
                duration=duration,
                offset=offset,
                gain=gain,
            )
        )
    return out


# ---------------------------------------------------------------------------
# synthetic corpus


def _synth_signature(seed: int, class_idx: int, duration: int) -> np.ndarray:
    """Deterministic clean waveform for one pseudo-word."""
    rng = derive_rng(seed, "synth-class", class_idx)
    freqs = [
        rng.uniform(250.0, 900.0),
        rng.uniform(900.0, 2200.0),
        rng.uniform(2200.0, 5000.0),
    ]
    amps = rng.uniform(0.5, 1.0, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    env_power = rng.uniform(0.6, 1.8)

    t = np.arange(duration, dtype=np.float64) / 16000.0
    u = np.linspace(0.0, 1.0, duration)
    envelope = np.sin(np.pi * u) ** env_power
    clean = sum(
        a * np.sin(2.0 * np.pi * f * t + ph) for a, f, ph in zip(amps, freqs, phases)
    )
    clean = clean * envelope
    peak = np.max(np.abs(clean))
    return clean * (SYNTH_PEAK / peak) if peak > 0 else clean


def synth_waveform(seed: int, class_idx: int, sample_idx: int, duration: int = 16000) -> np.ndarray:
    """Signature plus sample-specific noise at SYNTH_SNR_DB."""
    clean = _synth_signature(seed, class_idx, duration)
    clean_rms = float(np.sqrt(np.mean(clean ** 2)))
    noise_rms = clean_rms / (10.0 ** (SYNTH_SNR_DB / 20.0))
    noise = derive_rng(seed, "synth-noise", class_idx, sample_idx).standard_normal(duration)
    return clean + noise * noise_rms


def synth_silence_waveform(seed: int, sample_idx: int, duration: int = 16000) -> np.ndarray:
    rng = derive_rng(seed, "synth-silence", sample_idx)
    gain = float(rng.uniform(0.0, 1.0))
    return rng.standard_normal(duration) * 0.02 * gain


def synth_dataset(
    num_classes: int,
    samples_per_class: int,
    seed: int,
    duration: int = 16000,
    include_silence: bool = False,
    anchor_dim: int = 768,
) -> tuple[DatasetSplit, AnchorStore]:
    """In-memory synthetic dataset with an 80/10/10 split and paired anchors."""
    if num_classes < 1 or samples_per_class < 1:
        raise ValueError("num_classes and samples_per_class must be positive")
    words = [f"word{k:02d}" for k in range(num_classes)]
    label_map = label_map_for("synthetic", words, include_silence)

    n_train = int(samples_per_class * 0.8)
    n_valid = int(samples_per_class * 0.1)

    splits: dict[str, list[Utterance]] = {"train": [], "valid": [], "test": []}
    for k, word in enumerate(words):
        for idx in range(samples_per_class):
            target = (
                "train" if idx < n_train else "valid" if idx < n_train + n_valid else "test"
            )
            splits[target].append(
                Utterance(
                    uid=f"synth/{word}/{idx:04d}/seed{seed}/d{duration}",
                    word=word,
                    label=word,
                    kind="synth",
                    duration=duration,
                    synth_seed=seed,
                    synth_class=k,
                    synth_index=idx,
                )
            )

    if include_silence:
        counter = 0
        for target in ("train", "valid", "test"):
            per = {"train": n_train, "valid": n_valid,
                   "test": samples_per_class - n_train - n_valid}[target]
            for _ in range(per):
                splits[target].append(
                    Utterance(
                        uid=f"synth/silence/{counter:04d}/seed{seed}/d{duration}",
                        word=SILENCE,
                        label=SILENCE,
                        kind="synth_silence",
                        duration=duration,
                        synth_seed=seed,
                        synth_index=counter,
                    )
                )
                counter += 1

    store = fallback_anchors(words, dim=anchor_dim, seed=seed)
    split = DatasetSplit(
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        label_map=label_map,
        version="synthetic",
        keywords=tuple(sorted(words)),
    )
    return split, store


def materialize_synthetic(
    out_dir: str,
    num_classes: int,
    samples_per_class: int,
    seed: int,
    duration: int = 16000,
    anchor_dim: int = 768,
) -> None:
    """Write the synthetic corpus as a speech-commands style directory tree.

    Produces word directories of WAV files, validation/testing lists, a
    `_background_noise_` recording for silence crops, and the paired
    `anchors.json`.
    """
    split, store = synth_dataset(
        num_classes, samples_per_class, seed, duration, include_silence=False,
        anchor_dim=anchor_dim,
    )
    os.makedirs(out_dir, exist_ok=True)

    lists = {"valid": [], "test": []}
    for name, utts in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        for u in utts:
            wdir = os.path.join(out_dir, u.word)
            os.makedirs(wdir, exist_ok=True)
            fname = f"{u.word}_{u.synth_index:04d}.wav"
            write_wav(os.path.join(wdir, fname), load_waveform(u))
            if name in ("valid", "test"):
                lists[name].append(f"{u.word}/{fname}")

    with open(os.path.join(out_dir, "validation.list"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(sorted(lists["valid"])) + "\n")
    with open(os.path.join(out_dir, "testing.list"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(sorted(lists["test"])) + "\n")

    noise_dir = os.path.join(out_dir, "_background_noise_")
    os.makedirs(noise_dir, exist_ok=True)
    noise = derive_rng(seed, "background").standard_normal(16000 * 10) * 0.05
    write_wav(os.path.join(noise_dir, "synthetic_noise.wav"), noise)

    from .anchors import save_anchor_file

    save_anchor_file(os.path.join(out_dir, "anchors.json"), store)


# ---------------------------------------------------------------------------
# waveform and feature access


def load_waveform(utt: Utterance) -> np.ndarray:
    if utt.kind == "file":
        wav, _sr = read_wav(utt.path)
        return pad_or_crop(wav, utt.duration)
    if utt.kind == "synth":
        return synth_waveform(utt.synth_seed, utt.synth_class, utt.synth_index, utt.duration)
    if utt.kind == "synth_silence":
        return synth_silence_waveform(utt.synth_seed, utt.synth_index, utt.duration)
    if utt.kind == "noise_crop":
        wav, _sr = read_wav(utt.path)
        crop = wav[utt.offset : utt.offset + utt.duration]
        return pad_or_crop(crop, utt.duration) * utt.gain
    raise ValueError(f"unknown utterance kind '{utt.kind}'")


class FeatureCache:
    """MFCC feature store keyed by utterance content and front-end config.

    File-backed utterances key on a hash of the file bytes, so a changed
    recording never serves stale features; synthetic utterances are fully
    described by their uid. Cached and fresh features are bit-identical.
    """

    def __init__(self, cfg: MfccConfig | None = None, cache_dir: str | None = None,
                 dtype=np.float32):
        self.cfg = cfg or MfccConfig()
        self.cache_dir = cache_dir
        self.dtype = np.dtype(dtype)
        self._mem: dict[str, np.ndarray] = {}
        self._content_ids: dict[str, str] = {}
        self._cfg_tag = hashlib.sha256(
            json.dumps(self.cfg.to_dict(), sort_keys=True).encode()
            + str(self.dtype).encode()
        ).hexdigest()[:16]
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)

    def _content_id(self, utt: Utterance) -> str:
        if utt.kind == "file":
            if utt.uid not in self._content_ids:
                with open(utt.path, "rb") as fh:
                    digest = hashlib.sha256(fh.read()).hexdigest()
                self._content_ids[utt.uid] = f"file:{digest}:{utt.duration}"
            return self._content_ids[utt.uid]
        if utt.kind == "noise_crop":
            return f"crop:{utt.path}:{utt.offset}:{utt.gain!r}:{utt.duration}"
        return f"gen:{utt.uid}"

    def key(self, utt: Utterance) -> str:
        payload = f"{self._content_id(utt)}|{self._cfg_tag}"
        return hashlib.sha256(payload.encode()).hexdigest()

    def get(self, utt: Utterance) -> np.ndarray:
        k = self.key(utt)
        if k in self._mem:
            return self._mem[k]
        if self.cache_dir:
            path = os.path.join(self.cache_dir, f"{k}.npy")
            if os.path.exists(path):
                feats = np.load(path)
                self._mem[k] = feats
                return feats
        feats = compute_mfcc(load_waveform(utt), self.cfg).astype(self.dtype)
        self._mem[k] = feats
        if self.cache_dir:
            np.save(os.path.join(self.cache_dir, f"{k}.npy"), feats)
        return feats


@dataclass
class Batch:
    feats: np.ndarray  # (B, T, F)
    labels: np.ndarray  # (B,) int64 class indices
    words: list[str]
    utts: list[Utterance]


def batch_iterator(
    utts: list[Utterance],
    label_map: dict[str, int],
    cache: FeatureCache,
    batch_size: int,
    rng: np.random.Generator | None = None,
    drop_silence: bool = False,
):
    """Yield feature batches; a seeded rng shuffles, otherwise order is kept.

    All batches contain exactly `batch_size` samples except possibly the
    last. Empty input (after silence filtering) is an error.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    pool = [u for u in utts if not (drop_silence and u.label == SILENCE)]
    if not pool:
        raise DatasetError("no utterances to batch")

    order = rng.permutation(len(pool)) if rng is not None else np.arange(len(pool))
    for start in range(0, len(pool), batch_size):
        chunk = [pool[int(i)] for i in order[start : start + batch_size]]
        feats = np.stack([cache.get(u) for u in chunk], axis=0)
        labels = np.asarray([label_map[u.label] for u in chunk], dtype=np.int64)
        yield Batch(feats=feats, labels=labels, words=[u.word for u in chunk], utts=chunk)

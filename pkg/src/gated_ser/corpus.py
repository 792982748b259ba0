"""Corpus ingestion: WAV I/O, label decoding, manifests, stratified splits.

The clean-speech corpus is EMO-DB: flat directory of 16-bit PCM mono WAV
files whose names encode speaker (chars 0-1) and emotion (char 5, German
initial). The noise corpus is one long 48 kHz recording per environment.
"""

import csv
import logging
import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyCorpusError,
    FormatError,
    LabelDecodeError,
    StratificationError,
    UnsupportedFormatError,
)

log = logging.getLogger(__name__)

INT16_FULL_SCALE = 32768.0


class EmotionLabel(IntEnum):
    ANGER = 0
    BOREDOM = 1
    DISGUST = 2
    FEAR = 3
    JOY = 4
    NEUTRAL = 5
    SADNESS = 6


# German-initial letters used by the corpus filenames.
LETTER_TO_LABEL = {
    "W": EmotionLabel.ANGER,    # Wut
    "L": EmotionLabel.BOREDOM,  # Langeweile
    "E": EmotionLabel.DISGUST,  # Ekel
    "A": EmotionLabel.FEAR,     # Angst
    "F": EmotionLabel.JOY,      # Freude
    "N": EmotionLabel.NEUTRAL,
    "T": EmotionLabel.SADNESS,  # Trauer
}

# Published per-class inventory of the full corpus (sums to 535).
EMODB_INVENTORY = {
    EmotionLabel.ANGER: 127,
    EmotionLabel.BOREDOM: 81,
    EmotionLabel.DISGUST: 46,
    EmotionLabel.FEAR: 69,
    EmotionLabel.JOY: 71,
    EmotionLabel.NEUTRAL: 79,
    EmotionLabel.SADNESS: 62,
}

NOISE_KINDS = ("traffic", "cafe", "living", "park", "washing", "car", "office", "river")


@dataclass(frozen=True)
class Utterance:
    id: str
    speaker: str
    label: EmotionLabel
    samples: np.ndarray
    sample_rate: int


@dataclass(frozen=True)
class NoiseRecording:
    kind: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: EmotionLabel
    speaker: str


@dataclass(frozen=True)
class Manifest:
    entries: tuple
    split_seed: int | None = None

    def __len__(self):
        return len(self.entries)

    def class_counts(self):
        counts = {label: 0 for label in EmotionLabel}
        for entry in self.entries:
            counts[entry.label] += 1
        return counts


# ---------------------------------------------------------------------------
# WAV I/O
#
# Hand-rolled RIFF reader: the error taxonomy (malformed vs unsupported vs
# truncated) has to be ours, and the stdlib reader folds them together.

def load_wav(path):
    """Read a RIFF/WAVE file; returns (float64 samples in [-1, 1), rate).

    16-bit integer PCM only; channel 0 is taken when there is more than one.
    Integer sample v maps to v / 32768.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body + 16 > len(raw):
                raise FormatError(f"{path}: malformed fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", raw, body)
        elif chunk_id == b"data":
            if fmt is None:
                raise FormatError(f"{path}: data chunk before fmt chunk")
            audio_format, channels, rate, _, block_align, bits = fmt
            if audio_format != 1:
                raise UnsupportedFormatError(
                    f"{path}: compressed or non-PCM format code {audio_format}")
            if bits != 16:
                raise UnsupportedFormatError(f"{path}: {bits}-bit samples, want 16")
            if channels < 1 or block_align != 2 * channels:
                raise FormatError(f"{path}: inconsistent channel layout")
            if body + chunk_size > len(raw):
                raise FormatError(f"{path}: truncated data chunk")
            if chunk_size % block_align != 0:
                raise FormatError(f"{path}: data size not a whole frame count")
            ints = np.frombuffer(raw, dtype="<i2", count=chunk_size // 2, offset=body)
            samples = ints.reshape(-1, channels)[:, 0].astype(np.float64)
            return samples / INT16_FULL_SCALE, rate
        # chunks are word-aligned: odd sizes carry a pad byte
        pos = body + chunk_size + (chunk_size & 1)
    raise FormatError(f"{path}: missing fmt or data chunk")


def write_wav(path, samples, sample_rate):
    """Write float samples as 16-bit PCM mono (test fixtures and mixes)."""
    samples = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.rint(samples * INT16_FULL_SCALE), -32768, 32767).astype("<i2")
    data = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(data), b"WAVE",
        b"fmt ", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16,
        b"data", len(data),
    )
    Path(path).write_bytes(header + data)


# ---------------------------------------------------------------------------
# labels and manifests

def decode_emodb_label(filename):
    """Emotion from the 6th character of the corpus's 7-character scheme."""
    stem = Path(filename).stem
    if len(stem) < 6:
        raise LabelDecodeError(f"{filename}: name too short for the corpus scheme")
    letter = stem[5]
    try:
        return LETTER_TO_LABEL[letter]
    except KeyError:
        raise LabelDecodeError(
            f"{filename}: unknown emotion letter {letter!r}") from None


def build_manifest(directory):
    """One manifest entry per WAV under `directory`, sorted by id.

    Logs a warning when the per-class counts differ from the published
    inventory, so partial corpora are visible but usable.
    """
    directory = Path(directory)
    paths = sorted(directory.rglob("*.wav"))
    if not paths:
        raise EmptyCorpusError(f"no WAV files under {directory}")
    entries = []
    for p in paths:
        label = decode_emodb_label(p.name)
        entries.append(ManifestEntry(id=p.stem, path=str(p), label=label,
                                     speaker=p.stem[:2]))
    manifest = Manifest(entries=tuple(entries))
    counts = manifest.class_counts()
    if counts != EMODB_INVENTORY:
        got = ", ".join(f"{k.name.lower()}={v}" for k, v in counts.items())
        log.warning("corpus inventory mismatch: got %s (expected the published "
                    "127/81/46/69/71/79/62)", got)
    return manifest


def stratified_split(manifest, train_fraction, seed):
    """Seeded per-class split; ceil(fraction * n) of each class to train.

    Deterministic for a fixed seed; train and validation partition the
    input exactly. Classes absent from the manifest are simply absent from
    both halves; an entirely empty manifest cannot be stratified.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    groups = {label: [] for label in EmotionLabel}
    for entry in manifest.entries:
        groups[entry.label].append(entry)
    if all(not g for g in groups.values()):
        raise StratificationError("no class has any members to stratify")
    rng = np.random.default_rng(seed)
    train, validation = [], []
    for label in EmotionLabel:
        group = groups[label]
        if not group:
            continue
        order = rng.permutation(len(group))
        n_train = math.ceil(train_fraction * len(group))
        for rank, idx in enumerate(order):
            (train if rank < n_train else validation).append(group[idx])
    train.sort(key=lambda e: e.id)
    validation.sort(key=lambda e: e.id)
    return (Manifest(entries=tuple(train), split_seed=seed),
            Manifest(entries=tuple(validation), split_seed=seed))


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "path", "label", "speaker"])
        for e in manifest.entries:
            writer.writerow([e.id, e.path, e.label.name.lower(), e.speaker])


def read_manifest(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "path", "label", "speaker"]:
            raise FormatError(f"{path}: unexpected manifest header {header}")
        entries = [
            ManifestEntry(id=row[0], path=row[1],
                          label=EmotionLabel[row[2].upper()], speaker=row[3])
            for row in reader if row
        ]
    return Manifest(entries=tuple(entries))


def load_utterance(entry):
    samples, rate = load_wav(entry.path)
    return Utterance(id=entry.id, speaker=entry.speaker, label=entry.label,
                     samples=samples, sample_rate=rate)


def load_noise(path, kind):
    samples, rate = load_wav(path)
    return NoiseRecording(kind=kind, samples=samples, sample_rate=rate)

"""Shared fixtures: a synthetic corpus shaped like the real one, plus noise."""

import numpy as np
import pytest

from gated_ser.corpus import LETTER_TO_LABEL, NOISE_KINDS, write_wav

SPEAKERS = ("03", "08", "09", "10")
UTT_SECONDS = 0.3
RATE = 16000


def _utterance_samples(label_idx, variant, rng):
    """Class-separable audio: per-class tone stack plus a little noise."""
    t = np.arange(int(UTT_SECONDS * RATE)) / RATE
    f0 = 400.0 + 200.0 * label_idx
    wave = (0.25 * np.sin(2 * np.pi * f0 * t)
            + 0.12 * np.sin(2 * np.pi * (2 * f0 + 30 * variant) * t)
            + 0.02 * rng.standard_normal(t.shape))
    return np.clip(wave, -0.999, 0.999)


def build_fixture_corpus(directory, per_class=4):
    """EMO-DB-style WAV tree: `per_class` files for each of the 7 letters."""
    rng = np.random.default_rng(20240901)
    paths = []
    for label_idx, letter in enumerate(sorted(LETTER_TO_LABEL, key=LETTER_TO_LABEL.get)):
        for variant in range(per_class):
            speaker = SPEAKERS[variant % len(SPEAKERS)]
            stem = f"{speaker}a{variant + 1:02d}{letter}a"
            path = directory / f"{stem}.wav"
            write_wav(path, _utterance_samples(label_idx, variant, rng), RATE)
            paths.append(path)
    return paths


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("emodb_fixture")
    build_fixture_corpus(directory)
    return directory


@pytest.fixture(scope="session")
def noise_dir(tmp_path_factory):
    """One 16 kHz recording per noise kind, longer than any fixture utterance."""
    directory = tmp_path_factory.mktemp("noise_fixture")
    rng = np.random.default_rng(777)
    for kind in NOISE_KINDS:
        samples = 0.08 * rng.standard_normal(RATE)  # 1 s
        write_wav(directory / f"{kind}.wav", samples, RATE)
    return directory


@pytest.fixture(scope="session")
def noise_dir_48k(tmp_path_factory):
    """A 48 kHz traffic recording, to exercise the resampling path."""
    directory = tmp_path_factory.mktemp("noise48_fixture")
    rng = np.random.default_rng(778)
    write_wav(directory / "traffic.wav", 0.08 * rng.standard_normal(96000), 48000)
    return directory

"""Contains shared fixtures for synthunits tests."""
import json

import numpy as np
import pytest

from synthunits.formats.fmat import (
    FeatureMatrix, SessionEmbedding, write_embedding, write_features
)
from synthunits.formats.wav import Waveform, write_wav
from synthunits.manifest import UtteranceRecord


RATE = 16000


def tone(freq, seconds=1.0, amp=0.5, rate=RATE, phase=0.0):
    """A pure sine tone as a Waveform."""
    t = np.arange(int(round(seconds * rate))) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), rate)


def white_noise(seconds=1.0, amp=0.1, seed=0, rate=RATE):
    """Seeded Gaussian white noise as a Waveform."""
    rng = np.random.default_rng(seed)
    samples = np.clip(rng.normal(0.0, amp, int(round(seconds * rate))),
                      -0.99, 0.99)
    return Waveform(samples, rate)


def record(uid, seconds=10.0, speaker='s1', gender='male', kind='natural',
           **kwargs):
    """A manifest record with sensible defaults."""
    return UtteranceRecord(uid, f'{uid}.wav', seconds, speaker, gender, kind,
                           **kwargs)


@pytest.fixture
def write_manifest_file(tmp_path):
    def _write_manifest_file(records, name='manifest.jsonl'):
        path = tmp_path / name
        with path.open('w', encoding='utf-8') as fh:
            for rec in records:
                data = rec.to_dict() if isinstance(rec, UtteranceRecord) \
                    else rec
                fh.write(json.dumps(data) + '\n')
        return path
    return _write_manifest_file


# Toy corpus: three phones, each a noisy copy of one centroid.
TOY_CENTROIDS = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
TOY_PHONES = ('a', 'b', 'c')


def toy_utterance(rng, num_frames=49, mean_run=8, sigma=0.3):
    """Random phone runs and their noisy features.

    Returns:
        A tuple (frames, labels) with labels as phone indices.
    """
    labels = []
    phone = int(rng.integers(3))
    while len(labels) < num_frames:
        run = int(rng.integers(max(2, mean_run - 3), mean_run + 4))
        labels.extend([phone] * run)
        phone = (phone + int(rng.integers(1, 3))) % 3
    labels = labels[:num_frames]
    frames = TOY_CENTROIDS[labels] + rng.normal(0.0, sigma, (num_frames, 2))
    return frames, labels


@pytest.fixture
def toy_corpus(tmp_path):
    """Writes a small corpus for pipeline runs and returns its paths.

    Four one-second utterances (49 frames at 50 Hz) with features,
    alignments, audio, embeddings, and phoneme text; a noise manifest;
    a natural manifest for composition; and a phone inventory.
    """
    rng = np.random.default_rng(1234)
    root = tmp_path / 'corpus'
    for sub in ('features', 'alignments', 'audio', 'embeddings', 'noise'):
        (root / sub).mkdir(parents=True)
    (root / 'phones.txt').write_text('\n'.join(TOY_PHONES) + '\n',
                                     encoding='utf-8')
    records = []
    for i in range(4):
        uid = f'utt{i}'
        frames, labels = toy_utterance(rng)
        write_features(FeatureMatrix(frames.astype(np.float32)),
                       root / 'features' / f'{uid}.fmat')
        with (root / 'alignments' / f'{uid}.ali').open('w') as fh:
            start = 0
            for j in range(1, len(labels) + 1):
                if j == len(labels) or labels[j] != labels[start]:
                    fh.write(f'{start} {j - 1} {TOY_PHONES[labels[start]]}\n')
                    start = j
        write_wav(tone(150.0 + 25 * i, 1.0, 0.4),
                  root / 'audio' / f'{uid}.wav')
        write_embedding(SessionEmbedding(rng.normal(size=4), uid),
                        root / 'embeddings' / f'{uid}.fmat')
        phones = []
        for lab in labels:
            if not phones or phones[-1] != TOY_PHONES[lab]:
                phones.append(TOY_PHONES[lab])
        records.append(UtteranceRecord(
            uid, f'audio/{uid}.wav', 1.0, f'spk{i % 2}',
            'male' if i % 2 else 'female', 'synthetic', ' '.join(phones)
        ))
    with (root / 'manifest.jsonl').open('w') as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + '\n')
    write_wav(white_noise(0.5, 0.2, seed=7), root / 'noise' / 'n0.wav')
    with (root / 'noise.jsonl').open('w') as fh:
        fh.write(json.dumps(UtteranceRecord(
            'n0', 'noise/n0.wav', 0.5, 'noise').to_dict()) + '\n')
    with (root / 'natural.jsonl').open('w') as fh:
        for i in range(2):
            fh.write(json.dumps(UtteranceRecord(
                f'nat{i}', f'audio/utt{i}.wav', 1.0, f'spk{i}').to_dict())
                + '\n')
    return root


TOY_CONFIG = """\
[pipeline]
stages = fit, dpdp, dedup, metrics, f0, targets, augment, compose
manifest = corpus/manifest.jsonl
features = corpus/features
output_dir = out
seed = 7

[fit]
k = 3
max_iters = 50

[dpdp]
lambda = 1.0
max_segment = 20

[metrics]
alignments = corpus/alignments

[targets]
embeddings = corpus/embeddings
phones = corpus/phones.txt

[augment]
stretch = 1.0:1.5
snr = 0:15
noise_manifest = corpus/noise.jsonl

[compose]
natural = corpus/natural.jsonl
rate = 9
epoch_size = 20
epochs = 2
"""


@pytest.fixture
def toy_config(tmp_path, toy_corpus):
    """Writes the full toy pipeline config next to the corpus."""
    path = tmp_path / 'pipeline.ini'
    path.write_text(TOY_CONFIG, encoding='utf-8')
    return path

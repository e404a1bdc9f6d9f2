"""Contains tests for the synthunits.manifest module."""
import json
from collections import Counter

import pytest

from synthunits.errors import InfeasibleSplitError, ManifestError
from synthunits.manifest import (
    build_split, load_manifest, Manifest, manifest_stats, save_manifest,
    UtteranceRecord
)

from .conftest import record


def full_scale_manifest():
    """400 speakers, half of each gender, 20 utterances of 60-120 s."""
    records = []
    for spk in range(400):
        gender = 'male' if spk % 2 else 'female'
        for utt in range(20):
            seconds = 60.0 + ((spk * 7 + utt * 13) % 61)
            records.append(record(f'spk{spk}-u{utt}', seconds, f'spk{spk}',
                                  gender))
    return Manifest(tuple(records))


@pytest.mark.parametrize('kwargs, match', [
    ({'id': ''}, 'id'),
    ({'duration_sec': -1.0}, 'duration_sec'),
    ({'duration_sec': float('nan')}, 'duration_sec'),
    ({'gender': 'other'}, 'gender'),
    ({'kind': 'tts'}, 'kind'),
    ({'weight': -0.5}, 'weight'),
])
def test_utterancerecord_validation(kwargs, match):
    data = {'id': 'u1', 'audio_path': 'u1.wav', 'duration_sec': 1.0,
            'speaker_id': 's1'}
    data.update(kwargs)
    with pytest.raises(ManifestError, match=match):
        UtteranceRecord(**data)


def test_utterancerecord_tags_become_frozenset():
    rec = record('u1', tags=['clean', 'clean', 'other'])
    assert rec.tags == frozenset({'clean', 'other'})
    assert rec.to_dict()['tags'] == ['clean', 'other']


def test_load_manifest_round_trip(tmp_path, write_manifest_file):
    records = [record('u1', 3.5, text='a b c', tags={'clean'}),
               record('u2', 1.25, 's2', 'female', 'synthetic', weight=2.0)]
    path = write_manifest_file(records)
    loaded = load_manifest(path)
    assert list(loaded) == records
    assert loaded.root == tmp_path
    assert loaded.resolve(loaded.records[0]) == tmp_path / 'u1.wav'
    out = tmp_path / 'sub' / 'copy.jsonl'
    save_manifest(loaded, out)
    assert load_manifest(out).records == loaded.records
    save_manifest(load_manifest(out), tmp_path / 'again.jsonl')
    assert (tmp_path / 'again.jsonl').read_bytes() == out.read_bytes()


def test_load_manifest_reports_duplicate_line(write_manifest_file):
    rows = [record(f'u{i}') for i in range(6)] + [record('u1')]
    path = write_manifest_file(rows)
    with pytest.raises(ManifestError) as excinfo:
        load_manifest(path)
    assert excinfo.value.line == 7
    assert 'line 7' in str(excinfo.value)
    assert "'u1'" in str(excinfo.value)
    assert 'line 2' in str(excinfo.value)


@pytest.mark.parametrize('line, match', [
    ('{"id": "u9"', 'Malformed'),
    ('[1, 2]', 'JSON object'),
    ('{"id": "u9", "audio_path": "x.wav", "duration_sec": 1, '
     '"speaker_id": "s", "gender": "male", "kind": "natural", "lang": "en"}',
     'Unknown'),
    ('{"id": "u9", "audio_path": "x.wav", "duration_sec": 1, '
     '"speaker_id": "s", "gender": "male"}', 'Missing'),
    ('{"id": "u9", "audio_path": "x.wav", "duration_sec": -3, '
     '"speaker_id": "s", "gender": "male", "kind": "natural"}',
     'duration_sec'),
])
def test_load_manifest_errors_name_line(tmp_path, line, match):
    good = json.dumps(record('u1').to_dict())
    path = tmp_path / 'bad.jsonl'
    path.write_text(f'{good}\n\n{line}\n', encoding='utf-8')
    with pytest.raises(ManifestError, match=match) as excinfo:
        load_manifest(path)
    assert excinfo.value.line == 3


def test_manifest_rejects_duplicate_ids():
    with pytest.raises(ManifestError, match='Duplicate'):
        Manifest((record('u1'), record('u1')))


def test_manifest_filter_and_subset():
    manifest = Manifest((record('u1', kind='synthetic', tags={'aug'}),
                         record('u2'), record('u3', tags={'aug'})))
    assert manifest.filter(kind='natural').ids == ['u2', 'u3']
    assert manifest.filter(tag='aug').ids == ['u1', 'u3']
    assert manifest.filter(kind='natural', tag='aug').ids == ['u3']
    assert manifest.filter(tag='aug').is_subset_of(manifest)
    assert not manifest.is_subset_of(manifest.filter(tag='aug'))


def test_manifest_stats():
    manifest = Manifest((
        record('u1', 1800.0, 's1', 'male'),
        record('u2', 1800.0, 's1', 'male'),
        record('u3', 3600.0, 's2', 'female', 'synthetic'),
        record('u4', 0.0, 's3', 'unknown'),
    ))
    stats = manifest_stats(manifest)
    assert stats.total_hours == pytest.approx(2.0)
    assert stats.num_utterances == 4
    assert stats.num_speakers == 3
    assert stats.gender_counts == {'male': 1, 'female': 1, 'unknown': 1}
    assert stats.kind_counts == {'natural': 3, 'synthetic': 1}
    assert stats.kind_hours == {'natural': 1.0, 'synthetic': 1.0}
    assert json.loads(json.dumps(stats.to_dict()))['num_speakers'] == 3


def test_manifest_stats_empty():
    stats = manifest_stats(Manifest())
    assert (stats.total_hours, stats.num_utterances, stats.num_speakers) \
        == (0.0, 0, 0)


def test_build_split_full_scale():
    source = full_scale_manifest()
    split = build_split(source, 100.0, 245, gender_balance=True, seed=3)
    stats = manifest_stats(split)
    assert stats.num_speakers == 245
    assert abs(stats.gender_counts['male']
               - stats.gender_counts['female']) <= 1
    assert 98.0 <= stats.total_hours <= 102.0
    assert split.is_subset_of(source)


def test_build_split_is_deterministic_and_idempotent():
    source = full_scale_manifest()
    first = build_split(source, 20.0, 60, gender_balance=True, seed=5)
    second = build_split(source, 20.0, 60, gender_balance=True, seed=5)
    assert first == second
    assert build_split(first, 20.0, 60, gender_balance=True, seed=99) \
        == first
    other = build_split(source, 20.0, 60, gender_balance=True, seed=6)
    assert other.ids != first.ids


def test_build_split_keeps_source_order():
    source = full_scale_manifest()
    split = build_split(source, 10.0, 30, seed=1)
    positions = {uid: i for i, uid in enumerate(source.ids)}
    indexes = [positions[uid] for uid in split.ids]
    assert indexes == sorted(indexes)


def test_build_split_saturates_on_small_sources():
    source = Manifest(tuple(record(f'u{i}', 600.0, f's{i % 3}')
                            for i in range(12)))
    split = build_split(source, 50.0, 10, seed=0)
    assert split.ids == source.ids


def test_build_split_respects_speaker_budget():
    source = full_scale_manifest()
    split = build_split(source, 1000.0, 17, seed=2)
    assert manifest_stats(split).num_speakers == 17


def test_build_split_balance_drops_unknown_gender():
    source = Manifest(tuple(
        record(f'u{i}', 60.0, f's{i}', ('male', 'female', 'unknown')[i % 3])
        for i in range(30)
    ))
    split = build_split(source, 1.0, 30, gender_balance=True, seed=4)
    counts = Counter(r.gender for r in split)
    assert counts['unknown'] == 0
    assert abs(counts['male'] - counts['female']) <= 1


@pytest.mark.parametrize('seed', range(20))
def test_build_split_balance_counts_contributing_speakers(seed):
    # The female speakers' only utterances are too long to fit.
    source = Manifest(
        tuple(record(f'f{i}-u0', 5000.0, f'f{i}', 'female')
              for i in range(2))
        + tuple(record(f'm{i}-u{j}', 100.0, f'm{i}', 'male')
                for i in range(2) for j in range(40))
    )
    split = build_split(source, 1.0, 4, gender_balance=True, seed=seed)
    counts = manifest_stats(split).gender_counts
    assert abs(counts.get('male', 0) - counts.get('female', 0)) <= 1
    assert split.total_duration <= 3600.0 * 1.02
    assert split.total_duration >= 3500.0


def test_build_split_contains_included_records():
    source = full_scale_manifest()
    paired = Manifest(tuple(source.records[:40]))
    split = build_split(source, 30.0, 80, gender_balance=True, seed=9,
                        include=paired)
    assert paired.is_subset_of(split)
    assert manifest_stats(split).num_speakers <= 80


@pytest.mark.parametrize('hours, budget, match', [
    (10.0, 0, 'speaker_budget'),
    (0.0, 10, 'target_hours'),
    (-1.0, 10, 'target_hours'),
])
def test_build_split_infeasible(hours, budget, match):
    with pytest.raises(InfeasibleSplitError, match=match):
        build_split(full_scale_manifest(), hours, budget)


def test_build_split_include_over_budget():
    source = full_scale_manifest()
    include = Manifest(tuple(source.records[::20][:5]))
    with pytest.raises(InfeasibleSplitError, match='budget'):
        build_split(source, 10.0, 3, include=include)


def test_build_split_no_eligible_records():
    source = Manifest((record('u1', 0.0), record('u2', 5.0, gender='unknown')))
    with pytest.raises(InfeasibleSplitError, match='eligible'):
        build_split(source, 1.0, 5, gender_balance=True)

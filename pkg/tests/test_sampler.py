"""Contains tests for the synthunits.sampler module."""
import math
from collections import Counter

import pytest
from scipy import stats

from synthunits.manifest import Manifest
from synthunits.sampler import (
    compose_corpus, epoch_schedule, EpochSampler, MixSpec, natural_fraction,
    plan_synthesis, record_weights, schedule_counts, schedule_from_manifest
)

from .conftest import record


def pools(num_nat, num_syn):
    natural = Manifest(tuple(record(f'n{i}', 5.0) for i in range(num_nat)))
    synthetic = Manifest(tuple(record(f's{i}', 2.0, kind='synthetic')
                               for i in range(num_syn)))
    return natural, synthetic


def test_sampler_requires_an_explicit_seed():
    with pytest.raises(ValueError, match='rng_seed'):
        EpochSampler(['a'], [1.0], rng_seed=None)


def test_sampler_streams_are_independent_of_creation_order():
    first = EpochSampler(list('abcdef'), [1] * 6, rng_seed=5, stream=3)
    EpochSampler(list('abcdef'), [1] * 6, rng_seed=5, stream=0)(50)
    second = EpochSampler(list('abcdef'), [1] * 6, rng_seed=5, stream=3)
    assert first(20) == second(20)


def test_epochsampler_reset_replays_draws():
    sampler = EpochSampler(list('abc'), [1, 2, 3], rng_seed=9)
    drawn = sampler(10)
    sampler.reset()
    assert sampler(10) == drawn


@pytest.mark.parametrize('number, expected_len', [
    (None, None),
    (0, 0),
    (1, 1),
    (7, 7),
])
def test_epochsampler_call_shapes(number, expected_len):
    sampler = EpochSampler(list('abc'), [1, 1, 1], rng_seed=1)
    result = sampler(number)
    if expected_len is None:
        assert result in ('a', 'b', 'c')
    else:
        assert len(result) == expected_len


def test_epochsampler_negative_number_raises():
    with pytest.raises(ValueError, match='negative'):
        EpochSampler(['a'], [1], rng_seed=1)(-1)


@pytest.mark.parametrize('items, weights, match', [
    ([], [], 'empty'),
    (['a', 'b'], [1.0], r'\(2\).*\(1\)'),
    (['a'], [-1.0], '>= 0'),
    (['a', 'b'], [0.0, 0.0], 'positive'),
])
def test_epochsampler_rejects_bad_pools(items, weights, match):
    with pytest.raises(ValueError, match=match):
        EpochSampler(items, weights, rng_seed=1)


@pytest.mark.parametrize('num_nat, num_syn, rate', [
    (500, 500, 1.0),
    (100, 900, 9.0),
    (100, 11000, 100.0),
])
def test_epoch_schedule_natural_fraction(num_nat, num_syn, rate):
    natural, synthetic = pools(num_nat, num_syn)
    spec = MixSpec(natural, synthetic, rate, 100000, seed=2024)
    schedule = epoch_schedule(spec)
    assert len(schedule) == 100000
    expected = rate * num_nat / (rate * num_nat + num_syn)
    assert spec.expected_natural_fraction() == pytest.approx(expected)
    assert natural_fraction(schedule, natural.ids) == pytest.approx(
        expected, abs=0.01
    )


def test_epoch_schedule_is_pure_per_seed_and_epoch():
    natural, synthetic = pools(10, 30)
    spec = MixSpec(natural, synthetic, 3.0, 500, seed=11)
    assert epoch_schedule(spec, 0) == epoch_schedule(spec, 0)
    assert epoch_schedule(spec, 1) == epoch_schedule(spec, 1)
    assert epoch_schedule(spec, 0) != epoch_schedule(spec, 1)
    # Later epochs don't depend on earlier ones having been drawn.
    fresh = MixSpec(natural, synthetic, 3.0, 500, seed=11)
    assert epoch_schedule(fresh, 1) == epoch_schedule(spec, 1)


def test_rate_changes_frequencies_not_support():
    natural, synthetic = pools(3, 5)
    low = compose_corpus(MixSpec(natural, synthetic, 1.0, 1, 0))
    high = compose_corpus(MixSpec(natural, synthetic, 50.0, 1, 0))
    assert low.ids == high.ids
    assert all(w > 0 for w in record_weights(high))


def test_frequencies_within_weight_class_are_uniform():
    natural, synthetic = pools(20, 80)
    spec = MixSpec(natural, synthetic, 4.0, 200000, seed=3)
    counts = schedule_counts(epoch_schedule(spec))
    for ids in (natural.ids, synthetic.ids):
        observed = [counts.get(uid, 0) for uid in ids]
        result = stats.chisquare(observed)
        assert result.statistic < stats.chi2.ppf(0.999, len(ids) - 1)


@pytest.mark.parametrize('num_nat, num_syn, rate, exp_weights', [
    (2, 3, 1.0, [1.0] * 5),
    (2, 3, 9.0, [9.0, 9.0, 1.0, 1.0, 1.0]),
    (2, 3, 2.5, [2.5, 2.5, 1.0, 1.0, 1.0]),
])
def test_compose_corpus_weights(num_nat, num_syn, rate, exp_weights):
    natural, synthetic = pools(num_nat, num_syn)
    merged = compose_corpus(MixSpec(natural, synthetic, rate, 1, 0))
    assert len(merged) == num_nat + num_syn
    assert [r.weight for r in merged] == exp_weights
    assert math.fsum(r.weight for r in merged) == pytest.approx(
        rate * num_nat + num_syn
    )


def test_compose_corpus_infinite_rate_keeps_natural_only():
    natural, synthetic = pools(2, 3)
    merged = compose_corpus(MixSpec(natural, synthetic, math.inf, 1, 0))
    assert merged.ids == ['n0', 'n1']
    assert [r.weight for r in merged] == [1.0, 1.0]


def test_compose_corpus_rejects_id_collisions():
    natural = Manifest((record('u1'), record('u2')))
    synthetic = Manifest((record('u2', kind='synthetic'),))
    with pytest.raises(ValueError, match="'u2'"):
        compose_corpus(MixSpec(natural, synthetic, 2.0, 1, 0))


def test_compose_corpus_rebases_audio_paths(tmp_path):
    natural = Manifest((record('n0'),), root=tmp_path / 'nat')
    synthetic = Manifest((record('s0', kind='synthetic'),),
                         root=tmp_path / 'syn')
    merged = compose_corpus(MixSpec(natural, synthetic, 2.0, 1, 0), tmp_path)
    assert [r.audio_path for r in merged] == ['nat/n0.wav', 'syn/s0.wav']


@pytest.mark.parametrize('kwargs, match', [
    ({'oversampling_rate': 0.5}, 'oversampling_rate'),
    ({'epoch_size': 0}, 'epoch_size'),
    ({'weight_by': 'hours'}, 'weight_by'),
])
def test_mixspec_validation(kwargs, match):
    natural, synthetic = pools(1, 1)
    with pytest.raises(ValueError, match=match):
        MixSpec(natural, synthetic, **kwargs)


def test_mixspec_rejects_empty_pools():
    natural, synthetic = pools(1, 1)
    with pytest.raises(ValueError, match='natural'):
        MixSpec(Manifest(), synthetic)
    with pytest.raises(ValueError, match='synthetic'):
        MixSpec(natural, Manifest())
    MixSpec(natural, Manifest(), math.inf)


def test_duration_weighting():
    natural, synthetic = pools(1, 1)
    merged = compose_corpus(MixSpec(natural, synthetic, 2.0, 1, 0))
    assert record_weights(merged, 'duration') == [10.0, 2.0]
    schedule = schedule_from_manifest(merged, 60000, 5, 0, 'duration')
    assert natural_fraction(schedule, ['n0']) == pytest.approx(10 / 12,
                                                               abs=0.01)


def test_plan_synthesis_assigns_distinct_speakers():
    texts = Manifest(tuple(record(f't{i}') for i in range(20)))
    speakers = [f'spk{i}' for i in range(10)]
    jobs = plan_synthesis(texts, speakers, 3, seed=8)
    assert len(jobs) == 60
    per_text = Counter()
    for job in jobs:
        per_text[job.text_id] += 1
        assert job.utterance_id == f'{job.text_id}-{job.speaker_ref}'
    assert set(per_text.values()) == {3}
    for text_id in texts.ids:
        refs = [j.speaker_ref for j in jobs if j.text_id == text_id]
        assert len(set(refs)) == 3
    assert plan_synthesis(texts, speakers, 3, seed=8) == jobs


@pytest.mark.parametrize('per_utterance', [0, 4])
def test_plan_synthesis_rejects_bad_counts(per_utterance):
    texts = Manifest((record('t0'),))
    with pytest.raises(ValueError, match='pool of 3'):
        plan_synthesis(texts, ['a', 'b', 'c'], per_utterance, seed=1)

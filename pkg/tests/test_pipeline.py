"""Contains tests for the synthunits.pipeline module."""
import json

import pytest

from synthunits.config import load_config, parse_config, StageConfig
from synthunits.errors import StageError
from synthunits.formats.units import read_units
from synthunits.kmeans import load_codebook
from synthunits.manifest import load_manifest
from synthunits import pipeline as p

from .conftest import TOY_CONFIG


EXPECTED_STAGES = ['fit', 'dpdp', 'dedup', 'metrics', 'f0', 'targets',
                   'augment', 'compose']


def write_config(tmp_path, text, name='pipeline.ini'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return path


def test_empty_stage_list_does_nothing(tmp_path):
    config = parse_config('[pipeline]\nseed = 1\n', tmp_path)
    report = p.run_pipeline(config)
    assert report.status == 0
    assert report.stages == []
    assert report.lines() == []


def test_full_toy_run(toy_config, tmp_path):
    report = p.run_pipeline(load_config(toy_config))
    assert report.status == 0, report.error
    assert [r.stage for r in report.stages] == EXPECTED_STAGES
    assert all(r.status == 'ok' for r in report.stages)
    out = tmp_path / 'out'
    outputs = {r.stage: [path for path, _ in r.outputs]
               for r in report.stages}
    assert outputs['fit'] == ['codebook.kmcb']
    assert outputs['dpdp'] == ['units.dpdp.txt']
    assert outputs['compose'] == ['composed.jsonl', 'schedule.txt']
    assert len(outputs['f0']) == 4
    assert 'augmented/manifest.jsonl' in outputs['augment']
    assert 'augmented/utt0.wav' in outputs['augment']

    assert load_codebook(out / 'codebook.kmcb').k == 3
    dedup = read_units(out / 'units.dedup.txt')
    assert all(seq.dedup and seq.num_frames == 49 for seq in dedup.values())
    metrics = json.loads((out / 'metrics.json').read_text())
    assert metrics['total_frames'] == 4 * 49
    assert metrics['phone_purity'] > 0.9
    assert metrics['cluster_purity'] > 0.9

    targets = [json.loads(line) for line in
               (out / 'targets.jsonl').read_text().splitlines()]
    assert [t['id'] for t in targets] == ['utt0', 'utt1', 'utt2', 'utt3']
    for target in targets:
        assert sum(target['counts']) == 49
        assert target['phonemes'][-1] == 3
        assert target['groups'][-1][-1] == 3
        assert target['pitch_path'] == f"pitch/{target['id']}.fmat"

    composed = load_manifest(out / 'composed.jsonl')
    assert composed.ids == ['nat0', 'nat1', 'utt0', 'utt1', 'utt2', 'utt3']
    assert [r.weight for r in composed] == [9.0, 9.0, 1.0, 1.0, 1.0, 1.0]
    assert all(composed.resolve(r).exists() for r in composed)
    schedule = (out / 'schedule.txt').read_text().splitlines()
    assert len(schedule) == 40
    assert {line.split('\t')[0] for line in schedule} == {'0', '1'}
    assert {line.split('\t')[1] for line in schedule} <= set(composed.ids)


def test_runs_are_reproducible_across_thread_counts(toy_config, tmp_path):
    other = write_config(tmp_path, TOY_CONFIG.replace('output_dir = out',
                                                      'output_dir = out2'),
                         'pipeline2.ini')
    first = p.run_pipeline(load_config(toy_config, threads=1))
    second = p.run_pipeline(load_config(other, threads=4))
    assert first.status == second.status == 0
    assert first.lines() == second.lines()


def test_missing_codebook_names_stage_and_path(toy_corpus, tmp_path):
    path = write_config(tmp_path, (
        '[pipeline]\nstages = dpdp\nseed = 1\n'
        'manifest = corpus/manifest.jsonl\nfeatures = corpus/features\n'
        '[dpdp]\ncodebook = nowhere.kmcb\n'
    ))
    report = p.run_pipeline(load_config(path))
    assert report.status == 1
    assert report.error.stage == 'dpdp'
    assert 'nowhere.kmcb' in str(report.error)
    assert report.stages[-1].status == 'failed'
    line = json.loads(report.lines()[-1])
    assert line['stage'] == 'dpdp'
    assert 'nowhere.kmcb' in line['error']


def test_stage_without_upstream_artifacts_fails(toy_corpus, tmp_path):
    path = write_config(tmp_path, (
        '[pipeline]\nstages = dedup\nseed = 1\n'
    ))
    report = p.run_pipeline(load_config(path))
    assert report.status == 1
    assert report.error.stage == 'dedup'
    assert 'no unit sequences' in str(report.error)


def test_earlier_stage_outputs_are_reported_before_failure(toy_corpus,
                                                           tmp_path):
    path = write_config(tmp_path, (
        '[pipeline]\nstages = fit, dpdp\nseed = 1\n'
        'manifest = corpus/manifest.jsonl\nfeatures = corpus/features\n'
        '[fit]\nk = 3\n[dpdp]\npenalty = gamma\n'
    ))
    report = p.run_pipeline(load_config(path))
    assert report.status == 1
    assert [r.status for r in report.stages] == ['ok', 'failed']
    assert "'gamma'" in report.stages[-1].error


def test_stage_wraps_value_errors():
    def broken(cfg, ctx):
        raise ValueError('bad input')

    stage = p.Stage('custom', broken)
    assert stage.stage_config == StageConfig('custom')
    with pytest.raises(StageError, match="'custom'.*bad input"):
        stage(None)


def test_pipeline_add_stages_and_names():
    pipeline = p.Pipeline(p.Stage('a', lambda cfg, ctx: []))
    pipeline.add_stages(p.Stage('b', lambda cfg, ctx: []),
                        p.Stage('c', lambda cfg, ctx: []))
    assert pipeline.names == ['a', 'b', 'c']


@pytest.mark.parametrize('params, expected', [
    ({}, (1.0, 50, 'ConstantPenalty')),
    ({'lambda': '2', 'max_segment': '9'}, (2.0, 9, 'ConstantPenalty')),
    ({'penalty': 'poisson', 'mu': '4'}, (1.0, 50, 'PoissonPenalty')),
])
def test_dpdp_params(params, expected):
    params = p.dpdp_params(StageConfig('dpdp', params))
    assert (params.lam, params.max_segment_frames,
            type(params.penalty_function).__name__) == expected


def test_file_digest(tmp_path):
    path = tmp_path / 'x.bin'
    path.write_bytes(b'abc')
    assert p.file_digest(path) == (
        'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
    )


def test_augment_then_compose_with_default_manifests(toy_corpus, tmp_path):
    path = write_config(tmp_path, (
        '[pipeline]\nstages = augment, compose\nseed = 1\n'
        'manifest = corpus/manifest.jsonl\noutput_dir = out\n'
        '[augment]\nnoise_manifest = corpus/noise.jsonl\n'
        '[compose]\nrate = 3\nepoch_size = 10\nepochs = 1\n'
    ))
    report = p.run_pipeline(load_config(path))
    assert report.status == 0, report.error
    composed = load_manifest(tmp_path / 'out' / 'composed.jsonl')
    originals = [f'utt{i}' for i in range(4)]
    assert composed.ids == originals + [f'{uid}-aug' for uid in originals]
    assert [r.weight for r in composed] == [3.0] * 4 + [1.0] * 4
    assert [r.kind for r in composed][4:] == ['synthetic'] * 4
    assert all(composed.resolve(r).exists() for r in composed)

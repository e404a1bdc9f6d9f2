"""Contains tests for the synthunits.pitch module."""
import math

import numpy as np
import pytest

from synthunits import pitch
from synthunits.errors import LengthMismatchError
from synthunits.formats.fmat import write_matrix
from synthunits.formats.units import UnitSequence
from synthunits.formats.wav import Waveform

from .conftest import tone, white_noise


@pytest.mark.parametrize('freq', [110.0, 150.0, 220.0, 330.0])
def test_pure_tone_f0(freq):
    track = pitch.extract_f0(tone(freq, 1.0, 0.5))
    assert len(track) == 49
    assert track.voiced[1:-1].all()
    np.testing.assert_allclose(track.f0_hz[1:-1], freq, atol=3.0)
    assert track.frame_rate_hz == 50.0


def test_white_noise_is_mostly_unvoiced():
    track = pitch.extract_f0(white_noise(2.0, 0.1, seed=4))
    assert np.mean(~track.voiced) >= 0.9
    assert np.all(track.log_f0[~track.voiced] == pitch.UNVOICED_LOG_F0)


def test_silence_is_unvoiced():
    track = pitch.extract_f0(Waveform(np.zeros(8000)))
    assert not track.voiced.any()
    assert np.all(track.log_f0 == 0.0)


def test_f0_is_clamped_to_band():
    track = pitch.extract_f0(tone(220.0), f_min=60.0, f_max=200.0)
    voiced = track.f0_hz[track.voiced]
    assert voiced.size
    assert np.all((voiced >= 60.0) & (voiced <= 200.0 + 1e-9))


@pytest.mark.parametrize('rate, seconds, expected', [
    (16000, 1.0, 49),
    (16000, 0.04, 1),
    (16000, 2.0, 99),
    (8000, 1.0, 49),
])
def test_frame_count(rate, seconds, expected):
    starts = pitch.frame_starts(int(rate * seconds), rate, 50.0)
    assert len(starts) == expected
    assert starts[0] == 0


@pytest.mark.parametrize('wave, kwargs, match', [
    (Waveform(np.zeros(0)), {}, 'empty'),
    (Waveform(np.zeros(100)), {}, 'window'),
    (Waveform(np.zeros(1000), 600), {}, 'Sample rate'),
    (Waveform(np.zeros(1000)), {'f_min': 300.0, 'f_max': 200.0}, 'f_min'),
    (Waveform(np.zeros(1000)), {'f_min': 0.0}, 'f_min'),
])
def test_extract_f0_errors(wave, kwargs, match):
    with pytest.raises(ValueError, match=match):
        pitch.extract_f0(wave, **kwargs)


def test_pitch_file_round_trip(tmp_path):
    track = pitch.extract_f0(tone(180.0, 0.5))
    path = tmp_path / 'p.fmat'
    pitch.write_pitch(track, path)
    loaded = pitch.read_pitch(path)
    assert loaded.voiced.tolist() == track.voiced.tolist()
    np.testing.assert_allclose(loaded.log_f0, track.log_f0, rtol=1e-6)
    assert loaded.frame_rate_hz == 50.0


def test_pitch_file_keeps_float32_log_f0(tmp_path):
    track = pitch.extract_f0(tone(220.0, 0.5))
    path = tmp_path / 'p.fmat'
    pitch.write_pitch(track, path)
    loaded = pitch.read_pitch(path)
    voiced = track.voiced
    assert voiced.any()
    expected = track.log_f0[voiced].astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(loaded.log_f0[voiced], expected)


def test_read_pitch_needs_two_rows(tmp_path):
    path = tmp_path / 'bad.fmat'
    write_matrix(path, np.zeros((3, 4)))
    with pytest.raises(ValueError, match='2 rows'):
        pitch.read_pitch(path)


def test_pitchtrack_validation():
    with pytest.raises(LengthMismatchError):
        pitch.PitchTrack([0.0, 0.0], [False], 50.0)
    with pytest.raises(ValueError, match='Unvoiced'):
        pitch.PitchTrack([math.log(100.0)], [False], 50.0)
    track = pitch.PitchTrack([math.log(100.0), 0.0], [True, False], 50.0)
    assert track.f0_hz.tolist() == pytest.approx([100.0, 0.0])


def test_expand_units_to_frames():
    dedup = UnitSequence((4, 2), (3, 1), dedup=True)
    assert pitch.expand_units_to_frames(dedup) == [4, 4, 4, 2]
    with pytest.raises(ValueError, match='deduplicated'):
        pitch.expand_units_to_frames(UnitSequence((4, 2), (3, 1)))

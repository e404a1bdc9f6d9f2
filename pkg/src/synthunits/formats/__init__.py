"""Contains readers and writers for synthunits' file formats.

Waveforms are 16-bit PCM mono WAV; feature matrices, session
embeddings and pitch tracks are FMAT binary matrices; phone alignments
and unit sequences are line-oriented UTF-8 text.
"""
from . import alignment
from .alignment import Interval, PhoneAlignment, read_alignment
from . import fmat
from .fmat import (
    FeatureMatrix, read_embedding, read_features, SessionEmbedding,
    write_embedding, write_features
)
from . import units
from .units import read_units, UnitSequence, write_units
from . import wav
from .wav import read_wav, Waveform, write_wav


__all__ = [
    'alignment', 'Interval', 'PhoneAlignment', 'read_alignment', 'fmat',
    'FeatureMatrix', 'read_embedding', 'read_features', 'SessionEmbedding',
    'write_embedding', 'write_features', 'units', 'read_units',
    'UnitSequence', 'write_units', 'wav', 'read_wav', 'Waveform', 'write_wav'
]

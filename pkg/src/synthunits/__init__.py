"""Tools for building discrete speech-unit training data."""
from importlib import metadata

from . import augment
from . import config
from . import draw
from . import errors
from . import formats
from . import kmeans
from . import manifest
from . import mathtools
from . import metrics
from . import mixins
from . import pitch
from . import sampler
from . import segment
from . import targets
from . import typing


__version__ = metadata.version('synthunits')
__all__ = [
    'augment', 'config', 'draw', 'errors', 'formats', 'kmeans', 'manifest',
    'mathtools', 'metrics', 'mixins', 'pitch', 'sampler', 'segment',
    'targets', 'typing'
]

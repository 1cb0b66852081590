"""Frequency-adaptive tree-structured wavelet decomposition for sensor time series."""

__version__ = "0.1.0"

from .errors import ConfigError, InvalidInput, NumericalError  # noqa: E402
from .signal import (  # noqa: E402
    FrequencyBand,
    PowerSpectrum,
    TimeSeriesWindow,
    WindowSet,
    fft,
    ifft,
    ingest_window,
    power_spectrum,
)
from .spectral import (  # noqa: E402
    SubbandSet,
    analyze,
    band_energy,
    detect_formants,
    e_bisect,
    envelope,
    itv_bisect,
)
from .tree import GateTree, build_tree, leaf_bands, validate_against  # noqa: E402
from .lifting import (  # noqa: E402
    CouplingUnit,
    Mode,
    coupling_forward,
    coupling_inverse,
    decompose,
    haar_step,
    reconstruct,
    split,
)
from .model import TWaveNet  # noqa: E402
from .training import EvalReport, ModelCheckpoint, TrainConfig, evaluate, fit  # noqa: E402
from .synth import SynthSpec, generate  # noqa: E402

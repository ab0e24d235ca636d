"""WPE dereverberation with microphone-dependent prediction delays."""

from .delay_comp import (
    CompensationParams,
    CrossbandFilterSet,
    FractionalDelayFir,
    TdoaDecomposition,
    apply_band2band,
    apply_crossband,
    apply_integer_delay,
    compensate,
    compute_crossband_filters,
    decompose_tdoa,
    design_fractional_fir,
    verify_compensation,
)
from .errors import InvalidConfigError, InvalidInputError, MdwpeError, NumericalFailureError
from .experiment import ExperimentSpec, ResultTable, default_taps, dereverberate, run_experiment
from .io import load_scenario, read_tdoa_file, read_wav, save_scenario, write_tdoa_file, write_wav
from .metrics import cepstral_distance, fwssnr, improvement
from .room import Scenario, desk_scenario, oracle_tdoas, render_scene, simulate_rir
from .stft import AnalysisConfig, StftTensor, analyze, make_sqrt_hann, synthesize
from .tdoa import TdoaEstimate, estimate_all_tdoas, gcc_phat_pair
from .wpe import DELAY_MODES, PredictionFilters, WpeConfig, run_wpe

__version__ = "0.1.0"

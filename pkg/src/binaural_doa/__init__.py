"""Reverberation-robust binaural direction-of-arrival estimation.

Library layout:

- :mod:`binaural_doa.signal` -- binaural waveforms and WAV I/O
- :mod:`binaural_doa.timefreq` -- STFT and gammatone (AFB) front-ends
- :mod:`binaural_doa.hrtf` -- HRTF sets, interaural coordinates, lateral
  steering vectors, focusing matrices, rigid-sphere generator
- :mod:`binaural_doa.localization` -- DPD pipeline and MUSIC searches
- :mod:`binaural_doa.je` -- ITD/ILD joint-estimation baseline
- :mod:`binaural_doa.roomsim` -- image-method room simulator
- :mod:`binaural_doa.evaluation` -- sweep/benchmark harness
- :mod:`binaural_doa.cli` -- command-line front door
"""

from .signal import BinauralSignal, read_wav_binaural, write_wav_binaural
from .timefreq import (StftParams, ErbBank, TFRepresentation, make_erb_bank,
                       stft_analyze, stft_via_filtering, afb_analyze,
                       binaural_analyze, save_tf, load_tf)
from .hrtf import (Direction, InterauralDirection, HrtfSet,
                   LateralSteeringField, FocusingOperator, sph_to_interaural,
                   interaural_to_sph, sphere_hrtf, load_hrtf_set,
                   save_hrtf_set, effective_rank, build_lateral_field,
                   build_focusing, focusing_bank)
from .localization import (SmoothingParams, SpatialSpectrumField,
                           DoaHistogram, LocalizationResult, Pipeline,
                           apply_focusing, spatial_spectrum, dpd_select,
                           music_2d, music_1d, localize)
from .je import CueTable, build_cue_table, extract_cues, je_localize
from .roomsim import (RoomScenario, Brir, ScenarioOptions, critical_distance,
                      image_method_brir, synthesize, random_scenarios,
                      speech_like, load_brir, save_brir)
from .evaluation import RunRecord, rmse, run_sweep, bench_search

__version__ = "0.1.0"

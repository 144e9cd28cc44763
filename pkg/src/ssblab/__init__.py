"""Multi-cell SS-burst synthesis, detection and joint CFO/channel estimation."""
from ._accel import backend
from .errors import (ConfigError, DegenerateModelError, DomainError, NoDetectionError, WaveformIOError,
                     SsblabError, UndefinedEstimateError, WindowRangeError)
from .scenario import GroundTruth, SampleVector, ScenarioConfig, sample_ground_truth, synthesize_received
from .seqgen import SsFrame, SyncSequence, assemble_frame, gen_pss, gen_sss, gen_zc

__version__ = "0.1.0"

__all__ = [
    "backend", "ConfigError", "DegenerateModelError", "DomainError", "NoDetectionError",
    "SsblabError", "UndefinedEstimateError", "WindowRangeError", "WaveformIOError", "GroundTruth", "SampleVector",
    "ScenarioConfig", "sample_ground_truth", "synthesize_received", "SsFrame", "SyncSequence",
    "assemble_frame", "gen_pss", "gen_sss", "gen_zc", "__version__",
]

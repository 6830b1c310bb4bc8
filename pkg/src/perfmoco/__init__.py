"""Dynamic-series reconstruction, low-rank + sparse + noise decomposition,
periodic/aperiodic splitting, and motion correction for undersampled
perfusion imaging."""

from .core import (ImageSeries, KSpaceData, SamplingMask,
                   adjoint_undersample, forward_undersample,
                   make_variable_density_mask, soft_threshold, svt)
from .errors import (ConfigError, DimensionError, DivergenceError,
                     FormatError, RegistrationError, TrackingError)
from .evaluation import (SectorDefinition, TimeIntensityCurves,
                         extract_curves, residual_motion, rmse,
                         segment_sectors)
from .periodicity import (PeriodicSplit, m_best_split, project_periodic,
                          split_sparse_component)
from .phantom import (PhantomSpec, PhantomTruth, desk_spec, generate_phantom,
                      paper_spec, undersample_phantom)
from .pipeline import PipelineConfig, load_config, run_pipeline
from .registration import (DisplacementField, RegistrationConfig, recombine,
                           register_pair, register_series)
from .solvers import (Decomposition, SolverConfig, solve_ls_baseline,
                      solve_stable_rpca)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Decomposition", "DimensionError", "DisplacementField",
    "DivergenceError", "FormatError", "ImageSeries", "KSpaceData",
    "PeriodicSplit", "PhantomSpec", "PhantomTruth", "PipelineConfig",
    "RegistrationConfig", "RegistrationError", "SamplingMask",
    "SectorDefinition", "SolverConfig", "TimeIntensityCurves",
    "TrackingError", "adjoint_undersample", "desk_spec", "extract_curves",
    "forward_undersample", "generate_phantom", "load_config", "m_best_split",
    "make_variable_density_mask", "paper_spec", "project_periodic",
    "recombine", "register_pair", "register_series", "residual_motion",
    "rmse", "run_pipeline", "segment_sectors", "soft_threshold",
    "solve_ls_baseline", "solve_stable_rpca", "split_sparse_component",
    "svt", "undersample_phantom",
]

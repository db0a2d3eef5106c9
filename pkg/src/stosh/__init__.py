"""Spectral Galerkin simulation and ergodicity diagnostics for
stochastically forced Swift-Hohenberg models on the 2*pi-periodic line.

The package covers the local (cubic) and nonlocal (kernel-convolution)
systems: exact-linear exponential stepping under additive low-mode noise,
high-mode slaving, binding coupling with Girsanov bookkeeping, energy
certificates with mode-count thresholds, and ensemble distance diagnostics.
"""

__version__ = "0.1.0"

from ._engine import BACKEND
from .config import ConfigError, RunConfig, load_config, parse_config
from .coupling import (GAP_TOL, CoupledPairTrajectory, CouplingWindow,
                       GirsanovRecord, SetLabel, UncontrollableMode,
                       binding_drift, classify_window, girsanov_log_weight,
                       label_at, run_bound_coupling, still_uncoupled)
from .diagnostics import (BatteryReport, Certificates, DecayFit,
                          EnsembleStats, FitDomainError, ViolationReport,
                          bl_distance, bl_distance_1d, bl_distance_profile,
                          compute_certificates, energy_certificate,
                          fit_exponential_decay, kernel_inequality_battery,
                          mean_energy_bound, mode_threshold,
                          supermartingale_test, wilson_interval)
from .dynamics import (IntegrationResult, KernelSpec, ModelParams,
                       StepDiverged, Trajectory, evaluate_drift, integrate,
                       linear_factors, load_kernel_table, mollifier_samples,
                       nonlocal_term, slave_high_modes, step,
                       trajectory_to_csv)
from .ensemble import (PairSummary, TrajectoryDiverged, mean_energy_series,
                       run_ensemble, run_pair_ensemble, uncoupled_frequency)
from .forcing import (NoiseSpec, effective_constants, load_noise_path,
                      sample_increment, save_noise_path, standard_normals)
from .manifest import RunManifest, file_sha256
from .spectral import (OperatorSpectrum, SpectralBasis, SpectralField,
                       circulant_matrix, circular_convolve, eigenvalue,
                       from_physical, l4_norm4, project_high, project_low,
                       to_physical)

__all__ = [name for name in dir() if not name.startswith("_")]

"""mrtfit: macroscopic resonant tunneling rate curves of rf-SQUID flux
qubits, and the flux- and charge-noise parameters extractable from them.

The package simulates two-peak tunneling-rate line shapes built from
convolved noise envelopes, fits them to measured rate-versus-flux data,
converts the fitted broadenings into standard noise metrics (ohmic
coupling, shunt resistance, capacitive and inductive loss tangents), and
cross-validates the simplified line-shape model against a full 1D
rf-SQUID circuit eigenproblem.
"""

__version__ = "0.1.0"

from .envelopes import (
    HighFreqBroadening,
    IntrawellBroadening,
    LowFreqBroadening,
    g_high,
    g_low,
    g_relax,
    intrawell_rate,
    relax_width,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DatasetFormatError,
    DomainError,
    ModelValidityWarning,
    MrtfitError,
    ReportError,
    SingleWellError,
    ValidationError,
)
from .fitter import (
    BatchResult,
    FitConfig,
    FitResult,
    InitialGuess,
    RateDataset,
    batch_fit,
    fit,
    initial_guess,
)
from .rate_model import (
    FrequencyGrid,
    LineShapes,
    MrtParams,
    RateCurve,
    convolve,
    rate_01,
    rate_03,
    simulate_curve,
    total_rate,
)
from .squid_full import (
    EffectivePotential,
    FullModelNoise,
    FullModelResult,
    RfSquidParams,
    WellBasis,
    effective_potential,
    full_model_rate,
    ground_pair_splitting,
    harmonic_v31,
    persistent_current,
    solve_wells,
)
from .units import (
    CONSTANTS,
    NoiseSummary,
    PhysicalConstants,
    QubitCircuitParams,
    derive_eta,
    derive_shunt_and_inductive_loss,
    derive_tan_delta_c,
    energy_to_flux,
    flux_to_energy,
    ghz_to_kelvin,
    kelvin_to_ghz,
    noise_summary,
)

__all__ = [name for name in dir() if not name.startswith("_")]

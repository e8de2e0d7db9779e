"""Physical constants, unit conversions, and derived noise metrics.

Internal convention used throughout the package: energies are carried as
equivalent ordinary frequencies E/h in GHz, magnetic flux in micro flux
quanta, temperatures in kelvin at API boundaries, tunneling rates in
inverse microseconds.  Conversions to and from SI happen here and only
here, with CODATA 2018 constants (h, e, k_B are exact in the 2019 SI).

The scalar quantity kinds that are easy to mix up carry distinct static
types (``NewType``), so a flux cannot silently be passed where an energy
is expected in type-checked code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NewType, Sequence

from .errors import DomainError, ValidationError

FluxUPhi0 = NewType("FluxUPhi0", float)
"""Magnetic flux in units of 1e-6 flux quanta."""

FreqGHz = NewType("FreqGHz", float)
"""Energy expressed as an equivalent ordinary frequency E/h, in GHz."""

TempK = NewType("TempK", float)
"""Thermodynamic temperature in kelvin."""

RatePerUs = NewType("RatePerUs", float)
"""Transition rate in inverse microseconds."""


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 constants; hbar and Phi0 are derived exactly."""

    h: float = 6.62607015e-34          # J s, exact
    e: float = 1.602176634e-19         # C, exact
    k_B: float = 1.380649e-23          # J/K, exact
    hbar: float = field(init=False)
    Phi0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "hbar", self.h / (2.0 * math.pi))
        object.__setattr__(self, "Phi0", self.h / (2.0 * self.e))


CONSTANTS = PhysicalConstants()

h = CONSTANTS.h
hbar = CONSTANTS.hbar
e = CONSTANTS.e
k_B = CONSTANTS.k_B
Phi0 = CONSTANTS.Phi0

_UPHI0_WB = Phi0 * 1e-6          # one micro flux quantum in weber
_GHZ = 1e9


def uphi0_to_wb(phi_x: FluxUPhi0) -> float:
    """Convert flux from micro flux quanta to weber."""
    return phi_x * _UPHI0_WB


def wb_to_uphi0(phi_wb: float) -> FluxUPhi0:
    """Convert flux from weber to micro flux quanta."""
    return FluxUPhi0(phi_wb / _UPHI0_WB)


def kelvin_to_ghz(temperature: TempK) -> FreqGHz:
    """Thermal energy k_B*T as an equivalent frequency in GHz."""
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return FreqGHz(k_B * temperature / h / _GHZ)


def ghz_to_kelvin(nu: FreqGHz) -> TempK:
    """Inverse of :func:`kelvin_to_ghz`."""
    return TempK(nu * _GHZ * h / k_B)


def flux_to_energy(phi_x: FluxUPhi0, ip: float) -> FreqGHz:
    """Energy bias of the double well at flux bias ``phi_x``.

    The two wells tilt in opposite directions, so the bias between the
    lowest states is eps = 2 * I_p * Phi^x.  Returned as eps/h in GHz.

    Parameters
    ----------
    phi_x:
        Flux bias from the degeneracy point, in micro flux quanta.
    ip:
        Persistent current in ampere; must be positive.
    """
    if ip <= 0:
        raise DomainError(f"persistent current must be positive, got {ip}")
    return FreqGHz(2.0 * ip * uphi0_to_wb(phi_x) / h / _GHZ)


def energy_to_flux(nu: FreqGHz, ip: float) -> FluxUPhi0:
    """Flux bias that produces energy bias ``nu`` (GHz); inverse of
    :func:`flux_to_energy`."""
    if ip <= 0:
        raise DomainError(f"persistent current must be positive, got {ip}")
    return wb_to_uphi0(nu * _GHZ * h / (2.0 * ip))


def derive_eta(gamma_phi: FluxUPhi0, ip: float, temperature: TempK) -> float:
    """Dimensionless ohmic coupling eta = 4 I_p gamma_Phi / k_B T."""
    if temperature <= 0:
        raise DomainError(f"temperature must be positive, got {temperature}")
    return 4.0 * ip * uphi0_to_wb(gamma_phi) / (k_B * temperature)


def derive_shunt_and_inductive_loss(
    gamma_phi: FluxUPhi0,
    ip: float,
    inductance: float,
    temperature: TempK,
    omegas: Sequence[float] = (),
) -> tuple[float, tuple[tuple[float, float], ...]]:
    """Shunt resistance and inductive loss tangent from ohmic flux noise.

    R_S = 2 I_p L^2 k_B T / (hbar gamma_Phi) and tan delta_L(omega) =
    omega L / R_S.  A vanishing ``gamma_phi`` means no ohmic noise at
    all; that limit is reported as an infinite shunt resistance with all
    loss tangents zero rather than raising.

    Parameters
    ----------
    gamma_phi:
        Ohmic broadening parameter in micro flux quanta (>= 0).
    ip, inductance, temperature:
        Persistent current (A), main-loop inductance (H), temperature (K).
    omegas:
        Angular frequencies (rad/s) at which to evaluate tan delta_L.

    Returns
    -------
    (r_shunt, tan_delta_l_at):
        Shunt resistance in ohm and a tuple of (omega, tan delta_L) pairs.
    """
    if ip <= 0 or inductance <= 0 or temperature <= 0:
        raise DomainError("ip, inductance and temperature must be positive")
    if gamma_phi < 0:
        raise DomainError(f"gamma_phi must be non-negative, got {gamma_phi}")
    if gamma_phi == 0:
        return math.inf, tuple((w, 0.0) for w in omegas)
    r_shunt = (2.0 * ip * inductance**2 * k_B * temperature
               / (hbar * uphi0_to_wb(gamma_phi)))
    tan_l = tuple((w, w * inductance / r_shunt) for w in omegas)
    return r_shunt, tan_l


def derive_tan_delta_c(zeta_phi: FluxUPhi0, phi31: FluxUPhi0) -> float:
    """Capacitive loss tangent tan delta_C = zeta_Phi / Phi^x_31."""
    if phi31 <= 0:
        raise DomainError(f"phi31 must be positive, got {phi31}")
    if zeta_phi < 0:
        raise DomainError(f"zeta_phi must be non-negative, got {zeta_phi}")
    return zeta_phi / phi31


@dataclass(frozen=True)
class NoiseSummary:
    """Derived noise metrics for one qubit.

    tan_delta_l_at holds (angular frequency rad/s, value) pairs; the loss
    tangent is linear in frequency so any probe frequency set works.
    """

    eta: float
    r_shunt_ohm: float
    tan_delta_c: float
    tan_delta_l_at: tuple[tuple[float, float], ...]


DEFAULT_LOSS_OMEGAS = (2.0 * math.pi * 1e9,)


def noise_summary(
    gamma_phi: FluxUPhi0,
    zeta_phi: FluxUPhi0,
    phi31: FluxUPhi0,
    ip: float,
    inductance: float,
    temperature: TempK,
    omegas: Sequence[float] = DEFAULT_LOSS_OMEGAS,
) -> NoiseSummary:
    """Bundle all four derived metrics for reporting."""
    r_shunt, tan_l = derive_shunt_and_inductive_loss(
        gamma_phi, ip, inductance, temperature, omegas)
    return NoiseSummary(
        eta=derive_eta(gamma_phi, ip, temperature),
        r_shunt_ohm=r_shunt,
        tan_delta_c=derive_tan_delta_c(zeta_phi, phi31),
        tan_delta_l_at=tan_l,
    )


@dataclass(frozen=True)
class QubitCircuitParams:
    """Nominal rf-SQUID circuit parameters.

    ic_a is the total critical current through both junctions of the
    compound junction, phi_cjj_x the compound-junction bias in units of
    the flux quantum, ip_a the independently measured persistent current.
    """

    ic_a: float
    l_h: float
    c_f: float
    phi_cjj_x: float
    ip_a: float

    def __post_init__(self):
        for name in ("ic_a", "l_h", "c_f", "ip_a"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)}")
        if abs(self.phi_cjj_x) > 1.0:
            raise ValidationError(
                f"|phi_cjj_x| must not exceed 1 flux quantum, got {self.phi_cjj_x}")

"""Full-circuit cross-check: 1D rf-SQUID double-well eigenproblem.

The compound-junction rf-SQUID is reduced to one flux degree of freedom
by pinning the fast compound-junction coordinate at its applied bias
(the small-inductance limit of the secondary loop), leaving

    H = q^2 / 2C + (Phi - Phi^x + Phi0/2)^2 / 2L
        - E_J |cos(pi Phi_CJJ^x / Phi0)| cos(2 pi Phi / Phi0)

on a uniform flux grid with a second-order finite-difference kinetic
term.  The sign of the junction cosine only relocates the degeneracy
point by half a flux quantum in raw applied flux, which the measured
flux axis absorbs, so the magnitude is used and the barrier sits at the
parabola minimum.

Metastable well states come from diagonalizing the Hamiltonian blocks on
either side of the partition point Phi - Phi^x + Phi0/2 = 0 (hard
truncation).  Energies, current and voltage matrix elements, and the
persistent current converge cleanly in that construction.  Tunneling
amplitudes do not: the cross-block coupling of hard-truncated states
vanishes linearly with the grid step, so the amplitudes are extracted
instead from avoided-crossing gaps of the untruncated spectrum, which is
the grid-converged equivalent (splitting at degeneracy for the ground
pair, minimal gap at the excited-state resonance for the first peak).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace
from typing import Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import minimize_scalar

from .errors import ConvergenceError, SingleWellError, ValidationError
from .rate_model import LineShapes, MrtParams, RateCurve, simulate_curve
from .units import (
    CONSTANTS,
    FluxUPhi0,
    FreqGHz,
    TempK,
    energy_to_flux,
    wb_to_uphi0,
)

_GHZ = 1e9
DEFAULT_GRID_POINTS = 4096
DEFAULT_HALF_SPAN = 0.5      # in flux quanta, each side of the partition


@dataclass(frozen=True)
class RfSquidParams:
    """Circuit parameters of the compound-junction rf-SQUID.

    ic_a is the total critical current of both junctions, phi_cjj_x the
    compound-junction bias in flux quanta, phi_x_uphi0 the main-loop bias
    measured from the degeneracy point.
    """

    ic_a: float
    l_h: float
    c_f: float
    phi_cjj_x: float
    phi_x_uphi0: FluxUPhi0 = 0.0

    def __post_init__(self):
        for name in ("ic_a", "l_h", "c_f"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if abs(self.phi_cjj_x) > 1.0:
            raise ValidationError("|phi_cjj_x| must not exceed 1 flux quantum")

    @property
    def ej_joule(self) -> float:
        return self.ic_a * CONSTANTS.Phi0 / (2.0 * math.pi)

    @property
    def ej_eff_joule(self) -> float:
        return self.ej_joule * abs(math.cos(math.pi * self.phi_cjj_x))

    @property
    def beta_eff(self) -> float:
        """Screening parameter; a double well requires beta_eff > 1."""
        return (2.0 * math.pi * self.l_h * self.ic_a
                * abs(math.cos(math.pi * self.phi_cjj_x)) / CONSTANTS.Phi0)


@dataclass(frozen=True, eq=False)
class EffectivePotential:
    """1D potential on a uniform grid of y = Phi/Phi0, energies in GHz."""

    y: np.ndarray
    u_ghz: np.ndarray
    partition_index: int
    params: RfSquidParams
    minima_indices: tuple

    @property
    def step(self) -> float:
        return self.y[1] - self.y[0]


def _potential_ghz(params: RfSquidParams, y: np.ndarray) -> np.ndarray:
    h = CONSTANTS.h
    yx = params.phi_x_uphi0 * 1e-6
    quad_term = (CONSTANTS.Phi0**2 / (2.0 * params.l_h) / h / _GHZ
                 * (y - yx + 0.5) ** 2)
    jj_term = params.ej_eff_joule / h / _GHZ * np.cos(2.0 * math.pi * y)
    return quad_term - jj_term


def effective_potential(params: RfSquidParams,
                        n_points: int = DEFAULT_GRID_POINTS,
                        half_span: float = DEFAULT_HALF_SPAN) -> EffectivePotential:
    """Build the effective 1D double-well potential.

    The grid is staggered symmetrically about the partition point (the
    partition falls between two grid points), which keeps the two wells
    exactly mirror-symmetric at zero bias.
    """
    if params.beta_eff <= 1.0:
        raise SingleWellError(
            f"beta_eff = {params.beta_eff:.4f} <= 1: the junction term cannot "
            "form a barrier; no double well exists at this compound-junction "
            "bias")
    if n_points < 64 or n_points % 2:
        raise ValidationError("n_points must be even and at least 64")
    yx = params.phi_x_uphi0 * 1e-6
    y_part = yx - 0.5
    dy = 2.0 * half_span / n_points
    y = y_part + (np.arange(n_points) + 0.5 - n_points / 2) * dy
    u = _potential_ghz(params, y)
    interior = (u[1:-1] < u[:-2]) & (u[1:-1] <= u[2:])
    minima = tuple(int(i) + 1 for i in np.nonzero(interior)[0])
    if len(minima) != 2:
        raise SingleWellError(
            f"expected exactly two potential minima in the window, found "
            f"{len(minima)} (beta_eff = {params.beta_eff:.4f})")
    part_idx = n_points // 2
    if not minima[0] < part_idx <= minima[1]:
        raise ValidationError("partition point does not separate the two wells")
    return EffectivePotential(y=y, u_ghz=u, partition_index=part_idx,
                              params=params, minima_indices=minima)


def _kinetic_coef_ghz(c_f: float) -> float:
    """hbar^2 / (2 C Phi0^2), as GHz per d^2/dy^2."""
    return CONSTANTS.hbar**2 / (2.0 * c_f * CONSTANTS.Phi0**2) / CONSTANTS.h / _GHZ


def _solve_block(diag, off, n_levels, label, dy):
    try:
        return eigh_tridiagonal(diag, off, select="i",
                                select_range=(0, n_levels - 1))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"eigenvalue solve failed in the {label} well block "
            f"(n = {len(diag)}, dy = {dy:.3e} Phi0): {exc}") from exc


@dataclass(frozen=True, eq=False)
class WellBasis:
    """Per-well metastable states and their matrix elements.

    States are numbered with even integers in the left well and odd in
    the right, interleaved by energy order within each well: 0, 2, 4...
    left; 1, 3, 5... right.  ``wavefunctions[n]`` lives on the full grid
    (zero outside its well).  ``current_a`` is the loop-current matrix in
    ampere (zero between opposite wells by construction), ``voltage_v``
    the magnitude of the junction-voltage matrix element in volt (the
    operator is antihermitian in the real position basis, so only the
    magnitude is physical here), ``delta_ghz`` the tunneling amplitudes
    for the pairs used by the two-peak model.
    """

    potential: EffectivePotential
    n_levels: int
    energies_ghz: np.ndarray          # index = state number, interleaved
    wavefunctions: np.ndarray         # shape (2 n_levels, n_grid)
    current_a: np.ndarray             # (2 n, 2 n)
    voltage_v: np.ndarray             # (2 n, 2 n), magnitudes
    delta_ghz: dict                   # {(0,1): ..., (0,3): ...}

    def state_index(self, well: str, k: int) -> int:
        return 2 * k + (1 if well == "R" else 0)

    @property
    def omega31_ghz(self) -> FreqGHz:
        """Level spacing E_3 - E_1 of the target (right) well, as E/h."""
        return FreqGHz(self.energies_ghz[3] - self.energies_ghz[1])

    @property
    def ip_a(self) -> float:
        return persistent_current(self)


def solve_wells(pot: EffectivePotential, c_f: float, n_levels: int = 2,
                compute_amplitudes: bool = True) -> WellBasis:
    """Diagonalize the Hamiltonian blocks on each side of the partition.

    Returns the lowest ``n_levels`` states per well with energies,
    current and voltage matrix elements, and (optionally) the tunneling
    amplitudes for the (0,1) and (0,3) pairs from avoided-crossing gaps
    of the untruncated spectrum.
    """
    if n_levels < 2:
        raise ValidationError("need at least two levels per well")
    y, u = pot.y, pot.u_ghz
    n = len(y)
    dy = pot.step
    a = _kinetic_coef_ghz(c_f)
    diag = u + 2.0 * a / dy**2
    off = np.full(n - 1, -a / dy**2)
    m = pot.partition_index

    e_left, v_left = _solve_block(diag[:m], off[: m - 1], n_levels, "left", dy)
    e_right, v_right = _solve_block(diag[m:], off[m:], n_levels, "right", dy)

    n_states = 2 * n_levels
    energies = np.empty(n_states)
    psi = np.zeros((n_states, n))
    for k in range(n_levels):
        sl = v_left[:, k] * (1.0 if v_left[-1, k] > 0 else -1.0)
        sr = v_right[:, k] * (1.0 if v_right[0, k] > 0 else -1.0)
        energies[2 * k] = e_left[k]
        energies[2 * k + 1] = e_right[k]
        psi[2 * k, :m] = sl
        psi[2 * k + 1, m:] = sr

    # current operator is diagonal in flux: I = (Phi - Phi^x + Phi0/2)/L
    yx = pot.params.phi_x_uphi0 * 1e-6
    i_diag = CONSTANTS.Phi0 * (y - yx + 0.5) / pot.params.l_h
    current = np.zeros((n_states, n_states))
    for p in range(n_states):
        for q in range(p, n_states):
            if (p - q) % 2 == 0:      # same well; opposite wells vanish exactly
                val = float(np.sum(psi[p] * i_diag * psi[q]))
                current[p, q] = current[q, p] = val

    # voltage operator q/C = -i hbar/C d/dPhi; central differences give an
    # exactly antisymmetric derivative matrix on each block
    dpsi = np.zeros_like(psi)
    dpsi[:, 1:-1] = (psi[:, 2:] - psi[:, :-2]) / (2.0 * dy)
    voltage = np.zeros((n_states, n_states))
    for p in range(n_states):
        for q in range(n_states):
            if (p - q) % 2 == 0 and p != q:
                d = float(np.sum(psi[p] * dpsi[q]))
                voltage[p, q] = CONSTANTS.hbar / (c_f * CONSTANTS.Phi0) * abs(d)

    deltas = {}
    if compute_amplitudes:
        deltas[(0, 1)] = ground_pair_splitting(pot.params, c_f, n_points=n,
                                               half_span=_half_span_of(pot))
        omega31 = energies[3] - energies[1]
        deltas[(0, 3)], _ = excited_crossing_gap(
            pot.params, c_f, omega31, n_points=n, half_span=_half_span_of(pot))

    return WellBasis(potential=pot, n_levels=n_levels, energies_ghz=energies,
                     wavefunctions=psi, current_a=current, voltage_v=voltage,
                     delta_ghz=deltas)


def _half_span_of(pot: EffectivePotential) -> float:
    return (pot.y[-1] - pot.y[0] + pot.step) / 2.0


def full_spectrum(params: RfSquidParams, c_f: float, n_levels: int,
                  n_points: int = DEFAULT_GRID_POINTS,
                  half_span: float = DEFAULT_HALF_SPAN) -> np.ndarray:
    """Lowest levels of the untruncated 1D Hamiltonian, in GHz."""
    yx = params.phi_x_uphi0 * 1e-6
    y_part = yx - 0.5
    dy = 2.0 * half_span / n_points
    y = y_part + (np.arange(n_points) + 0.5 - n_points / 2) * dy
    u = _potential_ghz(params, y)
    a = _kinetic_coef_ghz(c_f)
    diag = u + 2.0 * a / dy**2
    off = np.full(n_points - 1, -a / dy**2)
    try:
        return eigh_tridiagonal(diag, off, select="i",
                                select_range=(0, n_levels - 1),
                                eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(
            f"full-spectrum eigenvalue solve failed (n = {n_points}, "
            f"dy = {dy:.3e} Phi0): {exc}") from exc


def ground_pair_splitting(params: RfSquidParams, c_f: float,
                          n_points: int = DEFAULT_GRID_POINTS,
                          half_span: float = DEFAULT_HALF_SPAN) -> FreqGHz:
    """Tunneling amplitude of the ground pair: the symmetric-antisymmetric
    splitting of the untruncated spectrum at the degeneracy bias."""
    at_zero = dc_replace(params, phi_x_uphi0=0.0)
    ev = full_spectrum(at_zero, c_f, 2, n_points, half_span)
    return FreqGHz(ev[1] - ev[0])


def excited_crossing_gap(params: RfSquidParams, c_f: float,
                         omega31_ghz: float,
                         n_points: int = DEFAULT_GRID_POINTS,
                         half_span: float = DEFAULT_HALF_SPAN) -> tuple:
    """Tunneling amplitude into the excited target state and the resonance
    bias: minimal avoided-crossing gap of levels 1 and 2 near the bias
    where the initial ground state aligns with the excited state.

    Returns (delta03_ghz, phi31_uphi0).
    """
    pot0 = effective_potential(dc_replace(params, phi_x_uphi0=0.0),
                               n_points, half_span)
    basis_free = solve_wells(pot0, c_f, n_levels=2, compute_amplitudes=False)
    ip = persistent_current(basis_free)
    phi_guess = energy_to_flux(omega31_ghz, ip)

    def gap(phi):
        ev = full_spectrum(dc_replace(params, phi_x_uphi0=float(phi)), c_f, 3,
                           n_points, half_span)
        return float(ev[2] - ev[1])

    lo, hi = 0.7 * phi_guess, 1.3 * phi_guess
    res = minimize_scalar(gap, bounds=(lo, hi), method="bounded",
                          options={"xatol": 0.02})
    phi31 = float(res.x)
    if phi31 - lo < 1.0 or hi - phi31 < 1.0:
        raise ConvergenceError(
            f"avoided-crossing search ended at the bracket edge "
            f"(phi = {phi31:.1f} uPhi0 in [{lo:.1f}, {hi:.1f}])")
    return FreqGHz(float(res.fun)), FluxUPhi0(phi31)


def persistent_current(basis: WellBasis) -> float:
    """I_p = (I_11 - I_00) / 2 from the lowest state of each well."""
    return float((basis.current_a[1, 1] - basis.current_a[0, 0]) / 2.0)


def harmonic_v31(omega31_rad_s: float, c_f: float) -> float:
    """Voltage matrix element in the harmonic-well approximation,
    sqrt(hbar omega31 / 2 C), in volt."""
    if omega31_rad_s <= 0 or c_f <= 0:
        raise ValidationError("omega31 and capacitance must be positive")
    return math.sqrt(CONSTANTS.hbar * omega31_rad_s / (2.0 * c_f))


@dataclass(frozen=True)
class FullModelNoise:
    """Noise inputs of the full model: flux-noise widths stay in flux
    units; charge noise enters as a loss tangent."""

    w_phi_uphi0: FluxUPhi0
    gamma_phi_uphi0: FluxUPhi0
    tan_delta_c: float
    temperature_k: TempK


@dataclass(frozen=True, eq=False)
class FullModelResult:
    curve: RateCurve
    params: MrtParams
    solver: dict


def full_model_rate(params: RfSquidParams, noise: FullModelNoise, phi_grid,
                    overrides: Optional[dict] = None,
                    bias_mode: str = "fixed",
                    n_points: int = DEFAULT_GRID_POINTS,
                    half_span: float = DEFAULT_HALF_SPAN,
                    gr_form: str = "standard") -> FullModelResult:
    """Rate curve with circuit quantities taken from the Hamiltonian.

    Solves the circuit at the degeneracy bias (ground-pair amplitude,
    persistent current) and at the excited-state resonance (first-peak
    amplitude, resonance bias, level spacing, voltage matrix element),
    maps the charge-noise loss tangent to the relaxation strength through
    zeta = 2 C V31^2 tan(delta_C), and delegates to the rate model.

    ``overrides`` replaces any of the derived MrtParams fields before the
    curve is computed, for sensitivity studies and for checking the
    delegation against the simplified model directly.  ``bias_mode``
    "fixed" evaluates circuit quantities at representative biases only;
    "per_bias" additionally replaces the linear flux-to-energy map by the
    exact level differences at every requested bias (one eigensolve per
    point).
    """
    if bias_mode not in ("fixed", "per_bias"):
        raise ValidationError(f"unknown bias_mode {bias_mode!r}")
    pot0 = effective_potential(dc_replace(params, phi_x_uphi0=0.0),
                               n_points, half_span)
    basis0 = solve_wells(pot0, params.c_f, n_levels=2, compute_amplitudes=False)
    ip = persistent_current(basis0)
    delta01 = ground_pair_splitting(params, params.c_f, n_points, half_span)
    omega31_0 = basis0.omega31_ghz
    delta03, phi31 = excited_crossing_gap(params, params.c_f, omega31_0,
                                          n_points, half_span)

    # resonance-bias basis for the intrawell quantities
    pot_res = effective_potential(dc_replace(params, phi_x_uphi0=phi31),
                                  n_points, half_span)
    basis_res = solve_wells(pot_res, params.c_f, n_levels=2,
                            compute_amplitudes=False)
    v31 = float(basis_res.voltage_v[1, 3])
    omega31_res = basis_res.omega31_ghz

    zeta_joule = 2.0 * params.c_f * v31**2 * noise.tan_delta_c
    zeta_phi = wb_to_uphi0(zeta_joule / (2.0 * ip))

    mrt = MrtParams(
        delta01_ghz=delta01, delta03_ghz=delta03, phi31_uphi0=phi31,
        w_phi_uphi0=noise.w_phi_uphi0, gamma_phi_uphi0=noise.gamma_phi_uphi0,
        zeta_phi_uphi0=zeta_phi, temperature_k=noise.temperature_k, ip_a=ip)
    if overrides:
        unknown = set(overrides) - set(mrt.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown override fields: {sorted(unknown)}")
        mrt = dc_replace(mrt, **overrides)

    solver_info = {
        "ip_a": ip, "delta01_ghz": float(delta01), "delta03_ghz": float(delta03),
        "phi31_uphi0": float(phi31), "omega31_ghz": float(omega31_res),
        "omega31_degeneracy_ghz": float(omega31_0), "v31_volt": v31,
        "beta_eff": params.beta_eff,
    }

    if bias_mode == "fixed":
        curve = simulate_curve(phi_grid, mrt, gr_form=gr_form)
        return FullModelResult(curve=curve, params=mrt, solver=solver_info)

    phi = np.asarray(phi_grid, dtype=float)
    eps_exact = np.empty_like(phi)
    om31_exact = np.empty_like(phi)
    for i, p in enumerate(phi):
        pot_b = effective_potential(dc_replace(params, phi_x_uphi0=float(p)),
                                    n_points, half_span)
        basis_b = solve_wells(pot_b, params.c_f, n_levels=2,
                              compute_amplitudes=False)
        eps_exact[i] = basis_b.energies_ghz[0] - basis_b.energies_ghz[1]
        om31_exact[i] = basis_b.omega31_ghz
    shapes = LineShapes(mrt, float(phi.min()), float(phi.max()), gr_form=gr_form)
    coef1 = 1e3 * (2.0 * math.pi * mrt.delta01_ghz) ** 2 / 4.0
    coef3 = 1e3 * (2.0 * math.pi * mrt.delta03_ghz) ** 2 / 4.0
    rate = (coef1 * shapes.shape01(eps_exact)
            + coef3 * shapes.shape03(eps_exact - om31_exact + mrt.nu31_ghz()))
    curve = RateCurve(phi_x=phi, rate=rate, init_well="L")
    solver_info["bias_mode"] = "per_bias"
    return FullModelResult(curve=curve, params=mrt, solver=solver_info)

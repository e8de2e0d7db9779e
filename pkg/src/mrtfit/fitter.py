"""Weighted nonlinear least-squares estimation of the rate-model parameters.

Residuals are taken in log-rate space because measured curves span
several decades; weights are inverse squared relative errors when the
dataset carries them.  The minimizer is a damped (trust-region) least
squares with a central finite-difference Jacobian.  Positive
scale-spanning parameters (tunneling amplitudes, ohmic and charge
broadenings) are optimized in log space; the peak separation, Gaussian
width and temperature stay linear.  The fluctuation-dissipation tie
between the Gaussian width and its shift holds at every iterate because
the shift is recomputed from (W, T) inside the model.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import medfilt

from . import units
from .errors import ConvergenceError, ValidationError
from .rate_model import LineShapes, MrtParams
from .units import NoiseSummary, flux_to_energy, ghz_to_kelvin, kelvin_to_ghz

PARAM_NAMES = ("delta01", "delta03", "phi31", "w_phi", "gamma_phi",
               "zeta_phi", "temperature")
_LOG_PARAMS = frozenset({"delta01", "delta03", "gamma_phi", "zeta_phi"})

_FIELD_OF = {
    "delta01": "delta01_ghz",
    "delta03": "delta03_ghz",
    "phi31": "phi31_uphi0",
    "w_phi": "w_phi_uphi0",
    "gamma_phi": "gamma_phi_uphi0",
    "zeta_phi": "zeta_phi_uphi0",
    "temperature": "temperature_k",
}

DEFAULT_BOUNDS = {
    "delta01": (1e-9, 1.0),          # GHz
    "delta03": (1e-9, 5.0),          # GHz
    "phi31": (10.0, 2e4),            # uPhi0
    "w_phi": (0.5, 5e3),             # uPhi0
    "gamma_phi": (1e-4, 1e3),        # uPhi0
    "zeta_phi": (1e-4, 1e3),         # uPhi0
    "temperature": (5e-4, 0.2),      # K
}


@dataclass(frozen=True, eq=False)
class RateDataset:
    """Measured (or synthetic) rate-versus-flux data for one qubit.

    ``well`` is either a single 'L'/'R' for the whole dataset or an array
    of per-point labels.  The persistent current is an independently
    measured input, never fitted.
    """

    phi_x: np.ndarray
    rate: np.ndarray
    ip_a: float
    sigma_rel: Optional[np.ndarray] = None
    well: object = "L"
    qubit_id: Optional[str] = None

    def __post_init__(self):
        phi = np.asarray(self.phi_x, dtype=float)
        rate = np.asarray(self.rate, dtype=float)
        object.__setattr__(self, "phi_x", phi)
        object.__setattr__(self, "rate", rate)
        if phi.ndim != 1 or phi.shape != rate.shape or len(phi) == 0:
            raise ValidationError("phi_x and rate must be non-empty 1-d arrays "
                                  "of equal length")
        if not np.all(rate > 0):
            raise ValidationError("all rates must be positive")
        if self.ip_a <= 0:
            raise ValidationError(f"ip_a must be positive, got {self.ip_a}")
        if self.sigma_rel is not None:
            sig = np.asarray(self.sigma_rel, dtype=float)
            object.__setattr__(self, "sigma_rel", sig)
            if sig.shape != phi.shape or not np.all(sig > 0):
                raise ValidationError("sigma_rel must be positive and match phi_x")
        wells = self.well_labels()
        if not np.all(np.isin(wells, ("L", "R"))):
            raise ValidationError("well labels must be 'L' or 'R'")

    def __len__(self):
        return len(self.phi_x)

    def well_labels(self) -> np.ndarray:
        if isinstance(self.well, str):
            return np.full(len(self.phi_x), self.well)
        return np.asarray(self.well)

    def folded_phi(self) -> np.ndarray:
        """Flux biases mapped to the left-initialization orientation."""
        phi = self.phi_x.copy()
        phi[self.well_labels() == "R"] *= -1.0
        return phi

    def mirrored(self) -> "RateDataset":
        """The same data relabeled as seen from the opposite well."""
        wells = self.well_labels()
        flipped = np.where(wells == "L", "R", "L")
        return RateDataset(phi_x=-self.phi_x, rate=self.rate.copy(),
                           ip_a=self.ip_a, sigma_rel=None if self.sigma_rel is None
                           else self.sigma_rel.copy(), well=flipped,
                           qubit_id=self.qubit_id)


@dataclass(frozen=True)
class FitConfig:
    """Free-parameter mask, bounds, tolerances, and multistart policy."""

    free: tuple = PARAM_NAMES
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    ftol: float = 1e-10
    xtol: float = 1e-10
    gtol: float = 1e-10
    max_nfev: int = 2000
    multistart: int = 5
    jitter_rel: float = 0.2
    seed: int = 0
    gr_form: str = "standard"
    inductance_h: float = 250e-12    # used only for derived noise metrics
    diff_step: float = 1e-4

    def __post_init__(self):
        unknown = set(self.free) - set(PARAM_NAMES)
        if unknown:
            raise ValidationError(f"unknown free parameters: {sorted(unknown)}")
        for tol in (self.ftol, self.xtol, self.gtol):
            if tol <= 0:
                raise ValidationError("tolerances must be positive")
        for name, (lo, hi) in self.bounds.items():
            if name not in PARAM_NAMES:
                raise ValidationError(f"bounds given for unknown parameter {name!r}")
            if not lo < hi:
                raise ValidationError(f"empty bounds for {name}: ({lo}, {hi})")


@dataclass(frozen=True)
class InitialGuess:
    params: MrtParams
    two_peaks: bool
    note: str = ""


@dataclass(frozen=True, eq=False)
class FitResult:
    """Converged (or best-so-far) fit with linearized uncertainties."""

    params: MrtParams
    chi2: float
    dof: int
    param_order: tuple
    covariance: np.ndarray
    uncertainties: dict
    derived: NoiseSummary
    status: str
    converged: bool
    n_eval: int
    cost_initial: float
    n_starts: int = 1


def _params_to_dict(p: MrtParams) -> dict:
    return {name: getattr(p, _FIELD_OF[name]) for name in PARAM_NAMES}


def _params_from_dict(values: dict, ip_a: float) -> MrtParams:
    return MrtParams(
        delta01_ghz=values["delta01"], delta03_ghz=values["delta03"],
        phi31_uphi0=values["phi31"], w_phi_uphi0=values["w_phi"],
        gamma_phi_uphi0=values["gamma_phi"], zeta_phi_uphi0=values["zeta_phi"],
        temperature_k=values["temperature"], ip_a=ip_a)


# ---------------------------------------------------------------------------
# initial guess

_GAUSS_PEAK = 1.0 / math.sqrt(2.0 * math.pi)


def _delta_from_peak(rate_peak: float, w_ghz: float) -> float:
    """Invert the closed-form Gaussian peak rate for the tunneling
    amplitude: rate = 1e3 (2 pi d)^2 / 4 * 1/(sqrt(2 pi) W)."""
    g_peak = _GAUSS_PEAK / w_ghz
    return math.sqrt(4.0 * rate_peak / (1e3 * g_peak)) / (2.0 * math.pi)


def initial_guess(dataset: RateDataset,
                  provisional_t_k: float = 0.010) -> InitialGuess:
    """Heuristic starting point from peak locations, heights, valley level
    and tail excess.

    The zeroth-peak position is read as the reorganization shift, which
    the fluctuation-dissipation relation converts to a width guess at a
    provisional temperature.  Right-well points are folded onto the left
    orientation first, so mirrored datasets give identical guesses.
    """
    order = np.argsort(dataset.folded_phi())
    phi = dataset.folded_phi()[order]
    rate = dataset.rate[order]
    ip = dataset.ip_a
    conv = flux_to_energy(1.0, ip)           # GHz per uPhi0
    t_ghz = kelvin_to_ghz(provisional_t_k)

    log_rate = np.log(rate)
    smooth = medfilt(log_rate, 5) if len(rate) >= 5 else log_rate

    def width_guess_at(phi_peak: float) -> float:
        # FDT: the zeroth-peak shift and width are tied through temperature
        eps_p = max(phi_peak, 1.0) * conv
        return math.sqrt(2.0 * t_ghz * eps_p) / conv

    # plateau-aware strict local maxima of the smoothed curve (the median
    # filter flattens peak tops and valley floors into runs of equal values;
    # a run counts as one maximum only if both sides fall away)
    idx = []
    i = 1
    n_pts = len(smooth)
    while i < n_pts - 1:
        j = i
        while j + 1 < n_pts and smooth[j + 1] == smooth[i]:
            j += 1
        if smooth[i - 1] < smooth[i] and j + 1 < n_pts and smooth[j + 1] < smooth[i]:
            idx.append((i + j) // 2)
        i = j + 1
    # cluster maxima closer than five width guesses; the tallest of each
    # cluster represents one physical peak
    peaks = []
    for i in sorted(idx, key=lambda i: smooth[i], reverse=True):
        if all(abs(phi[i] - phi[j]) >= 5.0 * width_guess_at(min(phi[i], phi[j]))
               for j in peaks):
            peaks.append(i)
    top = sorted(peaks[:2], key=lambda i: phi[i])

    def refine_peak(i_peak: int):
        """Sub-grid peak position, Gaussian width and height from a local
        parabola through the raw log rate (exact for a Gaussian peak).
        Returns (position, sigma_or_0, peak_rate)."""
        j0, j1 = max(i_peak - 2, 0), min(i_peak + 3, len(phi))
        if j1 - j0 < 3:
            return phi[i_peak], 0.0, rate[i_peak]
        coeffs = np.polyfit(phi[j0:j1] - phi[i_peak], log_rate[j0:j1], 2)
        a, b, c0 = coeffs
        if a >= 0:
            return phi[i_peak], 0.0, rate[i_peak]
        pos = phi[i_peak] - b / (2.0 * a)
        height = math.exp(c0 - b * b / (4.0 * a))
        sigma = math.sqrt(-1.0 / (2.0 * a))
        return pos, sigma, height

    note = ""
    two = len(top) == 2
    if two:
        i0, i1 = top
        w_phi = width_guess_at(phi[i0])
        if phi[i1] - phi[i0] < 5.0 * w_phi:
            two = False
            note = "two maxima closer than five width guesses; merged"
    if not two:
        if not top:
            top = [int(np.argmax(smooth))]
        i0 = max(top, key=lambda i: smooth[i])
        w_phi = width_guess_at(phi[i0])
        w_ghz = w_phi * conv
        delta01 = _delta_from_peak(rate[i0], w_ghz)
        params = _params_from_dict({
            "delta01": delta01, "delta03": 0.0, "phi31": max(10.0 * w_phi, 100.0),
            "w_phi": w_phi, "gamma_phi": 1e-2 * w_phi, "zeta_phi": 0.0,
            "temperature": provisional_t_k}, ip)
        return InitialGuess(params=params, two_peaks=False,
                            note=note or "fewer than two peaks detected")

    i0, i1 = top
    pos0, sigma0, height0 = refine_peak(i0)
    pos1, sigma1, height1 = refine_peak(i1)
    # prefer the measured zeroth-peak width; the shift-to-width ratio then
    # fixes the temperature through the fluctuation-dissipation tie
    t_k = provisional_t_k
    if sigma0 > 0 and pos0 > 0:
        w_phi = sigma0
        t_ghz_est = conv * sigma0**2 / (2.0 * pos0)
        t_k = min(max(ghz_to_kelvin(t_ghz_est), 1e-3), 0.05)
        t_ghz = kelvin_to_ghz(t_k)
    w_ghz = w_phi * conv

    phi31 = pos1 - pos0
    delta01 = _delta_from_peak(height0, w_ghz)
    delta03 = _delta_from_peak(height1, w_ghz)

    # charge broadening from the valley level between the peaks, sampled past
    # the midpoint where the relaxation wing dominates the ohmic tail
    mid = (phi > pos0 + 3.0 * w_phi) & (phi < pos1 - 3.0 * w_phi)
    if np.any(mid):
        j = int(np.argmin(np.abs(phi - (pos0 + 0.55 * phi31))))
        if not mid[j]:
            j = np.nonzero(mid)[0][np.argmin(smooth[mid])]
        om_v = (phi[j] - pos1) * conv
        coef3 = 1e3 * (2.0 * math.pi * delta03) ** 2 / 4.0
        zeta_ghz = rate[j] * math.pi * om_v**2 / coef3
        zeta_phi = zeta_ghz / conv
    else:
        zeta_phi = 0.0

    # ohmic broadening from the tail beyond the Gaussian, short of the valley
    phi_t = pos0 + max(5.0 * w_phi, 0.08 * phi31)
    j = int(np.argmin(np.abs(phi - phi_t)))
    eps_t = (phi[j] - pos0) * conv
    gamma_phi = 1e-2 * w_phi
    if eps_t > 3.0 * t_ghz:
        coef1 = 1e3 * (2.0 * math.pi * delta01) ** 2 / 4.0
        coef3 = 1e3 * (2.0 * math.pi * delta03) ** 2 / 4.0
        om_t = (phi[j] - pos1) * conv
        relax_tail = coef3 * (zeta_phi * conv) / (math.pi * om_t**2)
        excess = rate[j] - relax_tail
        if excess > 0:
            gamma_phi = excess * math.pi * eps_t * t_ghz / coef1 / conv
    params = _params_from_dict({
        "delta01": delta01, "delta03": delta03, "phi31": phi31,
        "w_phi": w_phi, "gamma_phi": max(gamma_phi, 1e-4),
        "zeta_phi": max(zeta_phi, 1e-4), "temperature": t_k}, ip)
    return InitialGuess(params=params, two_peaks=True, note=note)


# ---------------------------------------------------------------------------
# fitting

def _to_x(values: dict, free: Sequence[str]) -> np.ndarray:
    return np.array([math.log(values[n]) if n in _LOG_PARAMS else values[n]
                     for n in free])


def _from_x(x: np.ndarray, free: Sequence[str], fixed: dict) -> dict:
    values = dict(fixed)
    for xi, name in zip(x, free):
        values[name] = math.exp(xi) if name in _LOG_PARAMS else float(xi)
    return values


def _x_bounds(free: Sequence[str], bounds: dict) -> tuple:
    lo, hi = [], []
    for name in free:
        b_lo, b_hi = bounds.get(name, DEFAULT_BOUNDS[name])
        if name in _LOG_PARAMS:
            if b_lo <= 0:
                b_lo = DEFAULT_BOUNDS[name][0]
            lo.append(math.log(b_lo))
            hi.append(math.log(b_hi))
        else:
            lo.append(b_lo)
            hi.append(b_hi)
    return np.array(lo), np.array(hi)


def _x_scale(free: Sequence[str], x0: np.ndarray) -> np.ndarray:
    floors = {"phi31": 10.0, "w_phi": 1.0, "temperature": 1e-3}
    scale = []
    for name, xi in zip(free, x0):
        if name in _LOG_PARAMS:
            scale.append(1.0)
        else:
            scale.append(max(abs(xi), floors.get(name, 1.0)))
    return np.array(scale)


class _Objective:
    """Weighted log-rate residuals for one dataset."""

    def __init__(self, dataset: RateDataset, free, fixed, gr_form):
        order = np.argsort(dataset.folded_phi())
        self.phi = dataset.folded_phi()[order]
        self.log_rate = np.log(dataset.rate[order])
        if dataset.sigma_rel is None:
            self.inv_sigma = np.ones_like(self.phi)
        else:
            self.inv_sigma = 1.0 / dataset.sigma_rel[order]
        self.ip = dataset.ip_a
        self.free = tuple(free)
        self.fixed = dict(fixed)
        self.gr_form = gr_form
        self.n_eval = 0

    def model_log_rate(self, values: dict) -> np.ndarray:
        params = _params_from_dict(values, self.ip)
        shapes = LineShapes(params, float(self.phi.min()), float(self.phi.max()),
                            gr_form=self.gr_form)
        rate = shapes.rate01(self.phi)
        if params.delta03_ghz > 0:
            rate = rate + shapes.rate03(self.phi)
        return np.log(rate)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.n_eval += 1
        values = _from_x(x, self.free, self.fixed)
        return (self.model_log_rate(values) - self.log_rate) * self.inv_sigma


def _linearized_uncertainties(jac: np.ndarray, chi2: float, n_pts: int,
                              free, x_best) -> tuple:
    """Covariance s^2 (J^T J)^-1 in natural parameter units via SVD, with
    infinite uncertainty flagged along any numerically null direction."""
    n_free = len(free)
    u, s, vt = np.linalg.svd(jac, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if len(s) else 0
    dof = max(n_pts - n_free, 1)
    s2 = chi2 / dof
    inv_s2 = np.zeros_like(s)
    inv_s2[:rank] = 1.0 / s[:rank] ** 2
    cov_x = (vt.T * inv_s2) @ vt * s2
    # chain rule to natural units: d(exp x)/dx = value for log parameters
    deriv = np.array([math.exp(xi) if name in _LOG_PARAMS else 1.0
                      for name, xi in zip(free, x_best)])
    cov = cov_x * np.outer(deriv, deriv)
    sigma = np.sqrt(np.maximum(np.diag(cov), 0.0))
    if rank < n_free:
        null_mix = np.abs(vt[rank:]).max(axis=0)
        sigma = np.where(null_mix > 1e-8, math.inf, sigma)
    return cov, sigma, rank, dof


def fit(dataset: RateDataset, config: FitConfig | None = None,
        guess: MrtParams | InitialGuess | None = None) -> FitResult:
    """Estimate the model parameters for one dataset.

    Runs up to ``config.multistart`` trust-region starts; the first uses
    the supplied (or automatic) guess, later ones jitter it by
    ``jitter_rel``, and the search stops early once a start converges.
    Raises ConvergenceError, carrying the best-so-far result, only if no
    start converges at all.
    """
    config = config or FitConfig()
    if guess is None:
        guess = initial_guess(dataset)
    if isinstance(guess, InitialGuess):
        guess = guess.params
    if guess.ip_a != dataset.ip_a:
        raise ValidationError("guess and dataset disagree on the persistent current")
    if len(dataset) < 12:
        raise ValidationError("a two-peak fit needs at least 12 points spanning "
                              f"both peaks, got {len(dataset)}")

    free = list(config.free)
    values0 = _params_to_dict(guess)
    if guess.delta03_ghz == 0.0:
        # degenerate single-peak start: the first peak carries no signal
        free = [n for n in free if n not in ("delta03", "zeta_phi")]
        values0["zeta_phi"] = 0.0
    fixed = {n: v for n, v in values0.items() if n not in free}

    lo, hi = _x_bounds(free, config.bounds)
    x0 = _to_x(values0, free)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValidationError("initial guess lies outside the configured bounds")

    objective = _Objective(dataset, free, fixed, config.gr_form)
    r0 = objective(x0)
    cost_initial = float(r0 @ r0)

    rng = np.random.default_rng(config.seed)
    best = None
    n_starts = 0
    for attempt in range(max(config.multistart, 1)):
        if attempt == 0:
            x_start = x0
        else:
            jitter = rng.uniform(-config.jitter_rel, config.jitter_rel, len(free))
            x_start = np.array([
                xi + math.log1p(j) if name in _LOG_PARAMS else xi * (1.0 + j)
                for xi, j, name in zip(x0, jitter, free)])
            x_start = np.clip(x_start, lo, hi)
        n_starts += 1
        res = least_squares(
            objective, x_start, method="trf", jac="3-point",
            diff_step=config.diff_step, bounds=(lo, hi),
            x_scale=_x_scale(free, x0), ftol=config.ftol, xtol=config.xtol,
            gtol=config.gtol, max_nfev=config.max_nfev)
        if best is None or res.cost < best.cost:
            best = res
        if res.status > 0:
            break

    chi2 = float(2.0 * best.cost)
    cov, sigma, rank, dof = _linearized_uncertainties(
        best.jac, chi2, len(dataset), free, best.x)
    values = _from_x(best.x, free, fixed)
    params = _params_from_dict(values, dataset.ip_a)
    uncertainties = {name: float(s) for name, s in zip(free, sigma)}
    derived = units.noise_summary(
        params.gamma_phi_uphi0, params.zeta_phi_uphi0, params.phi31_uphi0,
        params.ip_a, config.inductance_h, params.temperature_k)
    status = best.message if rank == len(free) else (
        best.message + f"; Jacobian rank {rank} < {len(free)}: "
        "unidentifiable parameter directions flagged with infinite uncertainty")
    result = FitResult(
        params=params, chi2=chi2, dof=dof, param_order=tuple(free),
        covariance=cov, uncertainties=uncertainties, derived=derived,
        status=status, converged=best.status > 0, n_eval=objective.n_eval,
        cost_initial=cost_initial, n_starts=n_starts)
    if not result.converged:
        raise ConvergenceError(
            f"no start converged within {config.max_nfev} evaluations: "
            f"{best.message}", best=result)
    return result


# ---------------------------------------------------------------------------
# batch fitting

DERIVED_METRICS = ("eta", "r_shunt_ohm", "tan_delta_c", "tan_delta_l_1ghz")


def _metric_value(summary: NoiseSummary, name: str) -> float:
    if name == "tan_delta_l_1ghz":
        return summary.tan_delta_l_at[0][1]
    return getattr(summary, name)


@dataclass(frozen=True)
class BatchEntry:
    qubit_id: str
    result: Optional[FitResult]
    error: Optional[str]


@dataclass(frozen=True)
class BatchResult:
    entries: tuple
    summary: dict
    histograms: dict

    @property
    def n_ok(self) -> int:
        return sum(1 for e in self.entries if e.result is not None)


def _fit_one(args):
    dataset, config = args
    try:
        return fit(dataset, config)
    except ConvergenceError as exc:
        # keep the best-so-far result but mark it
        return exc
    except Exception as exc:   # noqa: BLE001  - isolate any per-qubit failure
        return exc


def batch_fit(datasets: Sequence[RateDataset], config: FitConfig | None = None,
              threads: int = 1) -> BatchResult:
    """Fit every dataset independently and summarize the derived metrics.

    Per-dataset failures are isolated into their entries and never abort
    the batch.  With ``threads`` > 1 the fits fan out over processes;
    results are collected in input order either way.
    """
    config = config or FitConfig()
    jobs = [(d, config) for d in datasets]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_fit_one, jobs))
    else:
        outcomes = [_fit_one(j) for j in jobs]

    entries = []
    for i, (dataset, outcome) in enumerate(zip(datasets, outcomes)):
        qubit_id = dataset.qubit_id or f"dataset-{i}"
        if isinstance(outcome, FitResult):
            entries.append(BatchEntry(qubit_id, outcome, None))
        elif isinstance(outcome, ConvergenceError):
            entries.append(BatchEntry(qubit_id, None, str(outcome)))
        else:
            entries.append(BatchEntry(qubit_id, None, f"{type(outcome).__name__}: {outcome}"))

    summary = {}
    histograms = {}
    ok = [e.result for e in entries if e.result is not None]
    for name in DERIVED_METRICS:
        vals = np.array([_metric_value(r.derived, name) for r in ok])
        vals = vals[np.isfinite(vals)]
        if len(vals) == 0:
            summary[name] = {"mean": math.nan, "std": math.nan, "n": 0}
            histograms[name] = []
            continue
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        summary[name] = {"mean": float(np.mean(vals)), "std": std, "n": len(vals)}
        counts, edges = np.histogram(vals, bins=min(8, max(len(vals) // 2, 1)))
        histograms[name] = [(float(edges[i]), float(edges[i + 1]), int(c))
                            for i, c in enumerate(counts)]
    return BatchResult(entries=tuple(entries), summary=summary,
                       histograms=histograms)

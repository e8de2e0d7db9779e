"""Dataset files, run configuration, fit reports, and plot tables.

Dataset files are comma-separated text with a leading block of
comment-prefixed metadata lines and a header row::

    # mrtfit-dataset v1
    # ip_uA = 1.37
    # qubit_id = q00
    phi_x_uPhi0,rate_per_us,rate_rel_err,well
    -5.000000000e+02,1.234567890e-03,5.000000000e-02,L

``rate_rel_err`` and ``well`` are optional columns; a dataset-wide well
label can be given as metadata instead.  Unknown columns are ignored
with a warning; malformed rows are rejected with their line number.

Run configuration is INI-style with sections [model], [fit], [squid],
[gen], [simulate], [output].  Every key has a documented default and
unknown keys are errors, so a typo cannot silently fall back.

All numeric output is fixed scientific notation with nine significant
digits, which makes regenerated files byte-comparable across platforms.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import ConfigError, DatasetFormatError, ReportError, ValidationError
from .fitter import FitConfig, FitResult, RateDataset, PARAM_NAMES
from .rate_model import MrtParams
from .units import noise_summary

DATASET_TAG = "mrtfit-dataset v1"
REPORT_TAG = "mrtfit-report-v1"

_FMT = "{:.8e}"          # nine significant digits


def fmt(value: float) -> str:
    return _FMT.format(float(value))


# ---------------------------------------------------------------------------
# dataset files

_KNOWN_COLUMNS = ("phi_x_uPhi0", "rate_per_us", "rate_rel_err", "well")


def load_dataset(path) -> RateDataset:
    """Parse and validate a dataset file.

    Raises DatasetFormatError with a line number for malformed rows or
    invariant violations (for example a non-positive rate).
    """
    path = Path(path)
    meta = {}
    header = None
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                unknown = [c for c in header if c not in _KNOWN_COLUMNS]
                if "phi_x_uPhi0" not in header or "rate_per_us" not in header:
                    raise DatasetFormatError(
                        "header must contain phi_x_uPhi0 and rate_per_us",
                        line=lineno)
                if unknown:
                    warnings.warn(f"{path.name}: ignoring unknown columns {unknown}",
                                  stacklevel=2)
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(header):
                raise DatasetFormatError(
                    f"expected {len(header)} fields, got {len(cells)}",
                    line=lineno)
            rows.append((lineno, dict(zip(header, cells))))
    if header is None or not rows:
        raise DatasetFormatError(f"{path}: no data rows found")

    if "ip_uA" not in meta:
        raise DatasetFormatError(
            f"{path}: metadata must carry the measured persistent current "
            "as '# ip_uA = ...'")
    try:
        ip_a = float(meta["ip_uA"]) * 1e-6
    except ValueError as exc:
        raise DatasetFormatError(f"bad ip_uA value {meta['ip_uA']!r}") from exc

    default_well = meta.get("well", "L")
    phi, rate, sig, well = [], [], [], []
    has_sigma = False
    for lineno, row in rows:
        try:
            phi.append(float(row["phi_x_uPhi0"]))
            r = float(row["rate_per_us"])
        except ValueError as exc:
            raise DatasetFormatError(f"non-numeric field: {exc}", line=lineno) from exc
        if r <= 0:
            raise DatasetFormatError(
                f"rate must be positive, got {row['rate_per_us']}", line=lineno)
        rate.append(r)
        s = row.get("rate_rel_err", "")
        if s:
            has_sigma = True
            try:
                s_val = float(s)
            except ValueError as exc:
                raise DatasetFormatError(f"bad rate_rel_err {s!r}", line=lineno) from exc
            if s_val <= 0:
                raise DatasetFormatError(
                    f"rate_rel_err must be positive, got {s}", line=lineno)
            sig.append(s_val)
        else:
            sig.append(math.nan)
        w = row.get("well", "") or default_well
        if w not in ("L", "R"):
            raise DatasetFormatError(f"well must be L or R, got {w!r}", line=lineno)
        well.append(w)

    order = np.argsort(np.asarray(phi))
    phi_arr = np.asarray(phi)[order]
    rate_arr = np.asarray(rate)[order]
    well_arr = np.asarray(well)[order]
    sigma = None
    if has_sigma:
        sig_arr = np.asarray(sig)[order]
        if np.any(np.isnan(sig_arr)):
            raise DatasetFormatError(
                f"{path}: rate_rel_err present on some rows but missing on others")
        sigma = sig_arr
    try:
        return RateDataset(phi_x=phi_arr, rate=rate_arr, ip_a=ip_a,
                           sigma_rel=sigma, well=well_arr,
                           qubit_id=meta.get("qubit_id"))
    except ValidationError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc


def save_dataset(path, dataset: RateDataset, extra_meta: Optional[dict] = None):
    """Write a dataset in the versioned file format."""
    path = Path(path)
    lines = [f"# {DATASET_TAG}", f"# ip_uA = {dataset.ip_a * 1e6:.6f}"]
    if dataset.qubit_id:
        lines.append(f"# qubit_id = {dataset.qubit_id}")
    for key, val in (extra_meta or {}).items():
        lines.append(f"# {key} = {val}")
    lines.append("phi_x_uPhi0,rate_per_us,rate_rel_err,well")
    wells = dataset.well_labels()
    sig = dataset.sigma_rel
    for i in range(len(dataset)):
        s = fmt(sig[i]) if sig is not None else ""
        lines.append(",".join([fmt(dataset.phi_x[i]), fmt(dataset.rate[i]),
                               s, wells[i]]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# run configuration

CONFIG_DEFAULTS = {
    "model": {
        "delta01_mhz": "2.72",
        "delta03_mhz": "29.8",
        "phi31_uphi0": "2153.6",
        "w_phi_uphi0": "37.2",
        "gamma_phi_uphi0": "0.54",
        "zeta_phi_uphi0": "4.53",
        "temperature_mk": "7.3",
        "ip_ua": "1.37",
        "gr_form": "standard",
    },
    "fit": {
        "free": "delta01,delta03,phi31,w_phi,gamma_phi,zeta_phi,temperature",
        "ftol": "1e-10",
        "xtol": "1e-10",
        "gtol": "1e-10",
        "max_nfev": "2000",
        "multistart": "5",
        "jitter_rel": "0.2",
        "seed": "0",
        "inductance_ph": "250",
    },
    "squid": {
        "ic_ua": "2.30",
        "l_ph": "250",
        "c_ff": "110",
        "phi_cjj_x": "-0.74",
        "grid_points": "4096",
        "half_span": "0.5",
        "n_levels": "2",
    },
    "gen": {
        "n_points": "200",
        "phi_min_uphi0": "-500",
        "phi_max_uphi0": "3000",
        "noise_rel": "0.05",
        "seed": "0",
        "well": "L",
        "qubit_id": "synthetic",
    },
    "simulate": {
        "n_points": "701",
        "phi_min_uphi0": "-500",
        "phi_max_uphi0": "3000",
        "well": "L",
    },
    "output": {
        "format": "table",        # table | json
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration with all defaults filled in."""

    sections: dict
    source_text: str = ""

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def getfloat(self, section: str, key: str) -> float:
        return float(self.get(section, key))

    def getint(self, section: str, key: str) -> int:
        return int(self.get(section, key))

    def model_params(self) -> MrtParams:
        m = self.sections["model"]
        return MrtParams(
            delta01_ghz=float(m["delta01_mhz"]) * 1e-3,
            delta03_ghz=float(m["delta03_mhz"]) * 1e-3,
            phi31_uphi0=float(m["phi31_uphi0"]),
            w_phi_uphi0=float(m["w_phi_uphi0"]),
            gamma_phi_uphi0=float(m["gamma_phi_uphi0"]),
            zeta_phi_uphi0=float(m["zeta_phi_uphi0"]),
            temperature_k=float(m["temperature_mk"]) * 1e-3,
            ip_a=float(m["ip_ua"]) * 1e-6)

    def fit_config(self) -> FitConfig:
        f = self.sections["fit"]
        free = tuple(x.strip() for x in f["free"].split(",") if x.strip())
        return FitConfig(
            free=free, ftol=float(f["ftol"]), xtol=float(f["xtol"]),
            gtol=float(f["gtol"]), max_nfev=int(f["max_nfev"]),
            multistart=int(f["multistart"]), jitter_rel=float(f["jitter_rel"]),
            seed=int(f["seed"]), gr_form=self.sections["model"]["gr_form"],
            inductance_h=float(f["inductance_ph"]) * 1e-12)

    def sha256(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()


def default_config() -> RunConfig:
    sections = {s: dict(kv) for s, kv in CONFIG_DEFAULTS.items()}
    return RunConfig(sections=sections, source_text="")


def load_config(path) -> RunConfig:
    """Read an INI run configuration, fail-closed on unknown entries."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    sections = {s: dict(kv) for s, kv in CONFIG_DEFAULTS.items()}
    for section in parser.sections():
        if section not in CONFIG_DEFAULTS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in CONFIG_DEFAULTS[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            sections[section][key] = value
    cfg = RunConfig(sections=sections, source_text=text)
    cfg.model_params()       # validate eagerly
    cfg.fit_config()
    return cfg


# ---------------------------------------------------------------------------
# fit reports

_REPORT_UNITS = {
    "delta01": ("delta01_mhz", 1e3),       # GHz -> MHz
    "delta03": ("delta03_mhz", 1e3),
    "phi31": ("phi31_uphi0", 1.0),
    "w_phi": ("w_phi_uphi0", 1.0),
    "gamma_phi": ("gamma_phi_uphi0", 1.0),
    "zeta_phi": ("zeta_phi_uphi0", 1.0),
    "temperature": ("temperature_mk", 1e3),
}

_FIELD_GETTERS = {
    "delta01": lambda p: p.delta01_ghz,
    "delta03": lambda p: p.delta03_ghz,
    "phi31": lambda p: p.phi31_uphi0,
    "w_phi": lambda p: p.w_phi_uphi0,
    "gamma_phi": lambda p: p.gamma_phi_uphi0,
    "zeta_phi": lambda p: p.zeta_phi_uphi0,
    "temperature": lambda p: p.temperature_k,
}


def report_from_fit(result: FitResult, config: FitConfig,
                    input_sha256: str = "", config_sha256: str = "",
                    timestamp: Optional[str] = None) -> dict:
    """Machine-readable fit report (a plain JSON-serializable dict)."""
    best = {}
    for name in PARAM_NAMES:
        label, scale = _REPORT_UNITS[name]
        value = _FIELD_GETTERS[name](result.params) * scale
        sigma = result.uncertainties.get(name)
        best[label] = {
            "value": float(value),
            "sigma_1": None if sigma is None else
            (None if math.isinf(sigma) else float(sigma * scale)),
            "fitted": name in result.param_order,
        }
    derived = {
        "eta": result.derived.eta,
        "r_shunt_ohm": result.derived.r_shunt_ohm,
        "tan_delta_c": result.derived.tan_delta_c,
        "tan_delta_l_at": [[w, v] for w, v in result.derived.tan_delta_l_at],
    }
    return {
        "format": REPORT_TAG,
        "provenance": {
            "tool": "mrtfit",
            "version": __version__,
            "created_utc": timestamp if timestamp is not None
            else time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "input_sha256": input_sha256,
            "config_sha256": config_sha256,
        },
        "fixed": {"ip_ua": result.params.ip_a * 1e6,
                  "inductance_ph": config.inductance_h * 1e12},
        "best_fit": best,
        "chi2": result.chi2,
        "dof": result.dof,
        "chi2_per_dof": result.chi2 / result.dof if result.dof else math.nan,
        "status": result.status,
        "converged": result.converged,
        "n_eval": result.n_eval,
        "n_starts": result.n_starts,
        "covariance": {"order": list(result.param_order),
                       "matrix": [[float(x) for x in row]
                                  for row in result.covariance]},
        "derived": derived,
    }


def save_report(path, report: dict):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_report(path) -> dict:
    """Load a report and re-derive the noise metrics from the stored
    best-fit parameters; a mismatch means the file was edited or the
    producing version disagrees, and is an error."""
    report = json.loads(Path(path).read_text(encoding="utf-8"))
    if report.get("format") != REPORT_TAG:
        raise ReportError(f"{path}: not a {REPORT_TAG} file")
    best = report["best_fit"]
    fixed = report["fixed"]
    summary = noise_summary(
        gamma_phi=best["gamma_phi_uphi0"]["value"],
        zeta_phi=best["zeta_phi_uphi0"]["value"],
        phi31=best["phi31_uphi0"]["value"],
        ip=fixed["ip_ua"] * 1e-6,
        inductance=fixed["inductance_ph"] * 1e-12,
        temperature=best["temperature_mk"]["value"] * 1e-3,
        omegas=tuple(w for w, _ in report["derived"]["tan_delta_l_at"]))
    stored = report["derived"]
    checks = [
        ("eta", summary.eta, stored["eta"]),
        ("r_shunt_ohm", summary.r_shunt_ohm, stored["r_shunt_ohm"]),
        ("tan_delta_c", summary.tan_delta_c, stored["tan_delta_c"]),
    ]
    for (w, v), (w_s, v_s) in zip(summary.tan_delta_l_at,
                                  stored["tan_delta_l_at"]):
        checks.append((f"tan_delta_l({w_s:.3e})", v, v_s))
    for name, fresh, persisted in checks:
        if not math.isclose(fresh, persisted, rel_tol=1e-9, abs_tol=1e-300):
            raise ReportError(
                f"{path}: derived metric {name} fails recomputation "
                f"({persisted} stored vs {fresh} recomputed)")
    return report


def render_report_text(report: dict) -> str:
    """Human-readable rendering of a fit report."""
    lines = [f"mrtfit fit report ({report['provenance']['version']})",
             f"status: {report['status']}",
             f"chi2/dof = {report['chi2_per_dof']:.4g}  "
             f"(chi2 = {report['chi2']:.6g}, dof = {report['dof']})",
             "", "best-fit parameters (1 sigma):"]
    for label, entry in report["best_fit"].items():
        sigma = entry["sigma_1"]
        tag = "" if entry["fitted"] else "  [fixed]"
        if sigma is None:
            lines.append(f"  {label:18s} = {fmt(entry['value'])}{tag}")
        else:
            lines.append(f"  {label:18s} = {fmt(entry['value'])} "
                         f"+- {fmt(sigma)}{tag}")
    lines.append("")
    lines.append("derived noise metrics:")
    d = report["derived"]
    lines.append(f"  eta              = {fmt(d['eta'])}")
    r_s = d["r_shunt_ohm"]
    lines.append("  R_shunt          = " +
                 ("infinite (no ohmic noise)" if math.isinf(r_s)
                  else f"{fmt(r_s / 1e3)} kOhm"))
    lines.append(f"  tan delta_C      = {fmt(d['tan_delta_c'])}")
    for w, v in d["tan_delta_l_at"]:
        lines.append(f"  tan delta_L      = {fmt(v)} at omega/2pi = "
                     f"{fmt(w / (2 * math.pi) / 1e9)} GHz")
    return "\n".join(lines) + "\n"


def input_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# plot-ready tables

def write_curve_table(path, curves: dict, dataset: Optional[RateDataset] = None):
    """Aligned table of model curves and (optionally) data with residuals.

    ``curves`` maps column label to RateCurve; all curves must share one
    flux grid.  The residual column is log10(data / first model column),
    the natural quantity to inspect for a log-space fit.  Rates are
    strictly positive by construction so the table is safe to plot on a
    log axis.
    """
    labels = list(curves)
    if not labels:
        raise ValidationError("need at least one curve")
    first = curves[labels[0]]
    for label in labels[1:]:
        if not np.array_equal(curves[label].phi_x, first.phi_x):
            raise ValidationError("all curves must share one flux grid")
    header = ["phi_x_uPhi0"] + [f"rate_{label}_per_us" for label in labels]
    data_col = None
    resid_col = None
    if dataset is not None:
        if len(dataset) != len(first) or not np.allclose(
                dataset.phi_x, first.phi_x, rtol=0, atol=1e-9):
            raise ValidationError("dataset grid must match the curve grid")
        data_col = dataset.rate
        resid_col = np.log10(dataset.rate / first.rate)
        header += ["data_rate_per_us", "residual_log10"]
    lines = ["# mrtfit-table v1", ",".join(header)]
    for i in range(len(first)):
        cells = [fmt(first.phi_x[i])]
        cells += [fmt(curves[label].rate[i]) for label in labels]
        if data_col is not None:
            cells += [fmt(data_col[i]), fmt(resid_col[i])]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

"""Figure-reproduction sweeps emitting self-describing CSV/JSON datasets."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ImpairmentParams, PhaseNoiseSpec, RngPolicy, SignalParams, SystemDims
from .covariance import CovarianceMatrix, exp_corr_cov, one_ring_cov, scaled_identity_cov
from .estimation import (
    avg_error_per_antenna,
    empirical_mse,
    error_covariance,
    pilot_covariance_direct,
    pilot_covariance_lrs,
    snr_to_power,
    to_db,
)
from .rates import (
    CascadeSource,
    EffectiveGaussianSource,
    ScalingParams,
    power_schedule,
    rate_ceiling,
    rate_imperfect_csi,
    rate_limit_imperfect,
    rate_limit_perfect,
    rate_perfect_csi,
)

FIGURES = ("fig3", "fig4", "fig5", "fig6", "custom-sweep")
DEFAULT_KAPPAS = (0.0, 0.05**2, 0.10**2, 0.15**2)


@dataclass(frozen=True)
class ExperimentSpec:
    figure: str
    snr_grid_db: tuple = ()
    n_grid: tuple = ()
    m_grid: tuple = ()
    kappas: tuple = ()
    trials: int = 10_000
    seed: int = 0
    m: int = 20
    n: int = 100
    noise_power: float = 1.0
    phase_noise_family: str = "none"
    phase_noise_spread: float = 0.0
    cov_model: str = "exp"  # fig3 / sweep: exp | identity | one-ring-20 | one-ring-10
    channel_source: str = "cascade"  # perfect-CSI rates: cascade | effective
    kind: str = "estimation"  # custom sweep: estimation | rate
    workers: int = 1

    @classmethod
    def defaults(cls, figure: str, **overrides) -> "ExperimentSpec":
        base = {
            "fig3": dict(snr_grid_db=tuple(range(-10, 61, 5)), kappas=DEFAULT_KAPPAS, trials=10_000),
            "fig4": dict(snr_grid_db=(5, 50), n_grid=tuple(range(0, 201, 20)), kappas=(0.05**2,), trials=10_000),
            "fig5": dict(snr_grid_db=tuple(range(-20, 41, 5)), kappas=(0.05**2,), trials=2_000),
            "fig6": dict(
                m_grid=(1, 2, 4, 8, 16, 32, 64, 128, 256),
                n_grid=(0, 10, 50, 100),
                snr_grid_db=(10,),
                kappas=(0.05**2,),
                trials=2_000,
            ),
            "custom-sweep": dict(snr_grid_db=tuple(range(0, 31, 5)), kappas=(0.05**2,), trials=2_000),
        }
        if figure not in base:
            raise ValueError(f"unknown figure {figure!r}")
        spec = cls(figure=figure, **base[figure])
        return replace(spec, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> None:
        if self.figure not in FIGURES:
            raise ValueError(f"unknown figure {self.figure!r}")
        for name in ("snr_grid_db", "n_grid", "m_grid", "kappas"):
            grid = getattr(self, name)
            if name in _REQUIRED[self.figure] and not grid:
                raise ValueError(f"{name} must be nonempty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.figure == "fig4" and (min(self.n_grid) < 0 or max(self.n_grid) > 200):
            raise ValueError("fig4 N grid must lie within [0, 200]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def policy(self) -> RngPolicy:
        return RngPolicy(self.seed)

    def impairments(self, kappa: float) -> ImpairmentParams:
        return ImpairmentParams(
            kappa, kappa, self.noise_power, PhaseNoiseSpec(self.phase_noise_family, self.phase_noise_spread)
        )


_REQUIRED = {
    "fig3": {"snr_grid_db", "kappas"},
    "fig4": {"snr_grid_db", "n_grid", "kappas"},
    "fig5": {"snr_grid_db", "kappas"},
    "fig6": {"m_grid", "n_grid", "snr_grid_db", "kappas"},
    "custom-sweep": {"snr_grid_db", "kappas"},
}


@dataclass
class FigureDataset:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}={self.metadata[key]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row.get(c, "")) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        clean = [{c: _json_value(r.get(c)) for c in self.columns} for r in self.rows]
        return json.dumps(
            {"name": self.name, "metadata": self.metadata, "columns": self.columns, "rows": clean},
            indent=1,
            sort_keys=True,
        )

    def write(self, path: str | Path, fmt: str = "csv") -> None:
        text = self.to_csv() if fmt == "csv" else self.to_json()
        Path(path).write_text(text, encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    return v


def _dataset(spec: ExperimentSpec, columns: list[str]) -> FigureDataset:
    meta = {
        "figure": spec.figure,
        "seed": spec.seed,
        "trials": spec.trials,
        "version": f"lrsim {__version__}",
        "spec": json.dumps(asdict(spec), sort_keys=True),
    }
    return FigureDataset(spec.figure, columns, [], meta)


def spec_from_metadata(meta: dict) -> ExperimentSpec:
    """Rebuild the spec a dataset was produced from."""
    d = json.loads(meta["spec"])
    return ExperimentSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def covariance_for(model: str, m: int) -> CovarianceMatrix:
    if model == "exp":
        return exp_corr_cov(m, 0.7)
    if model == "identity":
        return scaled_identity_cov(m, 1.0)
    if model.startswith("one-ring-"):
        return one_ring_cov(m, float(model.split("-")[-1]))
    raise ValueError(f"unknown covariance model {model!r}")


def _closed_form(c_d, c_i, imp, sig):
    m_d = error_covariance(c_d, pilot_covariance_direct(c_d, imp, sig), sig)
    m_i = error_covariance(c_i, pilot_covariance_lrs(c_d, c_i, imp, sig), sig)
    return m_d, m_i


# --------------------------------------------------------------------------


def run_fig3(spec: ExperimentSpec) -> FigureDataset:
    """Normalized estimation error of the direct and per-element channels versus SNR."""
    spec.validate()
    cov = covariance_for(spec.cov_model, spec.m)
    c_d = c_i = cov
    ds = _dataset(
        spec,
        [
            "snr_db", "kappa_ue", "kappa_bs", "n_elements", "err_direct_db", "err_lrs_db",
            "err_empirical_db", "trials", "err_empirical_direct_db", "err_direct_ci_db",
            "se_empirical_db", "se_empirical_direct_db",
        ],
    )
    for kappa in spec.kappas:
        imp = spec.impairments(kappa)
        for snr in spec.snr_grid_db:
            sig = SignalParams(snr_to_power(snr, c_i, spec.noise_power))
            m_d, m_i = _closed_form(c_d, c_i, imp, sig)
            tag = f"fig3/{spec.cov_model}/{kappa!r}/{snr!r}"
            emp_i = empirical_mse("lrs", c_d, c_i, imp, sig, spec.trials, spec.policy, tag + "/lrs", workers=spec.workers)
            emp_d = empirical_mse("direct", c_d, None, imp, sig, spec.trials, spec.policy, tag + "/direct", workers=spec.workers)
            ds.rows.append(
                {
                    "snr_db": float(snr),
                    "kappa_ue": imp.kappa_ue,
                    "kappa_bs": imp.kappa_bs,
                    "n_elements": 1,
                    "err_direct_db": to_db(avg_error_per_antenna(m_d, c_d)),
                    "err_lrs_db": to_db(avg_error_per_antenna(m_i, c_i)),
                    "err_empirical_db": to_db(emp_i.mean / c_i.trace),
                    "trials": spec.trials,
                    "err_empirical_direct_db": to_db(emp_d.mean / c_d.trace),
                    "err_direct_ci_db": to_db(avg_error_per_antenna(m_d, c_i)),
                    "se_empirical_db": _se_db(emp_i),
                    "se_empirical_direct_db": _se_db(emp_d),
                }
            )
    return ds


def _se_db(stats) -> float:
    # first-order propagation of the standard error into dB
    return 10 / math.log(10) * stats.std_error / stats.mean if stats.mean > 0 else math.nan


FIG4_MODELS = ("exp", "one-ring-20", "one-ring-10")


def run_fig4(spec: ExperimentSpec) -> FigureDataset:
    """Aggregate error of the direct plus all ``N`` element channels versus ``N``.

    Element covariances are identical and held fixed as ``N`` grows.
    """
    spec.validate()
    kappa = spec.kappas[0]
    imp = spec.impairments(kappa)
    ds = _dataset(
        spec,
        [
            "n_elements", "model", "snr_db", "kappa_ue", "kappa_bs", "err_direct_db", "err_element_db",
            "agg_err", "agg_err_total_norm_db", "agg_err_elem_norm_db",
        ],
    )
    for model in FIG4_MODELS:
        cov = covariance_for(model, spec.m)
        for snr in spec.snr_grid_db:
            sig = SignalParams(snr_to_power(snr, cov, spec.noise_power))
            m_d, m_i = _closed_form(cov, cov, imp, sig)
            for n in spec.n_grid:
                agg = m_d.trace + n * m_i.trace
                ds.rows.append(
                    {
                        "n_elements": n,
                        "model": model,
                        "snr_db": float(snr),
                        "kappa_ue": imp.kappa_ue,
                        "kappa_bs": imp.kappa_bs,
                        "err_direct_db": to_db(m_d.trace / cov.trace),
                        "err_element_db": to_db(m_i.trace / cov.trace),
                        "agg_err": agg,
                        "agg_err_total_norm_db": to_db(agg / (cov.trace * (1 + n))),
                        "agg_err_elem_norm_db": to_db(agg / cov.trace),
                    }
                )
    return ds


RATE_COLUMNS = ["m", "n", "alpha", "csi", "p_ue", "snr_db", "rate", "std_err", "limit", "trials", "system", "mode"]


def _perfect_source(spec: ExperimentSpec, scaling: ScalingParams, imp: ImpairmentParams):
    if spec.channel_source == "cascade":
        return CascadeSource(scaling.sigma_d2, 1.0, scaling.sigma_lrs2, imp.phase_noise)
    if spec.channel_source == "effective":
        return EffectiveGaussianSource(scaling)
    raise ValueError(f"unknown channel source {spec.channel_source!r}")


def _rate_row(spec, imp, scaling, dims, csi, p, snr_db, alpha, limit, system, mode, tag):
    if csi == "perfect":
        est = rate_perfect_csi(dims, imp, p, _perfect_source(spec, scaling, imp), spec.trials, spec.policy, tag, workers=spec.workers)
    else:
        est = rate_imperfect_csi(dims, imp, p, scaling, spec.trials, spec.policy, tag, workers=spec.workers)
    return {
        "m": dims.bs_antennas,
        "n": dims.lrs_elements,
        "alpha": alpha,
        "csi": csi,
        "p_ue": p,
        "snr_db": float(snr_db),
        "rate": est.mean_rate,
        "std_err": est.std_error,
        "limit": limit,
        "trials": est.trials,
        "system": system,
        "mode": mode,
    }


def run_fig5(spec: ExperimentSpec) -> FigureDataset:
    """Rate versus SNR ``p/sigma^2`` for the LRS, MISO and SISO systems."""
    spec.validate()
    imp = spec.impairments(spec.kappas[0])
    scaling = ScalingParams()
    systems = (("LRS", SystemDims(spec.m, spec.n)), ("MISO", SystemDims(spec.m, 0)), ("SISO", SystemDims(1, 0)))
    ds = _dataset(spec, RATE_COLUMNS)
    ceiling = rate_ceiling(imp)
    for csi in ("perfect", "imperfect"):
        for name, dims in systems:
            for snr in spec.snr_grid_db:
                p = 10 ** (snr / 10) * spec.noise_power
                ds.rows.append(_rate_row(spec, imp, scaling, dims, csi, p, snr, "", ceiling, name, "fixed", f"fig5/{csi}/{name}/{snr!r}"))
    return ds


def run_fig6(spec: ExperimentSpec) -> FigureDataset:
    """Rate versus ``M`` per ``N``, at fixed SNR and under the power scaling laws."""
    spec.validate()
    imp = spec.impairments(spec.kappas[0])
    scaling = ScalingParams()
    snr = spec.snr_grid_db[0]
    ds = _dataset(spec, RATE_COLUMNS)
    ceiling = rate_ceiling(imp)
    for n in spec.n_grid:
        for m in spec.m_grid:
            dims = SystemDims(m, n)
            p_fixed = 10 ** (snr / 10) * spec.noise_power
            for csi in ("perfect", "imperfect"):
                ds.rows.append(
                    _rate_row(spec, imp, scaling, dims, csi, p_fixed, snr, "", ceiling, "LRS", "fixed", f"fig6/fixed/{csi}/{m}/{n}")
                )
            p = power_schedule("perfect", scaling, dims)
            ds.rows.append(
                _rate_row(spec, imp, scaling, dims, "perfect", p, to_db(p / spec.noise_power), 1.0,
                          rate_limit_perfect(scaling, imp), "LRS", "scheduled", f"fig6/sched/perfect/{m}/{n}")
            )
            p = power_schedule("estimated", scaling, dims)
            ds.rows.append(
                _rate_row(spec, imp, scaling, dims, "imperfect", p, to_db(p / spec.noise_power), 0.5,
                          rate_limit_imperfect(scaling, imp), "LRS", "scheduled", f"fig6/sched/imperfect/{m}/{n}")
            )
    return ds


def run_sweep(spec: ExperimentSpec) -> FigureDataset:
    """Custom SNR sweep at the configured ``M``, ``N`` and impairment levels."""
    spec.validate()
    if spec.kind == "estimation":
        return run_fig3(spec)
    if spec.kind != "rate":
        raise ValueError(f"unknown sweep kind {spec.kind!r}")
    scaling = ScalingParams()
    dims = SystemDims(spec.m, spec.n)
    ds = _dataset(spec, RATE_COLUMNS)
    for kappa in spec.kappas:
        imp = spec.impairments(kappa)
        for csi in ("perfect", "imperfect"):
            for snr in spec.snr_grid_db:
                p = 10 ** (snr / 10) * spec.noise_power
                ds.rows.append(
                    _rate_row(spec, imp, scaling, dims, csi, p, snr, "", rate_ceiling(imp), "custom", "fixed", f"sweep/{kappa!r}/{csi}/{snr!r}")
                )
    return ds


RUNNERS = {"fig3": run_fig3, "fig4": run_fig4, "fig5": run_fig5, "fig6": run_fig6, "custom-sweep": run_sweep}


def run(spec: ExperimentSpec) -> FigureDataset:
    return RUNNERS[spec.figure](spec)

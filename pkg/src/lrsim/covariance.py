"""Channel covariance models and their square-root factors."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.linalg import toeplitz

HERMITIAN_RTOL = 1e-12
PSD_RTOL = 1e-10
FACTOR_RTOL = 1e-10


class NotPSDError(ValueError):
    """Matrix is not Hermitian positive semi-definite."""


def check_psd(entries: np.ndarray) -> None:
    a = np.asarray(entries)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotPSDError(f"covariance must be square, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), np.finfo(float).tiny)
    if np.abs(a - a.conj().T).max(initial=0.0) > HERMITIAN_RTOL * scale:
        raise NotPSDError("covariance is not Hermitian")
    w = np.linalg.eigvalsh(a)
    if w.size and w[0] < -PSD_RTOL * max(w[-1], 0.0) - np.finfo(float).eps * scale:
        raise NotPSDError(f"covariance has negative eigenvalue {w[0]:.3e}")


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """Hermitian PSD matrix with a lazily cached square-root factor."""

    entries: np.ndarray
    model: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        check_psd(a)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    @cached_property
    def factor(self) -> np.ndarray:
        return psd_factor(self)

    def diag(self) -> "CovarianceMatrix":
        return CovarianceMatrix(np.diag(np.diag(self.entries).real), "diag", {"of": self.model})

    def __add__(self, other: "CovarianceMatrix") -> "CovarianceMatrix":
        return CovarianceMatrix(self.entries + other.entries, "sum")

    def scaled(self, c: float) -> "CovarianceMatrix":
        if c < 0:
            raise ValueError("scale must be >= 0")
        return CovarianceMatrix(c * self.entries, self.model, dict(self.params, scaled=c))


def as_array(cov) -> np.ndarray:
    return cov.entries if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=complex)


def scaled_identity_cov(dim: int, lam: float) -> CovarianceMatrix:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return CovarianceMatrix(lam * np.eye(dim), "identity", {"lambda": lam})


def exp_corr_cov(dim: int, r: float, scale: float = 1.0) -> CovarianceMatrix:
    """Exponential correlation: entry ``(m, n) = scale * r**|m - n|``."""
    if not 0.0 <= r < 1.0:
        raise ValueError("correlation coefficient must lie in [0, 1)")
    if scale < 0:
        raise ValueError("scale must be >= 0")
    lags = np.arange(dim)
    return CovarianceMatrix(toeplitz(scale * r**lags), "exp", {"r": r, "scale": scale})


def one_ring_cov(
    dim: int,
    angular_spread_deg: float,
    nominal_angle_deg: float = 30.0,
    spacing_wavelengths: float = 0.5,
    scale: float = 1.0,
) -> CovarianceMatrix:
    """One-ring model for a uniform linear array.

    Entry ``(m, n)`` averages ``exp(j 2 pi d (m - n) sin(theta))`` uniformly over
    ``theta`` in ``[nominal - spread/2, nominal + spread/2]``.
    """
    if not 0.0 < angular_spread_deg <= 360.0:
        raise ValueError("angular spread must lie in (0, 360] degrees")
    half = np.deg2rad(angular_spread_deg) / 2
    centre = np.deg2rad(nominal_angle_deg)
    lo, hi = centre - half, centre + half

    # Toeplitz: only the first column needs quadrature.
    col = np.empty(dim, dtype=complex)
    for lag in range(dim):
        w = 2 * np.pi * spacing_wavelengths * lag
        re, _ = scipy.integrate.quad(lambda t: np.cos(w * np.sin(t)), lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200)
        im, _ = scipy.integrate.quad(lambda t: np.sin(w * np.sin(t)), lo, hi, epsabs=1e-10, epsrel=1e-10, limit=200)
        col[lag] = scale * (re + 1j * im) / (2 * half)
    entries = toeplitz(col, col.conj())
    params = {
        "angular_spread_deg": angular_spread_deg,
        "nominal_angle_deg": nominal_angle_deg,
        "spacing_wavelengths": spacing_wavelengths,
        "scale": scale,
    }
    return CovarianceMatrix(_clean_psd(entries), "one-ring", params)


def _clean_psd(a: np.ndarray) -> np.ndarray:
    # quadrature round-off can leave eigenvalues at -1e-16 on rank-deficient models
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if w[0] >= 0:
        return a
    w = np.clip(w, 0.0, None)
    a = (v * w) @ v.conj().T
    return 0.5 * (a + a.conj().T)


def psd_factor(cov) -> np.ndarray:
    """Return ``F`` with ``F @ F^H == cov``.

    Cholesky when the matrix is numerically positive definite, otherwise the
    Hermitian square root from an eigendecomposition.
    """
    a = as_array(cov)
    check_psd(a)
    norm = np.linalg.norm(a)
    if norm == 0:
        return np.zeros_like(a)
    try:
        f = scipy.linalg.cholesky(a, lower=True)
        if np.linalg.norm(f @ f.conj().T - a) <= FACTOR_RTOL * norm:
            return f
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(a)
    return v * np.sqrt(np.clip(w, 0.0, None))


def is_toeplitz(a: np.ndarray, atol: float = 1e-12) -> bool:
    a = as_array(a)
    return all(np.allclose(np.diag(a, k), np.diag(a, k)[0], atol=atol, rtol=0) for k in range(-a.shape[0] + 1, a.shape[0]))


def dump_csv(cov: CovarianceMatrix, path: str | Path) -> None:
    """Write ``cov`` as CSV: header ``dim,model,params`` then interleaved re/im rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dim", "model", "params"])
        w.writerow([cov.dim, cov.model, json.dumps(cov.params, sort_keys=True)])
        for row in cov.entries:
            w.writerow([repr(float(x)) for z in row for x in (z.real, z.imag)])


def load_csv(path: str | Path) -> CovarianceMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    dim, model, params = int(rows[1][0]), rows[1][1], json.loads(rows[1][2])
    data = np.array([[float(x) for x in r] for r in rows[2 : 2 + dim]])
    return CovarianceMatrix(data[:, 0::2] + 1j * data[:, 1::2], model, params)

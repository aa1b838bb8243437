"""Channel realizations: direct link, BS-surface-user cascade, effective channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PhaseNoiseSpec, SystemDims
from .covariance import CovarianceMatrix
from .montecarlo import complex_normal

_CASCADE_CHUNK = 1 << 21  # complex entries of G held at once


@dataclass(frozen=True)
class ChannelRealization:
    h_d: np.ndarray  # (M,)
    g: np.ndarray  # (M, N)
    h_r: np.ndarray  # (N,)

    @property
    def h_lrs(self) -> np.ndarray:
        """Cascaded channel ``G diag(h_r)``; column ``i`` is the path through element ``i``."""
        return self.g * self.h_r[np.newaxis, :]

    @property
    def dims(self) -> SystemDims:
        return SystemDims(self.g.shape[0], self.g.shape[1])


@dataclass(frozen=True)
class PhaseConfig:
    thetas: np.ndarray
    delta_thetas: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "PhaseConfig":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def nominal(self) -> np.ndarray:
        """Diagonal of the configured reflection matrix."""
        return np.exp(1j * np.asarray(self.thetas))

    @property
    def actual(self) -> np.ndarray:
        """Diagonal of the reflection matrix including phase errors."""
        return np.exp(1j * (np.asarray(self.thetas) + np.asarray(self.delta_thetas)))


def sample_gaussian_channel(cov: CovarianceMatrix, stream: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``h ~ CN(0, cov)``; with ``size`` the result has shape ``(size, dim)``."""
    shape = (cov.dim,) if size is None else (size, cov.dim)
    z = complex_normal(stream, shape)
    return z @ cov.factor.T


def sample_iid_cascade(
    dims: SystemDims,
    sigma_g2: float,
    sigma_r2: float,
    stream: np.random.Generator,
    sigma_d2: float = 1.0,
) -> ChannelRealization:
    if dims.lrs_elements < 1:
        raise ValueError("the cascade needs at least one reflecting element")
    m, n = dims.bs_antennas, dims.lrs_elements
    return ChannelRealization(
        h_d=complex_normal(stream, (m,), sigma_d2),
        g=complex_normal(stream, (m, n), sigma_g2),
        h_r=complex_normal(stream, (n,), sigma_r2),
    )


def sample_phase_noise(spec: PhaseNoiseSpec, n, stream: np.random.Generator) -> np.ndarray:
    """Phase errors drawn i.i.d. from ``spec``; ``n`` may be an int or a shape."""
    shape = n if isinstance(n, tuple) else (int(n),)
    if spec.family == "none" or spec.spread == 0:
        return np.zeros(shape)
    if spec.family == "uniform":
        half = min(spec.spread, np.pi)
        return stream.uniform(-half, half, size=shape)
    if spec.family == "von-mises":
        return stream.vonmises(0.0, 1.0 / spec.spread**2, size=shape)
    raise ValueError(f"unknown phase-noise family {spec.family!r}")


def effective_channel(real: ChannelRealization, phases: PhaseConfig | None = None, use_noise: bool = False) -> np.ndarray:
    """``h_d + G Phi h_r`` (nominal) or ``h_d + G Phi~ h_r`` (``use_noise=True``)."""
    n = real.g.shape[1]
    if real.h_d.shape[0] != real.g.shape[0] or real.h_r.shape[0] != n:
        raise ValueError("inconsistent channel dimensions")
    if n == 0:
        return real.h_d.copy()
    phases = phases if phases is not None else PhaseConfig.zeros(n)
    if len(phases.thetas) != n:
        raise ValueError("phase configuration does not match the number of elements")
    phi = phases.actual if use_noise else phases.nominal
    return real.h_d + real.g @ (phi * real.h_r)


def sample_effective_batch(
    dims: SystemDims,
    count: int,
    stream: np.random.Generator,
    sigma_d2: float = 1.0,
    sigma_g2: float = 1.0,
    sigma_r2: float = 1.0,
    phase_noise: PhaseNoiseSpec | None = None,
    thetas: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draws of ``(h, h_tilde)``, each of shape ``(count, M)``.

    ``G`` and ``h_r`` are i.i.d. zero-mean Gaussian; ``h_tilde`` uses the
    reflection phases perturbed by ``phase_noise``.
    """
    m, n = dims.bs_antennas, dims.lrs_elements
    if n == 0:
        h_d = complex_normal(stream, (count, m), sigma_d2)
        return h_d, h_d
    thetas = np.zeros(n) if thetas is None else np.asarray(thetas)
    phi = np.exp(1j * thetas)
    noisy = phase_noise is not None and phase_noise.family != "none" and phase_noise.spread > 0
    step = max(1, _CASCADE_CHUNK // (m * n))
    hs, hts = [], []
    for start in range(0, count, step):
        c = min(step, count - start)
        h_d = complex_normal(stream, (c, m), sigma_d2)
        g = complex_normal(stream, (c, m, n), sigma_g2)
        h_r = complex_normal(stream, (c, n), sigma_r2)
        h = h_d + np.einsum("tmn,tn->tm", g, phi * h_r)
        hs.append(h)
        if noisy:
            dtheta = sample_phase_noise(phase_noise, (c, n), stream)
            hts.append(h_d + np.einsum("tmn,tn->tm", g, phi * np.exp(1j * dtheta) * h_r))
    h = np.concatenate(hs)
    return (h, np.concatenate(hts)) if noisy else (h, h)

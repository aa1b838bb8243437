"""Additive transceiver distortion and the error vector magnitude."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import ImpairmentParams
from .covariance import CovarianceMatrix, as_array
from .montecarlo import complex_normal


@dataclass(frozen=True)
class PhaseKind:
    """Communication phase: ``pilot-direct``, ``pilot-lrs`` (element ``index``) or ``uplink-data``."""

    kind: str
    index: int | None = None

    def __post_init__(self):
        if self.kind not in ("pilot-direct", "pilot-lrs", "uplink-data"):
            raise ValueError(f"unknown phase {self.kind!r}")
        if self.kind == "pilot-lrs" and (self.index is None or self.index < 1):
            raise ValueError("pilot-lrs phase needs an element index >= 1")


PILOT_DIRECT = PhaseKind("pilot-direct")
UPLINK_DATA = PhaseKind("uplink-data")


def pilot_lrs(i: int) -> PhaseKind:
    return PhaseKind("pilot-lrs", i)


def ue_distortion_variance(p: float, kappa_ue: float) -> float:
    if p < 0:
        raise ValueError("power must be >= 0")
    return kappa_ue * p


def _bs_scale(p: float, imp: ImpairmentParams) -> float:
    # distortion follows the received power including the UE's own distortion
    return imp.kappa_bs * (p + imp.kappa_ue * p)


def _diag_cov(d: np.ndarray, model: str) -> CovarianceMatrix:
    return CovarianceMatrix(np.diag(np.asarray(d, dtype=float)), model)


def bs_distortion_cov(
    phase: PhaseKind,
    p: float,
    imp: ImpairmentParams,
    c_d: CovarianceMatrix,
    c_elems: Sequence[CovarianceMatrix] = (),
) -> CovarianceMatrix:
    """Diagonal covariance of the BS distortion during ``phase``."""
    total = np.diag(as_array(c_d)).real.copy()
    if phase.kind == "pilot-lrs":
        if phase.index > len(c_elems):
            raise IndexError(f"element {phase.index} out of range 1..{len(c_elems)}")
        total = total + np.diag(as_array(c_elems[phase.index - 1])).real
    elif phase.kind == "uplink-data":
        for c in c_elems:
            total = total + np.diag(as_array(c)).real
    return _diag_cov(_bs_scale(p, imp) * total, f"distortion/{phase.kind}")


def separated_signal_distortion_cov(
    p: float, imp: ImpairmentParams, c_d: CovarianceMatrix, c_i: CovarianceMatrix
) -> CovarianceMatrix:
    """BS distortion left in ``y_i - y_d``: both subphases' draws add up."""
    d = 2 * np.diag(as_array(c_d)).real + np.diag(as_array(c_i)).real
    return _diag_cov(_bs_scale(p, imp) * d, "distortion/separated")


def evm(kappa: float) -> float:
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return math.sqrt(kappa)


def sample_distortion(cov: CovarianceMatrix, stream: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Zero-mean complex Gaussian with diagonal covariance ``cov``."""
    var = np.diag(as_array(cov)).real
    shape = var.shape if size is None else (size,) + var.shape
    return complex_normal(stream, shape, var)

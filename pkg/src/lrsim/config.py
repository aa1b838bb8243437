"""System configuration, validation and the random-stream policy.

Every Monte Carlo routine in the package draws its randomness from streams
derived here, so that a run is fully described by ``(master_seed, tag,
block index)`` and does not depend on how many workers executed it.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

PHASE_NOISE_FAMILIES = ("none", "uniform", "von-mises")


@dataclass(frozen=True)
class SystemDims:
    bs_antennas: int  # M
    lrs_elements: int = 0  # N; 0 means no reflecting surface


@dataclass(frozen=True)
class PhaseNoiseSpec:
    """Circular distribution of the reflection phase error.

    ``spread`` is the half-width for ``uniform`` and ``1/sqrt(kappa)`` for
    ``von-mises`` (concentration ``kappa = 1/spread**2``).
    """

    family: str = "none"
    spread: float = 0.0


@dataclass(frozen=True)
class ImpairmentParams:
    kappa_ue: float = 0.0
    kappa_bs: float = 0.0
    noise_power: float = 1.0
    phase_noise: PhaseNoiseSpec = field(default_factory=PhaseNoiseSpec)

    @classmethod
    def symmetric(cls, kappa: float, noise_power: float = 1.0, phase_noise=None) -> "ImpairmentParams":
        return cls(kappa, kappa, noise_power, phase_noise or PhaseNoiseSpec())


@dataclass(frozen=True)
class SignalParams:
    """Pilot/data power. The pilot symbol is ``sqrt(pilot_power)`` (real, positive)."""

    pilot_power: float = 1.0

    @property
    def pilot_symbol(self) -> complex:
        return complex(math.sqrt(self.pilot_power))


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise ValueError("invalid configuration: " + "; ".join(self.violations))


def _is_real(x: Any) -> bool:
    try:
        return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) and math.isfinite(x)
    except TypeError:
        return False


def _is_count(x: Any) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def validate_config(dims: SystemDims, imp: ImpairmentParams, sig: SignalParams) -> ValidationReport:
    """Collect every violation in the three parameter groups.

    Never raises, whatever the inputs hold.
    """
    report = ValidationReport()
    v = report.violations

    m = getattr(dims, "bs_antennas", None)
    n = getattr(dims, "lrs_elements", None)
    if not (_is_count(m) and m >= 1):
        v.append("bs_antennas >= 1")
    if not (_is_count(n) and n >= 0):
        v.append("lrs_elements >= 0")

    for name in ("kappa_ue", "kappa_bs"):
        k = getattr(imp, name, None)
        if not (_is_real(k) and 0.0 <= k < 1.0):
            v.append(f"{name}: kappa in [0,1)")
    s2 = getattr(imp, "noise_power", None)
    if not (_is_real(s2) and s2 > 0):
        v.append("noise_power > 0")

    pn = getattr(imp, "phase_noise", None)
    family = getattr(pn, "family", None)
    spread = getattr(pn, "spread", None)
    if family not in PHASE_NOISE_FAMILIES:
        v.append(f"phase_noise family in {PHASE_NOISE_FAMILIES}")
    if not (_is_real(spread) and spread >= 0):
        v.append("phase_noise spread >= 0")

    p = getattr(sig, "pilot_power", None)
    if not (_is_real(p) and p > 0):
        v.append("pilot_power > 0")
    return report


# --------------------------------------------------------------------------
# random streams


@dataclass(frozen=True)
class RngPolicy:
    master_seed: int = 0


def _tag_key(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little")


def derive_stream(policy: RngPolicy, purpose_tag: str, trial_index: int) -> np.random.Generator:
    """Independent Philox stream keyed by ``(master_seed, purpose_tag, trial_index)``."""
    seq = np.random.SeedSequence(
        entropy=int(policy.master_seed) & (2**64 - 1),
        spawn_key=(_tag_key(purpose_tag), int(trial_index)),
    )
    return np.random.Generator(np.random.Philox(seq))


# --------------------------------------------------------------------------
# config file


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration as read from a config file and CLI flags."""

    m: int = 20
    n: int = 100
    kappa_ue: float = 0.05**2
    kappa_bs: float = 0.05**2
    noise_power: float = 1.0
    pilot_power: float = 1.0
    phase_noise_family: str = "none"
    phase_noise_spread: float = 0.0
    seed: int = 0
    trials: int | None = None

    @property
    def dims(self) -> SystemDims:
        return SystemDims(self.m, self.n)

    @property
    def impairments(self) -> ImpairmentParams:
        return ImpairmentParams(
            self.kappa_ue,
            self.kappa_bs,
            self.noise_power,
            PhaseNoiseSpec(self.phase_noise_family, self.phase_noise_spread),
        )

    @property
    def signal(self) -> SignalParams:
        return SignalParams(self.pilot_power)

    @property
    def policy(self) -> RngPolicy:
        return RngPolicy(self.seed)

    def override(self, **values: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in values.items() if v is not None})


_CONFIG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _CONFIG_TYPES[key]
    if kind == "int" or kind == "int | None":
        return int(raw, 0)
    if kind == "float":
        return float(raw)
    return raw.strip()


def load_config(path: str | Path) -> RunConfig:
    """Read a flat ``key = value`` file (``#`` comments allowed).

    Raises ``FileNotFoundError`` for a missing file and ``ValueError`` for
    unknown keys or unparsable values.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string("[run]\n" + text)
    values = {}
    for key, raw in parser["run"].items():
        if key not in _CONFIG_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ValueError(f"bad value for {key!r}: {raw!r}") from exc
    return RunConfig(**values)

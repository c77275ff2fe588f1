"""
Angular codebooks for RIS panels.

A codebook entry is the B-bit quantized steering vector of a panel towards
one (azimuth, elevation) pair of a uniform angular grid. Codebooks are built
offline from the element geometry only; no channel knowledge is involved.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import IO, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from errors import ConfigurationError, FieldOfViewError, OversamplingError
from geometry_channel import PhaseConfig, RisPanel, element_positions

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class AngleGrid(BaseModel):
    """
    Uniform search grid: alpha = alpha0 + m*pi/M' (m < M), beta = beta0 + n*pi/N' (n < N).

    Angles are in radians. The field-of-view bound M <= M'+1, N <= N'+1 is
    checked by ``check_field_of_view`` so callers can raise FieldOfViewError.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    alpha0: float
    beta0: float
    m_steps: int = Field(ge=1)
    n_steps: int = Field(ge=1)
    m_resolution: int = Field(ge=1)
    n_resolution: int = Field(ge=1)

    @classmethod
    def from_degrees(cls, alpha0_deg: float, beta0_deg: float, m: int, n: int, m_res: int, n_res: int) -> "AngleGrid":
        return cls(
            alpha0=math.radians(alpha0_deg),
            beta0=math.radians(beta0_deg),
            m_steps=m,
            n_steps=n,
            m_resolution=m_res,
            n_resolution=n_res,
        )

    @classmethod
    def square(cls, t: int, alpha0: float = 0.0, beta0: float = -math.pi / 2) -> "AngleGrid":
        """M = N = sqrt(T) with M' = N' = sqrt(T) - 1; T must be a perfect square >= 4."""
        side = math.isqrt(t)
        if side * side != t or side < 2:
            raise FieldOfViewError(
                f"T={t} is not a perfect square >= 4; the square grid needs M = N = sqrt(T) "
                f"and M' = N' = sqrt(T) - 1"
            )
        return cls(alpha0=alpha0, beta0=beta0, m_steps=side, n_steps=side,
                   m_resolution=side - 1, n_resolution=side - 1)

    @property
    def size(self) -> int:
        return self.m_steps * self.n_steps

    def check_field_of_view(self) -> None:
        if self.m_steps > self.m_resolution + 1:
            raise FieldOfViewError(f"M={self.m_steps} exceeds M'+1={self.m_resolution + 1}")
        if self.n_steps > self.n_resolution + 1:
            raise FieldOfViewError(f"N={self.n_steps} exceeds N'+1={self.n_resolution + 1}")

    def alphas(self) -> np.ndarray:
        return self.alpha0 + np.arange(self.m_steps) * math.pi / self.m_resolution

    def betas(self) -> np.ndarray:
        return self.beta0 + np.arange(self.n_steps) * math.pi / self.n_resolution


class CodebookEntry(NamedTuple):
    alpha: float
    beta: float
    config: PhaseConfig


@dataclass(frozen=True)
class Codebook:
    panel_id: str
    entries: tuple[CodebookEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def configs(self) -> list[PhaseConfig]:
        return [e.config for e in self.entries]


def wave_vector(alpha: float, beta: float, wavelength: float) -> np.ndarray:
    """u = (2*pi/lambda) [sin(beta)cos(alpha), sin(beta)sin(alpha), cos(beta)]."""
    if not wavelength > 0:
        raise ConfigurationError("Wavelength must be positive")
    k = TWO_PI / wavelength
    return k * np.array([
        math.sin(beta) * math.cos(alpha),
        math.sin(beta) * math.sin(alpha),
        math.cos(beta),
    ])


def _steering_phases(panel: RisPanel, alpha: float, beta: float, wavelength: float) -> np.ndarray:
    return element_positions(panel) @ wave_vector(alpha, beta, wavelength)


def steering_vector(panel: RisPanel, alpha: float, beta: float, wavelength: float) -> np.ndarray:
    """v(alpha, beta) = [exp(j u^T r_1), ..., exp(j u^T r_K)]."""
    return np.exp(1j * _steering_phases(panel, alpha, beta, wavelength))


def quantize_index(x, bits: int):
    """Index of the nearest of 2^bits phase levels, in [0, 2^bits)."""
    levels = 2 ** bits
    step = TWO_PI / levels
    idx = np.floor(np.mod(x, TWO_PI) / step + 0.5).astype(int) % levels
    return int(idx) if np.ndim(idx) == 0 else idx


def quantize_phase(x, bits: int):
    """Q(x) = step * floor(mod(x, 2pi)/step + 0.5), wrapped into [0, 2pi)."""
    if not 1 <= bits <= 8:
        raise ConfigurationError(f"Phase bits must be in [1, 8], got {bits}")
    return quantize_index(x, bits) * (TWO_PI / 2 ** bits)


def quantized_steering(panel: RisPanel, alpha: float, beta: float, wavelength: float) -> PhaseConfig:
    idx = quantize_index(_steering_phases(panel, alpha, beta, wavelength), panel.phase_bits)
    return PhaseConfig.from_array(panel, np.atleast_1d(idx))


def build_codebook(panel: RisPanel, grid: AngleGrid, wavelength: float) -> Codebook:
    """Enumerate the grid with beta outer and alpha inner; one quantized steering config per point."""
    grid.check_field_of_view()
    if grid.size > 2 ** (panel.phase_bits * panel.n_elements):
        raise OversamplingError(
            f"Panel '{panel.id}': T={grid.size} exceeds 2^(B*K)={2 ** (panel.phase_bits * panel.n_elements)}"
        )
    entries = tuple(
        CodebookEntry(float(alpha), float(beta), quantized_steering(panel, alpha, beta, wavelength))
        for beta in grid.betas()
        for alpha in grid.alphas()
    )
    logger.debug("Built codebook for panel '%s' with %d entries", panel.id, len(entries))
    return Codebook(panel_id=panel.id, entries=entries)


def write_codebook_csv(codebook: Codebook, out: Union[str, IO[str]]) -> None:
    """Columns: entry_index, alpha_deg, beta_deg, q0 .. q{K-1}."""
    if isinstance(out, str):
        with open(out, "w", newline="") as f:
            write_codebook_csv(codebook, f)
        return
    k = len(codebook.entries[0].config.indices) if codebook.entries else 0
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["entry_index", "alpha_deg", "beta_deg"] + [f"q{i}" for i in range(k)])
    for i, entry in enumerate(codebook.entries):
        writer.writerow(
            [i, f"{math.degrees(entry.alpha):.6f}", f"{math.degrees(entry.beta):.6f}", *entry.config.indices]
        )

"""
Link metrics: capacity, reciprocal condition number, power consumption,
energy efficiency, coverage statistics and a rank proxy.
"""
from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from errors import ConfigurationError, DimensionError, NumericError, UndefinedMetricError
from geometry_channel import PhaseConfig, RisPanel, reflection_coefficients

logger = logging.getLogger(__name__)

# "ICDF at 68%": the value reached by at least 68% of the samples.
ICDF_LEVEL = 0.68
RANK_TAU = 0.1
METRICS_COLUMNS = ("capacity_bpshz", "epsilon", "total_power_w", "ee_bits_per_joule", "rank_proxy")


class SystemParams(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    p_t: float = Field(gt=0, description="Per-antenna transmit power (W)")
    sigma_v2: float = Field(gt=0, description="Thermal noise variance per receive antenna (W)")
    bandwidth_hz: float = Field(gt=0, description="System bandwidth (Hz)")


class PowerModel(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    upsilon_bs: float = Field(ge=1, description="Inverse BS amplifier efficiency")
    p_c_bs: float = Field(ge=0, description="BS hardware power (W)")
    upsilon_lna: float = Field(ge=1, description="Inverse LNA efficiency")
    p_ps: float = Field(ge=0, description="Static power per phase shifter (W)")
    p_s_aris: float = Field(ge=0, description="Static power of an active RIS board (W)")
    tx_isotropy: bool = Field(default=True, description="E[x x^H] = I/N_t")


class MetricsReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    capacity_bpshz: float = Field(ge=0)
    epsilon: float = Field(ge=0, le=1)
    total_power_w: float = Field(gt=0)
    ee_bits_per_joule: float = Field(ge=0)
    rank_proxy: int = Field(ge=0)

    def csv_row(self) -> list[str]:
        return [repr(float(getattr(self, c))) for c in METRICS_COLUMNS[:-1]] + [str(self.rank_proxy)]


def _singular_values(h_tilde: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(np.asarray(h_tilde, dtype=complex))
    if not np.all(np.isfinite(h)):
        raise NumericError("Channel matrix contains non-finite entries")
    return linalg.svdvals(h)


def capacity(h_tilde: np.ndarray) -> float:
    """log2 det(I + H~ H~^H) evaluated as sum_i log2(1 + sigma_i^2)."""
    s = _singular_values(h_tilde)
    return float(np.sum(np.log1p(s ** 2)) / math.log(2.0))


def reciprocal_condition(h_tilde: np.ndarray) -> float:
    """sigma_min / sigma_max over the min(N_r, N_t) singular values."""
    s = _singular_values(h_tilde)
    if s.max() == 0:
        raise UndefinedMetricError("Reciprocal condition number of an all-zero matrix")
    return float(s.min() / s.max())


def rank_proxy(h_tilde: np.ndarray, tau: float = RANK_TAU) -> int:
    """Number of singular values at or above tau * sigma_max."""
    if not 0 < tau < 1:
        raise ConfigurationError(f"tau must be in (0, 1), got {tau}")
    s = _singular_values(h_tilde)
    if s.max() == 0:
        raise UndefinedMetricError("Rank proxy of an all-zero matrix")
    return int(np.count_nonzero(s >= tau * s.max()))


def received_snr_db(h_tilde: np.ndarray) -> float:
    """Average post-whitening SNR per receive antenna, 10 log10(||H~||_F^2 / N_r)."""
    h = np.atleast_2d(np.asarray(h_tilde, dtype=complex))
    if not np.all(np.isfinite(h)):
        raise NumericError("Channel matrix contains non-finite entries")
    power = float(np.sum(np.abs(h) ** 2)) / h.shape[0]
    return 10.0 * math.log10(power) if power > 0 else -math.inf


def bs_power(pm: PowerModel, sp: SystemParams, n_tx: int) -> float:
    """P_BS = upsilon_BS * N_t * P_t + P_c,BS."""
    return pm.upsilon_bs * n_tx * sp.p_t + pm.p_c_bs


def ris_power(
    pm: PowerModel,
    sp: SystemParams,
    panel: RisPanel,
    f_mat: np.ndarray,
    config: PhaseConfig,
) -> float:
    """
    Expected active-RIS power draw.

    upsilon_LNA * (P_t ||Phi F||_F^2 / N_t + c^2 K sigma_z^2) + K P_PS + P_s,ARIS,
    i.e. E||Phi F x||^2 under isotropic x and E||Phi z||^2.
    """
    if not pm.tx_isotropy:
        raise ConfigurationError("Only the isotropic transmit-signal model is supported")
    f_mat = np.atleast_2d(np.asarray(f_mat, dtype=complex))
    if f_mat.shape[0] != panel.n_elements:
        raise DimensionError(f"F has {f_mat.shape[0]} rows, panel '{panel.id}' has {panel.n_elements} elements")
    phi_f = reflection_coefficients(panel, config)[:, None] * f_mat
    amplified = panel.gain ** 2 * float(np.sum(np.abs(f_mat) ** 2))
    if not math.isclose(float(np.sum(np.abs(phi_f) ** 2)), amplified, rel_tol=1e-9, abs_tol=1e-300):
        raise NumericError(f"Panel '{panel.id}': ||Phi F|| depends on the phase configuration")
    n_tx = f_mat.shape[1]
    k = panel.n_elements
    dynamic = sp.p_t * amplified / n_tx + panel.gain ** 2 * k * panel.element_noise_power
    return pm.upsilon_lna * dynamic + k * pm.p_ps + pm.p_s_aris


def total_power(
    pm: PowerModel,
    sp: SystemParams,
    panels: Sequence[RisPanel],
    f_list: Sequence[np.ndarray],
    configs: Sequence[PhaseConfig],
    n_tx: int,
) -> float:
    """P_c = P_BS + sum_l P_ARIS,l."""
    if not len(panels) == len(f_list) == len(configs):
        raise DimensionError(
            f"{len(panels)} panels, {len(f_list)} F matrices and {len(configs)} configs"
        )
    p_c = bs_power(pm, sp, n_tx)
    p_c += sum(ris_power(pm, sp, p, f, c) for p, f, c in zip(panels, f_list, configs))
    if not p_c > 0:
        raise NumericError("Total power consumption must be positive")
    return p_c


def energy_efficiency(capacity_bpshz: float, sp: SystemParams, p_c: float) -> float:
    """EE = BW * C / P_c in bits per joule."""
    if not p_c > 0:
        raise ConfigurationError("Power consumption must be positive")
    return sp.bandwidth_hz * capacity_bpshz / p_c


def icdf_at(samples: Sequence[float], level: float = ICDF_LEVEL) -> float:
    """Largest sample value v such that at least ``level`` of the samples are >= v."""
    values = np.sort(np.asarray(samples, dtype=float))[::-1]
    if values.size == 0:
        raise ConfigurationError("icdf_at needs at least one sample")
    if not 0 < level < 1:
        raise ConfigurationError(f"level must be in (0, 1), got {level}")
    needed = max(1, math.ceil(round(level * values.size, 9)))
    return float(values[needed - 1])


def evaluate_report(h_tilde: np.ndarray, p_c: float, sp: SystemParams, tau: float = RANK_TAU) -> MetricsReport:
    cap = capacity(h_tilde)
    return MetricsReport(
        capacity_bpshz=cap,
        epsilon=reciprocal_condition(h_tilde),
        total_power_w=p_c,
        ee_bits_per_joule=energy_efficiency(cap, sp, p_c),
        rank_proxy=rank_proxy(h_tilde, tau),
    )

"""
Scenario geometry, RIS panel descriptions and channel synthesis.

The received signal per subcarrier is modeled as

    y = (H_d + sum_l G_l Phi_l F_l) sqrt(P_t) x + sum_l G_l Phi_l z_l + v

with Phi_l = c_l * diag(exp(j theta_l)). This module builds the matrices
H_d, G_l and F_l from a geometric description of the scene and assembles the
effective channel, the noise covariance and the whitened channel from them.

Channels are synthesized with a line-of-sight ray plus a configurable number
of single-bounce scatterer rays per link. Element phases use exact
per-element distances (spherical wavefront).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_serializer, model_validator
from scipy import constants, linalg

from errors import ConfigurationError, DimensionError, NumericError, SingularityError

logger = logging.getLogger(__name__)

# Unit-norm tolerance for panel normals.
NORMAL_TOLERANCE = 1e-9
# Eigenvalues below this fraction of the trace make R_n singular.
SINGULARITY_RATIO = 1e-15
# Scatterer box is the node bounding box grown by this margin on every side (meters).
SCENE_MARGIN_M = 1.0
MIN_LINK_DISTANCE_M = 1e-9


class Vec3(BaseModel):
    """Cartesian point or direction in meters. Serialized as ``[x, y, z]``."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x: float
    y: float
    z: float

    @model_validator(mode="before")
    @classmethod
    def from_sequence(cls, data):
        if isinstance(data, (list, tuple, np.ndarray)):
            if len(data) != 3:
                raise ValueError(f"Vec3 needs exactly 3 components, got {len(data)}")
            return {"x": data[0], "y": data[1], "z": data[2]}
        return data

    @model_serializer
    def to_list(self) -> list[float]:
        return [self.x, self.y, self.z]

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)


class RisPanel(BaseModel):
    """
    One active RIS array.

    Elements sit on a rows x cols grid in the local x-z plane. Each element
    amplifies by c = 10^(lna_gain_db/20) and applies a B-bit phase shift.
    ``spacing`` may be left unset and is filled with half a wavelength when
    the panel becomes part of a ScenarioGeometry. ``elements`` optionally
    lists the local element coordinates explicitly.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    id: str = Field(min_length=1)
    center: Vec3
    normal: Vec3
    rows: int = Field(ge=1)
    cols: int = Field(ge=1)
    spacing: Optional[float] = Field(default=None, gt=0, description="Element pitch (m)")
    lna_gain_db: float = Field(ge=0, description="LNA field gain of c (dB)")
    phase_bits: int = Field(ge=1, le=8)
    element_noise_power: float = Field(ge=0, description="Per-element noise variance (W)")
    elements: Optional[tuple[Vec3, ...]] = None

    @field_validator("normal")
    @classmethod
    def validate_normal(cls, v: Vec3) -> Vec3:
        if abs(v.norm() - 1.0) > NORMAL_TOLERANCE:
            raise ValueError(f"Panel normal must be a unit vector, got norm {v.norm():.12g}")
        return v

    @model_validator(mode="after")
    def validate_elements(self) -> "RisPanel":
        if self.elements is not None and len(self.elements) != self.rows * self.cols:
            raise ValueError(
                f"Panel '{self.id}': rows*cols = {self.rows * self.cols} "
                f"but {len(self.elements)} element positions were supplied"
            )
        return self

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    @property
    def gain(self) -> float:
        """Linear LNA field gain c."""
        return 10.0 ** (self.lna_gain_db / 20.0)

    @property
    def levels(self) -> int:
        return 2 ** self.phase_bits

    @property
    def phase_step(self) -> float:
        return 2.0 * math.pi / self.levels


class PhaseConfig(BaseModel):
    """Quantized phase indices of one panel; theta_k = indices[k] * phase_step."""
    model_config = ConfigDict(frozen=True)

    panel_id: str
    indices: tuple[int, ...]

    @field_validator("indices")
    @classmethod
    def validate_indices(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if any(i < 0 for i in v):
            raise ValueError("Phase indices must be non-negative")
        return v

    @classmethod
    def zeros(cls, panel: RisPanel) -> "PhaseConfig":
        return cls(panel_id=panel.id, indices=(0,) * panel.n_elements)

    @classmethod
    def from_array(cls, panel: RisPanel, indices: np.ndarray) -> "PhaseConfig":
        return cls(panel_id=panel.id, indices=tuple(int(i) for i in indices))

    def check_against(self, panel: RisPanel) -> None:
        """Raise DimensionError unless this config fits ``panel``."""
        if self.panel_id != panel.id:
            raise DimensionError(f"Config for panel '{self.panel_id}' given for panel '{panel.id}'")
        if len(self.indices) != panel.n_elements:
            raise DimensionError(
                f"Panel '{panel.id}' has {panel.n_elements} elements, config has {len(self.indices)}"
            )
        if any(i >= panel.levels for i in self.indices):
            raise DimensionError(f"Panel '{panel.id}': phase index out of range [0, {panel.levels})")

    def phases(self, panel: RisPanel) -> np.ndarray:
        return np.asarray(self.indices, dtype=float) * panel.phase_step


@dataclass(frozen=True)
class ChannelSet:
    """
    H_d (N_r x N_t), G_l (N_r x K_l) and F_l (K_l x N_t) for one realization.

    Arrays are made read-only on construction so a ChannelSet can be shared
    between workers.
    """
    h_direct: np.ndarray
    g_list: tuple[np.ndarray, ...]
    f_list: tuple[np.ndarray, ...]
    wavelength: float

    def __post_init__(self):
        h = np.array(self.h_direct, dtype=complex, ndmin=2)
        g_list = tuple(np.array(g, dtype=complex, ndmin=2) for g in self.g_list)
        f_list = tuple(np.array(f, dtype=complex, ndmin=2) for f in self.f_list)
        if len(g_list) != len(f_list):
            raise DimensionError(f"{len(g_list)} G matrices but {len(f_list)} F matrices")
        n_rx, n_tx = h.shape
        for idx, (g, f) in enumerate(zip(g_list, f_list)):
            if g.shape[0] != n_rx or f.shape[1] != n_tx or g.shape[1] != f.shape[0]:
                raise DimensionError(
                    f"Link {idx}: G {g.shape} and F {f.shape} inconsistent with H_d {h.shape}"
                )
        for arr in (h, *g_list, *f_list):
            if not np.all(np.isfinite(arr)):
                raise NumericError("Channel matrices must be finite")
            arr.setflags(write=False)
        if not self.wavelength > 0:
            raise ConfigurationError("Wavelength must be positive")
        object.__setattr__(self, "h_direct", h)
        object.__setattr__(self, "g_list", g_list)
        object.__setattr__(self, "f_list", f_list)

    @property
    def n_rx(self) -> int:
        return self.h_direct.shape[0]

    @property
    def n_tx(self) -> int:
        return self.h_direct.shape[1]

    @property
    def n_panels(self) -> int:
        return len(self.g_list)


class ScenarioGeometry(BaseModel):
    """Node placement, array sizes and scatterer settings of one scene."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    bs_position: Vec3
    n_tx: int = Field(ge=1)
    bs_antenna_spacing: Optional[float] = Field(default=None, gt=0)
    ue_position: Vec3
    n_rx: int = Field(ge=1)
    ue_antenna_spacing: Optional[float] = Field(default=None, gt=0)
    panels: tuple[RisPanel, ...] = ()
    carrier_frequency_hz: float = Field(gt=0)
    n_scatterers_per_link: int = Field(default=0, ge=0)
    scatter_gain_db: float = -10.0
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def apply_spacing_defaults(cls, data):
        """Fill unset element and antenna spacings with half a wavelength."""
        if not isinstance(data, dict) or not data.get("carrier_frequency_hz"):
            return data
        try:
            half_wave = wavelength_for(float(data["carrier_frequency_hz"])) / 2.0
        except (TypeError, ValueError):
            return data
        data = dict(data)
        for key in ("bs_antenna_spacing", "ue_antenna_spacing"):
            if data.get(key) is None:
                data[key] = half_wave
        panels = []
        for panel in data.get("panels") or ():
            if isinstance(panel, RisPanel):
                if panel.spacing is None:
                    panel = panel.model_copy(update={"spacing": half_wave})
            elif isinstance(panel, dict) and panel.get("spacing") is None:
                panel = {**panel, "spacing": half_wave}
            panels.append(panel)
        data["panels"] = panels
        return data

    @model_validator(mode="after")
    def validate_layout(self) -> "ScenarioGeometry":
        ids = [p.id for p in self.panels]
        if len(set(ids)) != len(ids):
            raise ValueError(f"Panel ids must be unique, got {ids}")
        points = [("bs", self.bs_position), ("ue", self.ue_position)]
        points += [(p.id, p.center) for p in self.panels]
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                a, b = points[i][1].as_array(), points[j][1].as_array()
                if np.linalg.norm(a - b) < MIN_LINK_DISTANCE_M:
                    raise ValueError(f"Positions of '{points[i][0]}' and '{points[j][0]}' coincide")
        return self

    @property
    def wavelength(self) -> float:
        return wavelength_for(self.carrier_frequency_hz)

    def panel(self, panel_id: str) -> RisPanel:
        for p in self.panels:
            if p.id == panel_id:
                return p
        raise ConfigurationError(f"Panel '{panel_id}' not found in scenario")


def wavelength_for(carrier_frequency_hz: float) -> float:
    return constants.c / carrier_frequency_hz


def with_phase_bits(panels: Sequence[RisPanel], bits: int) -> tuple[RisPanel, ...]:
    """Copies of ``panels`` with every phase resolution set to ``bits``."""
    return tuple(RisPanel.model_validate({**p.model_dump(), "phase_bits": bits}) for p in panels)


def with_ue_position(geom: ScenarioGeometry, position: Vec3) -> ScenarioGeometry:
    return ScenarioGeometry.model_validate({**geom.model_dump(), "ue_position": position})


def element_positions(panel: RisPanel) -> np.ndarray:
    """
    Local element coordinates, shape (K, 3).

    Row-major: rows run bottom to top along +z, columns left to right along
    +x, grid centered on the origin with y = 0.
    """
    if panel.elements is not None:
        return np.array([e.as_array() for e in panel.elements])
    if panel.spacing is None:
        raise ConfigurationError(f"Panel '{panel.id}' has no element spacing")
    rr, cc = np.meshgrid(np.arange(panel.rows), np.arange(panel.cols), indexing="ij")
    x = (cc.ravel() - (panel.cols - 1) / 2.0) * panel.spacing
    z = (rr.ravel() - (panel.rows - 1) / 2.0) * panel.spacing
    return np.column_stack([x, np.zeros_like(x), z])


def panel_rotation(panel: RisPanel) -> np.ndarray:
    """
    Rotation taking local coordinates to global ones.

    Local +y maps to the panel normal; local +z stays as close to global +z
    as possible.
    """
    n = panel.normal.as_array()
    up = np.array([0.0, 0.0, 1.0])
    ez = up - np.dot(up, n) * n
    if np.linalg.norm(ez) < NORMAL_TOLERANCE:
        raise ConfigurationError(
            f"Panel '{panel.id}': normal is parallel to the z-axis; panels must face horizontally"
        )
    ez /= np.linalg.norm(ez)
    ex = np.cross(n, ez)
    return np.column_stack([ex, n, ez])


def local_to_global(panel: RisPanel, p_local: Vec3) -> Vec3:
    rotated = panel_rotation(panel) @ p_local.as_array()
    return Vec3.model_validate(rotated + panel.center.as_array())


def global_element_positions(panel: RisPanel) -> np.ndarray:
    return element_positions(panel) @ panel_rotation(panel).T + panel.center.as_array()


def linear_array(center: Vec3, n: int, spacing: float) -> np.ndarray:
    """Uniform linear array along global x, shape (n, 3)."""
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    points = np.tile(center.as_array(), (n, 1))
    points[:, 0] += offsets
    return points


def _front_mask(points: np.ndarray, origin: np.ndarray, normal: Optional[np.ndarray]) -> np.ndarray:
    """1 where ``points`` lie strictly in front of a panel, 0 behind it."""
    if normal is None:
        return np.ones(points.shape[:-1])
    return ((points - origin) @ normal > 0).astype(float)


def _link_matrix(
    rx_points: np.ndarray,
    tx_points: np.ndarray,
    wavelength: float,
    rng: np.random.Generator,
    n_scatterers: int,
    scatter_gain_db: float,
    box: tuple[np.ndarray, np.ndarray],
    rx_normal: Optional[np.ndarray] = None,
    tx_normal: Optional[np.ndarray] = None,
) -> np.ndarray:
    """LoS plus scatterer rays between two point sets, shape (n_rx_points, n_tx_points)."""
    diff = rx_points[:, None, :] - tx_points[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist < MIN_LINK_DISTANCE_M):
        raise NumericError("Zero-distance link between array elements")

    k = 2.0 * np.pi / wavelength
    # RIS elements only radiate into their front half-space.
    gate = np.ones_like(dist)
    if rx_normal is not None:
        gate *= (-diff @ rx_normal > 0)
    if tx_normal is not None:
        gate *= (diff @ tx_normal > 0)
    h = gate * wavelength / (4.0 * np.pi * dist) * np.exp(-1j * k * dist)

    if n_scatterers:
        lo, hi = box
        scatterers = rng.uniform(lo, hi, size=(n_scatterers, 3))
        power = 10.0 ** (scatter_gain_db / 10.0)
        gains = np.sqrt(power / 2.0) * (
            rng.standard_normal(n_scatterers) + 1j * rng.standard_normal(n_scatterers)
        )
        rx_origin = rx_points.mean(axis=0)
        tx_origin = tx_points.mean(axis=0)
        for s, g in zip(scatterers, gains):
            d_rx = np.linalg.norm(rx_points - s, axis=-1)
            d_tx = np.linalg.norm(tx_points - s, axis=-1)
            if np.any(d_rx < MIN_LINK_DISTANCE_M) or np.any(d_tx < MIN_LINK_DISTANCE_M):
                continue
            path = d_rx[:, None] + d_tx[None, :]
            ray = g * wavelength / (4.0 * np.pi * path) * np.exp(-1j * k * path)
            ray *= _front_mask(s, rx_origin, rx_normal) * _front_mask(s, tx_origin, tx_normal)
            h = h + ray
    return h


def scene_box(geom: ScenarioGeometry) -> tuple[np.ndarray, np.ndarray]:
    nodes = [geom.bs_position, geom.ue_position] + [p.center for p in geom.panels]
    pts = np.array([n.as_array() for n in nodes])
    return pts.min(axis=0) - SCENE_MARGIN_M, pts.max(axis=0) + SCENE_MARGIN_M


def synth_channels(geom: ScenarioGeometry) -> ChannelSet:
    """
    Synthesize H_d, G_l and F_l for ``geom``.

    The random stream is consumed in a fixed order (direct link, then per
    panel BS->RIS and RIS->UE), so equal geometries give identical channels.
    """
    lam = geom.wavelength
    rng = np.random.default_rng(geom.seed)
    box = scene_box(geom)
    bs = linear_array(geom.bs_position, geom.n_tx, geom.bs_antenna_spacing)
    ue = linear_array(geom.ue_position, geom.n_rx, geom.ue_antenna_spacing)
    link = dict(
        wavelength=lam,
        rng=rng,
        n_scatterers=geom.n_scatterers_per_link,
        scatter_gain_db=geom.scatter_gain_db,
        box=box,
    )

    h_direct = _link_matrix(ue, bs, **link)
    g_list, f_list = [], []
    for panel in geom.panels:
        ris = global_element_positions(panel)
        normal = panel.normal.as_array()
        f_list.append(_link_matrix(ris, bs, rx_normal=normal, **link))
        g_list.append(_link_matrix(ue, ris, tx_normal=normal, **link))
    logger.debug(
        "Synthesized channels: %d panels, N_r=%d, N_t=%d, seed=%d",
        len(geom.panels), geom.n_rx, geom.n_tx, geom.seed,
    )
    return ChannelSet(h_direct=h_direct, g_list=tuple(g_list), f_list=tuple(f_list), wavelength=lam)


def _check_panels(cs: ChannelSet, panels: Sequence[RisPanel]) -> None:
    if len(panels) != cs.n_panels:
        raise DimensionError(f"{len(panels)} panels given for {cs.n_panels} RIS links")
    for panel, f in zip(panels, cs.f_list):
        if f.shape[0] != panel.n_elements:
            raise DimensionError(
                f"Panel '{panel.id}' has {panel.n_elements} elements, channel has {f.shape[0]}"
            )


def reflection_coefficients(panel: RisPanel, config: PhaseConfig) -> np.ndarray:
    """Diagonal of Phi = c * diag(exp(j theta))."""
    config.check_against(panel)
    return panel.gain * np.exp(1j * config.phases(panel))


def effective_channel(
    cs: ChannelSet,
    panels: Sequence[RisPanel],
    configs: Sequence[PhaseConfig],
    p_t: float,
) -> np.ndarray:
    """H = (H_d + sum_l G_l Phi_l F_l) * sqrt(P_t)."""
    if not p_t > 0:
        raise ConfigurationError("Transmit power must be positive")
    _check_panels(cs, panels)
    if len(configs) != len(panels):
        raise DimensionError(f"{len(configs)} phase configs given for {len(panels)} panels")
    h = cs.h_direct.copy()
    for panel, config, g, f in zip(panels, configs, cs.g_list, cs.f_list):
        h += (g * reflection_coefficients(panel, config)) @ f
    return np.sqrt(p_t) * h


def noise_covariance(cs: ChannelSet, panels: Sequence[RisPanel], sigma_v2: float) -> np.ndarray:
    """
    R_n = sum_l c_l^2 sigma_z,l^2 G_l G_l^H + sigma_v^2 I.

    Independent of the phase configuration since Q_l Q_l^H = I.
    """
    if not sigma_v2 > 0:
        raise ConfigurationError("Thermal noise variance must be positive")
    _check_panels(cs, panels)
    r_n = sigma_v2 * np.eye(cs.n_rx, dtype=complex)
    for panel, g in zip(panels, cs.g_list):
        r_n += panel.gain ** 2 * panel.element_noise_power * (g @ g.conj().T)
    return (r_n + r_n.conj().T) / 2.0


def inverse_sqrt(r_n: np.ndarray) -> np.ndarray:
    """Hermitian principal R_n^(-1/2)."""
    r_n = np.asarray(r_n, dtype=complex)
    if not np.all(np.isfinite(r_n)):
        raise NumericError("Noise covariance must be finite")
    w, v = linalg.eigh(r_n)
    trace = float(np.real(np.trace(r_n)))
    if trace <= 0 or w.min() < SINGULARITY_RATIO * trace:
        raise SingularityError(
            f"Noise covariance is singular (min eigenvalue {w.min():.3e}, trace {trace:.3e})"
        )
    return (v / np.sqrt(w)) @ v.conj().T


def whiten(h: np.ndarray, r_n: np.ndarray) -> np.ndarray:
    """H~ = R_n^(-1/2) H."""
    return inverse_sqrt(r_n) @ np.asarray(h, dtype=complex)

"""
Scenario files and run records.

Scenario files (``.scn``) are JSON documents with unit-suffixed keys; angles
are given in degrees and converted to radians on load. Any object in a
scenario file may carry a free-text ``comment`` key, which is ignored.

Run records are JSON documents holding one optimizer result together with
its metrics, the hash of the scenario it ran on and a checksum of the
record itself.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from codebook import AngleGrid
from config import __version__
from errors import ConfigurationError
from geometry_channel import RisPanel, ScenarioGeometry, Vec3
from metrics import ICDF_LEVEL, RANK_TAU, MetricsReport, PowerModel, SystemParams
from optimizers import OptResult

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ScenarioConfig(BaseModel):
    """Everything needed to synthesize, optimize and score one scenario."""
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    geometry: ScenarioGeometry
    system: SystemParams
    power: PowerModel
    grids: dict[str, AngleGrid] = Field(default_factory=dict)
    noise_objective_std: float = Field(default=0.0, ge=0)
    objective_metric: Literal["capacity", "snr"] = "capacity"
    rank_tau: float = Field(default=RANK_TAU, gt=0, lt=1)
    icdf_level: float = Field(default=ICDF_LEVEL, gt=0, lt=1)
    description: str = ""

    @model_validator(mode="after")
    def validate_grids(self) -> "ScenarioConfig":
        ids = {p.id for p in self.geometry.panels}
        for panel_id, grid in self.grids.items():
            if panel_id not in ids:
                raise ValueError(f"Grid given for unknown panel '{panel_id}'")
            grid.check_field_of_view()
        return self

    def grid_for(self, panel_id: str) -> AngleGrid:
        if panel_id not in self.grids:
            raise ConfigurationError(f"Scenario has no codebook grid for panel '{panel_id}'")
        return self.grids[panel_id]


# File schema. Every unit-bearing key without a documented default is required.

class _FileModel(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    comment: Optional[str] = None


class _NodeSpec(_FileModel):
    position_m: tuple[float, float, float]
    n_antennas: int
    spacing_m: Optional[float] = None


class _ScatterSpec(_FileModel):
    count: int
    gain_db: float


class _PanelSpec(_FileModel):
    id: str
    center_m: tuple[float, float, float]
    normal: tuple[float, float, float]
    rows: int
    cols: int
    spacing_m: Optional[float] = None
    lna_gain_db: float
    phase_bits: int
    element_noise_power_w: float
    elements_m: Optional[list[tuple[float, float, float]]] = None


class _GeometrySpec(_FileModel):
    bs: _NodeSpec
    ue: _NodeSpec
    panels: list[_PanelSpec] = Field(default_factory=list)
    carrier_frequency_hz: float
    scatterers: _ScatterSpec
    seed: int


class _SystemSpec(_FileModel):
    p_t_w: float
    sigma_v2_w: float
    bandwidth_hz: float


class _PowerSpec(_FileModel):
    upsilon_bs: float
    p_c_bs_w: float
    upsilon_lna: float
    p_ps_w: float
    p_s_aris_w: float


class _GridSpec(_FileModel):
    alpha0_deg: float
    beta0_deg: float
    m: int
    n: int
    m_res: int
    n_res: int


class _ObjectiveSpec(_FileModel):
    noise_std: float = 0.0
    metric: Literal["capacity", "snr"] = "capacity"


class _AnalysisSpec(_FileModel):
    rank_tau: float = RANK_TAU
    icdf_level: float = ICDF_LEVEL


class _ScenarioFile(_FileModel):
    description: str = ""
    geometry: _GeometrySpec
    system: _SystemSpec
    power: _PowerSpec
    grids: dict[str, _GridSpec] = Field(default_factory=dict)
    objective: _ObjectiveSpec = Field(default_factory=_ObjectiveSpec)
    analysis: _AnalysisSpec = Field(default_factory=_AnalysisSpec)


def _panel_from_spec(spec: _PanelSpec) -> RisPanel:
    return RisPanel(
        id=spec.id,
        center=Vec3.model_validate(spec.center_m),
        normal=Vec3.model_validate(spec.normal),
        rows=spec.rows,
        cols=spec.cols,
        spacing=spec.spacing_m,
        lna_gain_db=spec.lna_gain_db,
        phase_bits=spec.phase_bits,
        element_noise_power=spec.element_noise_power_w,
        elements=None if spec.elements_m is None else tuple(Vec3.model_validate(e) for e in spec.elements_m),
    )


def scenario_from_dict(data: dict[str, Any]) -> ScenarioConfig:
    """Validate a scenario document; raises ConfigurationError naming the violated field."""
    try:
        spec = _ScenarioFile.model_validate(data)
        geometry = ScenarioGeometry(
            bs_position=Vec3.model_validate(spec.geometry.bs.position_m),
            n_tx=spec.geometry.bs.n_antennas,
            bs_antenna_spacing=spec.geometry.bs.spacing_m,
            ue_position=Vec3.model_validate(spec.geometry.ue.position_m),
            n_rx=spec.geometry.ue.n_antennas,
            ue_antenna_spacing=spec.geometry.ue.spacing_m,
            panels=tuple(_panel_from_spec(p) for p in spec.geometry.panels),
            carrier_frequency_hz=spec.geometry.carrier_frequency_hz,
            n_scatterers_per_link=spec.geometry.scatterers.count,
            scatter_gain_db=spec.geometry.scatterers.gain_db,
            seed=spec.geometry.seed,
        )
        return ScenarioConfig(
            geometry=geometry,
            system=SystemParams(
                p_t=spec.system.p_t_w,
                sigma_v2=spec.system.sigma_v2_w,
                bandwidth_hz=spec.system.bandwidth_hz,
            ),
            power=PowerModel(
                upsilon_bs=spec.power.upsilon_bs,
                p_c_bs=spec.power.p_c_bs_w,
                upsilon_lna=spec.power.upsilon_lna,
                p_ps=spec.power.p_ps_w,
                p_s_aris=spec.power.p_s_aris_w,
            ),
            grids={
                pid: AngleGrid.from_degrees(g.alpha0_deg, g.beta0_deg, g.m, g.n, g.m_res, g.n_res)
                for pid, g in spec.grids.items()
            },
            noise_objective_std=spec.objective.noise_std,
            objective_metric=spec.objective.metric,
            rank_tau=spec.analysis.rank_tau,
            icdf_level=spec.analysis.icdf_level,
            description=spec.description,
        )
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid scenario: {details}") from e


def scenario_to_dict(config: ScenarioConfig) -> dict[str, Any]:
    """Scenario document with every default written out explicitly."""
    g = config.geometry
    return {
        "description": config.description,
        "geometry": {
            "bs": {"position_m": g.bs_position.model_dump(), "n_antennas": g.n_tx,
                   "spacing_m": g.bs_antenna_spacing},
            "ue": {"position_m": g.ue_position.model_dump(), "n_antennas": g.n_rx,
                   "spacing_m": g.ue_antenna_spacing},
            "panels": [
                {
                    "id": p.id,
                    "center_m": p.center.model_dump(),
                    "normal": p.normal.model_dump(),
                    "rows": p.rows,
                    "cols": p.cols,
                    "spacing_m": p.spacing,
                    "lna_gain_db": p.lna_gain_db,
                    "phase_bits": p.phase_bits,
                    "element_noise_power_w": p.element_noise_power,
                    "elements_m": None if p.elements is None else [e.model_dump() for e in p.elements],
                }
                for p in g.panels
            ],
            "carrier_frequency_hz": g.carrier_frequency_hz,
            "scatterers": {"count": g.n_scatterers_per_link, "gain_db": g.scatter_gain_db},
            "seed": g.seed,
        },
        "system": {"p_t_w": config.system.p_t, "sigma_v2_w": config.system.sigma_v2,
                   "bandwidth_hz": config.system.bandwidth_hz},
        "power": {"upsilon_bs": config.power.upsilon_bs, "p_c_bs_w": config.power.p_c_bs,
                  "upsilon_lna": config.power.upsilon_lna, "p_ps_w": config.power.p_ps,
                  "p_s_aris_w": config.power.p_s_aris},
        "grids": {
            pid: {"alpha0_deg": math.degrees(grid.alpha0), "beta0_deg": math.degrees(grid.beta0),
                  "m": grid.m_steps, "n": grid.n_steps,
                  "m_res": grid.m_resolution, "n_res": grid.n_resolution}
            for pid, grid in config.grids.items()
        },
        "objective": {"noise_std": config.noise_objective_std, "metric": config.objective_metric},
        "analysis": {"rank_tau": config.rank_tau, "icdf_level": config.icdf_level},
    }


def canonical_bytes(data: Any) -> bytes:
    """Key-sorted, whitespace-free JSON; equal documents give equal bytes."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def sha256_hex(data: Any) -> str:
    return hashlib.sha256(canonical_bytes(data)).hexdigest()


def scenario_hash(config: ScenarioConfig) -> str:
    return sha256_hex(scenario_to_dict(config))


def content_hash(model: BaseModel) -> str:
    return sha256_hex(model.model_dump(mode="json"))


def load_scenario(path: PathLike) -> ScenarioConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    config = scenario_from_dict(data)
    logger.info("Loaded scenario %s (%d panels)", path, len(config.geometry.panels))
    return config


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scenario(config: ScenarioConfig, path: PathLike) -> None:
    _atomic_write(Path(path), json.dumps(scenario_to_dict(config), indent=2, sort_keys=True) + "\n")


class RunRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scenario_hash: str
    algorithm: str
    seed: Optional[int] = None
    result: OptResult
    metrics: MetricsReport
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    tool_version: str = __version__


def save_run(record: RunRecord, path: PathLike) -> None:
    """Write ``record`` with a checksum, atomically (temp file then rename)."""
    body = record.model_dump(mode="json")
    document = {"record": body, "checksum": sha256_hex(body)}
    _atomic_write(Path(path), json.dumps(document, indent=2, sort_keys=True) + "\n")


def load_run(path: PathLike) -> RunRecord:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
        body = document["record"]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ConfigurationError(f"{path}: not a run record ({e})") from e
    if document.get("checksum") != sha256_hex(body):
        logger.warning("Integrity check failed for run record %s: contents do not match checksum", path)
    try:
        record = RunRecord.model_validate(body)
    except ValidationError as e:
        raise ConfigurationError(f"{path}: invalid run record ({e})") from e
    if record.tool_version != __version__:
        logger.warning("Run record %s was written by version %s, this is %s",
                       path, record.tool_version, __version__)
    return record

"""
Black-box phase-configuration search for multi-RIS links.

All algorithms talk to the link through an ObjectiveContext that maps one
PhaseConfig per panel to a scalar (channel capacity unless configured
otherwise) and counts evaluations. Panels are optimized one at a time in
``panel_order``; every stage holds the other panels at their incumbents.

Evaluation accounting per panel: codebook T_l, RMS T, SCSM T + 1, BG T.
Traces record the best value seen so far after every evaluation.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import IO, Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from codebook import Codebook
from errors import ConfigurationError, SearchSpaceError
from geometry_channel import (
    ChannelSet,
    PhaseConfig,
    RisPanel,
    effective_channel,
    inverse_sqrt,
    noise_covariance,
)
from metrics import (
    RANK_TAU,
    MetricsReport,
    PowerModel,
    SystemParams,
    capacity,
    evaluate_report,
    received_snr_db,
    total_power,
)

logger = logging.getLogger(__name__)

MAX_SEQUENTIAL_SPACE = 4096
MAX_JOINT_SPACE = 65536
ALGORITHMS = ("codebook", "rms", "scsm", "bg", "exhaustive_sequential", "exhaustive_joint")
OBJECTIVE_METRICS = {"capacity": capacity, "snr": received_snr_db}

Objective = Callable[[Sequence[PhaseConfig]], float]


class ObjectiveContext:
    """Counting wrapper around a black-box objective."""

    def __init__(self, evaluate: Objective, deterministic: bool = True):
        self._evaluate = evaluate
        self.deterministic = deterministic
        self.eval_count = 0
        self._lock = threading.Lock()

    def evaluate(self, configs: Sequence[PhaseConfig]) -> float:
        value = float(self._evaluate(list(configs)))
        with self._lock:
            self.eval_count += 1
        return value


class Budget(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_per_panel: int = Field(ge=1)


class OptResult(BaseModel):
    """
    Outcome of one search.

    ``best_value`` is the best objective value observed; ``final_value`` is
    the value of the last evaluation, which for SCSM is the committed
    configuration rather than the best sample.
    """
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    configs: tuple[PhaseConfig, ...]
    best_value: float
    final_value: float
    trace: tuple[tuple[int, float], ...]
    algorithm: str
    seed: Optional[int] = None

    @model_validator(mode="after")
    def validate_trace(self) -> "OptResult":
        values = [v for _, v in self.trace]
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("Trace must be nondecreasing")
        if values and values[-1] != self.best_value:
            raise ValueError("best_value must equal the last trace value")
        return self

    @property
    def evaluations(self) -> int:
        return len(self.trace)


class LinkEvaluator:
    """
    Whitened-channel evaluation for one channel realization.

    R_n does not depend on the phase configuration, so R_n^(-1/2) is
    computed once and reused for every candidate.
    """

    def __init__(self, channels: ChannelSet, panels: Sequence[RisPanel], system: SystemParams):
        self.channels = channels
        self.panels = tuple(panels)
        self.system = system
        self.r_n = noise_covariance(channels, self.panels, system.sigma_v2)
        self._w = inverse_sqrt(self.r_n)

    def channel(self, configs: Sequence[PhaseConfig]) -> np.ndarray:
        return effective_channel(self.channels, self.panels, configs, self.system.p_t)

    def whitened(self, configs: Sequence[PhaseConfig]) -> np.ndarray:
        return self._w @ self.channel(configs)

    def capacity(self, configs: Sequence[PhaseConfig]) -> float:
        return capacity(self.whitened(configs))

    def report(self, configs: Sequence[PhaseConfig], power: PowerModel, tau: float = RANK_TAU) -> MetricsReport:
        p_c = total_power(power, self.system, self.panels, self.channels.f_list, configs, self.channels.n_tx)
        return evaluate_report(self.whitened(configs), p_c, self.system, tau)


def build_objective(
    evaluator: LinkEvaluator,
    metric: str = "capacity",
    noise_std: float = 0.0,
    seed: Optional[int] = None,
) -> ObjectiveContext:
    """Objective on the whitened channel, optionally with Gaussian measurement noise."""
    if metric not in OBJECTIVE_METRICS:
        raise ConfigurationError(f"Unknown objective metric '{metric}'; choose from {sorted(OBJECTIVE_METRICS)}")
    if noise_std < 0:
        raise ConfigurationError("Objective noise standard deviation must be non-negative")
    fn = OBJECTIVE_METRICS[metric]
    if noise_std == 0:
        return ObjectiveContext(lambda configs: fn(evaluator.whitened(configs)), deterministic=True)

    rng = np.random.default_rng(seed)

    def noisy(configs: Sequence[PhaseConfig]) -> float:
        return fn(evaluator.whitened(configs)) + noise_std * rng.standard_normal()

    return ObjectiveContext(noisy, deterministic=False)


class _Search:
    """Incumbent configs plus the running-best trace of one optimizer run."""

    def __init__(self, obj: ObjectiveContext, panels: Sequence[RisPanel], configs: Sequence[PhaseConfig]):
        if not panels:
            raise ConfigurationError("At least one RIS panel is required")
        self.obj = obj
        self.panels = list(panels)
        self.configs = list(configs)
        self.best = -math.inf
        self.last = -math.inf
        self.trace: list[tuple[int, float]] = []

    def _record(self, value: float) -> None:
        self.best = max(self.best, value)
        self.last = value
        self.trace.append((len(self.trace) + 1, self.best))

    def candidate(self, pos: int, config: PhaseConfig) -> list[PhaseConfig]:
        configs = list(self.configs)
        configs[pos] = config
        return configs

    def evaluate(self, pos: int, config: PhaseConfig) -> float:
        value = self.obj.evaluate(self.candidate(pos, config))
        self._record(value)
        return value

    def evaluate_all(self, pos: int, configs: Sequence[PhaseConfig], workers: int = 1) -> list[float]:
        """Evaluate candidates for one panel; parallel only for deterministic objectives."""
        if workers > 1 and self.obj.deterministic and len(configs) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                values = list(pool.map(self.obj.evaluate, [self.candidate(pos, c) for c in configs]))
            for v in values:
                self._record(v)
            return values
        return [self.evaluate(pos, c) for c in configs]

    def result(self, algorithm: str, seed: Optional[int]) -> OptResult:
        return OptResult(
            configs=tuple(self.configs),
            best_value=self.best,
            final_value=self.last,
            trace=tuple(self.trace),
            algorithm=algorithm,
            seed=seed,
        )


def _order(panels: Sequence[RisPanel], panel_order: Optional[Sequence[str]]) -> list[int]:
    ids = [p.id for p in panels]
    if panel_order is None:
        return list(range(len(panels)))
    if sorted(panel_order) != sorted(ids):
        raise ConfigurationError(f"panel_order {list(panel_order)} is not a permutation of {ids}")
    return [ids.index(pid) for pid in panel_order]


def _first_argmax(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


def draw_configs(rng: np.random.Generator, panel: RisPanel, count: int) -> np.ndarray:
    """``count`` uniform random index vectors for ``panel``, shape (count, K)."""
    return rng.integers(0, panel.levels, size=(count, panel.n_elements))


def codebook_sequential(
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    codebooks: Sequence[Codebook],
    panel_order: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> OptResult:
    """Per panel, keep the codebook entry with the highest objective (first best on ties)."""
    by_id = {cb.panel_id: cb for cb in codebooks}
    for p in panels:
        if p.id not in by_id:
            raise ConfigurationError(f"No codebook for panel '{p.id}'")
        if len(by_id[p.id]) == 0:
            raise ConfigurationError(f"Codebook for panel '{p.id}' is empty")
    search = _Search(obj, panels, [by_id[p.id].entries[0].config for p in panels])
    for pos in _order(panels, panel_order):
        candidates = by_id[panels[pos].id].configs()
        values = search.evaluate_all(pos, candidates, workers)
        best = _first_argmax(values)
        search.configs[pos] = candidates[best]
        logger.info("codebook: panel '%s' entry %d of %d, value %.6g",
                    panels[pos].id, best, len(candidates), values[best])
    return search.result("codebook", None)


def _random_stage(search: _Search, pos: int, rng: np.random.Generator, count: int) -> float:
    """Draw ``count`` random configs for one panel; keep the best if it beats the incumbent."""
    panel = search.panels[pos]
    incumbent_value = search.best
    for sample in draw_configs(rng, panel, count):
        config = PhaseConfig.from_array(panel, sample)
        value = search.evaluate(pos, config)
        if value > incumbent_value:
            incumbent_value = value
            search.configs[pos] = config
    return incumbent_value


def rms(
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    budget: Budget,
    rng_seed: Optional[int] = None,
    panel_order: Optional[Sequence[str]] = None,
) -> OptResult:
    """Random maximum sampling: best of T uniform random configs per panel."""
    rng = np.random.default_rng(rng_seed)
    search = _Search(obj, panels, [PhaseConfig.zeros(p) for p in panels])
    for pos in _order(panels, panel_order):
        value = _random_stage(search, pos, rng, budget.t_per_panel)
        logger.info("rms: panel '%s' best %.6g after %d samples", panels[pos].id, value, budget.t_per_panel)
    return search.result("rms", rng_seed)


def scsm(
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    budget: Budget,
    rng_seed: Optional[int] = None,
    panel_order: Optional[Sequence[str]] = None,
) -> OptResult:
    """
    Sequential conditional sample mean.

    Per panel, T random configs are scored; each element then takes the
    phase level whose conditional mean score is highest (levels never
    sampled for that element are skipped). The resulting config is
    committed and evaluated once.
    """
    rng = np.random.default_rng(rng_seed)
    t = budget.t_per_panel
    search = _Search(obj, panels, [PhaseConfig.zeros(p) for p in panels])
    for pos in _order(panels, panel_order):
        panel = panels[pos]
        if t < panel.levels:
            logger.warning("scsm: T=%d is below the %d phase levels of panel '%s'", t, panel.levels, panel.id)
        samples = draw_configs(rng, panel, t)
        values = np.array([search.evaluate(pos, PhaseConfig.from_array(panel, s)) for s in samples])
        chosen = np.zeros(panel.n_elements, dtype=int)
        for k in range(panel.n_elements):
            best_mean = -math.inf
            for level in range(panel.levels):
                mask = samples[:, k] == level
                if not mask.any():
                    continue
                mean = float(values[mask].mean())
                if mean > best_mean:
                    best_mean = mean
                    chosen[k] = level
        search.configs[pos] = PhaseConfig.from_array(panel, chosen)
        value = search.evaluate(pos, search.configs[pos])
        logger.info("scsm: panel '%s' committed value %.6g", panel.id, value)
    return search.result("scsm", rng_seed)


def greedy_split(panel: RisPanel, t: int) -> tuple[int, int]:
    """(random, greedy) evaluation counts of blind greedy for one panel."""
    t_greedy = (panel.levels - 1) * panel.n_elements
    if t <= t_greedy:
        return t, 0
    return t - t_greedy, t_greedy


def blind_greedy(
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    budget: Budget,
    rng_seed: Optional[int] = None,
    panel_order: Optional[Sequence[str]] = None,
) -> OptResult:
    """
    Best-of-random start followed by one pass of per-element refinement.

    When T <= (2^B - 1) K only the random stage runs, making the panel
    stage identical to RMS.
    """
    rng = np.random.default_rng(rng_seed)
    search = _Search(obj, panels, [PhaseConfig.zeros(p) for p in panels])
    for pos in _order(panels, panel_order):
        panel = panels[pos]
        t_random, t_greedy = greedy_split(panel, budget.t_per_panel)
        current_value = _random_stage(search, pos, rng, t_random)
        if not t_greedy:
            continue
        current = list(search.configs[pos].indices)
        for k in range(panel.n_elements):
            start_level = current[k]
            for level in range(panel.levels):
                if level == start_level:
                    continue
                trial = list(current)
                trial[k] = level
                config = PhaseConfig(panel_id=panel.id, indices=tuple(trial))
                value = search.evaluate(pos, config)
                if value > current_value:
                    current_value = value
                    current = trial
                    search.configs[pos] = config
        logger.info("bg: panel '%s' %d random + %d greedy, value %.6g",
                    panel.id, t_random, t_greedy, current_value)
    return search.result("bg", rng_seed)


def _panel_space(panel: RisPanel) -> list[PhaseConfig]:
    return [
        PhaseConfig(panel_id=panel.id, indices=combo)
        for combo in itertools.product(range(panel.levels), repeat=panel.n_elements)
    ]


def exhaustive_sequential(
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    panel_order: Optional[Sequence[str]] = None,
    initial: Optional[Sequence[PhaseConfig]] = None,
    workers: int = 1,
) -> OptResult:
    """Per panel, enumerate all 2^(BK) configs with the others held fixed."""
    for p in panels:
        if p.levels ** p.n_elements > MAX_SEQUENTIAL_SPACE:
            raise SearchSpaceError(
                f"Panel '{p.id}' has {p.levels ** p.n_elements} configs (limit {MAX_SEQUENTIAL_SPACE})"
            )
    start = list(initial) if initial is not None else [PhaseConfig.zeros(p) for p in panels]
    search = _Search(obj, panels, start)
    for pos in _order(panels, panel_order):
        candidates = _panel_space(panels[pos])
        values = search.evaluate_all(pos, candidates, workers)
        search.configs[pos] = candidates[_first_argmax(values)]
    return search.result("exhaustive_sequential", None)


def exhaustive_joint(obj: ObjectiveContext, panels: Sequence[RisPanel], workers: int = 1) -> OptResult:
    """Global argmax over the product of all panel spaces."""
    size = math.prod(p.levels ** p.n_elements for p in panels)
    if size > MAX_JOINT_SPACE:
        raise SearchSpaceError(f"Joint space has {size} configs (limit {MAX_JOINT_SPACE})")
    search = _Search(obj, panels, [PhaseConfig.zeros(p) for p in panels])
    combos = [list(c) for c in itertools.product(*(_panel_space(p) for p in panels))]
    if workers > 1 and obj.deterministic:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(obj.evaluate, combos))
        for v in values:
            search._record(v)
    else:
        values = []
        for combo in combos:
            values.append(obj.evaluate(combo))
            search._record(values[-1])
    search.configs = combos[_first_argmax(values)]
    return search.result("exhaustive_joint", None)


def run_algorithm(
    name: str,
    obj: ObjectiveContext,
    panels: Sequence[RisPanel],
    *,
    codebooks: Optional[Sequence[Codebook]] = None,
    budget: Optional[Budget] = None,
    seed: Optional[int] = None,
    panel_order: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> OptResult:
    """Dispatch by algorithm name (see ALGORITHMS)."""
    if name == "codebook":
        if codebooks is None:
            raise ConfigurationError("The codebook algorithm needs codebooks")
        return codebook_sequential(obj, panels, codebooks, panel_order, workers)
    if name in ("rms", "scsm", "bg"):
        if budget is None:
            raise ConfigurationError(f"Algorithm '{name}' needs a budget")
        fn = {"rms": rms, "scsm": scsm, "bg": blind_greedy}[name]
        return fn(obj, panels, budget, seed, panel_order)
    if name == "exhaustive_sequential":
        return exhaustive_sequential(obj, panels, panel_order, workers=workers)
    if name == "exhaustive_joint":
        return exhaustive_joint(obj, panels, workers)
    raise ConfigurationError(f"Unknown algorithm '{name}'; choose from {', '.join(ALGORITHMS)}")


def expected_evaluations(name: str, panels: Sequence[RisPanel], t: int) -> int:
    """Documented evaluation count of ``name`` with T samples per panel."""
    per_panel = {"rms": t, "bg": t, "codebook": t, "scsm": t + 1}
    if name not in per_panel:
        raise ConfigurationError(f"No fixed evaluation count for '{name}'")
    return len(panels) * per_panel[name]


def write_trace_csv(result: OptResult, out: Union[str, IO[str]]) -> None:
    """Columns: eval_index, best_value."""
    if isinstance(out, str):
        with open(out, "w", newline="") as f:
            write_trace_csv(result, f)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["eval_index", "best_value"])
    for idx, value in result.trace:
        writer.writerow([idx, repr(value)])

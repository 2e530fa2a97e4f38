"""Benchmark scenario construction.

Two biomedical benchmarks are built from published parameters: a four-genotype
viral mutation model under two alternating drug regimens (continuous-time rates
discretized by matrix exponential over the treatment interval) and a two-state
cancer cell-population model under three drugs with per-drug dwell bounds.
A `Scenario` bundles the switched system with its initial state, horizons, and
default controller configuration, and round-trips through a JSON schema so the
built-in benchmarks can be exported, perturbed, and re-imported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .controller import CostSpec, MpcConfig
from .geometry import Polytope, PolytopeUnion, as_union
from .switched import SwitchedSystem, UNBOUNDED_DWELL

__all__ = [
    "ViralScenario",
    "CancerScenario",
    "Scenario",
    "build_viral_system",
    "build_cancer_system",
    "build_illustrative_system",
    "total_load",
    "builtin_names",
    "builtin_scenario",
    "load_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
]

MUTATION_RATE = 1e-4
CLEARANCE_RATE = 0.24  # per day
SAMPLING_DAYS = 28.0
TREATMENT_DAYS = 336.0
DETECTION_LIMIT = 50.0  # copies/ml
FAILURE_LIMIT = 1000.0  # copies/ml

# genotype connection graph: V1<->V2, V2<->V4, V4<->V3, V3<->V1
MUTATION_GRAPH = np.array(
    [
        [0.0, 1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0, 0.0],
    ]
)

# replication rates per (therapy, genotype); scenario 1 chronic, scenario 2 acute
VIRAL_RATES: dict[int, tuple[tuple[float, float, float, float], ...]] = {
    1: ((0.05, 0.28, 0.01, 0.27), (0.05, 0.20, 0.25, 0.27)),
    2: ((0.05, 0.40, 0.05, 0.23), (0.05, 0.05, 0.40, 0.23)),
}

CANCER_MATRICES = {
    "P": np.array([[0.755, 0.081], [0.169, 0.843]]),
    "B": np.array([[0.896, 0.0], [0.186, 1.083]]),
    "T": np.array([[1.030, 0.231], [0.022, 0.821]]),
}
CANCER_DRUGS = ("P", "B", "T")  # signals 1, 2, 3
CANCER_WAITING = ((2, 4), (2, 8), (2, 6))
CANCER_X0 = np.array([220.0, 612.0])
CANCER_STEP_HOURS = 12.0

# run-length penalty presets for the relaxed-dwell cancer studies, in (P, B, T) order
CANCER_CASE_WEIGHTS = {
    1: (1.0, 1.0, 1.0),
    2: (2.0, 1.0, 1.0),
    3: (20.0, 1.0, 2.0),
}


@dataclass(frozen=True)
class ViralScenario:
    """Parameters of the viral mutation benchmark."""

    scenario_id: int
    mu: float
    delta: float
    M: np.ndarray
    rates: tuple[tuple[float, float, float, float], ...]
    tau: float
    T: float
    x0: np.ndarray
    detect_limit: float = DETECTION_LIMIT
    failure_limit: float = FAILURE_LIMIT

    @property
    def decision_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass(frozen=True)
class CancerScenario:
    """Parameters of the cancer drug-scheduling benchmark."""

    drugs: tuple[str, ...]
    matrices: tuple[np.ndarray, ...]
    x0: np.ndarray
    waiting: tuple[tuple[int, int], ...]
    step_hours: float = CANCER_STEP_HOURS

    def signal(self, drug: str) -> int:
        return self.drugs.index(drug) + 1


def total_load(x: Sequence[float]) -> float:
    """Coordinate sum of a state (total viral copies / total live cells)."""
    s = 0.0
    for v in x:
        s += float(v)
    return s


def _undetectable_set(n: int, limit: float = DETECTION_LIMIT) -> Polytope:
    """{x >= 0 : sum x_i <= limit}."""
    H = np.vstack([np.ones((1, n)), -np.eye(n)])
    h = np.concatenate([[limit], np.zeros(n)])
    return Polytope(H, h)


def _low_load_halfspace(n: int, limit: float = DETECTION_LIMIT) -> Polytope:
    """{x : sum x_i <= limit}: on the orthant this is the undetectable region,
    and its distance is linear in the total load, so stage costs rank predicted
    states by total burden rather than by the dominant coordinate."""
    return Polytope(np.ones((1, n)), np.array([limit]))


def build_viral_system(scenario_id: int) -> tuple[SwitchedSystem, ViralScenario]:
    """Discretize the mutation dynamics for the chronic (1) or acute (2) scenario."""
    if scenario_id not in VIRAL_RATES:
        raise ValueError(f"unknown viral scenario {scenario_id!r}; choose 1 or 2")
    rates = VIRAL_RATES[scenario_id]
    mats = []
    for therapy_rates in rates:
        generator = (
            np.diag(therapy_rates)
            - CLEARANCE_RATE * np.eye(4)
            + MUTATION_RATE * MUTATION_GRAPH
        ) * SAMPLING_DAYS
        mats.append(expm(generator))
    v1 = 1000.0
    x0 = np.array(
        [
            v1,
            MUTATION_RATE * v1,
            MUTATION_RATE * v1,
            MUTATION_RATE * (MUTATION_RATE * v1) + MUTATION_RATE * (MUTATION_RATE * v1),
        ]
    )
    sys_ = SwitchedSystem(
        matrices=tuple(mats),
        state_set=Polytope.nonnegative_orthant(4),
        waiting=((1, UNBOUNDED_DWELL), (1, UNBOUNDED_DWELL)),
    )
    scen = ViralScenario(
        scenario_id=scenario_id,
        mu=MUTATION_RATE,
        delta=CLEARANCE_RATE,
        M=MUTATION_GRAPH,
        rates=rates,
        tau=SAMPLING_DAYS,
        T=TREATMENT_DAYS,
        x0=x0,
    )
    return sys_, scen


def build_cancer_system() -> tuple[SwitchedSystem, CancerScenario]:
    """The three-drug cancer cell-population model with its dwell bounds."""
    mats = tuple(CANCER_MATRICES[d] for d in CANCER_DRUGS)
    sys_ = SwitchedSystem(
        matrices=mats,
        state_set=Polytope.nonnegative_orthant(2),
        waiting=CANCER_WAITING,
    )
    scen = CancerScenario(
        drugs=CANCER_DRUGS,
        matrices=mats,
        x0=CANCER_X0.copy(),
        waiting=CANCER_WAITING,
    )
    return sys_, scen


def _rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def build_illustrative_system() -> SwitchedSystem:
    """Four non-Schur planar subsystems whose combinations are stabilizing."""
    A1 = np.array([[1.5, 0.0], [0.0, -0.8]])
    A2 = 1.1 * _rotation(2.0 * np.pi / 5.0)
    A3 = 1.05 * _rotation(2.0 * np.pi / 5.0 - 1.0)
    A4 = np.array([[-1.2, 0.0], [1.0, 1.3]])
    return SwitchedSystem(
        matrices=(A1, A2, A3, A4),
        state_set=Polytope.box([-10.0, -10.0], [10.0, 10.0]),
    )


@dataclass(frozen=True)
class Scenario:
    """A named, fully parameterized benchmark run."""

    name: str
    kind: str  # "viral" | "cancer" | "custom"
    sys: SwitchedSystem
    x0: np.ndarray
    tau_days: float
    horizon_steps: int
    mpc: MpcConfig
    analysis_target: PolytopeUnion | None = None
    detect_limit: float | None = None
    failure_limit: float | None = None
    swatch_period: int = 3

    @property
    def time_unit(self) -> str:
        return "hours" if self.kind == "cancer" else "days"

    def time_of_step(self, k: int) -> float:
        if self.kind == "cancer":
            return k * self.tau_days * 24.0
        return k * self.tau_days

    def geometry_target(self) -> PolytopeUnion:
        if self.analysis_target is not None:
            return self.analysis_target
        return self.mpc.target


def _viral_scenario(scenario_id: int) -> Scenario:
    sys_, scen = build_viral_system(scenario_id)
    # stage costs proportional to the total load itself (limit 0): a positive
    # detection threshold would zero out every in-window distance right after
    # the first interval and leave the optimizer blind to compounding strains
    target = _low_load_halfspace(4, 0.0)
    mpc = MpcConfig(
        sys=sys_,
        horizon=5,
        target=as_union(target),
        cost=CostSpec.uniform(2),
        enforce_waiting=False,
        enforce_terminal=False,
    )
    return Scenario(
        name=f"viral-{scenario_id}",
        kind="viral",
        sys=sys_,
        x0=scen.x0,
        tau_days=scen.tau,
        horizon_steps=scen.decision_steps,
        mpc=mpc,
        analysis_target=as_union(Polytope.box([-scen.detect_limit] * 4, [scen.detect_limit] * 4)),
        detect_limit=scen.detect_limit,
        failure_limit=scen.failure_limit,
    )


def _cancer_scenario(case: int | None = None) -> Scenario:
    sys_, scen = build_cancer_system()
    target = _low_load_halfspace(2, 0.0)
    if case is None:
        mpc = MpcConfig(
            sys=sys_,
            horizon=8,
            target=as_union(target),
            cost=CostSpec.uniform(3),
            enforce_waiting=True,
            enforce_terminal=False,
            cycle_through_all=True,
        )
        name = "cancer"
    else:
        if case not in CANCER_CASE_WEIGHTS:
            raise ValueError(f"unknown cancer case {case!r}; choose 1, 2 or 3")
        # relaxed-dwell study: upper bounds dropped, run lengths priced instead
        relaxed = SwitchedSystem(
            matrices=sys_.matrices,
            state_set=sys_.state_set,
            waiting=tuple((lo, UNBOUNDED_DWELL) for lo, _ in sys_.waiting),
        )
        sys_ = relaxed
        mpc = MpcConfig(
            sys=sys_,
            horizon=8,
            target=as_union(target),
            cost=CostSpec.uniform(3, consecutive=CANCER_CASE_WEIGHTS[case]),
            enforce_waiting=True,
            enforce_terminal=False,
            cycle_through_all=False,
        )
        name = f"cancer-case{case}"
    return Scenario(
        name=name,
        kind="cancer",
        sys=sys_,
        x0=scen.x0,
        tau_days=scen.step_hours / 24.0,
        horizon_steps=72,
        mpc=mpc,
        analysis_target=as_union(Polytope.box([-DETECTION_LIMIT] * 2, [DETECTION_LIMIT] * 2)),
    )


def _illustrative_scenario() -> Scenario:
    sys_ = build_illustrative_system()
    target = Polytope.origin(2)
    mpc = MpcConfig(
        sys=sys_,
        horizon=15,
        target=as_union(target),
        cost=CostSpec.uniform(4),
        enforce_waiting=False,
        # the origin is unreachable exactly in finite steps under nonsingular
        # dynamics, so the distance cost does the steering
        enforce_terminal=False,
    )
    return Scenario(
        name="illustrative",
        kind="custom",
        sys=sys_,
        x0=np.array([-0.5, 0.5]),
        tau_days=1.0,
        horizon_steps=30,
        mpc=mpc,
        analysis_target=as_union(Polytope.box([-0.1, -0.1], [0.1, 0.1])),
    )


_BUILTINS = {
    "viral-1": lambda: _viral_scenario(1),
    "viral-2": lambda: _viral_scenario(2),
    "cancer": lambda: _cancer_scenario(),
    "illustrative": lambda: _illustrative_scenario(),
}


def builtin_names() -> tuple[str, ...]:
    return tuple(_BUILTINS)


def builtin_scenario(name: str, case: int | None = None) -> Scenario:
    if name == "cancer" and case is not None:
        return _cancer_scenario(case)
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; built-ins are {', '.join(_BUILTINS)}"
        ) from None


# -- JSON schema ---------------------------------------------------------------


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize to the interchange schema (kind, matrices, waiting, x0, tau_days,
    horizon_steps, cost, target), plus controller flags needed to re-run it."""
    sys_ = scenario.sys
    cost = scenario.mpc.cost
    target_parts = scenario.mpc.target.parts
    data = {
        "kind": scenario.kind,
        "name": scenario.name,
        "matrices": [np.asarray(M).tolist() for M in sys_.matrices],
        "waiting": [[lo, up] for lo, up in sys_.waiting],
        "x0": np.asarray(scenario.x0).tolist(),
        "tau_days": scenario.tau_days,
        "horizon_steps": scenario.horizon_steps,
        "cost": {
            "stage": list(cost.stage_weights),
            "terminal": cost.terminal_weight,
            "consecutive": list(cost.consecutive_weights),
        },
        "target": target_parts[0].to_dict()
        if len(target_parts) == 1
        else {"parts": [p.to_dict() for p in target_parts]},
        "state_set": sys_.state_set.to_dict(),
        "mpc_horizon": scenario.mpc.horizon,
        "enforce_waiting": scenario.mpc.enforce_waiting,
        "enforce_terminal": scenario.mpc.enforce_terminal,
        "cycle_through_all": scenario.mpc.cycle_through_all,
    }
    return data


def _target_from_dict(data: dict) -> PolytopeUnion:
    if "parts" in data:
        return PolytopeUnion.from_dict(data)
    return as_union(Polytope.from_dict(data))


def scenario_from_dict(data: dict, name: str | None = None) -> Scenario:
    matrices = tuple(np.asarray(M, dtype=float) for M in data["matrices"])
    n = matrices[0].shape[0]
    if "state_set" in data:
        state_set = Polytope.from_dict(data["state_set"])
    else:
        state_set = Polytope.nonnegative_orthant(n)
    waiting = tuple((int(lo), int(up)) for lo, up in data.get("waiting", []))
    sys_ = SwitchedSystem(matrices=matrices, state_set=state_set, waiting=waiting)
    target = _target_from_dict(data["target"])
    cost_data = data.get("cost", {})
    cost = CostSpec(
        stage_weights=tuple(cost_data.get("stage", [1.0] * sys_.q)),
        terminal_weight=float(cost_data.get("terminal", 1.0)),
        consecutive_weights=tuple(cost_data.get("consecutive", [])),
    )
    mpc = MpcConfig(
        sys=sys_,
        horizon=int(data.get("mpc_horizon", 5)),
        target=target,
        cost=cost,
        enforce_waiting=bool(data.get("enforce_waiting", True)),
        enforce_terminal=bool(data.get("enforce_terminal", False)),
        cycle_through_all=bool(data.get("cycle_through_all", False)),
    )
    return Scenario(
        name=name or data.get("name", "custom"),
        kind=data.get("kind", "custom"),
        sys=sys_,
        x0=np.asarray(data["x0"], dtype=float),
        tau_days=float(data.get("tau_days", 1.0)),
        horizon_steps=int(data["horizon_steps"]),
        mpc=mpc,
    )


def load_scenario(source: str, case: int | None = None) -> Scenario:
    """A built-in name or a path to a scenario JSON file."""
    if source in _BUILTINS or (source == "cancer" and case is not None):
        return builtin_scenario(source, case=case)
    path = Path(source)
    if not path.exists():
        raise ValueError(
            f"scenario {source!r} is neither a built-in ({', '.join(_BUILTINS)}) "
            "nor an existing JSON file"
        )
    with path.open() as fh:
        data = json.load(fh)
    return scenario_from_dict(data, name=path.stem)

"""Set-based switching MPC.

The horizon-N optimal control problem selects one subsystem per step to
minimize a sum of weighted set-distances (plus an optional penalty on the
squared length of constant-signal runs), subject to state constraints, an
optional terminal-set constraint, and dwell-time bounds that span the seam
between already-applied signals and the prediction window.

The optimizer is an exact depth-first branch-and-bound over the q-ary
sequence tree.  Partial costs are accumulated in one canonical left-to-right
order (shared with `eval_cost`) so that the returned optimum is bit-identical
to exhaustive enumeration, with ties broken toward the lexicographically
smallest signal sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import Polytope, PolytopeUnion, as_union, _project_onto_polytope
from .switched import (
    SwitchedSystem,
    SwitchingPath,
    _matvec,
    packs,
)

__all__ = [
    "CostSpec",
    "OcpProblem",
    "OcpSolution",
    "MpcConfig",
    "ControllerState",
    "ClosedLoopRecord",
    "InfeasibleProblemError",
    "eval_cost",
    "solve_ocp",
    "rhc_step",
    "run_closed_loop",
    "initial_state",
]

TERMINAL_TOL = 1e-9
STATE_TOL = 1e-9


class InfeasibleProblemError(RuntimeError):
    """No admissible signal sequence exists.

    `reason` is "terminal" when sequences satisfied every other constraint but
    none ended inside the target set, "waiting" when dwell-time bounds cut off
    the tree, and "state" when the state constraint did.  `step` carries the
    closed-loop step index when raised from a receding-horizon run.
    """

    def __init__(self, message: str, reason: str, step: int | None = None):
        super().__init__(message)
        self.reason = reason
        self.step = step


@dataclass(frozen=True)
class CostSpec:
    """Stage weights c_sigma, terminal weight, and per-signal run-length penalties."""

    stage_weights: tuple[float, ...]
    terminal_weight: float = 1.0
    consecutive_weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        cs = tuple(float(v) for v in self.stage_weights)
        if not cs or any(v <= 0 for v in cs):
            raise ValueError("stage weights must be positive")
        if self.terminal_weight <= 0:
            raise ValueError("terminal weight must be positive")
        bs = tuple(float(v) for v in self.consecutive_weights)
        if not bs:
            bs = tuple(0.0 for _ in cs)
        if len(bs) != len(cs):
            raise ValueError("need one consecutive weight per signal")
        if any(v < 0 for v in bs):
            raise ValueError("consecutive weights must be nonnegative")
        object.__setattr__(self, "stage_weights", cs)
        object.__setattr__(self, "terminal_weight", float(self.terminal_weight))
        object.__setattr__(self, "consecutive_weights", bs)

    @classmethod
    def uniform(cls, q: int, consecutive: Sequence[float] | None = None) -> "CostSpec":
        return cls(
            stage_weights=tuple(1.0 for _ in range(q)),
            terminal_weight=1.0,
            consecutive_weights=tuple(consecutive) if consecutive is not None else (),
        )


@dataclass(frozen=True)
class OcpProblem:
    """One horizon-N instance: current state, memory of applied signals, constraints."""

    sys: SwitchedSystem
    x: tuple[float, ...]
    horizon: int
    target: PolytopeUnion
    cost: CostSpec
    memory: SwitchingPath = SwitchingPath()
    enforce_waiting: bool = True
    enforce_terminal: bool = True
    consecutive_includes_memory: bool = True
    cycle_through_all: bool = False
    cycle_used: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "target", as_union(self.target))
        if len(self.x) != self.sys.n:
            raise ValueError(f"state must have dimension {self.sys.n}")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.cost.stage_weights) != self.sys.q:
            raise ValueError("cost needs one stage weight per subsystem")
        umax = max(u for _, u in self.sys.waiting)
        if len(self.memory) > umax:
            raise ValueError("memory may hold at most max_sigma U_sigma signals")
        if any(not 1 <= s <= self.sys.q for s in self.cycle_used):
            raise ValueError("cycle_used must contain signal indices in range")


@dataclass(frozen=True)
class OcpSolution:
    path: SwitchingPath
    trajectory: np.ndarray  # (N+1, n)
    cost: float
    nodes_explored: int = 0
    nodes_pruned: int = 0


# -- distance / membership closures -------------------------------------------


def _part_distance(P: Polytope) -> Callable[[tuple[float, ...]], float]:
    bounds = P.box_bounds
    if bounds is not None:
        lb = tuple(float(v) for v in bounds[0])
        ub = tuple(float(v) for v in bounds[1])

        def ev_box(x: tuple[float, ...]) -> float:
            s = 0.0
            for xi, lo, hi in zip(x, lb, ub):
                if xi < lo:
                    d = lo - xi
                elif xi > hi:
                    d = xi - hi
                else:
                    continue
                s += d * d
            return math.sqrt(s)

        return ev_box

    rows = tuple(tuple(float(v) for v in r) for r in P.H)
    rhs = tuple(float(v) for v in P.h)

    def ev_general(x: tuple[float, ...]) -> float:
        inside = True
        for row, b in zip(rows, rhs):
            s = 0.0
            for a, xi in zip(row, x):
                s += a * xi
            if s > b:
                inside = False
                break
        if inside:
            return 0.0
        p = _project_onto_polytope(P, np.asarray(x, dtype=float))
        s = 0.0
        for xi, pi in zip(x, p):
            d = xi - pi
            s += d * d
        return math.sqrt(s)

    return ev_general


def _build_distance(target: PolytopeUnion) -> Callable[[tuple[float, ...]], float]:
    parts = [_part_distance(P) for P in target.parts]
    if not parts:
        raise ValueError("target set must be nonempty")
    if len(parts) == 1:
        return parts[0]

    def ev(x: tuple[float, ...]) -> float:
        best = parts[0](x)
        for e in parts[1:]:
            if best == 0.0:
                return 0.0
            d = e(x)
            if d < best:
                best = d
        return best

    return ev


def _build_membership(
    region: Polytope | PolytopeUnion, tol: float
) -> Callable[[tuple[float, ...]], bool]:
    region = as_union(region)
    tables = [
        (
            tuple(tuple(float(v) for v in r) for r in P.H),
            tuple(float(v) + tol for v in P.h),
        )
        for P in region.parts
    ]

    def member(x: tuple[float, ...]) -> bool:
        for rows, rhs in tables:
            ok = True
            for row, b in zip(rows, rhs):
                s = 0.0
                for a, xi in zip(row, x):
                    s += a * xi
                if s > b:
                    ok = False
                    break
            if ok:
                return True
        return False

    return member


# -- canonical cost ------------------------------------------------------------


def _memory_run(memory: SwitchingPath) -> tuple[int | None, int]:
    sig = memory.signals
    if not sig:
        return None, 0
    s = sig[-1]
    n = 0
    for v in reversed(sig):
        if v != s:
            break
        n += 1
    return s, n


def _pack_lengths(
    sigs: Sequence[int], mem_sig: int | None, mem_len: int
) -> list[int]:
    """Current run length at each decided position, with the first run extended
    by the memory run it continues."""
    out: list[int] = []
    i = 0
    T = len(sigs)
    while i < T:
        j = i + 1
        while j < T and sigs[j] == sigs[i]:
            j += 1
        length = j - i
        if i == 0 and mem_sig is not None and sigs[0] == mem_sig:
            length += mem_len
        out.extend([length] * (j - i))
        i = j
    return out


def _canonical_partial(
    sigs: Sequence[int],
    dists: Sequence[float],
    c: Sequence[float],
    b: Sequence[float],
    mem_sig: int | None,
    mem_len: int,
) -> float:
    lens = _pack_lengths(sigs, mem_sig, mem_len)
    total = 0.0
    for s, d, ln in zip(sigs, dists, lens):
        fl = float(ln)
        total += c[s - 1] * d + b[s - 1] * (fl * fl)
    return total


def eval_cost(
    problem: OcpProblem, path: SwitchingPath | Sequence[int]
) -> tuple[float, np.ndarray]:
    """Cost and predicted trajectory of a candidate path (no constraints applied)."""
    sigs = path.signals if isinstance(path, SwitchingPath) else tuple(int(s) for s in path)
    N = problem.horizon
    if len(sigs) != N:
        raise ValueError(f"path length {len(sigs)} does not match horizon {N}")
    sys_ = problem.sys
    for s in sigs:
        sys_._check_signal(s)
    dist = _build_distance(problem.target)
    c = problem.cost.stage_weights
    b = problem.cost.consecutive_weights
    if problem.consecutive_includes_memory:
        mem_sig, mem_len = _memory_run(problem.memory)
    else:
        mem_sig, mem_len = None, 0

    x = problem.x
    traj = [x]
    dists = []
    for s in sigs:
        dists.append(dist(x))
        x = _matvec(sys_.rows(s), x)
        traj.append(x)
    total = _canonical_partial(sigs, dists, c, b, mem_sig, mem_len)
    total += problem.cost.terminal_weight * dist(x)
    return total, np.array(traj, dtype=float)


# -- exact solver ---------------------------------------------------------------


def _target_norm_radius(target: PolytopeUnion) -> float:
    """Upper bound on max ||y|| over the target (bounding-box corner norm)."""
    worst = 0.0
    for P in target.parts:
        lo, hi = P.coordinate_ranges
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return math.inf
        corner = np.maximum(np.abs(lo), np.abs(hi))
        worst = max(worst, float(np.linalg.norm(corner)))
    return worst


def solve_ocp(problem: OcpProblem) -> OcpSolution:
    """Exact minimizer over admissible signal sequences of length N.

    Depth-first branch-and-bound in ascending signal order; the nonnegative
    partial cost (optionally sharpened by a singular-value decay bound) is the
    pruning bound, and only strict improvements replace the incumbent, so the
    result matches exhaustive lexicographic enumeration bit for bit.
    """
    sys_ = problem.sys
    N, q = problem.horizon, sys_.q
    x0 = problem.x
    rows = [sys_.rows(s) for s in range(1, q + 1)]
    dist = _build_distance(problem.target)
    member_target = _build_membership(problem.target, TERMINAL_TOL)
    member_state = _build_membership(sys_.state_set, STATE_TOL)
    c = problem.cost.stage_weights
    b = problem.cost.consecutive_weights
    cterm = problem.cost.terminal_weight
    use_b = any(v != 0.0 for v in b)
    L = tuple(lo for lo, _ in sys_.waiting)
    U = tuple(up for _, up in sys_.waiting)
    enforce_w = problem.enforce_waiting
    cycle_on = problem.cycle_through_all
    full_mask = (1 << q) - 1

    if not member_state(x0):
        raise InfeasibleProblemError(
            "current state violates the state constraint", reason="state"
        )

    # memory digest: the trailing run straddles the prediction seam
    mem_sig, mem_len = _memory_run(problem.memory)
    if enforce_w and len(problem.memory):
        for p in packs(problem.memory):
            lo, up = sys_.waiting[p.signal - 1]
            if p.length > up:
                raise InfeasibleProblemError(
                    "memory already violates an upper waiting bound", reason="waiting"
                )
            closed = p.stop < len(problem.memory)
            # the leading pack may have been truncated by the memory window,
            # so its lower bound is not judged here
            if closed and p.start > 0 and p.length < lo:
                raise InfeasibleProblemError(
                    "memory contains a closed pack shorter than its lower bound",
                    reason="waiting",
                )
    if problem.consecutive_includes_memory:
        cost_mem_sig, cost_mem_len = mem_sig, mem_len
    else:
        cost_mem_sig, cost_mem_len = None, 0

    used0 = 0
    for s in problem.cycle_used:
        used0 |= 1 << (s - 1)
    if cycle_on and mem_sig is not None:
        used0 |= 1 << (mem_sig - 1)

    # admissible future-cost bound from minimum singular values
    rmin = min(float(np.linalg.svd(np.asarray(M, float), compute_uv=False)[-1]) for M in sys_.matrices)
    radius = _target_norm_radius(problem.target)
    cmin = min(c)
    use_future = math.isfinite(radius) and rmin > 0.0
    rpow = [1.0]
    for _ in range(N):
        rpow.append(rpow[-1] * rmin)

    def future_bound(xnorm: float, depth: int) -> float:
        # lower bound on cost-to-go from a node at `depth` with state norm xnorm
        if not use_future:
            return 0.0
        total = 0.0
        for i in range(N - depth):
            v = rpow[i] * xnorm - radius
            if v > 0.0:
                total += cmin * v
        v = rpow[N - depth] * xnorm - radius
        if v > 0.0:
            total += cterm * v
        return total * (1.0 - 1e-9)

    # with the target's norm radius at zero the bound is a plain multiple of ||x||
    fb_factor = [0.0] * (N + 1)
    if use_future and radius == 0.0:
        for depth in range(N + 1):
            acc = 0.0
            for i in range(N - depth):
                acc += cmin * rpow[i]
            acc += cterm * rpow[N - depth]
            fb_factor[depth] = acc * (1.0 - 1e-9)
    fast_bound = use_future and radius == 0.0

    stats = {"nodes": 0, "pruned": 0}
    flags = {"complete": False, "waiting": False, "state": False}
    best_cost = math.inf
    best_path: tuple[int, ...] | None = None
    threshold = math.inf

    sig_seq: list[int] = []
    d_seq: list[float] = []
    enforce_t = problem.enforce_terminal

    def step_allowed(
        s: int, run_sig: int | None, run_len: int, used: int, note_flags: bool
    ) -> tuple[bool, int, int]:
        """Dwell-time and cycle-coverage admissibility of choosing signal s next."""
        if enforce_w:
            if s == run_sig:
                if run_len + 1 > U[s - 1]:
                    if note_flags:
                        flags["waiting"] = True
                    return False, 0, used
                new_run = run_len + 1
            else:
                if run_sig is not None and run_len < L[run_sig - 1]:
                    if note_flags:
                        flags["waiting"] = True
                    return False, 0, used
                new_run = 1
        else:
            new_run = run_len + 1 if s == run_sig else 1
        new_used = used
        if cycle_on and s != run_sig:
            bit = 1 << (s - 1)
            if used == full_mask:
                new_used = bit
            elif used & bit:
                if note_flags:
                    flags["waiting"] = True
                return False, 0, used
            else:
                new_used = used | bit
        return True, new_run, new_used

    def greedy_upper_bound() -> float:
        """Cost of a one-step-lookahead rollout; inf when the rollout dead-ends."""
        x = x0
        run_sig, run_len, used = mem_sig, mem_len, used0
        seq: list[int] = []
        ds: list[float] = []
        for depth in range(N):
            d_here = dist(x)
            chosen = None
            chosen_key = math.inf
            for s in range(1, q + 1):
                ok, nr, nu = step_allowed(s, run_sig, run_len, used, note_flags=False)
                if not ok:
                    continue
                x_next = _matvec(rows[s - 1], x)
                if depth + 1 < N and not member_state(x_next):
                    continue
                key = dist(x_next)
                if key < chosen_key:
                    chosen_key = key
                    chosen = (s, nr, nu, x_next)
            if chosen is None:
                return math.inf
            s, run_len, used, x = chosen
            run_sig = s
            seq.append(s)
            ds.append(d_here)
        if enforce_t and not member_target(x):
            return math.inf
        total = _canonical_partial(seq, ds, c, b, cost_mem_sig, cost_mem_len)
        return total + cterm * dist(x)

    warm = greedy_upper_bound()
    if math.isfinite(warm):
        threshold = math.nextafter(warm, math.inf)

    def dfs(
        depth: int,
        x: tuple[float, ...],
        run_sig: int | None,
        run_len: int,
        used: int,
        partial: float,
    ) -> None:
        nonlocal best_cost, best_path, threshold
        d_here = dist(x)
        last = depth + 1 == N
        for s in range(1, q + 1):
            ok, new_run, new_used = step_allowed(s, run_sig, run_len, used, note_flags=True)
            if not ok:
                continue
            stats["nodes"] += 1
            x_next = _matvec(rows[s - 1], x)
            if not last and not member_state(x_next):
                flags["state"] = True
                continue
            sig_seq.append(s)
            if use_b:
                d_seq.append(d_here)
                new_partial = _canonical_partial(
                    sig_seq, d_seq, c, b, cost_mem_sig, cost_mem_len
                )
            else:
                new_partial = partial + c[s - 1] * d_here
            if last:
                flags["complete"] = True
                if not enforce_t or member_target(x_next):
                    leaf = new_partial + cterm * dist(x_next)
                    if leaf < best_cost:
                        best_cost = leaf
                        best_path = tuple(sig_seq)
                        if best_cost < threshold:
                            threshold = best_cost
            else:
                xnorm2 = 0.0
                for v in x_next:
                    xnorm2 += v * v
                if fast_bound:
                    bound = new_partial + fb_factor[depth + 1] * math.sqrt(xnorm2)
                else:
                    bound = new_partial + future_bound(math.sqrt(xnorm2), depth + 1)
                if bound >= threshold:
                    stats["pruned"] += 1
                else:
                    dfs(depth + 1, x_next, s, new_run, new_used, new_partial)
            sig_seq.pop()
            if use_b:
                d_seq.pop()

    dfs(0, x0, mem_sig, mem_len, used0, 0.0)

    if best_path is None:
        if flags["complete"] and problem.enforce_terminal:
            raise InfeasibleProblemError(
                "no sequence reaches the target set within the horizon",
                reason="terminal",
            )
        reason = "waiting" if flags["waiting"] else "state"
        raise InfeasibleProblemError(
            f"no admissible sequence exists ({reason} constraints)", reason=reason
        )

    # canonical re-roll of the optimal trajectory
    x = x0
    traj = [x]
    for s in best_path:
        x = _matvec(rows[s - 1], x)
        traj.append(x)
    return OcpSolution(
        path=SwitchingPath(best_path),
        trajectory=np.array(traj, dtype=float),
        cost=best_cost,
        nodes_explored=stats["nodes"],
        nodes_pruned=stats["pruned"],
    )


# -- receding horizon ------------------------------------------------------------


@dataclass(frozen=True)
class MpcConfig:
    """Problem template for the receding-horizon loop."""

    sys: SwitchedSystem
    horizon: int
    target: PolytopeUnion
    cost: CostSpec
    enforce_waiting: bool = True
    enforce_terminal: bool = True
    consecutive_includes_memory: bool = True
    cycle_through_all: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "target", as_union(self.target))


@dataclass(frozen=True)
class ControllerState:
    """Single-owner closed-loop state: current x, applied-signal memory, cycle bookkeeping."""

    x: tuple[float, ...]
    memory: SwitchingPath = SwitchingPath()
    cycle_used: frozenset[int] = frozenset()
    k: int = 0


def initial_state(x0: Sequence[float]) -> ControllerState:
    return ControllerState(x=tuple(float(v) for v in x0))


def _memory_window(cfg: MpcConfig) -> int:
    return max(u for _, u in cfg.sys.waiting)


def rhc_step(
    cfg: MpcConfig, state: ControllerState
) -> tuple[int, ControllerState, OcpSolution]:
    """Solve the horizon problem at the current state and apply its first signal."""
    problem = OcpProblem(
        sys=cfg.sys,
        x=state.x,
        horizon=cfg.horizon,
        target=cfg.target,
        cost=cfg.cost,
        memory=state.memory,
        enforce_waiting=cfg.enforce_waiting,
        enforce_terminal=cfg.enforce_terminal,
        consecutive_includes_memory=cfg.consecutive_includes_memory,
        cycle_through_all=cfg.cycle_through_all,
        cycle_used=state.cycle_used,
    )
    sol = solve_ocp(problem)
    s0 = sol.path[0]
    x_next = _matvec(cfg.sys.rows(s0), state.x)
    memory = (state.memory + [s0]).last(_memory_window(cfg))
    used = state.cycle_used
    if cfg.cycle_through_all:
        last = state.memory.signals[-1] if len(state.memory) else None
        if s0 != last:
            all_sigs = frozenset(range(1, cfg.sys.q + 1))
            used = frozenset({s0}) if used == all_sigs else used | {s0}
    new_state = ControllerState(x=x_next, memory=memory, cycle_used=used, k=state.k + 1)
    return s0, new_state, sol


@dataclass(frozen=True)
class ClosedLoopRecord:
    """States, applied signals, per-step optimal costs, and solver effort of a run."""

    states: np.ndarray  # (T+1, n)
    signals: tuple[int, ...]
    costs: tuple[float, ...]
    nodes_explored: tuple[int, ...]
    nodes_pruned: tuple[int, ...]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def run_closed_loop(
    cfg: MpcConfig,
    x0: Sequence[float],
    steps: int,
    state: ControllerState | None = None,
) -> ClosedLoopRecord:
    """Iterate rhc_step `steps` times, recording the optimal-cost sequence."""
    st = state if state is not None else initial_state(x0)
    states = [st.x]
    signals: list[int] = []
    costs: list[float] = []
    explored: list[int] = []
    pruned: list[int] = []
    for k in range(steps):
        try:
            s0, st, sol = rhc_step(cfg, st)
        except InfeasibleProblemError as err:
            raise InfeasibleProblemError(
                f"infeasible at closed-loop step {k}: {err}", reason=err.reason, step=k
            ) from err
        signals.append(s0)
        costs.append(sol.cost)
        explored.append(sol.nodes_explored)
        pruned.append(sol.nodes_pruned)
        states.append(st.x)
    return ClosedLoopRecord(
        states=np.array(states, dtype=float),
        signals=tuple(signals),
        costs=tuple(costs),
        nodes_explored=tuple(explored),
        nodes_pruned=tuple(pruned),
    )

"""Independent oracles and randomized instance generators for the solver tests.

The enumeration oracle walks every signal sequence in lexicographic order,
filters by the same constraint predicates the solver honors, and keeps the
first strict minimizer of the canonical cost, so solver results must match it
bit for bit.
"""

from __future__ import annotations

import itertools

import numpy as np

from swmpc.controller import (
    STATE_TOL,
    TERMINAL_TOL,
    CostSpec,
    OcpProblem,
    _build_membership,
    eval_cost,
)
from swmpc.geometry import Polytope, PolytopeUnion
from swmpc.switched import SwitchedSystem, SwitchingPath, packs


def _cycle_ok(problem: OcpProblem, sigs: tuple[int, ...]) -> bool:
    q = problem.sys.q
    mem = problem.memory.signals
    used = set(problem.cycle_used)
    prev = mem[-1] if mem else None
    if prev is not None:
        used.add(prev)
    for s in sigs:
        if s != prev:
            if len(used) == q:
                used = {s}
            elif s in used:
                return False
            else:
                used.add(s)
        prev = s
    return True


def _waiting_ok(problem: OcpProblem, sigs: tuple[int, ...]) -> bool:
    """Dwell-bound admissibility of memory ++ path.

    The trailing pack may still extend beyond the horizon, and a pack closed
    strictly inside the memory window may have been truncated on the left;
    both get their lower bound relaxed.  Every other pack, including the one
    straddling the seam, must meet both bounds with its full visible length.
    """
    concat = (problem.memory + SwitchingPath(sigs)).signals
    mlen = len(problem.memory)
    for p in packs(concat):
        lo, up = problem.sys.waiting[p.signal - 1]
        if p.length > up:
            return False
        trailing = p.stop == len(concat)
        truncated_leading = p.start == 0 and p.stop < mlen
        if p.length < lo and not trailing and not truncated_leading:
            return False
    return True


def enumerate_ocp(problem: OcpProblem):
    """(cost, path) of the best admissible sequence, or None when infeasible."""
    sys_ = problem.sys
    member_state = _build_membership(sys_.state_set, STATE_TOL)
    member_target = _build_membership(problem.target, TERMINAL_TOL)
    if not member_state(problem.x):
        return None
    best = None
    for sigs in itertools.product(range(1, sys_.q + 1), repeat=problem.horizon):
        if problem.enforce_waiting and not _waiting_ok(problem, sigs):
            continue
        if problem.cycle_through_all and not _cycle_ok(problem, sigs):
            continue
        cost, traj = eval_cost(problem, sigs)
        states = [tuple(float(v) for v in row) for row in traj]
        if not all(member_state(states[j]) for j in range(problem.horizon)):
            continue
        if problem.enforce_terminal and not member_target(states[-1]):
            continue
        if best is None or cost < best[0]:
            best = (cost, sigs)
    return best


def random_matrix(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """Random matrix rescaled to the given spectral radius."""
    while True:
        A = rng.normal(size=(n, n))
        eig = np.max(np.abs(np.linalg.eigvals(A)))
        if eig > 1e-6:
            return A * (radius / eig)


def random_ocp(rng: np.random.Generator) -> OcpProblem:
    """A small randomized instance exercising waiting bounds, memory seams,
    unions, run-length costs, and both enforcement flags."""
    n = int(rng.integers(1, 4))
    q = int(rng.integers(1, 4))
    N = int(rng.integers(1, 7))
    mats = tuple(
        random_matrix(rng, n, radius=float(rng.uniform(0.3, 1.6))) for _ in range(q)
    )
    box = float(rng.uniform(5.0, 50.0))
    state_set = Polytope.box([-box] * n, [box] * n)
    if rng.random() < 0.7:
        waiting = []
        for _ in range(q):
            lo = int(rng.integers(1, 3))
            waiting.append((lo, lo + int(rng.integers(0, 4))))
        waiting = tuple(waiting)
    else:
        waiting = tuple((1, 10**6) for _ in range(q))
    sys_ = SwitchedSystem(matrices=mats, state_set=state_set, waiting=waiting)

    widths = rng.uniform(0.3, 2.0, size=n)
    target_parts = [Polytope.box(-widths, widths)]
    if rng.random() < 0.3:
        shift = rng.uniform(-1.0, 1.0, size=n)
        target_parts.append(Polytope.box(shift - widths, shift + widths))
    target = PolytopeUnion(tuple(target_parts))

    consecutive = (
        tuple(float(v) for v in rng.uniform(0.0, 0.5, size=q))
        if rng.random() < 0.5
        else ()
    )
    cost = CostSpec(
        stage_weights=tuple(float(v) for v in rng.uniform(0.5, 2.0, size=q)),
        terminal_weight=float(rng.uniform(0.5, 2.0)),
        consecutive_weights=consecutive,
    )

    memory: list[int] = []
    if rng.random() < 0.5 and q >= 1:
        # compliant blocks, then a possibly-short trailing block
        blocks = int(rng.integers(0, 3))
        prev = None
        for _ in range(blocks):
            s = int(rng.integers(1, q + 1))
            if s == prev:
                continue
            lo, up = waiting[s - 1]
            memory.extend([s] * int(rng.integers(lo, min(up, lo + 2) + 1)))
            prev = s
        s = int(rng.integers(1, q + 1))
        if s != prev:
            lo, up = waiting[s - 1]
            memory.extend([s] * int(rng.integers(1, min(up, 3) + 1)))
        umax = max(u for _, u in waiting)
        memory = memory[-umax:]

    x0 = tuple(float(v) for v in rng.uniform(-box / 3.0, box / 3.0, size=n))
    return OcpProblem(
        sys=sys_,
        x=x0,
        horizon=N,
        target=target,
        cost=cost,
        memory=SwitchingPath(tuple(memory)),
        enforce_waiting=bool(rng.random() < 0.8),
        enforce_terminal=bool(rng.random() < 0.35),
        cycle_through_all=bool(q >= 2 and rng.random() < 0.2),
    )

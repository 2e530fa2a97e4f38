#!/usr/bin/env python3
"""Set-geometry certificates for the planar four-subsystem example.

Computes iterated controllable sets of a small box around the origin and
searches for stabilizability / non-stabilizability certificates, printing the
part counts along the way.
"""

import time

from swmpc import (
    Polytope,
    build_illustrative_system,
    controllable_set,
    is_switched_invariant,
    non_stabilizability_certificate,
    stabilizability_certificate,
)

KMAX = 3


def main() -> None:
    sys_ = build_illustrative_system()
    omega = Polytope.box([-0.1, -0.1], [0.1, 0.1])

    report = is_switched_invariant(sys_, omega)
    print(f"box target switched-invariant: {report.is_sis}")
    if report.counterexample is not None:
        print(f"  escaping point: {report.counterexample}")

    current = omega
    for i in range(1, KMAX + 2):
        current = controllable_set(sys_, current)
        print(f"S_{i}: {len(current)} parts")

    t0 = time.time()
    k = stabilizability_certificate(sys_, omega, KMAX)
    elapsed = time.time() - t0
    if k is None:
        print(f"stabilizability: not certified within kmax={KMAX} ({elapsed:.1f}s)")
    else:
        print(f"stabilizability: certified at k={k} ({elapsed:.1f}s)")

    k_non = non_stabilizability_certificate(sys_, omega, KMAX)
    print(
        "non-stabilizability: "
        + (f"certified at k={k_non}" if k_non is not None else f"not certified within kmax={KMAX}")
    )


if __name__ == "__main__":
    main()

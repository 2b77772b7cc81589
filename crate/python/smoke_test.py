"""Smoke test for the spectral_control extension module.

Build and install the module first, for example

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run `python python/smoke_test.py`.
"""

import math
import sys

import spectral_control as sc


def close(a, b, tol):
    return abs(a - b) <= tol * max(abs(b), 1.0)


def main():
    # three coincident robots form K3: eigenvalues 2, -1, -1
    k3 = sc.RobotConfiguration([[0.0, 0.0]] * 3)
    eigs = k3.eigenvalues()
    assert all(close(a, b, 1e-12) for a, b in zip(eigs, [2.0, -1.0, -1.0])), eigs
    assert k3.moments(3) == [0.0, 2.0, 2.0]

    # moments agree with the spectrum
    hexagon = sc.RobotConfiguration.hexagon(0.5)
    moments = hexagon.moments(7, c=2.0, z=2)
    again = sc.moments_from_eigenvalues(hexagon.eigenvalues(c=2.0, z=2), 7)
    assert all(close(a, b, 1e-10) for a, b in zip(moments, again))

    # relabeling and translation leave the moments unchanged
    cfg = sc.RobotConfiguration.random(6, 2, 3)
    base = cfg.moments(5)
    assert cfg.permuted([5, 4, 3, 2, 1, 0]).moments(5) == base
    moved = cfg.translated([0.25, -0.5]).moments(5)
    assert all(close(a, b, 1e-12) for a, b in zip(moved, base))

    # walk enumeration matches the matrix power
    w = cfg.adjacency()
    assert close(sc.walk_weight_sum(w, 3, 0, 2), sc.matrix_power_entry(w, 3, 0, 2), 1e-12)

    # control law against a central difference of the cost
    targets = sc.RobotConfiguration.random(6, 2, 4).moments(4)
    u = sc.control_law(cfg, targets)
    h = 1e-6
    rows = cfg.positions
    for i, r in [(0, 0), (3, 1)]:
        plus = [row[:] for row in rows]
        minus = [row[:] for row in rows]
        plus[i][r] += h
        minus[i][r] -= h
        fd = (sc.cost(sc.RobotConfiguration(plus), targets) - sc.cost(sc.RobotConfiguration(minus), targets)) / (2 * h)
        assert close(u[i][r], -fd, 1e-6), (u[i][r], -fd)

    report = sc.verify(trials=3)
    assert report["passed"], report

    # the truncated hexagon example
    run = sc.Scenario.preset("hexagon7").with_overrides(["s=4"]).simulate()
    assert run.termination == "converged", run.termination
    for value, target in zip(run.final_moments[1:], [0.53, 0.64, 1.22]):
        assert value >= target and (value - target) / target <= 0.05
    assert close(run.final_eigenvalues[0], 1.70, 0.03)
    potential = [c + b for c, b in zip(run.costs, run.barriers)]
    assert all(b <= a for a, b in zip(potential, potential[1:]))
    assert run.report()["termination_reason"] == "converged"

    # a self-consistent round trip
    trip = sc.Scenario.round_trip(5, 2, 4, formation_seed=1, start_seed=2).simulate()
    targets = sc.Scenario.round_trip(5, 2, 4, formation_seed=1, start_seed=2).target_moments()
    assert trip.termination == "converged"
    for value, target in zip(trip.final_moments[1:], targets[1:]):
        assert target <= value <= target * 1.005

    try:
        sc.Scenario.preset("hexagon7").with_overrides(
            ["targets.moments.1=6.5", "reference_eigenvalues=null"]
        ).simulate()
    except sc.UnrealizableError:
        pass
    else:
        raise AssertionError("unrealizable targets were accepted")

    try:
        sc.RobotConfiguration([[math.nan, 0.0], [0.0, 0.0]])
    except sc.SpectralError:
        pass
    else:
        raise AssertionError("NaN coordinates were accepted")

    print("spectral_control smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Smoke test for the shearwave_py extension module."""

import json
import math
import tempfile

import shearwave_py as sw


def main() -> None:
    uniform = sw.Profile.constant(1.0, 1.0)
    lattice = sw.Lattice(2.0 * math.pi, 4.0)

    sigma = sw.calibrate_sigma(uniform, 1.0, lattice, 1, 0)
    assert abs(sigma - (1.0 / math.tanh(1.0) - 1.0)) < 1e-9, sigma

    params = sw.WaveParams(1.0, sigma)
    assert abs(sw.dispersion_residual(uniform, params, 1.0, 0.0)) <= 1e-10
    assert (1, 0) in sw.kernel_set(uniform, params, lattice)

    nodes, q, integral = sw.solve_riccati(uniform, 1.0, 0.0)
    assert abs(q[-1] - math.tanh(1.0)) < 1e-10
    assert nodes[0] == -1.0 and integral[0] == 0.0
    assert abs(integral[-1] - math.log(math.cosh(1.0))) < 1e-10

    sheared = sw.Profile.polynomial([2.0, 1.0], 1.0)
    sigma3 = sw.calibrate_sigma(sheared, 1.0, lattice, 1, 1)
    verdict = json.loads(sw.verdict(sheared, sw.WaveParams(1.0, sigma3), lattice, [(1, 1, 1.0)]))
    assert verdict["classification"] == "OBSTRUCTED_3D", verdict["classification"]
    assert verdict["ratio"] > 0.01

    config = {
        "profile": {"kind": "constant", "value": 1.0, "depth": 1.0},
        "params": {"g": 1.0, "sigma": {"calibrate": [1, 0]}},
        "lattice": {"lambda1": 2.0 * math.pi, "lambda2": 4.0},
    }
    with tempfile.TemporaryDirectory() as out:
        doc = json.loads(sw.run_command("verify", json.dumps(config), out))
    assert doc["result"]["nonlinear_max"] <= 1e-10

    try:
        sw.Profile.constant(1.0, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative depth accepted")

    print("shearwave_py smoke test passed")


if __name__ == "__main__":
    main()

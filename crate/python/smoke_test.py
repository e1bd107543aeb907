"""Smoke test for the Python bindings.

Build and install first:
    pip install -e crates/python --no-build-isolation
"""

import cmath
import json

import whitham_py as w


def main():
    # odd theta function, quasi-periodic under z -> z + 1
    tau = 0.3 + 1.2j
    z = 0.17 - 0.08j
    assert abs(w.theta(-z, tau) + w.theta(z, tau)) < 1e-12
    assert abs(w.theta(z + 1, tau) + w.theta(z, tau)) < 1e-12

    cfg = w.builtin_config()
    blocks = json.loads(cfg)
    assert blocks["schema_version"] == 1

    # a small circle around z encloses only the kernel pole
    p = w.potential_g0(0.9 + 1.1j, "small", cfg)
    assert abs(p + 2j * cmath.pi) < 1e-6, p

    report = json.loads(w.run_suite("theta", cfg, seed=3))
    assert report["summary"]["failed"] == 0, report["summary"]
    assert len(report["checks"]) >= 5

    a = w.run_suite("fay", seed=1, timing=False)
    b = w.run_suite("fay", seed=1, timing=False)
    assert a == b

    system = json.loads(w.extract(0, cfg))
    assert len(system["system"]["a"]) == 2
    assert system["consistency_residual"] < 1e-6

    assert w.kp_fay_residual([2, 1]) < 1e-10

    try:
        w.run_suite("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown suite accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

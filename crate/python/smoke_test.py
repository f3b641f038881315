"""Smoke test for the fbs_hinf extension module.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`.
"""

import json
import math
import sys

import fbs_hinf


def main() -> int:
    model = json.loads(fbs_hinf.cstr_model())
    assert len(model["rules"]) == 3

    h = fbs_hinf.memberships([3.35, 0.0])
    assert abs(sum(h) - 1.0) < 1e-12 and abs(h[0] - h[1]) < 1e-12

    s, c = fbs_hinf.sin_cos_theta(-2.2288, 1.0)
    assert abs(s * s + c * c - 1.0) < 1e-15 and s < 0

    report = fbs_hinf.synthesize(gamma=0.3, beta=0.1, epsilon=1.0, phi=0.0, common=True)
    parsed = json.loads(report)
    assert parsed["result"]["status"] == "strictly-feasible", parsed["result"]["status"]
    assert json.loads(fbs_hinf.verify(report))["passed"]

    outcome = json.loads(fbs_hinf.simulate(report, [3.1, 1.5], horizon=1.0))
    settle = outcome["performance"]["settling_time"]
    assert settle is not None and settle < 0.1, settle
    assert outcome["performance"]["max_abs_u"] <= 0.1

    tiny = json.loads(fbs_hinf.synthesize(gamma=1e-6))
    assert tiny["result"]["status"] == "infeasible"
    try:
        fbs_hinf.simulate(json.dumps(tiny), [0.0, 0.0])
    except ValueError as e:
        assert "reason=no-feasible-point" in str(e)
    else:
        raise AssertionError("infeasible report simulated")

    passed, table = fbs_hinf.bench()
    print(table, end="")
    assert passed
    assert not math.isnan(parsed["result"]["margin"])
    print("smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())

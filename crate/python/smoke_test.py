"""Smoke test for the nim_py extension module.

Build and install first, e.g.

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run `python python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import sys
import tempfile

import nim_py

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)
    print("ok:", msg)


def main():
    u, eps = nim_py.analytic_bar_solution(1.0)
    check(abs(u - 136 / 135) < 1e-14 and abs(eps) < 1e-14, "bar solution at x = 1")

    check(abs(nim_py.symmetric_modulus(0.3, 0.0) - nim_py.symmetric_modulus(0.7, 0.0)) < 1e-14,
          "symmetric modulus is flat along Y = 0")

    g = nim_py.grf_modulus(32, 3.0, 5)
    flat = [v for row in g for v in row]
    check(len(g) == 32 and abs(min(flat) - 1) < 1e-12 and abs(max(flat) - 2) < 1e-12, "GRF range [1, 2]")

    p = nim_py.pk1_stress("neo_hookean", [1.0, 0.0, 0.0, 1.0], 1000.0, 0.3)
    check(max(abs(v) for v in p) < 1e-12, "stress-free reference state")

    idx, vals, grads = nim_py.shape_functions([0.37, 0.61], [(0.0, 1.0), (0.0, 1.0)], [11, 11])
    check(abs(sum(vals) - 1) < 1e-12 and len(grads) == len(idx), "partition of unity")

    try:
        nim_py.pk1_stress("rubber", [1.0])
    except ValueError as e:
        check("rubber" in str(e), "unknown material raises ValueError")
    else:
        check(False, "unknown material raises ValueError")

    with tempfile.TemporaryDirectory() as tmp:
        report = nim_py.solve(str(ROOT / "configs" / "bar1d.toml"), scheme="c", out=tmp)
        check(report["converged"], f"bar solve converged ({report['stop_reason']})")
        check(report["e_l2_u"] <= 5e-5, f"bar e_l2_u = {report['e_l2_u']:.3e}")
        check((pathlib.Path(tmp) / "fields.csv").exists(), "fields.csv written")

    ok, text = nim_py.diagnose(str(ROOT / "configs" / "bar1d.toml"), "gradients")
    dev = float(text.split("components:")[1].split()[0])
    check(ok and not math.isnan(dev) and dev <= 1e-5, f"gradient diagnostic ({dev:.1e})")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()

"""Smoke test for the pyounts extension module.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/pyounts-*.whl
"""

import math
import os
import tempfile

import pyounts


def main():
    ou = pyounts.OuNtsParams(alpha=0.5, sigma=0.3, nu=2.5, b=5.0)
    t = 1.0 / 12.0
    for u in (-20.0, 0.5, 7.0):
        a, b = ou.lch(u, t), ou.lch_oracle(u, t)
        assert abs(a - b) <= 1e-8 * abs(b), (u, a, b)
    c2 = ou.cumulant(2, t)
    assert abs(c2 - 0.0050886) < 5e-7, c2

    paths = ou.simulate([0.0, t], 20000, seed=3)
    assert len(paths) == 20000 and paths[0][0] == 0.0
    var = sum(p[1] ** 2 for p in paths) / len(paths)
    assert abs(var / c2 - 1.0) < 0.2, var
    assert ou.simulate([0.0, t], 10, seed=3) == paths[:10]

    model = pyounts.SpotModel(20.0, pyounts.OuNtsParams(0.5, 0.2, 0.7, 10.0))
    fft, mc = model.call_strip([t, 0.5, 1.0], 20.0, n_paths=50000, seed=7)
    assert abs(fft - mc.value) <= 3.0 * mc.stderr, (fft, mc)
    assert math.isclose(model.call_fft(0.5, 1e-8), 20.0, abs_tol=1e-4)

    two = pyounts.SpotModel(12.0, ou, pyounts.NtsParams(0.5, 0.25, 0.4, theta=-0.03))
    call, put = two.asian(0.25, 0.5, 90, 11.5, n_paths=4000, seed=1)
    assert call.value > put.value > 0.0
    swing = two.swing(4.0 / 3.0, 30, 11.5, n_paths=1000, seed=1)
    assert swing.value > 0.0

    try:
        pyounts.OuNtsParams(alpha=1.5, sigma=0.3, nu=2.5, b=5.0)
    except ValueError as e:
        assert "alpha" in str(e)
    else:
        raise AssertionError("invalid alpha accepted")

    with tempfile.TemporaryDirectory() as d:
        da, ma = os.path.join(d, "da.csv"), os.path.join(d, "ma.csv")
        pyounts.write_synthetic_market(da, ma, 4)
        fit = pyounts.calibrate(da, ma, seed=4)
        assert abs(fit["ou"]["b"] / 5.0 - 1.0) < 0.1, fit["ou"]
        assert set(fit) >= {"ou", "levy", "seasonality", "diagnostics", "warnings"}

    print("pyounts smoke test passed")


if __name__ == "__main__":
    main()

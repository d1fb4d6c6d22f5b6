"""Smoke test for the pyeih extension module.

Build and run from the repository root:

    cargo build -p eih-calib-python --features extension-module --release
    cp target/release/libpyeih.so python/pyeih.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pyeih  # noqa: E402


def close(a, b, tol=1e-9):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    k = pyeih.CameraIntrinsics(2.0, 300.0, 300.0, 320.0, 240.0)
    assert close(k.project([600.0, 0.0, 600.0]), (920.0, 240.0, 600.0))
    assert close(k.back_project(920.0, 240.0, 600.0), [600.0, 0.0, 600.0])

    r = pyeih.rodrigues_to_matrix([0.0, 0.0, math.pi / 2])
    assert close(pyeih.matrix_to_rodrigues(r), [0.0, 0.0, math.pi / 2])
    e = pyeih.euler_to_matrix(0.3, -0.2, 0.1)
    assert close(pyeih.matrix_to_euler(e), (0.3, -0.2, 0.1))

    x = pyeih.HomTransform([0.0, 0.0, math.pi / 2], [0.0, 6.0, 40.0])
    motions = []
    for rv, t in [([0.3, 0.0, 0.1], [10.0, 0.0, 5.0]), ([0.0, -0.4, 0.2], [0.0, 20.0, -3.0]),
                  ([0.2, 0.2, -0.3], [5.0, 5.0, 5.0])]:
        b = pyeih.HomTransform(rv, t)
        a = x * b * x.inverse()
        motions.append((a.matrix(), b.matrix()))
    est, rot_res, trans_res = pyeih.solve_axxb(motions)
    assert close(est.translation, x.translation, 1e-6), est
    assert rot_res < 1e-9 and trans_res < 1e-9

    dataset, truth = pyeih.simulate(seed=3, noise=0.0)
    report = json.loads(pyeih.calibrate(dataset, method="ekf"))
    true_t = json.loads(truth)["true_X"]["t_mm"]
    assert close(report["X"]["t_mm"], true_t, 0.5), (report["X"], true_t)

    table = pyeih.paper_table()
    assert table["reproduced"]
    assert close(table["percent"], [0.70, 46.39, 2.60], 0.01)
    assert abs(table["l2_mm"] - 125.82) <= 0.01

    checks = pyeih.run_selftest()
    assert all(passed for _, passed, _ in checks), checks

    print("pyeih smoke test passed")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Smoke test for the tether_py extension module.

Builds nothing itself: it locates the compiled cdylib under target/ (release
preferred), copies it next to a temp directory as an importable module, and
exercises the main surfaces end to end.

    cargo build -p tether-py --release
    python3 python/smoke_test.py
"""

import json
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def locate_cdylib():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libtether_py.so", "libtether_py.dylib", "tether_py.dll")
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "tether_py cdylib not found; run `cargo build -p tether-py` (or --release) first"
    )


def import_module(tmp: pathlib.Path):
    src = locate_cdylib()
    suffix = ".so" if src.suffix in (".so", ".dylib") else ".pyd"
    shutil.copy(src, tmp / f"tether_py{suffix}")
    sys.path.insert(0, str(tmp))
    import tether_py

    return tether_py


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


CONFIG = """
seed = 11

[model]
name = "shift"
dim_x = 1
dim_y = 1
coupling = { kind = "tanh" }

[field]
name = "soft"
mass = 1.0

[initial]
y = [0.3]
v = [0.5]
cloud = { kind = "uniform", n = 16, lo = [-1.0], hi = [1.0] }

[integrator]
dt = 1e-3
t_end = 2.0
stride = 20

[experiment.invariants]
order_dt = 0.02
"""


def main():
    with tempfile.TemporaryDirectory() as tmpdir:
        tmp = pathlib.Path(tmpdir)
        tp = import_module(tmp)

        # Velocity-transfer map of the built-in models.
        linear = tp.ConstraintModel.linear([[2.0]])
        assert linear.phi([0.3], [0.7]) == [[2.0]]

        shift = tp.ConstraintModel.shift("tanh", 1)
        approx(shift.phi([0.4], [0.0])[0][0], -1.0)

        warped = tp.ConstraintModel.warped(0.5, "linear", 1)
        approx(warped.phi([0.0], [0.2])[0][0], -2.0 / 3.0)
        # Omega for the shift model is -tanh''(y).
        y = 0.5
        expected = 2.0 * math.tanh(y) / math.cosh(y) ** 2
        approx(shift.omega([0.0], [y])[0][0][0], expected, tol=1e-12)

        # Forces.
        field = tp.ForceField("soft", mass=1.0)
        f1, f0 = field.forces([1.0], [0.0])
        approx(f1[0], -1.0 / math.sqrt(2.0))
        approx(f0[0], 0.0)

        # W1 distances.
        approx(tp.w1_sorted_1d([[0.0]], [[1.0]]), 1.0)
        value, matching = tp.w1_assignment([[0.0], [10.0]], [[9.0], [1.0]])
        approx(value, 1.0)
        assert matching == [1, 0]

        # Particle run conserves energy; flow run from the same empirical
        # data reproduces it exactly.
        particles = [[0.1], [-0.4], [0.8]]
        sim = tp.simulate(
            shift, field, y0=[0.3], v0=[0.5], particles=particles, t_end=1.0, dt=1e-3, stride=10
        )
        drift = max(abs(e - sim["energies"][0]) for e in sim["energies"])
        assert drift <= 1e-10, f"energy drift {drift}"
        flow = tp.mean_field_flow(
            shift, field, y0=[0.3], v0=[0.5], points=particles, t_end=1.0, dt=1e-3, stride=10
        )
        assert flow["ys"] == sim["ys"], "flow must reproduce particle trajectories exactly"
        assert flow["points"] == sim["points"]

        # E = v^2/2 + m (B v)^2 / 2 at the potential minima.
        unit_b = tp.ConstraintModel.linear([[1.0]])
        e = tp.total_energy(unit_b, tp.ForceField("harmonic", 1.0), [0.0], [1.0], [[0.0]])
        approx(e, 1.0)

        # Config-driven dispatch.
        out_dir = tmp / "out"
        manifest = tp.run("invariants", CONFIG, str(out_dir))
        names = [a["name"] for a in manifest["artifacts"]]
        assert names == ["invariants.json"], names
        report = json.loads((out_dir / "invariants.json").read_text())
        assert report["all_pass"], report["checks"]

        # Assumption report and cloud constructors.
        report = shift.check_assumptions([-1.0], [1.0], [-3.0], [3.0], n_samples=256, seed=1)
        assert report["max_phi_norm"] <= 1.0 + 1e-12
        assert report["jacobian_elliptic"]
        points, weights = tp.quantile_uniform_cloud([-1.0], [1.0], 4)
        approx(points[0][0], -0.75)
        approx(sum(weights), 1.0)
        sampled = tp.sample_uniform_cloud([-1.0], [1.0], 8, seed=3)
        assert len(sampled) == 8 and all(-1.0 <= p[0] <= 1.0 for p in sampled)

        # w1 on cloud files.
        (tmp / "a.csv").write_text("x0\n0.0\n")
        (tmp / "b.csv").write_text("x0\n1.0\n")
        res = tp.w1_files(str(tmp / "a.csv"), str(tmp / "b.csv"))
        approx(res["value"], 1.0)

    print("tether_py smoke test: all checks passed")


if __name__ == "__main__":
    main()

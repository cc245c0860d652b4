"""Builds the extension module with cargo and exercises it from Python.

Usage: python3 python/smoke_test.py [--no-build | --lib PATH]

`--lib` uses an already built library instead of building a release one.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_and_stage(argv: list) -> str:
    if "--lib" in argv:
        lib = argv[argv.index("--lib") + 1]
    else:
        if "--no-build" not in argv:
            subprocess.run(
                ["cargo", "build", "--release", "-p", "stochstab-py"], cwd=ROOT, check=True
            )
        lib = os.path.join(ROOT, "target", "release", "libstochstab_py.so")
    stage = tempfile.mkdtemp(prefix="stochstab_py_")
    shutil.copy(lib, os.path.join(stage, "stochstab_py.so"))
    return stage


def main() -> int:
    stage = build_and_stage(sys.argv[1:])
    sys.path.insert(0, stage)
    import stochstab_py as ss

    ids = [i for i, _ in ss.list_builtins()]
    assert "radial-affine" in ids and len(ids) == 9, ids

    # phi satisfies a - b*phi(a, b) = -sqrt(a^2 + b^2)
    a, b = -0.7, 1.3
    assert abs(a - b * ss.sontag_phi(a, b) + math.hypot(a, b)) < 1e-12

    try:
        ss.Scenario.builtin("no-such-model")
    except ValueError as e:
        assert "radial-affine" in str(e)
    else:
        raise AssertionError("unknown built-in accepted")

    sc = ss.Scenario.builtin("radial-affine").with_overrides(paths=50)
    again = ss.Scenario.from_toml(sc.to_toml())
    assert again.to_toml() == sc.to_toml()

    out = tempfile.mkdtemp(prefix="stochstab_out_")
    report = sc.run(out_dir=out)
    data = json.loads(report.to_json())
    assert data["monte_carlo"]["path_count"] == 50
    assert os.path.exists(os.path.join(out, "radial-affine", "report.json"))
    for name, passed, summary in report.certificates:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {summary}")
    assert report.passed and report.exit_code == 0

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

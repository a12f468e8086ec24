"""Smoke test for the mhrate_py extension.

Builds the cdylib with cargo, copies it next to a temporary import path as
mhrate_py.so and exercises the bindings. Run with `python3 python/smoke_test.py`
or under pytest.
"""

import importlib
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    subprocess.run(["cargo", "build", "--release", "-p", "mhrate-py"], cwd=ROOT, check=True)
    lib = ROOT / "target" / "release" / "libmhrate_py.so"
    dest = Path(tempfile.mkdtemp()) / "mhrate_py.so"
    shutil.copy(lib, dest)
    sys.path.insert(0, str(dest.parent))
    return importlib.import_module("mhrate_py")


SMALL = """
[experiment]
policies = ["media-aware", "greedy-aimd"]

[sim]
duration = 20.0
measurement = "ideal"

[network.eth]
synth = "ethernet"

[network.wlan]
synth = "80211g"

[stream.a]
profile = "harbor"

[stream.b]
profile = "cyclists"
"""


def test_bindings():
    m = load_module()

    names = [name for name, _ in m.list_scenarios()]
    assert "paper-v-load" in names and "quick" in names
    assert "[experiment]" in m.scenario_toml("quick")

    assert m.validate(SMALL) == []
    problems = m.validate(SMALL.replace("duration", "duraton"))
    assert problems and "duraton" in problems[0]

    assert abs(m.late_loss_probability(0.3, 0.1) - math.exp(-3.0)) < 1e-12
    assert abs(m.psnr(255.0**2 / 100.0) - 20.0) < 1e-9
    star = m.gamma_star(-0.5, -1.0, 1.0, 8.0)
    sigma = m.sigma_gamma(-0.5, -1.0, 1.0, 8.0, 1.5 * star)
    assert sigma > 0.0
    d0, theta, r0 = m.fit_dr_model([(r, 2.0 + 1e8 / (r - 3e5)) for r in (1e6, 3e6, 8e6)])
    assert abs(d0 - 2.0) < 1e-6 and abs(theta / 1e8 - 1.0) < 1e-6 and abs(r0 / 3e5 - 1.0) < 1e-6

    points = m.run(SMALL, seed=3, sweep=[("network.*.background_load", ["0.1", "0.3"])])
    assert [p["label"] for p in points] == [
        "network.all.background_load=0.1",
        "network.all.background_load=0.3",
    ]
    for p in points:
        assert [s["policy"] for s in p["summaries"]] == ["media-aware", "greedy-aimd"]
        for s in p["summaries"]:
            assert s["streams"] == ["a", "b"] and len(s["rate"]) == 2
            assert all(r > 0 for r in s["rate"])
            assert 0.0 <= max(s["loss_ratio"]) <= 1.0
        assert p["comparison"].startswith("policy,scope,entity,metric,value,delta")
    light, heavy = (p["summaries"][0]["rate"] for p in points)
    assert sum(light) > sum(heavy)
    again = m.run(SMALL, seed=3, sweep=[("network.*.background_load", ["0.1", "0.3"])])
    assert again[0]["comparison"] == points[0]["comparison"]


if __name__ == "__main__":
    test_bindings()
    print("smoke test passed")

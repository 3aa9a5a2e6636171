#!/usr/bin/env python3
"""Smoke test for the fabernet_py extension module.

Build the extension first:

    cargo build -p fabernet-py --release

The script locates the produced cdylib, stages it under an importable name,
and drives the main entry points end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def stage_module() -> None:
    candidates = [
        REPO / "target" / "release" / "libfabernet_py.so",
        REPO / "target" / "debug" / "libfabernet_py.so",
        REPO / "target" / "release" / "libfabernet_py.dylib",
        REPO / "target" / "debug" / "libfabernet_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("extension not built; run: cargo build -p fabernet-py --release")
    stage = Path(tempfile.mkdtemp(prefix="fabernet-py-"))
    shutil.copy2(built, stage / "fabernet_py.so")
    sys.path.insert(0, str(stage))


stage_module()
import fabernet_py as fn  # noqa: E402


def check(name: str, ok: bool) -> None:
    print(f"{'ok' if ok else 'FAIL'}  {name}")
    if not ok:
        sys.exit(1)


# Index sets and grids.
idx = fn.notched_indices(2, 2.0, 3)
check("notched index count (d=2, beta=2, m=3)", len(idx) == 8)
check("notch removes balanced indices", [2, 1] not in idx and [1, 2] not in idx)
grid1 = fn.notched_grid(1, 2.0, 1)
check(
    "1-d grid is the level-2 dyadic mesh",
    sorted(x[0] for x in grid1) == [0.0, 0.25, 0.5, 0.75, 1.0],
)

# Corpus functions.
check("corpus ids", set(fn.corpus_ids()) == {"poly_tent", "bspline_bump", "truncated_series"})
tent = fn.corpus_fn("poly_tent", 2)
check("tent value at the center", math.isclose(tent.value([0.5, 0.5]), 0.25 * 0.0625))
check("tent vanishes on the boundary", tent.value([0.0, 0.3]) == 0.0)
g = tent.gradient([0.25, 0.25])
check("tent gradient symmetry", math.isclose(g[0], g[1]))
check("unit-ball seminorm estimate", tent.seminorm_lower_bound(2.0, 20000) <= 1.0 + 1e-6)

# Sampling operator: interpolation on grid points.
exp = fn.sample("poly_tent", 2, 1.5, 2.0, 3)
check("expansion term count", exp.num_terms == 33)
worst = max(
    abs(exp.value(pt) - tent.value(pt)) for pt in fn.notched_grid(2, 2.0, 3)
)
check("interpolation residual <= 1e-12", worst <= 1e-12)

# Expansion file round trip.
with tempfile.TemporaryDirectory() as td:
    path = str(Path(td) / "expansion.txt")
    exp.save(path)
    back = fn.Expansion.load(path)
    check("expansion round trip", back.terms() == exp.terms())

# Error budget decreases dyadically in m at alpha = 2.
b4 = fn.recovery_error_bound(2, 2.0, 3.0, 4)
b5 = fn.recovery_error_bound(2, 2.0, 3.0, 5)
check("error bound halves per level", math.isclose(b5 / b4, 0.5))

# Compiler plan reference values.
p = fn.plan(2, 2.0, 3.0, 0.1)
check("plan m", p["m"] == 6)
check("plan delta", math.isclose(p["delta"], 0.2))
check("plan eps0", math.isclose(p["eps0"], 0.25))

# Compile and evaluate a network.
net = fn.compile("poly_tent", 2, 2.0, 3.0, 0.2)
stats = net.stats()
check("network dims chain", stats["dims"][0] == 2 and stats["dims"][-1] == 1)
err, _ = fn.w1p_error(tent, net, p="2", scheme="tensor", n=128)
check(f"compiled network error {err:.4f} <= 0.2", err <= 0.2)
report = fn.error_report(tent, net, p="2", scheme="tensor", n=128)
check("error report is consistent", math.isclose(report["w1p"], err) and report["lp"] <= report["sup"] + 1e-15)

with tempfile.TemporaryDirectory() as td:
    path = str(Path(td) / "net.txt")
    net.save(path)
    back = fn.Network.load(path)
    x = [0.37, 0.81]
    check("network round trip is bit-exact", back.value(x) == net.value(x))

print("smoke test passed")

"""Desk-scale acceptance run of the hierarchical pipeline.

Checks:
1. Decided X3 meets every subtask bound in each seed
2. MSE and landing impact improve from X0 to X3 (median across seeds)
3. X3 constraint-dominates the single-level minimal-MSE member in most seeds
"""

import argparse
import logging
import os
import statistics
import sys
import time

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import ClmError
from src.kinematics.linkage_core import Topology
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target
from src.optimization.hier_pipeline import (
    S1_BOUNDS,
    S2_BOUNDS,
    HierarchicalPipeline,
    PipelineConfig,
)

logging.getLogger("src.optimization").setLevel(logging.WARNING)


def run_seed(seed: int, population: int, generations: int) -> dict:
    print(f"\n{'=' * 80}")
    print(f"SEED {seed}")
    print("=" * 80)

    cfg = PipelineConfig.from_settings(seed=seed, population=population, generations=generations)
    target = cycloid_bt_target(CycloidSpec(), cfg.samples)
    pipeline = HierarchicalPipeline(Topology.STEPHENSON_I, target, cfg)

    started = time.perf_counter()
    try:
        run = pipeline.run()
    except ClmError as e:
        print(f"    [FAIL] pipeline stopped: {type(e).__name__}: {e}")
        return {"seed": seed, "ok": False}
    x0, x3 = run.incumbents["x0"].measures, run.incumbents["x3"].measures
    print(f"    X0: MSE={x0['f1']:.3f} mm, h_s={x0['f4']:.3f} mm, I={x0['f5']:.3f} mm/s")
    print(f"    X3: MSE={x3['f1']:.3f} mm, h_s={x3['f4']:.3f} mm, I={x3['f5']:.3f} mm/s")

    bounds_ok = all(x3[name] < bound for name, bound in S1_BOUNDS + S2_BOUNDS)
    print(f"    {'[OK]' if bounds_ok else '[FAIL]'} X3 bounds f1<6, f2<5, f3<5, f4<6.5, f5<20")

    single = pipeline.run_single_level().selected["f1"]
    s_mse, s_hs, s_i = single.objectives[0], single.objectives[3], single.objectives[4]
    print(f"    Single-level min-MSE: MSE={s_mse:.3f} mm, h_s={s_hs:.3f} mm, I={s_i:.3f} mm/s")
    mine = (x3["f1"], x3["f4"], x3["f5"])
    theirs = (s_mse, s_hs, s_i)
    dominates = all(a <= b for a, b in zip(mine, theirs)) and any(a < b for a, b in zip(mine, theirs))
    print(f"    {'[OK]' if dominates else '[WARN]'} X3 dominates the single-level member")
    print(f"    Wall time: {time.perf_counter() - started:.1f} s")

    return {
        "seed": seed,
        "ok": bounds_ok,
        "mse_gain": x0["f1"] - x3["f1"],
        "impact_ratio": x3["f5"] / x0["f5"] if x0["f5"] > 0 else 0.0,
        "dominates": dominates,
    }


def main():
    parser = argparse.ArgumentParser(description="Hierarchical pipeline acceptance run")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--population", type=int, default=60)
    parser.add_argument("--generations", type=int, default=150)
    args = parser.parse_args()

    results = [run_seed(s, args.population, args.generations) for s in args.seeds]
    completed = [r for r in results if "mse_gain" in r]

    print(f"\n{'=' * 80}")
    print("SUMMARY")
    print("=" * 80)
    checks = {
        "X3 bounds in every seed": all(r["ok"] for r in results),
        "median MSE improves": bool(completed) and statistics.median(r["mse_gain"] for r in completed) > 0,
        "median I(X3) < 0.25 I(X0)": bool(completed)
        and statistics.median(r["impact_ratio"] for r in completed) < 0.25,
        "X3 dominates single-level in >= 2 seeds": sum(r.get("dominates", False) for r in results) >= 2,
    }
    for name, passed in checks.items():
        print(f"  {'[OK]' if passed else '[FAIL]'} {name}")

    success = all(checks.values())
    print("\n[OK] Acceptance passed" if success else "\n[FAIL] Acceptance failed")
    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()

r"""Pulse-level versus gate-level training under one budget
========================================================

Both modes start from the same lowered ansatz and use the same Bayesian
optimizer, shot count and number of objective evaluations. The gate-level
mode searches the 27 rotation angles and re-lowers the circuit on every
evaluation. The pulse-level mode searches the pulse amplitudes directly.

With ``--cross-device`` the trained parameters of each seed are also
transferred to a second device and tested there.

Run with ``python demos/04_compare_vqp_vqc.py [out_dir]``. Equivalent CLI:
``vqp compare --a vqp --b vqc-bo --cross-device belem_like --out DIR``.
"""

import sys
from pathlib import Path

from vqp.harness import TrainConfig, compare

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/compare")
cfg = TrainConfig(task="synthetic2", n_train=20, n_test=20, iterations=30, seeds=(0, 1, 2))
res = compare(cfg, "vqp", "vqc-bo", out_dir=out, cross_device="belem_like")

print(f"{'mode':<8}{'initial':>9}{'final':>8}{'evals/seed':>18}")
for mode in res["modes"]:
    s = res["summaries"][mode]
    print(f"{mode:<8}{s['mean_initial_test_accuracy']:>9.3f}{s['mean_final_test_accuracy']:>8.3f}"
          f"{str(s['evaluations_per_seed']):>18}")
print(f"equal budget: {res['equal_budget']}")

print("\ntest accuracy after moving trained parameters to belem_like:")
for mode, rows in res["cross_device"]["results"].items():
    print(f"  {mode:<8}" + "  ".join(f"seed {r['seed']}: {r['test_accuracy']:.2f}" for r in rows))

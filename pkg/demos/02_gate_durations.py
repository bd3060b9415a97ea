r"""Gate durations after lowering
==============================

Two-qubit gates dominate the length of a lowered circuit. This script lowers
CX and CRX(pi) on every shipped device and prints their durations in samples
(``dt``) and nanoseconds. It then lowers the 9-gate baseline ansatz and shows
how much of its schedule is spent in entangling gates.

Run with ``python demos/02_gate_durations.py``. The same numbers come from the
CLI, e.g. ``vqp lower --circuit cx.json --device quito_like --report-duration``.
"""

import numpy as np

from vqp.circuit import Circuit, Gate, build_vqc_baseline, lower
from vqp.device import SHIPPED_DEVICES, get_device
from vqp.pulse import schedule_duration

print(f"{'device':<14}{'CX dt':>8}{'CRX(pi) dt':>12}{'CX ns':>10}{'CRX ns':>10}")
for name in SHIPPED_DEVICES:
    dev = get_device(name)
    cx = schedule_duration(lower(Circuit(2, (Gate("cx", (0, 1)),)), dev))
    crx = schedule_duration(lower(Circuit(2, (Gate("crx", (0, 1), (np.pi,)),)), dev))
    print(f"{name:<14}{cx:>8}{crx:>12}{cx * dev.dt_ns:>10.0f}{crx * dev.dt_ns:>10.0f}")

# %%
# Each CU3 in the baseline ansatz lowers to two CX gates plus single-qubit
# pulses, so the two-qubit gates set the total length.
dev = get_device("quito_like")
circ = build_vqc_baseline(2, seed=0)
sched = lower(circ, dev)
total = schedule_duration(sched)
print(f"\nbaseline ansatz on {dev.name}: {len(circ.gates)} gates, {total} dt ({total * dev.dt_ns / 1e3:.1f} us)")
for i, g in enumerate(circ.gates):
    spans = [ins for ins in sched.instructions if ins.gate == i]
    start = min(ins.start for ins in spans)
    end = max(ins.end for ins in spans)
    print(f"  gate {i}: {g.name:<4} on {g.qubits}  {end - start:>6} dt")

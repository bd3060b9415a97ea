r"""Rabi oscillations and the calibrated pi pulse
=============================================

A drive pulse on a transmon rotates the qubit about an axis in the xy plane.
For a fixed envelope shape the rotation angle is proportional to the pulse
amplitude, so scanning the amplitude traces out Rabi oscillations:

.. math:: P_1(a) = \sin^2\!\left(\frac{\pi a}{2 a_\pi}\right)

This script scans a DRAG envelope on qubit 0 of the ``quito_like`` device,
recovers :math:`a_\pi` and compares it with the amplitude stored in the
device's ``x`` calibration.

Run with ``python demos/01_rabi_and_pi_pulse.py``.
"""

import numpy as np

from vqp.device import get_device, lookup_calibration
from vqp.pulse import Channel, Envelope, Play, PulseSchedule
from vqp.sim import evolve

dev = get_device("quito_like")
d0 = Channel.drive(0)

# %%
# The calibrated X gate is a single 160-sample DRAG pulse.
x_play = lookup_calibration(dev.calibrations, "x", (0,)).template.instructions[0]
a_pi = abs(x_play.envelope.amp)
print(f"calibrated pi amplitude on d0: {a_pi:.5f}")

# %%
# Scan the amplitude and record the excited-state population.
amps = np.linspace(0, min(3 * a_pi, 1.0), 31)
pops = []
for a in amps:
    sched = PulseSchedule((Play(0, Envelope.drag(160, a, 40.0), d0),))
    pops.append(evolve(sched, dev, qubits=(0,)).probabilities()[1])
pops = np.array(pops)

# %%
# Fit the first peak with a least-squares sine model.
from scipy.optimize import curve_fit  # noqa: E402

(a_fit,), _ = curve_fit(lambda a, ap: np.sin(np.pi * a / (2 * ap)) ** 2, amps, pops, p0=[a_pi])
print(f"fitted pi amplitude:            {a_fit:.5f}")
print(f"P1 at the calibrated amplitude: {pops[np.argmin(np.abs(amps - a_pi))]:.5f}")

print("\n amp     P1")
for a, p in zip(amps[::3], pops[::3]):
    print(f"{a:6.3f}  {p:6.4f}  " + "#" * int(round(40 * p)))

# %%
# Half the pi amplitude gives an equal superposition.
half = PulseSchedule((Play(0, x_play.envelope.with_amp(x_play.envelope.amp / 2), d0),))
print(f"\nhalf-amplitude pulse: P1 = {evolve(half, dev, qubits=(0,)).probabilities()[1]:.4f}")

"""Shared generators for tests."""

import numpy as np

from vqp.circuit import build_encoding_circuit, build_vqc_baseline, lower
from vqp.pulse import Channel, Envelope, Play, PulseSchedule, ShiftPhase


def random_amp(rng) -> complex:
    """Unit-disk amplitude, with edge cases (0, -1, axis values) mixed in."""
    pick = rng.integers(6)
    if pick == 0:
        return 0j
    if pick == 1:
        return complex(-rng.random())
    if pick == 2:
        return complex(0, rng.choice([-1, 1]) * rng.random())
    r = np.sqrt(rng.random())
    return complex(r * np.exp(1j * rng.uniform(-np.pi, np.pi)))


def random_schedule(rng, num_qubits: int = 2) -> PulseSchedule:
    """Hand-built schedule mixing encoding, trainable and fixed instructions."""
    ins, t, free = [], 0, {}
    for _ in range(rng.integers(2, 12)):
        q = int(rng.integers(num_qubits))
        tag = ("encoding", "trainable", "fixed")[rng.integers(3)]
        if rng.random() < 0.2:
            ins.append(ShiftPhase(t, rng.uniform(-4, 4), Channel.drive(q), tag=tag))
            continue
        dur = int(rng.integers(4, 200))
        amp = random_amp(rng)
        env = [
            Envelope.gaussian(dur, amp, dur / 4),
            Envelope.drag(dur, amp, dur / 4, rng.normal()),
            Envelope.gaussian_square(dur, amp, max(dur / 10, 1), dur // 2),
            Envelope.constant(dur, amp),
        ][rng.integers(4)]
        ch = Channel.drive(q) if num_qubits < 2 or rng.random() < 0.7 else Channel.control(q, (q + 1) % num_qubits)
        start = max(t, free.get(ch, 0))
        ins.append(Play(start, env, ch, tag=tag))
        free[ch] = start + dur
        t += int(rng.integers(0, dur + 1))
    if not any(isinstance(i, Play) and i.tag == "trainable" for i in ins):
        ins.append(Play(max(free.values(), default=t), Envelope.constant(8, random_amp(rng)), Channel.drive(0), tag="trainable"))
    return PulseSchedule(tuple(ins))


def random_lowered(rng, device, num_qubits: int = 2) -> PulseSchedule:
    """Encoding plus baseline ansatz with random features and ansatz seed, lowered."""
    circ = build_encoding_circuit(rng.random(rng.integers(1, 2 * num_qubits + 1)), num_qubits) + build_vqc_baseline(
        num_qubits, int(rng.integers(1 << 30)), variant=bool(rng.integers(2))
    )
    return lower(circ, device, measure=bool(rng.integers(2)))

"""Build device files: physical parameters plus simulator-calibrated gate templates.

Single-qubit pulses are calibrated by a Rabi amplitude scan. Two-qubit gates
use an echoed cross-resonance block

    CR(+A) on u_ct | X on d_c | CR(-A) on u_ct | X on d_c | RZ corrections | ...

whose complex amplitude ``A`` and virtual-Z corrections are fitted so the
block implements ``exp(+i pi/4 Z_c X_t)``. CX appends ``RX_t(pi/2)`` and
``RZ_c(pi/2)``; CRX(theta) appends ``RX_t(theta/2)``. Flat-top widths are
chosen so each gate has the requested total duration.

Regenerate the shipped files with ``python -m vqp.calibrate``.
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, curve_fit, minimize

from .device import CalibrationEntry, CalibrationTable, Coupling, DeviceModel, save_device_model
from .pulse import Acquire, Channel, Envelope, Play, PulseSchedule, ShiftPhase
from .sim import evolve, propagator

log = logging.getLogger(__name__)

X_DURATION = 160
X_SIGMA = 40.0
CR_SIGMA = 32.0
CR_RISEFALL = 128
MEASURE_DURATION = 4000
MEASURE_AMP = 0.25

DT = 2.0 / 9.0 * 1e-9


@dataclass(frozen=True)
class PhysicalSpec:
    """Hand-picked transmon-scale parameters (stand-ins, not measured values)."""

    name: str
    qubit_freq: tuple
    edges: tuple  # undirected (a, b, g, bus_freq)
    cx_duration: int
    crx_duration: int
    max_drive_rate: float = 0.1
    bus_fock_cutoff: int = 3
    dt: float = DT


# Gate durations reproduce the CX / CRX(pi) lengths reported for the
# corresponding IBM system models; all other numbers are invented.
SPECS = {
    "quito_like": PhysicalSpec(
        "quito_like",
        (5.300, 5.080, 5.322, 5.164, 5.052),
        ((0, 1, 0.02, 6.00), (1, 2, 0.02, 6.05), (1, 3, 0.02, 6.10), (3, 4, 0.02, 6.15)),
        cx_duration=25136,
        crx_duration=26832,
    ),
    "belem_like": PhysicalSpec(
        "belem_like",
        (5.090, 5.250, 5.361, 5.170, 5.258),
        ((0, 1, 0.02, 6.00), (1, 2, 0.02, 6.05), (1, 3, 0.02, 6.10), (3, 4, 0.02, 6.15)),
        cx_duration=27728,
        crx_duration=32016,
    ),
    "jakarta_like": PhysicalSpec(
        "jakarta_like",
        (5.236, 5.014, 5.108, 5.178, 5.285, 5.063, 5.300),
        (
            (0, 1, 0.02, 6.00),
            (1, 2, 0.02, 6.05),
            (1, 3, 0.02, 6.10),
            (3, 5, 0.02, 6.15),
            (4, 5, 0.02, 6.00),
            (5, 6, 0.02, 6.05),
        ),
        cx_duration=25136,
        crx_duration=26832,
    ),
}

DESCRIPTION = (
    "Stand-in device model. CX and CRX(pi) durations match published IBM pulse-simulator "
    "values; qubit/bus frequencies, couplings, drive rate and dt are plausible transmon-scale "
    "values chosen for this package, not measured data. Pulse amplitudes were calibrated "
    "against the vqp simulator (Rabi scan; echoed cross-resonance fit in effective-coupling mode)."
)


def bare_device(spec: PhysicalSpec) -> DeviceModel:
    cmap = tuple(p for a, b, _, _ in spec.edges for p in ((a, b), (b, a)))
    return DeviceModel(
        name=spec.name,
        qubit_freq=tuple(spec.qubit_freq),
        drive_lo_freq=tuple(spec.qubit_freq),
        couplings=tuple(Coupling((a, b), g, wb) for a, b, g, wb in spec.edges),
        coupling_map=cmap,
        dt=spec.dt,
        max_drive_rate=spec.max_drive_rate,
        bus_fock_cutoff=spec.bus_fock_cutoff,
        calibrations=CalibrationTable([]),
        description=DESCRIPTION,
    )


# ---------------------------------------------------------------------------
# single qubit


def x_pulse(amp: complex) -> Envelope:
    return Envelope.drag(X_DURATION, amp, X_SIGMA, beta=0.0)


def rabi_scan(device: DeviceModel, qubit: int, amps=None):
    """Excited-state population vs. drive amplitude, and the fitted pi amplitude.

    Returns:
        (amps, populations, amp_pi)
    """
    if amps is None:
        amps = np.linspace(0.0, 0.8, 33)
    pops = []
    for a in amps:
        s = PulseSchedule((Play(0, x_pulse(a), Channel.drive(qubit)),))
        psi = evolve(s, device, qubits=(qubit,), coupling="effective").final_state
        pops.append(abs(psi[1]) ** 2)
    pops = np.array(pops)

    def model(a, a_pi, scale):
        return scale * (1.0 - np.cos(np.pi * a / a_pi)) / 2.0

    guess = amps[int(np.argmax(pops[: len(pops) // 2 + 1]))] or 0.25
    (a_pi, _), _ = curve_fit(model, amps, pops, p0=[guess, 1.0])
    return amps, pops, float(a_pi)


def single_qubit_entries(device: DeviceModel, qubit: int, amp_pi: float) -> list[CalibrationEntry]:
    d = Channel.drive(qubit)
    note = f"Rabi-scan pi amplitude {amp_pi:.6f}"
    entries = [
        CalibrationEntry("x", (qubit,), 0, PulseSchedule((Play(0, x_pulse(amp_pi), d),)), X_DURATION, note),
        CalibrationEntry("sx", (qubit,), 0, PulseSchedule((Play(0, x_pulse(amp_pi / 2), d),)), X_DURATION, note),
        CalibrationEntry("rx", (qubit,), 1, PulseSchedule((Play(0, x_pulse(amp_pi), d),)), X_DURATION, note),
        CalibrationEntry("ry", (qubit,), 1, PulseSchedule((Play(0, x_pulse(-1j * amp_pi), d),)), X_DURATION, note),
    ]
    rz_channels = [d] + [Channel.control(c, t) for c, t in device.coupling_map if t == qubit]
    rz = PulseSchedule(tuple(ShiftPhase(0, np.pi, ch) for ch in rz_channels))
    entries.append(CalibrationEntry("rz", (qubit,), 1, rz, 0, "virtual Z; phase scales with angle/pi"))
    meas = PulseSchedule(
        (
            Play(0, Envelope.constant(MEASURE_DURATION, MEASURE_AMP), Channel.measure(qubit)),
            Acquire(0, MEASURE_DURATION, Channel.acquire(qubit)),
        )
    )
    entries.append(CalibrationEntry("measure", (qubit,), 0, meas, MEASURE_DURATION))
    return entries


# ---------------------------------------------------------------------------
# cross resonance


def _rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


ZX_TARGET = np.cos(np.pi / 4) * np.eye(4) + 1j * np.sin(np.pi / 4) * np.kron(
    np.diag([1.0, -1.0]), np.array([[0, 1], [1, 0]])
)


def _rz_frames(device: DeviceModel, qubit: int, phase: float, at: int) -> list[ShiftPhase]:
    chans = [Channel.drive(qubit)] + [Channel.control(c, t) for c, t in device.coupling_map if t == qubit]
    return [ShiftPhase(at, phase, ch) for ch in chans]


def echoed_cr(device, control, target, amp: complex, cr_len: int, amp_pi_control: float) -> list:
    u = Channel.control(control, target)
    dc = Channel.drive(control)
    width = cr_len - 2 * CR_RISEFALL
    cr_p = Envelope.gaussian_square(cr_len, amp, CR_SIGMA, width)
    cr_m = Envelope.gaussian_square(cr_len, -amp, CR_SIGMA, width)
    x = x_pulse(amp_pi_control)
    return [
        Play(0, cr_p, u),
        Play(cr_len, x, dc),
        Play(cr_len + X_DURATION, cr_m, u),
        Play(2 * cr_len + X_DURATION, x, dc),
    ]


def _best_frame(u, starts=4):
    """Max fidelity of RZ(zc) x RZ(zt) @ u against the ZX target over (zc, zt)."""

    def infid(z):
        corr = np.kron(_rz(z[0]), _rz(z[1]))
        return 1.0 - abs(np.trace(ZX_TARGET.conj().T @ corr @ u)) ** 2 / 16.0

    best = None
    grid = np.linspace(-np.pi, np.pi, starts + 1)[:-1]
    for zc0 in grid:
        for zt0 in grid:
            r = minimize(infid, [zc0, zt0], method="Nelder-Mead", options={"xatol": 1e-8, "fatol": 1e-12})
            if best is None or r.fun < best.fun:
                best = r
    return best.fun, best.x


def _su2(block):
    return block / np.sqrt(np.linalg.det(block))


_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PY = np.array([[0, -1j], [1j, 0]])


def _target_rotation(u):
    """Angle in [0, pi] and xy-axis phase of the target rotation with control in |0>."""
    m = _su2(u[:2, :2])
    if np.trace(m).real < 0:
        m = -m
    c = min(np.trace(m).real / 2.0, 1.0)
    nx, ny = (1j * np.trace(m @ p) / 2.0 for p in (_PX, _PY))
    return 2.0 * np.arccos(c), float(np.arctan2(ny.real, nx.real))


def _first_crossing(f, grid):
    """Smallest root of ``f`` on ``grid`` bracketed by a sign change, or None."""
    vals = [f(x) for x in grid]
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] < 0:
            return brentq(f, grid[i], grid[i + 1], xtol=1e-10)
    return None


def calibrate_cr(device, control, target, cr_len, amp_pi_control):
    """Fit the echoed-CR amplitude and frame corrections for ZX(-pi/2).

    The magnitude is the first root of ``angle(R0) = pi/2`` (``R0`` is the
    target rotation with the control in ``|0>``); the drive phase is chosen so
    ``R0`` rotates about ``-x``. A local Nelder-Mead pass then polishes both
    against the frame-corrected gate fidelity.

    Returns:
        (amp, zc, zt, infidelity)
    """
    qubits = (control, target)

    def block_u(amp):
        s = PulseSchedule(tuple(echoed_cr(device, control, target, amp, cr_len, amp_pi_control)))
        return propagator(s, device, qubits=qubits, coupling="effective")

    def magnitude(ph):
        grid = np.linspace(0.0, 1.0, 41)
        return _first_crossing(lambda m: _target_rotation(block_u(m * np.exp(1j * ph)))[0] - np.pi / 2, grid)

    mag = magnitude(0.0)
    if mag is None:
        raise RuntimeError(f"CR {control}->{target}: ZX(pi/2) not reachable with |amp| <= 1")
    _, axis = _target_rotation(block_u(mag))
    candidates = []
    for sign in (1.0, -1.0):
        ph = float(np.angle(np.exp(1j * sign * (np.pi - axis))))
        m = magnitude(ph)
        if m is not None:
            candidates.append((_best_frame(block_u(m * np.exp(1j * ph)))[0], m, ph))
    _, mag, ph = min(candidates)

    def cost(p):
        if not 0.0 <= p[0] <= 1.0:
            return 1.0 + abs(p[0])
        return _best_frame(block_u(p[0] * np.exp(1j * p[1])), starts=2)[0]

    simplex = [[mag, ph], [mag * 1.01, ph], [mag, ph + 0.01]]
    opts = {"xatol": 1e-8, "fatol": 1e-12, "maxiter": 200, "initial_simplex": simplex}
    r = minimize(cost, [mag, ph], method="Nelder-Mead", options=opts)
    amp = r.x[0] * np.exp(1j * r.x[1])
    infid, z = _best_frame(block_u(amp))
    zc, zt = np.angle(np.exp(1j * z))
    return complex(amp), float(zc), float(zt), float(infid)


def two_qubit_entries(device, control, target, amp_pi, cx_duration, crx_duration):
    out = []
    dt_ = Channel.drive(target)
    for gate, total in (("cx", cx_duration), ("crx", crx_duration)):
        cr_len = (total - 3 * X_DURATION) // 2
        if 2 * cr_len + 3 * X_DURATION != total:
            raise ValueError(f"{gate} duration {total} not reachable with even CR split")
        amp, zc, zt, infid = calibrate_cr(device, control, target, cr_len, amp_pi[control])
        log.info("%s %s->%s amp=%.5f%+.5fj infid=%.2e", gate, control, target, amp.real, amp.imag, infid)
        t_end = 2 * cr_len + 2 * X_DURATION
        ins = echoed_cr(device, control, target, amp, cr_len, amp_pi[control])
        ins += _rz_frames(device, control, zc, t_end)
        ins += _rz_frames(device, target, zt, t_end)
        ins.append(Play(t_end, x_pulse(amp_pi[target] / 2), dt_))
        if gate == "cx":
            ins += _rz_frames(device, control, np.pi / 2, total)
            params = 0
        else:
            params = 1
        note = f"echoed CR fit infidelity {infid:.2e}"
        out.append(CalibrationEntry(gate, (control, target), params, PulseSchedule(tuple(ins)), total, note))
    return out


def build_device(spec: PhysicalSpec) -> DeviceModel:
    bare = bare_device(spec)
    entries = []
    amp_pi = {}
    for q in range(bare.num_qubits):
        _, _, amp_pi[q] = rabi_scan(bare, q)
        log.info("%s q%d amp_pi=%.6f", spec.name, q, amp_pi[q])
        entries += single_qubit_entries(bare, q, amp_pi[q])
    for c, t in bare.coupling_map:
        entries += two_qubit_entries(bare, c, t, amp_pi, spec.cx_duration, spec.crx_duration)
    return DeviceModel(
        name=bare.name,
        qubit_freq=bare.qubit_freq,
        drive_lo_freq=bare.drive_lo_freq,
        couplings=bare.couplings,
        coupling_map=bare.coupling_map,
        dt=bare.dt,
        max_drive_rate=bare.max_drive_rate,
        bus_fock_cutoff=bare.bus_fock_cutoff,
        calibrations=CalibrationTable(entries),
        description=bare.description,
    )


def main(argv=None):
    parser = argparse.ArgumentParser(description="Regenerate calibrated device files.")
    parser.add_argument("--out", default=str(Path(__file__).parent / "data" / "devices"))
    parser.add_argument("--device", action="append", choices=sorted(SPECS), help="default: all")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.device or sorted(SPECS):
        dev = build_device(SPECS[name])
        save_device_model(dev, out / f"{name}.json")
        log.info("wrote %s", out / f"{name}.json")


if __name__ == "__main__":
    main()

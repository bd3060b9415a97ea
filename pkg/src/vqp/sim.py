"""Pulse-level simulation of transmon-like qubits coupled through bus modes.

The lab-frame Hamiltonian (angular units, time in ns, frequencies in GHz) is

    H = sum_i 2 pi nu_i (1 - Z_i)/2 + sum_e 2 pi w_B a_e^+ a_e
        + sum_e sum_{i in e} 2 pi g_e X_i (a_e + a_e^+)
        + sum_ch 2 pi r D_ch(t) X_q(ch),      D_ch(t) = Re(d_ch(t) exp(i 2 pi w_ch t))

with ``r`` the device ``max_drive_rate``. Drive channels act on their qubit
at that qubit's LO; a control channel ``(c, t)`` acts on ``c`` at ``t``'s LO.
The "effective" coupling mode replaces every bus by the dispersive exchange
``J = g^2/2 (1/(nu_a - w_B) + 1/(nu_b - w_B))`` between the two qubits.

Two propagation paths exist:

* ``frame="rotating"`` (default): drive and coupling terms under the
  rotating-wave approximation. Every term then conserves the total
  excitation number ``N`` except the drives, and a run of samples in which
  every active tone shares one carrier ``w`` has a constant Hamiltonian in
  the frame ``exp(i 2 pi w N t)``. Such runs, including flat tops and idle
  gaps, are exponentiated exactly in a single step.
* ``frame="lab"``: the literal Hamiltonian above, integrated with
  ``lab_substeps`` midpoint sub-steps per sample (idle gaps are exact).

Both return states in the frame rotating at each qubit's LO (and each bus at
its own frequency), so results are directly comparable.

Basis ordering is qubits first (lowest index most significant) followed by
bus modes; measured bitstrings list qubit 0 leftmost.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from .device import DeviceModel
from .exceptions import SimulationError
from .pulse import Channel, Play, PulseSchedule, _render, schedule_duration

TWO_PI = 2.0 * np.pi
_CHUNK = 1024


def mix_drive_signal(samples, lo_freq: float, t_dt, dt: float) -> np.ndarray:
    """Real drive signal ``Re(d(t) exp(i 2 pi lo t))`` at sample times.

    Args:
        samples: complex envelope values ``d`` (scalar or array).
        lo_freq: carrier frequency in GHz.
        t_dt: sample times in units of ``dt``.
        dt: sample period in seconds.
    """
    t_ns = np.asarray(t_dt, dtype=float) * dt * 1e9
    return np.real(np.asarray(samples, dtype=complex) * np.exp(1j * TWO_PI * lo_freq * t_ns))


def effective_exchange(device: DeviceModel, a: int, b: int) -> float:
    """Dispersive qubit-qubit exchange rate (GHz) mediated by the edge's bus."""
    c = device.coupling(a, b)
    da = device.qubit_freq[a] - c.bus_freq
    db = device.qubit_freq[b] - c.bus_freq
    return 0.5 * c.g**2 * (1.0 / da + 1.0 / db)


# ---------------------------------------------------------------------------
# model assembly


def _kron_all(mats):
    return reduce(np.kron, mats)


def _embed(op, pos, dims):
    mats = [np.eye(d, dtype=complex) for d in dims]
    mats[pos] = op
    return _kron_all(mats)


@dataclass
class _Model:
    qubits: tuple
    dims: tuple
    coupling: str
    static_rwa: np.ndarray
    static_lab: np.ndarray
    number: np.ndarray  # diagonal of the total excitation number
    frame_diag: np.ndarray  # diagonal of the output-frame Hamiltonian
    lowering: dict = field(default_factory=dict)  # qubit -> sigma^- on the full space
    xop: dict = field(default_factory=dict)


def _build_model(device: DeviceModel, qubits, coupling: str) -> _Model:
    if coupling not in ("bus", "effective"):
        raise SimulationError(f"coupling must be 'bus' or 'effective', got {coupling!r}")
    qubits = tuple(qubits)
    nq = len(qubits)
    edges = device.couplings_among(qubits)
    buses = edges if coupling == "bus" else []
    dims = (2,) * nq + (device.bus_fock_cutoff,) * len(buses)
    dim = int(np.prod(dims))
    pos = {q: i for i, q in enumerate(qubits)}

    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    num = np.diag([0.0, 1.0]).astype(complex)
    lowering = {q: _embed(sm, pos[q], dims) for q in qubits}
    xop = {q: lowering[q] + lowering[q].conj().T for q in qubits}

    static_rwa = np.zeros((dim, dim), dtype=complex)
    static_lab = np.zeros((dim, dim), dtype=complex)
    number = np.zeros(dim)
    frame = np.zeros(dim)
    for q in qubits:
        nq_op = _embed(num, pos[q], dims)
        static_rwa += TWO_PI * device.qubit_freq[q] * nq_op
        number += np.real(np.diag(nq_op))
        frame += TWO_PI * device.drive_lo_freq[q] * np.real(np.diag(nq_op))
    static_lab += static_rwa

    if coupling == "bus":
        cut = device.bus_fock_cutoff
        a = np.diag(np.sqrt(np.arange(1, cut)), 1).astype(complex)
        for k, c in enumerate(buses):
            ak = _embed(a, nq + k, dims)
            nb = ak.conj().T @ ak
            term = TWO_PI * c.bus_freq * nb
            static_rwa += term
            static_lab += term
            number += np.real(np.diag(nb))
            frame += TWO_PI * c.bus_freq * np.real(np.diag(nb))
            for q in c.edge:
                jc = lowering[q].conj().T @ ak
                static_rwa += TWO_PI * c.g * (jc + jc.conj().T)
                static_lab += TWO_PI * c.g * xop[q] @ (ak + ak.conj().T)
    else:
        for c in edges:
            qa, qb = c.edge
            j = effective_exchange(device, qa, qb)
            ff = lowering[qa].conj().T @ lowering[qb]
            static_rwa += TWO_PI * j * (ff + ff.conj().T)
            static_lab += TWO_PI * j * xop[qa] @ xop[qb]

    return _Model(qubits, dims, coupling, static_rwa, static_lab, number, frame, lowering, xop)


def _sim_channels(schedule: PulseSchedule, device: DeviceModel, qubits) -> list[Channel]:
    qs = set(qubits)
    valid = device.channels()
    played = _played_channels(schedule)
    out = []
    for ch in schedule.channels:
        if ch.kind in ("measure", "acquire"):
            continue
        if ch not in valid:
            raise SimulationError(f"channel {ch.name} does not exist on device {device.name}")
        if not set(ch.qubits) <= qs:
            if ch not in played:
                continue  # frame shift only; nothing to simulate
            raise SimulationError(f"channel {ch.name} acts outside simulated qubits {sorted(qs)}")
        out.append(ch)
    return out


def _played_channels(schedule) -> set:
    return {ins.channel for ins in schedule.instructions if isinstance(ins, Play)}


def _resolve_qubits(schedule, qubits):
    if qubits is None:
        active = _played_channels(schedule) | {ch for ch in schedule.channels if ch.kind == "drive"}
        touched = sorted({q for ch in active if ch.kind not in ("measure", "acquire") for q in ch.qubits})
        return tuple(touched) or (0,)
    qubits = tuple(int(q) for q in qubits)
    if len(set(qubits)) != len(qubits):
        raise SimulationError("duplicate qubits")
    return qubits


def _waveforms(schedule, channels, length, stride):
    if not channels:
        return np.zeros((0, length), dtype=complex)
    w = np.stack([_render(schedule, ch, length) for ch in channels])
    if not np.all(np.isfinite(w)):
        raise SimulationError("non-finite waveform sample")
    if stride > 1 and length:
        # area-preserving block average; constant blocks are unchanged
        pad = (-length) % stride
        wp = np.concatenate([w, np.zeros((w.shape[0], pad), dtype=complex)], axis=1)
        blocks = wp.reshape(w.shape[0], -1, stride)
        counts = np.full(blocks.shape[1], stride)
        if pad:
            counts[-1] = stride - pad
        means = blocks.sum(axis=2) / counts
        w = np.repeat(means, stride, axis=1)[:, :length]
    return w


def _runs(w):
    """Start/stop indices of maximal runs of identical sample columns."""
    length = w.shape[1]
    if length == 0:
        return np.zeros(0, int), np.zeros(0, int)
    if w.shape[0]:
        change = np.any(w[:, 1:] != w[:, :-1], axis=0)
        starts = np.concatenate([[0], np.nonzero(change)[0] + 1])
    else:
        starts = np.array([0])
    stops = np.concatenate([starts[1:], [length]])
    return starts, stops


# ---------------------------------------------------------------------------
# rotating-frame (RWA) stepping


def _rotating_steps(w, los, starts, stops):
    """Expand runs into steps ``(k0, k1, w, values, t_mid_offsets)``.

    Returns arrays: step start/stop sample, frame frequency, per-channel
    complex values (already including the residual carrier phase factor at
    the step midpoint, relative to sample 0).
    """
    nch = w.shape[0]
    vals = w[:, starts].T if nch else np.zeros((len(starts), 0), complex)
    active = np.abs(vals) > 0
    if nch:
        lo_mat = np.where(active, los[None, :], np.nan)
        with np.errstate(all="ignore"):
            fmax = np.nanmax(np.where(active, lo_mat, -np.inf), axis=1)
            fmin = np.nanmin(np.where(active, lo_mat, np.inf), axis=1)
        any_active = active.any(axis=1)
        single = ~any_active | (fmax == fmin)
        first = np.argmax(active, axis=1)
        frame_w = np.where(any_active, los[first], 0.0)
    else:
        single = np.ones(len(starts), bool)
        frame_w = np.zeros(len(starts))

    k0_list, k1_list, w_list, v_list = [], [], [], []
    multi_samples = []
    for i in np.nonzero(~single)[0]:
        multi_samples.append(np.arange(starts[i], stops[i]))
    # single-tone runs: one exact step each
    idx = np.nonzero(single)[0]
    k0_list.append(starts[idx])
    k1_list.append(stops[idx])
    w_list.append(frame_w[idx])
    v_list.append(vals[idx])
    residual = [np.zeros((len(idx), nch))]
    if multi_samples:
        ks = np.concatenate(multi_samples)
        k0_list.append(ks)
        k1_list.append(ks + 1)
        run_of = np.searchsorted(starts, ks, side="right") - 1
        fw = frame_w[run_of]
        w_list.append(fw)
        v_list.append(w[:, ks].T)
        # carrier offset of each channel relative to the step frame, at mid-sample
        residual.append(los[None, :] - fw[:, None])
    k0 = np.concatenate(k0_list)
    order = np.argsort(k0, kind="stable")
    k1 = np.concatenate(k1_list)[order]
    fw = np.concatenate(w_list)[order]
    v = np.concatenate(v_list)[order]
    res = np.concatenate(residual)[order]
    return k0[order], k1, fw, v, res


def _step_unitaries_rotating(model, dev, channels, k0, k1, fw, vals, res, t0):
    """Yield lab-RWA-frame step unitaries chunk by chunk."""
    dt = dev.dt_ns
    rate = dev.max_drive_rate
    low = np.stack([model.lowering[ch.qubit] for ch in channels]) if channels else None
    ndiag = model.number
    for s in range(0, len(k0), _CHUNK):
        sl = slice(s, s + _CHUNK)
        a0 = (k0[sl] + t0) * dt
        a1 = (k1[sl] + t0) * dt
        w = fw[sl]
        h = np.broadcast_to(model.static_rwa, (len(a0),) + model.static_rwa.shape).copy()
        h -= (TWO_PI * w)[:, None, None] * np.diag(ndiag)[None]
        if channels:
            tmid = 0.5 * (a0 + a1)
            coef = np.pi * rate * vals[sl] * np.exp(1j * TWO_PI * res[sl] * tmid[:, None])
            drive = np.einsum("sc,cij->sij", coef, low)
            h += drive + np.conj(np.swapaxes(drive, 1, 2))
        e, v = np.linalg.eigh(h)
        phase = np.exp(-1j * e * (a1 - a0)[:, None])
        u = (v * phase[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
        left = np.exp(-1j * TWO_PI * np.outer(w * a1, ndiag))
        right = np.exp(1j * TWO_PI * np.outer(w * a0, ndiag))
        yield left[:, :, None] * u * right[:, None, :], k1[sl]


def _step_unitaries_lab(model, dev, channels, w, starts, stops, t0, substeps):
    dt = dev.dt_ns
    rate = dev.max_drive_rate
    los = np.array([dev.channel_lo(ch) for ch in channels])
    xs = np.stack([model.xop[ch.qubit] for ch in channels]) if channels else None
    e_static, v_static = np.linalg.eigh(model.static_lab)

    def static_step(a0, a1):
        return (v_static * np.exp(-1j * e_static * (a1 - a0))) @ v_static.conj().T

    for k0, k1 in zip(starts, stops):
        vals = w[:, k0] if channels else np.zeros(0)
        if not np.any(vals):
            yield static_step((k0 + t0) * dt, (k1 + t0) * dt)[None], np.array([k1])
            continue
        ks = np.arange(k0, k1)
        for c0 in range(0, len(ks), max(1, _CHUNK // substeps)):
            kk = ks[c0 : c0 + max(1, _CHUNK // substeps)]
            h_sub = dt / substeps
            tm = ((kk[:, None] + t0) * dt + (np.arange(substeps)[None, :] + 0.5) * h_sub).ravel()
            d = np.repeat(w[:, kk], substeps, axis=1)  # (nch, S)
            sig = np.real(d * np.exp(1j * TWO_PI * los[:, None] * tm[None, :]))
            h = model.static_lab[None] + TWO_PI * rate * np.einsum("cs,cij->sij", sig, xs)
            e, v = np.linalg.eigh(h)
            u = (v * np.exp(-1j * e * h_sub)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
            # a sample ends after its last sub-step
            yield u, np.where((np.arange(len(u)) + 1) % substeps == 0, np.repeat(kk + 1, substeps), -1)


def _steps(schedule, device, model, channels, frame, t0, stride, substeps):
    length = schedule_duration(schedule)
    w = _waveforms(schedule, channels, length, stride)
    starts, stops = _runs(w)
    if frame == "rotating":
        los = np.array([device.channel_lo(ch) for ch in channels]) if channels else np.zeros(0)
        k0, k1, fw, vals, res = _rotating_steps(w, los, starts, stops)
        return _step_unitaries_rotating(model, device, channels, k0, k1, fw, vals, res, t0), length
    if frame == "lab":
        return _step_unitaries_lab(model, device, channels, w, starts, stops, t0, substeps), length
    raise SimulationError(f"frame must be 'rotating' or 'lab', got {frame!r}")


# ---------------------------------------------------------------------------
# public api


@dataclass(frozen=True)
class SimResult:
    """Outcome of a simulation.

    ``final_state`` lives on the qubit (x) bus space described by ``dims``;
    ``counts``/``z_expectation`` are filled in by :meth:`measured`.
    """

    final_state: np.ndarray
    qubits: tuple
    dims: tuple
    counts: dict | None = None
    z_expectation: tuple | None = None
    shots: int | None = None

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    def probabilities(self) -> np.ndarray:
        return probabilities(self.final_state, self.num_qubits)

    def measured(self, shots: int, rng_seed) -> "SimResult":
        counts = measure(self.final_state, shots, rng_seed, num_qubits=self.num_qubits)
        z = tuple(z_expectation(counts, i) for i in range(self.num_qubits))
        return replace(self, counts=counts, z_expectation=z, shots=shots)


def _ground_state(dim):
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0
    return psi


def _prepare_initial(initial, model):
    dim = int(np.prod(model.dims))
    if initial is None:
        return _ground_state(dim)
    psi = np.asarray(initial, dtype=complex).reshape(-1)
    nq_dim = 2 ** len(model.qubits)
    if psi.size == nq_dim and dim != nq_dim:
        vac = _ground_state(dim // nq_dim)
        psi = np.kron(psi, vac)
    if psi.size != dim:
        raise SimulationError(f"initial state has dimension {psi.size}, expected {dim} (or {nq_dim})")
    norm = np.linalg.norm(psi)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
        raise SimulationError(f"initial state must be normalized, got norm {norm}")
    return psi


def evolve(
    schedule: PulseSchedule,
    device: DeviceModel,
    initial=None,
    *,
    qubits=None,
    coupling: str = "bus",
    frame: str = "rotating",
    t0: int = 0,
    stride: int = 1,
    lab_substeps: int = 64,
    trajectory=None,
) -> SimResult:
    """Propagate a state through ``schedule``.

    Args:
        schedule: pulses to apply. Measure/acquire instructions are ignored.
        device: physical model.
        initial: state at ``t0`` in the rotating frame; qubit-only vectors are
            padded with the bus vacuum. Defaults to the ground state.
        qubits: qubits to simulate (default: those the schedule touches).
        coupling: ``"bus"`` (explicit bus modes) or ``"effective"``.
        frame: ``"rotating"`` (RWA, fast) or ``"lab"`` (literal Hamiltonian).
        t0: absolute start time of the schedule in dt; carriers depend on it.
        stride: block-average waveforms over this many samples; 1 is exact
            for piecewise-constant envelopes, larger values trade accuracy on
            shaped edges for fewer steps.
        lab_substeps: sub-steps per sample on the lab-frame path.
        trajectory: optional CSV path; the rotating-frame state after every
            propagation step is written there (debugging aid).

    Returns:
        SimResult with ``final_state`` in the rotating frame.
    """
    if stride < 1:
        raise SimulationError("stride must be >= 1")
    qubits = _resolve_qubits(schedule, qubits)
    model = _build_model(device, qubits, coupling)
    channels = _sim_channels(schedule, device, qubits)
    psi = _prepare_initial(initial, model)
    dt = device.dt_ns
    # rotating -> lab at t0
    psi = np.exp(-1j * model.frame_diag * t0 * dt) * psi
    steps, length = _steps(schedule, device, model, channels, frame, t0, stride, lab_substeps)
    rows = [] if trajectory is not None else None
    for chunk, ends in steps:
        for u, end in zip(chunk, ends):
            psi = u @ psi
            if rows is not None and end >= 0:
                rows.append((t0 + end, np.exp(1j * model.frame_diag * (t0 + end) * dt) * psi))
    psi = np.exp(1j * model.frame_diag * (t0 + length) * dt) * psi
    if rows is not None:
        _write_trajectory(trajectory, rows, model.dims)
    return SimResult(psi, qubits, model.dims)


def _write_trajectory(path, rows, dims):
    labels = ["".join(map(str, idx)) for idx in np.ndindex(*dims)]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t_dt"] + [f"{part}_{b}" for b in labels for part in ("re", "im")])
        for t, psi in rows:
            out.writerow([int(t)] + [repr(float(x)) for z in psi for x in (z.real, z.imag)])


def propagator(
    schedule: PulseSchedule,
    device: DeviceModel,
    *,
    qubits=None,
    coupling: str = "bus",
    frame: str = "rotating",
    t0: int = 0,
    stride: int = 1,
    lab_substeps: int = 64,
) -> np.ndarray:
    """Full unitary of ``schedule`` (rotating frame in and out); see :func:`evolve`."""
    if stride < 1:
        raise SimulationError("stride must be >= 1")
    qubits = _resolve_qubits(schedule, qubits)
    model = _build_model(device, qubits, coupling)
    channels = _sim_channels(schedule, device, qubits)
    dt = device.dt_ns
    dim = int(np.prod(model.dims))
    u_tot = np.diag(np.exp(-1j * model.frame_diag * t0 * dt))
    steps, length = _steps(schedule, device, model, channels, frame, t0, stride, lab_substeps)
    for chunk, _ in steps:
        for u in chunk:
            u_tot = u @ u_tot
    u_tot = np.exp(1j * model.frame_diag * (t0 + length) * dt)[:, None] * u_tot
    assert u_tot.shape == (dim, dim)
    return u_tot


def hilbert_dims(device: DeviceModel, qubits, coupling: str = "bus") -> tuple:
    return _build_model(device, tuple(qubits), coupling).dims


def hamiltonian(
    schedule: PulseSchedule,
    device: DeviceModel,
    t_dt: float,
    *,
    qubits=None,
    coupling: str = "bus",
    frame: str = "lab",
) -> np.ndarray:
    """Assembled Hamiltonian (rad/ns) at time ``t_dt`` (in dt, may be fractional).

    ``frame="lab"`` gives the literal lab-frame operator; ``"rotating"`` the
    RWA operator expressed in the rotating output frame.
    """
    qubits = _resolve_qubits(schedule, qubits)
    model = _build_model(device, qubits, coupling)
    channels = _sim_channels(schedule, device, qubits)
    length = schedule_duration(schedule)
    k = int(np.floor(t_dt))
    t = t_dt * device.dt_ns
    vals = [(_render(schedule, ch, length)[k] if 0 <= k < length else 0.0) for ch in channels]
    rate = device.max_drive_rate
    if frame == "lab":
        h = model.static_lab.copy()
        for ch, d in zip(channels, vals):
            h += TWO_PI * rate * mix_drive_signal(d, device.channel_lo(ch), t_dt, device.dt) * model.xop[ch.qubit]
        return h
    if frame == "rotating":
        h = model.static_rwa.copy()
        for ch, d in zip(channels, vals):
            term = np.pi * rate * d * np.exp(1j * TWO_PI * device.channel_lo(ch) * t) * model.lowering[ch.qubit]
            h += term + term.conj().T
        f = np.exp(1j * model.frame_diag * t)
        return f[:, None] * h * f.conj()[None, :] - np.diag(model.frame_diag)
    raise SimulationError(f"unknown frame {frame!r}")


# ---------------------------------------------------------------------------
# measurement


def probabilities(state, num_qubits: int | None = None) -> np.ndarray:
    """Computational-basis probabilities of the qubits, bus modes traced out."""
    psi = np.asarray(state)
    p = np.abs(psi) ** 2
    if num_qubits is None:
        num_qubits = int(round(np.log2(p.size)))
    p = p.reshape(2**num_qubits, -1).sum(axis=1)
    return p / p.sum()


def measure(state, shots: int, rng_seed, num_qubits: int | None = None) -> dict:
    """Sample ``shots`` projective measurements; keys are bitstrings, qubit 0 first.

    ``rng_seed`` may be an int, a sequence of ints, or a
    ``numpy.random.Generator`` (which is then advanced).
    """
    if shots < 1:
        raise SimulationError("shots must be >= 1")
    p = probabilities(state, num_qubits)
    n = int(round(np.log2(p.size)))
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    draws = rng.multinomial(shots, p)
    return {format(i, f"0{n}b"): int(c) for i, c in enumerate(draws) if c}


def z_expectation(counts: dict, qubit: int = 0) -> float:
    """``(n0 - n1) / shots`` for one qubit's marginal.

    Keys may be bitstrings (qubit 0 leftmost) or, for one-qubit counts, the
    integers 0/1.
    """
    if not counts:
        raise SimulationError("empty counts")
    n0 = n1 = 0
    for key, c in counts.items():
        bits = format(key, "b") if isinstance(key, (int, np.integer)) else str(key)
        if isinstance(key, (int, np.integer)) and key not in (0, 1):
            raise SimulationError("integer count keys are only valid for a single qubit")
        if bits[qubit] == "0":
            n0 += c
        else:
            n1 += c
    return (n0 * 1 + n1 * (-1)) / (n0 + n1)


def z_expectation_exact(state, qubit: int, num_qubits: int) -> float:
    p = probabilities(state, num_qubits).reshape((2,) * num_qubits)
    marg = np.moveaxis(p, qubit, 0).reshape(2, -1).sum(axis=1)
    return float(marg[0] - marg[1])

"""Gate circuits, the encoding/ansatz builders, and lowering to pulse schedules.

Lowering is a lookup into the device calibration table followed by strictly
sequential concatenation. Rotation angles bind linearly to the calibrated
amplitudes (``theta/pi`` times the pi-rotation amplitude), so every pulse keeps
its calibrated duration and shape. ``rz`` is virtual: a phase shift on the
qubit's drive channel and on every control channel whose tone targets it.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .device import DeviceModel, lookup_calibration
from .exceptions import CircuitError
from .pulse import Play, PulseSchedule, concat_all

ARITY = {"rx": 1, "ry": 1, "rz": 1, "u3": 3, "cx": 0, "crx": 1, "cu3": 3}
NUM_QUBITS = {"rx": 1, "ry": 1, "rz": 1, "u3": 1, "cx": 2, "crx": 2, "cu3": 2}
SEGMENTS = ("encoding", "trainable")
ENCODING_LAYERS = ("ry", "rz", "rx", "ry")

# CU3 wiring of the baseline ansatz; valid on every shipped device.
BASELINE_EDGES = ((0, 1), (1, 2), (1, 3))


@dataclass(frozen=True)
class Gate:
    name: str
    qubits: tuple
    angles: tuple = ()
    segment: str = "trainable"

    def __post_init__(self):
        name = self.name.lower()
        if name not in ARITY:
            raise CircuitError(f"unsupported gate {self.name!r}; expected one of {sorted(ARITY)}")
        object.__setattr__(self, "name", name)
        qubits = tuple(int(q) for q in self.qubits)
        if len(qubits) != NUM_QUBITS[name]:
            raise CircuitError(f"{name} acts on {NUM_QUBITS[name]} qubit(s), got {qubits}")
        if len(set(qubits)) != len(qubits):
            raise CircuitError(f"{name} qubits must be distinct, got {qubits}")
        object.__setattr__(self, "qubits", qubits)
        angles = tuple(float(a) for a in self.angles)
        if len(angles) != ARITY[name]:
            raise CircuitError(f"{name} takes {ARITY[name]} angle(s), got {len(angles)}")
        object.__setattr__(self, "angles", angles)
        if self.segment not in SEGMENTS:
            raise CircuitError(f"segment must be one of {SEGMENTS}")


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.num_qubits < 1:
            raise CircuitError("num_qubits must be >= 1")
        seen_trainable = False
        for g in self.gates:
            if any(q >= self.num_qubits for q in g.qubits):
                raise CircuitError(f"gate {g.name}{list(g.qubits)} outside {self.num_qubits} qubits")
            if g.segment == "trainable":
                seen_trainable = True
            elif seen_trainable:
                raise CircuitError("encoding gates must precede trainable gates")

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(max(self.num_qubits, other.num_qubits), self.gates + other.gates)

    def __len__(self):
        return len(self.gates)

    def angles(self) -> np.ndarray:
        return np.array([a for g in self.gates for a in g.angles], dtype=float)

    def with_angles(self, angles) -> "Circuit":
        angles = list(np.asarray(angles, dtype=float))
        if len(angles) != sum(len(g.angles) for g in self.gates):
            raise CircuitError("angle vector length does not match circuit")
        gates = []
        for g in self.gates:
            k = len(g.angles)
            gates.append(dataclasses.replace(g, angles=tuple(angles[:k])))
            angles = angles[k:]
        return Circuit(self.num_qubits, tuple(gates))

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "gates": [
                {"name": g.name, "qubits": list(g.qubits), "angles": list(g.angles), "segment": g.segment}
                for g in self.gates
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        gates = [Gate(g["name"], g["qubits"], g.get("angles", ()), g.get("segment", "trainable")) for g in d["gates"]]
        return cls(int(d["num_qubits"]), tuple(gates))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Circuit":
        data = json.loads(Path(path).read_text())
        if isinstance(data, list):  # bare gate list
            n = 1 + max(q for g in data for q in g["qubits"])
            data = {"num_qubits": n, "gates": data}
        return cls.from_dict(data)


def build_encoding_circuit(features, num_qubits: int | None = None) -> Circuit:
    """Encode features in [0, 1] as rotation angles ``pi * f``.

    Features fill layers of ``ry, rz, rx, ry`` rotations, one per qubit per
    layer: 2 features on 2 qubits give two RY gates; 16 features (a 4x4
    image) on 4 qubits give four layers.
    """
    f = np.asarray(features, dtype=float).ravel()
    if num_qubits is None:
        num_qubits = max(1, min(len(f), 4))
    slots = num_qubits * len(ENCODING_LAYERS)
    if len(f) > slots:
        raise CircuitError(f"{len(f)} features exceed {slots} rotation slots on {num_qubits} qubits")
    if np.any((f < 0) | (f > 1)) or not np.all(np.isfinite(f)):
        raise CircuitError("features must lie in [0, 1]")
    gates = []
    for k, v in enumerate(f):
        layer, q = divmod(k, num_qubits)
        gates.append(Gate(ENCODING_LAYERS[layer], (q,), (np.pi * v,), segment="encoding"))
    return Circuit(num_qubits, tuple(gates))


def baseline_layout(num_qubits: int, num_gates: int = 9, edges=None) -> list[tuple[str, tuple]]:
    """Gate names and wires of the alternating U3/CU3 ansatz."""
    if num_qubits < 2:
        raise CircuitError("baseline ansatz needs at least 2 qubits")
    if edges is None:
        edges = [e for e in BASELINE_EDGES if max(e) < num_qubits]
        if max(q for e in edges for q in e) < num_qubits - 1:
            raise CircuitError(f"no canonical CU3 wiring for {num_qubits} qubits; pass edges=")
    edges = [tuple(e) for e in edges]
    layout = []
    n_u3 = n_cu3 = 0
    for k in range(num_gates):
        if k % 2 == 0:
            layout.append(("u3", (n_u3 % num_qubits,)))
            n_u3 += 1
        else:
            edge = edges[n_cu3 % len(edges)]
            if (n_cu3 // len(edges)) % 2:
                edge = edge[::-1]
            layout.append(("cu3", edge))
            n_cu3 += 1
    return layout


def build_vqc_baseline(num_qubits: int, seed: int, variant: bool = False, edges=None) -> Circuit:
    """Random alternating U3/CU3 trainable circuit: 9 gates, or 12 with ``variant``.

    Angles are uniform in [-pi, pi) from ``numpy.random.default_rng(seed)``.
    """
    rng = np.random.default_rng(seed)
    layout = baseline_layout(num_qubits, 12 if variant else 9, edges)
    gates = [Gate(name, qs, tuple(rng.uniform(-np.pi, np.pi, ARITY[name])), "trainable") for name, qs in layout]
    return Circuit(num_qubits, tuple(gates))


# ---------------------------------------------------------------------------
# decomposition into calibrated primitives


def _wrap(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = (theta + np.pi) % (2 * np.pi) - np.pi
    return np.pi if w == -np.pi else w


def _u3_ops(theta, phi, lam, q):
    # U3 = RZ(phi) RX(-pi/2) RZ(theta) RX(pi/2) RZ(lam), rightmost first
    return [("rz", (q,), lam), ("sx", (q,), 1.0), ("rz", (q,), theta), ("sx", (q,), -1.0), ("rz", (q,), phi)]


def decompose(gate: Gate) -> list[tuple]:
    """Primitive ops ``(kind, qubits, value)`` with kind in rx/ry/rz/sx/cx/crx.

    For rotations ``value`` is the angle; for ``sx`` it is a signed amplitude
    scale (``-1`` gives RX(-pi/2)).
    """
    name, qs, a = gate.name, gate.qubits, gate.angles
    if name in ("rx", "ry", "rz", "crx"):
        return [(name, qs, a[0])]
    if name == "cx":
        return [("cx", qs, None)]
    if name == "u3":
        return _u3_ops(*a, qs[0])
    if name == "cu3":
        theta, phi, lam = a
        c, t = qs
        return (
            [("rz", (c,), (lam + phi) / 2), ("rz", (t,), (lam - phi) / 2), ("cx", qs, None)]
            + _u3_ops(-theta / 2, 0.0, -(phi + lam) / 2, t)
            + [("cx", qs, None)]
            + _u3_ops(theta / 2, phi, 0.0, t)
        )
    raise CircuitError(f"cannot decompose {name}")  # pragma: no cover


def _bind(kind, qubits, value, device: DeviceModel) -> PulseSchedule:
    entry = lookup_calibration(device.calibrations, kind, qubits)
    tpl = entry.template.instructions
    if kind == "rz":
        scale = value / np.pi
        return PulseSchedule(tuple(dataclasses.replace(i, phase=i.phase * scale) for i in tpl))
    if kind in ("rx", "ry"):
        scale = _wrap(value) / np.pi
    elif kind == "sx":
        scale = value
    elif kind == "crx":
        scale = _wrap(value) / np.pi
    else:
        return entry.template
    out = []
    for ins in tpl:
        if isinstance(ins, Play) and _angle_bound(kind, ins, qubits):
            ins = dataclasses.replace(ins, envelope=ins.envelope.with_amp(ins.envelope.amp * scale))
        out.append(ins)
    return PulseSchedule(tuple(out))


def _angle_bound(kind, play: Play, qubits) -> bool:
    if kind != "crx":
        return True
    # CR tones and the target rotation scale; the control echo pulses do not
    return play.channel.kind == "control" or play.channel.qubits == (qubits[1],)


def lower(circuit: Circuit, device: DeviceModel, *, measure: bool = False, name: str = "") -> PulseSchedule:
    """Compile ``circuit`` to a pulse schedule on ``device``.

    Every play inherits its source gate's segment tag (``encoding`` or
    ``trainable``) and records the gate index in ``Play.gate``. With
    ``measure=True`` the calibrated measurement of every qubit is appended
    (tagged ``fixed``).
    """
    parts = []
    for index, gate in enumerate(circuit.gates):
        for kind, qubits, value in decompose(gate):
            sched = _bind(kind, qubits, value, device)
            parts.append(
                sched.replace(
                    dataclasses.replace(ins, tag=gate.segment, gate=index) for ins in sched.instructions
                )
            )
    if measure:
        meas = [lookup_calibration(device.calibrations, "measure", (q,)).template for q in range(circuit.num_qubits)]
        merged = PulseSchedule(tuple(i for m in meas for i in m.instructions))
        parts.append(merged)
    out = concat_all(parts)
    return PulseSchedule(out.instructions, name=name, device=device.name)


# ---------------------------------------------------------------------------
# ideal unitaries (qubit 0 is the most significant tensor factor)


def rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def u3(theta, phi, lam):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -np.exp(1j * lam) * s], [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c]])


def _controlled(u):
    out = np.eye(4, dtype=complex)
    out[2:, 2:] = u
    return out


def gate_matrix(gate: Gate) -> np.ndarray:
    """Unitary on the gate's own qubits (control first)."""
    a = gate.angles
    return {
        "rx": lambda: rx(*a),
        "ry": lambda: ry(*a),
        "rz": lambda: rz(*a),
        "u3": lambda: u3(*a),
        "cx": lambda: _controlled(np.array([[0, 1], [1, 0]], dtype=complex)),
        "crx": lambda: _controlled(rx(*a)),
        "cu3": lambda: _controlled(u3(*a)),
    }[gate.name]()


def _apply(op, qubits, n):
    k = len(qubits)
    state_axes = list(qubits) + [q for q in range(n) if q not in qubits]
    perm = np.argsort(state_axes)
    full = op.reshape((2,) * (2 * k))
    eye = np.eye(2 ** (n - k)).reshape((2,) * (2 * (n - k)))
    big = np.tensordot(full, eye, axes=0)  # out_k, in_k, out_r, in_r
    axes_out = list(range(k)) + list(range(2 * k, 2 * k + n - k))
    axes_in = list(range(k, 2 * k)) + list(range(2 * k + n - k, 2 * n))
    big = big.transpose(axes_out + axes_in).reshape((2,) * (2 * n))
    big = big.transpose(list(perm) + [n + p for p in perm])
    return big.reshape(2**n, 2**n)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.num_qubits
    u = np.eye(2**n, dtype=complex)
    for g in circuit.gates:
        u = _apply(gate_matrix(g), g.qubits, n) @ u
    return u

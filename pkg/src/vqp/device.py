"""Device models: Hamiltonian parameters, channel topology and gate calibrations.

A device file is JSON (see ``docs/device_format.md``)::

    {
      "name": "quito_like",
      "dt": 2.2222222222222221e-10,          # seconds
      "max_drive_rate": 0.1,                 # GHz of Rabi rate at |amp| = 1
      "bus_fock_cutoff": 3,
      "qubits": [{"freq": 5.30, "drive_lo_freq": 5.30}, ...],     # GHz
      "couplings": [{"edge": [0, 1], "g": 0.02, "bus_freq": 6.0}],  # GHz
      "coupling_map": [[0, 1], [1, 0], ...],
      "calibrations": [{"gate": "cx", "qubits": [0, 1], "params": 0,
                        "duration": 25136, "instructions": [...]}]
    }

Frequencies are ordinary (not angular) frequencies in GHz.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import jsonschema

from .exceptions import DeviceFileError, InvariantError, UnsupportedGateError
from .pulse import (
    Channel,
    PulseSchedule,
    instruction_from_dict,
    instruction_to_dict,
    schedule_duration,
)

SHIPPED_DEVICES = ("quito_like", "belem_like", "jakarta_like")


@dataclass(frozen=True)
class Coupling:
    edge: tuple
    g: float
    bus_freq: float


@dataclass(frozen=True)
class CalibrationEntry:
    gate_name: str
    qubit_args: tuple
    param_arity: int
    template: PulseSchedule
    duration_dt: int
    note: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "qubit_args", tuple(int(q) for q in self.qubit_args))
        actual = schedule_duration(self.template)
        if actual != self.duration_dt:
            raise InvariantError(
                f"calibrations[{self.gate_name}{list(self.qubit_args)}].duration",
                f"declared {self.duration_dt} dt but template ends at {actual} dt",
            )


class CalibrationTable(Mapping):
    """Read-only map ``(gate_name, qubit_args) -> CalibrationEntry``."""

    def __init__(self, entries):
        table = {}
        for e in entries:
            key = (e.gate_name, e.qubit_args)
            if key in table:
                raise InvariantError("calibrations", f"duplicate entry for {e.gate_name}{list(e.qubit_args)}")
            table[key] = e
        self._entries = MappingProxyType(table)

    def __getitem__(self, key):
        return self._entries[key]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        return isinstance(other, CalibrationTable) and dict(self._entries) == dict(other._entries)

    def __hash__(self):
        return hash(tuple(sorted(self._entries)))

    def __repr__(self):
        return f"CalibrationTable({len(self)} entries)"

    def supported(self) -> list[tuple[str, tuple]]:
        return sorted(self._entries)


def lookup_calibration(table: CalibrationTable, gate_name: str, qubit_args) -> CalibrationEntry:
    """Return the calibration for ``gate_name`` on ``qubit_args``.

    Raises:
        UnsupportedGateError: if the gate is not calibrated on those qubits;
            the message lists every supported ``(gate, qubits)`` pair.
    """
    key = (gate_name.lower(), tuple(int(q) for q in qubit_args))
    try:
        return table[key]
    except KeyError:
        raise UnsupportedGateError(gate_name, key[1], table.supported()) from None


@dataclass(frozen=True)
class DeviceModel:
    name: str
    qubit_freq: tuple
    drive_lo_freq: tuple
    couplings: tuple
    coupling_map: tuple
    dt: float
    max_drive_rate: float
    bus_fock_cutoff: int
    calibrations: CalibrationTable
    description: str = field(default="", compare=False)

    def __post_init__(self):
        _check_invariants(self)

    @property
    def num_qubits(self) -> int:
        return len(self.qubit_freq)

    @property
    def dt_ns(self) -> float:
        return self.dt * 1e9

    def coupling(self, a: int, b: int) -> Coupling:
        key = tuple(sorted((a, b)))
        for c in self.couplings:
            if tuple(sorted(c.edge)) == key:
                return c
        raise KeyError(f"no coupling between qubits {a} and {b}")

    def couplings_among(self, qubits) -> list[Coupling]:
        qs = set(qubits)
        return [c for c in self.couplings if set(c.edge) <= qs]

    def channels(self) -> frozenset:
        chans = set()
        for q in range(self.num_qubits):
            chans.update((Channel.drive(q), Channel.measure(q), Channel.acquire(q)))
        for c, t in self.coupling_map:
            chans.add(Channel.control(c, t))
        return frozenset(chans)

    def channel_lo(self, channel: Channel) -> float:
        """Carrier frequency (GHz) of a channel in the lab frame.

        Drive channels use their qubit's LO. A control channel ``(c, t)``
        drives the control qubit at the target's LO, i.e. it is offset by
        ``w_t - w_c`` from the control qubit's own frame.
        """
        if channel.kind == "drive":
            return self.drive_lo_freq[channel.qubits[0]]
        if channel.kind == "control":
            return self.drive_lo_freq[channel.qubits[1]]
        raise ValueError(f"{channel.name} carries no drive tone")

    def lookup(self, gate_name: str, qubit_args) -> CalibrationEntry:
        return lookup_calibration(self.calibrations, gate_name, qubit_args)


def _check_invariants(dev: DeviceModel) -> None:
    n = len(dev.qubit_freq)
    if n < 1:
        raise InvariantError("qubits", "need at least one qubit")
    if len(dev.drive_lo_freq) != n:
        raise InvariantError("qubits.drive_lo_freq", "one LO frequency per qubit required")
    for i, (f, lo) in enumerate(zip(dev.qubit_freq, dev.drive_lo_freq)):
        if not (math.isfinite(f) and f > 0):
            raise InvariantError(f"qubits[{i}].freq", f"must be > 0, got {f}")
        if not (math.isfinite(lo) and lo > 0):
            raise InvariantError(f"qubits[{i}].drive_lo_freq", f"must be > 0, got {lo}")
    if not (math.isfinite(dev.dt) and dev.dt > 0):
        raise InvariantError("dt", f"must be > 0, got {dev.dt}")
    if not (math.isfinite(dev.max_drive_rate) and dev.max_drive_rate > 0):
        raise InvariantError("max_drive_rate", f"must be > 0, got {dev.max_drive_rate}")
    if dev.bus_fock_cutoff < 2:
        raise InvariantError("bus_fock_cutoff", f"must be >= 2, got {dev.bus_fock_cutoff}")
    cmap = set()
    for k, (a, b) in enumerate(dev.coupling_map):
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise InvariantError(f"coupling_map[{k}]", f"invalid pair {[a, b]}")
        cmap.add((a, b))
    seen = set()
    for k, c in enumerate(dev.couplings):
        a, b = c.edge
        if not (0 <= a < n and 0 <= b < n) or a == b:
            raise InvariantError(f"couplings[{k}].edge", f"invalid edge {[a, b]}")
        if (a, b) not in cmap and (b, a) not in cmap:
            raise InvariantError(f"couplings[{k}].edge", f"edge {[a, b]} missing from coupling_map")
        key = tuple(sorted(c.edge))
        if key in seen:
            raise InvariantError(f"couplings[{k}].edge", f"duplicate edge {[a, b]}")
        seen.add(key)
        if not (math.isfinite(c.g) and c.g > 0):
            raise InvariantError(f"couplings[{k}].g", f"must be > 0, got {c.g}")
        if not (math.isfinite(c.bus_freq) and c.bus_freq > 0):
            raise InvariantError(f"couplings[{k}].bus_freq", f"must be > 0, got {c.bus_freq}")
    valid = dev.channels()
    for (gate, qubits), entry in dev.calibrations.items():
        for q in qubits:
            if not 0 <= q < n:
                raise InvariantError(f"calibrations[{gate}{list(qubits)}].qubits", f"qubit {q} out of range")
        for ins in entry.template.instructions:
            if ins.channel not in valid:
                raise InvariantError(
                    f"calibrations[{gate}{list(qubits)}].instructions",
                    f"channel {ins.channel.name} does not exist on this device",
                )
        if gate == "rz" and entry.duration_dt != 0:
            raise InvariantError(f"calibrations[rz{list(qubits)}].duration", "virtual-Z must take 0 dt")


# ---------------------------------------------------------------------------
# file io


def _schema() -> dict:
    text = resources.files("vqp").joinpath("data/device_schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = jsonschema.Draft202012Validator(_schema())
    return _VALIDATOR


def device_from_dict(data: dict, source: str = "<dict>") -> DeviceModel:
    errors = sorted(_validator().iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise DeviceFileError(f"{source}: field {where}: {err.message}")
    qubits = data["qubits"]
    freqs = tuple(float(q["freq"]) for q in qubits)
    los = tuple(float(q.get("drive_lo_freq", q["freq"])) for q in qubits)
    couplings = tuple(
        Coupling(tuple(int(x) for x in c["edge"]), float(c["g"]), float(c["bus_freq"])) for c in data["couplings"]
    )
    if "coupling_map" in data:
        cmap = tuple(tuple(int(x) for x in pair) for pair in data["coupling_map"])
    else:
        cmap = tuple(p for c in couplings for p in (c.edge, c.edge[::-1]))
    entries = []
    for k, cal in enumerate(data["calibrations"]):
        try:
            template = PulseSchedule(
                tuple(instruction_from_dict(ins) for ins in cal["instructions"]),
                name=f"{cal['gate']}{cal['qubits']}",
                device=data["name"],
            )
        except Exception as exc:
            raise DeviceFileError(f"{source}: field calibrations.{k}: {exc}") from exc
        entries.append(
            CalibrationEntry(
                gate_name=cal["gate"].lower(),
                qubit_args=tuple(cal["qubits"]),
                param_arity=cal["params"],
                template=template,
                duration_dt=cal["duration"],
                note=cal.get("note", ""),
            )
        )
    return DeviceModel(
        name=data["name"],
        qubit_freq=freqs,
        drive_lo_freq=los,
        couplings=couplings,
        coupling_map=cmap,
        dt=float(data["dt"]),
        max_drive_rate=float(data.get("max_drive_rate", 0.1)),
        bus_fock_cutoff=int(data.get("bus_fock_cutoff", 3)),
        calibrations=CalibrationTable(entries),
        description=data.get("description", ""),
    )


def device_to_dict(dev: DeviceModel) -> dict:
    cals = []
    for (gate, qubits), e in sorted(dev.calibrations.items()):
        d = {
            "gate": gate,
            "qubits": list(qubits),
            "params": e.param_arity,
            "duration": e.duration_dt,
            "instructions": [instruction_to_dict(ins) for ins in e.template.instructions],
        }
        if e.note:
            d["note"] = e.note
        cals.append(d)
    out = {"name": dev.name}
    if dev.description:
        out["description"] = dev.description
    out.update(
        {
            "dt": dev.dt,
            "max_drive_rate": dev.max_drive_rate,
            "bus_fock_cutoff": dev.bus_fock_cutoff,
            "qubits": [{"freq": f, "drive_lo_freq": lo} for f, lo in zip(dev.qubit_freq, dev.drive_lo_freq)],
            "couplings": [{"edge": list(c.edge), "g": c.g, "bus_freq": c.bus_freq} for c in dev.couplings],
            "coupling_map": [list(p) for p in dev.coupling_map],
            "calibrations": cals,
        }
    )
    return out


def load_device_model(path) -> DeviceModel:
    """Read and validate a device file.

    Raises:
        DeviceFileError: malformed JSON (with line/column) or schema violation
            (with the offending field path).
        InvariantError: a physical invariant fails, e.g. ``dt <= 0``.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DeviceFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return device_from_dict(data, source=str(path))


def save_device_model(dev: DeviceModel, path) -> None:
    Path(path).write_text(json.dumps(device_to_dict(dev), indent=1) + "\n")


def shipped_device_path(name: str) -> Path:
    if name not in SHIPPED_DEVICES:
        raise KeyError(f"unknown shipped device {name!r}; available: {SHIPPED_DEVICES}")
    return Path(str(resources.files("vqp").joinpath(f"data/devices/{name}.json")))


def get_device(name_or_path) -> DeviceModel:
    """Load a shipped device by name (``"quito_like"``) or any device file path."""
    if isinstance(name_or_path, DeviceModel):
        return name_or_path
    key = str(name_or_path)
    if key in SHIPPED_DEVICES:
        return _load_shipped(key)
    return load_device_model(key)


@functools.lru_cache(maxsize=None)
def _load_shipped(name: str) -> DeviceModel:
    return load_device_model(shipped_device_path(name))

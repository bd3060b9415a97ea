"""Trainable-amplitude parameter space.

A lowered schedule's ``trainable`` plays are flattened into a real vector
``[m_1..m_k, phi_1..phi_k]`` (magnitude and angle of each complex amplitude).
Everything else in the schedule (durations, shapes, timing, phase shifts,
encoding and measurement pulses) is carried over unchanged by
:func:`reconstruct`.

The optimizer works in a unit box: magnitudes map to themselves and angles
map to ``(phi + pi) / (2 pi)``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ParamSpaceError
from .pulse import Play, PulseSchedule

DEFAULT_TRUST_REGION = 0.3


def canonical_angle(phi) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    phi = np.asarray(phi, dtype=float)
    w = np.angle(np.exp(1j * phi))
    return np.where(w <= -np.pi, np.pi, w)


def _polar(amp: complex) -> tuple[float, float]:
    return float(abs(amp)), float(canonical_angle(np.arctan2(amp.imag, amp.real)))


@dataclass(frozen=True)
class FrozenMask:
    """Per-instruction flags; ``True`` means the instruction is never trained."""

    frozen: tuple

    @classmethod
    def default(cls, schedule: PulseSchedule, drive_only: bool = False) -> "FrozenMask":
        """Freeze everything except ``trainable`` plays (drive channels only if asked)."""
        flags = []
        for ins in schedule.instructions:
            free = isinstance(ins, Play) and ins.tag == "trainable"
            if drive_only:
                free = free and ins.channel.kind == "drive"
            flags.append(not free)
        return cls(tuple(flags))

    def check(self, schedule: PulseSchedule) -> None:
        if len(self.frozen) != len(schedule.instructions):
            raise ParamSpaceError(f"mask has {len(self.frozen)} flags for {len(schedule.instructions)} instructions")
        for i, (ins, fz) in enumerate(zip(schedule.instructions, self.frozen)):
            if fz:
                continue
            if not isinstance(ins, Play) or ins.tag != "trainable":
                raise ParamSpaceError(f"instruction {i} ({type(ins).__name__}, tag {ins.tag!r}) cannot be trainable")


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Magnitudes then angles of the trainable amplitudes.

    Attributes:
        values: ``[m_1..m_k, phi_1..phi_k]``.
        provenance: ``(instruction index, channel name)`` per amplitude.
        m_lower, m_upper: per-magnitude box (trust region), within [0, 1].
    """

    values: np.ndarray
    provenance: tuple
    m_lower: np.ndarray | None = None
    m_upper: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        prov = tuple((int(i), str(ch)) for i, ch in self.provenance)
        object.__setattr__(self, "provenance", prov)
        k = len(prov)
        if v.ndim != 1 or v.size != 2 * k:
            raise ParamSpaceError(f"expected {2 * k} values for {k} amplitudes, got shape {v.shape}")
        if len({i for i, _ in prov}) != k:
            raise ParamSpaceError("provenance indices must be unique")
        for name, default in (("m_lower", 0.0), ("m_upper", 1.0)):
            b = getattr(self, name)
            b = np.full(k, default) if b is None else np.array(b, dtype=float)
            if b.shape != (k,):
                raise ParamSpaceError(f"{name} must have length {k}")
            b.setflags(write=False)
            object.__setattr__(self, name, b)
        if np.any(self.m_lower < 0) or np.any(self.m_upper > 1) or np.any(self.m_lower > self.m_upper):
            raise ParamSpaceError("magnitude bounds must satisfy 0 <= lower <= upper <= 1")
        if not np.all(np.isfinite(v)):
            raise ParamSpaceError("parameter values must be finite")
        if np.any(self.magnitudes < 0) or np.any(self.magnitudes > 1):
            raise ParamSpaceError("magnitudes must lie in [0, 1]")
        if np.any(self.angles <= -np.pi) or np.any(self.angles > np.pi):
            raise ParamSpaceError("angles must lie in (-pi, pi]")

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ParamVector):
            return NotImplemented
        return (
            self.provenance == other.provenance
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.m_lower, other.m_lower)
            and np.array_equal(self.m_upper, other.m_upper)
        )

    @property
    def size(self) -> int:
        return len(self.provenance)

    @property
    def magnitudes(self) -> np.ndarray:
        return self.values[: self.size]

    @property
    def angles(self) -> np.ndarray:
        return self.values[self.size :]

    def amplitudes(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.angles)

    def with_values(self, values) -> "ParamVector":
        return dataclasses.replace(self, values=np.asarray(values, dtype=float))

    def unit_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box for the normalized vector: trust region on m, full range on phi."""
        k = self.size
        return np.concatenate([self.m_lower, np.zeros(k)]), np.concatenate([self.m_upper, np.ones(k)])

    def to_dict(self) -> dict:
        return {
            "values": self.values.tolist(),
            "provenance": [list(p) for p in self.provenance],
            "m_lower": self.m_lower.tolist(),
            "m_upper": self.m_upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamVector":
        return cls(d["values"], tuple(tuple(p) for p in d["provenance"]), d.get("m_lower"), d.get("m_upper"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "ParamVector":
        return cls.from_dict(json.loads(Path(path).read_text()))


def extract(schedule: PulseSchedule, mask: FrozenMask | None = None, trust_region: float | None = None) -> ParamVector:
    """Polar coordinates of every unfrozen amplitude, in instruction order.

    Args:
        schedule: lowered schedule.
        mask: defaults to :meth:`FrozenMask.default`.
        trust_region: optional half-width ``delta`` of the magnitude box
            ``[m0 - delta, m0 + delta]`` clipped to [0, 1].
    """
    mask = FrozenMask.default(schedule) if mask is None else mask
    mask.check(schedule)
    prov, mags, phis = [], [], []
    for i, (ins, fz) in enumerate(zip(schedule.instructions, mask.frozen)):
        if fz:
            continue
        m, phi = _polar(complex(ins.envelope.amp))
        prov.append((i, ins.channel.name))
        mags.append(min(m, 1.0))
        phis.append(phi)
    if not prov:
        raise ParamSpaceError("schedule has no trainable amplitudes")
    mags = np.array(mags)
    lo = hi = None
    if trust_region is not None:
        if trust_region < 0:
            raise ParamSpaceError("trust_region must be >= 0")
        lo, hi = np.clip(mags - trust_region, 0, 1), np.clip(mags + trust_region, 0, 1)
    return ParamVector(np.concatenate([mags, phis]), tuple(prov), lo, hi)


def reconstruct(schedule: PulseSchedule, p: ParamVector) -> PulseSchedule:
    """Overwrite trainable amplitudes with ``m * exp(i phi)``; all else unchanged.

    Amplitudes whose ``(m, phi)`` equal the polar form of the original are
    kept bit-for-bit, so ``reconstruct(s, extract(s)) == s``.
    """
    ins = list(schedule.instructions)
    for (idx, chan), m, phi in zip(p.provenance, p.magnitudes, p.angles):
        if idx >= len(ins):
            raise ParamSpaceError(f"provenance index {idx} outside schedule of {len(ins)} instructions")
        old = ins[idx]
        if not isinstance(old, Play) or old.tag != "trainable" or old.channel.name != chan:
            raise ParamSpaceError(f"provenance ({idx}, {chan}) does not match a trainable play")
        if m > 1.0:
            raise ParamSpaceError(f"magnitude {m} exceeds 1")
        amp0 = complex(old.envelope.amp)
        if (m, phi) == _polar(amp0):
            continue
        amp = complex(m * np.cos(phi), m * np.sin(phi))
        ins[idx] = dataclasses.replace(old, envelope=old.envelope.with_amp(amp))
    return schedule.replace(ins)


def rebind(p: ParamVector, schedule: PulseSchedule, mask: FrozenMask | None = None) -> ParamVector:
    """Attach ``p``'s values to the trainable plays of another schedule.

    Used to move trained amplitudes to a schedule lowered on a different
    device; the k-th trainable play must sit on the same channel in both.
    """
    target = extract(schedule, mask)
    if [c for _, c in target.provenance] != [c for _, c in p.provenance]:
        raise ParamSpaceError("schedules differ in trainable-play channels; cannot transfer parameters")
    return ParamVector(p.values, target.provenance)


def normalize(p: ParamVector) -> np.ndarray:
    """Unit-box coordinates: ``m`` unchanged, ``u = (phi + pi) / (2 pi)``."""
    return np.concatenate([p.magnitudes, (p.angles + np.pi) / (2 * np.pi)])


def denormalize(u, template: ParamVector, tol: float = 1e-12) -> ParamVector:
    """Inverse of :func:`normalize`, taking provenance and bounds from ``template``."""
    u = np.asarray(u, dtype=float)
    if u.shape != template.values.shape:
        raise ParamSpaceError(f"expected shape {template.values.shape}, got {u.shape}")
    if np.any(u < -tol) or np.any(u > 1 + tol) or not np.all(np.isfinite(u)):
        raise ParamSpaceError("normalized values must lie in [0, 1]")
    u = np.clip(u, 0.0, 1.0)
    k = template.size
    phi = canonical_angle(2 * np.pi * u[k:] - np.pi)
    return template.with_values(np.concatenate([u[:k], phi]))

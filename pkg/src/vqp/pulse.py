"""Pulse schedules: channels, envelopes and timed instructions.

All timing is in integer multiples of the device sample period ``dt``.
Envelope amplitudes are complex and dimensionless with ``|amp| <= 1``;
the bound is enforced when an envelope is constructed, so every schedule
that exists is executable.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import numbers
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .exceptions import ChannelMismatchError, PulseError, UnknownChannelError

AMP_TOL = 1e-12

CHANNEL_KINDS = ("drive", "control", "measure", "acquire")
_PREFIX = {"drive": "d", "control": "u", "measure": "m", "acquire": "a"}
_KIND_OF_PREFIX = {v: k for k, v in _PREFIX.items()}
_NAME_RE = re.compile(r"^([dmau])(\d+)(?:[_-](\d+))?$")

TAGS = ("encoding", "trainable", "fixed")


def _check_int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise PulseError(f"{name} must be an integer number of dt, got {value!r}")
    value = int(value)
    if value < minimum:
        raise PulseError(f"{name} must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True, order=True)
class Channel:
    """A device line. Drive/measure/acquire take one qubit, control takes an
    ordered ``(control, target)`` edge."""

    kind: str
    qubits: tuple

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise PulseError(f"unknown channel kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        expected = 2 if self.kind == "control" else 1
        if len(qubits) != expected or any(q < 0 for q in qubits):
            raise PulseError(f"{self.kind} channel needs {expected} qubit index(es), got {self.qubits}")
        if self.kind == "control" and qubits[0] == qubits[1]:
            raise PulseError("control channel edge must join two distinct qubits")
        object.__setattr__(self, "qubits", qubits)

    @classmethod
    def drive(cls, qubit: int) -> "Channel":
        return cls("drive", (qubit,))

    @classmethod
    def control(cls, control: int, target: int) -> "Channel":
        return cls("control", (control, target))

    @classmethod
    def measure(cls, qubit: int) -> "Channel":
        return cls("measure", (qubit,))

    @classmethod
    def acquire(cls, qubit: int) -> "Channel":
        return cls("acquire", (qubit,))

    @classmethod
    def parse(cls, name: str) -> "Channel":
        """Parse names such as ``d0``, ``u0_1``, ``m2`` or ``a2``."""
        m = _NAME_RE.match(name.strip())
        if m is None:
            raise UnknownChannelError(f"cannot parse channel name {name!r}")
        kind = _KIND_OF_PREFIX[m.group(1)]
        if kind == "control":
            if m.group(3) is None:
                raise UnknownChannelError(f"control channel {name!r} needs an edge, e.g. u0_1")
            return cls(kind, (int(m.group(2)), int(m.group(3))))
        if m.group(3) is not None:
            raise UnknownChannelError(f"{kind} channel {name!r} takes a single qubit")
        return cls(kind, (int(m.group(2)),))

    @property
    def name(self) -> str:
        return _PREFIX[self.kind] + "_".join(str(q) for q in self.qubits)

    @property
    def qubit(self) -> int:
        """Qubit whose operator the channel acts on (the control for edges)."""
        return self.qubits[0]

    def __str__(self):
        return self.name


# ---------------------------------------------------------------------------
# envelopes

ENVELOPE_KINDS = ("gaussian", "gaussian_square", "drag", "constant", "samples")


def _lifted_gaussian(x: np.ndarray, center: float, zero_at: float, sigma: float) -> np.ndarray:
    """Gaussian of unit peak shifted so that it vanishes at ``center +- zero_at``."""
    g = np.exp(-0.5 * ((x - center) / sigma) ** 2)
    base = np.exp(-0.5 * (zero_at / sigma) ** 2)
    return (g - base) / (1.0 - base)


@functools.lru_cache(maxsize=512)
def _unit_shape(kind: str, duration: int, sigma, width, beta) -> np.ndarray:
    k = np.arange(duration, dtype=float)
    if kind == "constant":
        out = np.ones(duration, dtype=complex)
    elif kind in ("gaussian", "drag"):
        center = duration / 2.0
        zero_at = duration / 2.0 + 1.0
        g = _lifted_gaussian(k, center, zero_at, sigma)
        out = g.astype(complex)
        if kind == "drag" and beta:
            base = np.exp(-0.5 * (zero_at / sigma) ** 2)
            dg = -(k - center) / sigma**2 * np.exp(-0.5 * ((k - center) / sigma) ** 2) / (1.0 - base)
            out = out + 1j * beta * dg
    elif kind == "gaussian_square":
        rise = (duration - width) // 2
        fall = duration - width - rise
        out = np.ones(duration, dtype=complex)
        if rise:
            edge = _lifted_gaussian(np.arange(rise, dtype=float), rise, rise + 1.0, sigma)
            out[:rise] = edge
        if fall:
            edge = _lifted_gaussian(np.arange(fall, dtype=float), fall, fall + 1.0, sigma)
            out[duration - fall :] = edge[::-1]
    else:  # pragma: no cover - guarded by Envelope validation
        raise PulseError(kind)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Envelope:
    """Complex pulse envelope.

    ``amp`` is the literal peak height of the shape: Gaussian-type shapes are
    peak-normalized and lifted so they reach zero one sample beyond either end.
    For ``samples`` envelopes the waveform is ``amp * samples``.
    """

    kind: str
    duration: int
    amp: complex = 1.0 + 0.0j
    sigma: float | None = None
    width: int | None = None
    beta: float | None = None
    samples: tuple | None = None

    def __post_init__(self):
        if self.kind not in ENVELOPE_KINDS:
            raise PulseError(f"unknown envelope kind {self.kind!r}; expected one of {ENVELOPE_KINDS}")
        duration = _check_int(self.duration, "duration", minimum=1)
        object.__setattr__(self, "duration", duration)
        amp = complex(self.amp)
        if not (np.isfinite(amp.real) and np.isfinite(amp.imag)):
            raise PulseError(f"amplitude must be finite, got {amp}")
        if abs(amp) > 1.0 + AMP_TOL:
            raise PulseError(f"|amp| = {abs(amp):.6g} exceeds 1")
        object.__setattr__(self, "amp", amp)

        needs_sigma = self.kind in ("gaussian", "gaussian_square", "drag")
        if needs_sigma:
            if self.sigma is None or not self.sigma > 0:
                raise PulseError(f"{self.kind} envelope needs sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            raise PulseError(f"{self.kind} envelope takes no sigma")
        if self.kind == "gaussian_square":
            width = _check_int(self.width, "width", minimum=0)
            if width > duration:
                raise PulseError("gaussian_square width exceeds duration")
            object.__setattr__(self, "width", width)
        elif self.width is not None:
            raise PulseError(f"{self.kind} envelope takes no width")
        if self.kind == "drag":
            object.__setattr__(self, "beta", float(self.beta or 0.0))
        elif self.beta is not None:
            raise PulseError(f"{self.kind} envelope takes no beta")
        if self.kind == "samples":
            if self.samples is None:
                raise PulseError("samples envelope needs a samples list")
            samples = tuple(complex(s) for s in self.samples)
            if len(samples) != duration:
                raise PulseError(f"samples length {len(samples)} != duration {duration}")
            if samples and max(abs(s) for s in samples) > 1.0 + AMP_TOL:
                raise PulseError("sample magnitude exceeds 1")
            object.__setattr__(self, "samples", samples)
        elif self.samples is not None:
            raise PulseError(f"{self.kind} envelope takes no samples")

    @classmethod
    def gaussian(cls, duration, amp, sigma):
        return cls("gaussian", duration, amp, sigma=sigma)

    @classmethod
    def gaussian_square(cls, duration, amp, sigma, width):
        return cls("gaussian_square", duration, amp, sigma=sigma, width=width)

    @classmethod
    def drag(cls, duration, amp, sigma, beta=0.0):
        return cls("drag", duration, amp, sigma=sigma, beta=beta)

    @classmethod
    def constant(cls, duration, amp):
        return cls("constant", duration, amp)

    @classmethod
    def from_samples(cls, samples, amp=1.0):
        samples = tuple(complex(s) for s in samples)
        return cls("samples", len(samples), amp, samples=samples)

    def shape(self) -> np.ndarray:
        """Unit-amplitude samples (read-only)."""
        if self.kind == "samples":
            return np.asarray(self.samples, dtype=complex)
        return _unit_shape(self.kind, self.duration, self.sigma, self.width, self.beta)

    def waveform(self) -> np.ndarray:
        return self.amp * self.shape()

    def with_amp(self, amp: complex) -> "Envelope":
        return dataclasses.replace(self, amp=amp)


# ---------------------------------------------------------------------------
# instructions


@dataclass(frozen=True)
class Play:
    start: int
    envelope: Envelope
    channel: Channel
    tag: str = "fixed"
    gate: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start", _check_int(self.start, "start"))
        if self.tag not in TAGS:
            raise PulseError(f"unknown tag {self.tag!r}")
        if self.channel.kind == "acquire":
            raise PulseError("cannot play a waveform on an acquire channel")

    @property
    def duration(self) -> int:
        return self.envelope.duration

    @property
    def end(self) -> int:
        return self.start + self.duration

    def shifted(self, offset: int) -> "Play":
        return dataclasses.replace(self, start=self.start + offset)


@dataclass(frozen=True)
class ShiftPhase:
    start: int
    phase: float
    channel: Channel
    tag: str = "fixed"
    gate: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start", _check_int(self.start, "start"))
        phase = float(self.phase)
        if not np.isfinite(phase):
            raise PulseError("phase must be finite")
        object.__setattr__(self, "phase", phase)
        if self.tag not in TAGS:
            raise PulseError(f"unknown tag {self.tag!r}")

    duration = 0

    @property
    def end(self) -> int:
        return self.start

    def shifted(self, offset: int) -> "ShiftPhase":
        return dataclasses.replace(self, start=self.start + offset)


@dataclass(frozen=True)
class Acquire:
    start: int
    duration: int
    channel: Channel
    tag: str = "fixed"
    gate: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start", _check_int(self.start, "start"))
        object.__setattr__(self, "duration", _check_int(self.duration, "duration", minimum=1))
        if self.channel.kind != "acquire":
            raise PulseError("acquire needs an acquire channel")

    @property
    def end(self) -> int:
        return self.start + self.duration

    def shifted(self, offset: int) -> "Acquire":
        return dataclasses.replace(self, start=self.start + offset)


Instruction = Union[Play, ShiftPhase, Acquire]


@dataclass(frozen=True)
class PulseSchedule:
    """Time-ordered instructions. Equality compares the instruction lists only.

    Construction sorts the instructions stably by start time (so a phase shift
    listed before a play at the same instant still precedes it) and rejects
    overlapping plays on one channel.
    """

    instructions: tuple = ()
    name: str = field(default="", compare=False)
    device: str | None = field(default=None, compare=False)

    def __post_init__(self):
        instructions = tuple(sorted(self.instructions, key=lambda ins: ins.start))
        for ins in instructions:
            if not isinstance(ins, (Play, ShiftPhase, Acquire)):
                raise PulseError(f"not an instruction: {ins!r}")
        object.__setattr__(self, "instructions", instructions)
        busy: dict[Channel, list] = {}
        for ins in instructions:
            if isinstance(ins, (Play, Acquire)):
                busy.setdefault(ins.channel, []).append((ins.start, ins.end))
        for ch, spans in busy.items():
            spans.sort()
            for (s0, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 < e0:
                    raise PulseError(f"overlapping instructions on {ch.name} at t={s1}")

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    @property
    def channels(self) -> list[Channel]:
        return sorted({ins.channel for ins in self.instructions})

    @property
    def qubits(self) -> list[int]:
        return sorted({q for ch in self.channels for q in ch.qubits})

    def plays(self) -> list[tuple[int, Play]]:
        return [(i, ins) for i, ins in enumerate(self.instructions) if isinstance(ins, Play)]

    def replace(self, instructions: Iterable[Instruction]) -> "PulseSchedule":
        return PulseSchedule(tuple(instructions), name=self.name, device=self.device)


def schedule_duration(schedule: PulseSchedule, include_measurement: bool = True) -> int:
    """Length of the schedule in dt; 0 for an empty schedule.

    With ``include_measurement=False`` instructions on measure/acquire
    channels are ignored, which is how gate durations are compared.
    """
    end = 0
    for ins in schedule.instructions:
        if not include_measurement and ins.channel.kind in ("measure", "acquire"):
            continue
        end = max(end, ins.end)
    return end


def concat(a: PulseSchedule, b: PulseSchedule) -> PulseSchedule:
    """Play ``b`` after ``a``: every instruction of ``b`` is delayed by ``duration(a)``."""
    if a.device and b.device and a.device != b.device:
        raise ChannelMismatchError(f"cannot concatenate schedules for {a.device!r} and {b.device!r}")
    offset = schedule_duration(a)
    shifted = tuple(ins.shifted(offset) for ins in b.instructions)
    return PulseSchedule(
        a.instructions + shifted,
        name=a.name or b.name,
        device=a.device or b.device,
    )


def concat_all(schedules: Sequence[PulseSchedule]) -> PulseSchedule:
    """Sequential concatenation of many schedules in one pass."""
    out: list = []
    offset = 0
    device = None
    for s in schedules:
        if s.device:
            if device and s.device != device:
                raise ChannelMismatchError(f"cannot concatenate schedules for {device!r} and {s.device!r}")
            device = s.device
        out.extend(ins.shifted(offset) for ins in s.instructions)
        offset += schedule_duration(s)
    return PulseSchedule(tuple(out), device=device)


def _render(schedule: PulseSchedule, channel: Channel, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=complex)
    phase = 0.0
    for ins in schedule.instructions:
        if ins.channel != channel:
            continue
        if isinstance(ins, ShiftPhase):
            phase += ins.phase
        elif isinstance(ins, Play):
            wave = ins.envelope.waveform()
            if phase:
                wave = wave * np.exp(1j * phase)
            out[ins.start : ins.end] += wave
    return out


def render_waveform(schedule: PulseSchedule, channel: Channel | str, device=None) -> np.ndarray:
    """Complex samples on one channel over the whole schedule.

    Idle samples are zero and each play is rotated by the phase accumulated
    from earlier ``ShiftPhase`` instructions on the same channel.

    Args:
        schedule: schedule to render.
        channel: a :class:`Channel` or its name (``"d0"``).
        device: optional :class:`~vqp.device.DeviceModel`; when given the
            channel only needs to exist on the device, otherwise it must be
            used by the schedule.
    """
    if isinstance(channel, str):
        channel = Channel.parse(channel)
    if device is not None:
        if channel not in device.channels():
            raise UnknownChannelError(f"{channel.name} does not exist on device {device.name}")
    elif channel not in schedule.channels:
        raise UnknownChannelError(f"{channel.name} is not used by the schedule")
    return _render(schedule, channel, schedule_duration(schedule))


def accumulated_phases(schedule: PulseSchedule) -> dict[Channel, float]:
    """Total ShiftPhase per channel (the final virtual-Z frame)."""
    phases: dict[Channel, float] = {}
    for ins in schedule.instructions:
        if isinstance(ins, ShiftPhase):
            phases[ins.channel] = phases.get(ins.channel, 0.0) + ins.phase
    return phases


# ---------------------------------------------------------------------------
# serialization


def envelope_to_dict(env: Envelope) -> dict:
    d = {"kind": env.kind, "duration": env.duration, "amp": [env.amp.real, env.amp.imag]}
    if env.sigma is not None:
        d["sigma"] = env.sigma
    if env.width is not None:
        d["width"] = env.width
    if env.beta is not None:
        d["beta"] = env.beta
    if env.samples is not None:
        d["samples"] = [[s.real, s.imag] for s in env.samples]
    return d


def _complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise PulseError(f"complex value must be [re, im], got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


def envelope_from_dict(d: dict) -> Envelope:
    known = {"kind", "duration", "amp", "sigma", "width", "beta", "samples"}
    extra = set(d) - known
    if extra:
        raise PulseError(f"unknown envelope keys {sorted(extra)}")
    samples = d.get("samples")
    if samples is not None:
        samples = tuple(_complex(s) for s in samples)
    return Envelope(
        kind=d["kind"],
        duration=d["duration"],
        amp=_complex(d.get("amp", 1.0)),
        sigma=d.get("sigma"),
        width=d.get("width"),
        beta=d.get("beta"),
        samples=samples,
    )


def instruction_to_dict(ins: Instruction) -> dict:
    if isinstance(ins, Play):
        d = {"op": "play", "t0": ins.start, "channel": ins.channel.name, "pulse": envelope_to_dict(ins.envelope)}
    elif isinstance(ins, ShiftPhase):
        d = {"op": "shift_phase", "t0": ins.start, "channel": ins.channel.name, "phase": ins.phase}
    else:
        d = {"op": "acquire", "t0": ins.start, "channel": ins.channel.name, "duration": ins.duration}
    if ins.tag != "fixed":
        d["tag"] = ins.tag
    if ins.gate is not None:
        d["gate"] = ins.gate
    return d


def instruction_from_dict(d: dict) -> Instruction:
    op = d.get("op")
    channel = Channel.parse(d["channel"])
    common = {"tag": d.get("tag", "fixed"), "gate": d.get("gate")}
    if op == "play":
        return Play(d["t0"], envelope_from_dict(d["pulse"]), channel, **common)
    if op == "shift_phase":
        return ShiftPhase(d["t0"], d["phase"], channel, **common)
    if op == "acquire":
        return Acquire(d["t0"], d["duration"], channel, **common)
    raise PulseError(f"unknown instruction op {op!r}")


def schedule_to_dict(schedule: PulseSchedule) -> dict:
    return {
        "name": schedule.name,
        "device": schedule.device,
        "duration": schedule_duration(schedule),
        "instructions": [instruction_to_dict(ins) for ins in schedule.instructions],
    }


def schedule_from_dict(d: dict) -> PulseSchedule:
    return PulseSchedule(
        tuple(instruction_from_dict(x) for x in d.get("instructions", [])),
        name=d.get("name") or "",
        device=d.get("device"),
    )


# ---------------------------------------------------------------------------
# waveform export


def export_waveform_csv(schedule: PulseSchedule, channels, path, nonzero_only: bool = False) -> None:
    """Write ``t_dt, channel, re, im`` rows for each requested channel.

    With ``nonzero_only`` idle samples are skipped, which keeps exports of
    long schedules small.
    """
    if isinstance(channels, (str, Channel)):
        channels = [channels]
    channels = [Channel.parse(c) if isinstance(c, str) else c for c in channels]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_dt", "channel", "re", "im"])
        for ch in channels:
            wave = render_waveform(schedule, ch)
            for t, v in enumerate(wave):
                if nonzero_only and v == 0:
                    continue
                writer.writerow([t, ch.name, repr(float(v.real)), repr(float(v.imag))])


def export_waveform_svg(schedule: PulseSchedule, channels, path, title: str | None = None) -> None:
    """Plot real/imaginary parts per channel to an SVG file (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(channels, (str, Channel)):
        channels = [channels]
    channels = [Channel.parse(c) if isinstance(c, str) else c for c in channels]
    fig, axes = plt.subplots(len(channels), 1, figsize=(10, 1.8 * len(channels) + 0.6), sharex=True, squeeze=False)
    for ax, ch in zip(axes[:, 0], channels):
        wave = render_waveform(schedule, ch)
        t = np.arange(len(wave))
        ax.fill_between(t, wave.real, step="post", alpha=0.6, label="re")
        ax.fill_between(t, wave.imag, step="post", alpha=0.6, label="im")
        ax.set_ylabel(ch.name)
        ax.set_ylim(-1.05, 1.05)
    axes[-1, 0].set_xlabel("t [dt]")
    axes[0, 0].legend(loc="upper right", fontsize="small")
    if title:
        fig.suptitle(title)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)

"""Exception hierarchy shared by the vqp modules."""


class VQPError(Exception):
    """Base class for every error raised by vqp."""


class DeviceFileError(VQPError, ValueError):
    """A device file could not be parsed or failed validation."""


class InvariantError(VQPError, ValueError):
    """A value violates a documented invariant (names the offending field)."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnsupportedGateError(VQPError, KeyError):
    """Requested gate has no calibration on the given qubits."""

    def __init__(self, gate, qubits, supported):
        self.gate = gate
        self.qubits = tuple(qubits)
        self.supported = sorted(supported)
        listing = ", ".join(f"{g}{list(q)}" for g, q in self.supported)
        super().__init__(f"no calibration for {gate}{list(qubits)}; supported: {listing}")

    def __str__(self):
        return self.args[0]


class PulseError(VQPError, ValueError):
    """Malformed envelope, instruction or schedule."""


class UnknownChannelError(PulseError):
    pass


class ChannelMismatchError(PulseError):
    """Schedules built for different devices were combined."""


class CircuitError(VQPError, ValueError):
    pass


class SimulationError(VQPError, ValueError):
    pass


class ParamSpaceError(VQPError, ValueError):
    pass


class OptimizationError(VQPError, RuntimeError):
    pass


class DatasetError(VQPError, RuntimeError):
    pass

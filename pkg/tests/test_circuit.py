import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from vqp.circuit import (
    Circuit,
    Gate,
    build_encoding_circuit,
    build_vqc_baseline,
    circuit_unitary,
    decompose,
    gate_matrix,
    lower,
    rx,
    rz,
    u3,
)
from vqp.exceptions import CircuitError, UnsupportedGateError
from vqp.pulse import Channel, ShiftPhase, accumulated_phases, concat, schedule_duration
from vqp.sim import propagator

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
angles = st.floats(-np.pi, np.pi)


def fidelity(u, v):
    d = u.shape[0]
    return abs(np.trace(u.conj().T @ v)) ** 2 / d**2


def frame(schedule, qubits):
    """Virtual-Z frame left by a schedule, as a unitary on ``qubits``."""
    ph = accumulated_phases(schedule)
    out = np.eye(1)
    for q in qubits:
        out = np.kron(out, rz(ph.get(Channel.drive(q), 0.0)))
    return out


class TestGate:
    def test_arity(self):
        with pytest.raises(CircuitError):
            Gate("u3", (0,), (0.1,))
        with pytest.raises(CircuitError):
            Gate("cx", (0, 0))
        with pytest.raises(CircuitError):
            Gate("swap", (0, 1))

    def test_case_insensitive(self):
        assert Gate("RX", (0,), (0.1,)).name == "rx"

    def test_encoding_before_trainable(self):
        with pytest.raises(CircuitError):
            Circuit(1, (Gate("rx", (0,), (0.1,)), Gate("ry", (0,), (0.1,), "encoding")))

    def test_qubit_range(self):
        with pytest.raises(CircuitError):
            Circuit(2, (Gate("rx", (2,), (0.1,)),))

    def test_json_round_trip(self, tmp_path):
        c = build_vqc_baseline(2, 3)
        c.save(tmp_path / "c.json")
        assert Circuit.load(tmp_path / "c.json") == c

    def test_bare_gate_list(self, tmp_path):
        (tmp_path / "c.json").write_text('[{"name": "cx", "qubits": [0, 1]}]')
        c = Circuit.load(tmp_path / "c.json")
        assert c.num_qubits == 2 and c.gates[0].segment == "trainable"


class TestMatrices:
    # independent definitions via exponentials of Paulis
    @given(angles)
    def test_rotations(self, t):
        np.testing.assert_allclose(rx(t), expm(-0.5j * t * X), atol=1e-12)
        np.testing.assert_allclose(rz(t), expm(-0.5j * t * Z), atol=1e-12)
        np.testing.assert_allclose(gate_matrix(Gate("ry", (0,), (t,))), expm(-0.5j * t * Y), atol=1e-12)

    @given(angles, angles, angles)
    def test_u3_euler(self, t, p, l):
        ref = np.exp(0.5j * (p + l)) * rz(p) @ expm(-0.5j * t * Y) @ rz(l)
        np.testing.assert_allclose(u3(t, p, l), ref, atol=1e-12)

    @given(angles, angles, angles)
    def test_u3_lowering_identity(self, t, p, l):
        # RZ(phi) RX(-pi/2) RZ(theta) RX(pi/2) RZ(lambda)
        v = rz(p) @ rx(-np.pi / 2) @ rz(t) @ rx(np.pi / 2) @ rz(l)
        assert fidelity(u3(t, p, l), v) > 1 - 1e-12

    @given(angles, angles, angles)
    def test_cu3_decomposition(self, t, p, l):
        g = Gate("cu3", (0, 1), (t, p, l))
        gates = []
        for kind, qs, v in decompose(g):
            if kind == "cx":
                gates.append(Gate("cx", qs))
            elif kind == "sx":
                gates.append(Gate("rx", qs, (v * np.pi / 2,)))
            else:
                gates.append(Gate(kind, qs, (v,)))
        assert fidelity(circuit_unitary(Circuit(2, (g,))), circuit_unitary(Circuit(2, tuple(gates)))) > 1 - 1e-12

    def test_qubit_order(self):
        u = circuit_unitary(Circuit(2, (Gate("rx", (1,), (0.3,)),)))
        np.testing.assert_allclose(u, np.kron(np.eye(2), rx(0.3)))
        cx10 = circuit_unitary(Circuit(2, (Gate("cx", (1, 0)),)))
        assert cx10[3, 1] == 1  # |01> -> |11>


class TestBuilders:
    def test_two_features(self):
        c = build_encoding_circuit([0.2, 0.6])
        assert [(g.name, g.qubits) for g in c.gates] == [("ry", (0,)), ("ry", (1,))]
        np.testing.assert_allclose([g.angles[0] for g in c.gates], [0.2 * np.pi, 0.6 * np.pi])
        assert all(g.segment == "encoding" for g in c.gates)

    def test_zero_features(self):
        c = build_encoding_circuit([0.0, 0.0])
        assert all(g.name == "ry" and g.angles == (0.0,) for g in c.gates)

    def test_sixteen_features(self):
        c = build_encoding_circuit(np.linspace(0, 1, 16), 4)
        assert c.num_qubits == 4 and len(c) == 16
        for q in range(4):
            assert [g.name for g in c.gates if g.qubits == (q,)] == ["ry", "rz", "rx", "ry"]

    def test_overflow(self):
        with pytest.raises(CircuitError):
            build_encoding_circuit(np.zeros(9), 2)

    def test_out_of_range_feature(self):
        with pytest.raises(CircuitError):
            build_encoding_circuit([0.2, 1.5])

    def test_baseline_layout(self):
        c = build_vqc_baseline(4, 0)
        names = [g.name for g in c.gates]
        assert len(c) == 9 and names.count("u3") == 5 and names.count("cu3") == 4
        assert names[::2] == ["u3"] * 5
        assert all(g.segment == "trainable" for g in c.gates)

    def test_baseline_deterministic(self):
        assert build_vqc_baseline(2, 7) == build_vqc_baseline(2, 7)
        assert build_vqc_baseline(2, 7) != build_vqc_baseline(2, 8)

    def test_variant(self):
        assert len(build_vqc_baseline(2, 0, variant=True)) == 12

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_baseline_lowers_on_all_devices(self, n, quito, belem, jakarta):
        c = build_vqc_baseline(n, 1)
        for dev in (quito, belem, jakarta):
            lower(c, dev)

    def test_too_few_qubits(self):
        with pytest.raises(CircuitError):
            build_vqc_baseline(1, 0)


class TestLowering:
    def test_cx_duration(self, quito):
        assert schedule_duration(lower(Circuit(2, (Gate("cx", (0, 1)),)), quito)) == 25136

    def test_crx_duration(self, quito):
        assert schedule_duration(lower(Circuit(2, (Gate("crx", (0, 1), (np.pi,)),)), quito)) == 26832

    @given(angles)
    def test_rz_zero_duration(self, t):
        from vqp.device import get_device

        s = lower(Circuit(1, (Gate("rz", (0,), (t,)),)), get_device("quito_like"))
        assert schedule_duration(s) == 0
        assert all(isinstance(i, ShiftPhase) for i in s.instructions)

    def test_unsupported(self, quito):
        with pytest.raises(UnsupportedGateError):
            lower(Circuit(5, (Gate("cx", (0, 4)),)), quito)

    def test_homomorphic(self, quito):
        enc = build_encoding_circuit([0.3, 0.9])
        train = build_vqc_baseline(2, 4)
        assert lower(enc + train, quito) == concat(lower(enc, quito), lower(train, quito))

    def test_tags_and_provenance(self, quito):
        c = build_encoding_circuit([0.3, 0.9]) + build_vqc_baseline(2, 4)
        s = lower(c, quito, measure=True)
        for ins in s.instructions:
            if ins.channel.kind in ("measure", "acquire"):
                assert ins.tag == "fixed"
                continue
            assert ins.gate is not None
            assert ins.tag == c.gates[ins.gate].segment
            # the play's channel touches one of its source gate's qubits
            assert set(ins.channel.qubits) & set(c.gates[ins.gate].qubits) or isinstance(ins, ShiftPhase)

    def test_amplitude_binds_linearly(self, quito):
        a = lower(Circuit(1, (Gate("rx", (0,), (np.pi / 3,)),)), quito).instructions[0]
        b = lower(Circuit(1, (Gate("rx", (0,), (np.pi,)),)), quito).instructions[0]
        assert a.envelope.amp == pytest.approx(b.envelope.amp / 3)
        assert a.envelope.duration == b.envelope.duration

    def test_measure_appended(self, quito):
        s = lower(Circuit(2, (Gate("rx", (0,), (1.0,)),)), quito, measure=True)
        assert schedule_duration(s) == 160 + 4000
        assert schedule_duration(s, include_measurement=False) == 160


class TestPhysics:
    """Simulated lowered gates against ideal matrices (frame-corrected)."""

    @pytest.mark.parametrize("gate", [Gate("cx", (0, 1)), Gate("cx", (1, 0)), Gate("crx", (0, 1), (np.pi,)),
                                      Gate("crx", (1, 0), (0.7,)), Gate("cu3", (0, 1), (0.4, -1.1, 2.0))])
    def test_two_qubit(self, quito, gate):
        c = Circuit(2, (gate,))
        s = lower(c, quito)
        u = propagator(s, quito, qubits=(0, 1), coupling="effective")
        assert fidelity(circuit_unitary(c), frame(s, (0, 1)) @ u) > 0.999

    @given(angles, angles, angles)
    def test_u3(self, t, p, l):
        from vqp.device import get_device

        dev = get_device("quito_like")
        g = Gate("u3", (0,), (t, p, l))
        s = lower(Circuit(1, (g,)), dev)
        u = propagator(s, dev, qubits=(0,), coupling="effective")
        assert fidelity(gate_matrix(g), frame(s, (0,)) @ u) > 0.9999

    def test_virtual_z_sign(self, quito):
        # RZ(pi/2) then RX(pi/2) equals RZ(pi/2) RY-like rotation; compare with ideal
        c = Circuit(1, (Gate("rz", (0,), (np.pi / 2,)), Gate("rx", (0,), (np.pi / 2,))))
        s = lower(c, quito)
        u = propagator(s, quito, qubits=(0,), coupling="effective")
        assert fidelity(circuit_unitary(c), frame(s, (0,)) @ u) > 0.9999
        wrong = circuit_unitary(Circuit(1, (Gate("rz", (0,), (-np.pi / 2,)), Gate("rx", (0,), (np.pi / 2,)))))
        assert fidelity(wrong, frame(s, (0,)) @ u) < 0.9

    def test_baseline_circuit(self, quito):
        c = build_vqc_baseline(2, 0)
        s = lower(c, quito)
        u = propagator(s, quito, qubits=(0, 1), coupling="effective")
        assert fidelity(circuit_unitary(c), frame(s, (0, 1)) @ u) > 0.999

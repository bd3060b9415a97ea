import dataclasses
import json

import numpy as np
import pytest
from helpers import random_lowered, random_schedule

from vqp.circuit import build_encoding_circuit, build_vqc_baseline, lower
from vqp.exceptions import ParamSpaceError
from vqp.params import (
    FrozenMask,
    ParamVector,
    canonical_angle,
    denormalize,
    extract,
    normalize,
    rebind,
    reconstruct,
)
from vqp.pulse import Channel, Envelope, Play, PulseSchedule, ShiftPhase

D0 = Channel.drive(0)


def single(amp):
    return PulseSchedule((Play(0, Envelope.gaussian(32, amp, 8.0), D0, tag="trainable"),))


class TestExtract:
    def test_positive_real(self):
        p = extract(single(0.5 + 0j))
        np.testing.assert_array_equal(p.values, [0.5, 0.0])

    def test_imaginary(self):
        p = extract(single(0.3j))
        assert p.magnitudes[0] == pytest.approx(0.3)
        assert p.angles[0] == pytest.approx(np.pi / 2)

    def test_negative_real_is_pi(self):
        assert extract(single(-0.4 + 0j)).angles[0] == np.pi

    def test_length_matches_trainable_plays(self, quito):
        s = lower(build_encoding_circuit([0.2, 0.6]) + build_vqc_baseline(2, 0), quito, measure=True)
        # audit: count trainable plays independently of the extractor
        trainable = [i for i, ins in enumerate(s.instructions) if isinstance(ins, Play) and ins.tag == "trainable"]
        p = extract(s)
        assert len(p) == 2 * len(trainable)
        assert [i for i, _ in p.provenance] == trainable
        assert [c for _, c in p.provenance] == [s.instructions[i].channel.name for i in trainable]
        assert any(c.startswith("u") for _, c in p.provenance)  # control channels train by default

    def test_drive_only(self, quito):
        s = lower(build_vqc_baseline(2, 0), quito)
        p = extract(s, FrozenMask.default(s, drive_only=True))
        assert all(c.startswith("d") for _, c in p.provenance)
        assert len(p) < len(extract(s))

    def test_nothing_trainable(self):
        s = PulseSchedule((Play(0, Envelope.constant(4, 0.1), D0, tag="encoding"),))
        with pytest.raises(ParamSpaceError):
            extract(s)

    def test_mask_cannot_free_encoding(self):
        s = PulseSchedule((Play(0, Envelope.constant(4, 0.1), D0, tag="encoding"),))
        with pytest.raises(ParamSpaceError):
            extract(s, FrozenMask((False,)))

    def test_trust_region(self):
        p = extract(single(0.9), trust_region=0.3)
        assert p.m_lower[0] == pytest.approx(0.6)
        assert p.m_upper[0] == 1.0


class TestReconstruct:
    def test_round_trip_random(self, quito, belem, rng):
        for k in range(100):
            s = random_schedule(rng) if k % 2 else random_lowered(rng, (quito, belem)[k % 4 // 2])
            assert reconstruct(s, extract(s)) == s
            assert reconstruct(s, extract(s)).instructions == s.instructions

    def test_zero_magnitudes(self, quito):
        s = lower(build_encoding_circuit([0.3, 0.9]) + build_vqc_baseline(2, 1), quito)
        p = extract(s)
        out = reconstruct(s, p.with_values(np.concatenate([np.zeros(p.size), p.angles])))
        for a, b in zip(s.instructions, out.instructions):
            if isinstance(a, Play) and a.tag == "trainable":
                assert b.envelope.amp == 0
                assert b.envelope.duration == a.envelope.duration
            else:
                assert a == b

    def test_perturb_one(self, quito, rng):
        s = lower(build_vqc_baseline(2, 3), quito)
        p = extract(s)
        j = int(np.argmin(p.magnitudes))
        v = p.values.copy()
        v[j] += 0.1
        out = reconstruct(s, p.with_values(v))
        diff = [i for i, (a, b) in enumerate(zip(s.instructions, out.instructions)) if a != b]
        assert diff == [p.provenance[j][0]]
        a, b = s.instructions[diff[0]], out.instructions[diff[0]]
        assert dataclasses.replace(b, envelope=b.envelope.with_amp(a.envelope.amp)) == a
        assert abs(b.envelope.amp) == pytest.approx(abs(a.envelope.amp) + 0.1)

    def test_frozen_bit_identical(self, quito, rng):
        s = lower(build_encoding_circuit(rng.random(4)) + build_vqc_baseline(2, 5), quito, measure=True)
        p = extract(s)
        for _ in range(20):
            q = denormalize(rng.random(len(p)), p)
            out = reconstruct(s, q)
            for a, b in zip(s.instructions, out.instructions):
                if a.tag != "trainable" or not isinstance(a, Play):
                    assert a is b or a == b
                else:
                    assert abs(b.envelope.amp) <= 1.0

    def test_provenance_mismatch(self, quito):
        s = lower(build_vqc_baseline(2, 0), quito)
        p = extract(s)
        bad = ParamVector(p.values, ((p.provenance[0][0], "d7"),) + p.provenance[1:])
        with pytest.raises(ParamSpaceError):
            reconstruct(s, bad)

    def test_norm_violation(self):
        with pytest.raises(ParamSpaceError):
            ParamVector([1.2, 0.0], ((0, "d0"),))

    def test_phase_only_change(self):
        s = single(0.5)
        out = reconstruct(s, extract(s).with_values([0.5, np.pi / 2]))
        assert out.instructions[0].envelope.amp == pytest.approx(0.5j)


class TestNormalize:
    def test_pi_maps_to_one(self):
        assert normalize(ParamVector([0.2, np.pi], ((0, "d0"),)))[1] == 1.0

    def test_zero_maps_to_half(self):
        assert normalize(ParamVector([0.2, 0.0], ((0, "d0"),)))[1] == 0.5

    def test_magnitude_identity(self):
        assert normalize(ParamVector([0.37, 1.0], ((0, "d0"),)))[0] == 0.37

    def test_round_trip(self, quito, rng):
        for _ in range(20):
            p = extract(random_lowered(rng, quito))
            back = denormalize(normalize(p), p)
            np.testing.assert_allclose(back.values, p.values, atol=1e-12, rtol=0)

    def test_zero_unit_is_minus_pi_wrapped(self):
        p = ParamVector([0.2, 0.0], ((0, "d0"),))
        assert denormalize([0.2, 0.0], p).angles[0] == np.pi

    def test_out_of_box(self):
        p = ParamVector([0.2, 0.0], ((0, "d0"),))
        with pytest.raises(ParamSpaceError):
            denormalize([0.2, 1.5], p)
        with pytest.raises(ParamSpaceError):
            denormalize([0.2], p)

    def test_unit_bounds(self):
        p = extract(single(0.5), trust_region=0.3)
        lo, hi = p.unit_bounds()
        np.testing.assert_allclose(lo, [0.2, 0.0])
        np.testing.assert_allclose(hi, [0.8, 1.0])


def test_canonical_angle():
    np.testing.assert_allclose(canonical_angle([-np.pi, 3 * np.pi, 0.5, -0.5]), [np.pi, np.pi, 0.5, -0.5])


def test_json_round_trip(tmp_path, quito):
    p = extract(lower(build_vqc_baseline(2, 0), quito), trust_region=0.3)
    p.save(tmp_path / "p.json")
    assert ParamVector.load(tmp_path / "p.json") == p
    json.loads((tmp_path / "p.json").read_text())


def test_values_read_only(quito):
    p = extract(single(0.5))
    with pytest.raises(ValueError):
        p.values[0] = 0.1


def test_rebind_across_devices(quito, belem):
    c = build_vqc_baseline(2, 0)
    sa, sb = lower(c, quito), lower(c, belem)
    p = extract(sa)
    q = rebind(p, sb)
    np.testing.assert_array_equal(q.values, p.values)
    out = reconstruct(sb, q)
    assert [abs(i.envelope.amp) for _, i in out.plays() if i.tag == "trainable"] == pytest.approx(list(p.magnitudes))


def test_rebind_rejects_channel_mismatch(quito):
    s = lower(build_vqc_baseline(2, 0), quito)
    other = PulseSchedule((Play(0, Envelope.constant(4, 0.1), D0, tag="trainable"),))
    with pytest.raises(ParamSpaceError):
        rebind(extract(s), other)


def test_shift_phase_never_trainable():
    s = PulseSchedule((ShiftPhase(0, 0.3, D0, tag="trainable"), Play(0, Envelope.constant(4, 0.1), D0, tag="trainable")))
    assert FrozenMask.default(s).frozen == (True, False)

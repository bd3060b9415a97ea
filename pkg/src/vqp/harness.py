"""Experiment orchestration: datasets, objectives, training loops and reports.

One run trains a classifier per seed and writes ``report.json`` (byte-stable
for a fixed config), ``timing.json`` (wall clock, kept apart so reports can be
compared byte for byte), a JSONL optimizer trace per seed, and before/after
schedules of the trainable pulses.

Readout: the Z expectations of qubits 0 and 1 pass through a softmax; class 0
wins ties. Each training sample's encoding pulses are simulated once; the
trainable schedule's propagator is then computed once per evaluation and
applied to every encoded state.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bayesopt
from .circuit import Circuit, build_encoding_circuit, build_vqc_baseline, lower
from .datasets import Dataset, make_split
from .device import DeviceModel, get_device, lookup_calibration
from .exceptions import VQPError
from .params import FrozenMask, ParamVector, denormalize, extract, normalize, rebind, reconstruct
from .pulse import (
    Play,
    PulseSchedule,
    ShiftPhase,
    accumulated_phases,
    export_waveform_csv,
    schedule_duration,
    schedule_to_dict,
)
from .rng import stream
from .sim import SimResult, evolve, measure, propagator, z_expectation, z_expectation_exact

log = logging.getLogger(__name__)

MODES = ("vqp", "vqc-bo", "vqc-grad-ref")
TASK_QUBITS = {"synthetic2": 2, "image4x4": 4}
REPORT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a run's result.

    ``seeds`` may be given as a count (``5`` means seeds 0..4).
    ``trust_region`` of ``None`` lets magnitudes roam all of [0, 1].
    """

    device: str = "quito_like"
    task: str = "synthetic2"
    n_train: int = 20
    n_test: int = 20
    jitter: float = 0.05
    shots: int = 256
    iterations: int = 30
    seeds: tuple = (0, 1, 2, 3, 4)
    mode: str = "vqp"
    kappa: float = bayesopt.KAPPA
    trust_region: float | None = 0.3
    drive_only: bool = False
    coupling: str = "effective"
    variant: bool = False
    n_perturb: int = bayesopt.N_PERTURB
    perturb_sigma: float = bayesopt.PERTURB_SIGMA
    learning_rate: float = 0.2

    def __post_init__(self):
        seeds = self.seeds
        if isinstance(seeds, (int, np.integer)):
            seeds = tuple(range(int(seeds)))
        object.__setattr__(self, "seeds", tuple(int(s) for s in seeds))
        if not self.seeds:
            raise VQPError("seeds must contain at least one seed")
        if self.shots < 1:
            raise VQPError("shots must be >= 1")
        if self.iterations < 1:
            raise VQPError("iterations must be >= 1")
        if self.mode not in MODES:
            raise VQPError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.task not in TASK_QUBITS:
            raise VQPError(f"task must be one of {sorted(TASK_QUBITS)}, got {self.task!r}")
        if self.coupling not in ("bus", "effective"):
            raise VQPError("coupling must be 'bus' or 'effective'")

    @property
    def num_qubits(self) -> int:
        return TASK_QUBITS[self.task]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise VQPError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# readout


def softmax(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def classify(result) -> tuple[int, np.ndarray]:
    """Class and softmax probabilities from the Z expectations of qubits 0 and 1.

    ``result`` is a :class:`~vqp.sim.SimResult` (measured expectations are
    used when present, exact ones otherwise) or a pair of scores.
    """
    if isinstance(result, SimResult):
        if result.z_expectation is not None:
            scores = result.z_expectation[:2]
        else:
            scores = [z_expectation_exact(result.final_state, q, result.num_qubits) for q in (0, 1)]
    else:
        scores = list(result)[:2]
    if len(scores) < 2:
        raise VQPError("classification needs two readout qubits")
    probs = softmax(scores)
    return (0 if probs[0] >= probs[1] else 1), probs


# ---------------------------------------------------------------------------
# per-seed evaluation context


@dataclass(frozen=True)
class Encoded:
    """Output of one sample's frozen encoding pulses."""

    state: np.ndarray
    duration: int
    phases: tuple  # ((channel name, accumulated phase), ...), nonzero only
    schedule: PulseSchedule


def encode_sample(features, device: DeviceModel, qubits, coupling: str) -> Encoded:
    sched = lower(build_encoding_circuit(features, len(qubits)), device, name="encoding")
    state = evolve(sched, device, qubits=qubits, coupling=coupling).final_state
    phases = tuple(sorted((ch.name, ph) for ch, ph in accumulated_phases(sched).items() if ph != 0.0))
    return Encoded(state, schedule_duration(sched), phases, sched)


def _with_frame(schedule: PulseSchedule, phases) -> PulseSchedule:
    """Prefix the frame phases left by the encoding pulses."""
    if not phases:
        return schedule
    from .pulse import Channel

    prefix = tuple(ShiftPhase(0, ph, Channel.parse(name), tag="encoding") for name, ph in phases)
    return PulseSchedule(prefix + schedule.instructions, name=schedule.name, device=schedule.device)


class Evaluator:
    """Simulates ``encoding -> trainable`` for a fixed dataset on one device."""

    def __init__(self, device: DeviceModel, cfg: TrainConfig, seed: int, train: Dataset, test: Dataset):
        self.device = device
        self.cfg = cfg
        self.seed = seed
        self.qubits = tuple(range(cfg.num_qubits))
        self.train, self.test = train, test
        self.encoded = {
            "train": [encode_sample(f, device, self.qubits, cfg.coupling) for f in train.features],
            "test": [encode_sample(f, device, self.qubits, cfg.coupling) for f in test.features],
        }
        self.shots_used = 0

    def final_states(self, schedule: PulseSchedule, split: str) -> list[np.ndarray]:
        cache = {}
        out = []
        for enc in self.encoded[split]:
            key = (enc.duration, enc.phases)
            if key not in cache:
                cache[key] = propagator(
                    _with_frame(schedule, enc.phases),
                    self.device,
                    qubits=self.qubits,
                    coupling=self.cfg.coupling,
                    t0=enc.duration,
                )
            out.append(cache[key] @ enc.state)
        return out

    def predict(self, schedule: PulseSchedule, split: str, stream_name: str, tag: int) -> tuple[np.ndarray, np.ndarray]:
        """Shot-sampled class predictions and readout scores for ``split``."""
        preds, scores = [], []
        n = len(self.qubits)
        for i, psi in enumerate(self.final_states(schedule, split)):
            counts = measure(psi, self.cfg.shots, stream(self.seed, stream_name, tag, i), n)
            z = (z_expectation(counts, 0), z_expectation(counts, 1))
            preds.append(classify(z)[0])
            scores.append(z)
        self.shots_used += self.cfg.shots * len(preds)
        return np.array(preds), np.array(scores)

    def labels(self, split: str) -> np.ndarray:
        return (self.train if split == "train" else self.test).labels

    def error_rate(self, schedule, split, stream_name, tag) -> float:
        preds, _ = self.predict(schedule, split, stream_name, tag)
        return float(np.mean(preds != self.labels(split)))


class Objective:
    """Training-set error rate of the schedule a unit-box point maps to."""

    def __init__(self, evaluator: Evaluator, to_schedule):
        self.evaluator = evaluator
        self.to_schedule = to_schedule
        self.calls = 0

    def __call__(self, u) -> float:
        sched = self.to_schedule(np.asarray(u, dtype=float))
        err = self.evaluator.error_rate(sched, "train", "shots-train", self.calls)
        self.calls += 1
        return err


def vqp_space(circuit_schedule: PulseSchedule, cfg: TrainConfig) -> tuple[ParamVector, callable]:
    mask = FrozenMask.default(circuit_schedule, drive_only=cfg.drive_only)
    p0 = extract(circuit_schedule, mask, trust_region=cfg.trust_region)

    def to_schedule(u):
        return reconstruct(circuit_schedule, denormalize(u, p0))

    return p0, to_schedule


def angles_to_unit(angles) -> np.ndarray:
    a = np.angle(np.exp(1j * np.asarray(angles, dtype=float)))
    return (a + np.pi) / (2 * np.pi)


def unit_to_angles(u) -> np.ndarray:
    return 2 * np.pi * np.asarray(u, dtype=float) - np.pi


# ---------------------------------------------------------------------------
# training


def _durations(ev: Evaluator, schedule: PulseSchedule) -> dict:
    meas = max(schedule_duration(lookup_calibration(ev.device.calibrations, "measure", (q,)).template) for q in ev.qubits)
    enc = ev.encoded["train"][0].duration
    train = schedule_duration(schedule, include_measurement=False)
    return {"encoding_dt": enc, "trainable_dt": train, "measurement_dt": meas, "total_dt": enc + train + meas}


def _grad_ref(ev: Evaluator, circuit: Circuit, cfg: TrainConfig, trace_path):
    """Gate-level parameter-shift descent on softmax cross-entropy (experimental)."""
    theta = circuit.angles()
    labels = ev.labels("train")
    trace, best = [], (np.inf, theta)
    if trace_path is not None:
        Path(trace_path).write_text("")

    def exact_scores(th):
        sched = lower(circuit.with_angles(th), ev.device)
        states = ev.final_states(sched, "train")
        n = len(ev.qubits)
        return np.array([[z_expectation_exact(s, q, n) for q in (0, 1)] for s in states])

    for it in range(cfg.iterations + 1):
        sched = lower(circuit.with_angles(theta), ev.device)
        err = ev.error_rate(sched, "train", "shots-train", it)
        if err < best[0]:
            best = (err, theta.copy())
        rec = {"iter": it, "x": angles_to_unit(theta).tolist(), "y": err, "incumbent": best[0]}
        trace.append(rec)
        if trace_path is not None:
            with open(trace_path, "a") as fh:
                fh.write(json.dumps(rec) + "\n")
        if it == cfg.iterations:
            break
        z = exact_scores(theta)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        dloss_dz = (p - np.eye(2)[labels]) / len(labels)  # d(mean CE)/dz
        grad = np.zeros_like(theta)
        for j in range(theta.size):
            shift = np.zeros_like(theta)
            shift[j] = np.pi / 2
            dz = (exact_scores(theta + shift) - exact_scores(theta - shift)) / 2
            grad[j] = np.sum(dloss_dz * dz)
        theta = theta - cfg.learning_rate * grad
    return trace, best[1]


def train_seed(cfg: TrainConfig, seed: int, out_dir: Path | None = None) -> dict:
    """Train and evaluate one seed; returns its report record."""
    device = get_device(cfg.device)
    train, test = make_split(cfg.task, cfg.n_train, cfg.n_test, seed, cfg.jitter)
    ev = Evaluator(device, cfg, seed, train, test)
    circuit = build_vqc_baseline(cfg.num_qubits, seed, cfg.variant)
    s0 = lower(circuit, device, name="trainable")
    trace_path = None if out_dir is None else out_dir / f"trace_seed{seed}.jsonl"

    init_train, _ = ev.predict(s0, "train", "eval-train", 0)
    init_test, _ = ev.predict(s0, "test", "eval-test", 0)
    ev.shots_used = 0  # count training shots only

    record = {"seed": seed}
    if cfg.mode == "vqp":
        p0, to_schedule = vqp_space(s0, cfg)
        obj = Objective(ev, to_schedule)
        state = bayesopt.run(
            obj, normalize(p0), cfg.iterations, bounds=p0.unit_bounds(), kappa=cfg.kappa, seed=seed,
            n_perturb=cfg.n_perturb, perturb_sigma=cfg.perturb_sigma, trace_path=trace_path,
        )
        u_best, _ = state.incumbent
        p_best = denormalize(u_best, p0)
        final = reconstruct(s0, p_best)
        trace = state.trace
        record["num_parameters"] = len(p0)
        record["trained_params"] = p_best.to_dict()
    elif cfg.mode == "vqc-bo":
        def to_schedule(u):
            return lower(circuit.with_angles(unit_to_angles(u)), device)

        obj = Objective(ev, to_schedule)
        state = bayesopt.run(
            obj, angles_to_unit(circuit.angles()), cfg.iterations, kappa=cfg.kappa, seed=seed,
            n_perturb=cfg.n_perturb, perturb_sigma=cfg.perturb_sigma, trace_path=trace_path,
        )
        u_best, _ = state.incumbent
        angles = unit_to_angles(u_best)
        final = lower(circuit.with_angles(angles), device, name="trainable")
        trace = state.trace
        record["num_parameters"] = int(angles.size)
        record["trained_angles"] = angles.tolist()
    else:
        trace, angles = _grad_ref(ev, circuit, cfg, trace_path)
        final = lower(circuit.with_angles(angles), device, name="trainable")
        record["num_parameters"] = int(angles.size)
        record["trained_angles"] = angles.tolist()
    train_shots = ev.shots_used

    final_train, _ = ev.predict(final, "train", "eval-train", 1)
    final_test, _ = ev.predict(final, "test", "eval-test", 1)
    record.update(
        {
            "initial_train_accuracy": _acc(init_train, train.labels),
            "initial_test_accuracy": _acc(init_test, test.labels),
            "final_train_accuracy": _acc(final_train, train.labels),
            "final_test_accuracy": _acc(final_test, test.labels),
            "evaluations": len(trace),
            "training_shots": train_shots,
            "trace": [{"iter": r["iter"], "y": r["y"], "incumbent": r["incumbent"]} for r in trace],
            "durations": _durations(ev, s0),
            "train_labels": train.labels.tolist(),
            "test_labels": test.labels.tolist(),
            "predictions": {
                "initial_train": init_train.tolist(),
                "initial_test": init_test.tolist(),
                "final_train": final_train.tolist(),
                "final_test": final_test.tolist(),
            },
        }
    )
    if out_dir is not None:
        _export(out_dir, seed, s0, final, ev.encoded["train"][0].schedule)
    return record


def _acc(preds, labels) -> float:
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))


def _export(out_dir: Path, seed: int, before: PulseSchedule, after: PulseSchedule, encoding: PulseSchedule):
    for tag, sched in (("before", before), ("after", after)):
        (out_dir / f"schedule_seed{seed}_{tag}.json").write_text(json.dumps(schedule_to_dict(sched)) + "\n")
        chans = sorted({ins.channel for ins in sched.instructions if isinstance(ins, Play)}, key=lambda c: c.name)
        export_waveform_csv(sched, chans, out_dir / f"waveforms_seed{seed}_{tag}.csv", nonzero_only=True)
    (out_dir / f"schedule_seed{seed}_encoding0.json").write_text(json.dumps(schedule_to_dict(encoding)) + "\n")


# ---------------------------------------------------------------------------
# reports


@dataclass
class RunReport:
    config: dict
    seeds: list
    failures: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    @property
    def summary(self) -> dict:
        done = self.seeds
        if not done:
            return {"completed_seeds": 0}
        keys = ("initial_train_accuracy", "initial_test_accuracy", "final_train_accuracy", "final_test_accuracy")
        out = {f"mean_{k}": float(np.mean([r[k] for r in done])) for k in keys}
        out["mean_test_improvement"] = out["mean_final_test_accuracy"] - out["mean_initial_test_accuracy"]
        out["completed_seeds"] = len(done)
        out["evaluations_per_seed"] = [r["evaluations"] for r in done]
        out["training_shots_per_seed"] = [r["training_shots"] for r in done]
        return out

    def to_dict(self) -> dict:
        """Report body; excludes wall-clock timing."""
        return {
            "version": REPORT_VERSION,
            "config": self.config,
            "summary": self.summary,
            "seeds": self.seeds,
            "failures": self.failures,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "report.json"
        path.write_text(self.to_json())
        (out / "timing.json").write_text(json.dumps(self.timing, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunReport":
        d = json.loads(Path(path).read_text())
        return cls(d["config"], d["seeds"], d.get("failures", []))


def verify_report(report: RunReport) -> list[str]:
    """Recompute accuracies from stored predictions; returns discrepancies."""
    problems = []
    for r in report.seeds:
        pr = r["predictions"]
        for key, labels in (("train", r["train_labels"]), ("test", r["test_labels"])):
            for stage in ("initial", "final"):
                acc = _acc(pr[f"{stage}_{key}"], labels)
                if acc != r[f"{stage}_{key}_accuracy"]:
                    problems.append(f"seed {r['seed']}: {stage}_{key}_accuracy {r[f'{stage}_{key}_accuracy']} != {acc}")
        inc = [t["incumbent"] for t in r["trace"]]
        if any(b > a for a, b in zip(inc, inc[1:])):
            problems.append(f"seed {r['seed']}: incumbent trace increases")
    return problems


def _seed_job(args):
    cfg, seed, out_dir = args
    try:
        return train_seed(cfg, seed, out_dir), None
    except Exception as exc:  # recorded per seed; other seeds still report
        log.exception("seed %d failed", seed)
        return None, {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}


def run_experiment(cfg: TrainConfig, out_dir=None, workers: int = 1) -> RunReport:
    """Train every seed of ``cfg``; writes artifacts to ``out_dir`` if given.

    Seeds are independent and may run in ``workers`` processes; results do
    not depend on the worker count.
    """
    t0 = time.perf_counter()
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, s, out) for s in cfg.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_seed_job, jobs))
    else:
        results = [_seed_job(j) for j in jobs]
    report = RunReport(
        config=cfg.to_dict(),
        seeds=[r for r, _ in results if r is not None],
        failures=[f for _, f in results if f is not None],
        timing={"wall_seconds": round(time.perf_counter() - t0, 3), "workers": workers},
    )
    if out is not None:
        report.save(out)
    return report


def cross_device_eval(report: RunReport, target_device: str) -> list[dict]:
    """Test accuracy of each seed's trained parameters re-lowered on another device.

    VQP runs transfer the trained amplitude vector onto the same circuit
    lowered for ``target_device``; VQC runs transfer the trained angles.
    """
    cfg = TrainConfig.from_dict(report.config)
    dev = get_device(target_device)
    out = []
    for r in report.seeds:
        seed = r["seed"]
        train, test = make_split(cfg.task, cfg.n_train, cfg.n_test, seed, cfg.jitter)
        tcfg = dataclasses.replace(cfg, device=target_device)
        ev = Evaluator(dev, tcfg, seed, train, test)
        circuit = build_vqc_baseline(cfg.num_qubits, seed, cfg.variant)
        if "trained_params" in r:
            s = lower(circuit, dev)
            mask = FrozenMask.default(s, drive_only=cfg.drive_only)
            p = rebind(ParamVector.from_dict(r["trained_params"]), s, mask)
            sched = reconstruct(s, p)
        else:
            sched = lower(circuit.with_angles(r["trained_angles"]), dev)
        preds, _ = ev.predict(sched, "test", "eval-test", 1)
        out.append({"seed": seed, "test_accuracy": _acc(preds, test.labels), "test_predictions": preds.tolist()})
    return out


def compare(cfg: TrainConfig, mode_a: str = "vqp", mode_b: str = "vqc-bo", out_dir=None, cross_device=None, workers=1) -> dict:
    """Run two modes under one config; checks that budgets match.

    Returns a dict with both summaries, the per-seed evaluation counts, and
    optional cross-device test accuracies.
    """
    out = None if out_dir is None else Path(out_dir)
    reports = {}
    for mode in (mode_a, mode_b):
        c = dataclasses.replace(cfg, mode=mode)
        reports[mode] = run_experiment(c, None if out is None else out / mode, workers=workers)
    evals = {m: [r["evaluations"] for r in rep.seeds] for m, rep in reports.items()}
    shots = {m: [r["training_shots"] for r in rep.seeds] for m, rep in reports.items()}
    result = {
        "modes": [mode_a, mode_b],
        "config": dataclasses.replace(cfg, mode=mode_a).to_dict(),
        "summaries": {m: rep.summary for m, rep in reports.items()},
        "evaluations": evals,
        "training_shots": shots,
        "equal_budget": evals[mode_a] == evals[mode_b] and shots[mode_a] == shots[mode_b],
    }
    if cross_device:
        result["cross_device"] = {
            "train_device": cfg.device,
            "test_device": cross_device,
            "results": {m: cross_device_eval(rep, cross_device) for m, rep in reports.items()},
        }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(json.dumps(result, indent=1, sort_keys=True) + "\n")
    return result

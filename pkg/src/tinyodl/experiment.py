"""Drift experiments: initial training, test0, ODL on test1, evaluation.

Each trial uses seed ``config.seed + trial`` for the input weights and the
test1 shuffle. The communication volume of a trial is measured against a
paired run with the same seed and pruning disabled.
"""
from __future__ import annotations

import copy
import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .costmodel import PowerParams, average_power
from .device import EdgeDevice, Mode
from .drift import ScriptedDrift, parse_drift
from .oselm import OSELMClassifier
from .protocol import (
    MemoryHub,
    OracleTeacher,
    TcpTransport,
    TeacherChannel,
    TeacherEndpoint,
    TeacherServer,
    parse_address,
)
from .pruning import DEFAULT_LADDER, AutoTuner

APPROACHES = ("noodl", "odlbase", "odlhash")


@dataclass(frozen=True)
class ExperimentConfig:
    approach: str = "odlhash"
    n_hidden: int = 128
    theta: object = 1.0  # float or "auto"
    ladder: tuple = DEFAULT_LADDER
    tuner_x: int = 10
    on_mismatch: str = "step"
    warmup: object = None
    reg_lambda: float = 1e-3
    alpha_scale: float = 1.0
    alpha_seed: object = None
    scalar: str = "float64"
    trials: int = 20
    seed: int = 0
    odl_fraction: float = 0.6
    transport: str = "memory"
    retries: int = 3
    drift: object = None  # None: known drift boundary; else a detector spec
    pre_events: int = 256
    periods: tuple = (1.0, 5.0, 10.0)

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}")
        if self.theta != "auto":
            t = float(self.theta)
            if not 0.0 < t <= 1.0:
                raise ValueError("theta must lie in (0, 1] or be 'auto'")
            object.__setattr__(self, "theta", t)
        if self.trials < 1:
            raise ValueError("trials must be positive")

    @property
    def prunes(self) -> bool:
        return self.theta == "auto" or self.theta < 1.0

    def make_tuner(self) -> AutoTuner:
        if self.theta == "auto":
            return AutoTuner(ladder=tuple(self.ladder), x=self.tuner_x, on_mismatch=self.on_mismatch)
        return AutoTuner.fixed(self.theta)


@dataclass
class TrialReport:
    approach: str
    n_hidden: int
    theta: str
    trial: int
    seed: int
    acc_before: float
    acc_after: float
    acc_after_baseline: float
    comm_volume_pct: float
    stream_len: int = 0
    queries_sent: int = 0
    queries_skipped: int = 0
    unavailable: int = 0
    retries: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    baseline_queries: int = 0
    numerical_errors: int = 0
    drift_at: int = -1
    final_theta: float = math.nan
    power_mW: dict = field(default_factory=dict)
    theta_trace: list = field(default_factory=list, repr=False)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    trials: list

    def values(self, name):
        return np.array([getattr(t, name) for t in self.trials], dtype=np.float64)

    def mean(self, name):
        return float(self.values(name).mean())

    def std(self, name):
        return float(self.values(name).std())


def _model(config: ExperimentConfig, seed: int) -> OSELMClassifier:
    return OSELMClassifier(
        n_hidden=config.n_hidden,
        weights="hash" if config.approach == "odlhash" else "stored",
        alpha_seed=config.alpha_seed,
        alpha_scale=config.alpha_scale,
        reg_lambda=config.reg_lambda,
        scalar=config.scalar,
        n_classes=6,
        random_state=seed,
    )


def _open_transport(config, endpoint, edge_id=0):
    """Returns (transport, cleanup)."""
    if config.transport == "memory":
        return MemoryHub(endpoint).connect(edge_id), lambda: None
    if config.transport == "tcp":
        server = TeacherServer(endpoint).start()
        client = TcpTransport(server.server_address)

        def close():
            client.close()
            server.shutdown()
            server.server_close()

        return client, close
    if config.transport.startswith("tcp:"):
        client = TcpTransport(parse_address(config.transport[4:]))
        return client, client.close
    raise ValueError(f"unknown transport {config.transport!r}")


def run_odl(model, stream, config: ExperimentConfig, tuner: AutoTuner, pre=None, train_X=None):
    """Stream events through a fresh edge device; returns the device.

    Without ``config.drift`` the device enters training mode before the
    first sample of ``stream``. Otherwise the events are ``pre`` followed by
    ``stream`` and the configured detector decides when training starts.
    """
    fixed = config.scalar == "fixed"
    n = stream.X.shape[1]
    known_X, known_y = stream.X, stream.y
    if pre is not None:
        known_X = np.concatenate([pre.X, stream.X])
        known_y = np.concatenate([pre.y, stream.y])
    endpoint = TeacherEndpoint(OracleTeacher(known_X, known_y, fixed), n, fixed)
    transport, close = _open_transport(config, endpoint)
    try:
        channel = TeacherChannel(transport, n_classes=6, retries=config.retries, fixed=fixed)
        if config.drift is None:
            device = EdgeDevice(model, tuner, ScriptedDrift(0), channel,
                                train_budget=len(stream), warmup=config.warmup)
            device.enter_training()
            device.drift_at = 0
            events = stream.X
        else:
            spec = config.drift
            if spec.strip().lower() == "scripted" and pre is not None:
                spec = f"scripted:{len(pre)}"
            detector = parse_drift(spec)
            if train_X is not None:
                detector.fit(train_X)
            device = EdgeDevice(model, tuner, detector, channel,
                                train_budget=len(stream), warmup=config.warmup)
            events = known_X
        for i, x in enumerate(events):
            was = device.mode
            device.step(x, i)
            if device.drift_at is None and was is Mode.PREDICTING and device.mode is Mode.TRAINING:
                device.drift_at = i
    finally:
        close()
    return device


def run_trial(splits, config: ExperimentConfig, trial: int) -> TrialReport:
    from .dataset import make_odl_partition

    seed = config.seed + trial
    model = _model(config, seed).fit(splits.train.X, splits.train.y)
    acc_before = float(np.mean(model.predict(splits.test0.X) == splits.test0.y))
    part = make_odl_partition(splits.test1, seed, config.odl_fraction)
    after = part.eval_after
    theta_label = "auto" if config.theta == "auto" else f"{config.theta:g}"

    if config.approach == "noodl":
        acc = float(np.mean(model.predict(after.X) == after.y))
        params = PowerParams()
        power = {T: average_power(params.with_period(T), 0.0, "predicting").avg_power_mW
                 for T in config.periods}
        return TrialReport("noodl", config.n_hidden, theta_label, trial, seed, acc_before,
                           acc, acc, 0.0, stream_len=len(part.odl_stream), power_mW=power)

    pre = None
    if config.drift is not None:
        k = min(config.pre_events, len(splits.test0))
        pre = splits.test0.take(np.random.default_rng(seed).permutation(len(splits.test0))[:k])
    extra = dict(pre=pre, train_X=splits.train.X)
    baseline = run_odl(copy.deepcopy(model), part.odl_stream, config, AutoTuner.fixed(1.0), **extra)
    acc_base = float(np.mean(baseline.model.predict(after.X) == after.y))
    if config.prunes:
        device = run_odl(model, part.odl_stream, config, config.make_tuner(), **extra)
        acc = float(np.mean(device.model.predict(after.X) == after.y))
    else:
        device, acc = baseline, acc_base

    led = device.ledger
    base_q = baseline.ledger.queries_sent
    q_frac = led.queries_sent / max(device.processed_in_training, 1)
    params = PowerParams()
    power = {T: average_power(params.with_period(T), q_frac).avg_power_mW for T in config.periods}
    return TrialReport(
        approach=config.approach,
        n_hidden=config.n_hidden,
        theta=theta_label,
        trial=trial,
        seed=seed,
        acc_before=acc_before,
        acc_after=acc,
        acc_after_baseline=acc_base,
        comm_volume_pct=100.0 * led.queries_sent / base_q if base_q else 0.0,
        stream_len=len(part.odl_stream),
        queries_sent=led.queries_sent,
        queries_skipped=led.queries_skipped,
        unavailable=led.unavailable,
        retries=led.retries,
        bytes_sent=led.bytes_sent,
        bytes_received=led.bytes_received,
        baseline_queries=base_q,
        numerical_errors=device.numerical_errors,
        drift_at=-1 if device.drift_at is None else device.drift_at,
        final_theta=device.tuner.theta,
        power_mW=power,
        theta_trace=[device.tuner.ladder[k] for k in device.tuner.trace],
    )


def _trial_job(args):
    splits, config, trial = args
    try:
        return run_trial(splits, config, trial)
    except Exception as exc:
        raise RuntimeError(f"trial {trial} (seed {config.seed + trial}) failed: {exc}") from exc


def run_experiment(splits, config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """All trials of one configuration, merged in trial order."""
    args = [(splits, config, t) for t in range(config.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            trials = list(pool.map(_trial_job, args))
    else:
        trials = [_trial_job(a) for a in args]
    return ExperimentReport(config, trials)


def sweep_theta(splits, config: ExperimentConfig, thetas, jobs=1):
    return [run_experiment(splits, replace(config, theta=t), jobs) for t in thetas]


# ---------------------------------------------------------------------------
# reports

CSV_FIELDS = [
    "approach", "n_hidden", "theta", "trial", "seed", "acc_before", "acc_after",
    "acc_after_baseline", "comm_volume_pct", "stream_len", "queries_sent",
    "queries_skipped", "unavailable", "retries", "bytes_sent", "bytes_received",
    "baseline_queries", "numerical_errors", "drift_at", "final_theta",
]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def report_rows(report: ExperimentReport):
    periods = report.config.periods
    header = CSV_FIELDS + [f"power_{T:g}s_mW" for T in periods]
    rows = []
    for t in report.trials:
        d = asdict(t)
        rows.append([_fmt(d[k]) for k in CSV_FIELDS] + [_fmt(t.power_mW[T]) for T in periods])
    for stat, fn in (("mean", np.mean), ("std", np.std)):
        row = []
        for k in CSV_FIELDS:
            if k in ("approach", "n_hidden", "theta"):
                row.append(_fmt(getattr(report.trials[0], k)))
            elif k == "trial":
                row.append(stat)
            elif k == "seed":
                row.append("")
            else:
                row.append(_fmt(float(fn(report.values(k)))))
        row += [_fmt(float(fn([t.power_mW[T] for t in report.trials]))) for T in periods]
        rows.append(row)
    return header, rows


def write_csv(reports, fh) -> None:
    """Write one or more experiment reports as CSV (per-trial rows, then mean/std)."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    writer = csv.writer(fh, lineterminator="\n")
    for k, rep in enumerate(reports):
        header, rows = report_rows(rep)
        if k == 0:
            writer.writerow(header)
        writer.writerows(rows)


def csv_text(reports) -> str:
    buf = io.StringIO()
    write_csv(reports, buf)
    return buf.getvalue()


def write_theta_trace(report: ExperimentReport, fh) -> None:
    """Plot data: ``trial,event,theta`` for every tuner observation."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["trial", "event", "theta"])
    for t in report.trials:
        for i, theta in enumerate(t.theta_trace):
            writer.writerow([t.trial, i, f"{theta:g}"])


def config_fields():
    return [f.name for f in fields(ExperimentConfig)]

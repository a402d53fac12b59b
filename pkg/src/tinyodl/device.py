"""Per-event mode machine of an edge device running on-device learning."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .oselm import NumericalError, Prediction
from .pruning import AutoTuner, Event, GateDecision, confidence, warmup_for

log = logging.getLogger(__name__)


class Mode(enum.Enum):
    PREDICTING = "predicting"
    TRAINING = "training"


class Outcome(enum.Enum):
    PREDICTED = "predicted"
    TRAINED = "trained"
    SKIPPED = "skipped"
    UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class StepResult:
    prediction: Prediction
    outcome: Outcome
    mode: Mode
    decision: GateDecision = None


class EdgeDevice:
    """One edge device: model, threshold tuner, drift detector and teacher channel.

    In predicting mode every event is classified and checked for drift. In
    training mode each event is classified, gated on confidence and either
    sent to the teacher and trained on, or skipped. Training ends once
    ``train_budget`` samples have been consumed.
    """

    def __init__(self, model, tuner: AutoTuner, detector, channel, train_budget: int,
                 warmup=None):
        self.model = model
        self.tuner = tuner
        self.detector = detector
        self.channel = channel
        self.train_budget = int(train_budget)
        self.warmup = warmup_for(model.n_hidden) if warmup is None else int(warmup)
        self.mode = Mode.PREDICTING
        self.budget = 0
        self.trained = 0
        self.numerical_errors = 0
        self.processed_in_training = 0
        self.drift_at = None

    @property
    def ledger(self):
        return self.channel.ledger

    def enter_training(self):
        self.mode = Mode.TRAINING
        self.budget = self.train_budget
        self.trained = 0
        self.detector.rebase()
        if self.budget <= 0:
            self.mode = Mode.PREDICTING

    def step(self, x, i: int) -> StepResult:
        x = np.asarray(x, dtype=np.float64)
        if self.mode is Mode.PREDICTING:
            if self.detector.is_drift(x, i):
                self.enter_training()
            return StepResult(self.model.predict_sample(x), Outcome.PREDICTED, Mode.PREDICTING)

        self.processed_in_training += 1
        pred = self.model.predict_sample(x)
        drift_active = self.detector.drift_ongoing(x, i)
        if drift_active:
            self.trained = 0
        decision = self.tuner.gate(confidence(pred), self.trained, self.warmup, drift_active)
        if decision.query:
            y = self.channel.acquire_label(x)
            if y is None:
                return StepResult(pred, Outcome.UNAVAILABLE, self.mode, decision)
            try:
                self.model.seq_train(x, y)
                self.trained += 1
            except NumericalError as exc:
                self.numerical_errors += 1
                log.warning("event %d: update rejected: %s", i, exc)
            match = pred.predicted_class == int(np.argmax(y))
            self.tuner.observe(Event.QUERIED_MATCH if match else Event.QUERIED_MISMATCH)
            outcome = Outcome.TRAINED
        else:
            self.channel.record_skip()
            self.tuner.observe(Event.SKIPPED_HIGH_CONF)
            outcome = Outcome.SKIPPED
        self.budget -= 1
        mode = self.mode
        if self.budget <= 0:
            self.mode = Mode.PREDICTING
        return StepResult(pred, outcome, mode, decision)

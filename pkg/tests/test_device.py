import numpy as np
import pytest

from tinyodl.device import EdgeDevice, Mode, Outcome
from tinyodl.drift import ScriptedDrift
from tinyodl.oselm import OSELMClassifier
from tinyodl.protocol import MemoryHub, OracleTeacher, TeacherChannel, TeacherEndpoint
from tinyodl.pruning import AutoTuner, Reason


@pytest.fixture
def setup(rng):
    X = rng.uniform(-1, 1, (120, 6))
    y = (X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)
    model = OSELMClassifier(n_hidden=10, n_classes=3, random_state=0).fit(X[:60], y[:60])
    hub = MemoryHub(TeacherEndpoint(OracleTeacher(X, y), 6))
    channel = TeacherChannel(hub.connect(0), 3, retries=1)

    def make(theta=1.0, trigger=5, budget=10, warmup=0):
        return EdgeDevice(model, AutoTuner.fixed(theta), ScriptedDrift(trigger), channel,
                          train_budget=budget, warmup=warmup)

    return X, y, hub, make


def test_drift_switches_mode_and_still_predicts(setup):
    X, _, _, make = setup
    dev = make(trigger=3)
    for i in range(3):
        assert dev.step(X[i], i).outcome is Outcome.PREDICTED
        assert dev.mode is Mode.PREDICTING
    r = dev.step(X[3], 3)
    assert r.outcome is Outcome.PREDICTED and r.prediction.probs.shape == (3,)
    assert dev.mode is Mode.TRAINING and dev.budget == 10


def test_confident_sample_is_skipped(setup):
    X, _, _, make = setup
    dev = make(theta=1e-9)
    dev.enter_training()
    dev.trained = 99
    beta = dev.model.beta_.copy()
    r = dev.step(X[70], 70)
    assert r.outcome is Outcome.SKIPPED and r.decision.reason is Reason.HIGH_CONFIDENCE
    np.testing.assert_array_equal(dev.model.beta_, beta)
    assert dev.budget == 9
    assert dev.ledger.queries_skipped == 1 and dev.ledger.frames_sent == 0


def test_query_trains(setup):
    X, _, _, make = setup
    dev = make()
    dev.enter_training()
    before = dev.model.trained_count_
    r = dev.step(X[70], 70)
    assert r.outcome is Outcome.TRAINED
    assert dev.model.trained_count_ == before + 1
    assert dev.trained == 1 and dev.ledger.queries_sent == 1


def test_budget_exhaustion_returns_to_predicting(setup):
    X, _, _, make = setup
    dev = make(budget=4, trigger=10**9)
    dev.enter_training()
    modes = [dev.step(X[60 + i], 60 + i).mode for i in range(4)]
    assert modes == [Mode.TRAINING] * 4
    assert dev.mode is Mode.PREDICTING
    assert dev.step(X[65], 65).outcome is Outcome.PREDICTED


def test_warmup_forces_queries(setup):
    X, _, _, make = setup
    dev = make(theta=1e-9, warmup=3, budget=5)
    dev.enter_training()
    outcomes = [dev.step(X[60 + i], 60 + i).outcome for i in range(5)]
    assert outcomes[:3] == [Outcome.TRAINED] * 3
    assert outcomes[3:] == [Outcome.SKIPPED] * 2


def test_default_warmup_floor(setup):
    _, _, _, make = setup
    dev = make(warmup=None)
    assert dev.warmup == 288


def test_unavailable_teacher_keeps_budget(setup):
    X, _, hub, make = setup
    dev = make()
    dev.enter_training()
    hub.online = False
    r = dev.step(X[70], 70)
    assert r.outcome is Outcome.UNAVAILABLE
    assert dev.budget == 10
    assert dev.ledger.unavailable == 1 and dev.ledger.retries == 1


def test_numerical_error_is_counted_not_raised(setup):
    X, _, _, make = setup
    dev = make()
    dev.enter_training()
    dev.model.P_ = -50.0 * np.eye(10)
    r = dev.step(X[70], 70)
    assert r.outcome is Outcome.TRAINED
    assert dev.numerical_errors == 1
    assert dev.trained == 0

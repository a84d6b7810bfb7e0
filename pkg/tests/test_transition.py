import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pvos.errors import ConfigError, StateError
from pvos.transition import AstConfig, AstController, State

PASS = (0.9, 0.9)
FAIL_P = (0.9, 0.4)


def block(x0):
    m = np.zeros((10, 20), bool)
    m[2:8, x0 : x0 + 6] = True
    return m


AGREE = (block(2), block(2))
DISAGREE = (block(2), block(12))


def activate(ctrl, n=None):
    n = n or ctrl.config.window_size
    for i in range(n):
        top = ctrl.observe_detection(*PASS, i)
    assert top is not None
    return top


class TestEntry:
    def test_window_example(self):
        ctrl = AstController(AstConfig(window_size=3, top_k=2))
        assert ctrl.observe_detection(0.8, 0.6, 0) is None
        assert ctrl.observe_detection(0.75, 0.9, 1) is None
        top = ctrl.observe_detection(0.9, 0.8, 2)
        assert [o.s_iou for o in top] == [0.9, 0.8]
        assert [o.frame_index for o in top] == [2, 0]
        assert ctrl.state is State.TRACKING

    def test_presence_failure_blocks_until_it_slides_out(self):
        ctrl = AstController(AstConfig(window_size=3))
        seq = [PASS, FAIL_P, PASS, PASS, PASS]
        results = [ctrl.observe_detection(*o, i) for i, o in enumerate(seq)]
        assert [r is not None for r in results] == [False, False, False, False, True]

    def test_never_before_window_full(self):
        ctrl = AstController()
        for i in range(4):
            assert ctrl.observe_detection(*PASS, i) is None
        assert ctrl.state is State.DETECTING

    def test_thresholds_strict(self):
        ctrl = AstController()
        assert not ctrl.passes(0.7, 0.9)
        assert not ctrl.passes(0.9, 0.5)
        assert ctrl.passes(0.7000001, 0.5000001)

    def test_activation_event(self):
        events = []
        ctrl = AstController(emit=events.append)
        activate(ctrl)
        assert [e.event for e in events] == ["activation"]
        assert events[0].detail["top_k"] == [0, 1, 2]

    def test_observe_detection_while_tracking(self):
        ctrl = AstController()
        activate(ctrl)
        with pytest.raises(StateError):
            ctrl.observe_detection(*PASS, 9)


class TestExit:
    def test_no_check_on_first_tracking_frame(self):
        ctrl = AstController()
        activate(ctrl)
        assert ctrl.observe_tracking(5) is False
        assert [ctrl.observe_tracking(i) for i in range(6, 10)] == [False, False, False, True]

    def test_full_positive_queue(self):
        ctrl = AstController()
        activate(ctrl)
        for _ in range(5):
            assert ctrl.record_vote(*AGREE) is False
        assert ctrl.consensus_score() == 5

    def test_three_failures_after_full_queue(self):
        ctrl = AstController()
        activate(ctrl)
        for _ in range(5):
            ctrl.record_vote(*AGREE)
        scores = []
        fired = []
        for _ in range(3):
            fired.append(ctrl.record_vote(*DISAGREE))
            scores.append(ctrl.consensus_score())
        assert fired == [False, False, True]
        assert scores[:2] == [3, 1]
        assert ctrl.state is State.DETECTING

    def test_partial_queue_never_falls_back(self):
        ctrl = AstController()
        activate(ctrl)
        assert [ctrl.record_vote(*DISAGREE) for _ in range(4)] == [False] * 4
        assert ctrl.record_vote(*DISAGREE) is True

    def test_vote_threshold_inclusive(self):
        ctrl = AstController(AstConfig(delta_c=0.5, queue_length=1))
        activate(ctrl)
        a = np.zeros((1, 4), bool)
        a[0, :2] = True
        b = np.zeros((1, 4), bool)
        b[0, 1] = True
        assert ctrl.record_vote(a, b) is False
        assert ctrl.vote_queue[-1] == 1

    def test_fallback_events(self):
        events = []
        ctrl = AstController(AstConfig(queue_length=1), emit=events.append)
        activate(ctrl)
        ctrl.record_vote(*DISAGREE, frame_index=42)
        assert [e.event for e in events] == ["activation", "check", "fallback"]
        assert events[-1].frame == 42


class TestReset:
    def test_reset_after_fallback_accepts_detection(self):
        ctrl = AstController(AstConfig(queue_length=1))
        activate(ctrl)
        ctrl.record_vote(*DISAGREE)
        assert ctrl.observe_detection(*PASS, 100) is None

    def test_reset_fresh_is_noop(self):
        ctrl = AstController()
        ctrl.reset()
        assert ctrl.state is State.DETECTING and not ctrl.entry_window and not ctrl.vote_queue

    def test_reset_clears_queue(self):
        ctrl = AstController()
        activate(ctrl)
        for _ in range(4):
            ctrl.record_vote(*DISAGREE)
        assert len(ctrl.vote_queue) == 4
        ctrl.reset()
        activate(ctrl)
        assert [ctrl.record_vote(*DISAGREE) for _ in range(4)] == [False] * 4


@pytest.mark.parametrize(
    "kwargs",
    [dict(window_size=0), dict(top_k=6), dict(delta_iou=1.0), dict(delta_p=-0.1), dict(delta_c=0.0)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        AstConfig(**kwargs)


def test_presence_gate_may_be_disabled():
    assert AstConfig(delta_p=0.0).delta_p == 0.0


ops = st.lists(
    st.one_of(
        st.tuples(st.just("det"), st.floats(0, 1), st.floats(0, 1)),
        st.tuples(st.just("trk"), st.booleans(), st.just(0.0)),
        st.tuples(st.just("reset"), st.just(0.0), st.just(0.0)),
    ),
    max_size=80,
)


@given(ops)
@settings(max_examples=150)
def test_state_machine_safety(seq):
    """Random driving never yields a transition other than the two legal ones,
    and activation matches a direct run-length reconstruction of the window."""
    cfg = AstConfig(window_size=3, top_k=2, check_interval=2, queue_length=3)
    events = []
    ctrl = AstController(cfg, emit=events.append)
    run = 0  # consecutive passing detections since last (re)entry into Detecting
    for t, (kind, a, b) in enumerate(seq):
        before = ctrl.state
        n_events = len(events)
        if kind == "reset":
            ctrl.reset()
            run = 0
            assert ctrl.state is State.DETECTING
            continue
        if before is State.DETECTING:
            if kind != "det":
                continue
            top = ctrl.observe_detection(a, b, t)
            run = run + 1 if (a > cfg.delta_iou and b > cfg.delta_p) else 0
            assert (top is not None) == (run >= cfg.window_size)
            if top is not None:
                assert ctrl.state is State.TRACKING
                assert [e.event for e in events[n_events:]] == ["activation"]
                run = 0
            else:
                assert ctrl.state is State.DETECTING
        else:
            if kind != "trk":
                continue
            if ctrl.observe_tracking(t):
                fired = ctrl.record_vote(*(AGREE if a else DISAGREE), frame_index=t)
                assert fired == (ctrl.state is State.DETECTING)
                if fired:
                    assert events[-1].event == "fallback"
                    run = 0
            else:
                assert ctrl.state is State.TRACKING

import random
from collections import deque

from hypothesis import given, settings, strategies as st

from btw.engine.buffers import Envelope, MessageBuffer, protocol_of

messages = st.sampled_from(["Note", "Memo"])
# True puts the next envelope, False takes one
commands = st.lists(st.one_of(st.tuples(st.just(True), messages), st.tuples(st.just(False), st.none())), max_size=40)


def envelope(message: str, n: int) -> Envelope:
    return Envelope(message, [{"n": n}], sender="Writer", sent_at=n)


@given(commands)
@settings(max_examples=200, deadline=None)
def test_fifo_behaves_like_a_queue(ops):
    buffer = MessageBuffer("Tray", "fifo")
    model: deque = deque()
    rng = random.Random(0)
    for n, (is_put, message) in enumerate(ops):
        if is_put:
            buffer.put(envelope(message, n))
            model.append(n)
        else:
            taken = buffer.take(rng)
            assert (taken.record["n"] if taken else None) == (model.popleft() if model else None)
        assert len(buffer) == len(model)


@given(commands)
@settings(max_examples=200, deadline=None)
def test_lifo_behaves_like_a_stack(ops):
    buffer = MessageBuffer("Tray", "lifo")
    model: list = []
    rng = random.Random(0)
    for n, (is_put, message) in enumerate(ops):
        if is_put:
            buffer.put(envelope(message, n))
            model.append(n)
        else:
            taken = buffer.take(rng)
            assert (taken.record["n"] if taken else None) == (model.pop() if model else None)


@given(st.lists(messages, min_size=1, max_size=20), st.integers(0, 2**32))
@settings(max_examples=100, deadline=None)
def test_random_takes_each_envelope_once(sent, seed):
    buffer = MessageBuffer("Tray", "random")
    for n, message in enumerate(sent):
        buffer.put(envelope(message, n))
    rng = random.Random(seed)
    taken = [buffer.take(rng).record["n"] for _ in sent]
    assert sorted(taken) == list(range(len(sent)))
    assert buffer.take(rng) is None


def test_take_filters_by_message_type():
    buffer = MessageBuffer("Tray")
    buffer.put(envelope("Memo", 0))
    buffer.put(envelope("Note", 1))
    assert buffer.has({"Note"})
    assert not buffer.has({"Letter"})
    assert buffer.take(random.Random(0), {"Note"}).record == {"n": 1}
    assert buffer.take(random.Random(0), {"Note"}) is None
    assert len(buffer) == 1


def test_predicate_buffers_serve_matches_first():
    buffer = MessageBuffer("Tray", "predicate")
    for n in range(4):
        buffer.put(envelope("Note", n))

    def urgent(e: Envelope) -> bool:
        return e.record["n"] % 2 == 1

    rng = random.Random(0)
    assert [buffer.take(rng, predicate=urgent).record["n"] for _ in range(4)] == [1, 3, 0, 2]


def test_protocol_names():
    assert protocol_of("predicate:m.urgent") == "predicate"
    assert protocol_of("lifo") == "lifo"


def test_empty_envelope_record():
    assert Envelope("Note", []).record == {}


def long_run(seed: int, count: int = 1000):
    """A seeded stream of (is_put, message, n) operations, a little heavier on puts."""
    rng = random.Random(seed)
    return [(rng.random() < 0.55, rng.choice(["Note", "Memo"]), n) for n in range(count)]


@given(st.integers(0, 2**32), st.sampled_from(["fifo", "lifo"]))
@settings(max_examples=30, deadline=None)
def test_ordered_protocols_over_long_runs(seed, protocol):
    buffer = MessageBuffer("Tray", protocol)
    model: deque = deque()
    rng = random.Random(seed)
    for is_put, message, n in long_run(seed):
        if is_put:
            buffer.put(envelope(message, n))
            model.append(n)
            continue
        taken = buffer.take(rng)
        expected = (model.popleft() if protocol == "fifo" else model.pop()) if model else None
        assert (taken.record["n"] if taken else None) == expected
    assert len(buffer) == len(model)


@given(st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_random_protocol_matches_a_seeded_reference(seed):
    buffer = MessageBuffer("Tray", "random")
    model: list = []
    buffer_rng, model_rng = random.Random(seed), random.Random(seed)
    for is_put, message, n in long_run(seed):
        if is_put:
            buffer.put(envelope(message, n))
            model.append(n)
            continue
        taken = buffer.take(buffer_rng)
        expected = model.pop(model_rng.randrange(len(model))) if model else None
        assert (taken.record["n"] if taken else None) == expected
        assert len(buffer) == len(model)


@given(st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_predicate_protocol_matches_two_queues(seed):
    buffer = MessageBuffer("Tray", "predicate")
    urgent, routine = deque(), deque()
    rng = random.Random(seed)

    def is_urgent(e: Envelope) -> bool:
        return e.record["n"] % 3 == 0

    for is_put, message, n in long_run(seed):
        if is_put:
            buffer.put(envelope(message, n))
            (urgent if n % 3 == 0 else routine).append(n)
            continue
        taken = buffer.take(rng, predicate=is_urgent)
        expected = urgent.popleft() if urgent else (routine.popleft() if routine else None)
        assert (taken.record["n"] if taken else None) == expected
    assert len(buffer) == len(urgent) + len(routine)

from __future__ import annotations

import numpy as np

from modules.rng import StreamFactory


def test_streams_are_reproducible_by_key() -> None:
    a = StreamFactory(42).individual_stream(7).random(5)
    b = StreamFactory(42).individual_stream(7).random(5)

    np.testing.assert_array_equal(a, b)


def test_keys_and_seeds_give_distinct_streams() -> None:
    factory = StreamFactory(42)

    assert not np.array_equal(factory.individual_stream(0).random(4), factory.individual_stream(1).random(4))
    assert not np.array_equal(factory.individual_stream(0).random(4), StreamFactory(43).individual_stream(0).random(4))
    assert not np.array_equal(factory.aux_stream().random(4), factory.generator(0).random(4))


def test_stream_does_not_depend_on_access_order() -> None:
    first = StreamFactory(5)
    first.individual_stream(3).random(100)
    late = first.individual_stream(9).random(3)

    np.testing.assert_array_equal(late, StreamFactory(5).individual_stream(9).random(3))


def test_replicate_factories_are_independent_and_stable() -> None:
    base = StreamFactory(11)
    seeds = [base.spawn(i).seed for i in range(5)]

    assert len(set(seeds)) == 5
    assert seeds == [StreamFactory(11).spawn(i).seed for i in range(5)]
    assert base.spawn(0).seed != StreamFactory(12).spawn(0).seed


def test_event_stream_buffers_match_generator_draws() -> None:
    events = StreamFactory(3).event_stream()
    reference = StreamFactory(3).event_stream().generator.random(10).tolist()

    assert [events.uniform() for _ in range(10)] == reference


def test_event_stream_draw_ranges() -> None:
    events = StreamFactory(1).event_stream()
    uniforms = [events.uniform() for _ in range(5000)]
    exponentials = [events.exponential() for _ in range(5000)]

    assert all(0.0 <= v < 1.0 for v in uniforms)
    assert all(v >= 0.0 for v in exponentials)
    assert abs(np.mean(exponentials) - 1.0) < 0.1

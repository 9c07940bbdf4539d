from __future__ import annotations

import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import Failing, Stage, null_skip_oracle, reachable_accepts
from tdenrich.engine import (
    ComponentDescriptor,
    Pipeline,
    RunContext,
    TerminalStage,
    apply_component,
    config_digest,
    make_rng,
    not_null,
    validate_chain,
)
from tdenrich.errors import (
    CheckpointMismatch,
    ComponentFailure,
    NoCheckpoint,
    OutputCollision,
    TerminalStageError,
    UnsatisfiedInput,
)
from tdenrich.frame import Frame
from tdenrich.persistence.checkpoints import CheckpointStore
from tdenrich.transforms import Lexicon, SentimentClassifier

HYDRATE_OUT = ["text", "author_id", "screen_name", "user_location", "profile_image_url", "created_at"]


def hydrator():
    return Stage(["tweet_id"], HYDRATE_OUT, name="Rehydrate")


def geo():
    return Stage(["user_location"], ["geo_location_country", "geo_location_address"], name="GeoNamesDecoder")


def sentiment():
    return Stage(["text"], ["sentiment"], fn=lambda t: len(t) % 3, name="SentimentClassifier")


# -- descriptors --------------------------------------------------------------


def test_descriptor_requires_outputs():
    with pytest.raises(ValueError):
        ComponentDescriptor("X", "1.0.0", "0" * 64, ("a",), ())


def test_descriptor_outputs_disjoint_from_inputs():
    with pytest.raises(ValueError):
        ComponentDescriptor("X", "1.0.0", "0" * 64, ("a",), ("a", "b"))


def test_config_digest_deterministic_and_ignores_secrets():
    a = config_digest({"x": 1, "y": [1, 2]})
    assert a == config_digest({"y": [1, 2], "x": 1})
    assert config_digest({"x": 1, "api_key": "k1"}, {"api_key"}) == config_digest({"x": 1, "api_key": "k2"}, {"api_key"})
    assert a != config_digest({"x": 2, "y": [1, 2]})


# -- add_component / validate -------------------------------------------------


def test_listing_order_accepted():
    pipe = Pipeline(initial_columns=["tweet_id"])
    h, s = hydrator(), sentiment()
    assert pipe.add_component(h).add_component(s) is pipe
    assert pipe.components == [h, s]


def test_sentiment_first_is_unsatisfied():
    pipe = Pipeline(initial_columns=["tweet_id"])
    with pytest.raises(UnsatisfiedInput) as err:
        pipe.add_component(sentiment())
    assert set(err.value.missing) == {"text"}
    assert "text" in str(err.value)
    assert len(pipe) == 0


def test_unsatisfied_input_hints_suppliers():
    pipe = Pipeline(initial_columns=["tweet_id"])
    with pytest.raises(UnsatisfiedInput) as err:
        pipe.add_component(Stage(["user_location"], ["x"]))
    assert "Rehydrate" in err.value.missing["user_location"]


def test_output_collision():
    pipe = Pipeline(initial_columns=["text"])
    pipe.add_component(Stage(["text"], ["sentiment"], name="A"))
    with pytest.raises(OutputCollision):
        pipe.add_component(Stage(["text"], ["sentiment"], name="B"))


def test_initial_column_collision():
    with pytest.raises(OutputCollision):
        Pipeline(initial_columns=["text", "lang"]).add_component(Stage(["lang"], ["text2", "text"]))


def test_nothing_after_terminal_stage():
    class Scrub(TerminalStage):
        def inputs(self):
            return []

        def apply(self, frame):
            return frame

    pipe = Pipeline(initial_columns=["text"])
    pipe.add_component(Scrub())
    with pytest.raises(TerminalStageError):
        pipe.add_component(Stage(["text"], ["sentiment"]))


def test_validate_listing_pipeline_ok():
    pipe = Pipeline(initial_columns=["tweet_id"])
    pipe.add_component(hydrator()).add_component(geo()).add_component(sentiment())
    report = pipe.validate()
    assert report.ok and not report.errors()
    assert report.entries[1].providers == {"user_location": "Rehydrate#1"}


def test_validate_empty_pipeline():
    report = Pipeline().validate()
    assert report.ok and report.entries == []


def test_validate_geo_before_hydrate():
    report = validate_chain([geo().describe(), hydrator().describe()], ["tweet_id"])
    assert not report.ok
    assert report.entries[0].missing == ["user_location"]
    assert isinstance(report.errors()[0], UnsatisfiedInput)


def test_explain_lists_providers():
    pipe = Pipeline(initial_columns=["tweet_id"]).add_component(hydrator()).add_component(sentiment())
    text = pipe.explain()
    assert "Rehydrate#1" in text and "SentimentClassifier: ok" in text


@given(st.data())
def test_add_component_matches_reachability_oracle(data):
    universe = [f"c{i}" for i in range(8)]
    initial = data.draw(st.sets(st.sampled_from(universe), max_size=3))
    chain = data.draw(
        st.lists(
            st.tuples(
                st.sets(st.sampled_from(universe), max_size=3),
                st.sets(st.sampled_from(universe), min_size=1, max_size=3),
            ).filter(lambda io: not io[0] & io[1]),
            max_size=6,
        )
    )
    pipe = Pipeline(initial_columns=sorted(initial))
    decisions = []
    for inputs, outputs in chain:
        try:
            pipe.add_component(Stage(sorted(inputs), sorted(outputs)))
            decisions.append(True)
        except (UnsatisfiedInput, OutputCollision):
            decisions.append(False)
    assert decisions == reachable_accepts(initial, chain)


def test_validation_order_freedom():
    # two independent components commute
    a = Stage(["text"], ["x"], name="A")
    b = Stage(["text"], ["y"], name="B")
    assert validate_chain([a.describe(), b.describe()], ["text"]).ok
    assert validate_chain([b.describe(), a.describe()], ["text"]).ok


# -- run ----------------------------------------------------------------------


def test_sentiment_null_propagates(tmp_path):
    lexicon = Lexicon(positive=["good"], negative=["bad"])
    pipe = Pipeline(initial_columns=["text"], seed=1).add_component(SentimentClassifier(lexicon))
    out = pipe.run(Frame.from_dict({"text": ["good", None, "bad"]}), tmp_path)
    assert out["sentiment"] == (2, None, 0)


def test_empty_pipeline_is_identity(tmp_path):
    frame = Frame.from_dict({"tweet_id": ["1", "2"]})
    assert Pipeline(seed=0).run(frame, tmp_path) == frame


def test_component_sees_only_non_null_rows(tmp_path):
    stage = Stage(["a"], ["b"], fn=lambda a: a * 2)
    frame = Frame.from_dict({"a": [1, None, 3, None]})
    out = Pipeline(initial_columns=["a"], seed=0).add_component(stage).run(frame, tmp_path)
    assert out["b"] == (2, None, 6, None)
    assert stage.rows_seen == [2]


def test_all_null_inputs_skip_the_component(tmp_path):
    stage = Stage(["a"], ["b"])
    frame = Frame.from_dict({"a": [None, None]})
    out = Pipeline(initial_columns=["a"], seed=0).add_component(stage).run(frame, tmp_path)
    assert out["b"] == (None, None) and stage.calls == 0


def test_null_skip_disabled_passes_every_row(tmp_path):
    stage = Stage(["a"], ["b"], fn=lambda a: a is None, null_skip=False)
    out = Pipeline(initial_columns=["a"], seed=0).add_component(stage).run(Frame.from_dict({"a": [1, None]}), tmp_path)
    assert out["b"] == (False, True)


def test_not_null_decorator():
    class Partial(Stage):
        null_skip = False

        @not_null("a")
        def infer(self, data):
            return {"b": [v + 1 for v in data["a"]]}

    comp = Partial(["a", "z"], ["b"], null_skip=False)
    out = apply_component(comp, Frame.from_dict({"a": [1, None, 2], "z": [None, None, None]}))
    assert out["b"] == (2, None, 3)


def test_result_shape_is_checked(tmp_path):
    class Short(Stage):
        def infer(self, data):
            return {"b": [1]}

    pipe = Pipeline(initial_columns=["a"], seed=0).add_component(Short(["a"], ["b"]))
    with pytest.raises(ComponentFailure) as err:
        pipe.run(Frame.from_dict({"a": [1, 2]}), tmp_path)
    assert isinstance(err.value.cause, ValueError)


def test_failure_keeps_prior_checkpoints(tmp_path):
    pipe = Pipeline(initial_columns=["a"], seed=0)
    pipe.add_component(Stage(["a"], ["b"], name="First"))
    pipe.add_component(Stage(["b"], ["c"], name="Second"))
    pipe.add_component(Failing(["c"], ["d"], name="Boom"))
    with pytest.raises(ComponentFailure) as err:
        pipe.run(Frame.from_dict({"a": [1, 2]}), tmp_path)
    assert err.value.kind == "Boom" and err.value.position == 3 and err.value.last_checkpoint == 2
    assert "Boom" in str(err.value) and "#002" in str(err.value)
    assert sorted(CheckpointStore(tmp_path).metas()) == [0, 1, 2]


def test_rng_is_keyed_by_seed_and_position():
    a = make_rng(7, 3).integers(0, 2**32, 5)
    assert (a == make_rng(7, 3).integers(0, 2**32, 5)).all()
    assert not (a == make_rng(7, 4).integers(0, 2**32, 5)).all()
    assert RunContext(seed=7, position=3).rng.integers(0, 2**32) == make_rng(7, 3).integers(0, 2**32)


def test_map_batches_preserves_order():
    ctx = RunContext(max_workers=4)
    seen = set()

    def work(x):
        seen.add(threading.get_ident())
        return x * x

    assert ctx.map_batches(work, list(range(20))) == [x * x for x in range(20)]


def test_generated_seed_is_recorded():
    pipe = Pipeline()
    assert 0 <= pipe.seed < 2**64


# -- resume -------------------------------------------------------------------


def _three(tag2: str = ""):
    s1 = Stage(["a"], ["b"], fn=lambda a: a + 1, name="One")
    s2 = Stage(["b"], ["c"], fn=lambda b: b * 10, name="Two", tag=tag2)
    s3 = Stage(["c"], ["d"], fn=lambda c: c - 1, name="Three")
    return s1, s2, s3


def _pipe(stages, seed=5):
    pipe = Pipeline(initial_columns=["a"], seed=seed)
    for s in stages:
        pipe.add_component(s)
    return pipe


FRAME = Frame.from_dict({"a": [1, None, 3]})


def test_resume_after_component_two_runs_only_three(tmp_path):
    s1, s2, s3 = _three()
    _pipe([s1, s2]).run(FRAME, tmp_path)
    t1, t2, t3 = _three()
    out = _pipe([t1, t2, t3]).resume(tmp_path)
    assert (t1.calls, t2.calls, t3.calls) == (0, 0, 1)
    assert out == _pipe(_three()).run(FRAME, tmp_path / "fresh")


def test_resume_after_failure(tmp_path):
    s1, s2, _ = _three()
    with pytest.raises(ComponentFailure):
        _pipe([s1, s2, Failing(["c"], ["d"], name="Three")]).run(FRAME, tmp_path)
    t1, t2, t3 = _three()
    pipe = _pipe([t1, t2, t3])
    out = pipe.resume(tmp_path)
    assert t3.calls == 1 and t1.calls == t2.calls == 0
    assert pipe.last_run.executed == [3]
    assert out["d"] == (19, None, 39)


def test_resume_with_changed_config_raises(tmp_path):
    _pipe(_three()).run(FRAME, tmp_path)
    with pytest.raises(CheckpointMismatch) as err:
        _pipe(_three(tag2="edited")).resume(tmp_path)
    assert err.value.position == 2 and err.value.reusable == 1


def test_resume_discard_stale_reuses_prefix(tmp_path):
    _pipe(_three()).run(FRAME, tmp_path)
    t1, t2, t3 = _three(tag2="edited")
    _pipe([t1, t2, t3]).resume(tmp_path, discard_stale=True)
    assert (t1.calls, t2.calls, t3.calls) == (0, 1, 1)


def test_resume_empty_workdir(tmp_path):
    with pytest.raises(NoCheckpoint):
        _pipe(_three()).resume(tmp_path)
    stages = _three()
    out = _pipe(stages).resume(tmp_path, FRAME, allow_fresh=True)
    assert all(s.calls == 1 for s in stages)
    assert out["d"] == (19, None, 39)


def test_resume_with_other_seed_raises(tmp_path):
    _pipe(_three(), seed=1).run(FRAME, tmp_path)
    with pytest.raises(CheckpointMismatch) as err:
        _pipe(_three(), seed=2).resume(tmp_path)
    assert err.value.position == 0


def test_resume_with_other_input_raises(tmp_path):
    _pipe(_three()).run(FRAME, tmp_path)
    with pytest.raises(CheckpointMismatch):
        _pipe(_three()).resume(tmp_path, Frame.from_dict({"a": [2]}))


def test_corrupt_checkpoint_is_recomputed(tmp_path):
    _pipe(_three()).run(FRAME, tmp_path)
    csv = next((tmp_path / "checkpoints").glob("002-*.csv"))
    csv.write_text("garbage", encoding="utf-8")
    t1, t2, t3 = _three()
    out = _pipe([t1, t2, t3]).resume(tmp_path)
    assert (t1.calls, t2.calls, t3.calls) == (0, 1, 1)
    assert out["d"] == (19, None, 39)


# -- null-skip oracle ---------------------------------------------------------


@given(st.lists(st.tuples(st.none() | st.integers(-5, 5), st.none() | st.integers(-5, 5)), max_size=30))
def test_null_skip_matches_oracle(rows):
    frame = Frame.from_dict({"x": [r[0] for r in rows], "y": [r[1] for r in rows]})
    fn = lambda x, y: x * 100 + y  # noqa: E731
    out = apply_component(Stage(["x", "y"], ["z", "w"], fn=fn), frame)
    expected = null_skip_oracle(frame, ["x", "y"], ["z", "w"], fn)
    assert list(out["z"]) == expected["z"] and list(out["w"]) == expected["w"]

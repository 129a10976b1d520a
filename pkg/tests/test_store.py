from __future__ import annotations

import json

import pytest

from themekit import (
    AnalysisContext,
    DataError,
    DigestMismatchError,
    QualityAnnotation,
    RunStore,
    StoreError,
    StoreLockedError,
    Theme,
    ThemeSet,
    Verdict,
    generate_corpus,
    list_runs,
)
from themekit.store import open_or_create


@pytest.fixture
def store(tmp_path, ctx):
    s = RunStore.create(tmp_path / "run1", generate_corpus(6, seed=1), ctx, config={"k": 3})
    yield s
    s.close()


class TestLifecycle:
    def test_create_then_open(self, tmp_path, ctx, store):
        store.close()
        reopened = RunStore.open(tmp_path / "run1")
        assert reopened.run_id == "run1"
        assert len(reopened.dataset()) == 6
        assert reopened.manifest["config"] == {"k": 3}
        reopened.close()

    def test_open_or_create(self, tmp_path, ctx):
        first = open_or_create(tmp_path / "r", dataset=generate_corpus(3, seed=0), context=ctx)
        first.close()
        second = open_or_create(tmp_path / "r")
        assert second.run_id == "r"
        second.close()
        with pytest.raises(StoreError):
            open_or_create(tmp_path / "fresh")

    def test_create_refuses_existing(self, tmp_path, ctx, store):
        with pytest.raises(StoreError):
            RunStore.create(tmp_path / "run1", generate_corpus(3, seed=0), ctx)

    def test_lock_excludes_second_writer(self, tmp_path, ctx, store):
        with pytest.raises(StoreLockedError):
            RunStore.open(tmp_path / "run1")
        # readers are fine
        reader = RunStore.open(tmp_path / "run1", writable=False)
        assert reader.run_id == "run1"
        with pytest.raises(StoreError, match="read-only"):
            reader.commit_batch("coding", 1, 0, {"codes": []})

    def test_digest_mismatch_detected(self, tmp_path, ctx, store):
        store.close()
        path = tmp_path / "run1" / "dataset.jsonl"
        path.write_text(path.read_text(encoding="utf-8") + '{"id": "zz", "text": "t"}\n', encoding="utf-8")
        with pytest.raises(DigestMismatchError):
            RunStore.open(tmp_path / "run1")


class TestStageCommits:
    def test_fresh_resume_point_is_zero(self, store):
        assert store.resume_point("coding", 1) == 0

    def test_resume_point_after_three_of_five(self, store):
        for i in range(3):
            store.commit_batch("coding", 1, i, {"codes": [{"id": f"p{i}", "code": "c"}]})
        assert store.resume_point("coding", 1) == 3

    def test_out_of_order_commit_rejected(self, store):
        store.commit_batch("coding", 1, 0, {"codes": []})
        with pytest.raises(StoreError, match="out-of-order"):
            store.commit_batch("coding", 1, 2, {"codes": []})

    def test_torn_final_line_treated_as_absent(self, store, tmp_path):
        store.commit_batch("coding", 1, 0, {"codes": [{"id": "a", "code": "c"}]})
        path = tmp_path / "run1" / "stages" / "coding-r1.jsonl"
        with path.open("a", encoding="utf-8") as fh:
            fh.write('{"batch": 1, "codes": [{"id": "b", "co')  # killed mid-write
        assert store.resume_point("coding", 1) == 1
        assert [c.data_point_id for c in store.initial_codes(1)] == ["a"]

    def test_mid_file_corruption_raises(self, store, tmp_path):
        path = tmp_path / "run1" / "stages" / "coding-r1.jsonl"
        path.parent.mkdir(exist_ok=True)
        path.write_text('{"batch": 0broken}\n{"batch": 1, "codes": []}\n', encoding="utf-8")
        with pytest.raises(StoreError, match="corrupted"):
            store.stage_batches("coding", 1)

    def test_typed_readers(self, store):
        store.commit_batch("coding", 1, 0, {"codes": [{"id": "a", "code": "c1"}, {"id": "b", "code": "c2"}]})
        codes = store.initial_codes(1)
        assert [(c.data_point_id, c.code_text, c.round) for c in codes] == [
            ("a", "c1", 1), ("b", "c2", 1),
        ]
        store.commit_batch("collation", 1, 0, {"themes": [{"id": "a", "theme": "T1"}, {"id": "b", "theme": "T1"}]})
        assert store.collation(1) == {"a": "T1", "b": "T1"}
        themes = store.potential_themes(1)
        assert len(themes) == 1 and themes[0].member_ids == {"a", "b"}
        ts = ThemeSet(themes=(Theme("high", ("T1",)),))
        store.commit_batch("merge", 1, 0, ts.to_dict())
        assert store.merged_theme_set(1) == ts
        store.commit_batch("classification", 1, 0, {"assignments": [{"id": "a", "themes": ["high"]}]})
        assert store.classification_assignments(1)[0].ranked_themes == ("high",)

    def test_unknown_stage_rejected(self, store):
        with pytest.raises(StoreError):
            store.commit_batch("mystery", 1, 0, {})


class TestContextChain:
    def test_round_one_written_at_creation(self, store, ctx):
        assert store.latest_round() == 1
        assert store.context(1).research_questions == ctx.research_questions

    def test_appending_rounds(self, store, ctx):
        ctx2 = AnalysisContext(
            research_questions=ctx.research_questions,
            analysis_kind=ctx.analysis_kind,
            topic_focus=ctx.topic_focus,
            theme_specification=ctx.theme_specification,
            custom_requirements=("focus on: target",),
        )
        store.append_context(2, ctx2)
        assert store.latest_round() == 2
        assert store.context(2).custom_requirements == ("focus on: target",)
        assert store.context(1).custom_requirements == ()

    def test_round_numbering_enforced(self, store, ctx):
        with pytest.raises(StoreError, match="must be 2"):
            store.append_context(5, ctx)

    def test_prefix_chain_enforced(self, store, ctx):
        broken = AnalysisContext(
            research_questions=ctx.research_questions,
            custom_requirements=("unrelated",),
        )
        store.append_context(2, AnalysisContext(
            research_questions=ctx.research_questions,
            custom_requirements=("first",),
        ))
        with pytest.raises(StoreError, match="extend"):
            store.append_context(3, broken)


class TestApprovalsAndAnnotations:
    def test_approval_roundtrip_last_wins(self, store):
        ts1 = ThemeSet(themes=(Theme("one", ("a",)),))
        ts2 = ThemeSet(themes=(Theme("two", ("a",)),))
        assert store.approved_themes(1) is None
        store.record_approval(1, ts1)
        store.record_approval(1, ts2, edited=True)
        assert store.approved_themes(1) == ts2
        assert store.approved_rounds() == [1]

    def test_annotations_last_wins_and_validated(self, store):
        store.append_annotations([QualityAnnotation("dp-0000", 1, Verdict.NOT_HOW)])
        store.append_annotations([QualityAnnotation("dp-0000", 1, Verdict.OK)])
        anns = store.annotations(1)
        assert len(anns) == 1 and anns[0].verdict is Verdict.OK
        with pytest.raises(DataError, match="unknown data point"):
            store.append_annotations([QualityAnnotation("ghost", 1, Verdict.OK)])

    def test_annotations_filter_by_round(self, store):
        store.append_annotations([
            QualityAnnotation("dp-0000", 1, Verdict.OK),
            QualityAnnotation("dp-0001", 2, Verdict.NOT_HOW),
        ])
        assert len(store.annotations(1)) == 1
        assert len(store.annotations()) == 2


class TestAudit:
    def test_seq_strictly_increasing_across_reopen(self, store, tmp_path):
        store.audit_sink.emit({"stage": "coding", "attempt": 1})
        store.audit_sink.emit({"stage": "coding", "attempt": 2})
        store.close()
        reopened = RunStore.open(tmp_path / "run1")
        reopened.audit_sink.emit({"stage": "merge", "attempt": 1})
        seqs = [e["seq"] for e in reopened.audit_events()]
        assert seqs == [1, 2, 3]
        reopened.close()

    def test_progress_version_monotone(self, store):
        v0 = store.progress_version()
        store.commit_batch("coding", 1, 0, {"codes": []})
        v1 = store.progress_version()
        store.audit_sink.emit({"stage": "coding"})
        v2 = store.progress_version()
        assert v0 < v1 < v2


class TestRecord:
    def test_record_snapshot(self, store):
        store.commit_batch("coding", 1, 0, {"codes": [{"id": "a", "code": "c"}]})
        record = store.record()
        assert record.run_id == "run1"
        assert record.n_points == 6
        assert record.rounds == (1,)
        assert any(s.stage == "coding" and s.next_batch_index == 1 for s in record.stages)

    def test_list_runs(self, tmp_path, ctx, store):
        store.close()
        other = RunStore.create(tmp_path / "run2", generate_corpus(3, seed=2), ctx)
        other.close()
        records = list_runs(tmp_path)
        assert [r.run_id for r in records] == ["run1", "run2"]
        assert list_runs(tmp_path / "missing") == []

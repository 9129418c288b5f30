import pytest
from filelock import FileLock

from app.constants import MENSAJES_ERROR
from app.knowledge_base import KnowledgeBase, kb_lookup, kb_store
from app.models import Origin, OriginKind
from app.ops import capture_exact_lineage, execute
from app.tags import parse_tag
from tests.helpers import op
from utils.error_handling import CorruptStore, KBWriteFailure

DECLARED = Origin(kind=OriginKind.DECLARED)


def test_lookup_unknown_key_is_empty(kb):
    assert kb.lookup("nada") == []
    assert kb.keys() == []


def test_store_and_lookup_newest_first(kb):
    kb_store(kb, "op", "tags", DECLARED, tags=[parse_tag("Slice[0]")])
    kb_store(kb, "op", "tags", Origin(kind=OriginKind.LEARNT, example_count=4), tags=[parse_tag("Identity")])
    kb_store(kb, "other", "tags", DECLARED)
    history = kb_lookup(kb, "op")
    assert [e.tags for e in history] == [["Identity"], ["Slice[0]"]]
    assert history[0].origin.label == "learnt(n=4)"
    assert kb.keys() == ["other", "op"]
    assert kb.latest("op", "tags").tags == ["Identity"]
    assert kb.latest("op", "lineage") is None


def test_entries_are_append_only(kb):
    first = kb.store_tags("op", [parse_tag("Slice[0]")], DECLARED)
    before = (kb.root / "entries" / f"{first.entry_id}.json").read_text(encoding="utf-8")
    kb.store_tags("op", [parse_tag("Slice[1]")], DECLARED)
    after = (kb.root / "entries" / f"{first.entry_id}.json").read_text(encoding="utf-8")
    assert before == after
    assert len(kb.entries()) == 2


def test_lineage_roundtrip(kb, d0):
    dropna = op("drop_null_rows")
    table = capture_exact_lineage(dropna, d0, execute(dropna, [d0]))
    entry = kb.store_lineage("pandas.dropna()@abc", table)
    assert entry.table_file.endswith(".xplt")
    found, loaded = kb.latest_table("pandas.dropna()@abc")
    assert found.entry_id == entry.entry_id
    assert loaded.records == table.records
    assert loaded.origin.kind == OriginKind.CAPTURED_EXACT


def test_reopened_store_sees_entries(tmp_path):
    KnowledgeBase(tmp_path / "kb").store_tags("op", [], DECLARED)
    assert len(KnowledgeBase(tmp_path / "kb").lookup("op")) == 1


def test_corrupt_index(kb):
    kb.store_tags("op", [], DECLARED)
    kb.index_path.write_text("{no json", encoding="utf-8")
    with pytest.raises(CorruptStore) as info:
        kb.lookup("op")
    assert info.value.path == str(kb.index_path)


def test_corrupt_entry(kb):
    entry = kb.store_tags("op", [], DECLARED)
    (kb.root / "entries" / f"{entry.entry_id}.json").write_text("[]", encoding="utf-8")
    with pytest.raises(CorruptStore, match=MENSAJES_ERROR["kb_corrupta"]):
        kb.lookup("op")


def test_corrupt_table(kb, d0):
    dropna = op("drop_null_rows")
    entry = kb.store_lineage("k", capture_exact_lineage(dropna, d0, execute(dropna, [d0])))
    (kb.root / entry.table_file).write_text("XPLT1\nbasura", encoding="utf-8")
    with pytest.raises(CorruptStore):
        kb.latest_table("k")


def test_tags_entry_has_no_table(kb):
    entry = kb.store_tags("op", [], DECLARED)
    with pytest.raises(CorruptStore):
        kb.load_table(entry)


def test_lock_held_by_other_writer_times_out(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb", lock_timeout=0.2)
    kb.root.mkdir(parents=True)
    with FileLock(kb.root / ".lock"):
        with pytest.raises(KBWriteFailure):
            kb.store_tags("op", [], DECLARED)
    assert kb.lookup("op") == []


def test_stale_lock_file_does_not_block_writers(tmp_path):
    kb = KnowledgeBase(tmp_path / "kb", lock_timeout=0.3)
    kb.root.mkdir(parents=True)
    (kb.root / ".lock").write_text("123", encoding="utf-8")
    kb.store_tags("op", [], DECLARED)
    kb.store_tags("op", [parse_tag("Identity")], DECLARED)
    assert [e.tags for e in kb.lookup("op")] == [["Identity"], []]


def test_store_never_shrinks_the_directory(kb, d0):
    def size():
        return sum(p.stat().st_size for p in kb.root.rglob("*") if p.is_file())

    dropna = op("dropna", "pandas")
    table = capture_exact_lineage(dropna, d0, execute(dropna, [d0]))
    sizes = [0]
    for k in range(4):
        kb.store_tags(f"op{k % 2}", [parse_tag("Slice[0]")] if k else [], DECLARED)
        sizes.append(size())
        kb.store_lineage(f"op{k % 2}", table)
        sizes.append(size())
    assert sizes == sorted(sizes)
    assert len(kb.entries()) == 8

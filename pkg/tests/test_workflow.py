import copy

import pytest

from app.container import containers_equal, get_cell
from app.models import Completeness, InfluenceKind, LearnConfig, OriginKind
from app.ops import canonical_key, capture_exact_lineage, execute, node_key
from app.workflow import load_run, load_workflow, load_workflow_document, parse_workflow, run_workflow, save_run
from tests.helpers import FIXTURES, external_command, misbehave_command, op, pairs
from utils.error_handling import (
    CycleDetected, DuplicateId, NonZeroExit, UnknownContainerRef, WorkflowParseError
)

D, I = InfluenceKind.DIRECT, InfluenceKind.INDIRECT
FILTER = op("filter", "duckdb", column="Age", cmp=">", value=30)


def node(id, inputs, output, name="dropna", namespace="pandas", **params):
    return {"id": id, "op": {"namespace": namespace, "name": name, "params": params}, "inputs": inputs, "output": output}


def external_doc(exec_spec):
    return {"containers": [{"id": "d0", "path": "d0.json"}],
            "nodes": [{"id": "filter", "op": FILTER.model_dump(), "exec": exec_spec, "inputs": ["d0"], "output": "adults"}]}


def test_parse_order(pipeline_dag):
    assert pipeline_dag.order == ["dropna", "filter", "scale"]
    assert pipeline_dag.producer("adults").id == "filter"


def test_toml_workflow():
    dag = load_workflow(FIXTURES / "pipeline.toml")
    assert dag.order == ["dropna", "filter"]
    assert dag.node("filter").op.params == {"column": "Age", "cmp": ">", "value": 30}


def test_order_follows_declaration_for_independent_nodes():
    doc = {"containers": [{"id": "a", "path": "a.json"}],
           "nodes": [node("z", ["y_out"], "z_out"), node("y", ["a"], "y_out"), node("b", ["a"], "b_out")]}
    assert parse_workflow(doc).order == ["y", "z", "b"]


@pytest.mark.parametrize("nodes,error", [
    ([node("x", ["y_out"], "x_out"), node("y", ["x_out"], "y_out")], CycleDetected),
    ([node("x", ["missing"], "x_out")], UnknownContainerRef),
    ([node("x", ["a"], "x_out"), node("x", ["a"], "x2_out")], DuplicateId),
    ([node("x", ["a"], "out"), node("y", ["a"], "out")], DuplicateId),
    ([node("x", ["a"], "a")], DuplicateId),
    ("nope", WorkflowParseError),
])
def test_invalid_workflows(nodes, error):
    with pytest.raises(error):
        parse_workflow({"containers": [{"id": "a", "path": "a.json"}], "nodes": nodes})


def test_unreadable_documents(tmp_path):
    with pytest.raises(WorkflowParseError):
        load_workflow_document(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{", encoding="utf-8")
    with pytest.raises(WorkflowParseError):
        load_workflow_document(bad)


def test_run_pipeline(pipeline_dag):
    record = run_workflow(pipeline_dag)
    scaled = record.containers["scaled"]
    assert scaled.labels(0) == ("0", "1")
    assert get_cell(scaled, ("0", "Age")) == 0.0 and get_cell(scaled, ("1", "Age")) == 1.0
    assert get_cell(scaled, ("0", "Children")) == 1.0
    assert set(record.sources.values()) == {"captured_exact"}
    assert record.stats["captures"] == 3


def test_unknown_policy(pipeline_dag):
    with pytest.raises(WorkflowParseError):
        run_workflow(pipeline_dag, policy="guess")


def test_warm_knowledge_base_skips_capture(pipeline_dag, kb):
    cold = run_workflow(pipeline_dag, kb=kb)
    assert cold.stats == {"kb_hits": 0, "captures": 3, "executions": 0}
    warm = run_workflow(pipeline_dag, kb=kb)
    assert warm.stats["captures"] == 0 and warm.stats["kb_hits"] == 3
    assert set(warm.sources.values()) == {"kb"}
    for node_id in warm.order:
        assert warm.table(node_id).records == cold.table(node_id).records
    assert kb.latest(canonical_key(pipeline_dag.node("dropna").op), "tags").tags == ["Slice[0]", "Identity"]


def test_save_and_load_run(pipeline_dag, kb, tmp_path):
    record = run_workflow(pipeline_dag, kb=kb)
    out = save_run(record, tmp_path / "run")
    assert (out / "lineage" / "scale.csv").exists()
    loaded = load_run(out)
    assert loaded.order == record.order
    assert loaded.kb_dir == kb.root
    for cid, c in record.containers.items():
        assert containers_equal(loaded.containers[cid], c)
    for node_id in record.order:
        assert loaded.table(node_id).records == record.table(node_id).records
        assert loaded.sources[node_id] == record.sources[node_id]
    assert [r.node_id for r in loaded.node_runs()] == record.order


def test_load_run_rejects_bad_directory(tmp_path):
    with pytest.raises(WorkflowParseError):
        load_run(tmp_path)


def test_external_oracle_matches_exact(d0):
    dag = parse_workflow(external_doc({"command": external_command(FILTER)}), base_dir=FIXTURES)
    record = run_workflow(dag, policy="oracle")
    assert record.sources["filter"] == "oracle"
    assert record.stats["executions"] > 0
    exact = capture_exact_lineage(FILTER, d0, execute(FILTER, [d0]))
    assert pairs(record.table("filter"), D) == pairs(exact, D)
    assert pairs(record.table("filter"), I) == pairs(exact, I)


def test_external_learn_policy(kb):
    dag = parse_workflow(external_doc({"command": external_command(FILTER)}), base_dir=FIXTURES)
    cfg = LearnConfig(n_subsets=1, subset_size=2, n_perturbations=1)
    record = run_workflow(dag, kb=kb, policy="learn", cfg=cfg)
    assert record.sources["filter"] == "learnt"
    assert record.table("filter").origin.kind == OriginKind.LEARNT
    learnt = kb.latest(canonical_key(FILTER), "tags")
    assert learnt is not None and learnt.origin.kind == OriginKind.LEARNT
    assert "Slice[0]" in learnt.tags


def test_external_declared_only_is_unknown(kb):
    dag = parse_workflow(external_doc({"command": external_command(FILTER)}), base_dir=FIXTURES)
    record = run_workflow(dag, kb=kb, policy="declared-only")
    table = record.table("filter")
    assert record.sources["filter"] == "unknown"
    assert table.completeness[I] == Completeness.UNKNOWN
    assert table.origin.note == "no lineage captured"
    assert kb.latest_table(node_key(record.signatures["filter"])) is None


def test_failing_node_is_named():
    dag = parse_workflow(external_doc({"command": misbehave_command("fail")}), base_dir=FIXTURES)
    with pytest.raises(NonZeroExit) as info:
        run_workflow(dag, policy="declared-only")
    assert info.value.node_id == "filter"
    assert str(info.value).startswith("[filter]")


def test_workflow_document_is_not_mutated(pipeline_doc):
    snapshot = copy.deepcopy(pipeline_doc)
    parse_workflow(pipeline_doc, base_dir=FIXTURES)
    assert pipeline_doc == snapshot


def test_saved_run_reproduces_every_container(pipeline_dag, tmp_path):
    record = run_workflow(pipeline_dag)
    loaded = load_run(save_run(record, tmp_path / "run"))
    for node_id in loaded.order:
        node = loaded.node(node_id)
        again = loaded.registry.execute(node.op, [loaded.containers[i] for i in node.inputs])
        assert containers_equal(again, loaded.containers[node.output])

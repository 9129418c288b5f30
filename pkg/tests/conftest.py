import json

import pytest

from app.data_loader import load_container
from app.knowledge_base import KnowledgeBase
from app.workflow import load_workflow
from tests.helpers import FIXTURES


@pytest.fixture
def d0():
    return load_container(FIXTURES / "d0.json")


@pytest.fixture
def pipeline_dag():
    return load_workflow(FIXTURES / "pipeline.json")


@pytest.fixture
def pipeline_doc():
    return json.loads((FIXTURES / "pipeline.json").read_text(encoding="utf-8"))


@pytest.fixture
def kb(tmp_path):
    return KnowledgeBase(tmp_path / "kb")

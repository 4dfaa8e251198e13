from pathlib import Path

import pytest

from chartsum.corpus import load_corpus

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def liverpool():
    return load_corpus(FIXTURES / "liverpool.jsonl").samples[0]

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from stepcalc.knowledge import load_bundle  # noqa: E402

CONTENT = ROOT / "content"


@pytest.fixture(scope="session")
def store():
    return load_bundle(CONTENT)


@pytest.fixture(scope="session")
def content_dir():
    return CONTENT

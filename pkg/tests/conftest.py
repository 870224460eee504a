import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def unit_meshes():
    from thermidor.mesh import build_structured_mesh
    return {n: build_structured_mesh(n, n) for n in (1, 2, 4, 8, 16)}

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
SRC_DIR = REPO_ROOT / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from fens.data.synth import synth_glyphs  # noqa: E402
from fens.ensemble.matrix import MemberRecord, ProbabilityMatrix  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def glyphs():
    """Small deterministic glyph set shared by data and training tests."""
    return synth_glyphs(4, 12, 12, 12, seed=3, name="glyphs")


def random_member(rng: np.random.Generator, n: int, c: int, *, family: str = "mobile",
                  strategy: str = "tfs", run_id: str = "m0", val_score: float = 0.5) -> MemberRecord:
    test = rng.dirichlet(np.ones(c), size=n)
    val = rng.dirichlet(np.ones(c), size=n)
    return MemberRecord(
        dataset="toy",
        family=family,
        strategy=strategy,
        run_id=run_id,
        test=ProbabilityMatrix(test),
        validation=ProbabilityMatrix(val),
        val_score=val_score,
    )

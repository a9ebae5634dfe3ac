import numpy as np
import pytest

from vsc_zsl.dataset import SynthParams, synthesize


def write_toy(root, *, attributes=None, seen=None, split=None, unseen=None, labels_unseen="2\n2\n"):
    """Three classes: 0 and 1 seen, 2 unseen."""
    root.mkdir(parents=True, exist_ok=True)
    (root / "features_seen.csv").write_text(seen or "0,1.0,0.0\n0,3.0,0.0\n1,0.0,2.0\n1,0.0,4.0\n")
    (root / "features_unseen.csv").write_text(unseen or "1.0,1.0\n2.0,2.0\n")
    (root / "attributes.csv").write_text(attributes or "0,1.0,0.0,0.0\n1,0.0,1.0,0.0\n2,0.0,0.0,1.0\n")
    (root / "split.txt").write_text(split or "seen: 0 1\nunseen: 2\n")
    if labels_unseen is not None:
        (root / "labels_unseen.csv").write_text(labels_unseen)
    return root


@pytest.fixture
def toy_dir(tmp_path):
    return write_toy(tmp_path / "toy")


@pytest.fixture(scope="session")
def small_synth():
    return synthesize(SynthParams(S=8, U=4, d=8, m=6, per_class=20, sigma=0.02, delta=0.3, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])

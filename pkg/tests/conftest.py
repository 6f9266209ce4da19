import numpy as np
import pytest

from swcodec import dsp, synth

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_corpus(root, n=10, seconds=4.0):
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(n):
        name = f"clip_{i:02d}.wav"
        dsp.write_wav(root / name, synth.syllable_sequence(i, seconds))
        names.append(name)
    (root / "manifest.txt").write_text("\n".join(names) + "\n")
    return root / "manifest.txt"


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Ten 4 s speech-like clips plus a manifest; returns the manifest path."""
    return write_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import os

import numpy as np
import pytest
import torch

torch.set_num_threads(1)
os.environ.pop("WHISPERCONV_WORKDIR", None)

from whisperconv.audio import AudioClip  # noqa: E402
from whisperconv.corpus import synth_fixture  # noqa: E402

SR = 22050


def tone(freq, seconds, sr=SR, amp=0.5):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


@pytest.fixture(scope="session")
def fixture_pairs():
    return synth_fixture(n_speakers=2, n_utts=2, seed=0)


@pytest.fixture(scope="session")
def one_pair():
    return synth_fixture(n_speakers=1, n_utts=1, seed=0)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(str(r[0]).rstrip("ab")), str(r[0]))):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")

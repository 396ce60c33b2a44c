from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from tucore_gcn.config import PRESETS
from tucore_gcn.corpus import import_dialogre, labels_in, read_erc
from tucore_gcn.encoding import Vocab, WordTokenizer

DATA = Path(__file__).resolve().parents[1] / "src" / "tucore_gcn" / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def dialogre_fixture():
    return import_dialogre(DATA / "dialogre_fixture.json")


@pytest.fixture(scope="session")
def frank_s2(dialogre_fixture):
    return next(i for i in dialogre_fixture if i.subject == "Frank" and i.object == "S2")


@pytest.fixture(scope="session")
def erc_conversation():
    [(cid, utts)] = read_erc(DATA / "erc_example.jsonl")
    return cid, utts


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_cfg(instances, **changes):
    vocab = Vocab.build(instances)
    labels = labels_in(instances)
    cfg = replace(PRESETS["tiny"].model, vocab_size=len(vocab), num_labels=len(labels), **changes)
    return cfg, vocab, labels


def tokenizer_for(instances):
    return WordTokenizer(Vocab.build(instances))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

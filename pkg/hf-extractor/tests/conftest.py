import pytest

from hf_extractor import bundled_corpus_path, load_model, read_corpus


@pytest.fixture(scope="session")
def corpus():
    return read_corpus(bundled_corpus_path())


@pytest.fixture(scope="session")
def builtin_bundle():
    # one 86M-parameter random model per test session; loads in about a second
    return load_model("builtin:gpt2-random")

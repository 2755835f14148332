from importlib import resources
from pathlib import Path

import pytest

from simlab.ontology import load_ontology


TOY_ONTOLOGY_PATH = Path(
    str(resources.files("simlab").joinpath("data/toy_ontology.json"))
)


@pytest.fixture(scope="session")
def toy_ontology():
    return load_ontology(TOY_ONTOLOGY_PATH)


@pytest.fixture(scope="session")
def fixture_corpus_path(tmp_path_factory, toy_ontology):
    """The 500-dialogue synthetic corpus, seed 7, shared across the suite."""
    from simlab.corpus import write_dialogues
    from simlab.synth import synthesize_dialogues

    path = tmp_path_factory.mktemp("corpus") / "synthetic.jsonl"
    write_dialogues(synthesize_dialogues(toy_ontology, 500, seed=7), path)
    return path


@pytest.fixture(scope="session")
def fixture_corpus(fixture_corpus_path):
    from simlab.corpus import load_corpus

    return load_corpus(fixture_corpus_path)

import numpy as np
import pytest

from libam.bench import CorpusParams, TrainCorpusParams, gen_corpus, gen_training_corpus
from libam.embedding import TrainParams
from libam.pipeline import build_tpl_index
from libam.training import PipelineTrainParams, train_models

# Toy training setup shared by the embedding/matcher/acceptance tests.
# Trains once per session (about a minute); quality numbers asserted in
# the tests were measured with exactly this configuration.
TOY_SEED = 0
TOY_TRAIN = TrainCorpusParams(n_groups=30, fns_per_binary=(30, 70), perturbation=0.1)
TOY_PARAMS = TrainParams(learning_rate=1e-3, epochs=15)
BENCH_PARAMS = CorpusParams(n_tpls=30, n_targets=50, perturbation=0.1)


@pytest.fixture(scope="session")
def train_groups():
    return gen_training_corpus(TOY_TRAIN, seed=TOY_SEED)


@pytest.fixture(scope="session")
def toy_models(train_groups):
    import time

    start = time.perf_counter()
    trained = train_models(
        train_groups,
        PipelineTrainParams(function=TOY_PARAMS, area=TOY_PARAMS, mine=True),
        seed=TOY_SEED,
    )
    trained.train_seconds = time.perf_counter() - start
    return trained


@pytest.fixture(scope="session")
def bench_corpus():
    return gen_corpus(BENCH_PARAMS, seed=0)


@pytest.fixture(scope="session")
def bench_index(bench_corpus, toy_models):
    return build_tpl_index(bench_corpus.tpls, toy_models.fn_model)


@pytest.fixture(scope="session")
def bench_workspace(tmp_path_factory, bench_corpus, bench_index, toy_models):
    """The criterion-7 corpus, models and index written to disk for CLI runs."""
    root = tmp_path_factory.mktemp("bench-ws")
    bench_corpus.save(root / "corpus")
    (root / "models").mkdir()
    toy_models.fn_model.save(root / "models" / "function.s2v")
    toy_models.area_model.save(root / "models" / "area.s2v")
    bench_index.save(root / "corpus.lvdb")
    return root


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

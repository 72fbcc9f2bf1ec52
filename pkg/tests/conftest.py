import pytest

from experiments.synthetic import quadratic_task, synthetic_domains
from graph.state import DataPoint, DomainDataset, RunConfig
from tools.evaluators import SyntheticEvaluator


def make_domain(name, influences):
    return DomainDataset(
        name=name,
        points=tuple(DataPoint(point_id=f"{name}-{i}", influence=float(v)) for i, v in enumerate(influences)),
    )


@pytest.fixture
def two_domains():
    return synthetic_domains(2, size=60, seed=0)


@pytest.fixture
def quadratic_evaluator(two_domains):
    return SyntheticEvaluator(quadratic_task([0.3, 0.7]), two_domains)


@pytest.fixture
def small_config():
    return RunConfig(
        n_domains=2,
        mixture_size=20,
        sampling_size=1,
        iterations=4,
        seed=0,
        n_candidates=256,
        n_refine_steps=10,
    )

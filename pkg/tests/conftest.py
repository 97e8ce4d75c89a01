import numpy as np
import pytest

from dynasaga.model import LEAST_SQUARES, LOGISTIC, Dataset, LossModel, Sample, loss_value


def fd_gradient(model, w, s: Sample, h=1e-5):
    """Central differences of loss_value, coordinate by coordinate."""
    g = np.zeros_like(w)
    for k in range(len(w)):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (loss_value(model, w + e, s) - loss_value(model, w - e, s)) / (2 * h)
    return g


def random_sample(rng, d, label_kind="classification", density=0.6):
    while True:
        mask = rng.random(d) < density
        if mask.any():
            break
    idx = tuple(int(j) + 1 for j in np.flatnonzero(mask))
    vals = tuple(float(v) if v != 0 else 0.5 for v in rng.standard_normal(len(idx)))
    y = float(rng.choice([-1.0, 1.0])) if label_kind == "classification" else float(rng.standard_normal())
    return Sample(idx, vals, y)


def random_dataset(rng, n, d, label_kind="classification", density=0.6):
    return Dataset.from_samples([random_sample(rng, d, label_kind, density) for _ in range(n)], dimension=d)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture(params=[LEAST_SQUARES, LOGISTIC])
def any_model(request):
    return LossModel(request.param, 0.0 if request.param == LEAST_SQUARES else 0.1)

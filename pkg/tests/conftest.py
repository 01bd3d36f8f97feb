import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def haar_orthogonal(rng, d):
    Z = rng.standard_normal((d, d))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def random_symmetric_tensor(rng, d, r, scale=1.0):
    from unmix.tensors import SymmetricTensor, num_unique

    return SymmetricTensor(d, r, scale * rng.standard_normal(num_unique(d, r)))

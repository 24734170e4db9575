import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture(autouse=True)
def _seed_everything():
    torch.manual_seed(0)
    np.random.seed(0)


@pytest.fixture(scope="session")
def toy_corpus():
    from signmt.data import generate_synthetic_corpus

    vocab = [f"word{i}" for i in range(10)]
    return generate_synthetic_corpus(32, vocab, 8, seed=7)


@pytest.fixture(scope="session")
def toy_components(toy_corpus):
    from signmt.pipeline import build_toy_pipeline

    return build_toy_pipeline(toy_corpus, seed=0)


def central_difference(fn, tensor, index, eps):
    """Two-sided finite difference of scalar fn at one coordinate of tensor."""
    with torch.no_grad():
        orig = tensor.view(-1)[index].item()
        tensor.view(-1)[index] = orig + eps
        up = fn().item()
        tensor.view(-1)[index] = orig - eps
        down = fn().item()
        tensor.view(-1)[index] = orig
    return (up - down) / (2 * eps)


def check_gradients(fn, tensors, rtol=1e-4, eps=1e-5, coords_per_tensor=4, gen=None):
    """Compare autograd gradients of scalar fn against central differences on a
    random sample of coordinates; asserts the relative error bound."""
    gen = gen or torch.Generator().manual_seed(0)
    loss = fn()
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    for tensor, grad in zip(tensors, grads):
        assert grad is not None, "parameter not reached by the loss"
        n = tensor.numel()
        for index in torch.randint(0, n, (min(coords_per_tensor, n),), generator=gen).tolist():
            numeric = central_difference(fn, tensor, index, eps)
            analytic = grad.view(-1)[index].item()
            scale = max(abs(numeric), abs(analytic), 1e-8)
            assert abs(numeric - analytic) / scale < rtol, (
                f"gradient mismatch at coord {index}: fd={numeric} vs autograd={analytic}"
            )

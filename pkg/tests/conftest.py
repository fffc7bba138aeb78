import numpy as np
import pytest

from optune_lab.pairs import PreferencePair
from optune_lab.policy import PolicyParams, PromptSpace


def central_difference(f, logits, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` over a logit matrix."""
    logits = np.array(logits, dtype=float)
    grad = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        plus, minus = logits.copy(), logits.copy()
        plus[idx] += h
        minus[idx] -= h
        grad[idx] = (f(plus) - f(minus)) / (2 * h)
    return grad


def relative_error(analytic, numeric):
    """max |a - n| scaled by the larger of the two gradients' max magnitudes."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-300)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def random_instance(rng, num_prompts, num_responses, pairs_per_prompt=2, degenerate_rate=0.0):
    """Random policy, reference and reward-carrying batch on a small grid."""
    space = PromptSpace(num_prompts, num_responses)
    policy = PolicyParams(rng.normal(size=space.shape), space)
    reference = PolicyParams(rng.normal(size=space.shape), space)
    batch = []
    for x in range(num_prompts):
        for _ in range(pairs_per_prompt):
            if rng.random() < degenerate_rate:
                w = l = int(rng.integers(num_responses))
            else:
                w, l = (int(v) for v in rng.choice(num_responses, size=2, replace=False))
            rw, rl = sorted(rng.normal(size=2), reverse=True)
            batch.append(PreferencePair(x, w, l, float(rw), float(rl), 0, True))
    return policy, reference, batch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)

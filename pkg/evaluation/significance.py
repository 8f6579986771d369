import numpy as np

# Resamples are drawn in blocks to bound memory for long question lists
_BLOCK = 2048


def significance_test(per_question_a, per_question_b, iterations: int = 10000, seed: int = 0) -> float:
    """
    Two-tailed paired randomization (sign-flip) test

    Args:
        per_question_a: Per-question metric values of system A
        per_question_b: Per-question metric values of system B, same questions and order
        iterations: Number of random sign assignments
        seed: Seed for the resampling

    Returns:
        Share of resamples whose |mean difference| reaches the observed one
    """
    a = np.asarray(per_question_a, dtype=np.float64)
    b = np.asarray(per_question_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"paired lists differ in length: {a.shape[0]} vs {b.shape[0]}")
    if a.ndim != 1 or a.shape[0] < 2:
        raise ValueError("need at least two paired values")
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    diff = a - b
    observed = abs(diff.mean())
    # tolerance for floating-point noise in the resampled means
    threshold = observed - 1e-12 * max(1.0, observed)
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = iterations
    while remaining:
        size = min(_BLOCK, remaining)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(size, diff.shape[0]))
        hits += int(np.count_nonzero(np.abs((signs * diff).mean(axis=1)) >= threshold))
        remaining -= size
    return hits / iterations

import zlib

import numpy as np
import torch


def derive_seed(seed: int, name: str) -> int:
    """Derive a named sub-seed (split, init, batch_order, ...) from the run seed."""
    sequence = np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])
    return int(sequence.generate_state(1)[0])


def seed_torch(seed: int) -> torch.Generator:
    """Seed torch's global RNG and return a dedicated generator with the same seed."""
    torch.manual_seed(seed)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator

"""Counter-based random streams.

Every replication (and every block of attenuation simulations) owns a Philox
stream keyed by ``(seed, domain, index)``, so any single replication can be
reproduced without replaying the others.
"""

import numpy as np

RNG_NAME = "numpy.random.Philox(key=seed<<64 | domain<<56 | index)"
DOMAIN_SIM = 1
DOMAIN_F = 2
DOMAIN_GEN = 3
BLOCK = 1024

_MASK64 = (1 << 64) - 1
_MASK56 = (1 << 56) - 1


def stream_key(seed: int, domain: int, index: int) -> int:
    return ((int(seed) & _MASK64) << 64) | ((domain & 0xFF) << 56) | (int(index) & _MASK56)


def stream(seed: int, domain: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, domain, index)))

import zlib

import numpy as np


def _name_key(name):
    return zlib.crc32(name.encode('utf-8'))


def derive_seed(seed, name, *index):
    """Nomlangan oqim uchun butun son urug'i"""
    entropy = [int(seed), _name_key(name), *[int(i) for i in index]]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint32)[0])


def substream(seed, name, *index):
    """Bitta urug'dan mustaqil nomlangan Generator"""
    entropy = [int(seed), _name_key(name), *[int(i) for i in index]]
    return np.random.default_rng(np.random.SeedSequence(entropy))

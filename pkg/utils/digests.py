import hashlib
from pathlib import Path


def file_digest(path, chunk_size=1 << 20):
    """Faylning sha256 xeshi"""
    sha = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(chunk_size), b''):
            sha.update(block)
    return sha.hexdigest()


def digest_inputs(paths):
    """Mavjud fayllar uchun {yo'l: sha256}"""
    digests = {}
    for path in paths:
        if path and Path(path).is_file():
            digests[str(path)] = file_digest(path)
    return digests

import time
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings
from django.utils import timezone

from utils.digests import digest_inputs
from utils.documents import validate_document, write_json

from .serializers import RunManifestSerializer

MANIFEST_NAME = 'manifest.json'


@dataclass
class RunManifest:
    """Har bir chiqish katalogidagi yagona ishga tushirish yozuvi"""
    subcommand: str
    inputs: dict
    options: dict
    seed: int | None = None
    version: str = field(default_factory=lambda: settings.LGH_VERSION)
    started_at: str = field(default_factory=lambda: timezone.now().isoformat())
    wall_clock: float | None = None
    outputs: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    _clock: float = field(default_factory=time.perf_counter, repr=False)

    @classmethod
    def start(cls, subcommand, input_paths, options, seed=None):
        return cls(
            subcommand=subcommand,
            inputs=digest_inputs(input_paths),
            options=options,
            seed=seed,
        )

    def as_dict(self):
        return {
            'subcommand': self.subcommand,
            'inputs': dict(self.inputs),
            'options': dict(self.options),
            'seed': self.seed,
            'version': self.version,
            'started_at': self.started_at,
            'wall_clock': self.wall_clock,
            'outputs': [str(p) for p in self.outputs],
            'extra': dict(self.extra),
        }

    def finish(self, out_dir):
        self.wall_clock = round(time.perf_counter() - self._clock, 3)
        path = Path(out_dir) / MANIFEST_NAME
        document = self.as_dict()
        validate_document(RunManifestSerializer, document, 'manifest')
        write_json(path, document)
        return path

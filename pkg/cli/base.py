import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from utils.exceptions import LghError
from utils.parallel import resolve_threads

from .models import RunManifest

logger = logging.getLogger(__name__)


def write_tsv(frame, path):
    """Barcha jadvallar uchun yagona TSV ko'rinishi"""
    frame.to_csv(path, sep='\t', index=False, float_format='%.17g', na_rep='NA')


class LghCommand(BaseCommand):
    """Umumiy --threads / --seed va xatolarni chiqish kodlariga o'girish"""
    subcommand = None
    uses_seed = False
    seed_default = 0

    def add_arguments(self, parser):
        parser.add_argument('--threads', type=int, default=None, help='Ishchi oqimlar (standart: LGH_THREADS)')
        if self.uses_seed:
            parser.add_argument('--seed', type=int, default=self.seed_default)
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def prepare_output(self, out_dir):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir

    def handle(self, *args, **options):
        options['threads'] = resolve_threads(options.get('threads'))
        try:
            self.run(**options)
        except LghError as e:
            logger.error(f"{self.subcommand}: {e}")
            raise CommandError(str(e), returncode=e.exit_code)

    def start_manifest(self, input_paths, options):
        echoed = {
            key: str(value) if isinstance(value, Path) else value
            for key, value in options.items()
            if key not in ('verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color',
                           'skip_checks', 'stdout', 'stderr')
        }
        return RunManifest.start(self.subcommand, input_paths, echoed, seed=options.get('seed'))

    def run(self, **options):
        raise NotImplementedError

    def report(self, message):
        self.stdout.write(self.style.SUCCESS(message))

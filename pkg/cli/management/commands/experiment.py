from simulation.experiment import run_experiment
from utils.documents import write_json

from cli.base import LghCommand, write_tsv
from cli.management.commands.simulate import load_scenario


class Command(LghCommand):
    help = "Ko'p takrorli simulyatsiya tajribasi va xulosa jadvali"
    subcommand = 'experiment'
    uses_seed = True
    seed_default = None

    def add_command_arguments(self, parser):
        parser.add_argument('manifest')
        parser.add_argument('out_dir')

    def run(self, manifest, out_dir, seed, threads, **options):
        out_dir = self.prepare_output(out_dir)
        config = load_scenario(manifest, seed)
        run = self.start_manifest([manifest], {'manifest': manifest, 'threads': threads})
        run.seed = config.seed

        summary = run_experiment(config, threads=threads)
        write_tsv(summary.to_frame(), out_dir / 'summary.tsv')
        write_tsv(summary.replicate_frame(), out_dir / 'replicates.tsv')
        write_json(out_dir / 'summary.json', summary.as_dict())

        run.outputs = ['summary.tsv', 'replicates.tsv', 'summary.json']
        run.extra = {'replicates': config.replicates}
        run.finish(out_dir)
        self.report(f"Tajriba '{config.name}': {config.replicates} takror -> {out_dir}")

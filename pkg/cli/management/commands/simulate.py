from grm.formats import write_allele_freqs, write_genotypes_binary, write_genotypes_tsv
from longitudinal.phenotypes import write_phenotypes
from simulation.models import ScenarioConfig
from simulation.serializers import ScenarioConfigSerializer
from simulation.simulate import simulate_dataset
from utils.documents import read_json, validate_document, write_json

from cli.base import LghCommand, write_tsv


def load_scenario(path, seed=None):
    """Ssenariy manifestini o'qish; --seed berilsa manifestdagini almashtiradi"""
    data = validate_document(ScenarioConfigSerializer, read_json(path), 'ssenariy manifesti')
    config = ScenarioConfig.from_dict(data)
    if seed is not None:
        config = config.with_overrides(seed=seed)
    return config


class Command(LghCommand):
    help = "Ssenariy bo'yicha bitta sintetik ma'lumotlar to'plami"
    subcommand = 'simulate'
    uses_seed = True
    seed_default = None

    def add_command_arguments(self, parser):
        parser.add_argument('manifest')
        parser.add_argument('out_dir')
        parser.add_argument('--binary', action='store_true', help='Genotiplarni LGH1 binar formatda yozish')

    def run(self, manifest, out_dir, binary, seed, threads, **options):
        out_dir = self.prepare_output(out_dir)
        config = load_scenario(manifest, seed)
        run = self.start_manifest([manifest], {'manifest': manifest, 'binary': binary, 'threads': threads})
        run.seed = config.seed

        geno, data, truth, mask = simulate_dataset(config)
        if binary:
            write_genotypes_binary(geno, out_dir / 'genotypes.bin')
            genotype_files = ['genotypes.bin', 'genotypes.bin.subjects', 'genotypes.bin.variants']
        else:
            write_genotypes_tsv(geno, out_dir / 'genotypes.tsv')
            genotype_files = ['genotypes.tsv']
        write_allele_freqs(geno.variant_ids, geno.allele_freqs, out_dir / 'allele_freqs.tsv')
        write_phenotypes(data, out_dir / 'phenotypes.tsv')
        write_tsv(truth.to_frame(data.subject_ids), out_dir / 'truth.tsv')
        scenario = config.as_dict()
        scenario['causal_variants'] = [geno.variant_ids[i] for i in truth.causal]
        write_json(out_dir / 'scenario.json', scenario)

        run.outputs = genotype_files + ['allele_freqs.tsv', 'phenotypes.tsv', 'truth.tsv', 'scenario.json']
        run.extra = {'subjects': data.n_subjects, 'records': data.n_records, 'causal': int(mask.sum())}
        run.finish(out_dir)
        self.report(f"Simulyatsiya '{config.name}': {data.n_subjects} sub'ekt, {data.n_records} yozuv -> {out_dir}")

from grm.compute import compute_grm, filter_maf, standardize_genotypes
from grm.formats import grm_id_path, read_allele_freqs, read_genotypes, write_grm
from grm.models import GenotypeMatrix

from cli.base import LghCommand

GRM_NAME = 'grm.bin'


class Command(LghCommand):
    help = "Genotiplardan GRM hisoblash (GRM1 binar fayl + ID fayli)"
    subcommand = 'grm'

    def add_command_arguments(self, parser):
        parser.add_argument('geno', help='Genotip fayli (TSV yoki LGH1 binar)')
        parser.add_argument('out_dir')
        parser.add_argument('--af', default=None, help='Allel chastotalari TSV (variant_id, af)')
        parser.add_argument('--maf', type=float, default=None)
        parser.add_argument('--chunk', type=int, default=None)

    def run(self, geno, out_dir, af, maf, chunk, threads, **options):
        out_dir = self.prepare_output(out_dir)
        manifest = self.start_manifest([geno, af], {'geno': geno, 'af': af, 'maf': maf, 'chunk': chunk,
                                                    'threads': threads})

        genotypes = read_genotypes(geno)
        if af:
            genotypes = GenotypeMatrix(
                dosages=genotypes.dosages,
                subject_ids=genotypes.subject_ids,
                variant_ids=genotypes.variant_ids,
                allele_freqs=read_allele_freqs(af, genotypes.variant_ids),
            )
        filtered, dropped = filter_maf(genotypes, maf)
        grm = compute_grm(standardize_genotypes(filtered), filtered.subject_ids, chunk_size=chunk, threads=threads)

        path = out_dir / GRM_NAME
        write_grm(grm, path)
        manifest.outputs = [path.name, grm_id_path(path).name]
        manifest.extra = {
            'variant_count': filtered.n_variants,
            'variants_dropped': dropped,
            'af_source': 'file' if af else 'estimated',
            'subjects': grm.size,
        }
        manifest.finish(out_dir)
        self.report(f"GRM: N={grm.size}, P={filtered.n_variants}, olib tashlandi={dropped} -> {path}")

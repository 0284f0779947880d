from longitudinal.phenotypes import read_phenotype_frame

from cli.base import LghCommand, write_tsv
from cli.preprocess import TIME_MODES, preprocess_frame

OUTPUT_NAME = 'phenotypes.tsv'


class Command(LghCommand):
    help = "Fenotiplarni tayyorlash: nolni almashtirish, log, vaqt masshtabi"
    subcommand = 'preprocess'

    def add_command_arguments(self, parser):
        parser.add_argument('pheno')
        parser.add_argument('out_dir')
        parser.add_argument('--log-transform', action='store_true')
        parser.add_argument('--zero-replace', type=float, default=None)
        parser.add_argument('--time-rescale', choices=TIME_MODES, default='none')
        parser.add_argument('--time-origin', type=float, default=None)
        parser.add_argument('--time-span', type=float, default=None)

    def run(self, pheno, out_dir, log_transform, zero_replace, time_rescale, time_origin, time_span, **options):
        out_dir = self.prepare_output(out_dir)
        manifest = self.start_manifest([pheno], {
            'pheno': pheno, 'log_transform': log_transform, 'zero_replace': zero_replace,
            'time_rescale': time_rescale, 'time_origin': time_origin, 'time_span': time_span,
        })

        frame, report = preprocess_frame(
            read_phenotype_frame(pheno),
            log_transform=log_transform,
            zero_replace=zero_replace,
            time_mode=time_rescale,
            time_origin=time_origin,
            time_span=time_span,
        )
        path = out_dir / OUTPUT_NAME
        write_tsv(frame, path)
        manifest.outputs = [path.name]
        manifest.extra = report
        manifest.finish(out_dir)
        self.report(f"{report['records']} yozuv, {report['zeros_replaced']} nol almashtirildi -> {path}")

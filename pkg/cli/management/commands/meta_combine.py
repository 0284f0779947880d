import pandas as pd

from metaanalysis.combine import combine_table
from utils.documents import write_json
from utils.exceptions import InputError

from cli.base import LghCommand, write_tsv


class Command(LghCommand):
    help = "Bo'lak baholari jadvalini (parameter, estimate, se, regime[, floor]) birlashtirish"
    subcommand = 'meta_combine'

    def add_command_arguments(self, parser):
        parser.add_argument('estimates')
        parser.add_argument('out_dir')
        parser.add_argument('--boundary-factor', type=float, default=None)
        parser.add_argument('--lambda-tol', type=float, default=None)

    def run(self, estimates, out_dir, boundary_factor, lambda_tol, threads, **options):
        out_dir = self.prepare_output(out_dir)
        manifest = self.start_manifest([estimates], {
            'estimates': estimates, 'boundary_factor': boundary_factor, 'lambda_tol': lambda_tol,
        })
        try:
            frame = pd.read_csv(estimates, sep='\t', dtype={'parameter': str, 'regime': str})
        except (OSError, ValueError, pd.errors.ParserError) as e:
            raise InputError(f"Baholar jadvalini o'qib bo'lmadi: {estimates}: {e}")

        combined = combine_table(frame, boundary_factor=boundary_factor, lambda_tol=lambda_tol)
        rows = []
        for name, combination in combined.items():
            for method, result in combination.results.items():
                row = result.as_dict()
                row.update(parameter=name, primary=method == combination.primary)
                rows.append(row)
        columns = ['parameter', 'method', 'primary', 'combined', 'se', 'unclamped', 'unbounded']
        write_tsv(pd.DataFrame(rows, columns=columns), out_dir / 'combined.tsv')
        write_json(out_dir / 'combined.json', {
            'parameters': {name: combination.as_dict() for name, combination in combined.items()},
        })

        manifest.outputs = ['combined.tsv', 'combined.json']
        manifest.finish(out_dir)
        self.report(f"{len(combined)} ta parametr birlashtirildi -> {out_dir}")

import logging
from pathlib import Path

import pandas as pd

from aireml.models import RemlOptions
from aireml.reml import ai_reml_fit
from aireml.serializers import FitResultSerializer
from grm.compute import match_grm
from grm.formats import read_grm
from longitudinal.phenotypes import read_phenotypes
from longitudinal.structure import cross_sectional_heritability
from metaanalysis.combine import combine_fits, partition_fits, partition_table
from rehe.bootstrap import parametric_bootstrap
from rehe.estimator import rehe_fit
from rehe.serializers import BootstrapSummarySerializer
from utils.documents import finite_or_none, read_json, validate_document, write_json
from utils.exceptions import InputError
from utils.random import derive_seed

from cli.base import LghCommand, write_tsv
from cli.models import MANIFEST_NAME

logger = logging.getLogger(__name__)


def load_grm(path):
    """GRM1 fayli; variant soni yonidagi manifestdan olinadi"""
    manifest_path = Path(path).parent / MANIFEST_NAME
    variant_count = None
    if manifest_path.is_file():
        variant_count = (read_json(manifest_path).get('extra') or {}).get('variant_count')
    return read_grm(path, variant_count=variant_count)


def fit_document(fit):
    document = fit.as_dict()
    validate_document(FitResultSerializer, document, 'natija')
    document['cross_sectional_h2'] = finite_or_none(cross_sectional_heritability(fit.theta_hat))
    return document


class Command(LghCommand):
    help = "AI-REML yoki REHE bilan baholash (bo'laklash va bootstrap bilan)"
    subcommand = 'fit'
    uses_seed = True

    def add_command_arguments(self, parser):
        parser.add_argument('--pheno', required=True)
        parser.add_argument('--grm', required=True)
        parser.add_argument('--method', choices=('aireml', 'rehe'), default='aireml')
        parser.add_argument('--partitions', type=int, default=1)
        parser.add_argument('--bootstrap', type=int, default=0)
        parser.add_argument('--max-iter', type=int, default=None)
        parser.add_argument('--tol', type=float, default=None)
        parser.add_argument('out_dir')

    def run(self, pheno, grm, method, partitions, bootstrap, max_iter, tol, out_dir, seed, threads, **options):
        if partitions < 1:
            raise InputError("--partitions kamida 1 bo'lishi kerak")
        if method == 'rehe' and partitions > 1:
            raise InputError("REHE bo'laklashni qo'llamaydi, --partitions 1 bilan ishlating")
        if bootstrap < 0:
            raise InputError("--bootstrap manfiy bo'lmasligi kerak")
        if method == 'aireml' and bootstrap:
            raise InputError("--bootstrap faqat REHE uchun")

        out_dir = self.prepare_output(out_dir)
        manifest = self.start_manifest([pheno, grm], {
            'pheno': pheno, 'grm': grm, 'method': method, 'partitions': partitions, 'bootstrap': bootstrap,
            'max_iter': max_iter, 'tol': tol, 'threads': threads,
        })

        data, report = read_phenotypes(pheno)
        relationship = match_grm(load_grm(grm), data.subject_ids)
        manifest.extra = {'phenotypes': report}

        if method == 'aireml':
            reml_options = RemlOptions(max_iter=max_iter, tol=tol)
            if partitions == 1:
                fit = ai_reml_fit(data, relationship, reml_options)
                write_json(out_dir / 'fit.json', fit_document(fit))
                manifest.outputs = ['fit.json']
                summary = f"lambda1={fit.xi_hat.lambda1}, lambda2={fit.xi_hat.lambda2}"
            else:
                manifest.outputs = self.run_partitioned(
                    data, relationship, partitions, seed, reml_options, threads, out_dir,
                )
                summary = f"{partitions} bo'lak birlashtirildi"
        else:
            fit = rehe_fit(data, relationship, threads=threads)
            write_json(out_dir / 'fit.json', fit_document(fit))
            manifest.outputs = ['fit.json']
            if bootstrap:
                result = parametric_bootstrap(
                    fit, data, relationship, bootstrap, seed=derive_seed(seed, 'bootstrap'), threads=threads,
                )
                document = result.as_dict()
                validate_document(BootstrapSummarySerializer, document, 'bootstrap')
                write_json(out_dir / 'bootstrap.json', document)
                write_tsv(pd.DataFrame(result.rows()), out_dir / 'bootstrap_summary.tsv')
                manifest.outputs += ['bootstrap.json', 'bootstrap_summary.tsv']
            summary = f"lambda1={fit.xi_hat.lambda1}, lambda2={fit.xi_hat.lambda2}"

        manifest.finish(out_dir)
        self.report(f"{method}: {summary} -> {out_dir}")

    def run_partitioned(self, data, grm, partitions, seed, reml_options, threads, out_dir):
        plan, fits = partition_fits(data, grm, partitions, seed=seed, options=reml_options, threads=threads)
        combined = combine_fits(fits)
        write_json(out_dir / 'partitions.json', {
            'plan': plan.as_dict(),
            'fits': [fit_document(fit) for fit in fits],
        })
        write_json(out_dir / 'combined.json', {
            'parameters': {name: None if c is None else c.as_dict() for name, c in combined.items()},
        })
        write_tsv(partition_table(fits, combined), out_dir / 'partition_summary.tsv')
        return ['partitions.json', 'combined.json', 'partition_summary.tsv']

import logging

import numpy as np

from grm.compute import compute_grm, standardize_genotypes
from grm.models import GenotypeMatrix
from longitudinal.models import LongitudinalDataset
from utils.random import substream

from .models import AGE_ORIGIN, AGE_SCALE, ENTRY_AGE_RANGE, SimulationTruth

logger = logging.getLogger(__name__)


def _generator(seed, name):
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed, name)


def simulate_genotypes(n_subjects, n_variants, maf_range=(0.05, 0.5), seed=0):
    """AF_p ~ U(maf_range), x_ip ~ Binomial(2, AF_p)"""
    rng = _generator(seed, 'genotypes')
    low, high = maf_range
    af = rng.uniform(low, high, n_variants)
    dosages = rng.binomial(2, af, size=(n_subjects, n_variants)).astype(np.float64)
    return GenotypeMatrix(
        dosages=dosages,
        subject_ids=[f'SIM{i + 1:06d}' for i in range(n_subjects)],
        variant_ids=[f'v{p + 1}' for p in range(n_variants)],
        allele_freqs=af,
    )


def _record_counts(config, rng):
    if config.record_count_probs is None:
        return np.full(config.n_subjects, config.visits, dtype=np.intp)
    choices = config.visits - np.arange(len(config.record_count_probs))
    return rng.choice(choices, size=config.n_subjects, p=config.record_count_probs).astype(np.intp)


def simulate_scenario(config, geno, seed=None):
    """Sabab variantlar, genetik va individual effektlar, vaqtlar va fenotiplar

    Returns:
        (LongitudinalDataset, SimulationTruth, sabab variantlar niqobi)
    """
    rng = _generator(config.seed if seed is None else seed, 'effects')
    theta = config.theta
    n = geno.n_subjects

    causal = np.sort(rng.choice(geno.n_variants, size=config.n_causal, replace=False))
    mask = np.zeros(geno.n_variants, dtype=bool)
    mask[causal] = True
    z = standardize_genotypes(geno.select_variants(mask))

    alpha = rng.normal(0.0, np.sqrt(theta.sigma2_g / config.n_causal), config.n_causal)
    eta = rng.normal(0.0, np.sqrt(theta.sigma2_gstar / config.n_causal), config.n_causal)
    g = z @ alpha
    gstar = z @ eta

    entry_age = rng.uniform(*ENTRY_AGE_RANGE, n)
    counts = _record_counts(config, rng)
    owner = np.repeat(np.arange(n), counts)
    visit = np.concatenate([np.arange(c) for c in counts])
    times = (entry_age[owner] + visit - AGE_ORIGIN) / AGE_SCALE

    b0 = rng.normal(0.0, np.sqrt(theta.sigma2_b0), n)
    b1 = rng.normal(0.0, np.sqrt(theta.sigma2_b1), n)
    e = rng.normal(0.0, np.sqrt(theta.sigma2_e), owner.size)

    beta0, beta1 = config.beta
    y = beta0 + beta1 * times + g[owner] + b0[owner] + (gstar[owner] + b1[owner]) * times + e

    data = LongitudinalDataset(geno.subject_ids, owner, times, y)
    truth = SimulationTruth(
        causal=causal, alpha=alpha, eta=eta, g=g, gstar=gstar, b0=b0, b1=b1, entry_age=entry_age,
    )
    logger.debug(f"Simulyatsiya: N={n}, yozuvlar={owner.size}, sabab variantlar={config.n_causal}")
    return data, truth, mask


def simulation_grm(config, geno, causal_mask, threads=1):
    """grm_mode bo'yicha: faqat sabab variantlar yoki barchasi"""
    source = geno.select_variants(causal_mask) if config.grm_mode == 'causal' else geno
    return compute_grm(standardize_genotypes(source), geno.subject_ids, threads=threads)


def simulate_dataset(config, seed=None, genotype_seed=None):
    """Bitta to'liq ma'lumotlar to'plami

    Returns:
        (GenotypeMatrix, LongitudinalDataset, SimulationTruth, sabab niqobi)
    """
    seed = config.seed if seed is None else seed
    if genotype_seed is None:
        genotype_seed = seed if config.fresh_genotypes else config.seed
    geno = simulate_genotypes(config.n_subjects, config.n_variants, config.maf_range, genotype_seed)
    data, truth, mask = simulate_scenario(config, geno, seed)
    return geno, data, truth, mask

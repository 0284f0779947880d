from celery import shared_task

from .experiment import replicate_estimates
from .models import ScenarioConfig


@shared_task
def run_replicate(config_data, index):
    """Bitta simulyatsiya takrori (natija JSON ga mos lug'at)"""
    return replicate_estimates(ScenarioConfig.from_dict(config_data), index)

from .base import *
from decouple import config

DEBUG = False

# Simulyatsiya takrorlari Redis orqali Celery workerlarga tarqatiladi
CELERY_TASK_ALWAYS_EAGER = config('CELERY_ALWAYS_EAGER', default=False, cast=bool)
CELERY_TASK_ACKS_LATE = True
CELERY_WORKER_PREFETCH_MULTIPLIER = 1

LOGGING['root']['level'] = config('LGH_LOG_LEVEL', default='WARNING')

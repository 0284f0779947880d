from .base import *
from decouple import config

DEBUG = True

# Broker kerak emas: vazifalar shu jarayonda bajariladi
CELERY_TASK_ALWAYS_EAGER = config('CELERY_ALWAYS_EAGER', default=True, cast=bool)
CELERY_TASK_EAGER_PROPAGATES = True

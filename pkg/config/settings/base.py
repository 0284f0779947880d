import os
from pathlib import Path
from decouple import config

BASE_DIR = Path(__file__).resolve().parent.parent.parent

SECRET_KEY = config('SECRET_KEY', default='fallback-secret-key')

LGH_VERSION = '0.3.0'

# Installed apps
DJANGO_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
]

THIRD_PARTY_APPS = [
    'rest_framework',
]

LOCAL_APPS = [
    'grm',
    'longitudinal',
    'aireml',
    'rehe',
    'metaanalysis',
    'simulation',
    'cli',
]

INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# Ma'lumotlar bazasi ishlatilmaydi
DATABASES = {}

TIME_ZONE = 'Asia/Tashkent'
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework (faqat serializerlar va JSON renderer)
REST_FRAMEWORK = {
    'STRICT_JSON': True,
    'COERCE_DECIMAL_TO_STRING': False,
}

# ============ NUMERICAL SETTINGS ============

LGH_THREADS = config('LGH_THREADS', default=os.cpu_count() or 1, cast=int)

# GRM
GRM_CHUNK_SIZE = config('LGH_GRM_CHUNK', default=1024, cast=int)
GRM_MAF_THRESHOLD = config('LGH_MAF', default=0.01, cast=float)
GRM_EIGEN_FLOOR = config('LGH_GRM_EIGEN_FLOOR', default=1e-8, cast=float)

# Kovariatsiya tuzilmasi
DENSE_RECORD_CAP = config('LGH_DENSE_RECORD_CAP', default=20000, cast=int)

# AI-REML
REML_RECORD_LIMIT = config('LGH_REML_RECORD_LIMIT', default=25000, cast=int)
REML_MAX_ITER = config('LGH_REML_MAX_ITER', default=200, cast=int)
REML_TOL = config('LGH_REML_TOL', default=1e-4, cast=float)
REML_FLOOR_SCALE = config('LGH_REML_FLOOR_SCALE', default=1e-6, cast=float)

# REHE
REHE_BOOTSTRAP_REPS = config('LGH_BOOTSTRAP_REPS', default=1000, cast=int)
REHE_ACCUMULATE_BLOCK = config('LGH_REHE_BLOCK', default=512, cast=int)

# Meta-tahlil
META_VARIANCE_BOUNDARY_FACTOR = 2.0
META_LAMBDA_BOUNDARY_TOL = config('LGH_LAMBDA_BOUNDARY_TOL', default=0.01, cast=float)

# Og'ir Monte Carlo testlari
LGH_RUN_ACCEPTANCE = config('LGH_RUN_ACCEPTANCE', default=False, cast=bool)

# Celery
CELERY_BROKER_URL = config('REDIS_URL', default='redis://localhost:6379')
CELERY_RESULT_BACKEND = config('REDIS_URL', default='redis://localhost:6379')
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_ACCEPT_CONTENT = ['json']

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {'format': '%(asctime)s %(levelname)s %(name)s: %(message)s'},
    },
    'handlers': {'console': {'class': 'logging.StreamHandler', 'formatter': 'simple'}},
    'root': {'handlers': ['console'], 'level': config('LGH_LOG_LEVEL', default='INFO')},
}

import logging
from concurrent.futures import ThreadPoolExecutor

from celery import group
from django.conf import settings

logger = logging.getLogger(__name__)


def resolve_threads(threads=None):
    """Ishchi oqimlar soni: parametr, aks holda LGH_THREADS"""
    if threads is None:
        threads = settings.LGH_THREADS
    return max(1, int(threads))


def ordered_map(func, items, threads=None):
    """func ni har bir elementga qo'llash, natijalar kirish tartibida"""
    items = list(items)
    threads = min(resolve_threads(threads), max(len(items), 1))
    if threads == 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def dispatch(task, arg_tuples, threads=None):
    """Celery vazifalarini tarqatish

    Broker sozlangan bo'lsa group orqali workerlarga yuboriladi,
    aks holda shu jarayonda oqimlar hovuzida bajariladi.
    """
    arg_tuples = [tuple(args) for args in arg_tuples]
    if not arg_tuples:
        return []

    if getattr(settings, 'CELERY_TASK_ALWAYS_EAGER', True):
        return ordered_map(lambda args: task(*args), arg_tuples, threads)

    logger.info(f"{len(arg_tuples)} ta vazifa Celery workerlarga yuborildi")
    job = group(task.s(*args) for args in arg_tuples)
    return job.apply_async().get(disable_sync_subtasks=False)
